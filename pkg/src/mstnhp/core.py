"""Domain types shared by every module: events, sequences, spatial domains, random streams."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Union

import numpy as np

TIE_EPS = 1e-9
MAX_REJECTION_ATTEMPTS = 10**6
_MASK64 = (1 << 64) - 1


class DomainError(ValueError):
    """Invalid or degenerate spatial domain."""


class SequenceError(ValueError):
    """An event sequence violates ordering, window or domain invariants."""


# ---------------------------------------------------------------------------
# Random streams


def splitmix64(x: int) -> int:
    """One round of the splitmix64 finalizer on a 64-bit integer."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def child_seed(seed: int, index: int) -> int:
    """Derive the seed of the ``index``-th child stream of ``seed``."""
    return splitmix64((splitmix64(seed & _MASK64) ^ (index & _MASK64)) & _MASK64)


class RandomStream:
    """Seeded, single-owner source of random draws.

    Backed by numpy's PCG64, whose output for a given seed is the same on all
    platforms. Children are derived with :func:`child_seed` so that per-sequence
    streams do not depend on how many draws the parent has made.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK64
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def spawn(self, index: int) -> "RandomStream":
        return RandomStream(child_seed(self.seed, index))

    def uniform(self, low=0.0, high=1.0, size=None):
        return self._gen.uniform(low, high, size)

    def exponential(self, scale=1.0, size=None):
        return self._gen.exponential(scale, size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self._gen.normal(loc, scale, size)

    def integers(self, low, high=None, size=None):
        return self._gen.integers(low, high, size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def choice_weighted(self, weights: np.ndarray) -> int:
        """Index drawn with probability proportional to nonnegative ``weights``."""
        cum = np.cumsum(weights)
        u = self._gen.uniform(0.0, cum[-1])
        return int(min(np.searchsorted(cum, u, side="right"), len(cum) - 1))


# ---------------------------------------------------------------------------
# Spatial domains


@dataclass(frozen=True)
class Rectangle:
    x0: float
    x1: float
    y0: float
    y1: float

    def __post_init__(self):
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise DomainError(f"degenerate rectangle {self}")

    @property
    def area(self) -> float:
        return (self.x1 - self.x0) * (self.y1 - self.y0)

    @property
    def bbox(self) -> tuple[float, float, float, float]:
        return (self.x0, self.x1, self.y0, self.y1)

    @property
    def centroid(self) -> np.ndarray:
        return np.array([(self.x0 + self.x1) / 2, (self.y0 + self.y1) / 2])

    def contains(self, s) -> np.ndarray | bool:
        s = np.asarray(s, dtype=float)
        x, y = s[..., 0], s[..., 1]
        inside = (x >= self.x0) & (x <= self.x1) & (y >= self.y0) & (y <= self.y1)
        return bool(inside) if inside.ndim == 0 else inside

    def sample_uniform(self, rng: RandomStream, size: Optional[int] = None) -> np.ndarray:
        n = 1 if size is None else size
        u = rng.uniform(size=(n, 2))
        pts = np.column_stack([self.x0 + (self.x1 - self.x0) * u[:, 0],
                               self.y0 + (self.y1 - self.y0) * u[:, 1]])
        return pts[0] if size is None else pts

    def to_dict(self) -> dict:
        return {"kind": "rectangle", "x": [self.x0, self.x1], "y": [self.y0, self.y1]}


def _segments_intersect(p1, p2, p3, p4) -> bool:
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1, d2 = orient(p3, p4, p1), orient(p3, p4, p2)
    d3, d4 = orient(p1, p2, p3), orient(p1, p2, p4)
    return (d1 * d2 < 0) and (d3 * d4 < 0)


@dataclass(frozen=True)
class Polygon:
    """Simple polygon; containment by the even-odd rule."""

    vertices: tuple[tuple[float, float], ...]

    def __post_init__(self):
        v = tuple(tuple(map(float, p)) for p in self.vertices)
        if len(v) > 1 and v[0] == v[-1]:
            v = v[:-1]
        object.__setattr__(self, "vertices", v)
        if len(v) < 3:
            raise DomainError("polygon needs at least 3 vertices")
        n = len(v)
        for i in range(n):
            for j in range(i + 1, n):
                if j == i + 1 or (i == 0 and j == n - 1):
                    continue
                if _segments_intersect(v[i], v[(i + 1) % n], v[j], v[(j + 1) % n]):
                    raise DomainError("polygon is self-intersecting")
        if self.area <= 0:
            raise DomainError("polygon has zero area")

    @property
    def _array(self) -> np.ndarray:
        return np.asarray(self.vertices, dtype=float)

    @property
    def area(self) -> float:
        v = self._array
        x, y = v[:, 0], v[:, 1]
        return abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))) / 2

    @property
    def bbox(self) -> tuple[float, float, float, float]:
        v = self._array
        return (v[:, 0].min(), v[:, 0].max(), v[:, 1].min(), v[:, 1].max())

    @property
    def centroid(self) -> np.ndarray:
        v = self._array
        x, y = v[:, 0], v[:, 1]
        xn, yn = np.roll(x, -1), np.roll(y, -1)
        cross = x * yn - xn * y
        a = cross.sum() / 2
        return np.array([((x + xn) * cross).sum() / (6 * a), ((y + yn) * cross).sum() / (6 * a)])

    def contains(self, s) -> np.ndarray | bool:
        s = np.asarray(s, dtype=float)
        pts = s.reshape(-1, 2)
        x, y = pts[:, 0:1], pts[:, 1:2]
        v = self._array
        xi, yi = v[:, 0], v[:, 1]
        xj, yj = np.roll(xi, 1), np.roll(yi, 1)
        crosses = (yi > y) != (yj > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            x_at = (xj - xi) * (y - yi) / (yj - yi) + xi
        inside = (np.count_nonzero(crosses & (x < x_at), axis=1) % 2) == 1
        return bool(inside[0]) if s.ndim == 1 else inside.reshape(s.shape[:-1])

    def sample_uniform(self, rng: RandomStream, size: Optional[int] = None) -> np.ndarray:
        n = 1 if size is None else size
        x0, x1, y0, y1 = self.bbox
        box = Rectangle(x0, x1, y0, y1)
        out = np.empty((n, 2))
        filled = attempts = 0
        while filled < n:
            batch = max(16, 2 * (n - filled))
            cand = box.sample_uniform(rng, batch)
            attempts += batch
            ok = cand[self.contains(cand)]
            take = min(len(ok), n - filled)
            out[filled:filled + take] = ok[:take]
            filled += take
            if filled < n and attempts > MAX_REJECTION_ATTEMPTS * n:
                raise DomainError("rejection sampling exceeded attempt budget; degenerate polygon?")
        return out[0] if size is None else out

    def to_dict(self) -> dict:
        return {"kind": "polygon", "vertices": [list(p) for p in self.vertices]}


SpatialDomain = Union[Rectangle, Polygon]

UNIT_SQUARE = Rectangle(0.0, 1.0, 0.0, 1.0)


def domain_from_dict(d: Optional[dict]) -> Optional[SpatialDomain]:
    if d is None:
        return None
    kind = d.get("kind")
    if kind == "rectangle":
        return Rectangle(float(d["x"][0]), float(d["x"][1]), float(d["y"][0]), float(d["y"][1]))
    if kind == "polygon":
        return Polygon(tuple(tuple(p) for p in d["vertices"]))
    raise DomainError(f"unknown domain kind {kind!r}")


def domain_contains(domain: SpatialDomain, s) -> bool:
    return domain.contains(s)


def domain_sample_uniform(domain: SpatialDomain, rng: RandomStream) -> np.ndarray:
    return domain.sample_uniform(rng)


# ---------------------------------------------------------------------------
# Events and sequences


@dataclass(frozen=True)
class STEvent:
    k: int
    t: float
    s: Optional[tuple[float, float]] = None


@dataclass(frozen=True, eq=False)
class EventSequence:
    """Events on ``[0, T]``, stored column-wise.

    ``types`` are 1-based. ``locations`` is ``None`` for purely temporal
    sequences, in which case ``domain`` is ``None`` too.
    """

    types: np.ndarray
    times: np.ndarray
    T: float
    locations: Optional[np.ndarray] = None
    domain: Optional[SpatialDomain] = None
    K: Optional[int] = field(default=None)

    def __post_init__(self):
        types = np.asarray(self.types, dtype=np.int64).reshape(-1)
        times = np.asarray(self.times, dtype=np.float64).reshape(-1)
        object.__setattr__(self, "types", types)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "T", float(self.T))
        if len(types) != len(times):
            raise SequenceError("types and times differ in length")
        if self.locations is not None:
            locs = np.asarray(self.locations, dtype=np.float64).reshape(-1, 2)
            if len(locs) != len(times):
                raise SequenceError("locations and times differ in length")
            object.__setattr__(self, "locations", locs)
            if self.domain is None:
                raise SequenceError("spatial sequence requires a domain")
        elif self.domain is not None and len(times):
            raise SequenceError("sequence has a domain but no locations")
        for a in (types, times) + ((self.locations,) if self.locations is not None else ()):
            a.setflags(write=False)
        self.validate()

    def validate(self) -> None:
        t = self.times
        if self.T < 0 or not np.isfinite(self.T):
            raise SequenceError(f"invalid window end T={self.T}")
        if len(t):
            if not np.all(np.isfinite(t)):
                raise SequenceError("non-finite event time")
            if t[0] < 0 or t[-1] > self.T:
                raise SequenceError("event time outside [0, T]")
            bad = np.nonzero(np.diff(t) <= 0)[0]
            if len(bad):
                raise SequenceError(f"times not strictly increasing at index {bad[0] + 1}")
            if self.types.min() < 1:
                raise SequenceError("event types must be >= 1")
            if self.K is not None and self.types.max() > self.K:
                raise SequenceError(f"event type exceeds K={self.K}")
        if self.locations is not None and len(t):
            inside = np.asarray(self.domain.contains(self.locations))
            if not inside.all():
                raise SequenceError(f"location outside domain at index {int(np.argmin(inside))}")

    @classmethod
    def from_events(cls, events: Iterable[STEvent], T: float, domain: Optional[SpatialDomain] = None,
                    K: Optional[int] = None) -> "EventSequence":
        events = list(events)
        types = [e.k for e in events]
        times = [e.t for e in events]
        spatial = any(e.s is not None for e in events) or (domain is not None)
        locs = [e.s for e in events] if spatial else None
        if spatial and any(s is None for s in locs):
            raise SequenceError("mixed spatial and temporal events")
        return cls(np.array(types, dtype=np.int64), np.array(times, dtype=float), T,
                   None if locs is None else np.array(locs, dtype=float).reshape(-1, 2), domain, K)

    @classmethod
    def from_unsorted(cls, types, times, T, locations=None, domain=None, K=None,
                      tie_eps: float = TIE_EPS) -> "EventSequence":
        """Sort by time (stable) and break exact ties by adding ``j * tie_eps``."""
        types = np.asarray(types, dtype=np.int64)
        times = np.asarray(times, dtype=float)
        order = np.argsort(times, kind="stable")
        types, raw = types[order], times[order]
        times = raw.copy()
        if locations is not None:
            locations = np.asarray(locations, dtype=float).reshape(-1, 2)[order]
        j = 0
        for i in range(1, len(times)):
            j = j + 1 if raw[i] == raw[i - 1] else 0
            times[i] = raw[i] + j * tie_eps
            if times[i] <= times[i - 1]:
                times[i] = np.nextafter(times[i - 1], np.inf)
        return cls(types, times, T, locations, domain, K)

    def __len__(self) -> int:
        return len(self.times)

    @property
    def is_spatial(self) -> bool:
        return self.locations is not None

    @property
    def area(self) -> float:
        return self.domain.area if self.domain is not None else 1.0

    def events(self) -> list[STEvent]:
        if self.locations is None:
            return [STEvent(int(k), float(t)) for k, t in zip(self.types, self.times)]
        return [STEvent(int(k), float(t), (float(s[0]), float(s[1])))
                for k, t, s in zip(self.types, self.times, self.locations)]

    def prefix_before(self, t: float) -> "EventSequence":
        """Events strictly before ``t`` (the history H_t)."""
        n = int(np.searchsorted(self.times, t, side="left"))
        locs = None if self.locations is None else self.locations[:n]
        return EventSequence(self.types[:n], self.times[:n], self.T, locs, self.domain, self.K)

    def structurally_equal(self, other: "EventSequence") -> bool:
        same_locs = (self.locations is None and other.locations is None) or (
            self.locations is not None and other.locations is not None
            and np.array_equal(self.locations, other.locations))
        return (self.T == other.T and np.array_equal(self.types, other.types)
                and np.array_equal(self.times, other.times) and same_locs
                and self.domain == other.domain)


def check_type(k: int, K: int) -> int:
    if not 1 <= int(k) <= K:
        raise ValueError(f"event type {k} outside 1..{K}")
    return int(k)


def midpoint_grid(domain: SpatialDomain, nx: int = 64, ny: int = 64):
    """Cell centres and quadrature weights of an ``nx`` x ``ny`` midpoint rule.

    Polygons use their bounding box with weights zeroed outside the polygon.
    Returns ``(xs, ys, points, weights)`` with ``points`` in row-major (y, x)
    order, i.e. ``points.reshape(ny, nx, 2)`` recovers the grid.
    """
    if nx < 2 or ny < 2:
        raise ValueError("grid needs nx, ny >= 2")
    x0, x1, y0, y1 = domain.bbox
    xs = x0 + (np.arange(nx) + 0.5) * (x1 - x0) / nx
    ys = y0 + (np.arange(ny) + 0.5) * (y1 - y0) / ny
    X, Y = np.meshgrid(xs, ys)
    points = np.column_stack([X.ravel(), Y.ravel()])
    weights = np.full(len(points), (x1 - x0) * (y1 - y0) / (nx * ny))
    if isinstance(domain, Polygon):
        weights = weights * np.asarray(domain.contains(points), dtype=float)
    return xs, ys, points, weights
