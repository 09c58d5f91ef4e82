"""Parametric multivariate Hawkes intensities used as simulation ground truth and as oracles.

Every kernel family here factors as ``phi_{k,l}(ds, dt) = T_{k,l}(dt) * S_{k,l}(ds)``
where ``T`` carries the amplitude. Specs expose the vectorised pieces the
simulator and the evaluators need:

* ``time_weights(l, dt)``     -> (K, n) temporal factor incl. amplitude
* ``time_envelope(l, dt)``    -> (K, n) ``sup_{u >= dt} max(T(u), 0)``
* ``time_integral(l, a, b)``  -> (K, n) ``int_a^b T(u) du`` (lags, clipped at 0)
* ``space_factor(l, d2)``     -> (K, n, P) or broadcastable, from squared distances
* ``space_max(l)``            -> (K, n) peak of the spatial factor
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .core import EventSequence, SpatialDomain, check_type, midpoint_grid

TWO_PI = 2.0 * np.pi


def temporal_factor(beta_kl: float, dt: float) -> float:
    """``beta * exp(-beta * dt)`` for ``dt > 0``, else 0."""
    if dt <= 0:
        return 0.0
    return float(beta_kl * np.exp(-beta_kl * dt))


def spatial_factor(sigma2_kl: float, ds) -> float:
    """Isotropic bivariate Gaussian density with variance ``sigma2`` per axis."""
    r2 = float(np.sum(np.square(ds)))
    return float(np.exp(-r2 / (2.0 * sigma2_kl)) / (TWO_PI * sigma2_kl))


def _as_matrix(a, K, name):
    a = np.asarray(a, dtype=float)
    if a.shape != (K, K):
        raise ValueError(f"{name} must be {K}x{K}, got {a.shape}")
    return a


@dataclass(frozen=True, eq=False)
class SeparableKernelParams:
    """Gaussian-in-space, exponential-in-time kernels: ``alpha * h(ds) * g(dt)``."""

    mu: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    sigma2: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float).reshape(-1)
        K = len(mu)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "alpha", _as_matrix(self.alpha, K, "alpha"))
        object.__setattr__(self, "beta", _as_matrix(self.beta, K, "beta"))
        object.__setattr__(self, "sigma2", _as_matrix(self.sigma2, K, "sigma2"))
        if K < 1 or np.any(mu < 0):
            raise ValueError("mu must be a nonnegative K-vector, K >= 1")
        if np.any(self.beta <= 0) or np.any(self.sigma2 <= 0):
            raise ValueError("beta and sigma2 must be strictly positive")

    family = "separable"
    spatial = True

    @property
    def K(self) -> int:
        return len(self.mu)

    def with_sigma2(self, sigma2) -> "SeparableKernelParams":
        s = np.broadcast_to(np.asarray(sigma2, dtype=float), (self.K, self.K))
        return SeparableKernelParams(self.mu, self.alpha, self.beta, s.copy())

    def time_weights(self, l, dt):
        B = self.beta[:, l]
        dt = np.asarray(dt, dtype=float)
        pos = dt > 0
        out = self.alpha[:, l] * B * np.exp(-B * np.where(pos, dt, 0.0))
        return np.where(pos, out, 0.0)

    def time_envelope(self, l, dt):
        dt = np.maximum(np.asarray(dt, dtype=float), 0.0)
        B = self.beta[:, l]
        return np.maximum(self.alpha[:, l], 0.0) * B * np.exp(-B * dt)

    def time_integral(self, l, a, b):
        a = np.maximum(np.asarray(a, dtype=float), 0.0)
        b = np.maximum(np.asarray(b, dtype=float), a)
        B = self.beta[:, l]
        return self.alpha[:, l] * (np.exp(-B * a) - np.exp(-B * b))

    def space_factor(self, l, d2):
        S2 = self.sigma2[:, l][..., None]
        return np.exp(-np.asarray(d2)[None] / (2.0 * S2)) / (TWO_PI * S2)

    def space_max(self, l):
        return 1.0 / (TWO_PI * self.sigma2[:, l])

    def to_dict(self) -> dict:
        return {"family": self.family, "K": self.K, "mu": self.mu.tolist(),
                "alpha": self.alpha.ravel().tolist(), "beta": self.beta.ravel().tolist(),
                "sigma2": self.sigma2.ravel().tolist()}


@dataclass(frozen=True, eq=False)
class Biv4Kernel:
    """The hard-coded two-type kernel with power-law, mixture and sine temporal parts.

    All four spatial factors are ``exp(-2 ||ds||)`` (not normalised). The
    (2,2) temporal factor ``max(0, sin(dt) / 8)`` is active on ``dt`` in [0, 4] only.
    """

    mu: np.ndarray = None

    def __post_init__(self):
        mu = np.array([0.1, 0.1]) if self.mu is None else np.asarray(self.mu, dtype=float)
        if mu.shape != (2,) or np.any(mu < 0):
            raise ValueError("Biv4 needs a nonnegative 2-vector baseline")
        object.__setattr__(self, "mu", mu)

    family = "biv4"
    spatial = True
    K = 2
    SINE_SUPPORT = 4.0

    @staticmethod
    def _g(k: int, l: int, u):
        """Temporal factor for receiving type ``k`` and source ``l`` (0-based), u > 0."""
        if (k, l) == (0, 0):
            return 0.15 * (0.5 + u) ** -1.3
        if (k, l) == (0, 1):
            return 0.03 * np.exp(-0.3 * u)
        if (k, l) == (1, 0):
            return 0.05 * np.exp(-0.2 * u) + 0.16 * np.exp(-0.8 * u)
        return np.where(u <= Biv4Kernel.SINE_SUPPORT, np.maximum(0.0, np.sin(u) / 8.0), 0.0)

    @staticmethod
    def _G(k: int, l: int, u):
        """Antiderivative of ``_g`` on u >= 0 with ``_G(0) = 0``."""
        if (k, l) == (0, 0):
            return 0.15 / 0.3 * (0.5 ** -0.3 - (0.5 + u) ** -0.3)
        if (k, l) == (0, 1):
            return 0.03 / 0.3 * (1.0 - np.exp(-0.3 * u))
        if (k, l) == (1, 0):
            return 0.05 / 0.2 * (1.0 - np.exp(-0.2 * u)) + 0.16 / 0.8 * (1.0 - np.exp(-0.8 * u))
        v = np.minimum(u, np.pi)  # sin < 0 on (pi, 4]: the max(0, .) kills it
        return (1.0 - np.cos(v)) / 8.0

    @staticmethod
    def _envelope(k: int, l: int, u):
        if (k, l) != (1, 1):
            return Biv4Kernel._g(k, l, u)
        return np.where(u <= np.pi / 2, 1.0 / 8.0, np.where(u <= np.pi, np.sin(u) / 8.0, 0.0))

    def _per_pair(self, fn, l, u):
        shape = np.shape(l)
        l = np.asarray(l).reshape(-1)
        u = np.broadcast_to(np.asarray(u, dtype=float), shape).reshape(-1)
        out = np.zeros((2, len(l)))
        for k in range(2):
            for src in range(2):
                m = l == src
                if np.any(m):
                    out[k, m] = fn(k, src, u[m])
        return out.reshape((2,) + shape)

    def time_weights(self, l, dt):
        dt = np.asarray(dt, dtype=float)
        pos = dt > 0
        w = self._per_pair(self._g, l, np.where(pos, dt, 1.0))
        return np.where(pos, w, 0.0)

    def time_envelope(self, l, dt):
        return self._per_pair(self._envelope, l, np.maximum(np.asarray(dt, dtype=float), 0.0))

    def time_integral(self, l, a, b):
        a = np.maximum(np.asarray(a, dtype=float), 0.0)
        b = np.maximum(np.asarray(b, dtype=float), a)
        return self._per_pair(self._G, l, b) - self._per_pair(self._G, l, a)

    def space_factor(self, l, d2):
        return np.exp(-2.0 * np.sqrt(np.asarray(d2)))[None]

    def space_max(self, l):
        return np.ones((2, len(np.atleast_1d(l))))

    def to_dict(self) -> dict:
        return {"family": self.family, "K": 2, "mu": self.mu.tolist()}


@dataclass(frozen=True, eq=False)
class TemporalHawkesSpec:
    """Temporal exponential Hawkes: ``alpha_{kl} exp(-beta_k dt)`` (row-shared decay)."""

    mu: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float).reshape(-1)
        K = len(mu)
        beta = np.asarray(self.beta, dtype=float).reshape(-1)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "alpha", _as_matrix(self.alpha, K, "alpha"))
        object.__setattr__(self, "beta", beta)
        if beta.shape != (K,) or np.any(beta <= 0) or np.any(mu <= 0):
            raise ValueError("beta must be a positive K-vector and mu > 0")

    family = "temporal"
    spatial = False

    @property
    def K(self) -> int:
        return len(self.mu)

    def time_weights(self, l, dt):
        dt = np.asarray(dt, dtype=float)
        pos = dt > 0
        B = self.beta[:, None] if np.ndim(dt) else self.beta
        out = self.alpha[:, l] * np.exp(-B * np.where(pos, dt, 0.0))
        return np.where(pos, out, 0.0)

    def time_envelope(self, l, dt):
        dt = np.maximum(np.asarray(dt, dtype=float), 0.0)
        B = self.beta[:, None] if np.ndim(dt) else self.beta
        return np.maximum(self.alpha[:, l], 0.0) * np.exp(-B * dt)

    def time_integral(self, l, a, b):
        a = np.maximum(np.asarray(a, dtype=float), 0.0)
        b = np.maximum(np.asarray(b, dtype=float), a)
        B = self.beta[:, None] if np.ndim(a) else self.beta
        return self.alpha[:, l] / B * (np.exp(-B * a) - np.exp(-B * b))

    def to_dict(self) -> dict:
        return {"family": self.family, "K": self.K, "mu": self.mu.tolist(),
                "alpha": self.alpha.ravel().tolist(), "beta": self.beta.tolist()}


HawkesSpec = Union[SeparableKernelParams, Biv4Kernel, TemporalHawkesSpec]


# ---------------------------------------------------------------------------
# Presets

def _sep(alpha, beta, sigma2, mu=(0.1, 0.1)):
    return SeparableKernelParams(np.array(mu), np.array(alpha).reshape(2, 2),
                                 np.array(beta).reshape(2, 2), np.array(sigma2).reshape(2, 2))


BIV1 = _sep([0.25, 0.1, 0.1, 0.25], [0.3] * 4, [0.5] * 4)
BIV2 = _sep([0.25, -0.1, -0.1, 0.25], [0.3] * 4, [0.5] * 4)
BIV3 = _sep([0.25, 0.1, 0.1, 0.25], [0.1] * 4, [0.5, 0.25, 0.25, 0.5])
BIV4 = Biv4Kernel()
COMPARE = TemporalHawkesSpec(np.array([0.3, 0.3]), np.array([[0.15, 0.02], [0.01, 0.15]]),
                             np.array([1.3, 0.4]))

PRESETS: dict[str, HawkesSpec] = {"biv1": BIV1, "biv2": BIV2, "biv3": BIV3, "biv4": BIV4,
                                  "compare": COMPARE}


def spec_from_dict(d: dict) -> HawkesSpec:
    fam = d["family"]
    if fam == "biv4":
        return Biv4Kernel(np.asarray(d["mu"], dtype=float) if "mu" in d else None)
    K = int(d["K"])
    if fam == "separable":
        return SeparableKernelParams(np.asarray(d["mu"], float),
                                     np.asarray(d["alpha"], float).reshape(K, K),
                                     np.asarray(d["beta"], float).reshape(K, K),
                                     np.asarray(d["sigma2"], float).reshape(K, K))
    if fam == "temporal":
        return TemporalHawkesSpec(np.asarray(d["mu"], float),
                                  np.asarray(d["alpha"], float).reshape(K, K),
                                  np.asarray(d["beta"], float))
    raise ValueError(f"unknown kernel family {fam!r}")


# ---------------------------------------------------------------------------
# Intensities


def raw_intensity_field(spec: HawkesSpec, types, times, locs, t: float, points=None) -> np.ndarray:
    """Unclamped intensities of every type at ``points`` (P, 2) and time ``t``.

    ``types`` are 1-based history marks; only events with ``times < t`` contribute.
    Returns (K, P), or (K,) for temporal specs / ``points=None``.
    """
    types = np.asarray(types, dtype=np.int64)
    times = np.asarray(times, dtype=float)
    m = times < t
    l = types[m] - 1
    w = spec.time_weights(l, t - times[m])  # (K, n)
    if not spec.spatial:
        return spec.mu + w.sum(axis=1)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if len(l) == 0:
        return np.repeat(spec.mu[:, None], len(pts), axis=1)
    diff = pts[None, :, :] - np.asarray(locs, dtype=float)[m][:, None, :]
    d2 = np.einsum("npj,npj->np", diff, diff)
    sf = spec.space_factor(l, d2)  # (K or 1, n, P)
    return spec.mu[:, None] + np.einsum("kn,knp->kp", w, np.broadcast_to(sf, (spec.K,) + d2.shape))


def st_intensity(spec: HawkesSpec, history: EventSequence, k: int, s, t: float) -> float:
    """Clamped spatio-temporal intensity of type ``k`` at ``(s, t)`` given ``history``."""
    check_type(k, spec.K)
    if len(history) and np.any(history.times >= t):
        raise ValueError("evaluation time must follow every history event")
    raw = raw_intensity_field(spec, history.types, history.times, history.locations, t,
                              np.asarray(s, dtype=float)[None])
    return float(max(0.0, raw[k - 1, 0]))


def temporal_intensity(spec: TemporalHawkesSpec, history: EventSequence, k: int, t: float) -> float:
    check_type(k, spec.K)
    if len(history) and np.any(history.times >= t):
        raise ValueError("evaluation time must follow every history event")
    raw = raw_intensity_field(spec, history.types, history.times, None, t)
    return float(max(0.0, raw[k - 1]))


def compensator_temporal(spec: TemporalHawkesSpec, history: EventSequence, k: int,
                         t0: float, t1: float) -> float:
    """Closed-form ``int_{t0}^{t1} lambda_k(u) du`` for every history event before ``t1``.

    Exact when the raw intensity stays nonnegative (always for ``alpha >= 0``).
    """
    check_type(k, spec.K)
    if not t1 > t0:
        raise ValueError("need t0 < t1")
    m = history.times < t1
    l = history.types[m] - 1
    ti = history.times[m]
    base = spec.mu[k - 1] * (t1 - t0)
    if not len(l):
        return float(base)
    return float(base + spec.time_integral(l, t0 - ti, t1 - ti)[k - 1].sum())


def spatial_mass(spec: HawkesSpec, types, locs, domain: SpatialDomain, nx: int = 64, ny: int = 64):
    """(K, n) integral over ``domain`` of each source event's spatial factor, midpoint rule."""
    _, _, pts, wts = midpoint_grid(domain, nx, ny)
    l = np.asarray(types, dtype=np.int64) - 1
    if len(l) == 0:
        return np.zeros((spec.K, 0))
    diff = pts[None, :, :] - np.asarray(locs, dtype=float)[:, None, :]
    d2 = np.einsum("npj,npj->np", diff, diff)
    sf = np.broadcast_to(spec.space_factor(l, d2), (spec.K,) + d2.shape)
    return sf @ wts


def compensator_st(spec: HawkesSpec, seq: EventSequence, k: int, t0: float, t1: float,
                   mass=None, nx: int = 64, ny: int = 64) -> float:
    """``int_{t0}^{t1} int_S lambda_k(s, u) ds du`` ignoring the zero clamp.

    Time integrals are closed form; the spatial factor is integrated by the
    midpoint rule unless a precomputed ``mass`` (K, n) for ``seq`` is supplied.
    """
    check_type(k, spec.K)
    if mass is None:
        mass = spatial_mass(spec, seq.types, seq.locations, seq.domain, nx, ny)
    m = seq.times < t1
    l = seq.types[m] - 1
    ti = seq.times[m]
    base = spec.mu[k - 1] * seq.area * (t1 - t0)
    if not len(l):
        return float(base)
    return float(base + (spec.time_integral(l, t0 - ti, t1 - ti)[k - 1] * mass[k - 1, m]).sum())
