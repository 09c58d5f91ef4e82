"""Intensity diagnostics: spatially integrated curves, spatial maps, cumulative maps, recovery metrics.

Every function accepts either a fitted :class:`~mstnhp.ctlstm.NeuralHawkes` or a
parametric kernel spec and evaluates it conditional on the realised history of
``seq``, so fitted and true quantities share conditioning events and grids.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .core import EventSequence, SpatialDomain, midpoint_grid
from .ctlstm import NeuralHawkes, intensity_at
from .kernels import HawkesSpec, raw_intensity_field

FORMAT_VERSION = 1
Evaluable = Union[NeuralHawkes, HawkesSpec]


@dataclass(frozen=True)
class GridSpec:
    nx: int = 64
    ny: int = 64
    n_times: int = 512
    times: Optional[tuple] = None

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2:
            raise ValueError("grid needs nx, ny >= 2")

    def time_grid(self, T: float) -> np.ndarray:
        if self.times is not None:
            return np.asarray(self.times, dtype=float)
        return np.linspace(0.0, T, self.n_times)


def _is_spatial(obj: Evaluable) -> bool:
    return obj.config.spatial if isinstance(obj, NeuralHawkes) else obj.spatial


def _K(obj: Evaluable) -> int:
    return obj.config.K if isinstance(obj, NeuralHawkes) else obj.K


def intensity_field(obj: Evaluable, seq: EventSequence, times, points=None,
                    chunk: int = 1 << 17) -> np.ndarray:
    """Intensities of all types at every (time, point) pair: (n_times, K, P), or (n_times, K)."""
    times = np.asarray(times, dtype=float)
    spatial = _is_spatial(obj)
    if isinstance(obj, NeuralHawkes):
        states = obj.run(seq)
        if not spatial:
            return intensity_at(obj, states, times)
        P = len(points)
        out = np.empty((len(times), obj.config.K, P))
        per = max(1, chunk // P)
        for lo in range(0, len(times), per):
            tt = times[lo:lo + per]
            tq = np.repeat(tt, P)
            sq = np.tile(points, (len(tt), 1))
            lam = intensity_at(obj, states, tq, sq)
            out[lo:lo + len(tt)] = lam.reshape(len(tt), P, -1).transpose(0, 2, 1)
        return out
    if not spatial:
        return np.stack([np.maximum(raw_intensity_field(obj, seq.types, seq.times, None, t), 0.0)
                         for t in times])
    return np.stack([np.maximum(raw_intensity_field(obj, seq.types, seq.times, seq.locations,
                                                    t, points), 0.0) for t in times])


def temporal_curve(obj: Evaluable, seq: EventSequence, times=None, nx: int = 64, ny: int = 64,
                   domain: Optional[SpatialDomain] = None) -> np.ndarray:
    """(n_times, K) curves ``int_S lambda_k(s, t) ds`` by the midpoint rule (temporal models: ``lambda_k(t)``).

    ``domain`` defaults to the sequence's domain; pass one explicitly to
    integrate a spatial truth for a collapsed (temporal) sequence.
    """
    if times is None:
        times = GridSpec().time_grid(seq.T)
    if not _is_spatial(obj):
        return intensity_field(obj, seq, times)
    domain = domain or seq.domain
    if domain is None:
        raise ValueError("spatial model needs a domain to integrate over")
    _, _, pts, wts = midpoint_grid(domain, nx, ny)
    field = intensity_field(obj, seq, times, pts)
    return field @ wts


def spatial_map(obj: Evaluable, seq: EventSequence, t: float, nx: int = 64,
                ny: int = 64) -> np.ndarray:
    """(K, ny, nx) intensities at cell centres at time ``t``; rows run along y."""
    if not 0.0 <= t <= seq.T:
        raise ValueError(f"t={t} outside [0, {seq.T}]")
    _, _, pts, _ = midpoint_grid(seq.domain, nx, ny)
    return intensity_field(obj, seq, [t], pts)[0].reshape(_K(obj), ny, nx)


def cumulative_mean_map(obj: Evaluable, seq: EventSequence, tau: float, nx: int = 64,
                        ny: int = 64, n_times: int = 256, times=None) -> np.ndarray:
    """Time average of the spatial map over ``[0, tau]``.

    Uses ``n_times`` uniform points on ``[0, tau]``, or the points of an
    explicit ``times`` grid that are ``<= tau``.
    """
    if tau > seq.T:
        raise ValueError(f"horizon {tau} beyond T={seq.T}")
    if times is None:
        grid = np.linspace(0.0, tau, n_times)
    else:
        grid = np.asarray(times, dtype=float)
        grid = grid[grid <= tau]
        if not len(grid):
            raise ValueError("no grid times at or before the horizon")
    _, _, pts, _ = midpoint_grid(seq.domain, nx, ny)
    field = intensity_field(obj, seq, grid, pts)
    return field.mean(axis=0).reshape(_K(obj), ny, nx)


def recovery_metrics(fitted, true):
    """(RMSE, Pearson correlation); correlation is ``None`` when either input is constant."""
    a = np.asarray(fitted, dtype=float)
    b = np.asarray(true, dtype=float)
    if a.shape != b.shape:
        raise ValueError("curves must have equal length")
    rmse = float(np.sqrt(np.mean((a - b) ** 2)))
    da, db = a - a.mean(), b - b.mean()
    denom = np.sqrt(np.sum(da * da) * np.sum(db * db))
    if denom == 0.0:
        return rmse, None
    return rmse, float(np.clip(np.sum(da * db) / denom, -1.0, 1.0))


# ---------------------------------------------------------------------------
# CSV output


def write_curve_csv(path, times, curves) -> None:
    curves = np.asarray(curves)
    K = curves.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"lambda_{k + 1}" for k in range(K)])
        for t, row in zip(times, curves):
            w.writerow([repr(float(t))] + [repr(float(x)) for x in row])


def read_curve_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    data = np.array([[float(x) for x in r] for r in rows[1:]])
    return data[:, 0], data[:, 1:]


def write_map_csv(path, values, domain: SpatialDomain) -> None:
    values = np.asarray(values)
    ny, nx = values.shape
    x0, x1, y0, y1 = domain.bbox
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["format_version", FORMAT_VERSION])
        w.writerow(["nx", nx])
        w.writerow(["ny", ny])
        w.writerow(["x_range", repr(float(x0)), repr(float(x1))])
        w.writerow(["y_range", repr(float(y0)), repr(float(y1))])
        for row in values:
            w.writerow([repr(float(x)) for x in row])


def read_map_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    hdr = {r[0]: r[1:] for r in rows[:5]}
    nx, ny = int(hdr["nx"][0]), int(hdr["ny"][0])
    values = np.array([[float(x) for x in r] for r in rows[5:]])
    if values.shape != (ny, nx):
        raise ValueError("map body does not match its header")
    return values, tuple(map(float, hdr["x_range"])), tuple(map(float, hdr["y_range"]))
