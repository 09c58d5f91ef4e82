"""Ogata thinning for temporal and spatio-temporal Hawkes processes, plus the temporal collapse."""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from .core import UNIT_SQUARE, EventSequence, RandomStream, SpatialDomain
from .kernels import HawkesSpec, raw_intensity_field

MAX_CANDIDATES = 10**8


class SimulationError(RuntimeError):
    pass


def _history_arrays(history: Optional[EventSequence], spatial: bool):
    if history is None or len(history) == 0:
        return [], [], []
    locs = history.locations.tolist() if spatial else []
    return history.types.tolist(), history.times.tolist(), locs


def _dominating_rate(spec: HawkesSpec, types, times, u: float) -> float:
    """Upper bound on the summed (per-area) intensity over the domain for all t >= u."""
    total = float(spec.mu.sum())
    if types:
        l = np.asarray(types) - 1
        env = spec.time_envelope(l, u - np.asarray(times))
        if spec.spatial:
            env = env * spec.space_max(l)
        total += float(env.sum())
    return total


def simulate_st(spec: HawkesSpec, domain: SpatialDomain, T: float, rng: RandomStream,
                history: Optional[EventSequence] = None, start: float = 0.0) -> EventSequence:
    """One realisation on ``domain`` x ``[start, T]`` by thinning uniform space-time candidates.

    ``history`` events condition the intensity but are not part of the output.
    """
    if not spec.spatial:
        raise ValueError("simulate_st needs a spatial kernel spec")
    if T < 0:
        raise ValueError("T must be nonnegative")
    area = domain.area
    types, times, locs = _history_arrays(history, True)
    n_hist = len(types)
    u = start
    candidates = 0
    while True:
        per_area = _dominating_rate(spec, types, times, u)
        bound = per_area * area
        if not np.isfinite(bound):
            raise SimulationError(f"dominating rate is not finite at t={u}")
        if bound <= 0:
            break
        u += rng.exponential(1.0 / bound)
        if u > T:
            break
        candidates += 1
        if candidates > MAX_CANDIDATES:
            raise SimulationError("candidate budget exhausted; supercritical spec?")
        s = domain.sample_uniform(rng)
        lam = np.maximum(raw_intensity_field(spec, types, times, locs, u, s[None])[:, 0], 0.0)
        ratio = lam.sum() / per_area
        if ratio > 1.0 + 1e-12:
            raise SimulationError(f"intensity exceeds dominating bound at t={u}")
        if rng.uniform() < ratio:
            types.append(rng.choice_weighted(lam) + 1)
            times.append(u)
            locs.append(s.tolist())
    out_locs = np.array(locs[n_hist:], dtype=float).reshape(-1, 2)
    return EventSequence(np.array(types[n_hist:], dtype=np.int64), np.array(times[n_hist:]), T,
                         out_locs, domain, spec.K)


def simulate_temporal(spec: HawkesSpec, T: float, rng: RandomStream,
                      history: Optional[EventSequence] = None, start: float = 0.0) -> EventSequence:
    """Temporal Ogata thinning; the bound is the current total intensity envelope."""
    if spec.spatial:
        raise ValueError("simulate_temporal needs a temporal kernel spec")
    types, times, _ = _history_arrays(history, False)
    n_hist = len(types)
    u = start
    candidates = 0
    while True:
        bound = _dominating_rate(spec, types, times, u)
        if not np.isfinite(bound):
            raise SimulationError(f"dominating rate is not finite at t={u}")
        if bound <= 0:
            break
        u += rng.exponential(1.0 / bound)
        if u > T:
            break
        candidates += 1
        if candidates > MAX_CANDIDATES:
            raise SimulationError("candidate budget exhausted; supercritical spec?")
        lam = np.maximum(raw_intensity_field(spec, types, times, None, u), 0.0)
        if rng.uniform() * bound < lam.sum():
            types.append(rng.choice_weighted(lam) + 1)
            times.append(u)
    return EventSequence(np.array(types[n_hist:], dtype=np.int64), np.array(times[n_hist:]),
                         max(T, 0.0), K=spec.K)


def simulate(spec: HawkesSpec, T: float, rng: RandomStream,
             domain: Optional[SpatialDomain] = UNIT_SQUARE) -> EventSequence:
    if spec.spatial:
        return simulate_st(spec, domain, T, rng)
    return simulate_temporal(spec, T, rng)


def collapse_to_temporal(seq: EventSequence, tol: float = 0.0) -> EventSequence:
    """Drop locations; events within ``tol`` of the last kept event are merged into it.

    With ``tol=0`` only exact duplicates merge. Pass e.g. ``tol=1.0`` on
    day-jittered data to treat same-day events as duplicates.
    """
    keep = []
    last = -np.inf
    for i, t in enumerate(seq.times):
        if not keep or t - last > tol:
            keep.append(i)
            last = t
    keep = np.array(keep, dtype=np.int64)
    return EventSequence(seq.types[keep], seq.times[keep], seq.T, K=seq.K)


def make_dataset(spec: HawkesSpec, n_seqs: int, split: Sequence[int], rng: RandomStream,
                 T: float = 100.0, domain: Optional[SpatialDomain] = UNIT_SQUARE):
    """``n_seqs`` independent realisations partitioned in generation order.

    Sequence ``i`` uses the child stream ``rng.spawn(i)``, so any subset can be
    regenerated independently.
    """
    split = tuple(int(x) for x in split)
    if len(split) != 3 or any(x < 0 for x in split) or sum(split) != n_seqs:
        raise ValueError(f"split {split} does not partition {n_seqs} sequences")
    seqs = [simulate(spec, T, rng.spawn(i), domain) for i in range(n_seqs)]
    a, b, _ = split
    return seqs[:a], seqs[a:a + b], seqs[a + b:]
