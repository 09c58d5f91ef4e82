"""Monte Carlo log-likelihood, mini-batch Adam training and best-validation checkpointing."""

from __future__ import annotations

import hashlib
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import autodiff as ad
from .core import EventSequence, RandomStream, SpatialDomain, SequenceError
from .ctlstm import NeuralHawkes, intensity_at

log = logging.getLogger(__name__)

EVAL_STREAM = 0x5EED_E7A1


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class MCConfig:
    """Monte Carlo policy for the space-time integral.

    ``n_samples = mult * max(n_events, 1)`` unless ``n_fixed`` is set.
    ``policy='fresh'`` redraws the points every epoch during training;
    ``'frozen'`` reuses the same draws throughout.
    """

    mult: int = 10
    n_fixed: Optional[int] = None
    policy: str = "fresh"

    def __post_init__(self):
        if self.mult < 1 or (self.n_fixed is not None and self.n_fixed < 1):
            raise ValueError("need at least one MC sample")
        if self.policy not in ("fresh", "frozen"):
            raise ValueError("policy must be 'fresh' or 'frozen'")

    def n_samples(self, n_events: int) -> int:
        return self.n_fixed if self.n_fixed is not None else self.mult * max(n_events, 1)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 10
    lr: float = 1e-3
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    patience: Optional[int] = None
    valid_every: int = 1
    threads: int = 1

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.valid_every < 1 or self.threads < 1:
            raise ValueError("epochs >= 0; batch size, validation cadence, threads >= 1")
        if self.patience is not None and self.patience < 1:
            raise ValueError("patience must be positive")


def sequence_key(seq: EventSequence) -> int:
    """Stable 63-bit content hash used to key per-sequence random streams."""
    h = hashlib.blake2b(digest_size=8)
    h.update(np.ascontiguousarray(seq.types, dtype="<i8").tobytes())
    h.update(np.ascontiguousarray(seq.times, dtype="<f8").tobytes())
    if seq.locations is not None:
        h.update(np.ascontiguousarray(seq.locations, dtype="<f8").tobytes())
    h.update(np.float64(seq.T).astype("<f8").tobytes())
    return int.from_bytes(h.digest(), "little") >> 1


def mc_points(T: float, domain: Optional[SpatialDomain], n: int, rng: RandomStream):
    t = rng.uniform(0.0, T, size=n)
    s = domain.sample_uniform(rng, n) if domain is not None else None
    return t, s


def mc_integral(fn: Callable, T: float, domain: Optional[SpatialDomain], n: int,
                rng: RandomStream):
    """``T |S| mean_j fn(t_j, s_j)`` over ``n`` uniform space-time draws.

    ``fn(t, s)`` maps (n,) times and (n, 2) locations (or ``None``) to values
    whose total over all axes is the integrand summed at each draw.
    """
    t, s = mc_points(T, domain, n, rng)
    area = domain.area if domain is not None else 1.0
    return ad.sum(fn(t, s)) * (T * area / n)


def _check(model: NeuralHawkes, seq: EventSequence):
    if len(seq) and seq.types.max() > model.config.K:
        raise SequenceError(f"event type {seq.types.max()} exceeds model K={model.config.K}")
    if model.config.spatial:
        if seq.locations is None:
            raise SequenceError("MSTNHP needs spatial sequences")
        if len(seq) and not np.all(model.domain.contains(seq.locations)):
            raise SequenceError("event outside the model's spatial domain")


def sequence_loglik(model: NeuralHawkes, seq: EventSequence, mc: MCConfig, rng: RandomStream,
                    p=None, parts: bool = False):
    """Event log-intensities at left limits minus the MC estimate of the compensator."""
    _check(model, seq)
    p = model._p(p)
    states = model.run(seq, p)
    n = len(seq)
    if n:
        lam = model.link(ad.matmul(states.h_minus, ad.transpose(p["w"])))
        ev = ad.sum(ad.log(lam[np.arange(n), seq.types - 1]))
    else:
        ev = 0.0
    domain = model.domain if model.config.spatial else None
    integral = mc_integral(lambda t, s: intensity_at(model, states, t, s, p), seq.T, domain,
                           mc.n_samples(n), rng)
    ll = ev - integral
    return (ll, ev, integral) if parts else ll


def dataset_loglik(model: NeuralHawkes, seqs: Sequence[EventSequence], mc: MCConfig,
                   rng: RandomStream):
    """(total, per-event mean). Each sequence draws from ``rng.spawn(sequence_key(seq))``."""
    if not len(seqs):
        raise ValueError("empty dataset")
    total = 0.0
    n_events = 0
    for seq in seqs:
        total += float(sequence_loglik(model, seq, mc, rng.spawn(sequence_key(seq))))
        n_events += len(seq)
    return total, total / max(n_events, 1)


# ---------------------------------------------------------------------------
# Training


@dataclass
class TrainResult:
    model: NeuralHawkes
    history: list = field(default_factory=list)
    best_epoch: int = 0
    best_valid: float = float("-inf")
    final_lr: float = 0.0
    final_model: Optional[NeuralHawkes] = None


def _grad_one(model: NeuralHawkes, seq: EventSequence, mc: MCConfig, rng: RandomStream):
    tape = ad.Tape()
    leaves = model.params.bind(tape)
    ll = sequence_loglik(model, seq, mc, rng, leaves)
    ad.backward(ll)
    grads = {k: v.grad for k, v in leaves.items() if v.grad is not None}
    return float(ll.value), grads


def train(model: NeuralHawkes, train_set: Sequence[EventSequence],
          valid_set: Sequence[EventSequence], tcfg: TrainConfig, mc: MCConfig,
          rng: RandomStream, callback: Optional[Callable] = None) -> TrainResult:
    """Maximise the summed log-likelihood with Adam; keep the best-validation epoch.

    Gradients are averaged over the sequences of a batch. Validation (and the
    recorded train total) use a frozen evaluation stream so epochs compare on
    identical MC draws. If an epoch hits a nonfinite value, the learning rate is
    halved once and the epoch restarts from its starting parameters.
    ``callback(row, model)`` runs after every recorded epoch with the live model.
    """
    model = model.copy()
    result = TrainResult(model.copy(), final_lr=tcfg.lr)
    if tcfg.epochs == 0 or not len(train_set):
        result.final_model = model
        return result
    eval_rng = rng.spawn(EVAL_STREAM)
    frozen_rng = rng.spawn(EVAL_STREAM + 1)
    selection_set = valid_set if len(valid_set) else train_set
    lr = tcfg.lr
    halved = False
    since_best = 0
    pool = ThreadPoolExecutor(tcfg.threads) if tcfg.threads > 1 else None
    t_start = time.perf_counter()
    try:
        epoch = 1
        while epoch <= tcfg.epochs:
            ep_rng = rng.spawn(epoch)
            mc_rng = frozen_rng if mc.policy == "frozen" else ep_rng
            order = ep_rng.permutation(len(train_set))
            snapshot = model.params.copy()
            failed_at = None
            for b, lo in enumerate(range(0, len(order), tcfg.batch_size)):
                batch = [train_set[i] for i in order[lo:lo + tcfg.batch_size]]
                jobs = [(seq, mc_rng.spawn(sequence_key(seq))) for seq in batch]
                if pool is None:
                    outs = [_grad_one(model, s, mc, r) for s, r in jobs]
                else:
                    outs = list(pool.map(lambda j: _grad_one(model, j[0], mc, j[1]), jobs))
                scale = -1.0 / len(batch)
                for ll, grads in outs:
                    model.params.add_grads(grads, scale)
                bad = any(not np.isfinite(ll) for ll, _ in outs) or any(
                    not np.all(np.isfinite(g)) for g in model.params.grads.values())
                if bad:
                    failed_at = b
                    break
                ad.adam_step(model.params, lr, tcfg.betas[0], tcfg.betas[1], tcfg.eps)
            if failed_at is not None:
                if halved:
                    raise TrainingError(f"nonfinite log-likelihood at epoch {epoch}, batch {failed_at}")
                log.warning("nonfinite value at epoch %d batch %d; halving lr", epoch, failed_at)
                halved = True
                lr /= 2.0
                model.params = snapshot
                continue
            if epoch % tcfg.valid_every == 0 or epoch == tcfg.epochs:
                train_ll, _ = dataset_loglik(model, train_set, mc, eval_rng)
                valid_ll, _ = dataset_loglik(model, selection_set, mc, eval_rng)
                row = {"epoch": epoch, "train_ll": train_ll, "valid_ll": valid_ll,
                       "wall_seconds": time.perf_counter() - t_start}
                result.history.append(row)
                if not (np.isfinite(train_ll) and np.isfinite(valid_ll)):
                    raise TrainingError(f"nonfinite evaluation log-likelihood at epoch {epoch}")
                if valid_ll > result.best_valid:
                    result.best_valid = valid_ll
                    result.best_epoch = epoch
                    result.model = model.copy()
                    since_best = 0
                else:
                    since_best += 1
                if callback is not None:
                    callback(row, model)
                log.info("epoch %d train %.4f valid %.4f", epoch, train_ll, valid_ll)
                if tcfg.patience is not None and since_best >= tcfg.patience:
                    break
            epoch += 1
    finally:
        if pool is not None:
            pool.shutdown()
    result.final_lr = lr
    result.final_model = model
    return result


def poisson_baseline_per_event(seqs: Sequence[EventSequence], K: int) -> float:
    """Per-event log-likelihood of the pooled homogeneous space-time Poisson MLE."""
    n = sum(len(s) for s in seqs)
    exposure = sum(K * s.T * s.area for s in seqs)
    if n == 0:
        raise ValueError("no events")
    rate = n / exposure
    return (n * np.log(rate) - rate * exposure) / n
