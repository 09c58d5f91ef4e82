"""Continuous-time LSTM with temporal (MTNHP) or spatio-temporal (MSTNHP) cell decay.

Gate pre-activations for all gates are stacked in one ``(G*D,)`` vector, in the
order of :data:`GATE_ORDER`. The first six gates are sigmoid-activated (the
candidate ``z`` is then mapped to ``2 sigmoid - 1``); the decay gates go
through softplus. MSTNHP has eight gates, MTNHP drops the space-decay gate.

All functions take an optional ``p`` mapping of parameters. Passing taped
:class:`~mstnhp.autodiff.Var` leaves records the computation for
differentiation; by default the model's raw arrays are used and everything
runs as plain numpy.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import autodiff as ad
from .core import RandomStream, SpatialDomain, STEvent, EventSequence, UNIT_SQUARE

GATE_ORDER = ("i", "f", "o", "ibar", "fbar", "z", "delta_t", "delta_s")
VARIANTS = ("mstnhp", "mtnhp")


@dataclass(frozen=True)
class ModelConfig:
    variant: str = "mstnhp"
    K: int = 2
    D: int = 16
    E: int = 8
    tau: tuple = ()

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.K < 1 or self.D < 1 or self.E < 1:
            raise ValueError("K, D, E must be positive")
        tau = tuple(float(x) for x in self.tau) or (1.0,) * self.K
        if len(tau) != self.K or any(x <= 0 for x in tau):
            raise ValueError("tau must hold K positive scales")
        object.__setattr__(self, "tau", tau)

    @property
    def spatial(self) -> bool:
        return self.variant == "mstnhp"

    @property
    def n_gates(self) -> int:
        return 8 if self.spatial else 7

    @property
    def input_dim(self) -> int:
        return self.E + (2 if self.spatial else 0)

    def to_dict(self) -> dict:
        return {"variant": self.variant, "K": self.K, "D": self.D, "E": self.E,
                "tau": list(self.tau)}


def _blend(c_start, c_bar, expo):
    # convex form keeps both limits exact: expo=0 gives c_start, expo=inf gives c_bar
    e = ad.exp(-expo)
    return c_start * e + c_bar * (1.0 - e)


@dataclass
class IntervalState:
    """State active on ``(anchor_t, next event]``; fields may be arrays or taped Vars."""

    c_start: object
    c_bar: object
    delta_t: object
    o: object
    anchor_t: float
    delta_s: object = None
    anchor_s: Optional[np.ndarray] = None


class NeuralHawkes:
    """Parameters plus configuration of one MSTNHP or MTNHP model."""

    def __init__(self, config: ModelConfig, params: ad.ParamStore,
                 domain: Optional[SpatialDomain] = None):
        self.config = config
        self.params = params
        if config.spatial and domain is None:
            domain = UNIT_SQUARE
        self.domain = domain if config.spatial else None
        self._tau = np.asarray(config.tau)

    @classmethod
    def initialize(cls, config: ModelConfig, rng: RandomStream,
                   domain: Optional[SpatialDomain] = None) -> "NeuralHawkes":
        """Uniform(-r, r) matrices with ``r = D**-0.5``; zero biases."""
        D, G, K = config.D, config.n_gates, config.K
        r = D ** -0.5
        store = ad.ParamStore()
        store.add("embedding", rng.uniform(-r, r, size=(K + 1, config.E)))
        store.add("W", rng.uniform(-r, r, size=(G * D, config.input_dim)))
        store.add("U", rng.uniform(-r, r, size=(G * D, D)))
        store.add("b", np.zeros(G * D))
        store.add("w", rng.uniform(-r, r, size=(K, D)))
        return cls(config, store, domain)

    def copy(self) -> "NeuralHawkes":
        return NeuralHawkes(self.config, self.params.copy(), self.domain)

    @property
    def centroid(self) -> Optional[np.ndarray]:
        return None if self.domain is None else self.domain.centroid

    def _p(self, p):
        return self.params.values if p is None else p

    # -- inputs -----------------------------------------------------------

    def inputs(self, types, locations=None, p=None):
        """(n, input_dim) event inputs: type embedding, plus coordinates for MSTNHP."""
        p = self._p(p)
        emb = ad.take_rows(p["embedding"], np.asarray(types, dtype=np.intp))
        if not self.config.spatial:
            return emb
        return ad.concat([emb, np.asarray(locations, dtype=float).reshape(-1, 2)], axis=1)

    # -- discrete update ------------------------------------------------------

    def _gates(self, pre, p):
        D = self.config.D
        sg = ad.sigmoid(pre[:6 * D])
        dec = ad.softplus(pre[6 * D:])
        gates = {
            "i": sg[:D], "f": sg[D:2 * D], "o": sg[2 * D:3 * D],
            "ibar": sg[3 * D:4 * D], "fbar": sg[4 * D:5 * D],
            "z": 2.0 * sg[5 * D:6 * D] - 1.0,
            "delta_t": dec[:D],
        }
        if self.config.spatial:
            gates["delta_s"] = dec[D:2 * D]
        return gates

    def _step(self, state: IntervalState, c_minus, h_minus, wx_row, t, s, p):
        pre = wx_row + ad.matvec(p["U"], h_minus)
        g = self._gates(pre, p)
        c_new = g["f"] * c_minus + g["i"] * g["z"]
        cbar_new = g["fbar"] * state.c_bar + g["ibar"] * g["z"]
        return IntervalState(c_new, cbar_new, g["delta_t"], g["o"], float(t),
                             g.get("delta_s"), None if s is None else np.asarray(s, dtype=float))

    def zero_state(self) -> IntervalState:
        z = np.zeros(self.config.D)
        return IntervalState(z, z, z, z, 0.0, z if self.config.spatial else None, self.centroid)

    def init_state(self, p=None) -> IntervalState:
        """Process the beginning-of-sequence token (type 0) from an all-zeros state at t=0."""
        p = self._p(p)
        x = self.inputs([0], None if not self.config.spatial else self.centroid[None], p)[0]
        wx = ad.matvec(p["W"], x) + p["b"]
        zero = self.zero_state()
        return self._step(zero, zero.c_start, zero.c_start, wx, 0.0, self.centroid, p)

    def decay_cell(self, state: IntervalState, s, t, zero_space_decay: bool = False):
        if t < state.anchor_t:
            raise ValueError("cannot decay a cell backwards in time")
        expo = state.delta_t * (t - state.anchor_t)
        if self.config.spatial and not zero_space_decay:
            dist = float(np.linalg.norm(np.asarray(s, dtype=float) - state.anchor_s))
            expo = expo + state.delta_s * dist
        return _blend(state.c_start, state.c_bar, expo)

    def hidden(self, state: IntervalState, s, t, **kw):
        return state.o * ad.scaled_tanh(self.decay_cell(state, s, t, **kw))

    def intensity(self, state: IntervalState, k: int, s, t, p=None, **kw) -> float:
        p = self._p(p)
        h = self.hidden(state, s, t, **kw)
        return self.link(ad.matvec(p["w"], h))[k - 1]

    def intensities(self, state: IntervalState, s, t, p=None, **kw):
        p = self._p(p)
        return self.link(ad.matvec(p["w"], self.hidden(state, s, t, **kw)))

    def link(self, x):
        """Per-type scaled softplus ``tau * log(1 + exp(x / tau))`` along the last axis."""
        if np.all(self._tau == 1.0):
            return ad.softplus(x)
        return ad.softplus(x * (1.0 / self._tau)) * self._tau

    def update_at_event(self, state: IntervalState, event: STEvent, p=None,
                        zero_space_decay: bool = False) -> IntervalState:
        if event.t < state.anchor_t:
            raise ValueError("event precedes the current interval anchor")
        p = self._p(p)
        s = event.s if self.config.spatial else None
        c_minus = self.decay_cell(state, s, event.t, zero_space_decay)
        h_minus = state.o * ad.scaled_tanh(c_minus)
        x = self.inputs([event.k], None if s is None else np.asarray(s)[None], p)[0]
        wx = ad.matvec(p["W"], x) + p["b"]
        return self._step(state, c_minus, h_minus, wx, event.t, s, p)

    # -- whole sequences ------------------------------------------------------

    def run(self, seq: EventSequence, p=None, zero_space_decay: bool = False) -> "SequenceStates":
        """Fold the event updates over ``seq``.

        Returns the states of the ``n + 1`` intervals (BOS interval first) and
        the left-limit hidden states at each event.
        """
        p = self._p(p)
        spatial = self.config.spatial
        n = len(seq)
        types = np.concatenate([[0], seq.types])
        locs = None
        if spatial:
            if seq.locations is None:
                raise ValueError("MSTNHP needs spatial sequences")
            locs = np.vstack([self.centroid[None], seq.locations])
        X = self.inputs(types, locs, p)
        WX = ad.matmul(X, ad.transpose(p["W"])) + p["b"]
        zero = self.zero_state()
        state = self._step(zero, zero.c_start, zero.c_start, WX[0], 0.0,
                           self.centroid if spatial else None, p)
        states = [state]
        h_minus_all = []
        times = seq.times
        for i in range(n):
            t = times[i]
            expo = state.delta_t * (t - state.anchor_t)
            if spatial and not zero_space_decay:
                dist = float(np.hypot(*(locs[i + 1] - state.anchor_s)))
                expo = expo + state.delta_s * dist
            c_minus = _blend(state.c_start, state.c_bar, expo)
            h_minus = state.o * ad.scaled_tanh(c_minus)
            h_minus_all.append(h_minus)
            state = self._step(state, c_minus, h_minus, WX[i + 1], t,
                               locs[i + 1] if spatial else None, p)
            states.append(state)
        return SequenceStates.from_list(states, h_minus_all, spatial)


@dataclass
class SequenceStates:
    """Row-stacked interval states; row ``j`` is active on ``(t_j, t_{j+1}]`` with ``t_0 = 0``."""

    c_start: object
    c_bar: object
    delta_t: object
    o: object
    anchor_t: np.ndarray
    delta_s: object = None
    anchor_s: Optional[np.ndarray] = None
    h_minus: object = None

    @classmethod
    def from_list(cls, states: list, h_minus: list, spatial: bool) -> "SequenceStates":
        return cls(
            ad.stack([s.c_start for s in states]),
            ad.stack([s.c_bar for s in states]),
            ad.stack([s.delta_t for s in states]),
            ad.stack([s.o for s in states]),
            np.array([s.anchor_t for s in states]),
            ad.stack([s.delta_s for s in states]) if spatial else None,
            np.array([s.anchor_s for s in states]) if spatial else None,
            ad.stack(h_minus) if h_minus else None,
        )

    def interval_index(self, t) -> np.ndarray:
        """Row of the interval containing each query time (left-open intervals)."""
        return np.searchsorted(self.anchor_t[1:], np.asarray(t, dtype=float), side="left")

    def hidden_at(self, idx, t, s=None, zero_space_decay: bool = False):
        """Hidden states (M, D) for queries at times ``t`` (M,) and locations ``s`` (M, 2)."""
        idx = np.asarray(idx, dtype=np.intp)
        dt = (np.asarray(t, dtype=float) - self.anchor_t[idx])[:, None]
        expo = ad.take_rows(self.delta_t, idx) * dt
        if self.delta_s is not None and not zero_space_decay:
            diff = np.asarray(s, dtype=float) - self.anchor_s[idx]
            dist = np.hypot(diff[:, 0], diff[:, 1])[:, None]
            expo = expo + ad.take_rows(self.delta_s, idx) * dist
        c = _blend(ad.take_rows(self.c_start, idx), ad.take_rows(self.c_bar, idx), expo)
        return ad.take_rows(self.o, idx) * ad.scaled_tanh(c)


def intensity_at(model: NeuralHawkes, states: SequenceStates, t, s=None, p=None, **kw):
    """(M, K) intensities at query points; ``t`` (M,), ``s`` (M, 2) for MSTNHP."""
    p = model._p(p)
    t = np.asarray(t, dtype=float)
    idx = states.interval_index(t)
    h = states.hidden_at(idx, t, s, **kw)
    return model.link(ad.matmul(h, ad.transpose(p["w"])))
