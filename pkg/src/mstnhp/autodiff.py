"""Reverse-mode differentiation on a dynamic tape of dense numpy values, and Adam.

Every primitive accepts plain arrays as well as :class:`Var` nodes. When no
input is a ``Var`` the primitive just returns the numpy result, so model code
written against these functions runs untaped (fast) for evaluation and taped
for training.

Each recorded node carries a backward closure that pushes its adjoint into its
parents' ``grad`` buffers. ``backward`` walks the tape in reverse insertion
order, which is a valid reverse topological order because nodes are only ever
appended after their inputs.
"""

from __future__ import annotations

import builtins
import json
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
from scipy.special import expit


class AutodiffError(ValueError):
    pass


class Tape:
    """Insertion-ordered list of nodes created while evaluating one expression."""

    def __init__(self):
        self.nodes: list[Var] = []

    def var(self, value, name: Optional[str] = None) -> "Var":
        v = Var(np.array(value, dtype=np.float64), self, None, name)
        self.nodes.append(v)
        return v

    def __len__(self):
        return len(self.nodes)


class Var:
    __slots__ = ("value", "tape", "bwd", "grad", "name")
    __array_priority__ = 1000  # make ndarray <op> Var dispatch to Var's reflected ops

    def __init__(self, value, tape: Tape, bwd: Optional[Callable], name: Optional[str] = None):
        self.value = value
        self.tape = tape
        self.bwd = bwd
        self.grad = None
        self.name = name

    @property
    def shape(self):
        return np.shape(self.value)

    def __repr__(self):
        return f"Var(shape={self.shape}, name={self.name})"

    __add__ = lambda a, b: add(a, b)
    __radd__ = lambda a, b: add(b, a)
    __sub__ = lambda a, b: sub(a, b)
    __rsub__ = lambda a, b: sub(b, a)
    __mul__ = lambda a, b: mul(a, b)
    __rmul__ = lambda a, b: mul(b, a)
    __truediv__ = lambda a, b: div(a, b)
    __rtruediv__ = lambda a, b: div(b, a)
    __neg__ = lambda a: neg(a)
    __matmul__ = lambda a, b: matmul(a, b)
    __rmatmul__ = lambda a, b: matmul(b, a)
    __getitem__ = lambda a, idx: getitem(a, idx)

    @property
    def T(self):
        return transpose(self)


def value_of(x):
    return x.value if isinstance(x, Var) else x


def _tape_of(*xs) -> Optional[Tape]:
    for x in xs:
        if isinstance(x, Var):
            return x.tape
    return None


def _node(tape: Tape, value) -> Var:
    v = Var(value, tape, None)
    tape.nodes.append(v)
    return v


def _unbroadcast(g, shape):
    g = np.asarray(g)
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g.reshape(shape)


def _acc(x, g):
    """Add adjoint ``g`` into ``x.grad`` (no-op for non-Var inputs)."""
    if not isinstance(x, Var):
        return
    g = _unbroadcast(g, np.shape(x.value))
    if x.grad is None:
        x.grad = np.array(g, dtype=np.float64)
    else:
        x.grad += g


# ---------------------------------------------------------------------------
# Elementwise primitives


def add(a, b):
    tape = _tape_of(a, b)
    av, bv = value_of(a), value_of(b)
    if tape is None:
        return av + bv
    out = _node(tape, av + bv)

    def bwd(g):
        _acc(a, g)
        _acc(b, g)
    out.bwd = bwd
    return out


def sub(a, b):
    tape = _tape_of(a, b)
    av, bv = value_of(a), value_of(b)
    if tape is None:
        return av - bv
    out = _node(tape, av - bv)

    def bwd(g):
        _acc(a, g)
        _acc(b, -g)
    out.bwd = bwd
    return out


def mul(a, b):
    tape = _tape_of(a, b)
    av, bv = value_of(a), value_of(b)
    if tape is None:
        return av * bv
    out = _node(tape, av * bv)

    def bwd(g):
        _acc(a, g * bv)
        _acc(b, g * av)
    out.bwd = bwd
    return out


def div(a, b):
    tape = _tape_of(a, b)
    av, bv = value_of(a), value_of(b)
    if np.any(np.asarray(bv) == 0):
        raise AutodiffError("division by zero")
    if tape is None:
        return av / bv
    q = av / bv
    out = _node(tape, q)

    def bwd(g):
        _acc(a, g / bv)
        _acc(b, -g * q / bv)
    out.bwd = bwd
    return out


def neg(a):
    if not isinstance(a, Var):
        return -a
    out = _node(a.tape, -a.value)
    out.bwd = lambda g: _acc(a, -g)
    return out


def exp(a):
    v = np.exp(value_of(a))
    if not isinstance(a, Var):
        return v
    out = _node(a.tape, v)
    out.bwd = lambda g: _acc(a, g * v)
    return out


def log(a):
    av = value_of(a)
    if np.any(np.asarray(av) <= 0):
        raise AutodiffError("log of a nonpositive value")
    v = np.log(av)
    if not isinstance(a, Var):
        return v
    out = _node(a.tape, v)
    out.bwd = lambda g: _acc(a, g / av)
    return out


def sigmoid(a):
    v = expit(value_of(a))
    if not isinstance(a, Var):
        return v
    out = _node(a.tape, v)
    out.bwd = lambda g: _acc(a, g * v * (1.0 - v))
    return out


def softplus(a):
    """``log(1 + e^x)`` computed without overflow."""
    av = value_of(a)
    v = np.logaddexp(0.0, av)
    if not isinstance(a, Var):
        return v
    out = _node(a.tape, v)
    out.bwd = lambda g: _acc(a, g * expit(av))
    return out


def scaled_tanh(a):
    """``2 sigmoid(2x) - 1``, which is identically ``tanh(x)``."""
    v = np.tanh(value_of(a))
    if not isinstance(a, Var):
        return v
    out = _node(a.tape, v)
    out.bwd = lambda g: _acc(a, g * (1.0 - v * v))
    return out


def clamp_min(a, lo: float):
    av = value_of(a)
    v = np.maximum(av, lo)
    if not isinstance(a, Var):
        return v
    out = _node(a.tape, v)
    out.bwd = lambda g: _acc(a, g * (av > lo))
    return out


# ---------------------------------------------------------------------------
# Linear algebra and reductions


def matmul(a, b):
    tape = _tape_of(a, b)
    av, bv = value_of(a), value_of(b)
    if np.ndim(av) == 0 or np.ndim(bv) == 0 or np.ndim(av) > 2 or np.ndim(bv) > 2:
        raise AutodiffError("matmul needs 1-D or 2-D operands")
    if np.shape(av)[-1] != np.shape(bv)[0]:
        raise AutodiffError(f"shape mismatch {np.shape(av)} @ {np.shape(bv)}")
    v = av @ bv
    if tape is None:
        return v
    out = _node(tape, v)
    da, db = np.ndim(av), np.ndim(bv)

    def bwd(g):
        if isinstance(a, Var):
            if da == 2 and db == 2:
                _acc(a, g @ bv.T)
            elif da == 2:
                _acc(a, np.outer(g, bv))
            elif db == 2:
                _acc(a, bv @ g)
            else:
                _acc(a, g * bv)
        if isinstance(b, Var):
            if da == 2 and db == 2:
                _acc(b, av.T @ g)
            elif da == 2:
                _acc(b, av.T @ g)
            elif db == 2:
                _acc(b, np.outer(av, g))
            else:
                _acc(b, g * av)
    out.bwd = bwd
    return out


def dot(a, b):
    if np.ndim(value_of(a)) != 1 or np.ndim(value_of(b)) != 1:
        raise AutodiffError("dot needs two vectors")
    return matmul(a, b)


def matvec(m, x):
    if np.ndim(value_of(m)) != 2 or np.ndim(value_of(x)) != 1:
        raise AutodiffError("matvec needs a matrix and a vector")
    return matmul(m, x)


def transpose(a):
    if not isinstance(a, Var):
        return np.transpose(a)
    out = _node(a.tape, a.value.T)
    out.bwd = lambda g: _acc(a, g.T)
    return out


def sum(a, axis=None):  # noqa: A001 - mirrors numpy naming
    av = value_of(a)
    v = np.sum(av, axis=axis)
    if not isinstance(a, Var):
        return v
    out = _node(a.tape, v)
    shape = np.shape(av)

    def bwd(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        _acc(a, np.broadcast_to(g, shape))
    out.bwd = bwd
    return out


def mean(a, axis=None):
    n = np.size(value_of(a)) if axis is None else np.shape(value_of(a))[axis]
    return mul(sum(a, axis), 1.0 / n)


def getitem(a, idx):
    """Basic or integer-array indexing; adjoints scatter-add back into ``a``."""
    av = value_of(a)
    v = av[idx]
    if not isinstance(a, Var):
        return v
    out = _node(a.tape, v)
    advanced = isinstance(idx, np.ndarray) or (
        isinstance(idx, tuple) and any(isinstance(i, (np.ndarray, list)) for i in idx))

    def bwd(g):
        if a.grad is None:
            a.grad = np.zeros(np.shape(av))
        if advanced:
            np.add.at(a.grad, idx, g)
        else:
            a.grad[idx] += g
    out.bwd = bwd
    return out


def take_rows(a, idx):
    return getitem(a, np.asarray(idx, dtype=np.intp))


def concat(xs: Sequence, axis: int = 0):
    vals = [value_of(x) for x in xs]
    v = np.concatenate(vals, axis=axis)
    tape = _tape_of(*xs)
    if tape is None:
        return v
    out = _node(tape, v)
    bounds = np.cumsum([0] + [np.shape(x)[axis] for x in vals])

    def bwd(g):
        for x, lo, hi in zip(xs, bounds[:-1], bounds[1:]):
            if isinstance(x, Var):
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                _acc(x, g[tuple(sl)])
    out.bwd = bwd
    return out


def stack(xs: Sequence, axis: int = 0):
    vals = [value_of(x) for x in xs]
    v = np.stack(vals, axis=axis)
    tape = _tape_of(*xs)
    if tape is None:
        return v
    out = _node(tape, v)

    def bwd(g):
        for i, x in enumerate(xs):
            if isinstance(x, Var):
                _acc(x, np.take(g, i, axis=axis))
    out.bwd = bwd
    return out


# ---------------------------------------------------------------------------
# Backward pass


def backward(out: Var, seed: float = 1.0) -> None:
    """Propagate ``d out`` through the tape; ``out`` must be a scalar."""
    if not isinstance(out, Var):
        raise AutodiffError("backward needs a taped Var")
    if np.size(out.value) != 1:
        raise AutodiffError(f"backward needs a scalar output, got shape {out.shape}")
    tape = out.tape
    for node in tape.nodes:
        node.grad = None
    out.grad = np.full(np.shape(out.value), seed, dtype=np.float64)
    stop = tape.nodes.index(out) if tape.nodes[-1] is not out else len(tape.nodes) - 1
    for node in reversed(tape.nodes[:stop + 1]):
        if node.grad is not None and node.bwd is not None:
            node.bwd(node.grad)


# ---------------------------------------------------------------------------
# Parameters and Adam


class ParamStore:
    """Named trainable arrays with gradient and Adam moment slots."""

    def __init__(self, values: Optional[dict] = None):
        self.values: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.step = 0
        for k, a in (values or {}).items():
            self.add(k, a)

    def add(self, name: str, value) -> None:
        a = np.array(value, dtype=np.float64)
        self.values[name] = a
        self.grads[name] = np.zeros_like(a)
        self.m[name] = np.zeros_like(a)
        self.v[name] = np.zeros_like(a)

    def names(self) -> list[str]:
        return list(self.values)

    def __getitem__(self, name):
        return self.values[name]

    def n_params(self) -> int:
        return int(builtins.sum(a.size for a in self.values.values()))

    def bind(self, tape: Tape) -> dict[str, Var]:
        """Fresh leaf nodes on ``tape`` for every parameter."""
        return {k: tape.var(a, k) for k, a in self.values.items()}

    def accumulate(self, leaves: dict[str, Var], scale: float = 1.0) -> None:
        for k, leaf in leaves.items():
            if leaf.grad is not None:
                self.grads[k] += scale * leaf.grad

    def add_grads(self, grads: dict, scale: float = 1.0) -> None:
        for k, g in grads.items():
            self.grads[k] += scale * g

    def zero_grad(self) -> None:
        for g in self.grads.values():
            g.fill(0.0)

    def copy(self) -> "ParamStore":
        out = ParamStore()
        for k in self.values:
            out.values[k] = self.values[k].copy()
            out.grads[k] = self.grads[k].copy()
            out.m[k] = self.m[k].copy()
            out.v[k] = self.v[k].copy()
        out.step = self.step
        return out

    def to_json_dict(self) -> dict:
        return {k: {"shape": list(a.shape), "values": a.ravel().tolist()}
                for k, a in self.values.items()}

    @classmethod
    def from_json_dict(cls, d: dict) -> "ParamStore":
        store = cls()
        for k, entry in d.items():
            store.add(k, np.array(entry["values"], dtype=np.float64).reshape(entry["shape"]))
        return store

    def dumps(self) -> str:
        return json.dumps(self.to_json_dict())



def adam_step(store: ParamStore, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> ParamStore:
    """Bias-corrected Adam descent step on the stored gradients, which are then zeroed."""
    store.step += 1
    t = store.step
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for k, x in store.values.items():
        g = store.grads[k]
        m, v = store.m[k], store.v[k]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        x -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
        g.fill(0.0)
    return store
