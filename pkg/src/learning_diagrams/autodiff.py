"""A small tape-based reverse-mode autodiff over dense float64 arrays.

Values live in numpy arrays. Operations on tensors that belong to a tape
append a record holding the parents and a vector-Jacobian product; tensors
without a tape are constants and produce constants. Shapes must match
exactly except for :func:`add_bias`, which adds a row vector to every row.
"""

from __future__ import annotations

from collections.abc import Callable, Iterable, Mapping
from dataclasses import dataclass

import numpy as np

from .errors import NonScalarOutput, ShapeMismatch, UnknownKey

Vjp = Callable[[np.ndarray], tuple[np.ndarray, ...]]


class Tape:
    def __init__(self) -> None:
        self._records: list[tuple[tuple[Tensor, ...], Vjp | None, tuple[int, ...]]] = []

    def __len__(self) -> int:
        return len(self._records)

    def leaf(self, value) -> Tensor:
        return self._push(np.asarray(value, dtype=np.float64), (), None)

    def _push(self, value: np.ndarray, parents: tuple[Tensor, ...], vjp: Vjp | None) -> Tensor:
        t = Tensor(value, self, len(self._records))
        self._records.append((parents, vjp, value.shape))
        return t

    def clear(self) -> None:
        self._records.clear()


class Tensor:
    __slots__ = ("value", "tape", "node")

    def __init__(self, value, tape: Tape | None = None, node: int = -1):
        self.value = np.asarray(value, dtype=np.float64)
        self.tape = tape
        self.node = node

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def __repr__(self) -> str:
        tracked = f", node={self.node}" if self.tape is not None else ""
        return f"Tensor(shape={self.shape}{tracked})"

    def __add__(self, other: Tensor) -> Tensor:
        return add(self, other)

    def __sub__(self, other: Tensor) -> Tensor:
        return sub(self, other)

    def __mul__(self, other: Tensor) -> Tensor:
        return mul(self, other)

    def __neg__(self) -> Tensor:
        return scale(self, -1.0)

    def __matmul__(self, other: Tensor) -> Tensor:
        return matmul(self, other)


def constant(value) -> Tensor:
    return Tensor(value)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _apply(value: np.ndarray, inputs: tuple[Tensor, ...], vjp: Vjp) -> Tensor:
    tape = None
    for t in inputs:
        if t.tape is not None:
            if tape is not None and t.tape is not tape:
                raise ValueError("cannot mix tensors from different tapes")
            tape = t.tape
    if tape is None:
        return Tensor(value)
    return tape._push(value, inputs, vjp)


def _same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeMismatch(f"{op}: shapes {a.shape} and {b.shape} differ")


# primitives

def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _same_shape("add", a, b)
    return _apply(a.value + b.value, (a, b), lambda g: (g, g))


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _same_shape("sub", a, b)
    return _apply(a.value - b.value, (a, b), lambda g: (g, -g))


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _same_shape("mul", a, b)
    av, bv = a.value, b.value
    return _apply(av * bv, (a, b), lambda g: (g * bv, g * av))


def scale(a, c: float) -> Tensor:
    a = _as_tensor(a)
    return _apply(a.value * c, (a,), lambda g: (g * c,))


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.value.ndim != 2 or b.value.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"matmul: cannot multiply {a.shape} by {b.shape}")
    av, bv = a.value, b.value
    return _apply(av @ bv, (a, b), lambda g: (g @ bv.T, av.T @ g))


def add_bias(x, b) -> Tensor:
    """``x[i] + b`` for every row ``i`` of a 2-D ``x``."""
    x, b = _as_tensor(x), _as_tensor(b)
    if x.value.ndim != 2 or b.shape != x.shape[1:]:
        raise ShapeMismatch(f"add_bias: bias {b.shape} does not fit rows of {x.shape}")
    return _apply(x.value + b.value, (x, b), lambda g: (g, g.sum(axis=0)))


def relu(x) -> Tensor:
    x = _as_tensor(x)
    mask = x.value > 0
    return _apply(np.where(mask, x.value, 0.0), (x,), lambda g: (g * mask,))


def abs_(x) -> Tensor:
    x = _as_tensor(x)
    sign = np.sign(x.value)
    return _apply(np.abs(x.value), (x,), lambda g: (g * sign,))


def _softmax(v: np.ndarray) -> np.ndarray:
    z = v - v.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax(x, temperature: float = 1.0) -> Tensor:
    """Softmax over the last axis of ``x / temperature``."""
    x = _as_tensor(x)
    s = _softmax(x.value / temperature)

    def vjp(g):
        return ((s * (g - (g * s).sum(axis=-1, keepdims=True))) / temperature,)

    return _apply(s, (x,), vjp)


def log_softmax(x, temperature: float = 1.0) -> Tensor:
    x = _as_tensor(x)
    z = x.value / temperature
    z = z - z.max(axis=-1, keepdims=True)
    out = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    s = np.exp(out)

    def vjp(g):
        return ((g - s * g.sum(axis=-1, keepdims=True)) / temperature,)

    return _apply(out, (x,), vjp)


def log(x) -> Tensor:
    x = _as_tensor(x)
    v = x.value
    with np.errstate(divide="ignore"):
        out = np.log(v)
    return _apply(out, (x,), lambda g: (g / v,))


def exp(x) -> Tensor:
    x = _as_tensor(x)
    e = np.exp(x.value)
    return _apply(e, (x,), lambda g: (g * e,))


def sqrt(x) -> Tensor:
    """Square root; the derivative at 0 is taken to be 0."""
    x = _as_tensor(x)
    r = np.sqrt(x.value)
    safe = np.where(r > 0, r, 1.0)
    return _apply(r, (x,), lambda g: (np.where(r > 0, g / (2.0 * safe), 0.0),))


def sum_(x, axis: int | None = None) -> Tensor:
    x = _as_tensor(x)
    shape = x.shape
    out = x.value.sum() if axis is None else x.value.sum(axis=axis)

    def vjp(g):
        if axis is None:
            return (np.full(shape, g, dtype=np.float64),)
        return (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),)

    return _apply(np.asarray(out, dtype=np.float64), (x,), vjp)


def concat(xs: Iterable, axis: int = -1) -> Tensor:
    xs = tuple(_as_tensor(x) for x in xs)
    if not xs:
        raise ShapeMismatch("concat of nothing")
    ndim = xs[0].value.ndim
    ax = axis % ndim
    for x in xs:
        if x.value.ndim != ndim or x.shape[:ax] + x.shape[ax + 1:] != xs[0].shape[:ax] + xs[0].shape[ax + 1:]:
            raise ShapeMismatch(f"concat: incompatible shapes {[t.shape for t in xs]}")
    sizes = np.cumsum([x.shape[ax] for x in xs])[:-1]
    out = np.concatenate([x.value for x in xs], axis=ax)
    return _apply(out, xs, lambda g: tuple(np.split(g, sizes, axis=ax)))


def slice_(x, start: int, stop: int) -> Tensor:
    """``x[..., start:stop]``."""
    x = _as_tensor(x)
    if not (0 <= start < stop <= x.shape[-1]):
        raise ShapeMismatch(f"slice [{start}:{stop}] out of range for {x.shape}")
    shape = x.shape

    def vjp(g):
        full = np.zeros(shape)
        full[..., start:stop] = g
        return (full,)

    return _apply(x.value[..., start:stop].copy(), (x,), vjp)


def take_rows(x, rows: np.ndarray) -> Tensor:
    x = _as_tensor(x)
    shape = x.shape

    def vjp(g):
        full = np.zeros(shape)
        np.add.at(full, rows, g)
        return (full,)

    return _apply(x.value[rows], (x,), vjp)


def backward(tape: Tape, output: Tensor) -> dict[int, np.ndarray]:
    """Gradients of a scalar ``output`` with respect to every node on ``tape``.

    Nodes the output does not depend on get zero gradients. The tape is
    cleared afterwards.
    """
    if output.value.size != 1:
        raise NonScalarOutput(f"backward needs a scalar output, got shape {output.shape}")
    if output.tape is not tape:
        raise ValueError("output was not recorded on this tape")
    records = tape._records
    grads: dict[int, np.ndarray] = {output.node: np.ones_like(output.value)}
    for node in range(output.node, -1, -1):
        g = grads.get(node)
        parents, vjp, _ = records[node]
        if g is None or vjp is None:
            continue
        for parent, pg in zip(parents, vjp(g)):
            if parent.tape is None:
                continue
            if parent.node in grads:
                grads[parent.node] = grads[parent.node] + pg
            else:
                grads[parent.node] = pg
    full = {n: grads[n] if n in grads else np.zeros(shape)
            for n, (_, _, shape) in enumerate(records)}
    tape.clear()
    return full


class ParamStore:
    """Named parameter arrays grouped under keys, plus optimizer state.

    Edges that reference the same key read and update the same arrays.
    Updates are done in place so aliases stay in sync.
    """

    def __init__(self) -> None:
        self.params: dict[str, dict[str, np.ndarray]] = {}
        self.state: dict[str, dict] = {}

    def __contains__(self, key: str) -> bool:
        return key in self.params

    def __getitem__(self, key: str) -> dict[str, np.ndarray]:
        try:
            return self.params[key]
        except KeyError:
            raise UnknownKey(f"no parameters stored under {key!r}") from None

    def keys(self) -> list[str]:
        return sorted(self.params)

    def set(self, key: str, tensors: Mapping[str, np.ndarray]) -> None:
        self.params[key] = {name: np.array(v, dtype=np.float64) for name, v in tensors.items()}
        self.state.pop(key, None)

    def copy(self) -> ParamStore:
        out = ParamStore()
        for key, tensors in self.params.items():
            out.set(key, tensors)
        return out

    def snapshot(self) -> dict[str, dict[str, np.ndarray]]:
        return {k: {n: v.copy() for n, v in t.items()} for k, t in self.params.items()}

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ParamStore):
            return NotImplemented
        if sorted(self.params) != sorted(other.params):
            return False
        for key, tensors in self.params.items():
            theirs = other.params[key]
            if sorted(tensors) != sorted(theirs):
                return False
            for name, v in tensors.items():
                if v.shape != theirs[name].shape or not np.array_equal(v, theirs[name]):
                    return False
        return True


@dataclass(frozen=True)
class SGD:
    lr: float = 0.01


@dataclass(frozen=True)
class Adam:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def optimizer_step(store: ParamStore, grads: Mapping[str, Mapping[str, np.ndarray]],
                   optimizer: SGD | Adam) -> ParamStore:
    for key in grads:
        if key not in store:
            raise UnknownKey(f"gradient for unknown parameter key {key!r}")
    for key in sorted(grads):
        tensors = store.params[key]
        for name in sorted(grads[key]):
            g = grads[key][name]
            p = tensors[name]
            if isinstance(optimizer, SGD):
                p -= optimizer.lr * g
                continue
            st = store.state.setdefault(key, {}).setdefault(
                name, {"m": np.zeros_like(p), "v": np.zeros_like(p), "t": 0})
            st["t"] += 1
            t = st["t"]
            st["m"] = optimizer.beta1 * st["m"] + (1 - optimizer.beta1) * g
            st["v"] = optimizer.beta2 * st["v"] + (1 - optimizer.beta2) * g * g
            m_hat = st["m"] / (1 - optimizer.beta1 ** t)
            v_hat = st["v"] / (1 - optimizer.beta2 ** t)
            p -= optimizer.lr * m_hat / (np.sqrt(v_hat) + optimizer.eps)
    return store
