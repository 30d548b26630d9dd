"""Minimal reverse-mode autodiff over 2-D numpy arrays.

Operations record their backward rules on a thread-local tape while one is
active; the backward pass replays the tape in exact reverse construction
order and accumulates gradients additively.  Without an active tape, ops
compute values only, which is the cheap path for evaluation.

Everything is float64.  Shapes are strict: the only broadcasting provided
is `add_bias` (row vector added to every row), which is all the model
needs.
"""

from __future__ import annotations

import threading
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

__all__ = [
    "Tensor", "Tape", "ShapeError", "NonFiniteError",
    "matmul", "sparse_apply", "add", "add_bias", "scale", "concat",
    "gather_rows", "transpose", "sigmoid", "leaky_relu", "relu",
    "row_softmax", "cross_entropy_with_logits", "weighted_sum",
    "grad_check",
]


class ShapeError(ValueError):
    pass


class NonFiniteError(FloatingPointError):
    pass


_STATE = threading.local()


class Tensor:
    """A float64 matrix with a lazily allocated gradient slot."""

    __slots__ = ("value", "grad")

    def __init__(self, value):
        v = np.asarray(value, dtype=np.float64)
        if v.ndim == 0:
            v = v.reshape(1, 1)
        elif v.ndim == 1:
            v = v.reshape(1, -1)
        elif v.ndim != 2:
            raise ShapeError(f"tensors are 2-D, got shape {v.shape}")
        self.value = v
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    def item(self) -> float:
        if self.value.size != 1:
            raise ShapeError(f"item() on non-scalar shape {self.shape}")
        return float(self.value.reshape(()))

    def accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        self.grad += g

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape})"


class Tape:
    """Ordered record of op backward rules; reversed on backward()."""

    def __init__(self):
        self._ops: list[tuple[str, Tensor, Callable[[np.ndarray], None]]] = []

    def __enter__(self) -> "Tape":
        stack = getattr(_STATE, "stack", None)
        if stack is None:
            stack = _STATE.stack = []
        stack.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _STATE.stack.pop()

    def __len__(self) -> int:
        return len(self._ops)

    def record(self, name: str, out: Tensor, backward: Callable[[np.ndarray], None]) -> None:
        self._ops.append((name, out, backward))

    def backward(self, loss: Tensor) -> None:
        """Seed d(loss)/d(loss) = 1 and run all recorded rules in reverse."""
        if loss.value.size != 1:
            raise ShapeError(f"backward() starts from a scalar, got {loss.value.shape}")
        loss.grad = np.ones_like(loss.value)
        for name, out, fn in reversed(self._ops):
            if out.grad is not None:
                fn(out.grad)


def active_tape() -> Tape | None:
    stack = getattr(_STATE, "stack", None)
    return stack[-1] if stack else None


def _finish(name: str, out_value: np.ndarray, backward: Callable[[np.ndarray], None]) -> Tensor:
    if not np.all(np.isfinite(out_value)):
        raise NonFiniteError(f"non-finite output of op {name!r}")
    out = Tensor(out_value)
    tape = active_tape()
    if tape is not None:
        tape.record(name, out, backward)
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shapes {a.shape} x {b.shape}")
    av, bv = a.value, b.value

    def backward(g: np.ndarray) -> None:
        a.accumulate(g @ bv.T)
        b.accumulate(av.T @ g)

    return _finish("matmul", av @ bv, backward)


def sparse_apply(a: sp.spmatrix, x: Tensor) -> Tensor:
    """Apply a constant sparse operator: A @ x.

    The backward rule uses A itself, which is exact because propagation
    operators are symmetric.
    """
    if a.shape[1] != x.shape[0]:
        raise ShapeError(f"sparse_apply shapes {a.shape} x {x.shape}")

    def backward(g: np.ndarray) -> None:
        x.accumulate(a @ g)

    return _finish("sparse_apply", a @ x.value, backward)


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"add shapes {a.shape} vs {b.shape}")

    def backward(g: np.ndarray) -> None:
        a.accumulate(g)
        b.accumulate(g)

    return _finish("add", a.value + b.value, backward)


def add_bias(x: Tensor, bias: Tensor) -> Tensor:
    """Add a 1 x m row vector to every row of an n x m matrix."""
    if bias.shape != (1, x.shape[1]):
        raise ShapeError(f"add_bias shapes {x.shape} vs {bias.shape}")

    def backward(g: np.ndarray) -> None:
        x.accumulate(g)
        bias.accumulate(g.sum(axis=0, keepdims=True))

    return _finish("add_bias", x.value + bias.value, backward)


def scale(x: Tensor, k: float) -> Tensor:
    k = float(k)

    def backward(g: np.ndarray) -> None:
        x.accumulate(k * g)

    return _finish("scale", k * x.value, backward)


def concat(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    if axis not in (0, 1):
        raise ShapeError(f"concat axis must be 0 or 1, got {axis}")
    if not parts:
        raise ShapeError("concat of zero tensors")
    other = 1 - axis
    ref = parts[0].shape[other]
    for p in parts:
        if p.shape[other] != ref:
            raise ShapeError(f"concat mismatch on axis {other}: {[p.shape for p in parts]}")
    sizes = [p.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def backward(g: np.ndarray) -> None:
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            p.accumulate(g[lo:hi, :] if axis == 0 else g[:, lo:hi])

    return _finish("concat", np.concatenate([p.value for p in parts], axis=axis), backward)


def gather_rows(x: Tensor, idx) -> Tensor:
    idx = np.asarray(idx, dtype=np.int64)
    if idx.ndim != 1:
        raise ShapeError(f"gather_rows wants a 1-D index, got shape {idx.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= x.shape[0]):
        raise ShapeError(f"gather_rows index out of range for {x.shape[0]} rows")

    def backward(g: np.ndarray) -> None:
        if x.grad is None:
            x.grad = np.zeros_like(x.value)
        np.add.at(x.grad, idx, g)

    return _finish("gather_rows", x.value[idx, :], backward)


def transpose(x: Tensor) -> Tensor:
    def backward(g: np.ndarray) -> None:
        x.accumulate(g.T)

    return _finish("transpose", x.value.T.copy(), backward)


def sigmoid(x: Tensor) -> Tensor:
    s = expit(x.value)

    def backward(g: np.ndarray) -> None:
        x.accumulate(g * s * (1.0 - s))

    return _finish("sigmoid", s, backward)


def leaky_relu(x: Tensor, slope: float = 0.01) -> Tensor:
    v = x.value
    out = np.where(v > 0, v, slope * v)

    def backward(g: np.ndarray) -> None:
        x.accumulate(g * np.where(v > 0, 1.0, slope))

    return _finish("leaky_relu", out, backward)


def relu(x: Tensor) -> Tensor:
    return leaky_relu(x, slope=0.0)


def row_softmax(x: Tensor) -> Tensor:
    v = x.value
    shifted = v - v.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=1, keepdims=True)

    def backward(g: np.ndarray) -> None:
        dot = (g * s).sum(axis=1, keepdims=True)
        x.accumulate(s * (g - dot))

    return _finish("row_softmax", s, backward)


def cross_entropy_with_logits(logits: Tensor, targets) -> Tensor:
    """Mean softmax cross-entropy of n x k logits against n integer targets."""
    t = np.asarray(targets, dtype=np.int64).ravel()
    n, k = logits.shape
    if t.shape[0] != n:
        raise ShapeError(f"{n} logit rows vs {t.shape[0]} targets")
    if t.size and (t.min() < 0 or t.max() >= k):
        raise ShapeError(f"target out of range for {k} classes")
    v = logits.value
    m = v.max(axis=1, keepdims=True)
    lse = m + np.log(np.exp(v - m).sum(axis=1, keepdims=True))
    losses = lse.ravel() - v[np.arange(n), t]
    mean = losses.mean().reshape(1, 1)

    def backward(g: np.ndarray) -> None:
        gs = float(g.reshape(())) / n
        p = np.exp(v - lse)
        p[np.arange(n), t] -= 1.0
        logits.accumulate(gs * p)

    return _finish("cross_entropy_with_logits", mean, backward)


def weighted_sum(weights: Tensor, rows: Tensor) -> Tensor:
    """Attention pooling: (1 x n) weights times (n x m) rows."""
    if weights.shape[0] != 1:
        raise ShapeError(f"weights must be a row vector, got {weights.shape}")
    return matmul(weights, rows)


def grad_check(
    f: Callable[[], Tensor],
    params: Sequence[Tensor],
    eps: float = 1e-5,
) -> float:
    """Max relative error between backward gradients and central differences.

    `f` must rebuild its expression from `params` on every call.  Relative
    error is |analytic - numeric| / max(1, |analytic|) per coordinate.
    """
    if not 1e-6 <= eps <= 1e-4:
        raise ValueError(f"eps {eps} outside [1e-6, 1e-4]")
    for p in params:
        p.grad = None
    with Tape() as tape:
        out = f()
        tape.backward(out)
    analytic = [np.zeros_like(p.value) if p.grad is None else p.grad.copy() for p in params]

    worst = 0.0
    for p, a in zip(params, analytic):
        for idx in np.ndindex(p.value.shape):
            orig = p.value[idx]
            p.value[idx] = orig + eps
            hi = f().item()
            p.value[idx] = orig - eps
            lo = f().item()
            p.value[idx] = orig
            if not (np.isfinite(hi) and np.isfinite(lo)):
                raise NonFiniteError("non-finite value during finite-difference probe")
            numeric = (hi - lo) / (2.0 * eps)
            ana = a[idx]
            worst = max(worst, abs(ana - numeric) / max(1.0, abs(ana)))
    return worst
