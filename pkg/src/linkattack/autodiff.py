"""Dense 2-D tensors with a reverse-mode gradient tape.

Operations record onto the innermost active :class:`Tape` when at least one
input requires a gradient. Outside a tape every op is plain numpy arithmetic,
which is how inference paths run.

    with Tape() as tape:
        y = sigmoid(matmul(x, w))
        loss = sum_all(y)
    tape.backward(loss)
    w.grad  # dloss/dw

Subgradient conventions at kinks are fixed: ``|x|`` at 0, ``relu`` at 0 and
``clamp01`` at 0 or 1 all have derivative 0. ``max`` reductions route the
gradient to the first maximal entry.
"""

from __future__ import annotations

import threading
from typing import Callable, Iterable, Sequence

import numpy as np


class DimensionError(ValueError):
    """Operand shapes are incompatible."""


class DomainError(ValueError):
    """An operand lies outside the domain of the operation."""


class ContractError(RuntimeError):
    """A precondition of the engine was violated."""


class Tensor:
    """A dense row-major matrix of float64 values."""

    __slots__ = ("values", "requires_grad", "grad")

    def __init__(self, values, requires_grad: bool = False):
        arr = np.array(values, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise DimensionError(f"tensors are 2-D, got ndim={arr.ndim}")
        self.values = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "Tensor":
        t = cls.__new__(cls)
        t.values = arr
        t.requires_grad = False
        t.grad = None
        return t

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def item(self) -> float:
        if self.values.size != 1:
            raise ContractError(f"item() needs a 1x1 tensor, got {self.shape}")
        return float(self.values[0, 0])

    def numpy(self) -> np.ndarray:
        return self.values

    def __matmul__(self, other):
        return matmul(self, other)

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor({self.values.tolist()}{flag})"


Backward = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


class _Op:
    __slots__ = ("inputs", "output", "backward")

    def __init__(self, inputs: tuple[Tensor, ...], output: Tensor, backward: Backward):
        self.inputs = inputs
        self.output = output
        self.backward = backward


_local = threading.local()


def _stack() -> list["Tape"]:
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = _local.stack = []
    return stack


class Tape:
    """Ordered record of primitive ops, replayed in reverse by :meth:`backward`.

    A tape is single-owner. The active-tape stack is thread-local, so
    independent tapes may run on separate threads.
    """

    def __init__(self):
        self.ops: list[_Op] = []

    def __enter__(self) -> "Tape":
        _stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        stack = _stack()
        if stack and stack[-1] is self:
            stack.pop()

    def __len__(self) -> int:
        return len(self.ops)

    def reset(self) -> None:
        self.ops.clear()

    def backward(self, loss: Tensor) -> None:
        """Populate ``.grad`` on every recorded tensor that requires grad.

        Gradients are overwritten, not accumulated. Tensors on the tape that
        the loss does not depend on receive zeros. The tape is reset afterwards.
        """
        if loss.values.size != 1:
            raise ContractError(f"backward() needs a scalar loss, got shape {loss.shape}")
        if not any(op.output is loss for op in self.ops):
            raise ContractError("loss was not produced on this tape")

        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.values)}
        seen: dict[int, Tensor] = {}
        for op in reversed(self.ops):
            seen[id(op.output)] = op.output
            for t in op.inputs:
                if t.requires_grad:
                    seen[id(t)] = t
            g_out = grads.get(id(op.output))
            if g_out is None:
                continue
            for t, g in zip(op.inputs, op.backward(g_out)):
                if g is None or not t.requires_grad:
                    continue
                key = id(t)
                if key in grads:
                    grads[key] = grads[key] + g
                else:
                    grads[key] = g
        for key, t in seen.items():
            g = grads.get(key)
            t.grad = np.zeros_like(t.values) if g is None else g
        self.reset()


def backward(loss: Tensor, tape: Tape | None = None) -> None:
    """Run :meth:`Tape.backward` on ``tape`` or the innermost active tape."""
    if tape is None:
        stack = _stack()
        if not stack:
            raise ContractError("no active tape")
        tape = stack[-1]
    tape.backward(loss)


def _emit(arr: np.ndarray, inputs: tuple[Tensor, ...], fn: Backward) -> Tensor:
    out = Tensor._wrap(arr)
    stack = _stack()
    if stack and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        stack[-1].ops.append(_Op(inputs, out, fn))
    return out


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _same_shape(a: Tensor, b: Tensor, name: str) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{name}: shapes {a.shape} and {b.shape} differ")


# ---------------------------------------------------------------- linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.cols != b.rows:
        raise DimensionError(f"matmul: {a.shape} @ {b.shape}")
    av, bv = a.values, b.values

    def back(g):
        return (g @ bv.T if a.requires_grad else None,
                av.T @ g if b.requires_grad else None)

    return _emit(av @ bv, (a, b), back)


def transpose(a: Tensor) -> Tensor:
    return _emit(a.values.T.copy(), (a,), lambda g: (g.T,))


def take_rows(a: Tensor, idx) -> Tensor:
    """Gather rows by index; repeated indices are allowed."""
    idx = np.asarray(idx, dtype=np.intp)
    n = a.rows
    unique = len(np.unique(idx)) == len(idx)

    def back(g):
        out = np.zeros((n, g.shape[1]))
        if unique:
            out[idx] = g
        else:
            np.add.at(out, idx, g)
        return (out,)

    return _emit(a.values[idx], (a,), back)


def take_cols(a: Tensor, idx) -> Tensor:
    idx = np.asarray(idx, dtype=np.intp)
    m = a.cols
    unique = len(np.unique(idx)) == len(idx)

    def back(g):
        out = np.zeros((g.shape[0], m))
        if unique:
            out[:, idx] = g
        else:
            np.add.at(out.T, idx, g.T)
        return (out,)

    return _emit(a.values[:, idx], (a,), back)


def add_row(a: Tensor, bias: Tensor) -> Tensor:
    """Add a 1 x cols bias row to every row of ``a``."""
    if bias.rows != 1 or bias.cols != a.cols:
        raise DimensionError(f"add_row: bias {bias.shape} for {a.shape}")
    return _emit(a.values + bias.values, (a, bias),
                 lambda g: (g, g.sum(axis=0, keepdims=True)))


def row_normalize(a: Tensor) -> Tensor:
    """Divide each row by its sum. Row sums must be strictly positive."""
    s = a.values.sum(axis=1, keepdims=True)
    if np.any(s <= 0):
        raise DomainError("row_normalize: non-positive row sum")
    out = a.values / s

    def back(g):
        return ((g - (g * out).sum(axis=1, keepdims=True)) / s,)

    return _emit(out, (a,), back)


# ---------------------------------------------------------------- elementwise


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _same_shape(a, b, "add")
    return _emit(a.values + b.values, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _same_shape(a, b, "sub")
    return _emit(a.values - b.values, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Hadamard product."""
    a, b = _as_tensor(a), _as_tensor(b)
    _same_shape(a, b, "hadamard")
    av, bv = a.values, b.values
    return _emit(av * bv, (a, b), lambda g: (g * bv, g * av))


hadamard = mul


def scale(a: Tensor, c: float) -> Tensor:
    return _emit(a.values * c, (a,), lambda g: (g * c,))


def sigmoid(a: Tensor) -> Tensor:
    x = a.values
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return _emit(out, (a,), lambda g: (g * out * (1.0 - out),))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.values)
    return _emit(out, (a,), lambda g: (g * (1.0 - out * out),))


def relu(a: Tensor) -> Tensor:
    pos = a.values > 0
    return _emit(np.where(pos, a.values, 0.0), (a,), lambda g: (g * pos,))


def log(a: Tensor, floor: float | None = None) -> Tensor:
    """Natural log. With ``floor`` set, entries below it are raised to it first
    and receive zero gradient; without it, non-positive entries are an error."""
    x = a.values
    if floor is None:
        if np.any(x <= 0):
            raise DomainError("log of non-positive entry")
        return _emit(np.log(x), (a,), lambda g: (g / x,))
    keep = x > floor
    xf = np.where(keep, x, floor)
    return _emit(np.log(xf), (a,), lambda g: (np.where(keep, g / xf, 0.0),))


def clamp01(a: Tensor) -> Tensor:
    x = a.values
    inside = (x > 0) & (x < 1)
    return _emit(np.clip(x, 0.0, 1.0), (a,), lambda g: (g * inside,))


def maximum(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise max; ties send the gradient to ``a``."""
    _same_shape(a, b, "maximum")
    first = a.values >= b.values
    return _emit(np.where(first, a.values, b.values), (a, b),
                 lambda g: (g * first, g * ~first))


_ELEMENTWISE = {
    "add": add, "sub": sub, "hadamard": mul, "sigmoid": sigmoid,
    "tanh": tanh, "relu": relu, "log": log, "clamp01": clamp01,
}


def elementwise(op: str, *inputs: Tensor) -> Tensor:
    """Dispatch an elementwise op by name."""
    try:
        fn = _ELEMENTWISE[op]
    except KeyError:
        raise ContractError(f"unknown elementwise op {op!r}") from None
    return fn(*inputs)


# ---------------------------------------------------------------- reductions


def sum_all(a: Tensor) -> Tensor:
    shape = a.shape
    return _emit(np.array([[a.values.sum()]]), (a,),
                 lambda g: (np.full(shape, g[0, 0]),))


def mean_all(a: Tensor) -> Tensor:
    shape, n = a.shape, a.values.size
    return _emit(np.array([[a.values.mean()]]), (a,),
                 lambda g: (np.full(shape, g[0, 0] / n),))


def l1_norm(a: Tensor) -> Tensor:
    sign = np.sign(a.values)
    return _emit(np.array([[np.abs(a.values).sum()]]), (a,),
                 lambda g: (sign * g[0, 0],))


def max_rows(a: Tensor) -> Tensor:
    """Max over each row, giving a rows x 1 column."""
    x = a.values
    arg = np.argmax(x, axis=1)
    r = np.arange(x.shape[0])

    def back(g):
        out = np.zeros_like(x)
        out[r, arg] = g[:, 0]
        return (out,)

    return _emit(x[r, arg].reshape(-1, 1), (a,), back)


def max_cols(a: Tensor) -> Tensor:
    """Max down each column, giving a 1 x cols row."""
    x = a.values
    arg = np.argmax(x, axis=0)
    c = np.arange(x.shape[1])

    def back(g):
        out = np.zeros_like(x)
        out[arg, c] = g[0, :]
        return (out,)

    return _emit(x[arg, c].reshape(1, -1), (a,), back)


def bce_with_logits(z: Tensor, targets) -> Tensor:
    """Mean binary cross-entropy of ``sigmoid(z)`` against 0/1 targets."""
    y = np.asarray(targets, dtype=np.float64).reshape(z.shape)
    x = z.values
    # log(1 + e^x) - y*x, stable for large |x|
    loss = np.maximum(x, 0) - x * y + np.log1p(np.exp(-np.abs(x)))
    p = 1.0 / (1.0 + np.exp(-x))
    n = x.size
    return _emit(np.array([[loss.mean()]]), (z,),
                 lambda g: ((p - y) * (g[0, 0] / n),))


# ---------------------------------------------------------------- optimizers


class SGD:
    """Plain gradient descent ``p <- p - lr * g``."""

    kind = "sgd"

    def __init__(self, params: Iterable[Tensor], lr: float = 0.01):
        if lr <= 0:
            raise ContractError("learning rate must be positive")
        self.params = list(params)
        self.lr = lr
        self.step_count = 0

    def step(self) -> None:
        for p in self.params:
            if p.grad is None:
                raise ContractError("parameter has no gradient")
        for p in self.params:
            p.values -= self.lr * p.grad
        self.step_count += 1

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None


class Adam(SGD):
    """Bias-corrected Adam."""

    kind = "adam"

    def __init__(self, params: Iterable[Tensor], lr: float = 1e-3,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        super().__init__(params, lr)
        self.betas = betas
        self.eps = eps
        self.m = [np.zeros_like(p.values) for p in self.params]
        self.v = [np.zeros_like(p.values) for p in self.params]

    def step(self) -> None:
        for p in self.params:
            if p.grad is None:
                raise ContractError("parameter has no gradient")
        b1, b2 = self.betas
        self.step_count += 1
        c1 = 1.0 - b1 ** self.step_count
        c2 = 1.0 - b2 ** self.step_count
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p.values -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
