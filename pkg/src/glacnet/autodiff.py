"""Dense float64 tensors with define-by-run reverse-mode differentiation.

Every operation that touches a tensor with ``requires_grad`` records its
inputs and a closure computing the local vector-Jacobian product. Calling
:func:`backward` on a scalar walks that record in reverse topological order.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Operand shapes are incompatible."""


class ContractError(ValueError):
    """A precondition of an operation was violated."""


_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    """A float64 array that can sit on the gradient tape.

    ``grad`` stays ``None`` until a backward pass reaches the tensor; after
    that it accumulates across backward calls until :meth:`zero_grad`.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.array(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def __len__(self) -> int:
        return len(self.data)

    def __repr__(self) -> str:
        tag = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{tag})"

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    # operator sugar
    def __add__(self, other):
        return add(self, _lift(other))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, _lift(other))

    def __rsub__(self, other):
        return sub(_lift(other), self)

    def __mul__(self, other):
        return mul(self, _lift(other))

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, Tensor(-1.0))

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self):
        return tensor_sum(self)

    @property
    def T(self):
        return transpose(self)


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _record(out_data: np.ndarray, parents: tuple[Tensor, ...], backward_fn) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = out_data
    out.grad = None
    out.name = None
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward_fn
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


# ---------------------------------------------------------------------------
# elementwise
# ---------------------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "add")

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _record(a.data + b.data, (a, b), bw)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "sub")

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _record(a.data - b.data, (a, b), bw)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "mul")

    def bw(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _record(a.data * b.data, (a, b), bw)


def sigmoid(x: Tensor) -> Tensor:
    # split by sign so exp never overflows
    z = x.data
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return _record(out, (x,), lambda g: (g * out * (1.0 - out),))


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)
    return _record(out, (x,), lambda g: (g * (1.0 - out * out),))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _record(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


_ELEMENTWISE = {"sigmoid": sigmoid, "tanh": tanh, "relu": relu, "add": add, "mul": mul}


def elementwise(kind: str, *operands: Tensor) -> Tensor:
    """Dispatch by name; binary kinds require identical operand shapes."""
    if kind not in _ELEMENTWISE:
        raise ValueError(f"unknown elementwise kind {kind!r}")
    if kind in ("add", "mul"):
        a, b = operands
        if a.shape != b.shape:
            raise ShapeError(f"{kind}: shapes {a.shape} and {b.shape} differ")
        return _ELEMENTWISE[kind](a, b)
    (x,) = operands
    return _ELEMENTWISE[kind](x)


# ---------------------------------------------------------------------------
# linear algebra and structure
# ---------------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")

    def bw(g):
        return g @ b.data.T, a.data.T @ g

    return _record(a.data @ b.data, (a, b), bw)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight.T + bias`` with ``weight`` stored as (out, in)."""
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise ShapeError(f"linear: input {x.shape} does not fit weight {weight.shape}")
    out = x.data @ weight.data.T
    if bias is None:
        return _record(out, (x, weight), lambda g: (g @ weight.data, g.T @ x.data))
    if bias.shape != (weight.shape[0],):
        raise ShapeError(f"linear: bias {bias.shape} does not fit weight {weight.shape}")
    out = out + bias.data
    return _record(
        out, (x, weight, bias), lambda g: (g @ weight.data, g.T @ x.data, g.sum(axis=0))
    )


def transpose(x: Tensor) -> Tensor:
    return _record(x.data.T, (x,), lambda g: (g.T,))


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    return _record(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def getitem(x: Tensor, index) -> Tensor:
    def bw(g):
        full = np.zeros_like(x.data)
        np.add.at(full, index, g)
        return (full,)

    return _record(x.data[index], (x,), bw)


def concat(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not parts:
        raise ContractError("concat needs at least one part")
    ref = parts[0].shape
    ax = axis % len(ref)
    for p in parts:
        if p.ndim != len(ref) or any(
            p.shape[i] != ref[i] for i in range(len(ref)) if i != ax
        ):
            raise ShapeError(
                f"concat: shapes {[q.shape for q in parts]} disagree off axis {axis}"
            )
    if len(parts) == 1:
        return parts[0]
    sizes = [p.shape[ax] for p in parts]
    bounds = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.split(g, bounds, axis=ax))

    return _record(np.concatenate([p.data for p in parts], axis=ax), tuple(parts), bw)


def tensor_sum(x: Tensor) -> Tensor:
    return _record(np.array(x.data.sum()), (x,), lambda g: (np.broadcast_to(g, x.shape),))


def embedding(table: Tensor, ids) -> Tensor:
    """Gather rows of ``table``; out-of-range ids raise ``IndexError``."""
    ids = np.asarray(ids, dtype=np.int64)
    n = table.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= n):
        raise IndexError(f"token id out of range [0, {n}): {ids.tolist()}")

    def bw(g):
        full = np.zeros_like(table.data)
        np.add.at(full, ids, g)
        return (full,)

    return _record(table.data[ids], (table,), bw)


def blend(mask: np.ndarray, new: Tensor, old: Tensor) -> Tensor:
    """Rowwise select: ``new`` where ``mask`` is true, else ``old``."""
    m = np.asarray(mask, dtype=bool).reshape(-1, *([1] * (new.ndim - 1)))
    out = np.where(m, new.data, old.data)
    return _record(out, (new, old), lambda g: (np.where(m, g, 0.0), np.where(m, 0.0, g)))


# ---------------------------------------------------------------------------
# regularizers and normalization
# ---------------------------------------------------------------------------


def dropout(x: Tensor, rate: float, training: bool, rng: np.random.Generator | None) -> Tensor:
    """Inverted dropout; identity when not training or ``rate == 0``."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ContractError("training-mode dropout needs an rng")
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return _record(x.data * keep, (x,), lambda g: (g * keep,))


class RunningStats:
    """Per-feature running mean and variance for batch normalization."""

    def __init__(self, dim: int, momentum: float = 0.1):
        self.mean = np.zeros(dim)
        self.var = np.ones(dim)
        self.momentum = momentum

    def update(self, mean: np.ndarray, var_unbiased: np.ndarray) -> None:
        m = self.momentum
        self.mean = (1 - m) * self.mean + m * mean
        self.var = (1 - m) * self.var + m * var_unbiased


BN_EPS = 1e-5


def batch_norm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    stats: RunningStats,
    training: bool,
    eps: float = BN_EPS,
) -> Tensor:
    """Normalize (batch, d) input per feature.

    Training mode uses the biased batch variance for normalization and
    feeds the unbiased one into the running estimate.
    """
    if x.ndim != 2:
        raise ShapeError(f"batch_norm expects (batch, d), got {x.shape}")
    n = x.shape[0]
    if not training:
        inv = 1.0 / np.sqrt(stats.var + eps)
        xhat = (x.data - stats.mean) * inv

        def bw_eval(g):
            return g * gamma.data * inv, (g * xhat).sum(axis=0), g.sum(axis=0)

        return _record(xhat * gamma.data + beta.data, (x, gamma, beta), bw_eval)

    if n < 2:
        raise ContractError("training-mode batch_norm needs a batch of at least 2")
    mean = x.data.mean(axis=0)
    centered = x.data - mean
    var = (centered**2).mean(axis=0)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv
    stats.update(mean, var * n / (n - 1))

    def bw(g):
        dxhat = g * gamma.data
        dx = inv / n * (n * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0))
        return dx, (g * xhat).sum(axis=0), g.sum(axis=0)

    return _record(xhat * gamma.data + beta.data, (x, gamma, beta), bw)


# ---------------------------------------------------------------------------
# loss
# ---------------------------------------------------------------------------


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


def softmax_cross_entropy(
    logits: Tensor,
    targets,
    weights: np.ndarray | None = None,
    reduction: str = "mean",
) -> Tensor:
    """Negative log-likelihood of ``targets`` under row-wise softmax.

    ``weights`` scales each row's term (use 0/1 to mask padding).
    ``reduction`` is ``"mean"`` over rows or ``"sum"``.
    """
    if logits.ndim != 2:
        raise ShapeError(f"softmax_cross_entropy expects (batch, V), got {logits.shape}")
    b, v = logits.shape
    targets = np.asarray(targets, dtype=np.int64).reshape(-1)
    if targets.shape[0] != b:
        raise ShapeError(f"{b} rows of logits but {targets.shape[0]} targets")
    if targets.size and (targets.min() < 0 or targets.max() >= v):
        raise IndexError(f"target id out of range [0, {v}): {targets.tolist()}")
    w = np.ones(b) if weights is None else np.asarray(weights, dtype=np.float64)
    if reduction == "mean":
        w = w / b
    elif reduction != "sum":
        raise ValueError(f"unknown reduction {reduction!r}")
    logp = log_softmax(logits.data)
    rows = np.arange(b)
    nll = -logp[rows, targets]
    loss = np.array((w * nll).sum())

    def bw(g):
        grad = np.exp(logp)
        grad[rows, targets] -= 1.0
        return (g * w[:, None] * grad,)

    return _record(loss, (logits,), bw)


# ---------------------------------------------------------------------------
# backward
# ---------------------------------------------------------------------------


def build_tape(root: Tensor) -> list[Tensor]:
    """Recorded nodes reachable from ``root`` in execution (topological) order."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(t) into ``t.grad`` for every recorded ancestor."""
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ContractError("loss is not on the gradient tape")
    tape = build_tape(loss)
    pending: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape):
        g = pending.pop(id(node), None)
        if g is None:
            g = np.zeros_like(node.data)
        node.grad = g if node.grad is None else node.grad + g
        if node._backward is None:
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            pending[key] = pg if key not in pending else pending[key] + pg


def zero_grads(tensors: Iterable[Tensor]) -> None:
    for t in tensors:
        t.grad = None
