"""Dense float64 matrices with a recorded tape for reverse-mode gradients.

Every value is a 2-D ``numpy`` array wrapped in :class:`Tensor`. Operations
on tensors that belong to a :class:`Tape` are recorded eagerly together with
the forward values their backward rules need; :func:`backward` then walks the
tape in reverse and accumulates gradients into every tracked leaf.

>>> tape = Tape()
>>> w = tape.leaf([[1.0, 2.0], [3.0, 4.0]])
>>> grads = backward(tape, sum_all(w * w))
>>> grads[w]
array([[2., 4.],
       [6., 8.]])
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ShapeError

ACTIVATIONS = ("sigmoid", "relu", "identity")


def _as_matrix(value) -> np.ndarray:
    arr = np.array(value, dtype=np.float64, copy=True)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    elif arr.ndim != 2:
        raise ShapeError(f"expected a matrix, got {arr.ndim}-d data")
    arr.setflags(write=False)
    return arr


class Tensor:
    """Immutable dense matrix, optionally bound to a tape."""

    __slots__ = ("value", "tape", "handle")

    def __init__(self, value, tape: Tape | None = None, handle: int | None = None):
        self.value = value if _is_frozen_matrix(value) else _as_matrix(value)
        self.tape = tape
        self.handle = handle

    @property
    def rows(self) -> int:
        return self.value.shape[0]

    @property
    def cols(self) -> int:
        return self.value.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    @property
    def tracked(self) -> bool:
        return self.tape is not None

    def numpy(self) -> np.ndarray:
        return self.value

    def item(self) -> float:
        if self.shape != (1, 1):
            raise ShapeError(f"item() needs a 1x1 tensor, got {self.shape}")
        return float(self.value[0, 0])

    def __repr__(self) -> str:
        tag = f", handle={self.handle}" if self.tracked else ""
        return f"Tensor({self.rows}x{self.cols}{tag})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    @property
    def T(self):
        return transpose(self)


def _is_frozen_matrix(value) -> bool:
    return (
        isinstance(value, np.ndarray)
        and value.ndim == 2
        and value.dtype == np.float64
        and not value.flags.writeable
    )


@dataclass
class TapeNode:
    op: str
    inputs: tuple[int, ...]
    shape: tuple[int, int]
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None


@dataclass
class Tape:
    """Append-only record of operations, in topological order."""

    nodes: list[TapeNode] = field(default_factory=list)
    gradients: dict[int, np.ndarray] = field(default_factory=dict)

    def leaf(self, value) -> Tensor:
        arr = _as_matrix(value)
        self.nodes.append(TapeNode("leaf", (), arr.shape))
        return Tensor(arr, self, len(self.nodes) - 1)

    def _record(self, op, inputs, value, rule) -> Tensor:
        arr = _freeze(value)
        handles = tuple(t.handle if t.tape is self else -1 for t in inputs)
        self.nodes.append(TapeNode(op, handles, arr.shape, rule))
        return Tensor(arr, self, len(self.nodes) - 1)


def _freeze(value: np.ndarray) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim != 2:
        arr = arr.reshape(1, -1) if arr.ndim == 1 else arr.reshape(1, 1)
    if arr.flags.writeable:
        arr = arr.copy() if not arr.flags.owndata else arr
        arr.setflags(write=False)
    return arr


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _common_tape(tensors: Iterable[Tensor]) -> Tape | None:
    tape = None
    for t in tensors:
        if t.tape is None:
            continue
        if tape is None:
            tape = t.tape
        elif t.tape is not tape:
            raise ValueError("operands belong to different tapes")
    return tape


def _emit(op: str, inputs: Sequence[Tensor], value: np.ndarray, rule) -> Tensor:
    tape = _common_tape(inputs)
    if tape is None:
        return Tensor(_freeze(value))
    return tape._record(op, inputs, value, rule)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    out = grad
    for axis, size in enumerate(shape):
        if size == 1 and out.shape[axis] != 1:
            out = out.sum(axis=axis, keepdims=True)
    return out


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    for x, y in zip(a.shape, b.shape):
        if x != y and x != 1 and y != 1:
            raise ShapeError(f"{op}: cannot broadcast {a.shape} with {b.shape}")


# ---------------------------------------------------------------------------
# elementwise and linear ops
# ---------------------------------------------------------------------------

def matmul(a, b) -> Tensor:
    """Matrix product ``a @ b``."""
    a, b = as_tensor(a), as_tensor(b)
    if a.cols != b.rows:
        raise ShapeError(f"matmul: inner dimensions differ ({a.shape} @ {b.shape})")
    av, bv = a.value, b.value

    def rule(g):
        return g @ bv.T, av.T @ g

    return _emit("matmul", (a, b), av @ bv, rule)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")
    sa, sb = a.shape, b.shape
    return _emit("add", (a, b), a.value + b.value,
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")
    sa, sb = a.shape, b.shape
    return _emit("sub", (a, b), a.value - b.value,
                 lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)))


def mul(a, b) -> Tensor:
    """Elementwise (Hadamard) product with row/column broadcasting."""
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")
    av, bv = a.value, b.value
    return _emit("mul", (a, b), av * bv,
                 lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)))


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)
    c = float(c)
    return _emit("scale", (a,), a.value * c, lambda g: (g * c,))


def power(a, p: float) -> Tensor:
    """Elementwise ``a ** p``; callers keep ``a`` positive for fractional ``p``."""
    a = as_tensor(a)
    av = a.value
    out = av ** p
    return _emit("power", (a,), out, lambda g: (g * p * av ** (p - 1.0),))


def transpose(a) -> Tensor:
    a = as_tensor(a)
    return _emit("transpose", (a,), a.value.T, lambda g: (g.T,))


def sigmoid_values(x: np.ndarray) -> np.ndarray:
    return np.exp(-np.logaddexp(0.0, -x))


def activation(x, kind: str) -> Tensor:
    """Apply ``sigmoid``, ``relu`` or ``identity`` elementwise.

    The relu derivative at exactly zero is taken as 0.
    """
    x = as_tensor(x)
    if kind == "identity":
        return x
    if kind == "sigmoid":
        s = sigmoid_values(x.value)
        return _emit("sigmoid", (x,), s, lambda g: (g * s * (1.0 - s),))
    if kind == "relu":
        mask = x.value > 0
        return _emit("relu", (x,), np.where(mask, x.value, 0.0), lambda g: (g * mask,))
    raise ValueError(f"unknown activation {kind!r}; expected one of {ACTIVATIONS}")


# ---------------------------------------------------------------------------
# structural ops
# ---------------------------------------------------------------------------

def concat_rows(parts: Sequence) -> Tensor:
    """Stack matrices vertically, preserving order."""
    parts = [as_tensor(p) for p in parts]
    if not parts:
        raise ShapeError("concat_rows: no parts")
    cols = parts[0].cols
    for p in parts[1:]:
        if p.cols != cols:
            raise ShapeError(f"concat_rows: column counts differ ({cols} vs {p.cols})")
    if len(parts) == 1:
        return parts[0]
    bounds = np.cumsum([0] + [p.rows for p in parts])

    def rule(g):
        return tuple(g[bounds[i]:bounds[i + 1]] for i in range(len(parts)))

    return _emit("concat_rows", parts, np.vstack([p.value for p in parts]), rule)


def mean_rows(x) -> Tensor:
    """Column-wise mean, returning a 1 x n row."""
    x = as_tensor(x)
    m = x.rows
    if m == 0:
        raise ShapeError("mean_rows: empty input")
    return _emit("mean_rows", (x,), x.value.mean(axis=0, keepdims=True),
                 lambda g: (np.broadcast_to(g / m, x.shape),))


def sum_all(x) -> Tensor:
    x = as_tensor(x)
    shape = x.shape
    return _emit("sum_all", (x,), np.array([[x.value.sum()]]),
                 lambda g: (np.full(shape, g[0, 0]),))


def row_sums(x) -> Tensor:
    """Per-row sums as an m x 1 column."""
    x = as_tensor(x)
    shape = x.shape
    return _emit("row_sums", (x,), x.value.sum(axis=1, keepdims=True),
                 lambda g: (np.broadcast_to(g, shape),))


def gather_rows(x, index) -> Tensor:
    """Rows ``x[index]``; repeated indices accumulate in backward."""
    x = as_tensor(x)
    idx = np.asarray(index, dtype=np.intp).reshape(-1)
    shape = x.shape

    def rule(g):
        out = np.zeros(shape)
        np.add.at(out, idx, g)
        return (out,)

    return _emit("gather_rows", (x,), x.value[idx], rule)


def row_rearrange_Q(zw, j: int, k: int) -> Tensor:
    """Matrix whose row ``j`` is ``zw[k]``, row ``k`` is ``zw[j]``, all else 0.

    Equals ``D @ zw`` where ``D`` holds ones at ``(j, k)`` and ``(k, j)``.
    """
    zw = as_tensor(zw)
    n = zw.rows
    if j == k:
        raise IndexError(f"row_rearrange_Q needs distinct rows, got j=k={j}")
    if not (0 <= j < n and 0 <= k < n):
        raise IndexError(f"rows ({j}, {k}) out of range for {n} rows")
    out = np.zeros(zw.shape)
    out[j] = zw.value[k]
    out[k] = zw.value[j]

    def rule(g):
        back = np.zeros(zw.shape)
        back[k] = g[j]
        back[j] = g[k]
        return (back,)

    return _emit("row_rearrange_Q", (zw,), out, rule)


def softmax_values(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits, targets, weights=None) -> Tensor:
    """Weighted mean over rows of ``-sum_c t_c log softmax(logits)_c``.

    ``targets`` may be one-hot or any nonnegative row distribution. Rows with
    zero weight do not contribute; all-zero weights give a zero loss.
    """
    logits = as_tensor(logits)
    t = np.asarray(targets, dtype=np.float64)
    if t.shape != logits.shape:
        raise ShapeError(f"targets {t.shape} do not match logits {logits.shape}")
    w = np.ones(logits.rows) if weights is None else np.asarray(weights, dtype=np.float64).reshape(-1)
    if w.shape[0] != logits.rows:
        raise ShapeError("one weight per row required")
    total = w.sum()
    if total <= 0:
        return _emit("softmax_ce", (logits,), np.zeros((1, 1)),
                     lambda g: (np.zeros(logits.shape),))
    z = logits.value
    shifted = z - z.max(axis=1, keepdims=True)
    log_p = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    per_row = -(t * log_p).sum(axis=1)
    loss = float((w * per_row).sum() / total)
    p = np.exp(log_p)

    def rule(g):
        coef = (w / total)[:, None] * g[0, 0]
        return (coef * (p * t.sum(axis=1, keepdims=True) - t),)

    return _emit("softmax_ce", (logits,), np.array([[loss]]), rule)


# ---------------------------------------------------------------------------
# reverse pass
# ---------------------------------------------------------------------------

class GradientMap(dict):
    """``handle -> gradient`` mapping that also accepts tensors as keys."""

    def __getitem__(self, key):
        if isinstance(key, Tensor):
            key = key.handle
        return super().__getitem__(key)

    def __contains__(self, key):
        if isinstance(key, Tensor):
            key = key.handle
        return super().__contains__(key)


def backward(tape: Tape, loss: Tensor) -> GradientMap:
    """Accumulate d(loss)/d(leaf) for every leaf the loss depends on.

    Leaves the loss does not reach still receive a zero gradient, so every
    tracked parameter has a gradient of its own shape afterwards.
    """
    if loss.tape is not tape:
        raise ValueError("loss is not recorded on this tape")
    if loss.shape != (1, 1):
        raise ShapeError(f"backward needs a scalar (1x1) loss, got {loss.shape}")
    grads: dict[int, np.ndarray] = {loss.handle: np.ones((1, 1))}
    for idx in range(loss.handle, -1, -1):
        node = tape.nodes[idx]
        g = grads.get(idx)
        if g is None or node.backward is None:
            continue
        for h, gi in zip(node.inputs, node.backward(g)):
            if h < 0 or gi is None:
                continue
            if h in grads:
                grads[h] = grads[h] + gi
            else:
                grads[h] = np.array(gi, dtype=np.float64)
    out = GradientMap()
    for idx, node in enumerate(tape.nodes):
        if node.op == "leaf":
            out[idx] = grads.get(idx, np.zeros(node.shape))
    tape.gradients = dict(out)
    return out


def finite_diff_check(f: Callable[[Tensor], Tensor], x, step: float = 1e-5) -> float:
    """Largest relative gap between tape gradients and central differences.

    ``f`` maps a tensor to a 1x1 tensor and must also work on untracked
    input. The error per entry is ``|analytic - numeric| / (|numeric| + 1e-12)``.
    """
    x0 = np.array(as_tensor(x).value, dtype=np.float64)
    tape = Tape()
    leaf = tape.leaf(x0)
    analytic = backward(tape, f(leaf))[leaf]
    worst = 0.0
    for pos in np.ndindex(x0.shape):
        hi, lo = x0.copy(), x0.copy()
        hi[pos] += step
        lo[pos] -= step
        numeric = (f(Tensor(hi)).item() - f(Tensor(lo)).item()) / (2.0 * step)
        err = abs(analytic[pos] - numeric) / (abs(numeric) + 1e-12)
        worst = max(worst, err)
    return worst
