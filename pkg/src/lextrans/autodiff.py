"""Reverse-mode automatic differentiation over numpy arrays.

A minimal tape-based engine sized for LSTM encoder-decoders: dense linear
maps, elementwise nonlinearities, softmax, concatenation, embedding lookup,
and a fused LSTM gate primitive. Ops record nodes on the active tape (a
thread-local stack, so independent models may run on separate threads);
with no active tape they are plain numpy computations.

Gradients accumulate into `Tensor.grad`. The fused kernels (LSTM gates,
row softmax) dispatch through `lextrans.kernels`, which selects a compiled
extension when available and a numpy fallback otherwise.
"""

from __future__ import annotations

import threading
from typing import Callable, Iterable, Sequence

import numpy as np

from . import kernels


class ShapeError(ValueError):
    """Input shapes do not conform to a primitive's signature."""


class Tensor:
    """An n-dimensional array with an optional same-shape gradient buffer."""

    __slots__ = ("data", "grad", "trainable", "name")

    def __init__(self, data, trainable: bool = False, name: str | None = None):
        arr = np.asarray(data)
        self.data = arr if arr.dtype.kind == "f" else arr.astype(np.float64)
        self.grad: np.ndarray | None = None
        self.trainable = trainable
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{tag})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


class Node:
    """One recorded primitive: parent/output references plus its adjoint."""

    __slots__ = ("op", "inputs", "outputs", "backward")

    def __init__(self, op: str, inputs: tuple, outputs: tuple, backward: Callable):
        self.op = op
        self.inputs = inputs
        self.outputs = outputs
        self.backward = backward


_STATE = threading.local()


def _active_tape() -> "Tape | None":
    stack = getattr(_STATE, "tapes", None)
    return stack[-1] if stack else None


class Tape:
    """Ordered record of primitive operations.

    Creation order is a topological order of the graph, so replaying
    adjoints in reverse yields chain-rule gradients.
    """

    def __init__(self):
        self.nodes: list[Node] = []

    def __enter__(self) -> "Tape":
        stack = getattr(_STATE, "tapes", None)
        if stack is None:
            stack = _STATE.tapes = []
        stack.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _STATE.tapes.pop()

    def record(self, node: Node) -> None:
        self.nodes.append(node)

    def backward(self, loss: Tensor, trainable: Iterable[Tensor] = ()) -> None:
        """Populate gradients of everything `loss` depends on.

        Tensors in `trainable` that the loss does not reach get zero
        gradients rather than None.
        """
        if loss.data.size != 1:
            raise ShapeError(f"backward: loss must be scalar, got shape {loss.data.shape}")
        loss.grad = np.ones_like(loss.data) if loss.grad is None else loss.grad + 1.0
        for node in reversed(self.nodes):
            outputs = node.outputs
            if len(outputs) == 1:  # fast path: almost every primitive
                g0 = outputs[0].grad
                if g0 is None:
                    continue
                out_grads = (g0,)
            else:
                live = False
                for o in outputs:
                    if o.grad is not None:
                        live = True
                        break
                if not live:
                    continue
                out_grads = [
                    o.grad if o.grad is not None else np.zeros_like(o.data)
                    for o in outputs
                ]
            in_grads = node.backward(out_grads)
            for t, g in zip(node.inputs, in_grads):
                if g is None:
                    continue
                # first contribution is stored by reference; accumulation
                # always allocates, so shared references are never mutated
                t.grad = g if t.grad is None else t.grad + g
        for t in trainable:
            if t.grad is None:
                t.grad = np.zeros_like(t.data)


def _record(op: str, inputs: tuple, outputs: tuple, backward: Callable) -> None:
    tape = _active_tape()
    if tape is not None:
        tape.record(Node(op, inputs, outputs, backward))


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum `g` down to `shape`, undoing numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# --- elementwise and linear primitives --------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data + b.data)
    _record("add", (a, b), (out,), lambda gs: (
        _unbroadcast(gs[0], a.data.shape),
        _unbroadcast(gs[0], b.data.shape),
    ))
    return out


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data - b.data)
    _record("sub", (a, b), (out,), lambda gs: (
        _unbroadcast(gs[0], a.data.shape),
        _unbroadcast(-gs[0], b.data.shape),
    ))
    return out


def neg(a) -> Tensor:
    a = as_tensor(a)
    out = Tensor(-a.data)
    _record("neg", (a,), (out,), lambda gs: (-gs[0],))
    return out


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data * b.data)
    _record("mul", (a, b), (out,), lambda gs: (
        _unbroadcast(gs[0] * b.data, a.data.shape),
        _unbroadcast(gs[0] * a.data, b.data.shape),
    ))
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.data.shape} x {b.data.shape}")
    out = Tensor(a.data @ b.data)
    _record("matmul", (a, b), (out,), lambda gs: (
        gs[0] @ b.data.T,
        a.data.T @ gs[0],
    ))
    return out


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    a = as_tensor(a)
    out = Tensor(a.data.reshape(shape))
    _record("reshape", (a,), (out,), lambda gs: (gs[0].reshape(a.data.shape),))
    return out


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis))
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum(sizes)[:-1]

    def bwd(gs):
        return tuple(np.split(gs[0], offsets, axis=axis))

    _record("concat", tuple(tensors), (out,), bwd)
    return out


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = Tensor(np.stack([t.data for t in tensors], axis=axis))

    def bwd(gs):
        gm = np.moveaxis(gs[0], axis, 0)
        return tuple(gm[k] for k in range(len(tensors)))

    _record("stack", tuple(tensors), (out,), bwd)
    return out


def unstack(a: Tensor, axis: int = 0) -> tuple[Tensor, ...]:
    """Split `a` into views along `axis`; the inverse of `stack`.

    One recorded node for the whole split, so the backward pass restacks
    the output gradients in a single allocation.
    """
    a = as_tensor(a)
    if a.data.ndim < 1 or not -a.data.ndim <= axis < a.data.ndim:
        raise ShapeError(f"unstack: axis {axis} out of range for shape {a.data.shape}")
    moved = np.moveaxis(a.data, axis, 0)
    outs = tuple(Tensor(moved[k]) for k in range(moved.shape[0]))
    _record("unstack", (a,), outs, lambda gs: (np.stack(gs, axis=axis),))
    return outs


def _expit(x: np.ndarray) -> np.ndarray:
    # branch-free stable sigmoid: z = exp(-|x|) never overflows, and the
    # two select arms match the sign-split formulas bit for bit
    z = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z))


def sigmoid(a: Tensor) -> Tensor:
    a = as_tensor(a)
    y = _expit(a.data)
    out = Tensor(y)
    _record("sigmoid", (a,), (out,), lambda gs: (gs[0] * y * (1.0 - y),))
    return out


def tanh(a: Tensor) -> Tensor:
    a = as_tensor(a)
    y = np.tanh(a.data)
    out = Tensor(y)
    _record("tanh", (a,), (out,), lambda gs: (gs[0] * (1.0 - y * y),))
    return out


def log(a: Tensor) -> Tensor:
    a = as_tensor(a)
    out = Tensor(np.log(a.data))
    _record("log", (a,), (out,), lambda gs: (gs[0] / a.data,))
    return out


def softmax(a: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """Softmax over the last axis; `mask` marks valid positions (True=keep).

    Masked positions receive zero probability and zero gradient.
    """
    a = as_tensor(a)
    x = a.data
    if mask is not None:
        if mask.shape != x.shape:
            raise ShapeError(f"softmax: mask shape {mask.shape} != input shape {x.shape}")
        if not mask.any(axis=-1).all():
            raise ShapeError("softmax: some row is fully masked")
        x = np.where(mask, x, -np.inf)
    flat = np.ascontiguousarray(x.reshape(-1, x.shape[-1]))
    y = kernels.softmax_rows(flat).reshape(a.data.shape)
    out = Tensor(y)

    def bwd(gs):
        g2 = np.ascontiguousarray(gs[0].reshape(-1, gs[0].shape[-1]))
        y2 = np.ascontiguousarray(y.reshape(-1, y.shape[-1]))
        return (kernels.softmax_rows_backward(y2, g2).reshape(a.data.shape),)

    _record("softmax", (a,), (out,), bwd)
    return out


def sum(a: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = Tensor(np.sum(a.data, axis=axis, keepdims=keepdims))

    def bwd(gs):
        g = gs[0]
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.data.shape).copy(),)

    _record("sum", (a,), (out,), bwd)
    return out


# --- lookup / gather primitives ----------------------------------------------

def lookup(table: Tensor, ids: np.ndarray) -> Tensor:
    """Row lookup (embedding / per-token lexicon rows): out[..., :] = table[ids]."""
    table = as_tensor(table)
    ids = np.asarray(ids)
    if table.data.ndim != 2:
        raise ShapeError(f"lookup: table must be 2-d, got {table.data.shape}")
    out = Tensor(table.data[ids])

    def bwd(gs):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids.reshape(-1), gs[0].reshape(-1, table.data.shape[1]))
        return (gt,)

    _record("lookup", (table,), (out,), bwd)
    return out


def gather_index(a: Tensor, idx: np.ndarray) -> Tensor:
    """Per-row element pick: out[b] = a[b, idx[b]]."""
    a = as_tensor(a)
    idx = np.asarray(idx)
    if a.data.ndim != 2 or idx.shape != (a.data.shape[0],):
        raise ShapeError(f"gather_index: got a={a.data.shape}, idx={idx.shape}")
    rows = np.arange(a.data.shape[0])
    out = Tensor(a.data[rows, idx])

    def bwd(gs):
        ga = np.zeros_like(a.data)
        ga[rows, idx] = gs[0]
        return (ga,)

    _record("gather_index", (a,), (out,), bwd)
    return out


def batched_dot(a: Tensor, b: Tensor) -> Tensor:
    """out[b, t] = a[b] . b[b, t]; a is (B, D), b is (B, T, D)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 3 or a.data.shape != (b.data.shape[0], b.data.shape[2]):
        raise ShapeError(f"batched_dot: got {a.data.shape} and {b.data.shape}")
    out = Tensor(np.einsum("bd,btd->bt", a.data, b.data))
    _record("batched_dot", (a, b), (out,), lambda gs: (
        np.einsum("bt,btd->bd", gs[0], b.data),
        np.einsum("bt,bd->btd", gs[0], a.data),
    ))
    return out


def weighted_sum(w: Tensor, v: Tensor) -> Tensor:
    """out[b] = sum_t w[b, t] * v[b, t]; w is (B, T), v is (B, T, D)."""
    w, v = as_tensor(w), as_tensor(v)
    if w.data.ndim != 2 or v.data.ndim != 3 or w.data.shape != v.data.shape[:2]:
        raise ShapeError(f"weighted_sum: got {w.data.shape} and {v.data.shape}")
    out = Tensor(np.einsum("bt,btd->bd", w.data, v.data))
    _record("weighted_sum", (w, v), (out,), lambda gs: (
        np.einsum("bd,btd->bt", gs[0], v.data),
        np.einsum("bt,bd->btd", w.data, gs[0]),
    ))
    return out


def batched_matmul(a: Tensor, b: Tensor) -> Tensor:
    """out[b] = a[b] @ b[b]; a is (B, I, K), b is (B, K, D)."""
    a, b = as_tensor(a), as_tensor(b)
    if (
        a.data.ndim != 3
        or b.data.ndim != 3
        or a.data.shape[0] != b.data.shape[0]
        or a.data.shape[2] != b.data.shape[1]
    ):
        raise ShapeError(f"batched_matmul: got {a.data.shape} and {b.data.shape}")
    out = Tensor(a.data @ b.data)
    _record("batched_matmul", (a, b), (out,), lambda gs: (
        gs[0] @ b.data.transpose(0, 2, 1),
        a.data.transpose(0, 2, 1) @ gs[0],
    ))
    return out


def batched_matmul_t(a: Tensor, b: Tensor) -> Tensor:
    """out[b] = a[b] @ b[b].T; a is (B, I, D), b is (B, J, D)."""
    a, b = as_tensor(a), as_tensor(b)
    if (
        a.data.ndim != 3
        or b.data.ndim != 3
        or a.data.shape[0] != b.data.shape[0]
        or a.data.shape[2] != b.data.shape[2]
    ):
        raise ShapeError(f"batched_matmul_t: got {a.data.shape} and {b.data.shape}")
    out = Tensor(a.data @ b.data.transpose(0, 2, 1))
    _record("batched_matmul_t", (a, b), (out,), lambda gs: (
        gs[0] @ b.data,
        gs[0].transpose(0, 2, 1) @ a.data,
    ))
    return out


# --- fused LSTM cell ---------------------------------------------------------

def lstm_gates(pre: Tensor, c_prev: Tensor) -> tuple[Tensor, Tensor]:
    """Elementwise LSTM cell update from gate preactivations.

    `pre` is (B, 4H) laid out as [input, forget, cell, output] blocks;
    returns (h, c). The matmuls producing `pre` stay outside so BLAS does
    them; this fused primitive is the kernel-dispatched hot path.
    """
    pre, c_prev = as_tensor(pre), as_tensor(c_prev)
    if pre.data.ndim != 2 or pre.data.shape[1] % 4 != 0:
        raise ShapeError(f"lstm_gates: preactivations must be (B, 4H), got {pre.data.shape}")
    hidden = pre.data.shape[1] // 4
    if c_prev.data.shape != (pre.data.shape[0], hidden):
        raise ShapeError(
            f"lstm_gates: cell state {c_prev.data.shape} does not match preactivations {pre.data.shape}"
        )
    h_data, c_data, gates = kernels.lstm_gates_forward(
        np.ascontiguousarray(pre.data), np.ascontiguousarray(c_prev.data)
    )
    h, c = Tensor(h_data), Tensor(c_data)

    def bwd(gs):
        dh, dc = gs
        dpre, dc_prev = kernels.lstm_gates_backward(
            gates, np.ascontiguousarray(c_prev.data), c_data,
            np.ascontiguousarray(dh), np.ascontiguousarray(dc),
        )
        return dpre, dc_prev

    _record("lstm_gates", (pre, c_prev), (h, c), bwd)
    return h, c


def lstm_sequence(pre_x: Tensor, h0: Tensor, c0: Tensor, U: Tensor) -> tuple[Tensor, Tensor]:
    """One LSTM layer unrolled over time as a single tape node.

    `pre_x` is (B, T, 4H) holding the input projections plus bias for every
    position; the recurrent term h @ U is applied inside. Returns the
    stacked hidden and cell sequences, each (B, T, H).

    Each position's update matches `lstm_gates(add(pre_x[:, t], matmul(h, U)), c)`
    bit for bit; fusing the loop lets the backward pass accumulate the
    gradient of U with one stacked matmul instead of one per position.
    """
    pre_x, h0, c0, U = as_tensor(pre_x), as_tensor(h0), as_tensor(c0), as_tensor(U)
    if pre_x.data.ndim != 3 or pre_x.data.shape[2] % 4 != 0:
        raise ShapeError(f"lstm_sequence: preactivations must be (B, T, 4H), got {pre_x.data.shape}")
    b, t, h4 = pre_x.data.shape
    hidden = h4 // 4
    if h0.data.shape != (b, hidden) or c0.data.shape != (b, hidden):
        raise ShapeError(
            f"lstm_sequence: initial states must be ({b}, {hidden}), "
            f"got {h0.data.shape} and {c0.data.shape}"
        )
    if U.data.shape != (hidden, h4):
        raise ShapeError(f"lstm_sequence: U must be ({hidden}, {h4}), got {U.data.shape}")
    h_prev = [np.ascontiguousarray(h0.data)]
    c_list = [np.ascontiguousarray(c0.data)]
    h_list, gates_list = [], []
    for k in range(t):
        pre = pre_x.data[:, k] + h_prev[-1] @ U.data
        h_k, c_k, gates = kernels.lstm_gates_forward(pre, c_list[-1])
        h_prev.append(h_k)
        c_list.append(c_k)
        h_list.append(h_k)
        gates_list.append(gates)
    h_seq = Tensor(np.stack(h_list, axis=1))
    c_seq = Tensor(np.stack(c_list[1:], axis=1))

    def bwd(gs):
        dh_seq, dc_seq = gs
        u_t = U.data.T
        dh_carry = None
        dc_carry = np.zeros((b, hidden))
        dpre_list = [None] * t
        for k in range(t - 1, -1, -1):
            dh = dh_seq[:, k] if dh_carry is None else dh_seq[:, k] + dh_carry
            dpre, dc_carry = kernels.lstm_gates_backward(
                gates_list[k], c_list[k], c_list[k + 1],
                np.ascontiguousarray(dh), dc_seq[:, k] + dc_carry,
            )
            dpre_list[k] = dpre
            dh_carry = dpre @ u_t
        dpre_all = np.stack(dpre_list, axis=1)
        hp = np.stack(h_prev[:-1], axis=1).reshape(b * t, hidden)
        d_u = hp.T @ dpre_all.reshape(b * t, h4)
        return dpre_all, dh_carry, dc_carry, d_u

    _record("lstm_sequence", (pre_x, h0, c0, U), (h_seq, c_seq), bwd)
    return h_seq, c_seq


def dropout(a: Tensor, p: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout: scales kept units by 1/(1-p), so eval needs no rescale."""
    if p <= 0.0:
        return a
    if p >= 1.0:
        raise ValueError(f"dropout rate must be < 1, got {p}")
    a = as_tensor(a)
    keep = (rng.random(a.data.shape) >= p).astype(a.data.dtype) / (1.0 - p)
    out = Tensor(a.data * keep)
    _record("dropout", (a,), (out,), lambda gs: (gs[0] * keep,))
    return out


# --- gradient utilities --------------------------------------------------------

def grad_norm(params: Iterable[Tensor]) -> float:
    """Global L2 norm of the concatenated gradients (None counts as zero)."""
    total = 0.0
    for t in params:
        if t.grad is not None:
            flat = np.ascontiguousarray(t.grad, dtype=np.float64).ravel()
            total += float(np.dot(flat, flat))
    return float(np.sqrt(total))


def clip_gradients(params: Iterable[Tensor], max_norm: float) -> float:
    """Scale gradients so their global L2 norm is at most `max_norm`.

    Returns the scaling factor applied (1.0 when already within bounds).
    """
    if max_norm <= 0:
        raise ValueError(f"max_norm must be positive, got {max_norm}")
    params = list(params)
    norm = grad_norm(params)
    if norm <= max_norm or norm == 0.0:
        return 1.0
    factor = max_norm / norm
    for t in params:
        if t.grad is not None:
            # not in place: a first-contribution grad may share its array
            # with another tensor's grad
            t.grad = t.grad * factor
    return factor
