"""Dense float64 tensors with reverse-mode automatic differentiation.

The computation graph is recorded on the tensors themselves: every operation
performed while gradients are enabled stores its parent tensors and a backward
closure on the result. ``backward(loss)`` linearizes the reachable graph into
a ComputationTape (reverse topological order) and replays it once; the graph
is dismantled afterwards, so a second backward on the same forward pass raises
GraphError.

Graphs are plain object webs, never shared module state, so independent
forward/backward passes may run on different threads concurrently (one graph
per thread). Gradient *recording* can be paused per-thread via ``no_grad()``.
"""

import threading

import numpy as np

from ..errors import DimensionError, EmptyTargetError, GraphError

_state = threading.local()


def _grad_enabled():
    return getattr(_state, "grad_enabled", True)


class no_grad:
    """Context manager disabling graph recording on the current thread."""

    def __enter__(self):
        self._prev = _grad_enabled()
        _state.grad_enabled = False
        return self

    def __exit__(self, *exc):
        _state.grad_enabled = self._prev
        return False


def _as_array(value):
    arr = np.asarray(value, dtype=np.float64)
    if not arr.flags.c_contiguous:
        arr = np.ascontiguousarray(arr)
    return arr


class Tensor:
    """A shape + row-major float64 buffer, optionally carrying a gradient."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_consumed")

    def __init__(self, data, requires_grad=False):
        self.data = _as_array(data)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None
        self._consumed = False

    # -- basic introspection -------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def detach(self):
        return Tensor(self.data.copy())

    def zero_grad(self):
        self.grad = None

    def accumulate_grad(self, g):
        if self.grad is None:
            self.grad = g.copy()
        else:
            self.grad += g

    # -- operator sugar --------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


def make_node(data, parents, backward):
    """Create a graph node. `backward(grad_out)` must accumulate into parents."""
    out = Tensor(data)
    live = tuple(p for p in parents if isinstance(p, Tensor))
    if _grad_enabled() and any(p.requires_grad or p._parents for p in live):
        out.requires_grad = True
        out._parents = live
        out._backward = backward
    return out


def _coerce(value):
    return value if isinstance(value, Tensor) else Tensor(value)


def _unbroadcast(grad, shape):
    """Sum `grad` down to `shape` (inverse of numpy broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


# -- primitive operations ------------------------------------------------------


def add(a, b):
    a, b = _coerce(a), _coerce(b)
    data = a.data + b.data

    def backward(g):
        if a.requires_grad or a._parents:
            a.accumulate_grad(_unbroadcast(g, a.data.shape))
        if b.requires_grad or b._parents:
            b.accumulate_grad(_unbroadcast(g, b.data.shape))

    return make_node(data, (a, b), backward)


def sub(a, b):
    a, b = _coerce(a), _coerce(b)
    data = a.data - b.data

    def backward(g):
        if a.requires_grad or a._parents:
            a.accumulate_grad(_unbroadcast(g, a.data.shape))
        if b.requires_grad or b._parents:
            b.accumulate_grad(_unbroadcast(-g, b.data.shape))

    return make_node(data, (a, b), backward)


def mul(a, b):
    a, b = _coerce(a), _coerce(b)
    data = a.data * b.data

    def backward(g):
        if a.requires_grad or a._parents:
            a.accumulate_grad(_unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad or b._parents:
            b.accumulate_grad(_unbroadcast(g * a.data, b.data.shape))

    return make_node(data, (a, b), backward)


def scale(a, s):
    a = _coerce(a)
    s = float(s)
    data = a.data * s

    def backward(g):
        a.accumulate_grad(g * s)

    return make_node(data, (a,), backward)


def matmul(a, b):
    a, b = _coerce(a), _coerce(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise DimensionError(f"matmul expects 2-D operands, got {a.data.shape} @ {b.data.shape}")
    if a.data.shape[1] != b.data.shape[0]:
        raise DimensionError(f"matmul shape mismatch: {a.data.shape} @ {b.data.shape}")
    data = a.data @ b.data

    def backward(g):
        if a.requires_grad or a._parents:
            a.accumulate_grad(g @ b.data.T)
        if b.requires_grad or b._parents:
            b.accumulate_grad(a.data.T @ g)

    return make_node(data, (a, b), backward)


def relu(a):
    a = _coerce(a)
    data = np.maximum(a.data, 0.0)

    def backward(g):
        a.accumulate_grad(g * (a.data > 0.0))

    return make_node(data, (a,), backward)


# saturated activations are nudged to the nearest representable interior value
# so the open-range output contract holds even for extreme inputs
_SIG_LO = np.nextafter(0.0, 1.0)
_SIG_HI = np.nextafter(1.0, 0.0)
_TANH_LO = np.nextafter(-1.0, 0.0)
_TANH_HI = np.nextafter(1.0, 0.0)


def sigmoid(a):
    a = _coerce(a)
    data = np.clip(0.5 * (np.tanh(0.5 * a.data) + 1.0), _SIG_LO, _SIG_HI)

    def backward(g):
        a.accumulate_grad(g * data * (1.0 - data))

    return make_node(data, (a,), backward)


def tanh(a):
    a = _coerce(a)
    data = np.clip(np.tanh(a.data), _TANH_LO, _TANH_HI)

    def backward(g):
        a.accumulate_grad(g * (1.0 - data * data))

    return make_node(data, (a,), backward)


def concat(a, b, axis=1):
    a, b = _coerce(a), _coerce(b)
    data = np.concatenate([a.data, b.data], axis=axis)
    split = a.data.shape[axis]

    def backward(g):
        ga, gb = np.split(g, [split], axis=axis)
        if a.requires_grad or a._parents:
            a.accumulate_grad(ga)
        if b.requires_grad or b._parents:
            b.accumulate_grad(gb)

    return make_node(data, (a, b), backward)


def slice_cols(a, lo, hi):
    """Column slice [:, lo:hi] of a 2-D tensor."""
    a = _coerce(a)
    if a.data.ndim != 2:
        raise DimensionError(f"slice_cols expects a 2-D tensor, got {a.data.shape}")
    data = np.ascontiguousarray(a.data[:, lo:hi])

    def backward(g):
        full = np.zeros_like(a.data)
        full[:, lo:hi] = g
        a.accumulate_grad(full)

    return make_node(data, (a,), backward)


def reshape(a, shape):
    a = _coerce(a)
    data = a.data.reshape(shape)

    def backward(g):
        a.accumulate_grad(g.reshape(a.data.shape))

    return make_node(data, (a,), backward)


def seq_last(a):
    """Select the final timestep of a time-major [T, B, H] sequence -> [B, H]."""
    a = _coerce(a)
    if a.data.ndim != 3:
        raise DimensionError(f"seq_last expects [T, B, H], got {a.data.shape}")
    data = a.data[-1].copy()

    def backward(g):
        full = np.zeros_like(a.data)
        full[-1] = g
        a.accumulate_grad(full)

    return make_node(data, (a,), backward)


def tsum(a):
    a = _coerce(a)
    data = np.asarray(a.data.sum())

    def backward(g):
        a.accumulate_grad(np.broadcast_to(g, a.data.shape).copy())

    return make_node(data, (a,), backward)


def tmean(a):
    a = _coerce(a)
    n = a.data.size
    data = np.asarray(a.data.mean())

    def backward(g):
        a.accumulate_grad(np.broadcast_to(g / n, a.data.shape).copy())

    return make_node(data, (a,), backward)


def masked_mse(pred, target, mask):
    """Mean squared error over the valid entries of a masked target.

    pred: Tensor [B, K]; target: ndarray [B, K]; mask: boolean ndarray
    broadcastable to [B, K]. Averages over *valid scalar entries* only.
    """
    pred = _coerce(pred)
    target = np.asarray(target, dtype=np.float64)
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), pred.data.shape)
    if pred.data.shape != target.shape:
        raise DimensionError(f"masked_mse shape mismatch: {pred.data.shape} vs {target.shape}")
    count = int(mask.sum())
    if count == 0:
        raise EmptyTargetError("masked_mse over an all-false mask")
    diff = np.where(mask, pred.data - target, 0.0)
    data = np.asarray((diff * diff).sum() / count)

    def backward(g):
        pred.accumulate_grad((2.0 * g / count) * diff)

    return make_node(data, (pred,), backward)


# -- tape construction and the backward pass -----------------------------------


class ComputationTape:
    """Reverse-topological linearization of the graph reachable from a root."""

    def __init__(self, root):
        order = []
        seen = set()
        stack = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.nodes = order  # topological: parents before children

    def __len__(self):
        return len(self.nodes)


def backward(loss):
    """Reverse-mode sweep from a scalar loss; accumulates into leaf ``.grad``.

    The graph is consumed: a second call without a fresh forward pass raises
    GraphError, as does a loss that never entered the tape (detached).
    """
    if not isinstance(loss, Tensor):
        raise GraphError("backward expects a Tensor loss")
    if loss.data.size != 1:
        raise DimensionError(f"backward expects a scalar loss, got shape {loss.data.shape}")
    if loss._consumed:
        raise GraphError("backward already called on this graph; run a new forward pass")
    if loss._backward is None and not loss._parents:
        raise GraphError("loss is detached from the computation tape")

    tape = ComputationTape(loss)
    op_nodes = [n for n in tape.nodes if n._backward is not None or n._parents]
    loss.grad = np.ones_like(loss.data)
    for node in reversed(tape.nodes):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
    # dismantle: op results are single-use, leaves (parameters) keep their grads
    for node in op_nodes:
        node._backward = None
        node._parents = ()
        if node is not loss:
            node.grad = None
    loss._consumed = True
