"""Network layer primitives: dense, LSTM, batch normalization, dropout.

Sequence tensors are time-major [T, B, *] throughout this module so that each
timestep is a contiguous [B, *] block for the gate kernels. The LSTM layer is
a single fused tape operation (the per-step loop, including backpropagation
through time, runs inside its backward closure); everything else composes the
generic primitives in crosspath.numkit.tensor.
"""

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, DegenerateBatchError, DimensionError
from . import kernels
from .tensor import Tensor, add, make_node, matmul, mul, relu, sigmoid, slice_cols, tanh

ACTIVATIONS = {"relu": relu, "sigmoid": sigmoid, "tanh": tanh, "linear": lambda t: t}


@dataclass
class LayerSpec:
    """Declarative description of one layer in a stack."""

    kind: str  # dense | lstm | batchnorm | dropout
    width: int = 1
    activation: str = "linear"
    dropout_rate: float = 0.0

    def __post_init__(self):
        if self.kind not in ("dense", "lstm", "batchnorm", "dropout"):
            raise ConfigError(f"unknown layer kind {self.kind!r}")
        if self.width < 1:
            raise ConfigError("layer width must be >= 1")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError("dropout_rate must lie in [0, 1)")


def glorot_uniform(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def dense_forward(x, weights, bias, activation="linear"):
    """activation(x @ W + b) for x [B, F], W [F, O], b [O]."""
    if activation not in ACTIVATIONS:
        raise ConfigError(f"unknown activation {activation!r}")
    w = weights if isinstance(weights, Tensor) else Tensor(weights)
    b = bias if isinstance(bias, Tensor) else Tensor(bias)
    xv = x if isinstance(x, Tensor) else Tensor(x)
    if xv.data.shape[-1] != w.data.shape[0]:
        raise DimensionError(
            f"dense expects input width {w.data.shape[0]}, got {xv.data.shape[-1]}"
        )
    return ACTIVATIONS[activation](add(matmul(xv, w), b))


class Dense:
    """Fully connected layer with Glorot-uniform init."""

    def __init__(self, in_dim, out_dim, activation, rng, name="dense"):
        self.activation = activation
        self.name = name
        self.w = Tensor(glorot_uniform(rng, in_dim, out_dim), requires_grad=True)
        self.b = Tensor(np.zeros(out_dim), requires_grad=True)

    def __call__(self, x):
        return dense_forward(x, self.w, self.b, self.activation)

    def parameters(self):
        return [(f"{self.name}.w", self.w), (f"{self.name}.b", self.b)]


class LSTMLayer:
    """One recurrent layer over a full sequence.

    Weight layout: wx [F, 4H], wh [H, 4H], b [4H]; gate blocks ordered
    (input, forget, candidate, output). Kernels uniform in +-1/sqrt(fan_in),
    forget-gate bias 1.0 to keep early memory open, other biases 0.
    """

    def __init__(self, in_dim, hidden, rng, name="lstm"):
        self.in_dim = in_dim
        self.hidden = hidden
        self.name = name
        lim_x = 1.0 / np.sqrt(in_dim)
        lim_h = 1.0 / np.sqrt(hidden)
        self.wx = Tensor(rng.uniform(-lim_x, lim_x, size=(in_dim, 4 * hidden)), requires_grad=True)
        self.wh = Tensor(rng.uniform(-lim_h, lim_h, size=(hidden, 4 * hidden)), requires_grad=True)
        bias = np.zeros(4 * hidden)
        bias[hidden:2 * hidden] = 1.0
        self.b = Tensor(bias, requires_grad=True)

    def __call__(self, x):
        return lstm_seq(x, self.wx, self.wh, self.b)

    def parameters(self):
        return [(f"{self.name}.wx", self.wx), (f"{self.name}.wh", self.wh), (f"{self.name}.b", self.b)]


def lstm_seq(x, wx, wh, b):
    """Run an LSTM over x [T, B, F]; returns the hidden sequence [T, B, H].

    Initial hidden/cell states are zero. Forward caches the gate activations;
    backward replays the recurrence in reverse (BPTT) and accumulates into
    x, wx, wh and b.
    """
    xv = x if isinstance(x, Tensor) else Tensor(x)
    if xv.data.ndim != 3:
        raise DimensionError(f"lstm_seq expects [T, B, F], got {xv.data.shape}")
    T, B, F = xv.data.shape
    if wx.data.shape[0] != F:
        raise DimensionError(f"lstm input width {F} vs wx {wx.data.shape}")
    H = wh.data.shape[0]
    if wx.data.shape[1] != 4 * H or wh.data.shape[1] != 4 * H or b.data.shape != (4 * H,):
        raise DimensionError("inconsistent lstm weight shapes")

    seq_fwd, seq_bwd = kernels.lstm_seq_forward, kernels.lstm_seq_backward

    # input projection in one BLAS call; the kernel accumulates the recurrent
    # contribution into this buffer step by step
    a_buf = np.ascontiguousarray((xv.data.reshape(T * B, F) @ wx.data).reshape(T, B, 4 * H))
    h_seq = np.empty((T, B, H))
    c_all = np.zeros((T + 1, B, H))
    caches = np.empty((T, B, 5 * H))
    seq_fwd(a_buf, b.data, wh.data, h_seq, c_all, caches)

    def backward(g):
        da = np.empty((T, B, 4 * H))
        seq_bwd(np.ascontiguousarray(g), wh.data, c_all, caches, da,
                np.empty((B, H)), np.empty((B, H)))
        da_flat = da.reshape(T * B, 4 * H)
        if wx.requires_grad or wx._parents:
            wx.accumulate_grad(xv.data.reshape(T * B, F).T @ da_flat)
        if wh.requires_grad or wh._parents:
            h_prev_flat = np.concatenate([np.zeros((1, B, H)), h_seq[:-1]]).reshape(T * B, H)
            wh.accumulate_grad(h_prev_flat.T @ da_flat)
        if b.requires_grad or b._parents:
            b.accumulate_grad(da_flat.sum(axis=0))
        if xv.requires_grad or xv._parents:
            xv.accumulate_grad((da_flat @ wx.data.T).reshape(T, B, F))

    return make_node(h_seq, (xv, wx, wh, b), backward)


def lstm_cell_forward(x_t, h_prev, c_prev, weights):
    """Single LSTM step from the standard gate equations; returns (h_t, c_t).

    Composed from generic tape primitives (fully differentiable without a
    custom backward); `weights` is any object with wx/wh/b attributes, e.g.
    an LSTMLayer. Used directly by tests as an independent reference for the
    fused sequence kernel.
    """
    wx, wh, b = weights.wx, weights.wh, weights.b
    H = wh.data.shape[0]
    xv = x_t if isinstance(x_t, Tensor) else Tensor(x_t)
    hv = h_prev if isinstance(h_prev, Tensor) else Tensor(h_prev)
    cv = c_prev if isinstance(c_prev, Tensor) else Tensor(c_prev)
    if xv.data.shape[-1] != wx.data.shape[0] or hv.data.shape[-1] != H:
        raise DimensionError("lstm_cell_forward operand/weight shape mismatch")
    a = add(add(matmul(xv, wx), matmul(hv, wh)), b)
    i = sigmoid(slice_cols(a, 0, H))
    f = sigmoid(slice_cols(a, H, 2 * H))
    g = tanh(slice_cols(a, 2 * H, 3 * H))
    o = sigmoid(slice_cols(a, 3 * H, 4 * H))
    c_t = add(mul(f, cv), mul(i, g))
    h_t = mul(o, tanh(c_t))
    return h_t, c_t


class BatchNorm:
    """Per-column batch normalization with running statistics.

    Train mode normalizes by batch mean/variance (eps=1e-5) and updates the
    running statistics with momentum 0.9; infer mode normalizes by the running
    statistics. Scale/shift are learned.
    """

    def __init__(self, width, name="bn", momentum=0.9, eps=1e-5):
        self.width = width
        self.name = name
        self.momentum = momentum
        self.eps = eps
        self.scale = Tensor(np.ones(width), requires_grad=True)
        self.shift = Tensor(np.zeros(width), requires_grad=True)
        self.running_mean = np.zeros(width)
        self.running_var = np.ones(width)

    def parameters(self):
        return [(f"{self.name}.scale", self.scale), (f"{self.name}.shift", self.shift)]

    def __call__(self, x, mode):
        return batchnorm_forward(x, self, mode)


def batchnorm_forward(x, state, mode):
    """Normalize a [B, C] batch; `state` is a BatchNorm instance."""
    xv = x if isinstance(x, Tensor) else Tensor(x)
    if xv.data.ndim != 2 or xv.data.shape[1] != state.width:
        raise DimensionError(f"batchnorm expects [B, {state.width}], got {xv.data.shape}")
    if mode not in ("train", "infer"):
        raise ConfigError(f"batchnorm mode must be train|infer, got {mode!r}")
    scale, shift, eps = state.scale, state.shift, state.eps

    if mode == "train":
        B = xv.data.shape[0]
        if B < 2:
            raise DegenerateBatchError("batchnorm train mode needs a batch of >= 2 rows")
        mu = xv.data.mean(axis=0)
        var = xv.data.var(axis=0)
        state.running_mean = state.momentum * state.running_mean + (1 - state.momentum) * mu
        state.running_var = state.momentum * state.running_var + (1 - state.momentum) * var
        ivar = 1.0 / np.sqrt(var + eps)
        xhat = (xv.data - mu) * ivar
        out = scale.data * xhat + shift.data

        def backward(g):
            if scale.requires_grad or scale._parents:
                scale.accumulate_grad((g * xhat).sum(axis=0))
            if shift.requires_grad or shift._parents:
                shift.accumulate_grad(g.sum(axis=0))
            if xv.requires_grad or xv._parents:
                dxhat = g * scale.data
                dx = (dxhat - dxhat.mean(axis=0) - xhat * (dxhat * xhat).mean(axis=0)) * ivar
                xv.accumulate_grad(dx)

        return make_node(out, (xv, scale, shift), backward)

    ivar = 1.0 / np.sqrt(state.running_var + eps)
    xhat = (xv.data - state.running_mean) * ivar
    out = scale.data * xhat + shift.data

    def backward(g):
        if scale.requires_grad or scale._parents:
            scale.accumulate_grad((g * xhat).sum(axis=0))
        if shift.requires_grad or shift._parents:
            shift.accumulate_grad(g.sum(axis=0))
        if xv.requires_grad or xv._parents:
            xv.accumulate_grad(g * (scale.data * ivar))

    return make_node(out, (xv, scale, shift), backward)


def dropout_forward(x, rate, mode, rng):
    """Zero entries with probability `rate` and rescale survivors (train mode).

    Infer mode is the identity. The mask is drawn from `rng` outside the tape.
    """
    if not 0.0 <= rate < 1.0:
        raise ConfigError("dropout rate must lie in [0, 1)")
    xv = x if isinstance(x, Tensor) else Tensor(x)
    if mode == "infer" or rate == 0.0:
        return xv
    if mode != "train":
        raise ConfigError(f"dropout mode must be train|infer, got {mode!r}")
    keep = rng.random(xv.data.shape) >= rate
    return mul(xv, keep / (1.0 - rate))
