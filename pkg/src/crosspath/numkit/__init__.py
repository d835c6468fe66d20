"""Minimal dense numerics: tensors with reverse-mode autodiff, layer
primitives and the Adam optimizer. 64-bit floats throughout."""

import os

from . import kernels

# numpy may have been imported (and BLAS loaded) before crosspath could set
# the env vars; clamp the already-loaded BLAS thread pools too
_blas_limiter = None
if os.environ.get("CROSSPATH_BLAS_THREADS", "1") == "1":
    try:
        from threadpoolctl import threadpool_limits

        _blas_limiter = threadpool_limits(limits=1, user_api="blas")
    except Exception:  # pragma: no cover - threadpoolctl optional
        pass
from .gradcheck import check_gradients, max_relative_error, numerical_gradient
from .layers import (
    BatchNorm,
    Dense,
    LayerSpec,
    LSTMLayer,
    batchnorm_forward,
    dense_forward,
    dropout_forward,
    lstm_cell_forward,
    lstm_seq,
)
from .optim import Adam, OptimizerState, clip_global_norm
from .serialize import pack_tensors, read_blob, unpack_tensors, write_blob
from .tensor import (
    ComputationTape,
    Tensor,
    add,
    backward,
    concat,
    make_node,
    masked_mse,
    matmul,
    mul,
    no_grad,
    relu,
    reshape,
    scale,
    seq_last,
    sigmoid,
    slice_cols,
    sub,
    tanh,
    tmean,
    tsum,
)

KERNEL_BACKEND = kernels.BACKEND
