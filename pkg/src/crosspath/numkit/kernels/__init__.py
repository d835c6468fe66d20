"""Backend selection for the LSTM sequence kernels.

The compiled extension is preferred when importable; set the environment
variable CROSSPATH_PURE_PYTHON=1 to force the numpy fallback (used by the
benchmark and by tests that compare the two implementations).
"""

import os
from contextlib import contextmanager

from . import numpy_backend

if os.environ.get("CROSSPATH_PURE_PYTHON", "") == "1":
    _impl = numpy_backend
else:
    try:
        from . import _gatekernels as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = numpy_backend

BACKEND = _impl.NAME
lstm_seq_forward = _impl.lstm_seq_forward
lstm_seq_backward = _impl.lstm_seq_backward


def get_backend(name=None):
    """Return (name, seq_forward, seq_backward) for an explicit request.

    name: None for the import-time selection, "numpy" or "cython".
    """
    if name is None:
        return BACKEND, lstm_seq_forward, lstm_seq_backward
    if name == "numpy":
        return "numpy", numpy_backend.lstm_seq_forward, numpy_backend.lstm_seq_backward
    if name == "cython":
        from . import _gatekernels  # raises ImportError if not built

        return "cython", _gatekernels.lstm_seq_forward, _gatekernels.lstm_seq_backward
    raise ValueError(f"unknown kernel backend {name!r}")


@contextmanager
def use_backend(name):
    """Temporarily route lstm_seq_forward/backward through a named backend
    (process-wide; intended for benchmarks and backend-comparison tests)."""
    global BACKEND, lstm_seq_forward, lstm_seq_backward
    saved = (BACKEND, lstm_seq_forward, lstm_seq_backward)
    BACKEND, lstm_seq_forward, lstm_seq_backward = get_backend(name)
    try:
        yield
    finally:
        BACKEND, lstm_seq_forward, lstm_seq_backward = saved
