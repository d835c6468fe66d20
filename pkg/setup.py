"""Build script for the optional compiled gate kernels.

The package is fully functional without the extension (a numpy fallback is
selected at import time); the extension only accelerates the per-timestep
LSTM gate math, so build failures are non-fatal.
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    # -ffast-math lets gcc vectorize the tanh-bound gate loops against
    # libmvec; acceptable here because the kernels never rely on NaN/Inf
    # semantics (training checks loss finiteness at the tape level)
    ext_modules = cythonize(
        [
            Extension(
                "crosspath.numkit.kernels._gatekernels",
                ["src/crosspath/numkit/kernels/_gatekernels.pyx"],
                extra_compile_args=["-O3", "-ffast-math", "-march=native"],
                extra_link_args=["-lmvec", "-lm"],
                optional=True,
            )
        ],
        language_level="3",
    )
except Exception:  # pragma: no cover - no Cython/scipy at build => pure python
    ext_modules = []

setup(ext_modules=ext_modules)
