"""Context-aware pedestrian crossing trajectory prediction toolkit."""

import os

# The workloads here are streams of small GEMMs; multithreaded BLAS loses
# badly to single-threaded on them (thread sync dominates). Parallelism
# belongs one level up (concurrent model training in the harness). Set
# CROSSPATH_BLAS_THREADS to override.
if "CROSSPATH_BLAS_THREADS" not in os.environ:
    for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, "1")

__version__ = "0.1.0"

SCHEMA_VERSION = "crosspath/1"
