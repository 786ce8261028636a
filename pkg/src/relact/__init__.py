"""One-stage scene relation and human-object interaction detection.

A self-contained set-prediction pipeline: a small autodiff tensor core
(compiled kernels with a numpy fallback), box geometry, a convolutional
stem with box-level segmentation, transformer encoder/decoders for
relation and interaction tuples, Hungarian set matching losses, the
evaluation protocols, a synthetic scene generator, and a CLI.
"""

import os

# Single-threaded BLAS keeps runs reproducible and is faster at the
# small matrix sizes used here. Respect explicit user settings.
for _v in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_v, "1")

__version__ = "0.1.0"
