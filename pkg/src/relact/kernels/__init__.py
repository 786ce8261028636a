"""Kernel backend selection.

The compiled extension (`_ops_c`, Cython) is preferred when it built;
the numpy module (`_ops_py`) is the fallback. RELACT_BACKEND=py|c
forces a choice at import time (forcing `c` raises if the extension is
missing). Both backends expose the same functions and agree to within
float64 rounding; `benchmarks/bench_kernels.py` compares their speed.
"""

import os

from . import _ops_py

try:
    from . import _ops_c
except ImportError:
    _ops_c = None

_BACKENDS = {"py": _ops_py}
if _ops_c is not None:
    _BACKENDS["c"] = _ops_c

_forced = os.environ.get("RELACT_BACKEND", "").strip().lower()
if _forced:
    if _forced not in _BACKENDS:
        raise ImportError(
            f"RELACT_BACKEND={_forced!r} requested but only "
            f"{sorted(_BACKENDS)} available"
        )
    _active = _BACKENDS[_forced]
else:
    _active = _BACKENDS.get("c", _ops_py)


def backend_name() -> str:
    return "c" if _active is _ops_c and _ops_c is not None else "py"


def available_backends():
    return sorted(_BACKENDS)


def get_backend(name: str):
    return _BACKENDS[name]


ops = _active
