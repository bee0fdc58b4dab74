"""Backend selection for the numeric hot loops.

The compiled extension is used when it imports; otherwise the NumPy
implementation.  Set ``COTFORGE_PURE_PYTHON=1`` to force the fallback.
"""
from __future__ import annotations

import os

from . import _kernels_py

IGNORE_INDEX = _kernels_py.IGNORE_INDEX

_backend = _kernels_py
BACKEND = "python"
if os.environ.get("COTFORGE_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _backend  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _backend = _kernels_py

log_softmax_rows = _backend.log_softmax_rows
masked_nll = _backend.masked_nll
kl_rows = _backend.kl_rows
lcs_length = _backend.lcs_length

__all__ = ["BACKEND", "IGNORE_INDEX", "log_softmax_rows", "masked_nll", "kl_rows", "lcs_length"]
