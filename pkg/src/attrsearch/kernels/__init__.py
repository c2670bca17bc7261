"""Hot-loop kernels with a compiled core and a pure-numpy fallback.

The backend is picked once at import time:

* ``ATTRSEARCH_KERNELS=cython`` requires the compiled extension and raises
  if it is missing,
* ``ATTRSEARCH_KERNELS=python`` forces the numpy fallback,
* unset / ``auto`` prefers the compiled extension when available.

``BACKEND`` names the active implementation; both expose identical
functions (``dists_to_vec``, ``dists_to_row``, ``pooled_dists_to_row``,
``count_satisfied``) over C-contiguous float64 arrays.
"""

from __future__ import annotations

import os

from . import numpy_backend

_choice = os.environ.get("ATTRSEARCH_KERNELS", "auto").lower()

if _choice not in ("auto", "python", "cython"):
    raise ValueError(f"ATTRSEARCH_KERNELS must be auto|python|cython, got {_choice!r}")

_impl = numpy_backend
if _choice in ("auto", "cython"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]
    except ImportError:
        if _choice == "cython":
            raise ImportError(
                "ATTRSEARCH_KERNELS=cython but the compiled extension is not built; "
                "reinstall with Cython available or use ATTRSEARCH_KERNELS=python"
            ) from None

BACKEND: str = _impl.NAME

dists_to_vec = _impl.dists_to_vec
dists_to_row = _impl.dists_to_row
pooled_dists_to_row = _impl.pooled_dists_to_row
count_satisfied = _impl.count_satisfied

__all__ = [
    "BACKEND",
    "count_satisfied",
    "dists_to_row",
    "dists_to_vec",
    "numpy_backend",
    "pooled_dists_to_row",
]
