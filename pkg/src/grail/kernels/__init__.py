"""Dense kernel backend, selected once at import time.

The compiled extension (``grail._ckernels``, Cython) is preferred; the
numpy implementation is the fallback.  Force the fallback with
``GRAIL_PURE_PYTHON=1``.  ``BACKEND`` names the active implementation.
"""

import os

from . import _impl_np

if os.environ.get("GRAIL_PURE_PYTHON", "") == "1":
    _impl = _impl_np
    BACKEND = "numpy"
else:
    try:
        from .. import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        _impl = _impl_np
        BACKEND = "numpy"

normalize_adjacency_forward = _impl.normalize_adjacency_forward
normalize_adjacency_vjp = _impl.normalize_adjacency_vjp
assemble_relaxed = _impl.assemble_relaxed
pair_flip_grads = _impl.pair_flip_grads
project_budget = _impl.project_budget

__all__ = [
    "BACKEND",
    "normalize_adjacency_forward",
    "normalize_adjacency_vjp",
    "assemble_relaxed",
    "pair_flip_grads",
    "project_budget",
]
