"""Kernel backend selection.

Prefers the compiled Cython extension, falling back to the numpy
implementation when it is not built. Override with QUIZFORGE_BACKEND=numpy
(force fallback) or QUIZFORGE_BACKEND=cython (fail instead of falling back).
"""

from __future__ import annotations

import os

_requested = os.environ.get("QUIZFORGE_BACKEND", "auto").lower()

if _requested in ("numpy", "python"):
    from . import kernels_numpy as _impl

    BACKEND = "numpy"
elif _requested in ("auto", "cython"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        if _requested == "cython":
            raise
        from . import kernels_numpy as _impl  # type: ignore[no-redef]

        BACKEND = "numpy"
else:
    raise RuntimeError(
        f"QUIZFORGE_BACKEND={_requested!r} not recognized (use auto, cython, or numpy)"
    )

affine_forward = _impl.affine_forward
affine_backward = _impl.affine_backward
softmax_rows = _impl.softmax_rows
adam_step = _impl.adam_step
sgd_step = _impl.sgd_step
sumtree_update = _impl.sumtree_update
sumtree_update_batch = _impl.sumtree_update_batch
sumtree_query = _impl.sumtree_query
sumtree_query_batch = _impl.sumtree_query_batch
