"""Backend selection for the hot kernels.

The compiled extension is preferred; set ``ASYNAG_PURE_PYTHON=1`` to force the
numpy fallback (the benchmark and the backend-agreement tests toggle this).
"""

import os

from . import _kernels_py

BACKEND = "python"

if os.environ.get("ASYNAG_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _kernels_py
else:
    _impl = _kernels_py

project_box_hyperplane = _impl.project_box_hyperplane
cournot_grad = _impl.cournot_grad
cournot_step = _impl.cournot_step

__all__ = ["BACKEND", "project_box_hyperplane", "cournot_grad", "cournot_step"]
