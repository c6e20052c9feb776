"""Kernel backend selection.

The compiled extension is used when importable unless the environment
variable ``GRAPHPDE_PURE_PYTHON`` is set to a non-empty value.
"""

import os

from . import _kernels_py

if os.environ.get("GRAPHPDE_PURE_PYTHON"):
    kernels = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as kernels
        BACKEND = "compiled"
    except ImportError:
        kernels = _kernels_py
        BACKEND = "python"

bowyer_watson = kernels.bowyer_watson
segment_sum = kernels.segment_sum
tanh_grad_inplace = kernels.tanh_grad_inplace
