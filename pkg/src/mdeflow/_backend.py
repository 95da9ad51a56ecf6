"""Kernel backend selection.

The compiled extension is used when it imports cleanly; setting
``MDEFLOW_PURE_PYTHON=1`` forces the numpy fallback.
"""
import os

from . import _pykernels

python_kernels = _pykernels

if os.environ.get("MDEFLOW_PURE_PYTHON", "") not in ("", "0"):
    kernels = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _kernels as kernels  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:  # extension not built
        kernels = _pykernels
        BACKEND = "python"

try:
    from . import _kernels as compiled_kernels  # type: ignore[attr-defined]
except ImportError:
    compiled_kernels = None
