"""Import-time selection of the simulation kernel backend.

The compiled Cython extension is preferred; the numpy implementation is a
drop-in fallback.  Set TDMUX_PURE_PYTHON=1 to force the fallback (used by
the benchmark and the backend-equivalence tests).
"""

import os

from . import _kernels_py

if os.environ.get("TDMUX_PURE_PYTHON"):
    kernels = _kernels_py
else:
    try:
        from . import _kernels as kernels  # type: ignore[no-redef]
    except ImportError:
        kernels = _kernels_py


def backend_name() -> str:
    """"cython" when the compiled kernels are active, else "python"."""
    return kernels.BACKEND
