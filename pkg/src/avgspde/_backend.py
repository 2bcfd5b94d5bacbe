"""Select the kernel backend at import time.

The compiled extension is preferred; set ``AVGSPDE_PURE_PYTHON=1`` to force
the NumPy fallback (useful for benchmarking and for platforms without a C
compiler).
"""

import os

from . import _kernels_py


def _load_compiled():
    try:
        from . import _kernels
    except ImportError:
        return None
    return _kernels


_compiled = _load_compiled()

if _compiled is not None and not os.environ.get("AVGSPDE_PURE_PYTHON"):
    kernels = _compiled
else:
    kernels = _kernels_py

BACKEND = kernels.NAME


def available_backends() -> dict:
    out = {"python": _kernels_py}
    if _compiled is not None:
        out["compiled"] = _compiled
    return out
