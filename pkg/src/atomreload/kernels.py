"""Backend selection for the planning kernels.

The compiled extension is used when it was built; otherwise the numpy
fallback. Set ``ATOMRELOAD_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _pykernels

BACKEND = "python"
solve_assignment = _pykernels.solve_assignment
close_sites = _pykernels.close_sites

if not os.environ.get("ATOMRELOAD_PURE_PYTHON"):
    try:
        from . import _ckernels
    except ImportError:
        pass
    else:
        BACKEND = "cython"
        solve_assignment = _ckernels.solve_assignment
        close_sites = _ckernels.close_sites

__all__ = ["BACKEND", "solve_assignment", "close_sites"]
