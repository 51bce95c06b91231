"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The backend is chosen once at import time.  Set ``GUIDEDPLACE_NUMBA=0`` to
force the numpy implementation (useful for debugging or platforms without
numba).  Both backends expose the same functions; see ``_numba`` for the
reference loop formulation.
"""

import logging
import os

from . import _numpy as numpy_backend

log = logging.getLogger(__name__)

_FLAG = os.environ.get("GUIDEDPLACE_NUMBA", "1").strip().lower()
_WANT_NUMBA = _FLAG not in ("0", "false", "off", "no")

numba_backend = None
if _WANT_NUMBA:
    try:
        from . import _numba as numba_backend
    except ImportError:  # pragma: no cover - numba is a declared dependency
        log.warning("numba unavailable, falling back to numpy kernels")

_active = numba_backend if numba_backend is not None else numpy_backend
BACKEND = "numba" if _active is numba_backend else "numpy"

net_hpwl = _active.net_hpwl
net_hpwl_smooth = _active.net_hpwl_smooth
weighted_hpwl_grad = _active.weighted_hpwl_grad
overlap_penalty = _active.overlap_penalty
overlap_area = _active.overlap_area
spiral_search = _active.spiral_search

__all__ = [
    "BACKEND", "numpy_backend", "numba_backend",
    "net_hpwl", "net_hpwl_smooth", "weighted_hpwl_grad",
    "overlap_penalty", "overlap_area", "spiral_search",
]
