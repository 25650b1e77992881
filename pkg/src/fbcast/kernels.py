"""Kernel backend selection.

The compiled extension is preferred; set ``FBCAST_PURE=1`` to force the
numpy fallback (the test-suite runs both).
"""
import os

from . import _fallback

if os.environ.get("FBCAST_PURE", "") not in ("", "0"):
    _impl = _fallback
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl
        BACKEND = "compiled"
    except ImportError:  # extension not built
        _impl = _fallback
        BACKEND = "python"

mc_outage_count = _impl.mc_outage_count
capped_simplex_shift = _impl.capped_simplex_shift

__all__ = ["BACKEND", "mc_outage_count", "capped_simplex_shift"]
