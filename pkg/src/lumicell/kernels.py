"""Hot-loop kernels: compiled extension when available, numpy fallback otherwise.

Set ``LUMICELL_PURE_PYTHON=1`` to force the fallback. ``BACKEND`` names the
implementation in use.
"""
import os

from lumicell import _kernels_py

if os.environ.get("LUMICELL_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from lumicell import _kernels as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

high_runs = _impl.high_runs
scan_frames = _impl.scan_frames
interval_collisions = _impl.interval_collisions

__all__ = ["BACKEND", "high_runs", "scan_frames", "interval_collisions"]
