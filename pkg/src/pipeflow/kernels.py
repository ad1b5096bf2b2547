"""Kernel dispatch: compiled Cython core if available, numpy fallback otherwise.

Set PIPEFLOW_PURE_PYTHON=1 to force the fallback (used by the benchmark).
"""

from __future__ import annotations

import os

if os.environ.get("PIPEFLOW_PURE_PYTHON"):
    from . import _kernels_np as _impl
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]
    except ImportError:
        from . import _kernels_np as _impl

IMPL = _impl.IMPL
bump_raw_s2 = _impl.bump_raw_s2
bump_raw_dr_over_r = _impl.bump_raw_dr_over_r
segment_distances = _impl.segment_distances
min_segment_distance = _impl.min_segment_distance
line_conv = _impl.line_conv
