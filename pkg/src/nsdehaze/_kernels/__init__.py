"""Hot-kernel backend selection.

Imports the compiled Cython core when it was built, otherwise the pure
numpy fallback. Set ``NSDEHAZE_PURE_PY=1`` to force the fallback (used by
the benchmark and by tests that exercise both paths).
"""

import os

from . import numpy_impl

if os.environ.get("NSDEHAZE_PURE_PY") == "1":
    _impl = numpy_impl
else:
    try:
        from . import _core as _impl
    except ImportError:
        _impl = numpy_impl

BACKEND = _impl.BACKEND
min_filter2d = _impl.min_filter2d
box_sum2d = _impl.box_sum2d


def box_count2d(h, w, radius):
    """Number of in-image pixels in each truncated window, as an h x w map."""
    import numpy as np

    rows = np.minimum(np.arange(h) + radius, h - 1) - np.maximum(np.arange(h) - radius, 0) + 1
    cols = np.minimum(np.arange(w) + radius, w - 1) - np.maximum(np.arange(w) - radius, 0) + 1
    return rows[:, None].astype(np.float64) * cols[None, :]


def box_mean2d(src, radius):
    """Mean over a truncated (2r+1)x(2r+1) window at every position."""
    sums = box_sum2d(src, radius)
    return sums / box_count2d(src.shape[0], src.shape[1], radius)
