"""Pure numpy implementations of the hot 2-D kernels.

Both kernels use truncated windows at the borders: the window is clipped to
the image, never padded with synthetic values. ``min_filter2d`` exploits the
fact that edge-replicating pad values duplicate in-window pixels and so never
change a minimum.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

BACKEND = "numpy"


def _min1d(arr, radius, axis):
    padding = [(0, 0)] * arr.ndim
    padding[axis] = (radius, radius)
    padded = np.pad(arr, padding, mode="edge")
    windows = sliding_window_view(padded, 2 * radius + 1, axis=axis)
    return windows.min(axis=-1)


def min_filter2d(src, radius):
    """Sliding minimum over a (2r+1)x(2r+1) window, truncated at borders."""
    src = np.ascontiguousarray(src, dtype=np.float64)
    if radius == 0:
        return src.copy()
    return _min1d(_min1d(src, radius, 0), radius, 1)


def _sum1d(arr, radius, axis):
    n = arr.shape[axis]
    csum = np.cumsum(arr, axis=axis)
    hi = np.minimum(np.arange(n) + radius, n - 1)
    lo = np.arange(n) - radius - 1
    upper = np.take(csum, hi, axis=axis)
    lower = np.take(csum, np.maximum(lo, 0), axis=axis)
    mask_shape = [1] * arr.ndim
    mask_shape[axis] = n
    lower = lower * (lo >= 0).reshape(mask_shape)
    return upper - lower


def box_sum2d(src, radius):
    """Sum over a truncated (2r+1)x(2r+1) window at every position."""
    src = np.ascontiguousarray(src, dtype=np.float64)
    if radius == 0:
        return src.copy()
    return _sum1d(_sum1d(src, radius, 0), radius, 1)
