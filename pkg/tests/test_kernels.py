"""Both kernel backends against brute-force oracles and each other."""

import numpy as np
import pytest

from nsdehaze import _kernels
from nsdehaze._kernels import numpy_impl
from conftest import box_mean_oracle, dark_channel_oracle

BACKENDS = [numpy_impl]
if _kernels.BACKEND == "cython":
    from nsdehaze._kernels import _core

    BACKENDS.append(_core)


@pytest.mark.parametrize("impl", BACKENDS, ids=lambda m: m.BACKEND)
def test_min_filter_matches_bruteforce(impl, rng):
    for _ in range(30):
        h, w = rng.integers(1, 24, size=2)
        radius = int(rng.integers(0, 4))
        x = rng.random((h, w))
        expected = np.empty((h, w))
        for i in range(h):
            for j in range(w):
                expected[i, j] = x[
                    max(0, i - radius) : i + radius + 1, max(0, j - radius) : j + radius + 1
                ].min()
        assert np.array_equal(impl.min_filter2d(x, radius), expected)


@pytest.mark.parametrize("impl", BACKENDS, ids=lambda m: m.BACKEND)
def test_box_sum_matches_bruteforce(impl, rng):
    for _ in range(30):
        h, w = rng.integers(1, 24, size=2)
        radius = int(rng.integers(0, 5))
        x = rng.random((h, w))
        counts = _kernels.box_count2d(h, w, radius)
        expected = box_mean_oracle(x, radius) * counts
        assert np.allclose(impl.box_sum2d(x, radius), expected, atol=1e-10)


def test_backends_agree(rng):
    for _ in range(10):
        h, w = rng.integers(2, 40, size=2)
        radius = int(rng.integers(0, 8))
        x = rng.random((h, w))
        assert np.array_equal(
            numpy_impl.min_filter2d(x, radius), _kernels.min_filter2d(x, radius)
        )
        assert np.allclose(
            numpy_impl.box_sum2d(x, radius), _kernels.box_sum2d(x, radius), atol=1e-9
        )


def test_box_count_truncation():
    counts = _kernels.box_count2d(5, 5, 1)
    assert counts[0, 0] == 4  # corner window truncated to 2x2
    assert counts[0, 2] == 6
    assert counts[2, 2] == 9


def test_radius_larger_than_image(rng):
    x = rng.random((4, 3))
    assert np.allclose(_kernels.min_filter2d(x, 10), x.min())
    assert np.allclose(_kernels.box_sum2d(x, 10), x.sum())


def test_dark_channel_path_exact(rng):
    from nsdehaze.physics import dark_channel

    img = rng.random((16, 16, 3))
    assert np.array_equal(dark_channel(img, 2), dark_channel_oracle(img.min(axis=2), 2))
