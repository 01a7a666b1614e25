"""Benchmark the compiled kernel core against the pure numpy fallback.

The two hot classical kernels (sliding window minimum for the dark channel,
box sums for the guided filter) dominate prior-pipeline time at inference
resolutions. Run:

    python3 benchmarks/bench_kernels.py
"""

import time

import numpy as np

from nsdehaze._kernels import numpy_impl

try:
    from nsdehaze._kernels import _core
except ImportError:
    _core = None


def time_fn(fn, *args, repeats=5):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - start)
    return best


def main():
    rng = np.random.default_rng(0)
    radius = 7
    print(f"{'kernel':<14} {'size':<10} {'numpy':>10} {'cython':>10} {'speedup':>8}")
    for side in (256, 512, 1024):
        img = rng.random((side, side))
        for name, np_fn, cy_fn in (
            ("min_filter", numpy_impl.min_filter2d, _core.min_filter2d if _core else None),
            ("box_sum", numpy_impl.box_sum2d, _core.box_sum2d if _core else None),
        ):
            t_np = time_fn(np_fn, img, radius)
            if cy_fn is None:
                print(f"{name:<14} {side}x{side:<6} {t_np * 1e3:9.2f}ms {'n/a':>10} {'-':>8}")
                continue
            t_cy = time_fn(cy_fn, img, radius)
            assert np.allclose(np_fn(img, radius), cy_fn(img, radius), atol=1e-9)
            print(
                f"{name:<14} {side}x{side:<6} {t_np * 1e3:9.2f}ms {t_cy * 1e3:9.2f}ms "
                f"{t_np / t_cy:7.1f}x"
            )

    # end-to-end: the full prior dehaze at a modest inference resolution
    from nsdehaze import _kernels
    from nsdehaze.physics import dcp_dehaze

    img = rng.random((512, 512, 3)) * 0.7 + 0.2
    t = time_fn(dcp_dehaze, img, repeats=3)
    print(f"\nprior dehaze 512x512 using {_kernels.BACKEND} backend: {t * 1e3:.0f} ms")


if __name__ == "__main__":
    main()
