"""Evaluation metrics: PSNR, SSIM, and a dark-channel fog-density proxy.

``fog_density`` is NOT the published fog-aware density evaluator; it is a
documented monotone stand-in (mean dark channel), suitable for directional
comparisons only. The optional no-reference naturalness score lives in
``niqe``.
"""

import numpy as np
from dataclasses import dataclass
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ShapeError
from .imaging import as_image, luminance
from .physics import dark_channel

PSNR_CAP = 99.0

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


@dataclass
class MetricReport:
    psnr: float
    ssim: float
    fog_density: float
    niqe: float | None = None


def psnr(a, b):
    """Peak signal-to-noise ratio in dB over unit dynamic range.

    Identical images return the cap value 99.0 instead of infinity.
    """
    a = as_image(a)
    b = as_image(b)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")
    mse = np.mean((a - b) ** 2)
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, float(10.0 * np.log10(1.0 / mse)))


def gaussian_kernel(size=SSIM_WINDOW, sigma=SSIM_SIGMA):
    """Normalized 2-D Gaussian window."""
    half = (size - 1) / 2.0
    coords = np.arange(size) - half
    g = np.exp(-(coords**2) / (2.0 * sigma**2))
    k = np.outer(g, g)
    return k / k.sum()


def _filter_valid(x, kernel):
    # Exact valid-mode correlation via window views; fine at metric sizes.
    windows = sliding_window_view(x, kernel.shape)
    return np.einsum("ijkl,kl->ij", windows, kernel)


def ssim(a, b):
    """Mean local structural similarity on the luminance channel.

    Gaussian-weighted 11x11 windows, valid borders, unit dynamic range.
    """
    a = as_image(a)
    b = as_image(b)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")
    if min(a.shape[:2]) < SSIM_WINDOW:
        raise ShapeError(f"image smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window")
    x = luminance(a)
    y = luminance(b)
    kernel = gaussian_kernel()
    mu_x = _filter_valid(x, kernel)
    mu_y = _filter_valid(y, kernel)
    var_x = _filter_valid(x * x, kernel) - mu_x**2
    var_y = _filter_valid(y * y, kernel) - mu_y**2
    cov = _filter_valid(x * y, kernel) - mu_x * mu_y
    c1 = SSIM_K1**2
    c2 = SSIM_K2**2
    ssim_map = ((2 * mu_x * mu_y + c1) * (2 * cov + c2)) / (
        (mu_x**2 + mu_y**2 + c1) * (var_x + var_y + c2)
    )
    return float(ssim_map.mean())


def fog_density(img):
    """Mean dark-channel value (radius 7): more haze reads higher."""
    return float(dark_channel(as_image(img), 7).mean())


def evaluate_pair(output, reference=None, niqe_model=None):
    """Bundle the metric set for one image (reference optional)."""
    from .niqe import niqe as niqe_score

    return MetricReport(
        psnr=psnr(output, reference) if reference is not None else float("nan"),
        ssim=ssim(output, reference) if reference is not None else float("nan"),
        fog_density=fog_density(output),
        niqe=niqe_score(output, niqe_model) if niqe_model is not None else None,
    )
