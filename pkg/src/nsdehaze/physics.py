"""Atmospheric scattering model and the classical prior machinery.

Implements haze composition/inversion, the dark channel prior, the constant
airlight and transmission estimates built on it, an edge-preserving guided
filter, and the rough prior-based dehaze that seeds the learned generator.
"""

import numpy as np
from dataclasses import dataclass

from . import _kernels
from .errors import ArgumentError, ShapeError
from .imaging import as_image, luminance


@dataclass
class DcpConfig:
    """Defaults for the classical prior pipeline."""

    patch_radius: int = 7
    omega: float = 0.95
    top_frac: float = 0.001
    t_floor: float = 0.05
    gf_radius: int = 20
    gf_eps: float = 1e-3


def _check_same_hw(*arrays):
    shapes = {a.shape[:2] for a in arrays}
    if len(shapes) != 1:
        raise ShapeError(f"inputs must share H x W, got {sorted(shapes)}")


def compose_haze(clear, t, airlight):
    """Blend scene radiance with airlight: hazy = clear * t + airlight * (1 - t)."""
    clear = as_image(clear)
    airlight = as_image(airlight)
    t = np.asarray(t, dtype=np.float64)
    _check_same_hw(clear, t, airlight)
    return np.clip(clear * t + airlight * (1.0 - t), 0.0, 1.0)


def invert_haze(hazy, t, airlight, t_floor=0.05):
    """Solve the scattering model for scene radiance, flooring transmission."""
    hazy = as_image(hazy)
    airlight = as_image(airlight)
    t = np.asarray(t, dtype=np.float64)
    _check_same_hw(hazy, t, airlight)
    if t_floor <= 0:
        raise ArgumentError(f"t_floor must be positive, got {t_floor}")
    clear = (hazy - airlight * (1.0 - t)) / np.maximum(t, t_floor)
    return np.clip(clear, 0.0, 1.0)


def dark_channel(img, patch_radius=7):
    """Per-patch minimum over space and channels.

    Windows are truncated at the borders; the result is an H x W map.
    """
    img = as_image(img)
    if patch_radius < 0:
        raise ArgumentError(f"patch_radius must be >= 0, got {patch_radius}")
    return _kernels.min_filter2d(img.min(axis=2), patch_radius)


def dcp_airlight(img, dark, top_frac=0.001):
    """Constant airlight: mean RGB over the brightest dark-channel pixels.

    The ceil(top_frac * H * W) pixels with the largest dark-channel values
    are selected; ties break in row-major order.
    """
    img = as_image(img)
    dark = np.asarray(dark, dtype=np.float64)
    _check_same_hw(img, dark)
    if not 0 < top_frac <= 1:
        raise ArgumentError(f"top_frac must be in (0, 1], got {top_frac}")
    n_pixels = dark.size
    n_sel = int(np.ceil(top_frac * n_pixels))
    flat = dark.reshape(-1)
    # Stable sort on negated values keeps row-major order among ties.
    order = np.argsort(-flat, kind="stable")[:n_sel]
    return img.reshape(-1, 3)[order].mean(axis=0)


def dcp_transmission(img, airlight_rgb, omega=0.95, patch_radius=7, t_floor=0.05):
    """Prior transmission estimate: 1 - omega * dark_channel(I / A).

    Returns three identical channels, floored at ``t_floor``.
    """
    img = as_image(img)
    airlight_rgb = np.asarray(airlight_rgb, dtype=np.float64).reshape(3)
    if np.any(airlight_rgb <= 0):
        raise ArgumentError(f"airlight components must be positive, got {airlight_rgb}")
    if not 0 < omega <= 1:
        raise ArgumentError(f"omega must be in (0, 1], got {omega}")
    normalized = (img / airlight_rgb).min(axis=2)
    dark = _kernels.min_filter2d(normalized, patch_radius)
    t = np.maximum(1.0 - omega * dark, t_floor)
    return np.repeat(t[:, :, None], 3, axis=2)


def guided_filter(guide, src, radius, eps):
    """Edge-preserving filter: output is locally affine in the guide.

    A 3-channel guide is reduced to its luma; a 3-channel ``src`` is
    filtered per channel. Box means use truncated windows.
    """
    guide = np.asarray(guide, dtype=np.float64)
    src = np.asarray(src, dtype=np.float64)
    _check_same_hw(guide, src)
    if eps <= 0:
        raise ArgumentError(f"eps must be positive, got {eps}")
    g = luminance(guide) if guide.ndim == 3 else guide
    if src.ndim == 3:
        channels = [_guided_filter_gray(g, src[:, :, c], radius, eps) for c in range(src.shape[2])]
        return np.stack(channels, axis=2)
    return _guided_filter_gray(g, src, radius, eps)


def _guided_filter_gray(g, s, radius, eps):
    counts = _kernels.box_count2d(g.shape[0], g.shape[1], radius)

    def mean(x):
        return _kernels.box_sum2d(x, radius) / counts

    mean_g = mean(g)
    mean_s = mean(s)
    var_g = mean(g * g) - mean_g * mean_g
    cov_gs = mean(g * s) - mean_g * mean_s
    a = cov_gs / (var_g + eps)
    b = mean_s - a * mean_g
    return mean(a) * g + mean(b)


def dcp_dehaze(img, cfg=None):
    """Rough prior-based dehaze: dark channel -> airlight -> transmission
    -> guided-filter refinement -> inversion.

    This is the fixed, non-learned preprocessing that produces the
    generator's input.
    """
    cfg = cfg or DcpConfig()
    img = as_image(img)
    dark = dark_channel(img, cfg.patch_radius)
    airlight_rgb = dcp_airlight(img, dark, cfg.top_frac)
    t = dcp_transmission(img, airlight_rgb, cfg.omega, cfg.patch_radius, cfg.t_floor)
    t_refined = _guided_filter_gray(luminance(img), t[:, :, 0], cfg.gf_radius, cfg.gf_eps)
    t_refined = np.clip(t_refined, cfg.t_floor, 1.0)
    t3 = np.repeat(t_refined[:, :, None], 3, axis=2)
    airlight_map = np.clip(np.broadcast_to(airlight_rgb, img.shape), 0.0, 1.0)
    return invert_haze(img, t3, airlight_map, cfg.t_floor)
