"""Shared differentiable ops: tensor bridging, pyramids, box/guided filters,
and the structural-similarity term used by the reconstruction loss.

Everything here mirrors the numpy definitions in ``imaging``/``physics``/
``metrics`` closely enough to cross-check against them; those numpy
versions stay the oracle side.
"""

import numpy as np
import torch
import torch.nn.functional as F

from .errors import ShapeError
from .imaging import LUMA_WEIGHTS, PYRAMID_SCALES
from .metrics import SSIM_K1, SSIM_K2, SSIM_SIGMA, SSIM_WINDOW, gaussian_kernel


def to_tensor(img, dtype=torch.float32):
    """H x W x 3 (or B x H x W x 3) numpy image -> B x 3 x H x W tensor."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 3:
        arr = arr[None]
    if arr.ndim != 4 or arr.shape[-1] != 3:
        raise ShapeError(f"expected (B x) H x W x 3, got {arr.shape}")
    return torch.from_numpy(np.ascontiguousarray(arr.transpose(0, 3, 1, 2))).to(dtype)


def to_image(tensor):
    """B x 3 x H x W tensor -> H x W x 3 float64 image (first batch item)."""
    arr = tensor.detach().cpu().numpy().astype(np.float64)
    return np.clip(arr[0].transpose(1, 2, 0), 0.0, 1.0)


def luminance_t(x):
    """BT.601 luma of a B x 3 x H x W tensor, keeping the channel dim."""
    w = torch.as_tensor(LUMA_WEIGHTS, dtype=x.dtype, device=x.device)
    return (x * w.view(1, 3, 1, 1)).sum(dim=1, keepdim=True)


def scale_levels(x, scales=PYRAMID_SCALES):
    """Bilinear rescales of a B x C x H x W tensor; scale 1 is x itself."""
    h, w = x.shape[-2:]
    out = []
    for s in scales:
        if s == 1.0:
            out.append(x)
        else:
            out.append(
                F.interpolate(
                    x,
                    size=(int(round(h * s)), int(round(w * s))),
                    mode="bilinear",
                    align_corners=False,
                )
            )
    return out


def _box_sum_1d(x, radius, dim):
    n = x.shape[dim]
    cs = torch.cumsum(x, dim=dim)
    idx_hi = torch.clamp(torch.arange(n, device=x.device) + radius, max=n - 1)
    idx_lo = torch.arange(n, device=x.device) - radius - 1
    upper = cs.index_select(dim, idx_hi)
    lower = cs.index_select(dim, idx_lo.clamp(min=0))
    shape = [1] * x.dim()
    shape[dim] = n
    mask = (idx_lo >= 0).to(x.dtype).view(shape)
    return upper - lower * mask


def box_sum_t(x, radius):
    """Truncated-window box sum over the last two dims of B x C x H x W."""
    return _box_sum_1d(_box_sum_1d(x, radius, -2), radius, -1)


def box_count_t(h, w, radius, device=None):
    ones = torch.ones(1, 1, h, w, dtype=torch.float64, device=device)
    return box_sum_t(ones, radius)


def guided_filter_t(guide, src, radius, eps):
    """Differentiable guided filter; 3-channel guides reduce to luma.

    Box statistics run in float64 so window sums stay accurate on large
    inputs; the result is cast back to the input dtype.
    """
    if guide.shape[-2:] != src.shape[-2:]:
        raise ShapeError(f"guide {tuple(guide.shape)} vs src {tuple(src.shape)}")
    dtype = src.dtype
    g = luminance_t(guide) if guide.shape[1] == 3 else guide
    g = g.to(torch.float64)
    s = src.to(torch.float64)
    counts = box_count_t(g.shape[-2], g.shape[-1], radius, device=g.device)

    def mean(x):
        return box_sum_t(x, radius) / counts

    mean_g = mean(g)
    mean_s = mean(s)
    var_g = mean(g * g) - mean_g * mean_g
    cov_gs = mean(g * s) - mean_g * mean_s
    a = cov_gs / (var_g + eps)
    b = mean_s - a * mean_g
    return (mean(a) * g + mean(b)).to(dtype)


def ssim_t(x, y):
    """Differentiable mean SSIM on luminance; same constants as ``metrics.ssim``."""
    if x.shape != y.shape:
        raise ShapeError(f"shape mismatch: {tuple(x.shape)} vs {tuple(y.shape)}")
    if min(x.shape[-2:]) < SSIM_WINDOW:
        raise ShapeError(f"input smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window")
    lx = luminance_t(x)
    ly = luminance_t(y)
    kernel = torch.as_tensor(
        gaussian_kernel(SSIM_WINDOW, SSIM_SIGMA), dtype=x.dtype, device=x.device
    ).view(1, 1, SSIM_WINDOW, SSIM_WINDOW)
    mu_x = F.conv2d(lx, kernel)
    mu_y = F.conv2d(ly, kernel)
    var_x = F.conv2d(lx * lx, kernel) - mu_x**2
    var_y = F.conv2d(ly * ly, kernel) - mu_y**2
    cov = F.conv2d(lx * ly, kernel) - mu_x * mu_y
    c1 = SSIM_K1**2
    c2 = SSIM_K2**2
    ssim_map = ((2 * mu_x * mu_y + c1) * (2 * cov + c2)) / (
        (mu_x**2 + mu_y**2 + c1) * (var_x + var_y + c2)
    )
    return ssim_map.mean()
