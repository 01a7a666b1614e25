"""Parameter-file-driven natural-image-quality score.

Scores an image by the Mahalanobis-style distance between its patchwise
natural-scene statistics and a fitted multivariate Gaussian of pristine
statistics. Without a model file the score is simply unavailable (None).

Model file layout: three fixed-width ASCII header lines (feature dimension,
byte offset of the mean vector, byte offset of the covariance matrix)
followed by little-endian float64 data.
"""

import math
import os

import numpy as np
from dataclasses import dataclass
from scipy.special import gamma as gamma_fn

from .errors import FormatError, NotFoundError
from .imaging import as_image, luminance

PATCH_SIZE = 16
_MSCN_WINDOW = 7
_MSCN_SIGMA = 7.0 / 6.0
_HEADER_FIELD_WIDTH = 20

_GAM_GRID = np.arange(0.2, 10.001, 0.001)
_GGD_RATIO = gamma_fn(1.0 / _GAM_GRID) * gamma_fn(3.0 / _GAM_GRID) / gamma_fn(2.0 / _GAM_GRID) ** 2
_AGGD_RATIO = gamma_fn(2.0 / _GAM_GRID) ** 2 / (gamma_fn(1.0 / _GAM_GRID) * gamma_fn(3.0 / _GAM_GRID))


@dataclass
class NiqeModel:
    mean: np.ndarray
    cov: np.ndarray


def _gaussian_window(size, sigma):
    half = (size - 1) / 2.0
    g = np.exp(-((np.arange(size) - half) ** 2) / (2.0 * sigma**2))
    k = np.outer(g, g)
    return k / k.sum()


def _filter_same(x, kernel):
    from numpy.lib.stride_tricks import sliding_window_view

    pad = kernel.shape[0] // 2
    padded = np.pad(x, pad, mode="edge")
    windows = sliding_window_view(padded, kernel.shape)
    return np.einsum("ijkl,kl->ij", windows, kernel)


def _mscn(x):
    kernel = _gaussian_window(_MSCN_WINDOW, _MSCN_SIGMA)
    mu = _filter_same(x, kernel)
    sigma = np.sqrt(np.maximum(_filter_same(x * x, kernel) - mu * mu, 0.0))
    return (x - mu) / (sigma + 1.0), sigma


def _fit_ggd(x):
    sigma_sq = np.mean(x**2)
    e_abs = np.mean(np.abs(x)) + 1e-12
    rho = sigma_sq / e_abs**2
    alpha = _GAM_GRID[np.argmin((_GGD_RATIO - rho) ** 2)]
    return alpha, sigma_sq


def _fit_aggd(x):
    left = x[x < 0]
    right = x[x >= 0]
    left_std = math.sqrt(np.mean(left**2)) if left.size else 1e-12
    right_std = math.sqrt(np.mean(right**2)) if right.size else 1e-12
    gammahat = left_std / (right_std + 1e-12)
    rhat = np.mean(np.abs(x)) ** 2 / (np.mean(x**2) + 1e-12)
    rhatnorm = rhat * (gammahat**3 + 1) * (gammahat + 1) / (gammahat**2 + 1) ** 2
    alpha = _GAM_GRID[np.argmin((_AGGD_RATIO - rhatnorm) ** 2)]
    mean = (right_std - left_std) * gamma_fn(2.0 / alpha) / gamma_fn(1.0 / alpha)
    return alpha, mean, left_std**2, right_std**2


def _patch_features(patch):
    feats = [*_fit_ggd(patch)]
    for dy, dx in ((0, 1), (1, 0), (1, 1), (1, -1)):
        if dx >= 0:
            prod = patch[: patch.shape[0] - dy, : patch.shape[1] - dx] * patch[dy:, dx:]
        else:
            prod = patch[: patch.shape[0] - dy, -dx:] * patch[dy:, : patch.shape[1] + dx]
        feats.extend(_fit_aggd(prod))
    return feats


def _half_size(x):
    h, w = (x.shape[0] // 2) * 2, (x.shape[1] // 2) * 2
    x = x[:h, :w]
    return 0.25 * (x[0::2, 0::2] + x[1::2, 0::2] + x[0::2, 1::2] + x[1::2, 1::2])


def image_features(img, sharpness_frac=None):
    """Per-patch 36-dim feature matrix over two scales.

    ``sharpness_frac`` keeps only patches whose mean local contrast exceeds
    that fraction of the sharpest patch (used when fitting a model).
    """
    x = luminance(as_image(img))
    if min(x.shape) < 2 * PATCH_SIZE:
        raise FormatError(f"image must be at least {2 * PATCH_SIZE} per side for scoring")
    rows = []
    sharpness = []
    scales = []
    for scale in (1, 2):
        mscn, sigma = _mscn(x)
        scales.append((mscn, sigma))
        x = _half_size(x)
    p1 = PATCH_SIZE
    for i in range(0, scales[0][0].shape[0] - p1 + 1, p1):
        for j in range(0, scales[0][0].shape[1] - p1 + 1, p1):
            feats = _patch_features(scales[0][0][i : i + p1, j : j + p1])
            p2 = p1 // 2
            feats += _patch_features(scales[1][0][i // 2 : i // 2 + p2, j // 2 : j // 2 + p2])
            rows.append(feats)
            sharpness.append(scales[0][1][i : i + p1, j : j + p1].mean())
    feats = np.asarray(rows, dtype=np.float64)
    if sharpness_frac is not None:
        sharp = np.asarray(sharpness)
        keep = sharp >= sharpness_frac * sharp.max()
        feats = feats[keep]
    return feats


def fit_model(images, sharpness_frac=0.75):
    """Fit the pristine-statistics Gaussian from a set of clean images."""
    feats = np.vstack([image_features(img, sharpness_frac=sharpness_frac) for img in images])
    return NiqeModel(mean=feats.mean(axis=0), cov=np.cov(feats, rowvar=False))


def save_model(model, path):
    dim = model.mean.size
    header_len = 3 * (_HEADER_FIELD_WIDTH + 1)
    mean_off = header_len
    cov_off = mean_off + 8 * dim
    header = "".join(
        f"{v:0{_HEADER_FIELD_WIDTH}d}\n" for v in (dim, mean_off, cov_off)
    ).encode("ascii")
    with open(path, "wb") as f:
        f.write(header)
        f.write(model.mean.astype("<f8").tobytes())
        f.write(model.cov.astype("<f8").reshape(-1).tobytes())


def load_model(path):
    if not os.path.isfile(path):
        raise NotFoundError(f"no such model file: {path}")
    with open(path, "rb") as f:
        blob = f.read()
    try:
        lines = blob.split(b"\n", 3)
        dim, mean_off, cov_off = (int(lines[k]) for k in range(3))
        mean = np.frombuffer(blob, dtype="<f8", count=dim, offset=mean_off)
        cov = np.frombuffer(blob, dtype="<f8", count=dim * dim, offset=cov_off)
    except (ValueError, IndexError) as exc:
        raise FormatError(f"malformed model file: {path}") from exc
    if mean.size != dim or cov.size != dim * dim:
        raise FormatError(f"truncated model file: {path}")
    return NiqeModel(mean=mean.copy(), cov=cov.reshape(dim, dim).copy())


def niqe(img, model_path=None):
    """Distance between the image's patch statistics and the fitted model.

    Returns None when no model file is given. Lower is better.
    """
    if model_path is None:
        return None
    model = model_path if isinstance(model_path, NiqeModel) else load_model(model_path)
    feats = image_features(img)
    mu_img = feats.mean(axis=0)
    cov_img = np.cov(feats, rowvar=False) if feats.shape[0] > 1 else np.zeros_like(model.cov)
    if mu_img.size != model.mean.size:
        raise FormatError(
            f"model dimension {model.mean.size} does not match features {mu_img.size}"
        )
    diff = model.mean - mu_img
    pooled = np.linalg.pinv((model.cov + cov_img) / 2.0)
    return float(np.sqrt(max(diff @ pooled @ diff, 0.0)))
