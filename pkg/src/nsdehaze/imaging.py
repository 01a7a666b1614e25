"""Image containers, file I/O, and geometric augmentations.

An image is an H x W x 3 float64 array with values in [0, 1], channel order
R, G, B. All operations here are pure functions of their inputs (plus an
explicit seed where randomness is involved) and preserve the [0, 1] range.
"""

import os

import numpy as np
from PIL import Image as PILImage, UnidentifiedImageError
from dataclasses import dataclass

from .errors import ArgumentError, FormatError, IoError, NotFoundError, ShapeError

# 0.5x / 1x / 2x, the augmentation scales used by the multi-scale losses.
PYRAMID_SCALES = (0.5, 1.0, 2.0)

# ITU-R BT.601 luma weights, used wherever a grayscale view is needed.
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


def as_image(arr, clamp=False):
    """Validate (and optionally clamp) an array as an H x W x 3 image.

    Parameters
    ----------
    arr : array_like
        Candidate pixel data.
    clamp : bool
        If True, clip finite values into [0, 1] instead of rejecting them.

    Returns
    -------
    np.ndarray
        float64 H x W x 3 array in [0, 1].
    """
    img = np.asarray(arr, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ShapeError(f"expected H x W x 3 image, got shape {img.shape}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise ShapeError(f"degenerate image shape {img.shape}")
    if not np.all(np.isfinite(img)):
        raise ArgumentError("image contains non-finite values")
    if clamp:
        return np.clip(img, 0.0, 1.0)
    if img.min() < 0.0 or img.max() > 1.0:
        raise ArgumentError(
            f"image values outside [0, 1]: min={img.min():.4g} max={img.max():.4g}"
        )
    return img


def luminance(img):
    """BT.601 luma of an RGB image, as an H x W map."""
    return img @ LUMA_WEIGHTS


@dataclass
class ScalePyramid:
    """The three augmentation scales of one image: 0.5x, 1x, 2x."""

    levels: list

    def __post_init__(self):
        if len(self.levels) != 3:
            raise ArgumentError(f"pyramid needs exactly 3 levels, got {len(self.levels)}")


def load_image(path):
    """Load an 8-bit RGB raster file as a [0, 1] image.

    Each channel value is v / 255 exactly; no color transform is applied.
    """
    if not os.path.isfile(path):
        raise NotFoundError(f"no such image file: {path}")
    try:
        with PILImage.open(path) as f:
            if f.mode != "RGB":
                raise FormatError(f"{path}: expected 8-bit RGB, got mode {f.mode!r}")
            data = np.asarray(f, dtype=np.uint8)
    except UnidentifiedImageError as exc:
        raise FormatError(f"{path}: not a decodable raster file") from exc
    return data.astype(np.float64) / 255.0


def save_image(img, path):
    """Write an image as an 8-bit RGB PNG, rounding each channel to v*255.

    Only PNG output is supported; a round trip through ``load_image``
    changes each channel by at most 1/255.
    """
    img = as_image(img)
    if os.path.splitext(str(path))[1].lower() not in (".png",):
        raise FormatError(f"only PNG output is supported, got {path}")
    data = np.rint(img * 255.0).astype(np.uint8)
    try:
        PILImage.fromarray(data, mode="RGB").save(path, format="PNG")
    except (OSError, ValueError) as exc:
        raise IoError(f"cannot write image to {path}") from exc


def _resample_axis_coords(n_out, n_in):
    # Half-pixel-center mapping, matching bilinear resampling with
    # align_corners=False. Returns (low index, high index, high weight).
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1.0)
    lo = np.floor(src).astype(np.int64)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, src - lo


def resize(img, h, w):
    """Bilinear resize to exactly h x w.

    Output values are clipped to the input's [min, max] so interpolation
    round-off can never leave the input range.
    """
    img = as_image(img)
    if h < 1 or w < 1:
        raise ArgumentError(f"target dims must be positive, got {h}x{w}")
    r_lo, r_hi, r_t = _resample_axis_coords(h, img.shape[0])
    c_lo, c_hi, c_t = _resample_axis_coords(w, img.shape[1])
    r_t = r_t[:, None, None]
    c_t = c_t[None, :, None]
    top = img[r_lo][:, c_lo] * (1 - c_t) + img[r_lo][:, c_hi] * c_t
    bot = img[r_hi][:, c_lo] * (1 - c_t) + img[r_hi][:, c_hi] * c_t
    out = top * (1 - r_t) + bot * r_t
    return np.clip(out, img.min(), img.max())


def random_crop(img, h, w, seed):
    """Crop a seeded, uniformly placed h x w window.

    Returns
    -------
    (np.ndarray, (int, int))
        The crop and its (top, left) offset.
    """
    img = as_image(img)
    if h > img.shape[0] or w > img.shape[1]:
        raise ArgumentError(f"crop {h}x{w} larger than image {img.shape[:2]}")
    rng = np.random.default_rng(seed)
    top = int(rng.integers(0, img.shape[0] - h + 1))
    left = int(rng.integers(0, img.shape[1] - w + 1))
    return img[top : top + h, left : left + w].copy(), (top, left)


def center_crop(img, h, w):
    """Deterministic centered h x w crop."""
    img = as_image(img)
    if h > img.shape[0] or w > img.shape[1]:
        raise ArgumentError(f"crop {h}x{w} larger than image {img.shape[:2]}")
    top = (img.shape[0] - h) // 2
    left = (img.shape[1] - w) // 2
    return img[top : top + h, left : left + w].copy()


def rotate(img, degrees):
    """Rotate image content counter-clockwise about the image center.

    Bilinear sampling with edge replication outside the source; exact
    multiples of 90 degrees reduce to pure pixel permutations.
    """
    img = as_image(img)
    degrees = float(degrees) % 360.0
    if degrees in (0.0, 90.0, 180.0, 270.0):
        return np.rot90(img, k=int(degrees // 90)).copy()
    h, w = img.shape[:2]
    theta = np.deg2rad(degrees)
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    rr, cc = np.meshgrid(np.arange(h) - cy, np.arange(w) - cx, indexing="ij")
    src_c = cos_t * cc - sin_t * rr + cx
    src_r = sin_t * cc + cos_t * rr + cy
    src_r = np.clip(src_r, 0.0, h - 1.0)
    src_c = np.clip(src_c, 0.0, w - 1.0)
    r_lo = np.floor(src_r).astype(np.int64)
    c_lo = np.floor(src_c).astype(np.int64)
    r_hi = np.minimum(r_lo + 1, h - 1)
    c_hi = np.minimum(c_lo + 1, w - 1)
    r_t = (src_r - r_lo)[..., None]
    c_t = (src_c - c_lo)[..., None]
    top = img[r_lo, c_lo] * (1 - c_t) + img[r_lo, c_hi] * c_t
    bot = img[r_hi, c_lo] * (1 - c_t) + img[r_hi, c_hi] * c_t
    out = top * (1 - r_t) + bot * r_t
    return np.clip(out, 0.0, 1.0)


def pyramid(img):
    """Build the 0.5x / 1x / 2x scale pyramid; the 1x level is the input itself."""
    img = as_image(img)
    h, w = img.shape[:2]
    if h < 2 or w < 2:
        raise ShapeError(f"pyramid needs at least 2x2 input, got {h}x{w}")
    levels = []
    for s in PYRAMID_SCALES:
        if s == 1.0:
            levels.append(img)
        else:
            levels.append(resize(img, int(round(h * s)), int(round(w * s))))
    return ScalePyramid(levels)
