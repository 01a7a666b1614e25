"""Inference: run the trained pipeline on arbitrary images.

Inputs are padded (symmetric reflection) to the next multiple of 16 so all
network stride constraints hold, then cropped back.
"""

import os

import numpy as np
import torch

from ..imaging import as_image, load_image, save_image
from ..networks import load_bundle, shared_encode
from ..physics import DcpConfig, dark_channel, dcp_dehaze
from ..torchops import to_image, to_tensor

PAD_MULTIPLE = 16


def _pad_to_multiple(img, k=PAD_MULTIPLE):
    h, w = img.shape[:2]
    ph = (-h) % k
    pw = (-w) % k
    if ph == 0 and pw == 0:
        return img, (h, w)
    padded = np.pad(img, ((0, ph), (0, pw), (0, 0)), mode="symmetric")
    return padded, (h, w)


def run_model(bundle, img, dcp_cfg=None):
    """Dehaze one image; returns the output and the side maps.

    Side maps: three-channel transmission, airlight field, and an attention
    heatmap (attended-feature magnitude, normalized per image).
    """
    img = as_image(img)
    dcp_cfg = dcp_cfg or DcpConfig()
    padded, (h, w) = _pad_to_multiple(img)
    rough = dcp_dehaze(padded, dcp_cfg)
    dark3 = np.repeat(dark_channel(padded, dcp_cfg.patch_radius)[:, :, None], 3, axis=2)

    for module in bundle.components().values():
        module.eval()
    with torch.no_grad():
        hazy_t = to_tensor(padded)
        dehazed = bundle.generator(to_tensor(rough))
        f_dark, f_hazy = shared_encode(bundle.shared_encoder, to_tensor(dark3), hazy_t)
        airlight = bundle.airlight_attention(f_dark, f_hazy)
        trans = bundle.transmission(hazy_t)
        heat = airlight.attention.abs().mean(dim=1, keepdim=True)
        heat = (heat - heat.min()) / (heat.max() - heat.min() + 1e-12)
    for module in bundle.components().values():
        module.train()

    out = to_image(dehazed)[:h, :w]
    side = {
        "transmission": to_image(trans)[:h, :w],
        "airlight": to_image(airlight.a_inf)[:h, :w],
        "attention": to_image(heat.expand(-1, 3, -1, -1))[:h, :w],
    }
    return out, side


def dehaze(model, img_path, out_path, save_maps=False, dcp_cfg=None):
    """Dehaze an image file and write the result (plus optional side maps)."""
    bundle = load_bundle(model) if isinstance(model, (str, os.PathLike)) else model
    img = load_image(img_path)
    out, side = run_model(bundle, img, dcp_cfg)
    save_image(out, out_path)
    if save_maps:
        stem, ext = os.path.splitext(str(out_path))
        for name, data in side.items():
            save_image(data, f"{stem}_{name}{ext}")
    return out
