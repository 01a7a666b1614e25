"""Synthetic non-aligned pair generation and manifest-driven iteration.

Toy scenes are procedural (gradients, rectangles, smoothed noise) so the
feature-based losses have structure to match. Haze is synthesized from a
per-channel scattering coefficient and a depth map; the clear reference is
deliberately misaligned by a seeded shift and rotation before being saved.
"""

import json
import math
import os

import numpy as np
from dataclasses import dataclass, field

from .errors import ArgumentError, IoError, NotFoundError, ShapeError
from .imaging import as_image, center_crop, load_image, rotate, save_image
from .physics import compose_haze


@dataclass
class SynthConfig:
    """Haze synthesis parameters: per-channel scattering, airlight, depth."""

    beta: np.ndarray
    airlight: np.ndarray
    depth: np.ndarray
    seed: int = 0

    def __post_init__(self):
        self.beta = np.asarray(self.beta, dtype=np.float64).reshape(3)
        self.airlight = np.asarray(self.airlight, dtype=np.float64)
        self.depth = np.asarray(self.depth, dtype=np.float64)
        if np.any(self.beta <= 0):
            raise ArgumentError(f"beta components must be positive, got {self.beta}")
        if np.any(self.depth < 0) or not np.all(np.isfinite(self.depth)):
            raise ArgumentError("depth must be finite and non-negative")


@dataclass
class MisalignSpec:
    """Shift magnitude, rotation, and crop geometry for one reference."""

    shift_px: int = 0
    rotation_deg: float = 0.0
    crop_size: tuple = (256, 256)
    seed: int = 0

    def __post_init__(self):
        if self.shift_px < 0:
            raise ArgumentError(f"shift_px must be >= 0, got {self.shift_px}")
        if not 0.0 <= self.rotation_deg <= 90.0:
            raise ArgumentError(f"rotation_deg must be in [0, 90], got {self.rotation_deg}")


@dataclass
class PairRecord:
    hazy: str
    ref: str
    shift_px: int
    rotation_deg: float
    split: str
    clear: str = ""  # ground truth; present only for synthetic data


@dataclass
class PairManifest:
    records: list = field(default_factory=list)

    def split(self, tag):
        return [r for r in self.records if r.split == tag]


def misalignment_scale(shift_px, crop_w):
    """Shift magnitude as a fraction of crop width, truncated to 3 decimals."""
    return math.floor(shift_px / crop_w * 1000) / 1000


def synth_hazy(clear, cfg):
    """Haze a clear image: t = exp(-beta * depth) per channel, then compose.

    Returns the hazy image and the ground-truth transmission map.
    """
    clear = as_image(clear)
    if cfg.depth.shape != clear.shape[:2]:
        raise ShapeError(f"depth {cfg.depth.shape} does not match image {clear.shape[:2]}")
    t = np.exp(-cfg.beta[None, None, :] * cfg.depth[:, :, None])
    airlight = np.broadcast_to(np.clip(cfg.airlight, 0.0, 1.0), clear.shape)
    return compose_haze(clear, t, airlight), t


_COMPASS = [
    (-1.0, 0.0), (-1.0, 1.0), (0.0, 1.0), (1.0, 1.0),
    (1.0, 0.0), (1.0, -1.0), (0.0, -1.0), (-1.0, -1.0),
]


def _draw_shift(shift_px, rng):
    # Uniform over 8 compass directions at the given magnitude.
    dy, dx = _COMPASS[int(rng.integers(0, 8))]
    norm = math.hypot(dy, dx)
    return int(round(shift_px * dy / norm)), int(round(shift_px * dx / norm))


def misalign_reference(ref, spec):
    """Cut a shifted crop from a reference canvas, then rotate it.

    The crop sits at the centered base offset plus a seeded shift of
    magnitude ``spec.shift_px`` in a random compass direction.
    """
    ref = as_image(ref)
    ch, cw = spec.crop_size
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 0x5F1D]))
    dy, dx = _draw_shift(spec.shift_px, rng)
    top = (ref.shape[0] - ch) // 2 + dy
    left = (ref.shape[1] - cw) // 2 + dx
    if top < 0 or left < 0 or top + ch > ref.shape[0] or left + cw > ref.shape[1]:
        raise ArgumentError(
            f"shifted crop out of bounds: offset ({top}, {left}), crop {ch}x{cw}, "
            f"canvas {ref.shape[:2]}"
        )
    crop = ref[top : top + ch, left : left + cw].copy()
    if spec.rotation_deg != 0.0:
        crop = rotate(crop, spec.rotation_deg)
    return crop


def _smooth_noise(rng, h, w, cells=6):
    # Low-frequency texture: bilinearly upsampled coarse noise.
    coarse = rng.random((cells, cells, 3))
    from .imaging import resize

    return resize(np.clip(coarse, 0, 1), h, w)


def make_scene(h, w, seed):
    """Procedural clear scene: gradient + rectangles + soft texture."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xC1E2]))
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    gdir = rng.uniform(0, 2 * np.pi)
    ramp = (np.cos(gdir) * xx / max(w - 1, 1) + np.sin(gdir) * yy / max(h - 1, 1) + 1) / 2
    img = ramp[:, :, None] * rng.uniform(0.3, 0.8, 3)[None, None, :]
    for _ in range(int(rng.integers(4, 9))):
        rh = int(rng.integers(max(2, h // 8), max(3, h // 2)))
        rw = int(rng.integers(max(2, w // 8), max(3, w // 2)))
        r0 = int(rng.integers(0, h - rh + 1))
        c0 = int(rng.integers(0, w - rw + 1))
        img[r0 : r0 + rh, c0 : c0 + rw] = rng.uniform(0.05, 0.95, 3)
    img = 0.8 * img + 0.2 * _smooth_noise(rng, h, w)
    return np.clip(img, 0.0, 1.0)


def make_depth(h, w, seed, d_max=2.5):
    """Depth ramp in a random direction plus a soft radial bump.

    A 30% floor keeps every pixel visibly hazed once composed.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xDE11]))
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    gdir = rng.uniform(0, 2 * np.pi)
    ramp = (np.cos(gdir) * xx / max(w - 1, 1) + np.sin(gdir) * yy / max(h - 1, 1) + 1) / 2
    cy, cx = rng.uniform(0.2, 0.8) * h, rng.uniform(0.2, 0.8) * w
    blob = np.exp(-(((yy - cy) / (0.4 * h)) ** 2 + ((xx - cx) / (0.4 * w)) ** 2))
    depth = d_max * (0.3 + 0.7 * (0.7 * ramp + 0.3 * blob))
    return np.clip(depth, 0.0, None)


def make_toy_dataset(
    n_pairs,
    size,
    out_dir,
    seed=0,
    shift_px=4,
    rotation_deg=0.0,
    n_test=0,
    beta_range=(0.5, 2.0),
    airlight_range=(0.6, 0.95),
    d_max=2.5,
):
    """Generate a seeded synthetic dataset of non-aligned hazy/clear pairs.

    Writes ``hazy/NNN.png`` and ``ref/NNN.png`` (the pair files referenced
    by the manifest) plus ``clear/NNN.png`` ground truth, and a
    ``manifest.jsonl``. The last ``n_test`` records are tagged "test".
    """
    if n_pairs < 1:
        raise ArgumentError(f"n_pairs must be >= 1, got {n_pairs}")
    h, w = size
    pad = shift_px + 4
    try:
        for sub in ("hazy", "ref", "clear"):
            os.makedirs(os.path.join(out_dir, sub), exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create dataset directory {out_dir}") from exc

    records = []
    for i in range(n_pairs):
        rng = np.random.default_rng(np.random.SeedSequence([seed, i, 0xDA7A]))
        canvas = make_scene(h + 2 * pad, w + 2 * pad, seed=int(rng.integers(2**31)))
        clear = center_crop(canvas, h, w)
        cfg = SynthConfig(
            beta=rng.uniform(*beta_range, 3),
            airlight=rng.uniform(*airlight_range, 3),
            depth=make_depth(h, w, seed=int(rng.integers(2**31)), d_max=d_max),
        )
        hazy, _ = synth_hazy(clear, cfg)
        spec = MisalignSpec(
            shift_px=shift_px,
            rotation_deg=rotation_deg,
            crop_size=(h, w),
            seed=int(rng.integers(2**31)),
        )
        ref = misalign_reference(canvas, spec)

        paths = {k: os.path.join(out_dir, k, f"{i:03d}.png") for k in ("hazy", "ref", "clear")}
        save_image(hazy, paths["hazy"])
        save_image(ref, paths["ref"])
        save_image(clear, paths["clear"])
        records.append(
            PairRecord(
                hazy=paths["hazy"],
                ref=paths["ref"],
                shift_px=shift_px,
                rotation_deg=rotation_deg,
                split="test" if i >= n_pairs - n_test else "train",
                clear=paths["clear"],
            )
        )

    manifest = PairManifest(records)
    save_manifest(manifest, os.path.join(out_dir, "manifest.jsonl"))
    return manifest


def save_manifest(manifest, path):
    with open(path, "w") as f:
        for r in manifest.records:
            row = {
                "hazy": r.hazy,
                "ref": r.ref,
                "shift_px": r.shift_px,
                "rotation_deg": r.rotation_deg,
                "split": r.split,
            }
            if r.clear:
                row["clear"] = r.clear
            f.write(json.dumps(row) + "\n")


def load_manifest(path):
    """Read a JSON-lines manifest, checking that referenced files exist."""
    if not os.path.isfile(path):
        raise NotFoundError(f"no such manifest: {path}")
    records = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            rec = PairRecord(
                hazy=row["hazy"],
                ref=row["ref"],
                shift_px=int(row["shift_px"]),
                rotation_deg=float(row["rotation_deg"]),
                split=row["split"],
                clear=row.get("clear", ""),
            )
            for p in (rec.hazy, rec.ref):
                if not os.path.isfile(p):
                    raise NotFoundError(f"manifest references missing file: {p}")
            records.append(rec)
    return PairManifest(records)


def epoch_order(n, seed, epoch):
    """Seeded permutation of record indices for one epoch."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, epoch, 0x0EDE]))
    return rng.permutation(n)


def prepare_pair(record, train_prep, seed, step_key, resize_to=None, crop=None):
    """Load one pair and apply the misalignment-inducing train prep.

    Training applies resize followed by independent random crops of the
    hazy and reference images; eval applies deterministic center crops.
    """
    from .imaging import random_crop, resize as resize_op

    hazy = load_image(record.hazy)
    ref = load_image(record.ref)
    if resize_to is not None:
        hazy = resize_op(hazy, resize_to, resize_to)
        ref = resize_op(ref, resize_to, resize_to)
    if crop is not None:
        if train_prep:
            hazy, _ = random_crop(hazy, crop, crop, np.random.SeedSequence([seed, *step_key, 0]))
            ref, _ = random_crop(ref, crop, crop, np.random.SeedSequence([seed, *step_key, 1]))
        else:
            hazy = center_crop(hazy, crop, crop)
            ref = center_crop(ref, crop, crop)
    return hazy, ref


def iterate_batches(manifest, batch, train_prep, seed, resize_to=None, crop=None, epochs=1):
    """Yield (hazy, ref) batches as B x H x W x 3 arrays.

    Training shuffles the epoch order per seed and drops the final partial
    batch; eval keeps manifest order and yields every record.
    """
    if batch < 1:
        raise ArgumentError(f"batch must be >= 1, got {batch}")
    records = manifest.records
    if not records:
        raise ArgumentError("empty manifest")
    n = len(records)
    for epoch in range(epochs):
        order = epoch_order(n, seed, epoch) if train_prep else np.arange(n)
        stop = (n // batch) * batch if train_prep else n
        for start in range(0, stop, batch):
            idx = order[start : start + batch]
            pairs = [
                prepare_pair(
                    records[int(k)], train_prep, seed, (epoch, start, int(k)), resize_to, crop
                )
                for k in idx
            ]
            yield np.stack([p[0] for p in pairs]), np.stack([p[1] for p in pairs])
