"""Evaluation runner: per-image and mean metrics over a manifest split.

When a record carries synthetic ground truth, fidelity metrics compare the
dehazed output against that true clear image, never against the misaligned
reference. Fog density is reported for both the output and the hazy input.
"""

import math
import os

from ..data import load_manifest
from ..errors import ArgumentError
from ..imaging import load_image
from ..metrics import fog_density, psnr, ssim
from ..niqe import niqe as niqe_score
from .infer import run_model

CSV_COLUMNS = (
    "index",
    "psnr",
    "ssim",
    "psnr_input",
    "fog_density_output",
    "fog_density_input",
    "niqe",
)


def evaluate(bundle, manifest, split="test", niqe_model=None, dcp_cfg=None):
    """Metrics table for one split; returns (rows, means)."""
    records = manifest.split(split)
    if not records:
        raise ArgumentError(f"manifest has no {split!r} records")
    rows = []
    for i, rec in enumerate(records):
        hazy = load_image(rec.hazy)
        out, _ = run_model(bundle, hazy, dcp_cfg)
        row = {"index": i, "fog_density_output": fog_density(out), "fog_density_input": fog_density(hazy)}
        if rec.clear:
            clear = load_image(rec.clear)
            row["psnr"] = psnr(out, clear)
            row["ssim"] = ssim(out, clear)
            row["psnr_input"] = psnr(hazy, clear)
        else:
            row["psnr"] = row["ssim"] = row["psnr_input"] = float("nan")
        score = niqe_score(out, niqe_model) if niqe_model is not None else None
        row["niqe"] = float("nan") if score is None else score
        rows.append(row)
    means = {
        key: _nanmean([r[key] for r in rows])
        for key in CSV_COLUMNS
        if key != "index"
    }
    return rows, means


def _nanmean(values):
    kept = [float(v) for v in values if not math.isnan(v)]
    return sum(kept) / len(kept) if kept else float("nan")


def write_metrics_csv(rows, means, path):
    with open(path, "w") as f:
        f.write(",".join(CSV_COLUMNS) + "\n")
        for row in rows:
            f.write(",".join(str(row[c]) for c in CSV_COLUMNS) + "\n")
        f.write(",".join(["mean"] + [repr(means[c]) for c in CSV_COLUMNS if c != "index"]) + "\n")


def evaluate_manifest_path(bundle, manifest_path, split="test", out_csv=None, niqe_model=None):
    manifest = load_manifest(manifest_path)
    rows, means = evaluate(bundle, manifest, split=split, niqe_model=niqe_model)
    if out_csv:
        os.makedirs(os.path.dirname(out_csv) or ".", exist_ok=True)
        write_metrics_csv(rows, means, out_csv)
    return rows, means
