"""Command-line entry point.

Subcommands: ``synth`` (toy dataset), ``train``, ``eval``, ``dehaze``,
``study``. Training reads a JSON config mirroring TrainConfig.
"""

import argparse
import os
import sys

from ..data import load_manifest, make_toy_dataset
from ..networks import load_bundle
from .config import TrainConfig, load_config
from .evaluate import evaluate, write_metrics_csv
from .infer import dehaze
from .plots import loss_curves
from .study import misalignment_study
from .train import fit, load_state


def _add_synth(sub):
    p = sub.add_parser("synth", help="generate a synthetic non-aligned toy dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--pairs", type=int, default=16)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--shift", type=int, default=4)
    p.add_argument("--rotation", type=float, default=0.0)
    p.add_argument("--test", type=int, default=0, help="records tagged as test split")
    p.add_argument("--seed", type=int, default=0)


def _add_train(sub):
    p = sub.add_parser("train", help="train on a manifest")
    p.add_argument("--config", help="JSON config (TrainConfig fields)")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", help="override out_dir")
    p.add_argument("--resume", help="state directory to resume from")


def _add_eval(sub):
    p = sub.add_parser("eval", help="evaluate a checkpoint on a manifest split")
    p.add_argument("--checkpoint", required=True, help="model checkpoint directory")
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--out", default="metrics.csv")


def _add_dehaze(sub):
    p = sub.add_parser("dehaze", help="dehaze one image file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--save-maps", action="store_true", help="also write t / airlight / attention maps")


def _add_study(sub):
    p = sub.add_parser("study", help="misalignment / rotation sweep")
    p.add_argument("--config", help="JSON config (TrainConfig fields)")
    p.add_argument("--out", required=True)
    p.add_argument("--shifts", default="0,8,16")
    p.add_argument("--rotations", default="0")
    p.add_argument("--pairs", type=int, default=12)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--test", type=int, default=4)


def main(argv=None):
    parser = argparse.ArgumentParser(prog="nsdehaze")
    sub = parser.add_subparsers(dest="command", required=True)
    for add in (_add_synth, _add_train, _add_eval, _add_dehaze, _add_study):
        add(sub)
    args = parser.parse_args(argv)

    if args.command == "synth":
        manifest = make_toy_dataset(
            args.pairs,
            (args.size, args.size),
            args.out,
            seed=args.seed,
            shift_px=args.shift,
            rotation_deg=args.rotation,
            n_test=args.test,
        )
        print(f"wrote {len(manifest.records)} pairs under {args.out}")

    elif args.command == "train":
        cfg = load_config(args.config) if args.config else TrainConfig()
        if args.out:
            cfg.out_dir = args.out
        manifest = load_manifest(args.manifest)
        state = load_state(args.resume) if args.resume else None
        if state is not None and args.out:
            state.config.out_dir = args.out
        state = fit(cfg, manifest, state=state)
        if state is not None:
            cfg = state.config
        loss_curves(os.path.join(cfg.out_dir, "losses.csv"), os.path.join(cfg.out_dir, "losses.png"))
        print(f"trained {state.step} steps; checkpoint at {os.path.join(cfg.out_dir, 'checkpoint')}")

    elif args.command == "eval":
        from ..imaging import load_image
        from .infer import run_model
        from .plots import before_after_grid

        bundle = load_bundle(args.checkpoint)
        manifest = load_manifest(args.manifest)
        rows, means = evaluate(bundle, manifest, split=args.split)
        write_metrics_csv(rows, means, args.out)
        pairs = []
        for rec in manifest.split(args.split)[:4]:
            hazy = load_image(rec.hazy)
            pairs.append((hazy, run_model(bundle, hazy)[0]))
        grid_path = os.path.splitext(args.out)[0] + "_grid.png"
        before_after_grid(pairs, grid_path)
        print(f"evaluated {len(rows)} images; means: " + ", ".join(f"{k}={v:.4g}" for k, v in means.items()))
        print(f"wrote {args.out} and {grid_path}")

    elif args.command == "dehaze":
        dehaze(args.checkpoint, args.input, args.output, save_maps=args.save_maps)
        print(f"wrote {args.output}")

    elif args.command == "study":
        cfg = load_config(args.config) if args.config else TrainConfig(epochs=2)
        shifts = [int(s) for s in args.shifts.split(",") if s != ""]
        rotations = [float(r) for r in args.rotations.split(",") if r != ""]
        rows = misalignment_study(
            cfg, shifts, rotations, args.out,
            n_pairs=args.pairs, size=(args.size, args.size), n_test=args.test,
        )
        for row in rows:
            print(row)

    return 0


if __name__ == "__main__":
    sys.exit(main())
