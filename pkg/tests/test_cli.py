"""End-to-end CLI walkthrough at micro scale."""

import json
import os

import pytest

from nsdehaze.harness.cli import main


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    return tmp_path_factory.mktemp("cli")


def _config_file(workdir):
    path = workdir / "config.json"
    cfg = {
        "lr": 2e-4,
        "adam_beta1": 0.5,
        "adam_beta2": 0.999,
        "epochs": 1,
        "batch": 2,
        "loss_weights": {},
        "network": {"base_channels": 8, "generator_res_blocks": 1, "seed": 0},
        "seed": 0,
        "checkpoint_every": 0,
        "out_dir": str(workdir / "run"),
        "resize_to": None,
        "crop": None,
        "msr_scales": [0.5, 1.0, 2.0],
    }
    path.write_text(json.dumps(cfg))
    return str(path)


def test_synth_train_eval_dehaze(workdir, capsys):
    data_dir = workdir / "data"
    assert main(["synth", "--out", str(data_dir), "--pairs", "4", "--size", "32",
                 "--shift", "2", "--test", "1", "--seed", "0"]) == 0
    assert (data_dir / "manifest.jsonl").is_file()

    cfg_path = _config_file(workdir)
    manifest_path = str(data_dir / "manifest.jsonl")
    assert main(["train", "--config", cfg_path, "--manifest", manifest_path]) == 0
    run_dir = workdir / "run"
    assert (run_dir / "losses.csv").is_file()
    assert (run_dir / "losses.png").is_file()
    checkpoint = run_dir / "checkpoint" / "model"
    assert (checkpoint / "manifest.json").is_file()
    assert (checkpoint / "weights.bin").is_file()

    metrics_csv = workdir / "metrics.csv"
    assert main(["eval", "--checkpoint", str(checkpoint), "--manifest", manifest_path,
                 "--split", "test", "--out", str(metrics_csv)]) == 0
    header = metrics_csv.read_text().splitlines()[0]
    assert header.startswith("index,psnr,ssim")
    assert (workdir / "metrics_grid.png").is_file()

    hazy_path = json.loads((data_dir / "manifest.jsonl").read_text().splitlines()[0])["hazy"]
    out_png = workdir / "dehazed.png"
    assert main(["dehaze", "--checkpoint", str(checkpoint), "--input", hazy_path,
                 "--output", str(out_png), "--save-maps"]) == 0
    assert out_png.is_file()
    assert (workdir / "dehazed_transmission.png").is_file()

    capsys.readouterr()


def test_resume_flag(workdir):
    data_dir = workdir / "data"
    manifest_path = str(data_dir / "manifest.jsonl")
    cfg_path = _config_file(workdir)
    state_dir = workdir / "run" / "checkpoint"
    assert main(["train", "--config", cfg_path, "--manifest", manifest_path,
                 "--resume", str(state_dir), "--out", str(workdir / "run")]) == 0


def test_study_emits_table_and_plot(workdir):
    study_dir = workdir / "study"
    cfg = json.loads((workdir / "config.json").read_text())
    cfg["out_dir"] = str(study_dir / "base")
    cfg_path = workdir / "study_config.json"
    cfg_path.write_text(json.dumps(cfg))
    assert main(["study", "--config", str(cfg_path), "--out", str(study_dir),
                 "--shifts", "0,4", "--rotations", "0", "--pairs", "4",
                 "--size", "32", "--test", "1"]) == 0
    table = (study_dir / "study.csv").read_text().splitlines()
    assert table[0] == "shift_px,rotation_deg,scale,psnr,ssim,fog_density"
    assert len(table) == 3
    assert (study_dir / "study.png").is_file()
    scale_values = [float(line.split(",")[2]) for line in table[1:]]
    assert scale_values == [0.0, 0.125]
