from __future__ import annotations

import json
from datetime import datetime, timezone

import pytest
from typer.testing import CliRunner

from metanerv.checkpoint import load_checkpoint
from metanerv.interface.cli import app, mean_final_loss, render_event
from metanerv.types.events import OperationTimingEvent, OuterStepEvent
from metanerv.types.models import TrainLogRow

UTC = timezone.utc

TINY_RUN = """\
METANERV_SEED=0
METANERV_SCALES=2
METANERV_SEED_H=2
METANERV_SEED_W=2
METANERV_CHANNELS=4,4
METANERV_PE_L=2
METANERV_EMBED_DIM=8
METANERV_NORM_DIM=0
METANERV_SSIM_WINDOW=3
METANERV_HEIGHT=4
METANERV_WIDTH=4
METANERV_FRAMES=2
METANERV_TRAIN_VIDEOS=2
METANERV_TEST_VIDEOS=1
METANERV_INNER_STEPS=1
METANERV_OUTER_STEPS=2
METANERV_ADAPT_STEPS=1
METANERV_FIT_STEPS=2
METANERV_FINETUNE_STEPS=1
"""

runner = CliRunner()


@pytest.fixture
def workspace(tmp_path):
    config = tmp_path / "tiny.env"
    config.write_text(TINY_RUN)
    dataset = tmp_path / "dataset"
    result = runner.invoke(app, ["gen-dataset", "--out", str(dataset), "--config", str(config)])
    assert result.exit_code == 0, result.output
    return tmp_path, config, dataset


def _invoke(*args: str):
    result = runner.invoke(app, list(args))
    assert result.exit_code == 0, result.output
    return result


def test_render_event_lines():
    now = datetime.now(UTC)
    timing = OperationTimingEvent(now, "adapt", 0.04, 12.345, 12.5, True)
    assert render_event(timing) == "timing op=adapt wait=0.0ms run=12.3ms total=12.5ms ok=True"
    row = TrainLogRow(4, "ball-1", 3, (0.5, 0.25))
    step = render_event(OuterStepEvent(now, row))
    assert step == "outer j=4 task=ball-1 frames=3 loss=0.250000"
    assert render_event(object()) is None


def test_mean_final_loss():
    rows = [TrainLogRow(1, "a", 1, (0.4, 0.2)), TrainLogRow(2, "b", 2, (0.3, 0.1))]
    assert mean_final_loss(rows) == pytest.approx(0.15)
    assert mean_final_loss([TrainLogRow(1, "a", 1, ())]) is None


def test_gen_dataset_writes_manifest(workspace):
    _, _, dataset = workspace
    manifest = json.loads((dataset / "manifest.json").read_text())
    assert [entry["path"] for entry in manifest["train"]] == [
        "train/bouncing_ball-0",
        "train/bouncing_ball-1",
    ]
    assert manifest["test"][0]["spec"]["seed"] == 5000
    assert sorted(p.name for p in (dataset / "train" / "bouncing_ball-0").iterdir()) == [
        "000001.png",
        "000002.png",
    ]


def test_meta_train_adapt_compress_pipeline(workspace):
    root, config, dataset = workspace
    train_dir = root / "train"
    _invoke(
        "meta-train", "--dataset", str(dataset), "--out", str(train_dir), "--config", str(config)
    )
    log_lines = (train_dir / "train_log.csv").read_text().splitlines()
    assert log_lines[0] == "outer_iter,task_id,frames_used,loss_step_1"
    fields = [line.split(",") for line in log_lines[1:]]
    assert [(f[0], f[2]) for f in fields] == [("1", "1"), ("2", "2")]
    assert all(len(f) == 4 for f in fields)
    report = json.loads((train_dir / "report.json").read_text())
    assert report["command"] == "meta-train"
    assert report["config"] == TINY_RUN
    assert report["result"]["outer_iter"] == 2
    assert load_checkpoint(train_dir / "checkpoint.mnrv").outer_iter == 2

    video = dataset / "test" / "bouncing_ball-5000"
    adapt_dir = root / "adapt"
    _invoke(
        "adapt",
        "--video", str(video),
        "--out", str(adapt_dir),
        "--config", str(config),
        "--checkpoint", str(train_dir / "checkpoint.mnrv"),
    )
    metrics = (adapt_dir / "metrics.csv").read_text().splitlines()
    assert metrics[0] == "step,psnr,ms_ssim"
    assert len(metrics) == 3
    adapt_report = json.loads((adapt_dir / "report.json").read_text())
    assert adapt_report["result"]["init"] == "meta"
    assert len(adapt_report["result"]["psnr"]) == 2

    container = root / "model.mnrc"
    compress_report = root / "compress.json"
    _invoke(
        "compress",
        "--checkpoint", str(adapt_dir / "fitted.mnrv"),
        "--video", str(video),
        "--out", str(container),
        "--config", str(config),
        "--report", str(compress_report),
        "--ratio", "0.5",
        "--bits", "6",
    )
    result = json.loads(compress_report.read_text())["result"]
    assert result["container_bits"] == container.stat().st_size * 8
    assert result["bpp"] == pytest.approx(result["container_bits"] / (2 * 4 * 4))
    assert result["ratio"] == 0.5
    assert result["bits"] == 6

    restored = root / "restored.mnrv"
    _invoke(
        "decompress", "--container", str(container), "--out", str(restored),
        "--config", str(config),
    )
    fitted = load_checkpoint(adapt_dir / "fitted.mnrv")
    assert load_checkpoint(restored).theta0.size == fitted.theta0.size


def test_resumed_meta_train_continues_log_in_place(workspace):
    root, config, dataset = workspace
    base = ["--dataset", str(dataset), "--config", str(config)]
    split = root / "split"
    _invoke("meta-train", *base, "--out", str(split), "--steps", "1")
    _invoke(
        "meta-train", *base, "--out", str(split), "--steps", "1",
        "--resume", str(split / "checkpoint.mnrv"),
    )
    whole = root / "whole"
    _invoke("meta-train", *base, "--out", str(whole), "--steps", "2")

    lines = (split / "train_log.csv").read_text().splitlines()
    assert len(lines) == 3
    assert [line.split(",")[0] for line in lines[1:]] == ["1", "2"]
    assert (split / "train_log.csv").read_bytes() == (whole / "train_log.csv").read_bytes()
    assert load_checkpoint(split / "checkpoint.mnrv").outer_iter == 2


def test_adapt_from_random_init_and_denoise(workspace):
    root, config, dataset = workspace
    video = dataset / "test" / "bouncing_ball-5000"
    out = root / "random"
    _invoke(
        "adapt", "--video", str(video), "--out", str(out), "--config", str(config),
        "--random-init", "--steps", "0",
    )
    report = json.loads((out / "report.json").read_text())
    assert report["result"]["init"] == "random"
    assert report["overrides"] == {"adapt_steps": 0}
    assert len(report["result"]["psnr"]) == 1

    denoise = root / "denoise.json"
    _invoke(
        "denoise-eval", "--video", str(video), "--config", str(config),
        "--steps", "1", "--report", str(denoise),
    )
    result = json.loads(denoise.read_text())["result"]
    assert result["fit_steps"] == 1
    assert result["sigma"] == 0.1
    assert result["psnr_noisy"] > 0


def test_adapt_requires_exactly_one_init(workspace):
    root, config, dataset = workspace
    video = dataset / "test" / "bouncing_ball-5000"
    result = runner.invoke(
        app, ["adapt", "--video", str(video), "--out", str(root / "x"), "--config", str(config)]
    )
    assert result.exit_code != 0


def test_domain_errors_exit_with_code_one(tmp_path):
    config = tmp_path / "tiny.env"
    config.write_text(TINY_RUN)
    result = runner.invoke(
        app,
        [
            "meta-train",
            "--dataset", str(tmp_path / "missing"),
            "--out", str(tmp_path / "out"),
            "--config", str(config),
        ],
    )
    assert result.exit_code == 1
    assert "error:" in result.output


def test_unknown_config_key_exits_with_code_one(tmp_path):
    config = tmp_path / "bad.env"
    config.write_text("METANERV_NOPE=1\n")
    args = ["gen-dataset", "--out", str(tmp_path / "d"), "--config", str(config)]
    result = runner.invoke(app, args)
    assert result.exit_code == 1
    assert "Unknown config keys" in result.output
