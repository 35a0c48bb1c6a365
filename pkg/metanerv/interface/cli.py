from __future__ import annotations

import asyncio
from collections.abc import Awaitable, Callable
from pathlib import Path

import typer

from metanerv.checkpoint import fitted_state
from metanerv.interface.factory import create_service
from metanerv.interface.reports import (
    TrainLogWriter,
    render_report,
    report_payload,
    write_adapt_csv,
    write_json_report,
)
from metanerv.service import AsyncMetaNeRVService
from metanerv.types.config import ConfigOverrides, RunConfig
from metanerv.types.errors import MetaNeRVError
from metanerv.types.events import (
    AdaptStepEvent,
    ErrorEvent,
    OperationTimingEvent,
    OuterStepEvent,
    ReportWrittenEvent,
)
from metanerv.types.models import TrainLogRow
from metanerv.video_io import save_video

app = typer.Typer(help="Meta-learned video representation CLI")

ConfigOption = typer.Option(None, "--config", help="METANERV_* run config file")
SeedOption = typer.Option(None, "--seed", min=0, help="Override the run seed")


def render_event(event: object) -> str | None:
    if isinstance(event, OperationTimingEvent):
        return (
            "timing "
            f"op={event.operation} "
            f"wait={event.wait_ms:.1f}ms "
            f"run={event.run_ms:.1f}ms "
            f"total={event.total_ms:.1f}ms "
            f"ok={event.success}"
        )
    if isinstance(event, OuterStepEvent):
        row = event.row
        last = f"{row.losses[-1]:.6f}" if row.losses else "-"
        return f"outer j={row.outer_iter} task={row.task_id} frames={row.frames_used} loss={last}"
    if isinstance(event, AdaptStepEvent):
        return f"adapt step={event.step} psnr={event.psnr:.3f} ms_ssim={event.ms_ssim:.4f}"
    if isinstance(event, ReportWrittenEvent):
        return f"report op={event.operation} path={event.path}"
    if isinstance(event, ErrorEvent):
        return f"error in {event.operation}: {event.message}"
    return None


def mean_final_loss(rows: list[TrainLogRow]) -> float | None:
    finals = [row.losses[-1] for row in rows if row.losses]
    return sum(finals) / len(finals) if finals else None


async def _echo_events(service: AsyncMetaNeRVService) -> None:
    async for event in service.event_stream():
        line = render_event(event)
        if line is not None:
            typer.echo(line, err=True)


def _execute(
    config: Path | None,
    overrides: ConfigOverrides,
    work: Callable[[RunConfig, AsyncMetaNeRVService], Awaitable[None]],
) -> None:
    """Run one command with progress on stderr; domain errors exit with code 1."""

    async def _run() -> None:
        cfg, service = create_service(config_path=config, overrides=overrides)
        consumer = asyncio.create_task(_echo_events(service))
        await asyncio.sleep(0)
        try:
            await work(cfg, service)
        finally:
            await service.close()
            await consumer

    try:
        asyncio.run(_run())
    except MetaNeRVError as exc:
        typer.echo(f"error: {exc}", err=True)
        raise typer.Exit(code=1) from exc


async def _emit_report(
    service: AsyncMetaNeRVService,
    cfg: RunConfig,
    command: str,
    result: dict[str, object],
    path: Path | None,
) -> None:
    if path is None:
        typer.echo(render_report(report_payload(command, cfg, result)), nl=False)
        return
    await service.write_report(command, path, lambda: write_json_report(path, command, cfg, result))


@app.command("gen-dataset")
def gen_dataset(
    out: Path = typer.Option(..., "--out", help="Dataset directory to create"),
    config: Path | None = ConfigOption,
    seed: int | None = SeedOption,
) -> None:
    async def _work(cfg: RunConfig, service: AsyncMetaNeRVService) -> None:
        await service.generate_dataset(out)
        result = {
            "dataset": str(out),
            "train_videos": cfg.dataset.train_videos,
            "test_videos": cfg.dataset.test_videos,
        }
        await _emit_report(service, cfg, "gen-dataset", result, None)

    _execute(config, ConfigOverrides(seed=seed), _work)


@app.command("meta-train")
def meta_train(
    dataset: Path = typer.Option(..., "--dataset", help="Directory written by gen-dataset"),
    out: Path = typer.Option(..., "--out", help="Directory for checkpoint, log and report"),
    config: Path | None = ConfigOption,
    seed: int | None = SeedOption,
    steps: int | None = typer.Option(None, "--steps", min=1, help="Outer steps to run"),
    resume: Path | None = typer.Option(None, "--resume", help="Continue from a checkpoint"),
    no_spatial: bool = typer.Option(False, "--no-spatial", help="Supervise the final head only"),
    no_progressive: bool = typer.Option(
        False, "--no-progressive", help="Use every frame from the first outer step"
    ),
) -> None:
    overrides = ConfigOverrides(
        seed=seed,
        outer_steps=steps,
        spatial=False if no_spatial else None,
        progressive=False if no_progressive else None,
    )

    async def _work(cfg: RunConfig, service: AsyncMetaNeRVService) -> None:
        videos = await service.load_split(dataset, "train")
        state = await service.load_checkpoint(resume) if resume is not None else None
        log_path = out / "train_log.csv"
        with TrainLogWriter(log_path, cfg.meta.inner_steps, append=resume is not None) as log:
            result = await service.meta_train(videos, state, log.write)
        checkpoint = await service.save_checkpoint(result.state, out / "checkpoint.mnrv")
        summary = {
            "checkpoint": str(checkpoint),
            "outer_iter": result.state.outer_iter,
            "log_rows": len(result.log),
            "mean_final_loss_first_50": mean_final_loss(result.log[:50]),
            "mean_final_loss_last_50": mean_final_loss(result.log[-50:]),
        }
        await _emit_report(service, cfg, "meta-train", summary, out / "report.json")

    _execute(config, overrides, _work)


@app.command("adapt")
def adapt(
    video: Path = typer.Option(..., "--video", help="PNG directory or MNVR raw file"),
    out: Path = typer.Option(..., "--out", help="Directory for metrics, checkpoint and report"),
    config: Path | None = ConfigOption,
    seed: int | None = SeedOption,
    checkpoint: Path | None = typer.Option(None, "--checkpoint", help="Meta-trained checkpoint"),
    random_init: bool = typer.Option(False, "--random-init", help="Start from a seeded init"),
    steps: int | None = typer.Option(None, "--steps", min=0, help="Adaptation steps"),
) -> None:
    if (checkpoint is None) == (not random_init):
        raise typer.BadParameter("pass exactly one of --checkpoint or --random-init")

    async def _work(cfg: RunConfig, service: AsyncMetaNeRVService) -> None:
        target = await service.load_video(video)
        state = await service.load_checkpoint(checkpoint) if checkpoint is not None else None
        result = await service.adapt(target, state)
        metrics = out / "metrics.csv"
        await service.write_report(
            "adapt-metrics", metrics, lambda: write_adapt_csv(metrics, result)
        )
        fitted = fitted_state(result.params, cfg.model, cfg.adapt.random_lr)
        saved = await service.save_checkpoint(fitted, out / "fitted.mnrv")
        summary: dict[str, object] = {
            "video": target.id,
            "init": "random" if state is None else "meta",
            "psnr": result.psnr,
            "ms_ssim": result.ms_ssim,
            "steps_to_target": result.steps_to_target,
            "checkpoint": str(saved),
        }
        if cfg.adapt.dump_frames:
            frames = service.runner.reconstruction(result.params, target)
            summary["frames"] = str(
                await service.write_report(
                    "adapt-frames", out / "frames", lambda: save_video(frames, out / "frames")
                )
            )
        await _emit_report(service, cfg, "adapt", summary, out / "report.json")

    _execute(config, ConfigOverrides(seed=seed, adapt_steps=steps), _work)


@app.command("fit")
def fit(
    video: Path = typer.Option(..., "--video", help="PNG directory or MNVR raw file"),
    out: Path = typer.Option(..., "--out", help="Checkpoint file to write"),
    config: Path | None = ConfigOption,
    seed: int | None = SeedOption,
    checkpoint: Path | None = typer.Option(None, "--checkpoint", help="Start from a checkpoint"),
    steps: int | None = typer.Option(None, "--steps", min=0, help="Adam fitting steps"),
) -> None:
    async def _work(cfg: RunConfig, service: AsyncMetaNeRVService) -> None:
        target = await service.load_video(video)
        state = await service.load_checkpoint(checkpoint) if checkpoint is not None else None
        fitted = await service.fit(target, state)
        saved = await service.save_checkpoint(fitted, out)
        result = {
            "video": target.id,
            "checkpoint": str(saved),
            "psnr": service.runner.score(fitted, target),
        }
        await _emit_report(service, cfg, "fit", result, None)

    _execute(config, ConfigOverrides(seed=seed, fit_steps=steps), _work)


@app.command("compress")
def compress(
    checkpoint: Path = typer.Option(..., "--checkpoint", help="Fitted checkpoint"),
    video: Path = typer.Option(..., "--video", help="Video the checkpoint was fitted to"),
    out: Path = typer.Option(..., "--out", help="MNRC1 container to write"),
    config: Path | None = ConfigOption,
    report: Path | None = typer.Option(None, "--report", help="JSON report path (default stdout)"),
    ratio: float | None = typer.Option(None, "--ratio", min=0.0, max=0.999999, help="Prune ratio"),
    bits: int | None = typer.Option(None, "--bits", min=2, max=16, help="Quantization bits"),
) -> None:
    async def _work(cfg: RunConfig, service: AsyncMetaNeRVService) -> None:
        target = await service.load_video(video)
        state = await service.load_checkpoint(checkpoint)
        outcome = await service.compress(state, target, out)
        result = {
            "container": str(out),
            "bpp": outcome.bpp,
            "container_bits": outcome.container_bits,
            "psnr_before": outcome.psnr_before,
            "psnr_pruned": outcome.psnr_pruned,
            "psnr_after": outcome.psnr_after,
            "ratio": cfg.compression.ratio,
            "bits": cfg.compression.bits,
        }
        await _emit_report(service, cfg, "compress", result, report)

    _execute(config, ConfigOverrides(ratio=ratio, bits=bits), _work)


@app.command("decompress")
def decompress(
    container: Path = typer.Option(..., "--container", help="MNRC1 container"),
    out: Path = typer.Option(..., "--out", help="Checkpoint file to write"),
    config: Path | None = ConfigOption,
) -> None:
    async def _work(cfg: RunConfig, service: AsyncMetaNeRVService) -> None:
        state = await service.decompress(container)
        saved = await service.save_checkpoint(state, out)
        await _emit_report(service, cfg, "decompress", {"checkpoint": str(saved)}, None)

    _execute(config, ConfigOverrides(), _work)


@app.command("denoise-eval")
def denoise_eval(
    video: Path = typer.Option(..., "--video", help="Clean video"),
    config: Path | None = ConfigOption,
    seed: int | None = SeedOption,
    checkpoint: Path | None = typer.Option(None, "--checkpoint", help="Start from a checkpoint"),
    steps: int | None = typer.Option(None, "--steps", min=0, help="Fit steps on the noisy copy"),
    report: Path | None = typer.Option(None, "--report", help="JSON report path (default stdout)"),
) -> None:
    async def _work(cfg: RunConfig, service: AsyncMetaNeRVService) -> None:
        clean = await service.load_video(video)
        state = await service.load_checkpoint(checkpoint) if checkpoint is not None else None
        outcome = await service.denoise_eval(clean, state)
        result = {
            "video": clean.id,
            "sigma": cfg.denoise.sigma,
            "fit_steps": cfg.denoise.fit_steps,
            "psnr_noisy": outcome.psnr_noisy,
            "psnr_reconstruction": outcome.psnr_reconstruction,
            "psnr_fit_to_noisy": outcome.psnr_fit_to_noisy,
        }
        await _emit_report(service, cfg, "denoise-eval", result, report)

    _execute(config, ConfigOverrides(seed=seed, fit_steps=steps), _work)

