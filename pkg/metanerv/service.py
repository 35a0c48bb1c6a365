from __future__ import annotations

import asyncio
from collections.abc import AsyncIterator, Callable
from datetime import datetime, timezone
from pathlib import Path
from time import perf_counter
from typing import TypeVar

from metanerv.checkpoint import load_checkpoint, save_checkpoint
from metanerv.compression import read_container, write_container
from metanerv.event_bus import AsyncEventBus
from metanerv.meta import MetaTrainResult
from metanerv.runner import CompressionOutcome, DenoiseOutcome, MetaNeRVRunner
from metanerv.types.events import (
    AdaptStepEvent,
    ErrorEvent,
    OperationTimingEvent,
    OuterStepEvent,
    ReportWrittenEvent,
)
from metanerv.types.models import AdaptResult, CompressedModel, MetaState, TrainLogRow, Video
from metanerv.video_io import load_video

UTC = timezone.utc

T = TypeVar("T")


class AsyncMetaNeRVService:
    """Async-facing service running the compute workflows in a worker thread."""

    def __init__(self, runner: MetaNeRVRunner, event_bus: AsyncEventBus | None = None) -> None:
        self._runner = runner
        self._event_bus = event_bus or AsyncEventBus()
        self._io_lock = asyncio.Lock()

    @property
    def runner(self) -> MetaNeRVRunner:
        return self._runner

    async def generate_dataset(self, out_dir: Path) -> dict[str, object]:
        return await self._run_blocking(
            lambda: self._runner.generate_dataset(out_dir), "generate_dataset"
        )

    async def load_split(self, dataset_dir: Path, split: str) -> list[Video]:
        return await self._run_blocking(
            lambda: self._runner.load_split(dataset_dir, split), "load_dataset"
        )

    async def load_video(self, path: Path) -> Video:
        return await self._run_blocking(lambda: load_video(path), "load_video")

    async def load_checkpoint(self, path: Path) -> MetaState:
        return await self._run_blocking(lambda: load_checkpoint(path), "load_checkpoint")

    async def save_checkpoint(self, state: MetaState, path: Path) -> Path:
        return await self._run_blocking(lambda: save_checkpoint(state, path), "save_checkpoint")

    async def meta_train(
        self,
        dataset: list[Video],
        resume: MetaState | None = None,
        on_row: Callable[[TrainLogRow], None] | None = None,
    ) -> MetaTrainResult:
        loop = asyncio.get_running_loop()

        def _row(row: TrainLogRow) -> None:
            if on_row is not None:
                on_row(row)
            self._event_bus.publish_threadsafe(
                OuterStepEvent(timestamp=datetime.now(UTC), row=row), loop
            )

        return await self._run_blocking(
            lambda: self._runner.meta_train(dataset, resume, _row), "meta_train"
        )

    async def adapt(self, video: Video, state: MetaState | None) -> AdaptResult:
        loop = asyncio.get_running_loop()

        def _step(step: int, psnr: float, ms_ssim: float) -> None:
            self._event_bus.publish_threadsafe(
                AdaptStepEvent(timestamp=datetime.now(UTC), step=step, psnr=psnr, ms_ssim=ms_ssim),
                loop,
            )

        return await self._run_blocking(lambda: self._runner.adapt(video, state, _step), "adapt")

    async def fit(self, video: Video, state: MetaState | None = None) -> MetaState:
        return await self._run_blocking(lambda: self._runner.fit(video, state), "fit")

    async def compress(self, state: MetaState, video: Video, out: Path) -> CompressionOutcome:
        def _compress() -> CompressionOutcome:
            outcome = self._runner.compress(state, video)
            write_container(outcome.compressed, out)
            return outcome

        return await self._run_blocking(_compress, "compress")

    async def decompress(self, path: Path) -> MetaState:
        def _decompress() -> MetaState:
            compressed: CompressedModel = read_container(path)
            return self._runner.decompress(compressed)

        return await self._run_blocking(_decompress, "decompress")

    async def denoise_eval(self, clean: Video, state: MetaState | None = None) -> DenoiseOutcome:
        return await self._run_blocking(
            lambda: self._runner.denoise_eval(clean, state), "denoise_eval"
        )

    async def write_report(self, operation: str, path: Path, writer: Callable[[], Path]) -> Path:
        written = await self._run_blocking(writer, f"{operation}_report")
        await self._event_bus.publish(
            ReportWrittenEvent(timestamp=datetime.now(UTC), operation=operation, path=str(written))
        )
        return written

    async def event_stream(self) -> AsyncIterator[object]:
        async for event in self._event_bus.stream():
            yield event

    async def close(self) -> None:
        await self._event_bus.close()

    async def _run_blocking(self, func: Callable[[], T], operation: str) -> T:
        start = perf_counter()
        wait_ms = 0.0
        run_ms = 0.0
        try:
            lock_wait_start = perf_counter()
            async with self._io_lock:
                wait_ms = (perf_counter() - lock_wait_start) * 1000.0
                run_start = perf_counter()
                result = await asyncio.to_thread(func)
                run_ms = (perf_counter() - run_start) * 1000.0
            total_ms = (perf_counter() - start) * 1000.0
            await self._event_bus.publish(
                OperationTimingEvent(
                    timestamp=datetime.now(UTC),
                    operation=operation,
                    wait_ms=wait_ms,
                    run_ms=run_ms,
                    total_ms=total_ms,
                    success=True,
                )
            )
            return result
        except Exception as exc:  # noqa: BLE001
            total_ms = (perf_counter() - start) * 1000.0
            await self._event_bus.publish(
                OperationTimingEvent(
                    timestamp=datetime.now(UTC),
                    operation=operation,
                    wait_ms=wait_ms,
                    run_ms=run_ms,
                    total_ms=total_ms,
                    success=False,
                )
            )
            await self._event_bus.publish(
                ErrorEvent(timestamp=datetime.now(UTC), operation=operation, message=str(exc))
            )
            raise
