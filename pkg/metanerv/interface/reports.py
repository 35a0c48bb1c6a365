"""JSON and CSV report writers; every JSON report echoes the run config verbatim."""

from __future__ import annotations

import csv
import json
from datetime import datetime, timezone
from pathlib import Path
from typing import IO, Any

from metanerv.types.config import RunConfig
from metanerv.types.errors import StorageError
from metanerv.types.models import AdaptResult, TrainLogRow

UTC = timezone.utc


def report_payload(
    command: str, config: RunConfig, result: dict[str, object]
) -> dict[str, object]:
    return {
        "command": command,
        "config": config.source_text,
        "overrides": config.overrides.to_dict(),
        "result": result,
        "timestamp": datetime.now(UTC).isoformat(),
    }


def render_report(payload: dict[str, object]) -> str:
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def write_json_report(
    path: Path, command: str, config: RunConfig, result: dict[str, object]
) -> Path:
    return _write_text(path, render_report(report_payload(command, config, result)))


def write_adapt_csv(path: Path, result: AdaptResult) -> Path:
    lines = ["step,psnr,ms_ssim"]
    for step, (quality, structure) in enumerate(zip(result.psnr, result.ms_ssim, strict=True)):
        lines.append(f"{step},{quality!r},{structure!r}")
    return _write_text(path, "\n".join(lines) + "\n")


class TrainLogWriter:
    """Per-outer-step CSV, flushed after every row so an aborted run keeps its log.

    With ``append`` an existing non-empty log is continued in place and no second
    header is written.
    """

    def __init__(self, path: Path, inner_steps: int, *, append: bool = False) -> None:
        self.path = path
        self._inner_steps = inner_steps
        self._append = append
        self._handle: IO[str] | None = None
        self._writer: Any = None

    def __enter__(self) -> TrainLogWriter:
        try:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            continuing = self._append and self.path.is_file() and self.path.stat().st_size > 0
            mode = "a" if continuing else "w"
            self._handle = self.path.open(mode, newline="", encoding="utf-8")
        except OSError as exc:
            raise StorageError("cannot write training log", str(self.path)) from exc
        self._writer = csv.writer(self._handle, lineterminator="\n")
        if continuing:
            return self
        header = ["outer_iter", "task_id", "frames_used"]
        header += [f"loss_step_{i}" for i in range(1, self._inner_steps + 1)]
        self._writer.writerow(header)
        return self

    def write(self, row: TrainLogRow) -> None:
        if self._writer is None or self._handle is None:
            raise StorageError("training log is not open", str(self.path))
        self._writer.writerow(
            [row.outer_iter, row.task_id, row.frames_used, *(repr(loss) for loss in row.losses)]
        )
        self._handle.flush()

    def __exit__(self, *exc_info: object) -> None:
        if self._handle is not None:
            self._handle.close()
            self._handle = None


def _write_text(path: Path, text: str) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise StorageError("cannot write report", str(path)) from exc
    return path
