from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime

from metanerv.types.models import TrainLogRow


@dataclass(slots=True)
class OuterStepEvent:
    timestamp: datetime
    row: TrainLogRow


@dataclass(slots=True)
class AdaptStepEvent:
    timestamp: datetime
    step: int
    psnr: float
    ms_ssim: float


@dataclass(slots=True)
class ReportWrittenEvent:
    timestamp: datetime
    operation: str
    path: str


@dataclass(slots=True)
class ErrorEvent:
    timestamp: datetime
    operation: str
    message: str


@dataclass(slots=True)
class OperationTimingEvent:
    timestamp: datetime
    operation: str
    wait_ms: float
    run_ms: float
    total_ms: float
    success: bool
