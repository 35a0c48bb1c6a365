from __future__ import annotations

from pathlib import Path

from metanerv.event_bus import AsyncEventBus
from metanerv.interface.config import load_run_config, load_thread_cap
from metanerv.runner import MetaNeRVRunner
from metanerv.service import AsyncMetaNeRVService
from metanerv.types.config import ConfigOverrides, RunConfig


def create_service(
    config: RunConfig | None = None,
    *,
    config_path: Path | None = None,
    overrides: ConfigOverrides | None = None,
) -> tuple[RunConfig, AsyncMetaNeRVService]:
    cfg = config or load_run_config(config_path, overrides)
    runner = MetaNeRVRunner(config=cfg, workers=load_thread_cap())
    service = AsyncMetaNeRVService(runner=runner, event_bus=AsyncEventBus())
    return cfg, service
