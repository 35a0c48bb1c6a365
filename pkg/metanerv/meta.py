"""First-order meta-learning of generator initializations with learned per-parameter step sizes.

The outer update follows the averaged form: the initialization moves along the
mean of the gradients seen after each inner step, and the step sizes move
along the first-order chain rule through ``phi <- phi - beta * g``.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Protocol

import numpy as np

from metanerv.engine.optim import adam_step
from metanerv.fitting import VideoObjective, reconstruct
from metanerv.losses import ms_ssim, psnr
from metanerv.model import flatten_params
from metanerv.types.errors import (
    EmptyVideoError,
    MetaLearningError,
    MixedResolutionsError,
    NonFiniteError,
    NonFiniteLossError,
)
from metanerv.types.models import (
    AdamState,
    AdaptResult,
    InnerResult,
    LossConfig,
    MetaConfig,
    MetaState,
    ModelConfig,
    ModelParams,
    TrainLogRow,
    Video,
)


class MetaObjective(Protocol):
    def loss_and_grad(self, flat: np.ndarray, task: Any) -> tuple[float, np.ndarray]: ...

    def task_view(self, task: Any, outer_iter: int, cfg: MetaConfig) -> Any: ...

    def describe(self, task: Any) -> tuple[str, int]: ...


@dataclass(slots=True)
class VideoMetaObjective(VideoObjective):
    """Video tasks with the progressive frame schedule applied per outer iteration."""

    def task_view(self, task: Video, outer_iter: int, cfg: MetaConfig) -> Video:
        return progressive_frames(outer_iter, task, cfg)

    def describe(self, task: Video) -> tuple[str, int]:
        return task.id, task.n_frames


@dataclass(slots=True)
class MetaTrainResult:
    state: MetaState
    log: list[TrainLogRow] = field(default_factory=list)


def progressive_frames(j: int, video: Video, cfg: MetaConfig | None = None) -> Video:
    """First min(j, N) frames; the full video when the schedule is disabled."""
    if video.n_frames < 1:
        raise EmptyVideoError(f"video {video.id!r} has no frames")
    if j < 1:
        raise MetaLearningError(f"outer iteration must be >= 1, got {j}")
    cfg = cfg or MetaConfig()
    if not cfg.progressive:
        return video
    count = min(video.n_frames, max(1, math.floor(j * cfg.progressive_rate)))
    return video.prefix(count)


def init_meta_state(
    init: ModelParams | np.ndarray,
    cfg: MetaConfig,
    config: ModelConfig | None = None,
) -> MetaState:
    if isinstance(init, ModelParams):
        config = config or init.config
        theta0 = flatten_params(init)
    else:
        theta0 = np.asarray(init, dtype=np.float64).copy()
    beta = np.clip(np.full(theta0.size, cfg.beta_init), cfg.beta_min, cfg.beta_max)
    return MetaState(
        theta0=theta0,
        beta=beta,
        theta_opt=AdamState.zeros(theta0.size),
        beta_opt=AdamState.zeros(theta0.size),
        outer_iter=0,
        config=config,
    )


def _default_objective(state: MetaState, cfg: MetaConfig) -> MetaObjective:
    if state.config is None:
        raise MetaLearningError("a model config or an explicit objective is required")
    return VideoMetaObjective(state.config, cfg.loss)


def _evaluate(
    objective: MetaObjective, flat: np.ndarray, task: Any, step: int
) -> tuple[float, np.ndarray]:
    try:
        loss, grad = objective.loss_and_grad(flat, task)
    except NonFiniteError as exc:
        raise NonFiniteLossError(f"inner step {step}: {exc}") from exc
    if not math.isfinite(loss) or not np.all(np.isfinite(grad)):
        raise NonFiniteLossError(f"inner step {step}: loss {loss} is not finite")
    return loss, grad


def inner_loop(
    state: MetaState,
    task: Any,
    cfg: MetaConfig,
    objective: MetaObjective | None = None,
) -> InnerResult:
    """m plain gradient steps phi <- phi - beta * grad starting from theta0."""
    objective = objective or _default_objective(state, cfg)
    phi = state.theta0.copy()
    result = InnerResult(phi_m=phi, losses=[], grads_outer=[], grads_prev=[])
    if cfg.inner_steps == 0:
        return result

    loss, grad = _evaluate(objective, phi, task, 1)
    for step in range(1, cfg.inner_steps + 1):
        result.losses.append(loss)
        result.grads_prev.append(grad)
        phi = phi - state.beta * grad
        # gradient at the post-step parameters drives the outer update
        loss, grad = _evaluate(objective, phi, task, step + 1)
        result.grads_outer.append(grad)
    result.phi_m = phi
    return result


def meta_gradients(results: Sequence[InnerResult], size: int) -> tuple[np.ndarray, np.ndarray]:
    """Task-ordered mean of first-order gradients for theta0 and beta."""
    grad_theta = np.zeros(size)
    grad_beta = np.zeros(size)
    for result in results:
        m = len(result.grads_outer)
        if m == 0:
            continue
        task_theta = np.zeros(size)
        task_beta = np.zeros(size)
        for outer, prev in zip(result.grads_outer, result.grads_prev, strict=True):
            task_theta += outer
            task_beta -= outer * prev
        grad_theta += task_theta / m
        grad_beta += task_beta / m
    return grad_theta / len(results), grad_beta / len(results)


def _outer_update(
    state: MetaState,
    tasks: Sequence[Any],
    cfg: MetaConfig,
    objective: MetaObjective,
    workers: int,
) -> tuple[MetaState, list[InnerResult]]:
    if not tasks:
        raise MetaLearningError("outer_step needs at least one task")
    if workers > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda task: inner_loop(state, task, cfg, objective), tasks))
    else:
        results = [inner_loop(state, task, cfg, objective) for task in tasks]

    grad_theta, grad_beta = meta_gradients(results, state.theta0.size)
    theta0, theta_opt = adam_step(state.theta0, grad_theta, state.theta_opt, cfg.outer_lr)
    beta, beta_opt = adam_step(state.beta, grad_beta, state.beta_opt, cfg.outer_lr)
    updated = MetaState(
        theta0=theta0,
        beta=np.clip(beta, cfg.beta_min, cfg.beta_max),
        theta_opt=theta_opt,
        beta_opt=beta_opt,
        outer_iter=state.outer_iter + 1,
        config=state.config,
    )
    return updated, results


def outer_step(
    state: MetaState,
    tasks: Sequence[Any],
    cfg: MetaConfig,
    objective: MetaObjective | None = None,
    workers: int = 1,
) -> MetaState:
    objective = objective or _default_objective(state, cfg)
    updated, _ = _outer_update(state, tasks, cfg, objective, workers)
    return updated


def task_index(draw: int, dataset_size: int, seed: int) -> int:
    """Seeded shuffle with epoch wraparound; a pure function of the draw number."""
    epoch, position = divmod(draw, dataset_size)
    order = np.random.default_rng([seed, epoch]).permutation(dataset_size)
    return int(order[position])


def meta_train(
    init: ModelParams | np.ndarray,
    dataset: Sequence[Any],
    cfg: MetaConfig,
    *,
    objective: MetaObjective | None = None,
    state: MetaState | None = None,
    on_step: Callable[[TrainLogRow], None] | None = None,
    workers: int = 1,
) -> MetaTrainResult:
    """Run ``cfg.outer_steps`` outer iterations, continuing from ``state`` when given."""
    if not dataset:
        raise EmptyVideoError("meta-training dataset is empty")
    videos = [task for task in dataset if isinstance(task, Video)]
    if videos and len({(v.height, v.width) for v in videos}) > 1:
        raise MixedResolutionsError("all training videos must share one resolution")

    state = state.copy() if state is not None else init_meta_state(init, cfg)
    objective = objective or _default_objective(state, cfg)
    log: list[TrainLogRow] = []
    for _ in range(cfg.outer_steps):
        j = state.outer_iter + 1
        picks = [
            task_index((j - 1) * cfg.tasks_per_step + b, len(dataset), cfg.seed)
            for b in range(cfg.tasks_per_step)
        ]
        tasks = [objective.task_view(dataset[i], j, cfg) for i in picks]
        state, results = _outer_update(state, tasks, cfg, objective, workers)
        for task, result in zip(tasks, results, strict=True):
            task_id, used = objective.describe(task)
            row = TrainLogRow(j, task_id, used, tuple(result.losses))
            log.append(row)
            if on_step is not None:
                on_step(row)
    return MetaTrainResult(state=state, log=log)


def adapt(
    init: ModelParams | np.ndarray,
    video: Video,
    steps: int,
    model_cfg: ModelConfig,
    loss_cfg: LossConfig,
    *,
    beta: np.ndarray | None = None,
    lr: float = 1e-3,
    target_psnr: float | None = None,
    on_step: Callable[[int, float, float], None] | None = None,
) -> AdaptResult:
    """Test-time fitting on the full video; trace entry 0 is the initialization itself."""
    if steps < 0:
        raise MetaLearningError("steps must be >= 0")
    flat = flatten_params(init) if isinstance(init, ModelParams) else np.asarray(init).copy()
    step_size: np.ndarray | float = beta if beta is not None else lr
    objective = VideoObjective(model_cfg, loss_cfg)
    result = AdaptResult(params=flat, psnr=[], ms_ssim=[])

    for step in range(steps + 1):
        if step > 0:
            _, grad = _evaluate(objective, flat, video, step)
            flat = flat - step_size * grad
        frames = reconstruct(flat, model_cfg, video)
        quality = psnr(frames, video.frames)
        structure = ms_ssim(frames, video.frames, loss_cfg)
        result.psnr.append(quality)
        result.ms_ssim.append(structure)
        if target_psnr is not None and result.steps_to_target is None and quality >= target_psnr:
            result.steps_to_target = step
        if on_step is not None:
            on_step(step, quality, structure)
    result.params = flat
    return result
