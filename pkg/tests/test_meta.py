from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pytest

from metanerv.meta import (
    adapt,
    init_meta_state,
    inner_loop,
    meta_train,
    outer_step,
    progressive_frames,
    task_index,
)
from metanerv.model import flatten_params, init_params
from metanerv.types.errors import EmptyVideoError, MixedResolutionsError, NonFiniteLossError
from metanerv.types.models import MetaConfig, MetaState

from helpers import constant_video, smooth_video

ADAM_BETA1, ADAM_BETA2, ADAM_EPS = 0.9, 0.999, 1e-8


@dataclass(slots=True)
class QuadraticTasks:
    """L_c(theta) = sum((theta - c)^2); tasks are the targets c."""

    def loss_and_grad(self, flat, task):
        diff = flat - task
        return float(np.sum(diff * diff)), 2.0 * diff

    def task_view(self, task, outer_iter, cfg):
        return task

    def describe(self, task):
        return f"c={float(task[0]):.3f}", 1


@dataclass(slots=True)
class ExplodingTask:
    def loss_and_grad(self, flat, task):
        return float("nan"), np.zeros_like(flat)

    def task_view(self, task, outer_iter, cfg):
        return task

    def describe(self, task):
        return "nan", 1


def _scalar_adam(x, g, m, v, step, lr):
    step += 1
    m = ADAM_BETA1 * m + (1 - ADAM_BETA1) * g
    v = ADAM_BETA2 * v + (1 - ADAM_BETA2) * g * g
    m_hat = m / (1 - ADAM_BETA1**step)
    v_hat = v / (1 - ADAM_BETA2**step)
    return x - lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS), m, v, step


def _scalar_outer_step(theta, beta, targets, m_steps, lr, opt, beta_bounds):
    """Hand-rolled scalar form of the first-order update with learned step size."""
    theta_grads, beta_grads = [], []
    for c in targets:
        phi = theta
        outer_sum, beta_sum = 0.0, 0.0
        for _ in range(m_steps):
            g_prev = 2.0 * (phi - c)
            phi = phi - beta * g_prev
            g_outer = 2.0 * (phi - c)
            outer_sum += g_outer
            beta_sum += -g_outer * g_prev
        theta_grads.append(outer_sum / m_steps if m_steps else 0.0)
        beta_grads.append(beta_sum / m_steps if m_steps else 0.0)
    g_theta = sum(theta_grads) / len(targets)
    g_beta = sum(beta_grads) / len(targets)
    theta, tm, tv, ts = _scalar_adam(theta, g_theta, *opt["theta"], lr)
    beta, bm, bv, bs = _scalar_adam(beta, g_beta, *opt["beta"], lr)
    opt["theta"], opt["beta"] = (tm, tv, ts), (bm, bv, bs)
    return theta, min(max(beta, beta_bounds[0]), beta_bounds[1])


def _state(theta: float, beta: float) -> MetaState:
    return init_meta_state(np.array([theta]), MetaConfig(beta_init=beta))


@pytest.mark.parametrize("j,expected", [(1, 1), (5, 5), (100, 8)])
def test_progressive_frames_prefix(j, expected):
    video = constant_video(0.5, 8, 4, 4)
    clip = progressive_frames(j, video, MetaConfig())
    assert clip.n_frames == expected
    assert clip.total_frames == 8


def test_progressive_schedule_dry_run():
    video = constant_video(0.5, 8, 4, 4)
    on, off = MetaConfig(), MetaConfig(progressive=False)
    for j in range(1, 1001):
        assert progressive_frames(j, video, on).n_frames == min(j, 8)
        assert progressive_frames(j, video, off).n_frames == 8


def test_progressive_rate_scales_the_counter():
    video = constant_video(0.5, 8, 4, 4)
    cfg = MetaConfig(progressive_rate=0.5)
    assert [progressive_frames(j, video, cfg).n_frames for j in (1, 2, 3, 4, 20)] == [1, 1, 1, 2, 8]


def test_inner_loop_zero_steps_returns_theta0():
    state = _state(0.3, 0.1)
    result = inner_loop(state, np.array([1.0]), MetaConfig(inner_steps=0), QuadraticTasks())
    np.testing.assert_array_equal(result.phi_m, state.theta0)
    assert result.losses == []


def test_inner_loop_single_step_reaches_target():
    # loss (theta - 1)^2 from 0 with beta 0.5: one step lands on 1
    state = _state(0.0, 0.5)
    result = inner_loop(state, np.array([1.0]), MetaConfig(inner_steps=1), QuadraticTasks())
    np.testing.assert_allclose(result.phi_m, [1.0])
    assert result.losses == [1.0]
    assert len(result.grads_outer) == len(result.grads_prev) == 1


def test_inner_loop_with_zero_beta_leaves_params_unchanged():
    state = _state(0.7, 1e-6)
    state.beta[:] = 0.0
    result = inner_loop(state, np.array([3.0]), MetaConfig(inner_steps=3), QuadraticTasks())
    np.testing.assert_array_equal(result.phi_m, state.theta0)


def test_inner_loop_non_finite_loss():
    with pytest.raises(NonFiniteLossError):
        inner_loop(_state(0.0, 0.1), np.array([0.0]), MetaConfig(inner_steps=2), ExplodingTask())


def test_inner_loop_losses_decrease_on_constant_video(tiny_model, tiny_loss):
    video = constant_video(0.6, 2, 4, 4)
    init = init_params(tiny_model, seed=0)
    for beta in (1e-2, 1e-3, 1e-4):
        cfg = MetaConfig(inner_steps=3, beta_init=beta, loss=tiny_loss)
        result = inner_loop(init_meta_state(init, cfg), video, cfg)
        if all(b < a for a, b in zip(result.losses, result.losses[1:], strict=False)):
            break
    else:
        pytest.fail(f"inner losses never decreased: {result.losses}")


def test_outer_step_matches_scalar_brute_force():
    rng = np.random.default_rng(0)
    cfg = MetaConfig(inner_steps=2, outer_lr=1e-2, beta_init=0.05, beta_max=0.4)
    for _ in range(1000):
        theta0 = float(rng.normal())
        targets = [float(c) for c in rng.normal(size=rng.integers(1, 4))]
        state = init_meta_state(np.array([theta0]), cfg)
        opt = {"theta": (0.0, 0.0, 0), "beta": (0.0, 0.0, 0)}
        theta, beta = theta0, float(state.beta[0])
        for _ in range(3):
            state = outer_step(state, [np.array([c]) for c in targets], cfg, QuadraticTasks())
            theta, beta = _scalar_outer_step(
                theta, beta, targets, cfg.inner_steps, cfg.outer_lr, opt, (cfg.beta_min, 0.4)
            )
            assert state.theta0[0] == pytest.approx(theta, abs=1e-12)
            assert state.beta[0] == pytest.approx(beta, abs=1e-12)


def test_outer_step_direction_on_symmetric_pair():
    cfg = MetaConfig(inner_steps=1, outer_lr=1e-2, beta_init=0.1)
    state = init_meta_state(np.array([0.5]), cfg)
    updated = outer_step(state, [np.array([-1.0]), np.array([1.0])], cfg, QuadraticTasks())
    # mean post-step gradient is positive at 0.5, so theta0 moves down
    assert updated.theta0[0] < 0.5
    assert updated.outer_iter == 1


def test_outer_step_zero_gradients_is_a_fixpoint():
    cfg = MetaConfig(inner_steps=3)
    state = init_meta_state(np.array([2.0, -1.0]), cfg)
    updated = outer_step(state, [np.array([2.0, -1.0])], cfg, QuadraticTasks())
    np.testing.assert_array_equal(updated.theta0, state.theta0)
    np.testing.assert_array_equal(updated.beta, state.beta)
    assert updated.outer_iter == state.outer_iter + 1


def test_outer_step_duplicate_tasks_match_single_task():
    cfg = MetaConfig(inner_steps=2, outer_lr=1e-2)
    state = init_meta_state(np.array([0.2, 0.4]), cfg)
    task = np.array([1.0, -1.0])
    single = outer_step(state, [task], cfg, QuadraticTasks())
    double = outer_step(state, [task, task.copy()], cfg, QuadraticTasks())
    np.testing.assert_allclose(double.theta0, single.theta0, atol=1e-15)
    np.testing.assert_allclose(double.beta, single.beta, atol=1e-15)


def test_outer_step_parallel_workers_are_deterministic():
    cfg = MetaConfig(inner_steps=3, outer_lr=1e-2)
    state = init_meta_state(np.zeros(4), cfg)
    tasks = [np.full(4, c) for c in (-1.0, 0.5, 2.0, 3.0)]
    serial = outer_step(state, tasks, cfg, QuadraticTasks(), workers=1)
    parallel = outer_step(state, tasks, cfg, QuadraticTasks(), workers=4)
    np.testing.assert_array_equal(serial.theta0, parallel.theta0)
    np.testing.assert_array_equal(serial.beta, parallel.beta)


def test_beta_stays_clamped():
    cfg = MetaConfig(inner_steps=1, outer_lr=0.5, beta_init=1e-3, beta_min=1e-6, beta_max=1e-2)
    state = init_meta_state(np.array([0.0]), cfg)
    for _ in range(20):
        state = outer_step(state, [np.array([5.0])], cfg, QuadraticTasks())
        assert np.all((state.beta >= 1e-6) & (state.beta <= 1e-2))


def test_task_index_visits_every_task_once_per_epoch():
    for epoch in range(3):
        seen = sorted(task_index(epoch * 7 + k, 7, seed=4) for k in range(7))
        assert seen == list(range(7))


def test_meta_train_single_step_without_inner_steps_keeps_init(tiny_model, tiny_loss):
    init = init_params(tiny_model, seed=1)
    dataset = [smooth_video(2, 4, 4, seed=s) for s in range(3)]
    cfg = MetaConfig(inner_steps=0, outer_steps=1, loss=tiny_loss)
    result = meta_train(init, dataset, cfg)
    np.testing.assert_array_equal(result.state.theta0, flatten_params(init))
    assert len(result.log) == 1
    assert result.log[0].outer_iter == 1
    assert result.log[0].frames_used == 1


def test_meta_train_is_deterministic(tiny_model, tiny_loss):
    init = init_params(tiny_model, seed=1)
    dataset = [smooth_video(3, 4, 4, seed=s) for s in range(3)]
    cfg = MetaConfig(inner_steps=2, outer_steps=4, outer_lr=1e-3, loss=tiny_loss, seed=9)
    a = meta_train(init, dataset, cfg)
    b = meta_train(init, dataset, cfg)
    np.testing.assert_array_equal(a.state.theta0, b.state.theta0)
    np.testing.assert_array_equal(a.state.beta, b.state.beta)
    assert a.log == b.log
    assert [row.frames_used for row in a.log] == [1, 2, 3, 3]


def test_meta_train_resume_equals_uninterrupted_run():
    cfg_full = MetaConfig(inner_steps=2, outer_steps=20, outer_lr=1e-2, seed=3)
    cfg_half = MetaConfig(inner_steps=2, outer_steps=10, outer_lr=1e-2, seed=3)
    tasks = [np.full(3, c) for c in (-2.0, -0.5, 1.0, 4.0)]
    init = np.zeros(3)
    full = meta_train(init, tasks, cfg_full, objective=QuadraticTasks())
    first = meta_train(init, tasks, cfg_half, objective=QuadraticTasks())
    second = meta_train(init, tasks, cfg_half, objective=QuadraticTasks(), state=first.state)
    assert second.state.outer_iter == 20
    np.testing.assert_array_equal(second.state.theta0, full.state.theta0)
    np.testing.assert_array_equal(second.state.beta, full.state.beta)
    assert first.log + second.log == full.log


def test_meta_train_rejects_empty_and_mixed_datasets(tiny_model, tiny_loss):
    init = init_params(tiny_model, seed=0)
    cfg = MetaConfig(outer_steps=1, loss=tiny_loss)
    with pytest.raises(EmptyVideoError):
        meta_train(init, [], cfg)
    with pytest.raises(MixedResolutionsError):
        meta_train(init, [constant_video(0.5, 2, 4, 4), constant_video(0.5, 2, 8, 8)], cfg)


def test_adapt_trace_lengths(tiny_model, tiny_loss):
    video = smooth_video(2, 4, 4)
    init = init_params(tiny_model, seed=0)
    zero = adapt(init, video, 0, tiny_model, tiny_loss)
    three = adapt(init, video, 3, tiny_model, tiny_loss)
    assert len(zero.psnr) == 1
    assert len(three.psnr) == len(three.ms_ssim) == 4
    assert three.psnr[0] == zero.psnr[0]
    np.testing.assert_array_equal(zero.params, flatten_params(init))


def test_adapt_uses_learned_step_sizes(tiny_model, tiny_loss):
    video = smooth_video(2, 4, 4)
    init = init_params(tiny_model, seed=0)
    beta = np.zeros(flatten_params(init).size)
    frozen = adapt(init, video, 2, tiny_model, tiny_loss, beta=beta)
    np.testing.assert_array_equal(frozen.params, flatten_params(init))


def test_adapt_reports_steps_to_target(tiny_model, tiny_loss):
    video = smooth_video(2, 4, 4)
    init = init_params(tiny_model, seed=0)
    result = adapt(init, video, 2, tiny_model, tiny_loss, target_psnr=0.0)
    assert result.steps_to_target == 0
    unreachable = adapt(init, video, 1, tiny_model, tiny_loss, target_psnr=99.0)
    assert unreachable.steps_to_target is None


def test_adapt_improves_on_a_constant_frame(tiny_model, tiny_loss):
    video = constant_video(0.4, 1, 4, 4)
    init = init_params(tiny_model, seed=0)
    result = adapt(init, video, 20, tiny_model, tiny_loss, lr=1e-2)
    assert result.psnr[-1] > result.psnr[0]
