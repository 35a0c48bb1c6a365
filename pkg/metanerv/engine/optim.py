from __future__ import annotations

import numpy as np

from metanerv.types.errors import ShapeMismatchError
from metanerv.types.models import AdamState

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


def adam_step(
    params: np.ndarray,
    grads: np.ndarray,
    state: AdamState | None,
    lr: float,
) -> tuple[np.ndarray, AdamState]:
    """One bias-corrected Adam update on a flat parameter vector.

    Returns new arrays; the inputs are left untouched.
    """
    if params.shape != grads.shape:
        raise ShapeMismatchError(f"adam_step: params {params.shape} vs grads {grads.shape}")
    if state is None:
        state = AdamState.zeros(params.size)
    if state.m.shape != params.shape:
        raise ShapeMismatchError(f"adam_step: state {state.m.shape} vs params {params.shape}")

    step = state.step + 1
    m = ADAM_BETA1 * state.m + (1.0 - ADAM_BETA1) * grads
    v = ADAM_BETA2 * state.v + (1.0 - ADAM_BETA2) * grads * grads
    m_hat = m / (1.0 - ADAM_BETA1**step)
    v_hat = v / (1.0 - ADAM_BETA2**step)
    updated = params - lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
    return updated, AdamState(m=m, v=v, step=step)
