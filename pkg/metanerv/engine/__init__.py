"""Minimal float64 tensor engine with define-by-run reverse-mode gradients."""

from metanerv.engine.optim import AdamState, adam_step
from metanerv.engine.tensor import Tape, Tensor, backward

__all__ = ["AdamState", "Tape", "Tensor", "adam_step", "backward"]
