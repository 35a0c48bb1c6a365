"""Seeded synthetic video families and noise injection for desk-scale datasets."""

from __future__ import annotations

import math

import numpy as np

from metanerv.types.errors import ConfigurationError
from metanerv.types.models import SyntheticFamily, SyntheticSpec, Video


def generate_synthetic(spec: SyntheticSpec) -> Video:
    """Pure function of ``spec``: same spec, same frames."""
    rng = np.random.default_rng(spec.seed)
    h, w = spec.resolution
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    render = _FAMILIES[spec.family]
    frames = render(spec, rng, yy, xx)
    return Video(np.clip(frames, 0.0, 1.0), id=f"{spec.family.value}-{spec.seed}")


def add_noise(video: Video, sigma: float, seed: int) -> Video:
    """I.i.d. Gaussian noise per element, clamped to [0, 1]."""
    if sigma < 0:
        raise ConfigurationError("sigma must be >= 0")
    if sigma == 0:
        return Video(video.frames.copy(), id=video.id, fps=video.fps)
    rng = np.random.default_rng(seed)
    noisy = video.frames + rng.normal(0.0, sigma, size=video.frames.shape)
    return Video(np.clip(noisy, 0.0, 1.0), id=f"{video.id}-noisy", fps=video.fps)


def _background(rng: np.random.Generator, yy: np.ndarray, xx: np.ndarray) -> np.ndarray:
    h, w = yy.shape
    base = rng.uniform(0.05, 0.35, size=3)
    tilt = rng.uniform(-0.15, 0.15, size=3)
    ramp = (yy / max(h - 1, 1) + xx / max(w - 1, 1)) / 2.0
    return base[:, None, None] + tilt[:, None, None] * ramp[None]


def _bounce(start: float, velocity: float, low: float, high: float, steps: int) -> list[float]:
    """Positions of a point reflecting between ``low`` and ``high``."""
    span = high - low
    out = []
    for n in range(steps):
        if span <= 0:
            out.append(low)
            continue
        p = (start - low + velocity * n) % (2 * span)
        out.append(low + (p if p <= span else 2 * span - p))
    return out


def _moving_box(spec: SyntheticSpec, rng, yy, xx) -> np.ndarray:
    h, w = yy.shape
    bg = _background(rng, yy, xx)
    color = rng.uniform(0.4, 1.0, size=3) * spec.contrast
    side = max(2.0, spec.size * min(h, w))
    angle = rng.uniform(0, 2 * math.pi)
    y0, x0 = rng.uniform(0, h - side), rng.uniform(0, w - side)
    ys = _bounce(y0, spec.velocity * math.sin(angle), 0, h - side, spec.n_frames)
    xs = _bounce(x0, spec.velocity * math.cos(angle), 0, w - side, spec.n_frames)
    frames = []
    for top, left in zip(ys, xs, strict=True):
        # soft edges keep sub-pixel motion visible
        inside_y = np.clip(yy - top + 0.5, 0, 1) * np.clip(top + side - yy + 0.5, 0, 1)
        inside_x = np.clip(xx - left + 0.5, 0, 1) * np.clip(left + side - xx + 0.5, 0, 1)
        box = (inside_y * inside_x)[None]
        frames.append(bg * (1 - box) + color[:, None, None] * box)
    return np.stack(frames)


def _bouncing_ball(spec: SyntheticSpec, rng, yy, xx) -> np.ndarray:
    h, w = yy.shape
    bg = _background(rng, yy, xx)
    color = rng.uniform(0.5, 1.0, size=3) * spec.contrast
    radius = max(1.5, spec.size * min(h, w) / 2.0)
    angle = rng.uniform(0, 2 * math.pi)
    cy0, cx0 = rng.uniform(radius, h - radius), rng.uniform(radius, w - radius)
    cys = _bounce(cy0, spec.velocity * math.sin(angle), radius, h - radius, spec.n_frames)
    cxs = _bounce(cx0, spec.velocity * math.cos(angle), radius, w - radius, spec.n_frames)
    frames = []
    for cy, cx in zip(cys, cxs, strict=True):
        dist = np.sqrt((yy - cy) ** 2 + (xx - cx) ** 2)
        disc = np.clip(radius - dist + 0.5, 0, 1)[None]
        frames.append(bg * (1 - disc) + color[:, None, None] * disc)
    return np.stack(frames)


def _gradient_pan(spec: SyntheticSpec, rng, yy, xx) -> np.ndarray:
    h, w = yy.shape
    freq = rng.uniform(0.5, 1.5, size=(3, 2)) * 2 * math.pi / max(h, w)
    phase = rng.uniform(0, 2 * math.pi, size=3)
    angle = rng.uniform(0, 2 * math.pi)
    dy, dx = spec.velocity * math.sin(angle), spec.velocity * math.cos(angle)
    frames = []
    for n in range(spec.n_frames):
        y, x = yy + dy * n, xx + dx * n
        channels = [
            0.5 + 0.5 * spec.contrast * np.sin(freq[c, 0] * y + freq[c, 1] * x + phase[c])
            for c in range(3)
        ]
        frames.append(np.stack(channels))
    return np.stack(frames)


def _sector_scan(spec: SyntheticSpec, rng, yy, xx) -> np.ndarray:
    """Dark background with a bright fan and a pulsing chamber, like an ultrasound sweep."""
    h, w = yy.shape
    apex_y, apex_x = -0.1 * h, (w - 1) / 2.0
    r = np.sqrt((yy - apex_y) ** 2 + (xx - apex_x) ** 2)
    theta = np.arctan2(xx - apex_x, yy - apex_y)
    half_angle = math.radians(rng.uniform(30, 40))
    fan = (np.abs(theta) < half_angle) & (r < 1.05 * h)
    speckle = rng.uniform(0.5, 1.0, size=(h, w))
    tissue = np.where(fan, speckle * spec.contrast, 0.02)
    cy, cx = rng.uniform(0.45, 0.6) * h, apex_x + rng.uniform(-0.1, 0.1) * w
    base_radius = spec.size * min(h, w)
    period = rng.uniform(6, 12)
    frames = []
    for n in range(spec.n_frames):
        swing = 0.1 * spec.velocity * math.sin(2 * math.pi * n / period)
        radius = base_radius * (1.0 + swing)
        dist = np.sqrt(((yy - cy) / 1.3) ** 2 + (xx - cx) ** 2)
        chamber = np.clip(radius - dist + 0.5, 0, 1)
        gray = tissue * (1 - 0.85 * chamber)
        frames.append(np.stack([gray, gray, gray]))
    return np.stack(frames)


_FAMILIES = {
    SyntheticFamily.MOVING_BOX: _moving_box,
    SyntheticFamily.BOUNCING_BALL: _bouncing_ball,
    SyntheticFamily.GRADIENT_PAN: _gradient_pan,
    SyntheticFamily.SECTOR_SCAN: _sector_scan,
}
