from __future__ import annotations

import numpy as np

from metanerv.types.models import Video


def constant_video(value: float, n: int, h: int, w: int, video_id: str = "const") -> Video:
    return Video(np.full((n, 3, h, w), value), id=video_id)


def smooth_video(n: int, h: int, w: int, seed: int = 0) -> Video:
    """Low-frequency sinusoids drifting slowly from frame to frame."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:h, 0:w] / max(h, w)
    phase = rng.uniform(0, 2 * np.pi, size=3)
    frames = [
        np.stack([0.5 + 0.3 * np.sin(3 * (yy + xx) + 0.2 * i + p) for p in phase])
        for i in range(n)
    ]
    return Video(np.stack(frames), id=f"smooth-{seed}")
