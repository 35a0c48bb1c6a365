"""Public backend facade for metanerv.

Only primary entry points are re-exported here.
Advanced consumers should import concrete types from structured submodules like
`metanerv.types.models`, `metanerv.types.events`, and `metanerv.types.errors`.
"""

from metanerv.event_bus import AsyncEventBus
from metanerv.meta import adapt, inner_loop, meta_train, outer_step, progressive_frames
from metanerv.runner import MetaNeRVRunner
from metanerv.service import AsyncMetaNeRVService

__all__ = [
    "AsyncEventBus",
    "AsyncMetaNeRVService",
    "MetaNeRVRunner",
    "adapt",
    "inner_loop",
    "meta_train",
    "outer_step",
    "progressive_frames",
]
