from __future__ import annotations

import asyncio
from collections.abc import AsyncIterator

_CLOSED = object()


class AsyncEventBus:
    """Simple fan-out async event bus using per-subscriber queues."""

    def __init__(self) -> None:
        self._subscribers: set[asyncio.Queue[object]] = set()
        self._lock = asyncio.Lock()

    async def publish(self, event: object) -> None:
        async with self._lock:
            subscribers = tuple(self._subscribers)
        for queue in subscribers:
            queue.put_nowait(event)

    def publish_threadsafe(self, event: object, loop: asyncio.AbstractEventLoop) -> None:
        """Publish from a worker thread; delivery happens on ``loop``."""
        loop.call_soon_threadsafe(self._deliver, event)

    async def close(self) -> None:
        """End every open stream once the events queued so far are consumed."""
        await self.publish(_CLOSED)

    def _deliver(self, event: object) -> None:
        for queue in tuple(self._subscribers):
            queue.put_nowait(event)

    async def stream(self) -> AsyncIterator[object]:
        queue: asyncio.Queue[object] = asyncio.Queue()
        async with self._lock:
            self._subscribers.add(queue)
        try:
            while True:
                event = await queue.get()
                if event is _CLOSED:
                    return
                yield event
        finally:
            async with self._lock:
                self._subscribers.discard(queue)
