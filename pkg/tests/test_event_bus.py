from __future__ import annotations

import asyncio

import pytest

from metanerv.event_bus import AsyncEventBus


@pytest.mark.asyncio
async def test_event_bus_fanout():
    bus = AsyncEventBus()
    stream1 = bus.stream()
    stream2 = bus.stream()

    task1 = asyncio.create_task(stream1.__anext__())
    task2 = asyncio.create_task(stream2.__anext__())

    await asyncio.sleep(0)
    await bus.publish({"kind": "outer_step"})

    event1 = await task1
    event2 = await task2

    assert event1 == {"kind": "outer_step"}
    assert event2 == {"kind": "outer_step"}

    await stream1.aclose()
    await stream2.aclose()


@pytest.mark.asyncio
async def test_publish_from_worker_thread():
    bus = AsyncEventBus()
    stream = bus.stream()
    task = asyncio.create_task(stream.__anext__())
    await asyncio.sleep(0)

    loop = asyncio.get_running_loop()
    await asyncio.to_thread(bus.publish_threadsafe, {"step": 1}, loop)

    assert await task == {"step": 1}
    await stream.aclose()


@pytest.mark.asyncio
async def test_close_ends_streams_after_pending_events():
    bus = AsyncEventBus()
    received = []

    async def consume():
        async for event in bus.stream():
            received.append(event)

    consumer = asyncio.create_task(consume())
    await asyncio.sleep(0)
    await bus.publish("first")
    await bus.publish("second")
    await bus.close()
    await asyncio.wait_for(consumer, timeout=1.0)

    assert received == ["first", "second"]
