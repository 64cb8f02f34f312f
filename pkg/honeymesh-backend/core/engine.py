"""
Deterministic discrete-event engine.

Time is an integer number of simulated milliseconds. Events are kept in
a binary heap keyed by ``(at, late, seq)`` where ``seq`` is assigned when
the event is scheduled, so simultaneous events run in insertion order and
two runs with the same inputs process exactly the same sequence. Events
marked ``late`` (deadline timers) run after every other event of their
instant, including ones scheduled for that instant while it is being
processed.

The engine knows nothing about networks. Payload handlers are
registered per payload type by the layers built on top of it
(``core.network``); ``TimerFire`` payloads are delivered to their owner.
"""
from __future__ import annotations

import heapq
import itertools
import logging
from collections.abc import Callable
from dataclasses import dataclass, field
from typing import Any, Protocol

from .exceptions import SchedulingInPast
from .packets import Packet

logger = logging.getLogger(__name__)


class TimerOwner(Protocol):
    def on_timer(self, tag: str, data: Any, now: int) -> None: ...


@dataclass(slots=True)
class SimClock:
    now: int = 0


@dataclass(slots=True)
class PacketArrival:
    """A packet reaching ``node`` over the link from ``came_from``.

    ``came_from`` is None when the node originates the packet itself.
    ``ingress`` marks traffic that entered from an external host,
    ``steer`` pins the packet toward a redirect target and ``mirrored``
    records that a router already copied it to the farm sensors.
    """

    node: str
    packet: Packet
    came_from: str | None = None
    ingress: bool = False
    steer: str | None = None
    mirrored: bool = False


@dataclass(slots=True)
class TimerFire:
    owner: TimerOwner
    tag: str
    data: Any = None


@dataclass(slots=True)
class ServiceCompletion:
    node: str
    request_id: int


Payload = PacketArrival | TimerFire | ServiceCompletion


@dataclass(slots=True)
class Event:
    at: int
    payload: Payload
    late: bool = False
    seq: int = field(default=-1)


class Simulator:
    """Single-threaded event loop owning the clock and the event queue."""

    def __init__(self, *, keep_history: bool = False) -> None:
        self.clock = SimClock()
        self._queue: list[tuple[int, bool, int, Event]] = []
        self._seq = itertools.count()
        self._handlers: dict[type, Callable[[Any, int], None]] = {
            TimerFire: self._fire_timer,
        }
        #: Unique packet ids for everything created during the run.
        self.packet_ids = itertools.count(1)
        self.history: list[tuple[int, int]] | None = [] if keep_history else None

    @property
    def now(self) -> int:
        return self.clock.now

    def on(self, payload_type: type, handler: Callable[[Any, int], None]) -> None:
        self._handlers[payload_type] = handler

    def schedule(self, event: Event) -> Event:
        if event.at < self.clock.now:
            raise SchedulingInPast(event.at, self.clock.now)
        event.seq = next(self._seq)
        heapq.heappush(self._queue, (event.at, event.late, event.seq, event))
        return event

    def at(self, at: int, payload: Payload) -> Event:
        return self.schedule(Event(at=at, payload=payload))

    def after(self, delay: int, payload: Payload) -> Event:
        return self.schedule(Event(at=self.clock.now + delay, payload=payload))

    def timer(self, at: int, owner: TimerOwner, tag: str, data: Any = None, *, late: bool = False) -> Event:
        return self.schedule(Event(at=at, payload=TimerFire(owner, tag, data), late=late))

    def pending(self) -> int:
        return len(self._queue)

    def next_packet_id(self) -> int:
        return next(self.packet_ids)

    def run_until(self, t_end: int) -> int:
        """Process every event with ``at <= t_end``; return how many ran."""
        if t_end < self.clock.now:
            raise SchedulingInPast(t_end, self.clock.now)
        processed = 0
        queue = self._queue
        while queue and queue[0][0] <= t_end:
            at, _, seq, event = heapq.heappop(queue)
            self.clock.now = at
            if self.history is not None:
                self.history.append((at, seq))
            handler = self._handlers.get(type(event.payload))
            if handler is None:
                logger.warning('no handler for %s at t=%s', type(event.payload).__name__, at)
            else:
                handler(event.payload, at)
            processed += 1
        self.clock.now = max(self.clock.now, t_end)
        return processed

    @staticmethod
    def _fire_timer(payload: TimerFire, now: int) -> None:
        payload.owner.on_timer(payload.tag, payload.data, now)
