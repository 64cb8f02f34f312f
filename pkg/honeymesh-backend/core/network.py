"""
Hop-by-hop packet transport on top of the event engine.

Each link direction is a FIFO with a fixed departure spacing of
``1 / bandwidth`` ms and a backlog cap; a packet that finds the backlog
full is dropped. Forwarding decisions at routers and firewalls are
delegated to a ``Forwarder`` (the defense orchestrator), so the
transport itself never looks at routing or filtering policy.
"""
from __future__ import annotations

import logging
import math
from collections.abc import Iterable
from dataclasses import dataclass
from typing import Any, Protocol

from .engine import PacketArrival, ServiceCompletion, Simulator
from .exceptions import NoRoute
from .packets import Packet
from .topology import EXTERNAL_KINDS, FORWARDING_KINDS, Topology

logger = logging.getLogger(__name__)


class Endpoint(Protocol):
    def receive(self, pkt: Packet, now: int) -> None: ...


class Observer(Protocol):
    def emitted(self, node: str, pkt: Packet, now: int) -> None: ...
    def dropped(self, node: str, pkt: Packet, reason: str, now: int) -> None: ...
    def delivered(self, node: str, pkt: Packet, now: int) -> None: ...
    def note(self, kind: str, now: int, **fields: Any) -> None: ...


class NullObserver:
    def emitted(self, node: str, pkt: Packet, now: int) -> None:
        pass

    def dropped(self, node: str, pkt: Packet, reason: str, now: int) -> None:
        pass

    def delivered(self, node: str, pkt: Packet, now: int) -> None:
        pass

    def note(self, kind: str, now: int, **fields: Any) -> None:
        pass


@dataclass(frozen=True, slots=True)
class Hop:
    """Outcome of a forwarding decision at a router or firewall."""

    next_node: str | None
    steer: str | None = None
    mirrored: bool = False
    drop_reason: str | None = None

    @classmethod
    def drop(cls, reason: str) -> Hop:
        return cls(next_node=None, drop_reason=reason)


class Forwarder(Protocol):
    def pipeline_step(self, node: str, arrival: PacketArrival, now: int) -> Hop: ...


class DefaultForwarder:
    """Plain shortest-path forwarding with no filtering at all."""

    def __init__(self, topology: Topology) -> None:
        self.topology = topology

    def pipeline_step(self, node: str, arrival: PacketArrival, now: int) -> Hop:
        target = arrival.steer
        if target is not None:
            return Hop(self.topology.next_hop_toward(node, target), steer=target)
        return Hop(self.topology.next_hop(node, arrival.packet.dst))


@dataclass(slots=True)
class _LinkDirection:
    next_free: float = 0.0
    sent: int = 0
    overflows: int = 0


class Network:
    def __init__(
        self,
        sim: Simulator,
        topology: Topology,
        observer: Observer | None = None,
    ) -> None:
        self.sim = sim
        self.topology = topology
        self.observer: Observer = observer or NullObserver()
        self.forwarder: Forwarder = DefaultForwarder(topology)
        self.endpoints: dict[str, Endpoint] = {}
        self._directions: dict[tuple[str, str], _LinkDirection] = {}
        sim.on(PacketArrival, self._on_arrival)
        sim.on(ServiceCompletion, self._on_service_completion)

    def attach(self, node_id: str, endpoint: Endpoint) -> None:
        self.endpoints[node_id] = endpoint

    # -- origination ----------------------------------------------------

    def emit(self, node_id: str, pkt: Packet) -> None:
        """Originate ``pkt`` at ``node_id`` now."""
        now = self.sim.now
        self.observer.emitted(node_id, pkt, now)
        ingress = self.topology.kind(node_id) in EXTERNAL_KINDS
        self._leave(node_id, PacketArrival(node=node_id, packet=pkt, ingress=ingress), now)

    def emit_all(self, node_id: str, packets: Iterable[Packet]) -> None:
        for pkt in packets:
            self.emit(node_id, pkt)

    def emit_at(self, at: int, node_id: str, pkt: Packet) -> None:
        self.sim.timer(at, self, 'emit', (node_id, pkt))

    def on_timer(self, tag: str, data: Any, now: int) -> None:
        if tag == 'emit':
            node_id, pkt = data
            self.emit(node_id, pkt)

    # -- transport --------------------------------------------------------

    def _leave(self, node_id: str, arrival: PacketArrival, now: int) -> None:
        """Pick the first hop for a packet originated at ``node_id``."""
        pkt = arrival.packet
        try:
            next_node = self.topology.next_hop(node_id, pkt.dst)
        except NoRoute:
            self.observer.dropped(node_id, pkt, 'noroute', now)
            return
        if next_node == node_id:
            self._deliver(node_id, pkt, now)
            return
        self._transmit(node_id, next_node, arrival, now)

    def _on_arrival(self, arrival: PacketArrival, now: int) -> None:
        node_id = arrival.node
        pkt = arrival.packet
        kind = self.topology.kind(node_id)
        if kind in FORWARDING_KINDS:
            hop = self.forwarder.pipeline_step(node_id, arrival, now)
            if hop.next_node is None:
                self.observer.dropped(node_id, pkt, hop.drop_reason or 'filtered', now)
                return
            onward = PacketArrival(
                node=hop.next_node,
                packet=pkt,
                came_from=node_id,
                ingress=arrival.ingress,
                steer=hop.steer,
                mirrored=arrival.mirrored or hop.mirrored,
            )
            self._transmit(node_id, hop.next_node, onward, now)
            return
        addressed = arrival.steer == node_id or self.topology.address_of(node_id) == pkt.dst
        if not addressed:
            self.observer.dropped(node_id, pkt, 'misdelivered', now)
            return
        self._deliver(node_id, pkt, now)

    def _deliver(self, node_id: str, pkt: Packet, now: int) -> None:
        self.observer.delivered(node_id, pkt, now)
        endpoint = self.endpoints.get(node_id)
        if endpoint is not None:
            endpoint.receive(pkt, now)

    def _transmit(self, src: str, dst: str, arrival: PacketArrival, now: int) -> None:
        link = self.topology.link_between(src, dst)
        direction = self._directions.get((src, dst))
        if direction is None:
            direction = self._directions[(src, dst)] = _LinkDirection()
        bandwidth = link.bandwidth_pkts_per_ms
        backlog = (direction.next_free - now) * bandwidth
        if backlog >= link.queue_cap:
            direction.overflows += 1
            self.observer.dropped(src, arrival.packet, 'link_overflow', now)
            return
        departure = max(float(now), direction.next_free)
        direction.next_free = departure + 1.0 / bandwidth
        direction.sent += 1
        arrival.node = dst
        arrival.came_from = src
        self.sim.at(math.ceil(departure + link.latency_ms), arrival)

    def _on_service_completion(self, payload: ServiceCompletion, now: int) -> None:
        endpoint = self.endpoints.get(payload.node)
        handler = getattr(endpoint, 'on_service_complete', None)
        if handler is not None:
            handler(payload.request_id, now)

    def link_stats(self) -> dict[str, dict[str, int]]:
        return {
            f'{src}->{dst}': {'sent': state.sent, 'overflows': state.overflows}
            for (src, dst), state in sorted(self._directions.items())
        }
