"""
Defense orchestration.

The ``Orchestrator`` is the single place where detection verdicts turn
into topology changes: a confirmed source is redirected to the honey
farm on every internal router at once and blocked on the external
firewalls after the engagement window (or immediately when it springs a
trap). It also makes the per-hop decision at firewalls and routers for
the network, and it records every ``DefenseEvent`` in order.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

from .detection import DetectionSettings, SuspicionVerdict
from .engine import PacketArrival
from .exceptions import NoRoute
from .network import Hop
from .packets import Address
from .topology import FilterVerdict, NodeKind, Topology

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DefensePolicy:
    farm_enabled: bool = True
    honeyd_enabled: bool = True
    suspicion_threshold: float = 0.5
    engagement_window_ms: int = 10000
    challenge_timeout_ms: int = 2000
    warmup_n: int = 2000

    def __post_init__(self) -> None:
        if self.engagement_window_ms < 0:
            raise ValueError('engagement_window_ms must not be negative')
        if not 0.0 < self.suspicion_threshold < 1.0:
            raise ValueError('suspicion_threshold must lie in (0, 1)')

    @property
    def active(self) -> bool:
        return self.farm_enabled or self.honeyd_enabled

    def detection_settings(self, **knobs: Any) -> DetectionSettings:
        return DetectionSettings(
            threshold=self.suspicion_threshold,
            challenge_timeout_ms=self.challenge_timeout_ms,
            warmup_n=self.warmup_n,
            **knobs,
        )


class DefenseEventKind(str, Enum):
    SUSPICION_RAISED = 'SuspicionRaised'
    CHALLENGE_ISSUED = 'ChallengeIssued'
    ESCALATED = 'Escalated'
    CLEARED = 'Cleared'
    CONFIRMED = 'Confirmed'
    REDIRECT_INSTALLED = 'RedirectInstalled'
    ENGAGEMENT_STARTED = 'EngagementStarted'
    TRAP_TRIGGERED = 'TrapTriggered'
    FAILOVER_DONE = 'FailoverDone'
    BLOCK_INSTALLED = 'BlockInstalled'


@dataclass(frozen=True)
class DefenseEvent:
    time: int
    kind: DefenseEventKind
    source: Address
    origin: str
    detail: dict[str, Any] = field(default_factory=dict)

    def as_record(self) -> dict[str, Any]:
        return {
            'event': self.kind.value,
            'source': str(self.source),
            'origin': self.origin,
            'detail': self.detail,
        }


class Orchestrator:
    def __init__(self, network: Any, policy: DefensePolicy, *, farm_node: str | None = None) -> None:
        self.network = network
        self.topology: Topology = network.topology
        self.policy = policy
        self.farm_node = farm_node
        self.farm: Any = None
        self.events: list[DefenseEvent] = []
        self.confirmed: set[Address] = set()
        self.blocked: set[Address] = set()
        self.engaged: set[Address] = set()
        self.trapped: set[Address] = set()
        self.services: dict[Address, Any] = {}

    @property
    def sim(self):
        return self.network.sim

    def record(
        self, kind: DefenseEventKind, source: Address, origin: str, now: int, **detail: Any,
    ) -> DefenseEvent:
        event = DefenseEvent(now, kind, source, origin, detail)
        self.events.append(event)
        self.network.observer.note('defense', now, **event.as_record())
        return event

    def detection_listener(self, origin: str):
        """Callback for a detector's pipeline progress."""

        def listener(kind: str, source: Address, now: int) -> None:
            self.record(DefenseEventKind(kind), source, origin, now)

        return listener

    def verdict_listener(self, origin: str):
        def listener(source: Address, verdict: SuspicionVerdict, now: int) -> None:
            self.on_verdict(source, verdict, origin, now)

        return listener

    # -- verdicts ---------------------------------------------------------------

    def on_verdict(
        self, source: Address, verdict: SuspicionVerdict, origin: str, now: int,
    ) -> list[DefenseEvent]:
        if verdict is not SuspicionVerdict.CONFIRMED or source in self.confirmed:
            return []
        self.confirmed.add(source)
        actions = [self.record(DefenseEventKind.CONFIRMED, source, origin, now)]
        logger.info('%s confirmed %s at t=%s', origin, source, now)

        if self.farm_node is not None:
            routers = [
                router for router in self.topology.routers
                if self.topology.install_redirect(router, source, self.farm_node)
            ]
            if routers:
                actions.append(self.record(
                    DefenseEventKind.REDIRECT_INSTALLED, source, origin, now,
                    routers=routers, target=self.farm_node,
                ))
                logger.info('redirecting %s to %s on %s', source, self.farm_node, ', '.join(routers))

        at = now + self.policy.engagement_window_ms
        if at == now:
            actions.extend(self.block(source, origin, now))
        else:
            self.sim.timer(at, self, 'block', (source, origin))
        return actions

    def block(self, source: Address, origin: str, now: int) -> list[DefenseEvent]:
        if source in self.blocked:
            return []
        firewalls = [
            fw for fw in self.topology.external_firewalls
            if self.topology.block_source(fw, source)
        ]
        self.blocked.add(source)
        if self.farm is not None:
            self.farm.release_source(source, now)
        if not firewalls:
            return []
        logger.info('blocking %s on %s at t=%s', source, ', '.join(firewalls), now)
        return [self.record(
            DefenseEventKind.BLOCK_INSTALLED, source, origin, now, firewalls=firewalls,
        )]

    def on_timer(self, tag: str, data: Any, now: int) -> None:
        if tag == 'block':
            source, origin = data
            self.block(source, origin, now)

    # -- farm callbacks ---------------------------------------------------------

    def engagement_started(self, source: Address, vm_id: str, now: int) -> None:
        if source in self.engaged:
            return
        self.engaged.add(source)
        self.record(DefenseEventKind.ENGAGEMENT_STARTED, source, vm_id, now)

    def on_trap(self, vm: Any, source: Address, now: int) -> list[DefenseEvent]:
        """A trap fired: fail over, then block without waiting for the window.

        Later traps by a source that already sprang one (packets still in
        flight when the block landed) still fail over but record no new
        defense events.
        """
        if source in self.trapped:
            if self.farm is not None:
                self.farm.failover(vm, now)
            return []
        self.trapped.add(source)
        actions = [self.record(
            DefenseEventKind.TRAP_TRIGGERED, source, vm.id, now,
            cause=vm.compromised_by.value if vm.compromised_by is not None else None,
        )]
        result = self.farm.failover(vm, now) if self.farm is not None else None
        if isinstance(result, str):
            actions.append(self.record(
                DefenseEventKind.FAILOVER_DONE, source, vm.id, now, activated=result,
            ))
        actions.extend(self.block(source, vm.id, now))
        return actions

    # -- forwarding ---------------------------------------------------------------

    def pipeline_step(self, node: str, arrival: PacketArrival, now: int) -> Hop:
        """Decide the next hop for a packet in transit at ``node``."""
        pkt = arrival.packet
        topology = self.topology
        try:
            if arrival.steer is not None:
                return Hop(topology.next_hop_toward(node, arrival.steer), steer=arrival.steer)
            kind = topology.kind(node)
            if kind is NodeKind.FIREWALL:
                if arrival.ingress and topology.firewall_filter(node, pkt) is FilterVerdict.DROP:
                    return Hop.drop('firewall')
                return Hop(topology.next_hop(node, pkt.dst))

            if arrival.ingress:
                target = topology.routing[node].redirect_for(pkt.src_claimed)
                if target is not None:
                    return Hop(topology.next_hop_toward(node, target), steer=target)
            mirrored = arrival.mirrored
            if (
                arrival.ingress
                and not mirrored
                and self.farm is not None
                and pkt.dst in self.services
            ):
                self.farm.sense(pkt, now)
                mirrored = True
            return Hop(topology.next_hop(node, pkt.dst), mirrored=mirrored)
        except NoRoute:
            return Hop.drop('noroute')
