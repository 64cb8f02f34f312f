"""
The honey farm: decoy VMs that mimic production services, keep a
confirmed attacker busy, expose deliberate flaws and hand over to a
standby the moment one of them is compromised.

All VMs of a farm live on one ``HoneyFarmHost`` node and share its
uplink. Each profile (one per production service) has a lineage of VMs
in a ``BackupPool``: exactly one is Active or Engaged while the pool
lasts, the rest wait in Standby, and compromised VMs go through
Restoring before they rejoin the pool.
"""
from __future__ import annotations

import logging
from collections.abc import Callable, Iterator
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

from .detection import Detector
from .exceptions import LifecycleError, NotOperational
from .packets import (
    CRASH_ATTACKS,
    Address,
    AttackType,
    Fragment,
    Header,
    Packet,
    PacketKind,
    Protocol,
    honest_packet,
)
from .victim import SYN_ACK_BYTES, UNREACHABLE_BYTES, Service, structural_trigger

logger = logging.getLogger(__name__)


class Interaction(str, Enum):
    LOW = 'Low'
    HIGH = 'High'


#: Request kinds each interaction level answers.
ANSWERED_KINDS = {
    Interaction.LOW: frozenset({PacketKind.ECHO_REQUEST, PacketKind.SYN}),
    Interaction.HIGH: frozenset({PacketKind.ECHO_REQUEST, PacketKind.SYN, PacketKind.DATA}),
}


@dataclass(frozen=True)
class HoneyVmProfile:
    mimics: Service
    interaction: Interaction
    exposed_vulns: frozenset[AttackType]
    engage_reply_latency_ms: int = 5

    def __post_init__(self) -> None:
        if not self.exposed_vulns:
            raise ValueError('a honey VM profile must expose at least one flaw')
        if not self.exposed_vulns <= CRASH_ATTACKS:
            raise ValueError('exposed_vulns may only name crash-class attacks')
        if self.engage_reply_latency_ms < 0:
            raise ValueError('engage_reply_latency_ms must not be negative')


class Lifecycle(str, Enum):
    STANDBY = 'Standby'
    ACTIVE = 'Active'
    ENGAGED = 'Engaged'
    COMPROMISED = 'Compromised'
    RESTORING = 'Restoring'


ALLOWED_TRANSITIONS = {
    Lifecycle.STANDBY: frozenset({Lifecycle.ACTIVE}),
    Lifecycle.ACTIVE: frozenset({Lifecycle.ENGAGED}),
    Lifecycle.ENGAGED: frozenset({Lifecycle.ENGAGED, Lifecycle.ACTIVE, Lifecycle.COMPROMISED}),
    Lifecycle.COMPROMISED: frozenset({Lifecycle.RESTORING}),
    Lifecycle.RESTORING: frozenset({Lifecycle.STANDBY}),
}

OPERATIONAL = frozenset({Lifecycle.ACTIVE, Lifecycle.ENGAGED})


@dataclass(frozen=True)
class AttackLogEntry:
    time: int
    packet: dict[str, Any]
    action: str

    def as_record(self) -> dict[str, Any]:
        return {'t': self.time, 'packet': self.packet, 'action': self.action}


def packet_summary(pkt: Header) -> dict[str, Any]:
    summary = {
        'id': pkt.id,
        'protocol': pkt.protocol.value,
        'kind': pkt.kind.value,
        'src': str(pkt.src_claimed),
        'dst': str(pkt.dst),
        'size': pkt.size_bytes,
    }
    if pkt.frag is not None:
        summary['frag'] = [pkt.frag.offset, pkt.frag.length]
    return summary


@dataclass
class HoneyVmState:
    id: str
    index: int
    profile: HoneyVmProfile
    lifecycle: Lifecycle = Lifecycle.STANDBY
    engaged_source: Address | None = None
    compromised_at: int | None = None
    compromised_by: AttackType | None = None
    restoring_until: int | None = None
    attack_log: list[AttackLogEntry] = field(default_factory=list)
    frag_buffers: dict[Address, list[Fragment]] = field(default_factory=dict)

    @property
    def operational(self) -> bool:
        return self.lifecycle in OPERATIONAL

    def transition(self, target: Lifecycle, now: int, *, source: Address | None = None) -> None:
        if target not in ALLOWED_TRANSITIONS[self.lifecycle]:
            raise LifecycleError(f'{self.id}: {self.lifecycle.value} -> {target.value} is not allowed')
        self.lifecycle = target
        self.engaged_source = source if target is Lifecycle.ENGAGED else None
        if target is Lifecycle.COMPROMISED:
            self.compromised_at = now
        elif target is Lifecycle.STANDBY:
            self.compromised_at = None
            self.compromised_by = None
            self.restoring_until = None
            self.frag_buffers.clear()

    def log(self, now: int, pkt: Header, action: str) -> None:
        self.attack_log.append(AttackLogEntry(now, packet_summary(pkt), action))


@dataclass(frozen=True)
class PoolExhausted:
    service: Service


@dataclass
class BackupPool:
    vms: dict[Service, list[HoneyVmState]]
    restore_delay_ms: int = 30000

    @classmethod
    def build(cls, profiles: dict[Service, tuple[HoneyVmProfile, int]], restore_delay_ms: int = 30000) -> BackupPool:
        """One lineage per service; the first VM of each starts Active."""
        vms: dict[Service, list[HoneyVmState]] = {}
        for service, (profile, size) in profiles.items():
            if size < 1:
                raise ValueError(f'pool for {service.value} needs at least one VM')
            lineage = [
                HoneyVmState(id=f'{service.value.lower()}-vm{index:02d}', index=index, profile=profile)
                for index in range(1, size + 1)
            ]
            lineage[0].lifecycle = Lifecycle.ACTIVE
            vms[service] = lineage
        return cls(vms=vms, restore_delay_ms=restore_delay_ms)

    def __iter__(self) -> Iterator[HoneyVmState]:
        for service in sorted(self.vms, key=lambda s: s.value):
            yield from self.vms[service]

    def operational(self, service: Service) -> HoneyVmState | None:
        for vm in self.vms.get(service, ()):
            if vm.operational:
                return vm
        return None

    def standbys(self, service: Service) -> list[HoneyVmState]:
        return sorted(
            (vm for vm in self.vms.get(service, ()) if vm.lifecycle is Lifecycle.STANDBY),
            key=lambda vm: vm.index,
        )


# -- operations ---------------------------------------------------------------------


def mimic_reply(vm: HoneyVmState, pkt: Header, reply_from: Address, at: int, next_id: Callable[[], int]) -> Packet | None:
    if pkt.kind not in ANSWERED_KINDS[vm.profile.interaction]:
        return None
    if pkt.kind is PacketKind.ECHO_REQUEST:
        kind, protocol, size = PacketKind.ECHO_REPLY, Protocol.ICMP, pkt.size_bytes
    elif pkt.kind is PacketKind.SYN:
        kind, protocol, size = PacketKind.SYN_ACK, Protocol.TCP, SYN_ACK_BYTES
    else:
        kind, protocol, size = PacketKind.DATA, pkt.protocol, pkt.size_bytes
    return honest_packet(
        id=next_id(),
        protocol=protocol,
        kind=kind,
        src=reply_from,
        dst=pkt.src_claimed,
        size_bytes=size,
        sent_at=at,
        dst_port=pkt.dst_port,
        in_reply_to=pkt.id,
    )


def engage(
    vm: HoneyVmState,
    pkt: Header,
    now: int,
    next_id: Callable[[], int],
    reply_from: Address,
) -> list[Packet]:
    """Log ``pkt`` and answer it the way the mimicked service would."""
    if not vm.operational:
        raise NotOperational(f'{vm.id} is {vm.lifecycle.value}')
    vm.transition(Lifecycle.ENGAGED, now, source=pkt.src_claimed)
    reply = mimic_reply(vm, pkt, reply_from, now + vm.profile.engage_reply_latency_ms, next_id)
    vm.log(now, pkt, 'mimic' if reply is not None else 'observe')
    return [reply] if reply is not None else []


class TrapOutcome(str, Enum):
    TRIGGERED = 'Triggered'
    NOT_TRIGGERED = 'NotTriggered'


def trap_trigger(vm: HoneyVmState, pkt: Header, now: int = 0) -> TrapOutcome:
    if not vm.operational:
        raise NotOperational(f'{vm.id} is {vm.lifecycle.value}')
    buffer = vm.frag_buffers.get(pkt.src_claimed, [])
    shape = structural_trigger(pkt, buffer)
    if shape is not None and shape in vm.profile.exposed_vulns:
        if vm.lifecycle is Lifecycle.ACTIVE:
            vm.transition(Lifecycle.ENGAGED, now, source=pkt.src_claimed)
        vm.transition(Lifecycle.COMPROMISED, now)
        vm.compromised_by = shape
        return TrapOutcome.TRIGGERED
    if pkt.frag is not None and shape is None:
        vm.frag_buffers.setdefault(pkt.src_claimed, buffer).append(pkt.frag)
    return TrapOutcome.NOT_TRIGGERED


def failover(pool: BackupPool, failed: HoneyVmState, now: int) -> str | PoolExhausted:
    if failed.lifecycle is not Lifecycle.COMPROMISED:
        raise LifecycleError(f'{failed.id} is {failed.lifecycle.value}, not Compromised')
    failed.transition(Lifecycle.RESTORING, now)
    failed.restoring_until = now + pool.restore_delay_ms
    service = failed.profile.mimics
    standbys = pool.standbys(service)
    if not standbys:
        return PoolExhausted(service)
    successor = standbys[0]
    successor.transition(Lifecycle.ACTIVE, now)
    return successor.id


def restore_tick(
    pool: BackupPool,
    now: int,
    archive: Callable[[HoneyVmState, list[AttackLogEntry]], None] | None = None,
) -> list[HoneyVmState]:
    restored = []
    for vm in pool:
        if vm.lifecycle is Lifecycle.RESTORING and vm.restoring_until is not None and vm.restoring_until <= now:
            if archive is not None and vm.attack_log:
                archive(vm, list(vm.attack_log))
            vm.attack_log.clear()
            vm.transition(Lifecycle.STANDBY, now)
            restored.append(vm)
    return restored


# -- the farm host -------------------------------------------------------------------


class HoneyFarm:
    """Network endpoint for a ``HoneyFarmHost`` node.

    With ``enabled`` false the host is a passive sink: redirected traffic
    is logged to the trace and goes no further.
    """

    def __init__(
        self,
        network: Any,
        node_id: str,
        address: Address,
        pool: BackupPool,
        *,
        enabled: bool,
        services: dict[Address, Service],
        control: Any = None,
    ) -> None:
        self.network = network
        self.node_id = node_id
        self.address = address
        self.pool = pool
        self.enabled = enabled
        self.services = services
        self.control = control
        self.detectors: dict[Service, Detector] = {}
        self.production = frozenset(services)
        self.delivered = 0
        self.sunk = 0
        self.unattended = 0
        self.suppressed = 0

    @property
    def sim(self):
        return self.network.sim

    @property
    def observer(self):
        return self.network.observer

    def sensor_name(self, service: Service) -> str:
        return f'{self.node_id}:{service.value}'

    def attach_detector(self, service: Service, detector: Detector) -> None:
        self.detectors[service] = detector

    def send(self, pkt: Packet, at: int | None = None) -> None:
        """Transmit from the farm host unless ``pkt`` would reach production."""
        if pkt.dst in self.production:
            self.suppressed += 1
            self.observer.note('containment_suppressed', self.sim.now, dst=str(pkt.dst), packet=pkt.id)
            return
        if at is None or at <= self.sim.now:
            self.network.emit(self.node_id, pkt)
        else:
            self.network.emit_at(at, self.node_id, pkt)

    def sense(self, pkt: Header, now: int) -> None:
        """Mirror tap from the routers: feed the sensor for the targeted service."""
        if not self.enabled:
            return
        detector = self.detectors.get(self.services.get(pkt.dst))
        if detector is not None:
            detector.observe(pkt, now)

    def receive(self, pkt: Packet, now: int) -> None:
        if pkt.kind is PacketKind.CHALLENGE_RESPONSE and pkt.token is not None:
            for detector in self.detectors.values():
                if detector.owns(pkt.token, pkt.src_claimed):
                    detector.observe(pkt, now)
                    return
            return

        service = self.services.get(pkt.dst)
        if not self.enabled or service is None:
            self.sunk += 1
            self.observer.note('farm_sink', now, src=str(pkt.src_claimed), dst=str(pkt.dst), packet=pkt.id)
            return
        vm = self.pool.operational(service)
        if vm is None:
            self.unattended += 1
            self.observer.note('farm_unattended', now, service=service.value, packet=pkt.id)
            return

        self.delivered += 1
        detector = self.detectors.get(service)
        if detector is not None:
            detector.observe(pkt, now)
        source = pkt.src_claimed
        replies = engage(vm, pkt, now, self.sim.next_packet_id, self.address)
        if self.control is not None:
            self.control.engagement_started(source, vm.id, now)

        if trap_trigger(vm, pkt, now) is TrapOutcome.TRIGGERED:
            logger.info('%s compromised by %s at t=%s', vm.id, source, now)
            self.observer.note(
                'compromise', now, vm=vm.id, service=service.value, source=str(source),
                cause=vm.compromised_by.value,
            )
            # The attacker should believe the target went down.
            self.send(honest_packet(
                id=self.sim.next_packet_id(),
                protocol=Protocol.ICMP,
                kind=PacketKind.DEST_UNREACHABLE,
                src=self.address,
                dst=source,
                size_bytes=UNREACHABLE_BYTES,
                sent_at=now + vm.profile.engage_reply_latency_ms,
                in_reply_to=pkt.id,
            ), at=now + vm.profile.engage_reply_latency_ms)
            if self.control is not None:
                self.control.on_trap(vm, source, now)
            else:
                self.failover(vm, now)
            return
        for reply in replies:
            self.send(reply, at=reply.sent_at)

    # -- lifecycle plumbing -------------------------------------------------------

    def failover(self, vm: HoneyVmState, now: int) -> str | PoolExhausted:
        result = failover(self.pool, vm, now)
        service = vm.profile.mimics
        self.sim.timer(vm.restoring_until, self, 'restore')
        if isinstance(result, PoolExhausted):
            logger.info('pool for %s exhausted at t=%s', service.value, now)
            self.observer.note('pool_exhausted', now, service=service.value, failed=vm.id)
        else:
            logger.info('%s took over from %s at t=%s', result, vm.id, now)
            self.observer.note('failover', now, service=service.value, failed=vm.id, activated=result)
        return result

    def release_source(self, source: Address, now: int) -> None:
        for vm in self.pool:
            if vm.lifecycle is Lifecycle.ENGAGED and vm.engaged_source == source:
                vm.transition(Lifecycle.ACTIVE, now)

    def on_timer(self, tag: str, data: Any, now: int) -> None:
        if tag != 'restore':
            return
        for vm in restore_tick(self.pool, now, archive=lambda vm, entries: self.archive(vm, entries, now)):
            self.observer.note('vm_restored', now, vm=vm.id, service=vm.profile.mimics.value)
        for service in sorted(self.pool.vms, key=lambda s: s.value):
            if self.pool.operational(service) is None:
                standbys = self.pool.standbys(service)
                if standbys:
                    standbys[0].transition(Lifecycle.ACTIVE, now)
                    self.observer.note('vm_activated', now, vm=standbys[0].id, service=service.value)

    def archive(self, vm: HoneyVmState, entries: list[AttackLogEntry], now: int) -> None:
        self.observer.note(
            'attack_log', now, vm=vm.id, service=vm.profile.mimics.value,
            entries=[entry.as_record() for entry in entries],
        )

    def archive_all(self, now: int) -> None:
        """Flush every VM's live attack log into the trace at the end of a run."""
        for vm in self.pool:
            if vm.attack_log:
                self.archive(vm, list(vm.attack_log), now)
