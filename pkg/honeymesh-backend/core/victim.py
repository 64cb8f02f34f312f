"""
Production servers and the honey-d gateway that runs inside them.

A server is a single-queue M/D/1 system with finite capacity: requests
wait in a FIFO that includes the one in service, TCP connections hold an
entry of a bounded SYN backlog, and certain malformed packets crash the
server when it is vulnerable to them. ``server_handle`` and
``server_complete`` hold that model without any network plumbing;
``ProductionServer`` attaches it to a node, schedules service
completions and timers, and puts honey-d in front of it.
"""
from __future__ import annotations

import logging
from collections import deque
from collections.abc import Callable, Iterable
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

from .detection import Assessment, Detector, SuspicionVerdict
from .engine import ServiceCompletion
from .exceptions import InvalidScenario
from .packets import (
    CRASH_ATTACKS,
    ICMP_HEADER_BYTES,
    ICMP_KINDS,
    MAX_DATAGRAM_BYTES,
    Address,
    AttackType,
    Fragment,
    Header,
    Packet,
    PacketKind,
    Protocol,
    honest_packet,
)

logger = logging.getLogger(__name__)

SYN_ACK_BYTES = 40
UNREACHABLE_BYTES = 56


class Service(str, Enum):
    WEB = 'Web'
    FILE = 'File'
    MAIL = 'Mail'
    DNS = 'Dns'


SERVICE_PORTS = {Service.WEB: 80, Service.FILE: 21, Service.MAIL: 25, Service.DNS: 53}


@dataclass(frozen=True)
class ServerConfig:
    service_rate_pkts_per_ms: float = 0.1
    queue_cap: int = 200
    syn_backlog_cap: int = 64
    syn_halfopen_timeout_ms: int = 3000
    reassembly_max_bytes: int = MAX_DATAGRAM_BYTES
    reassembly_timeout_ms: int = 30000
    vulnerable_to: frozenset[AttackType] = frozenset()
    reboot_time_ms: int = 60000
    boot_time_ms: int = 0
    open_ports: frozenset[int] = frozenset({21, 25, 53, 80})

    def __post_init__(self) -> None:
        positive = {
            'service_rate_pkts_per_ms': self.service_rate_pkts_per_ms,
            'queue_cap': self.queue_cap,
            'syn_backlog_cap': self.syn_backlog_cap,
            'syn_halfopen_timeout_ms': self.syn_halfopen_timeout_ms,
            'reassembly_max_bytes': self.reassembly_max_bytes,
            'reassembly_timeout_ms': self.reassembly_timeout_ms,
            'reboot_time_ms': self.reboot_time_ms,
        }
        for name, value in positive.items():
            if value <= 0:
                raise InvalidScenario(f'{name} must be positive')
        if self.boot_time_ms < 0:
            raise InvalidScenario('boot_time_ms must not be negative')
        if not self.vulnerable_to <= CRASH_ATTACKS:
            raise InvalidScenario('vulnerable_to may only name crash-class attacks')

    @property
    def service_time_ms(self) -> int:
        return max(1, round(1 / self.service_rate_pkts_per_ms))


class ServerMode(str, Enum):
    HEALTHY = 'Healthy'
    CRASHED = 'Crashed'
    REBOOTING = 'Rebooting'


BacklogKey = tuple[Address, int]


@dataclass
class ServerState:
    mode: ServerMode = ServerMode.HEALTHY
    crash_cause: AttackType | None = None
    crashed_at: int | None = None
    until: int | None = None
    queue: deque[Packet] = field(default_factory=deque)
    in_service: int | None = None
    #: Half-open expiry time, or None while a connection waits in the queue.
    syn_backlog: dict[BacklogKey, int | None] = field(default_factory=dict)
    frag_buffers: dict[Address, list[Fragment]] = field(default_factory=dict)
    #: When each source started its fragment chain, oldest first.
    frag_started: dict[Address, int] = field(default_factory=dict)
    served_count: int = 0
    dropped_count: int = 0
    delivered_count: int = 0

    @property
    def buffered_fragments(self) -> int:
        return sum(len(buffer) for buffer in self.frag_buffers.values())

    @property
    def in_flight(self) -> int:
        return len(self.queue) + self.buffered_fragments


@dataclass
class ServerOutcome:
    emitted: list[Packet] = field(default_factory=list)
    dropped: list[tuple[Packet, str]] = field(default_factory=list)
    crash: AttackType | None = None
    enqueued: bool = False
    halfopen: list[tuple[BacklogKey, int]] = field(default_factory=list)


# -- structural triggers -----------------------------------------------------------


def is_malformed_icmp(pkt: Header) -> bool:
    return pkt.protocol is Protocol.ICMP and (
        pkt.kind not in ICMP_KINDS or pkt.size_bytes < ICMP_HEADER_BYTES
    )


def structural_trigger(
    pkt: Header,
    frag_buffer: Iterable[Fragment] = (),
    reassembly_max_bytes: int = MAX_DATAGRAM_BYTES,
) -> AttackType | None:
    """Which crash shape, if any, ``pkt`` has.

    Shared by production servers and honey-VM traps so both react to
    exactly the same packets.
    """
    if pkt.src_claimed == pkt.dst:
        return AttackType.LAND
    if is_malformed_icmp(pkt):
        return AttackType.NUKE
    frag = pkt.frag
    declared = pkt.size_bytes if frag is None else max(pkt.size_bytes, frag.end)
    if declared > reassembly_max_bytes:
        return AttackType.PING_OF_DEATH
    if frag is not None and any(frag.overlaps(held) for held in frag_buffer):
        return AttackType.TEARDROP
    return None


def vulnerability_check(pkt: Header, cfg: ServerConfig, st: ServerState) -> AttackType | None:
    buffer = st.frag_buffers.get(pkt.src_claimed, ())
    cause = structural_trigger(pkt, buffer, cfg.reassembly_max_bytes)
    return cause if cause in cfg.vulnerable_to else None


# -- server model ------------------------------------------------------------------


def expire_halfopen(st: ServerState, now: int) -> list[BacklogKey]:
    expired = [key for key, expiry in st.syn_backlog.items() if expiry is not None and expiry <= now]
    for key in expired:
        del st.syn_backlog[key]
    return expired


def expire_fragments(st: ServerState, now: int, timeout_ms: int) -> int:
    """Discard fragment chains older than ``timeout_ms``; return how many fragments went."""
    discarded = 0
    while st.frag_started:
        source, started = next(iter(st.frag_started.items()))
        if started + timeout_ms > now:
            break
        del st.frag_started[source]
        discarded += len(st.frag_buffers.pop(source, ()))
    st.dropped_count += discarded
    return discarded


def crash(st: ServerState, cause: AttackType, cfg: ServerConfig, now: int) -> list[Packet]:
    """Crash the server and flush everything it was holding."""
    flushed = list(st.queue)
    st.dropped_count += len(flushed) + st.buffered_fragments
    st.queue.clear()
    st.in_service = None
    st.syn_backlog.clear()
    st.frag_buffers.clear()
    st.frag_started.clear()
    st.mode = ServerMode.CRASHED
    st.crash_cause = cause
    st.crashed_at = now
    st.until = now + cfg.reboot_time_ms
    return flushed


def server_handle(
    pkt: Packet,
    cfg: ServerConfig,
    st: ServerState,
    now: int,
    next_id: Callable[[], int],
) -> ServerOutcome:
    out = ServerOutcome()
    st.delivered_count += 1

    def drop(reason: str) -> ServerOutcome:
        st.dropped_count += 1
        out.dropped.append((pkt, reason))
        return out

    if st.mode is not ServerMode.HEALTHY:
        return drop('server_down')
    expire_halfopen(st, now)
    expire_fragments(st, now, cfg.reassembly_timeout_ms)

    cause = vulnerability_check(pkt, cfg, st)
    if cause is not None:
        flushed = crash(st, cause, cfg, now)
        out.dropped.extend((queued, 'crash') for queued in flushed)
        out.crash = cause
        return drop('crash')
    if structural_trigger(pkt, st.frag_buffers.get(pkt.src_claimed, ()), cfg.reassembly_max_bytes):
        return drop('malformed')

    if pkt.kind is PacketKind.FRAGMENT:
        if pkt.src_claimed not in st.frag_buffers:
            st.frag_buffers[pkt.src_claimed] = []
            st.frag_started[pkt.src_claimed] = now
        st.frag_buffers[pkt.src_claimed].append(pkt.frag)
        return out

    if pkt.kind is PacketKind.SYN:
        if len(st.syn_backlog) >= cfg.syn_backlog_cap:
            return drop('syn_backlog')
        key = (pkt.src_claimed, pkt.id)
        expiry = now + cfg.syn_halfopen_timeout_ms
        st.syn_backlog[key] = expiry
        out.halfopen.append((key, expiry))
        st.served_count += 1
        out.emitted.append(honest_packet(
            id=next_id(),
            protocol=Protocol.TCP,
            kind=PacketKind.SYN_ACK,
            src=pkt.dst,
            dst=pkt.src_claimed,
            size_bytes=SYN_ACK_BYTES,
            sent_at=now,
            dst_port=pkt.dst_port,
            in_reply_to=pkt.id,
        ))
        return out

    if pkt.kind in (PacketKind.DATA, PacketKind.ECHO_REQUEST):
        connection = pkt.protocol is Protocol.TCP and pkt.kind is PacketKind.DATA
        if connection and len(st.syn_backlog) >= cfg.syn_backlog_cap:
            return drop('syn_backlog')
        if len(st.queue) >= cfg.queue_cap:
            return drop('queue_full')
        if connection:
            st.syn_backlog[(pkt.src_claimed, pkt.id)] = None
        st.queue.append(pkt)
        out.enqueued = True
        return out

    return drop('unexpected')


def server_complete(
    cfg: ServerConfig,
    st: ServerState,
    now: int,
    next_id: Callable[[], int],
) -> Packet | None:
    """Finish the request at the head of the queue and build its reply."""
    if not st.queue:
        return None
    request = st.queue.popleft()
    st.in_service = None
    st.syn_backlog.pop((request.src_claimed, request.id), None)
    st.served_count += 1
    kind, protocol, size = reply_shape(request, cfg)
    return honest_packet(
        id=next_id(),
        protocol=protocol,
        kind=kind,
        src=request.dst,
        dst=request.src_claimed,
        size_bytes=size,
        sent_at=now,
        dst_port=request.dst_port,
        in_reply_to=request.id,
    )


def reply_shape(request: Header, cfg: ServerConfig) -> tuple[PacketKind, Protocol, int]:
    if request.kind is PacketKind.ECHO_REQUEST:
        return PacketKind.ECHO_REPLY, Protocol.ICMP, request.size_bytes
    if request.protocol is Protocol.UDP and request.dst_port not in cfg.open_ports:
        return PacketKind.DEST_UNREACHABLE, Protocol.ICMP, UNREACHABLE_BYTES
    return PacketKind.DATA, request.protocol, request.size_bytes


# -- honey-d -----------------------------------------------------------------------


class GateDecision(str, Enum):
    FORWARD = 'Forward'
    CHALLENGE_ISSUED = 'ChallengeIssued'
    DROPPED = 'Dropped'
    CONSUMED = 'Consumed'


@dataclass
class HoneyDaemonState:
    enabled: bool
    address: Address
    detector: Detector | None = None
    hold_cap: int = 64
    held: dict[Address, deque[Packet]] = field(default_factory=dict)
    forwarded: int = 0
    dropped: int = 0
    overflowed: int = 0


def honeyd_gate(pkt: Packet, d: HoneyDaemonState, now: int) -> GateDecision:
    """Pre-authenticate ``pkt`` before it reaches the server.

    Packets of a source with a pending challenge are held (up to
    ``hold_cap`` per source) and released or discarded with the verdict.
    """
    if not d.enabled or d.detector is None:
        d.forwarded += 1
        return GateDecision.FORWARD
    detector = d.detector
    source = pkt.src_claimed
    if source == d.address and pkt.kind is not PacketKind.CHALLENGE_RESPONSE:
        detector.confirm(source, now)
        d.dropped += 1
        return GateDecision.DROPPED

    assessment = detector.observe(pkt, now)
    if assessment is Assessment.FORWARD:
        d.forwarded += 1
        return GateDecision.FORWARD
    if assessment is Assessment.CONSUMED:
        return GateDecision.CONSUMED
    if assessment is Assessment.CONFIRMED:
        d.dropped += 1
        return GateDecision.DROPPED
    held = d.held.setdefault(source, deque())
    if len(held) >= d.hold_cap:
        d.overflowed += 1
        d.dropped += 1
        return GateDecision.DROPPED
    held.append(pkt)
    return GateDecision.CHALLENGE_ISSUED


class ProductionServer:
    """Network endpoint for a production server node."""

    def __init__(
        self,
        network: Any,
        node_id: str,
        address: Address,
        service: Service,
        cfg: ServerConfig,
        daemon: HoneyDaemonState,
        control: Any = None,
    ) -> None:
        self.network = network
        self.node_id = node_id
        self.address = address
        self.service = service
        self.cfg = cfg
        self.state = ServerState()
        self.daemon = daemon
        self.control = control

    @property
    def sim(self):
        return self.network.sim

    @property
    def observer(self):
        return self.network.observer

    def receive(self, pkt: Packet, now: int) -> None:
        if self.state.mode is ServerMode.HEALTHY:
            decision = honeyd_gate(pkt, self.daemon, now)
            if decision is GateDecision.DROPPED:
                self.observer.dropped(self.node_id, pkt, 'honeyd', now)
                return
            if decision is not GateDecision.FORWARD:
                return
        self.accept(pkt, now)

    def accept(self, pkt: Packet, now: int) -> None:
        out = server_handle(pkt, self.cfg, self.state, now, self.sim.next_packet_id)
        for dropped, reason in out.dropped:
            self.observer.dropped(self.node_id, dropped, reason, now)
        for key, expiry in out.halfopen:
            self.sim.timer(expiry, self, 'halfopen', key)
        if out.crash is not None:
            self._crashed(out.crash, now)
        self.network.emit_all(self.node_id, out.emitted)
        if out.enqueued:
            self._start_service(now)

    def _start_service(self, now: int) -> None:
        st = self.state
        if st.in_service is not None or not st.queue or st.mode is not ServerMode.HEALTHY:
            return
        st.in_service = st.queue[0].id
        self.sim.after(self.cfg.service_time_ms, ServiceCompletion(self.node_id, st.in_service))

    def on_service_complete(self, request_id: int, now: int) -> None:
        st = self.state
        if st.mode is not ServerMode.HEALTHY or st.in_service != request_id:
            return
        reply = server_complete(self.cfg, st, now, self.sim.next_packet_id)
        if reply is not None:
            self.network.emit(self.node_id, reply)
        self._start_service(now)

    def _crashed(self, cause: AttackType, now: int) -> None:
        logger.info('%s crashed (%s) at t=%s', self.node_id, cause.value, now)
        self.observer.note('crash', now, node=self.node_id, cause=cause.value)
        self.sim.timer(self.state.until, self, 'reboot')

    def on_timer(self, tag: str, data: Any, now: int) -> None:
        st = self.state
        if tag == 'halfopen':
            if st.syn_backlog.get(data) is not None and st.syn_backlog[data] <= now:
                del st.syn_backlog[data]
        elif tag == 'reboot':
            if self.cfg.boot_time_ms > 0:
                st.mode = ServerMode.REBOOTING
                st.until = now + self.cfg.boot_time_ms
                self.sim.timer(st.until, self, 'booted')
            else:
                self._recovered(now)
        elif tag == 'booted':
            self._recovered(now)

    def _recovered(self, now: int) -> None:
        st = self.state
        st.mode = ServerMode.HEALTHY
        st.crash_cause = None
        st.crashed_at = None
        st.until = None
        logger.info('%s is back in service at t=%s', self.node_id, now)
        self.observer.note('recovered', now, node=self.node_id)

    # -- verdicts from the local detector -------------------------------------

    def on_verdict(self, source: Address, verdict: SuspicionVerdict, now: int) -> None:
        held = self.daemon.held.pop(source, deque())
        if verdict is SuspicionVerdict.BENIGN:
            for pkt in held:
                self.daemon.forwarded += 1
                self.accept(pkt, now)
        else:
            self.daemon.dropped += len(held)
            for pkt in held:
                self.observer.dropped(self.node_id, pkt, 'quarantined', now)
        if self.control is not None:
            self.control.on_verdict(source, verdict, self.node_id, now)
