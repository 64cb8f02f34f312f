"""
Traffic generation: legitimate workloads, the eight attack types and the
ground-truth oracle.

Generators are pure functions of ``(config, rng)`` and yield
``(time, Packet)`` pairs in non-decreasing time order. Packet ids come
from an iterator handed in by the caller so that a run can draw every id
from one counter. ``TrafficPump`` feeds a stream into the network one
packet at a time, and ``LegitClient``/``AttackAgentHost`` model how the
end hosts react to challenges.
"""
from __future__ import annotations

import heapq
import itertools
import logging
import random
from collections.abc import Iterator
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

from .exceptions import InvalidScenario
from .packets import (
    ICMP_HEADER_BYTES,
    MAX_DATAGRAM_BYTES,
    Address,
    AttackClass,
    AttackType,
    Fragment,
    Packet,
    PacketKind,
    Protocol,
    attack_class,
    honest_packet,
)

logger = logging.getLogger(__name__)

#: Attacks whose packets must carry forged sources.
SPOOF_REQUIRED = frozenset({
    AttackType.SMURF, AttackType.SYN_FLOOD, AttackType.UDP_FLOOD, AttackType.NUKE,
})

CHALLENGE_BYTES = 64

Stream = Iterator[tuple[int, Packet]]


class Verdict(str, Enum):
    MALICIOUS = 'Malicious'
    BENIGN = 'Benign'


@dataclass(frozen=True)
class SizeDistribution:
    mean: float
    stddev: float


@dataclass(frozen=True)
class LegitProfile:
    clients: tuple[tuple[str, Address], ...]
    request_rate_per_client: float
    request_size_bytes: SizeDistribution
    target: Address
    answer_challenges: float = 1.0
    protocol: Protocol = Protocol.TCP
    port: int = 80

    def validate(self) -> None:
        if not self.clients:
            raise InvalidScenario('a legit profile needs at least one client')
        if self.request_rate_per_client <= 0:
            raise InvalidScenario('request_rate_per_client must be positive')
        if not 0.0 <= self.answer_challenges <= 1.0:
            raise InvalidScenario('answer_challenges must lie in [0, 1]')
        if self.request_size_bytes.mean <= 0 or self.request_size_bytes.stddev < 0:
            raise InvalidScenario('request sizes need a positive mean and non-negative stddev')


@dataclass(frozen=True)
class AttackScenario:
    attack: AttackType
    agents: tuple[tuple[str, Address], ...]
    target: Address
    rate_pkts_per_ms: float
    start_ms: int
    end_ms: int
    spoof_pool: tuple[Address, ...] = ()
    p_bot_l1: float = 0.0

    @property
    def attack_class(self) -> AttackClass:
        return attack_class(self.attack)

    def validate(self) -> None:
        if self.start_ms >= self.end_ms:
            raise InvalidScenario('start_ms must be before end_ms')
        if not self.agents:
            raise InvalidScenario('an attack needs at least one agent')
        if self.rate_pkts_per_ms <= 0:
            raise InvalidScenario('rate_pkts_per_ms must be positive')
        if not 0.0 <= self.p_bot_l1 <= 1.0:
            raise InvalidScenario('p_bot_l1 must lie in [0, 1]')
        if self.attack in SPOOF_REQUIRED and not self.spoof_pool:
            raise InvalidScenario(f'{self.attack.value} needs a non-empty spoof_pool')
        own = {address for _, address in self.agents}
        if own.intersection(self.spoof_pool):
            raise InvalidScenario('spoof_pool must not contain an agent address')


def ground_truth(pkt: Packet) -> Verdict:
    """Oracle used by the metrics recorder only."""
    return Verdict.MALICIOUS if pkt.attack_tag is not None else Verdict.BENIGN


# -- legitimate traffic ----------------------------------------------------


def gen_legit(
    profile: LegitProfile,
    rng: random.Random,
    *,
    ids: Iterator[int] | None = None,
    start_ms: int = 0,
    end_ms: int | None = None,
) -> Stream:
    """Poisson request arrivals for every client of ``profile``.

    Each client draws from its own child generator, seeded from ``rng``
    up front, so adding a client never perturbs another client's stream.
    With ``end_ms=None`` the stream is unbounded.
    """
    profile.validate()
    ids = ids if ids is not None else itertools.count(1)
    arrivals = [
        _client_arrivals(profile, index, address, random.Random(rng.getrandbits(64)), start_ms, end_ms)
        for index, (_, address) in enumerate(profile.clients)
    ]
    kind = PacketKind.ECHO_REQUEST if profile.protocol is Protocol.ICMP else PacketKind.DATA
    for time, _, address, size in heapq.merge(*arrivals):
        yield time, honest_packet(
            id=next(ids),
            protocol=profile.protocol,
            kind=kind,
            src=address,
            dst=profile.target,
            size_bytes=size,
            sent_at=time,
            dst_port=profile.port,
        )


def _client_arrivals(
    profile: LegitProfile,
    index: int,
    address: Address,
    rng: random.Random,
    start_ms: int,
    end_ms: int | None,
) -> Iterator[tuple[int, int, Address, int]]:
    clock = float(start_ms)
    sizes = profile.request_size_bytes
    while True:
        clock += rng.expovariate(profile.request_rate_per_client)
        time = int(clock)
        if end_ms is not None and time >= end_ms:
            return
        size = max(1, round(rng.gauss(sizes.mean, sizes.stddev)))
        yield time, index, address, size


# -- attacks ---------------------------------------------------------------


def gen_attack(
    scenario: AttackScenario,
    rng: random.Random,
    *,
    ids: Iterator[int] | None = None,
) -> Stream:
    """Fixed-interval attack traffic shaped after ``scenario.attack``.

    The aggregate rate is split evenly across agents and the agents are
    phase-shifted so that together they emit one packet every
    ``1 / rate`` ms.
    """
    scenario.validate()
    ids = ids if ids is not None else itertools.count(1)
    count = len(scenario.agents)
    spacing = 1.0 / scenario.rate_pkts_per_ms
    schedules = [
        _agent_schedule(scenario, index, spacing * index, spacing * count)
        for index in range(count)
    ]
    shaper = _SHAPERS[scenario.attack]
    state: dict[int, Any] = {}
    for time, index in heapq.merge(*schedules):
        _, actual = scenario.agents[index]
        pkt = shaper(scenario, rng, actual, time, next(ids), state.setdefault(index, {}))
        yield time, pkt


def _agent_schedule(
    scenario: AttackScenario, index: int, phase: float, interval: float,
) -> Iterator[tuple[int, int]]:
    for step in itertools.count():
        time = scenario.start_ms + int(phase + step * interval)
        if time >= scenario.end_ms:
            return
        yield time, index


def _forged(scenario: AttackScenario, rng: random.Random, actual: Address) -> Address:
    if not scenario.spoof_pool:
        return actual
    return scenario.spoof_pool[rng.randrange(len(scenario.spoof_pool))]


def _attack_packet(
    scenario: AttackScenario,
    *,
    id: int,
    protocol: Protocol,
    kind: PacketKind,
    claimed: Address,
    actual: Address,
    size: int,
    time: int,
    frag: Fragment | None = None,
    port: int = 80,
) -> Packet:
    return Packet(
        id=id,
        protocol=protocol,
        kind=kind,
        src_claimed=claimed,
        src_actual=actual,
        dst=scenario.target,
        size_bytes=size,
        sent_at=time,
        frag=frag,
        dst_port=port,
        attack_tag=scenario.attack,
    )


def _smurf(scenario, rng, actual, time, pid, state) -> Packet:
    return _attack_packet(
        scenario, id=pid, protocol=Protocol.ICMP, kind=PacketKind.ECHO_REQUEST,
        claimed=_forged(scenario, rng, actual), actual=actual, size=64, time=time, port=0,
    )


def _syn_flood(scenario, rng, actual, time, pid, state) -> Packet:
    return _attack_packet(
        scenario, id=pid, protocol=Protocol.TCP, kind=PacketKind.SYN,
        claimed=_forged(scenario, rng, actual), actual=actual, size=40, time=time,
    )


def _udp_flood(scenario, rng, actual, time, pid, state) -> Packet:
    return _attack_packet(
        scenario, id=pid, protocol=Protocol.UDP, kind=PacketKind.DATA,
        claimed=_forged(scenario, rng, actual), actual=actual, size=64, time=time,
        port=rng.randint(1024, 65535),
    )


def _teardrop(scenario, rng, actual, time, pid, state) -> Packet:
    # Even emissions open a pair, odd ones send a fragment overlapping it.
    if 'first' not in state:
        first = Fragment(0, 8 * rng.randint(3, 8))
        state['first'] = first
        state['source'] = _forged(scenario, rng, actual)
        frag = first
    else:
        first = state.pop('first')
        frag = Fragment(rng.randint(1, first.length - 1), 8 * rng.randint(3, 8))
    return _attack_packet(
        scenario, id=pid, protocol=Protocol.UDP, kind=PacketKind.FRAGMENT,
        claimed=state['source'], actual=actual, size=frag.length + 20, time=time, frag=frag,
    )


def _ping_of_death(scenario, rng, actual, time, pid, state) -> Packet:
    return _attack_packet(
        scenario, id=pid, protocol=Protocol.ICMP, kind=PacketKind.ECHO_REQUEST,
        claimed=_forged(scenario, rng, actual), actual=actual,
        size=rng.randint(MAX_DATAGRAM_BYTES + 1, 70000), time=time, port=0,
    )


def _land(scenario, rng, actual, time, pid, state) -> Packet:
    return _attack_packet(
        scenario, id=pid, protocol=Protocol.TCP, kind=PacketKind.SYN,
        claimed=scenario.target, actual=actual, size=40, time=time,
    )


def _ping_flood(scenario, rng, actual, time, pid, state) -> Packet:
    return _attack_packet(
        scenario, id=pid, protocol=Protocol.ICMP, kind=PacketKind.ECHO_REQUEST,
        claimed=actual, actual=actual, size=64, time=time, port=0,
    )


def _nuke(scenario, rng, actual, time, pid, state) -> Packet:
    # Either a kind ICMP cannot carry, or a body too short for an ICMP header.
    if rng.random() < 0.5:
        kind, size = PacketKind.DATA, 64
    else:
        kind, size = PacketKind.ECHO_REQUEST, rng.randint(1, ICMP_HEADER_BYTES - 1)
    return _attack_packet(
        scenario, id=pid, protocol=Protocol.ICMP, kind=kind,
        claimed=_forged(scenario, rng, actual), actual=actual, size=size, time=time, port=0,
    )


_SHAPERS = {
    AttackType.SMURF: _smurf,
    AttackType.SYN_FLOOD: _syn_flood,
    AttackType.UDP_FLOOD: _udp_flood,
    AttackType.TEARDROP: _teardrop,
    AttackType.PING_OF_DEATH: _ping_of_death,
    AttackType.LAND: _land,
    AttackType.PING_FLOOD: _ping_flood,
    AttackType.NUKE: _nuke,
}


# -- feeding the network --------------------------------------------------------


class TrafficPump:
    """Injects a generator's packets at the node owning each true source."""

    def __init__(self, network: Any, stream: Stream, origins: dict[Address, str]) -> None:
        self.network = network
        self.stream = stream
        self.origins = origins
        self._pending: Packet | None = None

    def start(self) -> None:
        self._advance()

    def _advance(self) -> None:
        for time, pkt in self.stream:
            self._pending = pkt
            self.network.sim.timer(max(time, self.network.sim.now), self, 'emit')
            return
        self._pending = None

    def on_timer(self, tag: str, data: Any, now: int) -> None:
        pkt = self._pending
        if pkt is not None:
            self.network.emit(self.origins[pkt.src_actual], pkt)
        self._advance()


@dataclass
class _Responder:
    network: Any
    node_id: str
    address: Address
    rng: random.Random
    answered: int = field(default=0, init=False)
    ignored: int = field(default=0, init=False)

    def _answer(self, challenge: Packet, now: int) -> None:
        self.answered += 1
        self.network.emit(self.node_id, honest_packet(
            id=self.network.sim.next_packet_id(),
            protocol=Protocol.ICMP,
            kind=PacketKind.CHALLENGE_RESPONSE,
            src=self.address,
            dst=challenge.src_claimed,
            size_bytes=CHALLENGE_BYTES,
            sent_at=now,
            token=challenge.token,
            in_reply_to=challenge.id,
        ))


@dataclass
class LegitClient(_Responder):
    """A well-behaved client: answers challenges with a fixed probability."""

    answer_probability: float = 1.0

    def receive(self, pkt: Packet, now: int) -> None:
        if pkt.kind is not PacketKind.CHALLENGE or pkt.token is None:
            return
        if self.rng.random() < self.answer_probability:
            self._answer(pkt, now)
        else:
            self.ignored += 1


@dataclass
class AttackAgentHost(_Responder):
    """A bot: may solve a first-level challenge, never a second-level one."""

    p_bot_l1: float = 0.0

    def receive(self, pkt: Packet, now: int) -> None:
        if pkt.kind is not PacketKind.CHALLENGE or pkt.token is None:
            return
        if pkt.token.level == 1 and self.rng.random() < self.p_bot_l1:
            self._answer(pkt, now)
        else:
            self.ignored += 1
