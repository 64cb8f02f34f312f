"""
Packet model shared by every simulator module.

A ``Packet`` carries two kinds of information. The *header* fields
(protocol, kind, claimed source, destination, size, fragment, port,
challenge token) are what a real device could observe on the wire. The
*ground-truth* fields (``src_actual`` and ``attack_tag``) exist only so
that the traffic oracle and the metrics recorder can score a run.

Detection, victim and control code is written against the ``Header``
protocol below, which does not expose the ground-truth fields. The test
suite additionally checks that those modules never mention them.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from ipaddress import IPv4Address
from typing import Protocol as TypingProtocol

Address = IPv4Address

#: Largest datagram a server reassembles unless configured otherwise.
MAX_DATAGRAM_BYTES = 65535

#: ICMP packets shorter than this cannot carry a valid ICMP header.
ICMP_HEADER_BYTES = 8


def parse_address(value: str | Address) -> Address:
    return value if isinstance(value, IPv4Address) else IPv4Address(value)


class Protocol(str, Enum):
    ICMP = 'ICMP'
    TCP = 'TCP'
    UDP = 'UDP'


#: Index order of protocol-mix vectors.
PROTOCOL_ORDER: tuple[Protocol, ...] = (Protocol.ICMP, Protocol.TCP, Protocol.UDP)


class PacketKind(str, Enum):
    ECHO_REQUEST = 'EchoRequest'
    ECHO_REPLY = 'EchoReply'
    SYN = 'Syn'
    SYN_ACK = 'SynAck'
    DATA = 'Data'
    FRAGMENT = 'Fragment'
    DEST_UNREACHABLE = 'DestUnreachable'
    CHALLENGE = 'Challenge'
    CHALLENGE_RESPONSE = 'ChallengeResponse'


#: Kinds that may legitimately travel inside ICMP.
ICMP_KINDS = frozenset({
    PacketKind.ECHO_REQUEST,
    PacketKind.ECHO_REPLY,
    PacketKind.DEST_UNREACHABLE,
    PacketKind.CHALLENGE,
    PacketKind.CHALLENGE_RESPONSE,
})


class AttackType(str, Enum):
    SMURF = 'Smurf'
    SYN_FLOOD = 'SynFlood'
    UDP_FLOOD = 'UdpFlood'
    TEARDROP = 'Teardrop'
    PING_OF_DEATH = 'PingOfDeath'
    LAND = 'Land'
    PING_FLOOD = 'PingFlood'
    NUKE = 'Nuke'


class AttackClass(str, Enum):
    FLOOD = 'Flood'
    CRASH = 'Crash'


FLOOD_ATTACKS = frozenset({
    AttackType.SMURF, AttackType.SYN_FLOOD, AttackType.UDP_FLOOD, AttackType.PING_FLOOD,
})
CRASH_ATTACKS = frozenset({
    AttackType.TEARDROP, AttackType.PING_OF_DEATH, AttackType.LAND, AttackType.NUKE,
})


def attack_class(attack: AttackType) -> AttackClass:
    return AttackClass.FLOOD if attack in FLOOD_ATTACKS else AttackClass.CRASH


@dataclass(frozen=True, slots=True)
class Fragment:
    offset: int
    length: int

    def __post_init__(self) -> None:
        if self.offset < 0 or self.length <= 0:
            raise ValueError(f'invalid fragment ({self.offset}, {self.length})')

    @property
    def end(self) -> int:
        return self.offset + self.length

    def overlaps(self, other: Fragment) -> bool:
        return self.offset < other.end and other.offset < self.end


@dataclass(frozen=True, slots=True)
class ChallengeToken:
    """Challenge identity carried by Challenge and ChallengeResponse packets."""

    challenge_id: int
    level: int
    nonce: int


@dataclass(frozen=True, slots=True)
class Packet:
    id: int
    protocol: Protocol
    kind: PacketKind
    src_claimed: Address
    src_actual: Address
    dst: Address
    size_bytes: int
    sent_at: int
    frag: Fragment | None = None
    dst_port: int = 0
    token: ChallengeToken | None = None
    in_reply_to: int | None = None
    attack_tag: AttackType | None = None

    def __post_init__(self) -> None:
        if self.size_bytes <= 0:
            raise ValueError('size_bytes must be positive')
        if (self.frag is not None) != (self.kind is PacketKind.FRAGMENT):
            raise ValueError('frag is present iff kind is Fragment')


class Header(TypingProtocol):
    """The wire-visible part of a packet; all that defense code may read."""

    @property
    def id(self) -> int: ...
    @property
    def protocol(self) -> Protocol: ...
    @property
    def kind(self) -> PacketKind: ...
    @property
    def src_claimed(self) -> Address: ...
    @property
    def dst(self) -> Address: ...
    @property
    def size_bytes(self) -> int: ...
    @property
    def sent_at(self) -> int: ...
    @property
    def frag(self) -> Fragment | None: ...
    @property
    def dst_port(self) -> int: ...
    @property
    def token(self) -> ChallengeToken | None: ...
    @property
    def in_reply_to(self) -> int | None: ...


def honest_packet(
    *,
    id: int,
    protocol: Protocol,
    kind: PacketKind,
    src: Address,
    dst: Address,
    size_bytes: int,
    sent_at: int,
    dst_port: int = 0,
    token: ChallengeToken | None = None,
    in_reply_to: int | None = None,
) -> Packet:
    """Build a packet whose claimed source is its true source.

    Used by every node that originates traffic on its own behalf
    (clients, servers, honey VMs, challenge responders).
    """
    return Packet(
        id=id,
        protocol=protocol,
        kind=kind,
        src_claimed=src,
        src_actual=src,
        dst=dst,
        size_bytes=size_bytes,
        sent_at=sent_at,
        dst_port=dst_port,
        token=token,
        in_reply_to=in_reply_to,
    )
