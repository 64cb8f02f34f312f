"""Builders and fakes shared by the test modules."""
from __future__ import annotations

import copy
import itertools
from ipaddress import IPv4Address
from typing import Any

from core.engine import Simulator
from core.packets import Fragment, Packet, PacketKind, Protocol
from core.topology import FirewallRole, Link, Node, NodeKind, Topology

CLIENT = IPv4Address('198.51.100.1')
CLIENT_2 = IPv4Address('198.51.100.2')
AGENT = IPv4Address('203.0.113.1')
WEB = IPv4Address('10.0.0.10')
FARM = IPv4Address('10.0.0.99')
SPOOFED = IPv4Address('192.0.2.7')

_ids = itertools.count(10_000)


def make_packet(
    *,
    kind: PacketKind = PacketKind.DATA,
    protocol: Protocol = Protocol.TCP,
    src: IPv4Address = CLIENT,
    actual: IPv4Address | None = None,
    dst: IPv4Address = WEB,
    size: int = 500,
    at: int = 0,
    frag: Fragment | None = None,
    port: int = 80,
    **extra: Any,
) -> Packet:
    return Packet(
        id=extra.pop('id', next(_ids)),
        protocol=protocol,
        kind=kind,
        src_claimed=src,
        src_actual=actual or src,
        dst=dst,
        size_bytes=size,
        sent_at=at,
        frag=frag,
        dst_port=port,
        **extra,
    )


def small_topology(*, routers: int = 1) -> Topology:
    """c1, c2 and a1 behind an external firewall; web and farm behind the routers."""
    nodes = [
        Node('c1', NodeKind.CLIENT_HOST, CLIENT),
        Node('c2', NodeKind.CLIENT_HOST, CLIENT_2),
        Node('a1', NodeKind.ATTACK_AGENT, AGENT),
        Node('fw', NodeKind.FIREWALL, role=FirewallRole.EXTERNAL),
        Node('web', NodeKind.PRODUCTION_SERVER, WEB),
        Node('farm', NodeKind.HONEY_FARM_HOST, FARM),
    ]
    links = [
        Link('c1', 'fw', 1, 10.0),
        Link('c2', 'fw', 1, 10.0),
        Link('a1', 'fw', 1, 10.0),
    ]
    for index in range(1, routers + 1):
        nodes.append(Node(f'r{index}', NodeKind.ROUTER))
    links.append(Link('fw', 'r1', 1, 100.0))
    links.append(Link('r1', 'web', 1, 100.0))
    links.append(Link('r1', 'farm', 1, 100.0))
    for index in range(2, routers + 1):
        links.append(Link(f'r{index - 1}', f'r{index}', 1, 100.0))
    return Topology(nodes, links)


class TimerLog:
    """Timer owner that remembers what fired."""

    def __init__(self) -> None:
        self.fired: list[tuple[str, Any, int]] = []

    def on_timer(self, tag: str, data: Any, now: int) -> None:
        self.fired.append((tag, data, now))


class TraceCollector:
    """Network observer keeping everything it is told."""

    def __init__(self) -> None:
        self.sent: list[tuple[str, Packet, int]] = []
        self.drops: list[tuple[str, Packet, str, int]] = []
        self.deliveries: list[tuple[str, Packet, int]] = []
        self.notes: list[dict[str, Any]] = []

    def emitted(self, node: str, pkt: Packet, now: int) -> None:
        self.sent.append((node, pkt, now))

    def dropped(self, node: str, pkt: Packet, reason: str, now: int) -> None:
        self.drops.append((node, pkt, reason, now))

    def delivered(self, node: str, pkt: Packet, now: int) -> None:
        self.deliveries.append((node, pkt, now))

    def note(self, kind: str, now: int, **fields: Any) -> None:
        self.notes.append({'t': now, 'kind': kind, **fields})

    def notes_of(self, kind: str) -> list[dict[str, Any]]:
        return [note for note in self.notes if note['kind'] == kind]

    def drop_reasons(self) -> list[str]:
        return [reason for _, _, reason, _ in self.drops]


class FakeNetwork:
    """Stands in for ``core.network.Network`` when only emissions matter."""

    def __init__(self, topology: Topology | None = None) -> None:
        self.sim = Simulator()
        self.topology = topology
        self.observer = TraceCollector()
        self.emissions: list[tuple[str, Packet, int]] = []

    def emit(self, node_id: str, pkt: Packet) -> None:
        self.emissions.append((node_id, pkt, self.sim.now))

    def emit_all(self, node_id: str, packets) -> None:
        for pkt in packets:
            self.emit(node_id, pkt)

    def emit_at(self, at: int, node_id: str, pkt: Packet) -> None:
        self.emissions.append((node_id, pkt, at))


# -- scenario documents -----------------------------------------------------------


BASE_DOCUMENT: dict[str, Any] = {
    'seed': 7,
    'duration_ms': 20000,
    'topology': {
        'nodes': [
            {'id': 'c1', 'kind': 'ClientHost', 'address': '198.51.100.1'},
            {'id': 'c2', 'kind': 'ClientHost', 'address': '198.51.100.2'},
            {'id': 'c3', 'kind': 'ClientHost', 'address': '198.51.100.3'},
            {'id': 'a1', 'kind': 'AttackAgent', 'address': '203.0.113.1'},
            {'id': 'a2', 'kind': 'AttackAgent', 'address': '203.0.113.2'},
            {'id': 'fw', 'kind': 'Firewall', 'role': 'external'},
            {'id': 'r1', 'kind': 'Router'},
            {'id': 'web', 'kind': 'ProductionServer', 'address': '10.0.0.10'},
            {'id': 'farm', 'kind': 'HoneyFarmHost', 'address': '10.0.0.99'},
        ],
        'links': [
            {'a': 'c1', 'b': 'fw', 'latency_ms': 1, 'bandwidth_pkts_per_ms': 10},
            {'a': 'c2', 'b': 'fw', 'latency_ms': 1, 'bandwidth_pkts_per_ms': 10},
            {'a': 'c3', 'b': 'fw', 'latency_ms': 1, 'bandwidth_pkts_per_ms': 10},
            {'a': 'a1', 'b': 'fw', 'latency_ms': 1, 'bandwidth_pkts_per_ms': 10},
            {'a': 'a2', 'b': 'fw', 'latency_ms': 1, 'bandwidth_pkts_per_ms': 10},
            {'a': 'fw', 'b': 'r1', 'latency_ms': 1, 'bandwidth_pkts_per_ms': 100},
            {'a': 'r1', 'b': 'web', 'latency_ms': 1, 'bandwidth_pkts_per_ms': 100},
            {'a': 'r1', 'b': 'farm', 'latency_ms': 1, 'bandwidth_pkts_per_ms': 100},
        ],
    },
    'servers': [
        {'node': 'web', 'service': 'Web'},
    ],
    'legit': [
        {
            'clients': ['c1', 'c2', 'c3'],
            'request_rate_per_client': 0.005,
            'request_size_bytes': {'mean': 500, 'stddev': 50},
            'target': '10.0.0.10',
        },
    ],
    'attacks': [],
    'farm': {
        'host': 'farm',
        'restore_delay_ms': 5000,
        'profiles': [
            {'mimics': 'Web', 'exposed_vulns': ['Teardrop', 'PingOfDeath', 'Land', 'Nuke'], 'pool_size': 3},
        ],
    },
    'defense': {'engagement_window_ms': 2000, 'warmup_n': 300},
}

SYN_FLOOD = {
    'attack': 'SynFlood',
    'agents': ['a1', 'a2'],
    'target': '10.0.0.10',
    'rate_pkts_per_ms': 1.0,
    'start_ms': 5000,
    'end_ms': 15000,
    'spoof_network': '192.0.2.0/24',
}


def scenario_document(
    *,
    attacks: list[dict[str, Any]] | None = None,
    defense: dict[str, Any] | None = None,
    **top: Any,
) -> dict[str, Any]:
    """A deep copy of the base scenario with the given changes."""
    document = copy.deepcopy(BASE_DOCUMENT)
    if attacks is not None:
        document['attacks'] = copy.deepcopy(attacks)
    if defense is not None:
        document['defense'].update(defense)
    document.update(copy.deepcopy(top))
    return document
