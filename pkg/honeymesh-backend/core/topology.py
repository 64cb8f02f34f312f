"""
Network topology: nodes, links, routing tables and firewall rule sets.

The layout follows the usual DMZ design. External hosts reach an
external firewall, the firewall hands traffic to one or more DMZ
routers, and the routers deliver it to production servers or to the
honey-farm host. An internal firewall may guard a LAN behind the
routers.

Routing and filtering state is mutable so the defense orchestrator can
install redirects and blocks during a run. Everything else is fixed
when the topology is built.
"""
from __future__ import annotations

import logging
from collections import deque
from collections.abc import Iterable
from dataclasses import dataclass, field
from enum import Enum

from .exceptions import InvalidTarget, NoRoute
from .packets import Address, Header

logger = logging.getLogger(__name__)


class NodeKind(str, Enum):
    CLIENT_HOST = 'ClientHost'
    ATTACK_AGENT = 'AttackAgent'
    HANDLER = 'Handler'
    ROUTER = 'Router'
    FIREWALL = 'Firewall'
    PRODUCTION_SERVER = 'ProductionServer'
    HONEY_FARM_HOST = 'HoneyFarmHost'
    HONEY_VM = 'HoneyVm'


#: Kinds whose traffic enters the protected network from outside.
EXTERNAL_KINDS = frozenset({NodeKind.CLIENT_HOST, NodeKind.ATTACK_AGENT, NodeKind.HANDLER})

#: Kinds that forward transit traffic.
FORWARDING_KINDS = frozenset({NodeKind.ROUTER, NodeKind.FIREWALL})


class FirewallRole(str, Enum):
    EXTERNAL = 'external'
    INTERNAL = 'internal'


class FilterVerdict(str, Enum):
    ALLOW = 'Allow'
    DROP = 'Drop'


@dataclass(frozen=True, slots=True)
class Node:
    id: str
    kind: NodeKind
    address: Address | None = None
    role: FirewallRole | None = None


@dataclass(frozen=True, slots=True)
class Link:
    a: str
    b: str
    latency_ms: int
    bandwidth_pkts_per_ms: float
    queue_cap: int = 1000
    label: str = ''


@dataclass
class RoutingTable:
    default_routes: dict[Address, str] = field(default_factory=dict)
    redirects: list[tuple[Address, str]] = field(default_factory=list)
    _index: dict[Address, int] = field(default_factory=dict, repr=False)

    def redirect_for(self, source: Address) -> str | None:
        position = self._index.get(source)
        return None if position is None else self.redirects[position][1]

    def set_redirect(self, source: Address, target: str) -> bool:
        """Install or replace the redirect for ``source``; True if it changed."""
        position = self._index.get(source)
        if position is None:
            self._index[source] = len(self.redirects)
            self.redirects.append((source, target))
            return True
        if self.redirects[position][1] == target:
            return False
        self.redirects[position] = (source, target)
        return True


@dataclass
class FirewallRuleSet:
    blocked_sources: set[Address] = field(default_factory=set)
    drops: int = 0


class Topology:
    def __init__(self, nodes: Iterable[Node], links: Iterable[Link]) -> None:
        self.nodes: dict[str, Node] = {}
        for node in nodes:
            self.nodes[node.id] = node
        self.links: dict[frozenset[str], Link] = {}
        self.adjacency: dict[str, list[str]] = {node_id: [] for node_id in self.nodes}
        for link in links:
            self.links[frozenset((link.a, link.b))] = link
            self.adjacency.setdefault(link.a, []).append(link.b)
            self.adjacency.setdefault(link.b, []).append(link.a)
        for neighbours in self.adjacency.values():
            neighbours.sort()

        self.owners: dict[Address, str] = {
            node.address: node.id for node in self.nodes.values() if node.address is not None
        }
        self._next_hops = self._shortest_paths()
        self.routing: dict[str, RoutingTable] = {
            node_id: RoutingTable(default_routes=self._default_routes(node_id))
            for node_id in self.ids_of(NodeKind.ROUTER)
        }
        self.firewalls: dict[str, FirewallRuleSet] = {
            node_id: FirewallRuleSet() for node_id in self.ids_of(NodeKind.FIREWALL)
        }

    # -- lookups -----------------------------------------------------

    def kind(self, node_id: str) -> NodeKind:
        return self.nodes[node_id].kind

    def ids_of(self, kind: NodeKind) -> list[str]:
        return sorted(node_id for node_id, node in self.nodes.items() if node.kind is kind)

    def address_of(self, node_id: str) -> Address | None:
        return self.nodes[node_id].address

    def owner_of(self, address: Address) -> str | None:
        return self.owners.get(address)

    def neighbours(self, node_id: str) -> list[str]:
        return self.adjacency.get(node_id, [])

    def link_between(self, a: str, b: str) -> Link:
        return self.links[frozenset((a, b))]

    @property
    def routers(self) -> list[str]:
        return self.ids_of(NodeKind.ROUTER)

    @property
    def external_firewalls(self) -> list[str]:
        return [
            node_id for node_id in self.ids_of(NodeKind.FIREWALL)
            if self.nodes[node_id].role is not FirewallRole.INTERNAL
        ]

    @property
    def production_addresses(self) -> frozenset[Address]:
        return frozenset(
            node.address for node in self.nodes.values()
            if node.kind is NodeKind.PRODUCTION_SERVER and node.address is not None
        )

    # -- forwarding ----------------------------------------------------

    def _shortest_paths(self) -> dict[str, dict[str, str]]:
        """next_hops[node][target] for every pair of linked nodes (BFS)."""
        next_hops: dict[str, dict[str, str]] = {node_id: {} for node_id in self.adjacency}
        for target in sorted(self.adjacency):
            seen = {target}
            frontier = deque([target])
            while frontier:
                current = frontier.popleft()
                for neighbour in self.adjacency[current]:
                    if neighbour in seen:
                        continue
                    seen.add(neighbour)
                    next_hops[neighbour][target] = current
                    frontier.append(neighbour)
        return next_hops

    def _default_routes(self, node_id: str) -> dict[Address, str]:
        hops = self._next_hops.get(node_id, {})
        return {
            address: hops[owner]
            for address, owner in sorted(self.owners.items())
            if owner in hops
        }

    def next_hop_toward(self, node_id: str, target: str) -> str:
        try:
            return self._next_hops[node_id][target]
        except KeyError:
            raise NoRoute(node_id, target) from None

    def next_hop(self, node_id: str, destination: Address) -> str:
        """Default (redirect-blind) next hop from ``node_id`` toward an address."""
        kind = self.kind(node_id)
        if kind is NodeKind.ROUTER:
            try:
                return self.routing[node_id].default_routes[destination]
            except KeyError:
                raise NoRoute(node_id, destination) from None
        owner = self.owners.get(destination)
        if owner is not None and owner in self._next_hops.get(node_id, {}):
            return self._next_hops[node_id][owner]
        if kind not in FORWARDING_KINDS and self.neighbours(node_id):
            # End hosts hand unknown destinations to their gateway.
            return self.neighbours(node_id)[0]
        raise NoRoute(node_id, destination)

    def route(self, router: str, pkt: Header) -> str:
        """Redirect-aware routing decision of an internal router."""
        table = self.routing[router]
        target = table.redirect_for(pkt.src_claimed)
        if target is not None:
            return target
        try:
            return table.default_routes[pkt.dst]
        except KeyError:
            raise NoRoute(router, pkt.dst) from None

    def firewall_filter(self, fw: str, pkt: Header) -> FilterVerdict:
        rules = self.firewalls[fw]
        if pkt.src_claimed in rules.blocked_sources:
            rules.drops += 1
            return FilterVerdict.DROP
        return FilterVerdict.ALLOW

    # -- control plane -------------------------------------------------

    def install_redirect(self, router: str, source: Address, farm: str) -> bool:
        if farm not in self.nodes or self.kind(farm) is not NodeKind.HONEY_FARM_HOST:
            raise InvalidTarget(f'{farm} is not a honey-farm host')
        return self.routing[router].set_redirect(source, farm)

    def block_source(self, fw: str, source: Address) -> bool:
        rules = self.firewalls[fw]
        if source in rules.blocked_sources:
            return False
        rules.blocked_sources.add(source)
        return True


def validate_topology(nodes: list[Node], links: list[Link]) -> list[str]:
    """Return human-readable problems; an empty list means the layout is sound."""
    problems: list[str] = []
    ids = [node.id for node in nodes]
    duplicates = sorted({node_id for node_id in ids if ids.count(node_id) > 1})
    if duplicates:
        problems.append(f'duplicate node ids: {", ".join(duplicates)}')
    addresses = [node.address for node in nodes if node.address is not None]
    duplicate_addresses = sorted({str(a) for a in addresses if addresses.count(a) > 1})
    if duplicate_addresses:
        problems.append(f'duplicate addresses: {", ".join(duplicate_addresses)}')

    by_id = {node.id: node for node in nodes}
    for node in nodes:
        needs_address = node.kind not in FORWARDING_KINDS
        if needs_address and node.address is None:
            problems.append(f'node {node.id} ({node.kind.value}) needs an address')
    seen_links: set[frozenset[str]] = set()
    for link in links:
        if link.a == link.b:
            problems.append(f'self-link on {link.a}')
            continue
        missing = [end for end in (link.a, link.b) if end not in by_id]
        if missing:
            problems.append(f'link {link.a}-{link.b} references unknown node {missing[0]}')
            continue
        key = frozenset((link.a, link.b))
        if key in seen_links:
            problems.append(f'duplicate link {link.a}-{link.b}')
        seen_links.add(key)
        if NodeKind.HONEY_VM in (by_id[link.a].kind, by_id[link.b].kind):
            problems.append(f'honey VMs are served through their farm host, not linked ({link.a}-{link.b})')
    if problems:
        return problems

    topology = Topology(nodes, links)
    for server in topology.ids_of(NodeKind.PRODUCTION_SERVER):
        others = [n for n in topology.neighbours(server) if topology.kind(n) is not NodeKind.ROUTER]
        if others:
            problems.append(f'production server {server} must only attach to routers (found {others[0]})')
    for farm in topology.ids_of(NodeKind.HONEY_FARM_HOST):
        if not any(topology.kind(n) is NodeKind.ROUTER for n in topology.neighbours(farm)):
            problems.append(f'honey-farm host {farm} must attach to a router')

    external = [node.id for node in nodes if node.kind in EXTERNAL_KINDS]
    servers = topology.ids_of(NodeKind.PRODUCTION_SERVER)
    for host in external:
        reachable = _reachable(topology.adjacency, host, blocked=set())
        for server in servers:
            if server not in reachable:
                problems.append(f'{server} is unreachable from {host}')
        without_firewalls = _reachable(
            topology.adjacency, host, blocked=set(topology.ids_of(NodeKind.FIREWALL)),
        )
        bypassed = [server for server in servers if server in without_firewalls]
        if bypassed:
            problems.append(f'{host} reaches {bypassed[0]} without crossing a firewall')
    return problems


def _reachable(adjacency: dict[str, list[str]], start: str, blocked: set[str]) -> set[str]:
    seen = {start}
    frontier = deque([start])
    while frontier:
        current = frontier.popleft()
        for neighbour in adjacency.get(current, []):
            if neighbour in seen or neighbour in blocked:
                continue
            seen.add(neighbour)
            frontier.append(neighbour)
    return seen
