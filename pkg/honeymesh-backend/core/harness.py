"""
Scenario loading, run execution and parameter sweeps.

``load_config`` turns a JSON scenario file into a ``ScenarioConfig``;
``run_scenario`` wires the simulator together for it, trains the
detection baselines on a warm-up sample, runs the configured duration
and computes the report from the run's trace; ``sweep`` repeats a run
while varying one numeric field of the normalised document.

All randomness comes from one ``random.Random`` seeded with the
scenario seed. Child generators are drawn from it in a fixed order, so a
given ``(config, seed)`` always yields the same trace.
"""
from __future__ import annotations

import copy
import heapq
import itertools
import logging
import random
from dataclasses import dataclass, field
from ipaddress import IPv4Network
from pathlib import Path
from typing import Any

from .control import DefensePolicy, Orchestrator
from .detection import BaselineModel, Detector, train_baseline
from .engine import Simulator
from .exceptions import UnknownAxis
from .honeyfarm import BackupPool, HoneyFarm, HoneyVmProfile, Interaction
from .metrics import MetricsReport, Recorder, compute_report
from .network import Network
from .packets import Address, AttackType, Packet, Protocol, parse_address
from .reports import emit_report, write_trace
from .serializers import parse_document, read_document
from .topology import FirewallRole, Link, Node, NodeKind, Topology
from .traffic import (
    AttackAgentHost,
    AttackScenario,
    LegitClient,
    LegitProfile,
    SizeDistribution,
    TrafficPump,
    gen_attack,
    gen_legit,
)
from .victim import HoneyDaemonState, ProductionServer, ServerConfig, Service

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ServerSpec:
    node: str
    address: Address
    service: Service
    config: ServerConfig


@dataclass(frozen=True)
class FarmSpec:
    host: str
    address: Address
    restore_delay_ms: int
    profiles: dict[Service, tuple[HoneyVmProfile, int]]


@dataclass(frozen=True)
class OutputSpec:
    dir: Path | None
    trace: str
    report_json: str
    report_csv: str


@dataclass
class ScenarioConfig:
    document: dict[str, Any]
    seed: int
    duration_ms: int
    bucket_ms: int
    nodes: list[Node]
    links: list[Link]
    servers: list[ServerSpec]
    legit: list[LegitProfile]
    attacks: list[AttackScenario]
    farm: FarmSpec | None
    defense: DefensePolicy
    detection: dict[str, int | float]
    hold_cap: int
    output: OutputSpec


def build_scenario(document: dict[str, Any]) -> ScenarioConfig:
    """Build the typed scenario from a normalised document."""
    nodes = [
        Node(
            id=node['id'],
            kind=NodeKind(node['kind']),
            address=parse_address(node['address']) if node['address'] else None,
            role=FirewallRole(node['role']) if node['role'] else None,
        )
        for node in document['topology']['nodes']
    ]
    links = [Link(**link) for link in document['topology']['links']]
    by_id = {node.id: node for node in nodes}

    def hosts(ids: list[str]) -> tuple[tuple[str, Address], ...]:
        return tuple((node_id, by_id[node_id].address) for node_id in ids)

    servers = [
        ServerSpec(
            node=server['node'],
            address=by_id[server['node']].address,
            service=Service(server['service']),
            config=ServerConfig(
                service_rate_pkts_per_ms=server['service_rate_pkts_per_ms'],
                queue_cap=server['queue_cap'],
                syn_backlog_cap=server['syn_backlog_cap'],
                syn_halfopen_timeout_ms=server['syn_halfopen_timeout_ms'],
                reassembly_max_bytes=server['reassembly_max_bytes'],
                reassembly_timeout_ms=server['reassembly_timeout_ms'],
                vulnerable_to=frozenset(AttackType(a) for a in server['vulnerable_to']),
                reboot_time_ms=server['reboot_time_ms'],
                boot_time_ms=server['boot_time_ms'],
                open_ports=frozenset(server['open_ports']),
            ),
        )
        for server in sorted(document['servers'], key=lambda s: s['node'])
    ]
    legit = [
        LegitProfile(
            clients=hosts(profile['clients']),
            request_rate_per_client=profile['request_rate_per_client'],
            request_size_bytes=SizeDistribution(**profile['request_size_bytes']),
            target=parse_address(profile['target']),
            answer_challenges=profile['answer_challenges'],
            protocol=Protocol(profile['protocol']),
            port=profile['port'],
        )
        for profile in document['legit']
    ]
    attacks = []
    for attack in document['attacks']:
        pool = [parse_address(address) for address in attack['spoof_pool']]
        if attack['spoof_network']:
            pool.extend(IPv4Network(attack['spoof_network']).hosts())
        attacks.append(AttackScenario(
            attack=AttackType(attack['attack']),
            agents=hosts(attack['agents']),
            target=parse_address(attack['target']),
            rate_pkts_per_ms=attack['rate_pkts_per_ms'],
            start_ms=attack['start_ms'],
            end_ms=attack['end_ms'],
            spoof_pool=tuple(dict.fromkeys(pool)),
            p_bot_l1=attack['p_bot_l1'],
        ))

    farm = None
    if document['farm'] is not None:
        section = document['farm']
        farm = FarmSpec(
            host=section['host'],
            address=by_id[section['host']].address,
            restore_delay_ms=section['restore_delay_ms'],
            profiles={
                Service(profile['mimics']): (
                    HoneyVmProfile(
                        mimics=Service(profile['mimics']),
                        interaction=Interaction(profile['interaction']),
                        exposed_vulns=frozenset(AttackType(a) for a in profile['exposed_vulns']),
                        engage_reply_latency_ms=profile['engage_reply_latency_ms'],
                    ),
                    profile['pool_size'],
                )
                for profile in section['profiles']
            },
        )

    detection = dict(document['detection'])
    hold_cap = detection.pop('hold_cap')
    output = document['output']
    return ScenarioConfig(
        document=document,
        seed=document['seed'],
        duration_ms=document['duration_ms'],
        bucket_ms=document['bucket_ms'],
        nodes=nodes,
        links=links,
        servers=servers,
        legit=legit,
        attacks=attacks,
        farm=farm,
        defense=DefensePolicy(**document['defense']),
        detection=detection,
        hold_cap=hold_cap,
        output=OutputSpec(
            dir=Path(output['dir']) if output['dir'] else None,
            trace=output['trace'],
            report_json=output['report_json'],
            report_csv=output['report_csv'],
        ),
    )


def load_config(path: str | Path) -> ScenarioConfig:
    return build_scenario(parse_document(read_document(path)))


def with_overrides(cfg: ScenarioConfig, *, seed: int | None = None, out: str | Path | None = None) -> ScenarioConfig:
    """Apply command-line values on top of the file's (flag beats file)."""
    document = copy.deepcopy(cfg.document)
    if seed is not None:
        document['seed'] = seed
    if out is not None:
        document['output']['dir'] = str(out)
    return build_scenario(parse_document(document))


# -- warm-up ---------------------------------------------------------------------


def warmup_sample(profiles: list[LegitProfile], rng: random.Random, warmup_n: int) -> list[Packet]:
    """The first ``warmup_n`` requests the given profiles would send."""
    ids = itertools.count(1)
    streams = [gen_legit(profile, rng, ids=ids) for profile in profiles]
    merged = heapq.merge(*streams, key=lambda item: item[0])
    return [pkt for _, pkt in itertools.islice(merged, warmup_n)]


def train_baselines(
    cfg: ScenarioConfig, derive: Any,
) -> tuple[dict[str, BaselineModel], dict[Service, BaselineModel]]:
    warmup_n = cfg.defense.warmup_n
    samples: dict[str, list[Packet]] = {}
    for server in cfg.servers:
        profiles = [profile for profile in cfg.legit if profile.target == server.address]
        samples[server.node] = warmup_sample(profiles, derive(), warmup_n)
    per_server = {node: train_baseline(sample, warmup_n) for node, sample in samples.items()}

    per_service: dict[Service, BaselineModel] = {}
    for service in sorted({server.service for server in cfg.servers}, key=lambda s: s.value):
        merged = heapq.merge(
            *(samples[server.node] for server in cfg.servers if server.service is service),
            key=lambda pkt: pkt.sent_at,
        )
        per_service[service] = train_baseline(merged, warmup_n)
    return per_server, per_service


# -- runs ------------------------------------------------------------------------


@dataclass
class RunResult:
    report: MetricsReport
    records: list[dict[str, Any]]
    orchestrator: Orchestrator
    topology: Topology
    servers: dict[str, ProductionServer]
    farm: HoneyFarm | None
    trace_path: Path | None = None
    report_paths: list[Path] = field(default_factory=list)


def run_scenario(cfg: ScenarioConfig, *, write_files: bool = True) -> RunResult:
    policy = cfg.defense
    master = random.Random(cfg.seed)

    def derive() -> random.Random:
        return random.Random(master.getrandbits(64))

    logger.info(
        'running %s ms (seed %s, %s attack scenario(s), farm=%s, honeyd=%s)',
        cfg.duration_ms, cfg.seed, len(cfg.attacks), policy.farm_enabled, policy.honeyd_enabled,
    )
    sim = Simulator()
    topology = Topology(cfg.nodes, cfg.links)
    recorder = Recorder(topology, cfg.attacks)
    network = Network(sim, topology, recorder)
    orchestrator = Orchestrator(
        network, policy, farm_node=cfg.farm.host if cfg.farm is not None and policy.active else None,
    )
    network.forwarder = orchestrator
    orchestrator.services = {server.address: server.service for server in cfg.servers}

    if policy.active:
        server_baselines, service_baselines = train_baselines(cfg, derive)
    else:
        server_baselines, service_baselines = {}, {}
    settings = policy.detection_settings(**cfg.detection)
    control = orchestrator if policy.active else None

    servers: dict[str, ProductionServer] = {}
    for spec in cfg.servers:
        daemon = HoneyDaemonState(enabled=policy.honeyd_enabled, address=spec.address, hold_cap=cfg.hold_cap)
        server = ProductionServer(network, spec.node, spec.address, spec.service, spec.config, daemon, control)
        if policy.honeyd_enabled:
            daemon.detector = Detector(
                spec.node,
                server_baselines[spec.node],
                settings,
                sim=sim,
                address=spec.address,
                nonce_rng=derive(),
                send=lambda pkt, node=spec.node: network.emit(node, pkt),
                on_event=orchestrator.detection_listener(spec.node),
                on_verdict=server.on_verdict,
            )
            daemon.detector.start()
        network.attach(spec.node, server)
        servers[spec.node] = server

    farm = None
    if cfg.farm is not None:
        pool = BackupPool.build(cfg.farm.profiles, cfg.farm.restore_delay_ms)
        farm = HoneyFarm(
            network, cfg.farm.host, cfg.farm.address, pool,
            enabled=policy.farm_enabled,
            services=dict(orchestrator.services),
            control=control,
        )
        network.attach(cfg.farm.host, farm)
        orchestrator.farm = farm
        if policy.farm_enabled:
            for service in sorted(cfg.farm.profiles, key=lambda s: s.value):
                if service not in service_baselines:
                    continue
                name = farm.sensor_name(service)
                detector = Detector(
                    name,
                    service_baselines[service],
                    settings,
                    sim=sim,
                    address=cfg.farm.address,
                    nonce_rng=derive(),
                    send=farm.send,
                    on_event=orchestrator.detection_listener(name),
                    on_verdict=orchestrator.verdict_listener(name),
                )
                farm.attach_detector(service, detector)
                detector.start()

    origins: dict[Address, str] = {}
    for profile in cfg.legit:
        for node_id, address in profile.clients:
            origins[address] = node_id
            if node_id not in network.endpoints:
                network.attach(node_id, LegitClient(
                    network, node_id, address, derive(), answer_probability=profile.answer_challenges,
                ))
    for scenario in cfg.attacks:
        for node_id, address in scenario.agents:
            origins[address] = node_id
            if node_id not in network.endpoints:
                network.attach(node_id, AttackAgentHost(
                    network, node_id, address, derive(), p_bot_l1=scenario.p_bot_l1,
                ))

    pumps = [
        TrafficPump(network, gen_legit(profile, derive(), ids=sim.packet_ids, end_ms=cfg.duration_ms), origins)
        for profile in cfg.legit
    ]
    pumps.extend(
        TrafficPump(network, gen_attack(scenario, derive(), ids=sim.packet_ids), origins)
        for scenario in cfg.attacks
    )

    recorder.begin(seed=cfg.seed, duration_ms=cfg.duration_ms, bucket_ms=cfg.bucket_ms)
    for pump in pumps:
        pump.start()
    sim.run_until(cfg.duration_ms)

    end = cfg.duration_ms
    if farm is not None:
        farm.archive_all(end)
    links = network.link_stats()
    recorder.finish(
        end,
        firewall_drops=sum(rules.drops for rules in topology.firewalls.values()),
        link_overflows=sum(stats['overflows'] for stats in links.values()),
        containment_suppressed=farm.suppressed if farm is not None else 0,
        farm_sunk=farm.sunk if farm is not None else 0,
        server_in_flight={node: server.state.in_flight for node, server in sorted(servers.items())},
    )
    report = compute_report(recorder.records)
    result = RunResult(
        report=report,
        records=recorder.records,
        orchestrator=orchestrator,
        topology=topology,
        servers=servers,
        farm=farm,
    )
    if write_files and cfg.output.dir is not None:
        directory = cfg.output.dir
        result.trace_path = write_trace(recorder.records, directory / cfg.output.trace)
        result.report_paths = [
            emit_report(report, 'json', directory / cfg.output.report_json),
            emit_report(report, 'csv', directory / cfg.output.report_csv),
        ]
    logger.info(
        'run finished: %s/%s legit requests served, %s crash(es), %s defense event(s)',
        report.legit_served, report.legit_sent, report.production_crashes, len(orchestrator.events),
    )
    return result


# -- sweeps ----------------------------------------------------------------------


@dataclass(frozen=True)
class SweepRow:
    value: int | float
    legit_success_rate: float
    production_crashes: int
    time_to_first_confirm_ms: list[int | None]
    time_to_first_block_ms: list[int | None]
    firewall_drops: int


SWEEP_COLUMNS = (
    'value', 'legit_success_rate', 'production_crashes',
    'time_to_first_confirm_ms', 'time_to_first_block_ms', 'firewall_drops',
)


def _locate(document: Any, axis: str) -> tuple[Any, str | int]:
    parts = axis.split('.')
    container = document
    for part in parts[:-1]:
        container = _step(container, part, axis)
    last = parts[-1]
    key: str | int = int(last) if isinstance(container, list) and last.isdigit() else last
    current = _step(container, last, axis)
    if isinstance(current, bool) or not isinstance(current, (int, float)):
        raise UnknownAxis(f'{axis!r} is not a numeric field')
    return container, key


def _step(container: Any, part: str, axis: str) -> Any:
    if isinstance(container, dict) and part in container:
        return container[part]
    if isinstance(container, list) and part.isdigit() and int(part) < len(container):
        return container[int(part)]
    raise UnknownAxis(f'{axis!r} does not name a configuration field')


def sweep(cfg: ScenarioConfig, axis: str, values: list[int | float]) -> list[SweepRow]:
    """One run per value of ``axis``, all with the base seed."""
    _locate(cfg.document, axis)
    rows = []
    for value in values:
        document = copy.deepcopy(cfg.document)
        container, key = _locate(document, axis)
        if isinstance(container[key], int) and float(value).is_integer():
            value = int(value)
        container[key] = value
        if cfg.output.dir is not None:
            document['output']['dir'] = str(cfg.output.dir / f'{axis}={value}')
        report = run_scenario(build_scenario(parse_document(document))).report
        rows.append(SweepRow(
            value=value,
            legit_success_rate=report.legit_success_rate,
            production_crashes=report.production_crashes,
            time_to_first_confirm_ms=report.time_to_first_confirm_ms,
            time_to_first_block_ms=report.time_to_first_block_ms,
            firewall_drops=report.firewall_drops,
        ))
    return rows
