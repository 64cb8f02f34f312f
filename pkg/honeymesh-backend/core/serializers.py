"""
Serializers for scenario configuration and metrics reports.

Scenario files are JSON documents validated by the ``ScenarioSerializer``
tree below. Every level is strict: keys the schema does not know are
rejected rather than silently ignored, so a typo in a field name can
never fall back to a default. Cross-references between sections (node
ids, target addresses, farm profiles) are checked in
``ScenarioSerializer.validate`` once every section is individually
valid.

The validated data contains only JSON primitives. ``core.harness`` keeps
it as the normalised document (the base for parameter sweeps) and builds
the typed scenario from it.
"""
from __future__ import annotations

import json
from collections.abc import Mapping
from ipaddress import IPv4Network
from pathlib import Path
from typing import Any

from django.conf import settings
from rest_framework import serializers

from .exceptions import ConfigParseError, ConfigValidationError
from .packets import CRASH_ATTACKS, AttackType, Protocol, parse_address
from .topology import FirewallRole, Link, Node, NodeKind, validate_topology
from .victim import Service

NODE_KINDS = [kind.value for kind in NodeKind]
ATTACK_TYPES = [attack.value for attack in AttackType]
CRASH_TYPES = sorted(attack.value for attack in CRASH_ATTACKS)
SERVICES = [service.value for service in Service]
PROTOCOLS = [protocol.value for protocol in Protocol]


class StrictSerializer(serializers.Serializer):
    """A serializer that refuses keys it does not declare."""

    def to_internal_value(self, data: Any) -> Any:
        if isinstance(data, Mapping):
            unknown = sorted(set(data) - set(self.fields))
            if unknown:
                raise serializers.ValidationError({key: ['Unknown field.'] for key in unknown})
        return super().to_internal_value(data)


def positive(value: float) -> None:
    if value <= 0:
        raise serializers.ValidationError('Ensure this value is greater than 0.')


# -- topology ---------------------------------------------------------------


class NodeSerializer(StrictSerializer):
    id = serializers.CharField()
    kind = serializers.ChoiceField(choices=NODE_KINDS)
    address = serializers.IPAddressField(protocol='IPv4', required=False, allow_null=True, default=None)
    role = serializers.ChoiceField(
        choices=[role.value for role in FirewallRole], required=False, allow_null=True, default=None,
    )


class LinkSerializer(StrictSerializer):
    a = serializers.CharField()
    b = serializers.CharField()
    latency_ms = serializers.IntegerField(min_value=0)
    bandwidth_pkts_per_ms = serializers.FloatField(validators=[positive])
    queue_cap = serializers.IntegerField(min_value=1, default=1000)
    label = serializers.CharField(allow_blank=True, default='')


class TopologySerializer(StrictSerializer):
    nodes = NodeSerializer(many=True)
    links = LinkSerializer(many=True)


# -- servers and traffic --------------------------------------------------------


class ServerSerializer(StrictSerializer):
    node = serializers.CharField()
    service = serializers.ChoiceField(choices=SERVICES)
    service_rate_pkts_per_ms = serializers.FloatField(validators=[positive], default=0.1)
    queue_cap = serializers.IntegerField(min_value=1, default=200)
    syn_backlog_cap = serializers.IntegerField(min_value=1, default=64)
    syn_halfopen_timeout_ms = serializers.IntegerField(min_value=1, default=3000)
    reassembly_max_bytes = serializers.IntegerField(min_value=1, default=65535)
    reassembly_timeout_ms = serializers.IntegerField(min_value=1, default=30000)
    vulnerable_to = serializers.ListField(child=serializers.ChoiceField(choices=CRASH_TYPES), default=list)
    reboot_time_ms = serializers.IntegerField(min_value=1, default=60000)
    boot_time_ms = serializers.IntegerField(min_value=0, default=0)
    open_ports = serializers.ListField(
        child=serializers.IntegerField(min_value=0, max_value=65535),
        default=lambda: [21, 25, 53, 80],
    )


class SizeSerializer(StrictSerializer):
    mean = serializers.FloatField(validators=[positive])
    stddev = serializers.FloatField(min_value=0)


class LegitSerializer(StrictSerializer):
    clients = serializers.ListField(child=serializers.CharField(), min_length=1)
    request_rate_per_client = serializers.FloatField(validators=[positive])
    request_size_bytes = SizeSerializer()
    target = serializers.IPAddressField(protocol='IPv4')
    answer_challenges = serializers.FloatField(min_value=0, max_value=1, default=1.0)
    protocol = serializers.ChoiceField(choices=PROTOCOLS, default=Protocol.TCP.value)
    port = serializers.IntegerField(min_value=0, max_value=65535, default=80)


class AttackSerializer(StrictSerializer):
    attack = serializers.ChoiceField(choices=ATTACK_TYPES)
    agents = serializers.ListField(child=serializers.CharField(), min_length=1)
    target = serializers.IPAddressField(protocol='IPv4')
    rate_pkts_per_ms = serializers.FloatField(validators=[positive])
    start_ms = serializers.IntegerField(min_value=0)
    end_ms = serializers.IntegerField(min_value=1)
    spoof_pool = serializers.ListField(child=serializers.IPAddressField(protocol='IPv4'), default=list)
    spoof_network = serializers.CharField(required=False, allow_null=True, default=None)
    p_bot_l1 = serializers.FloatField(min_value=0, max_value=1, default=0.0)

    def validate_spoof_network(self, value: str | None) -> str | None:
        if value is None:
            return value
        try:
            IPv4Network(value)
        except ValueError as exc:
            raise serializers.ValidationError(str(exc)) from None
        return value

    def validate(self, attrs: dict[str, Any]) -> dict[str, Any]:
        if attrs['start_ms'] >= attrs['end_ms']:
            raise serializers.ValidationError({'end_ms': ['Must be after start_ms.']})
        return attrs


# -- farm, defense, output ------------------------------------------------------


class ProfileSerializer(StrictSerializer):
    mimics = serializers.ChoiceField(choices=SERVICES)
    interaction = serializers.ChoiceField(choices=['Low', 'High'], default='High')
    exposed_vulns = serializers.ListField(child=serializers.ChoiceField(choices=CRASH_TYPES), min_length=1)
    engage_reply_latency_ms = serializers.IntegerField(min_value=0, default=5)
    pool_size = serializers.IntegerField(min_value=1, default=3)


class FarmSerializer(StrictSerializer):
    host = serializers.CharField()
    restore_delay_ms = serializers.IntegerField(min_value=0, default=30000)
    profiles = ProfileSerializer(many=True)


class DefenseSerializer(StrictSerializer):
    farm_enabled = serializers.BooleanField(default=True)
    honeyd_enabled = serializers.BooleanField(default=True)
    suspicion_threshold = serializers.FloatField(default=0.5)
    engagement_window_ms = serializers.IntegerField(min_value=0, default=10000)
    challenge_timeout_ms = serializers.IntegerField(min_value=1, default=2000)
    warmup_n = serializers.IntegerField(min_value=1, default=2000)

    def validate_suspicion_threshold(self, value: float) -> float:
        if not 0 < value < 1:
            raise serializers.ValidationError('Must lie strictly between 0 and 1.')
        return value


class DetectionSerializer(StrictSerializer):
    z_cap = serializers.FloatField(validators=[positive], default=6.0)
    window_ms = serializers.IntegerField(min_value=1, default=1000)
    idle_evict_ms = serializers.IntegerField(min_value=0, default=60000)
    hold_cap = serializers.IntegerField(min_value=0, default=64)


class OutputSerializer(StrictSerializer):
    dir = serializers.CharField(required=False, allow_null=True, default=None)
    trace = serializers.CharField(default=lambda: settings.HONEYMESH_TRACE_FILENAME)
    report_json = serializers.CharField(default=lambda: f'{settings.HONEYMESH_REPORT_BASENAME}.json')
    report_csv = serializers.CharField(default=lambda: f'{settings.HONEYMESH_REPORT_BASENAME}.csv')


#: Sections filled with their defaults when a document leaves them out.
DEFAULTED_SECTIONS = ('defense', 'detection', 'output')


class ScenarioSerializer(StrictSerializer):
    seed = serializers.IntegerField(min_value=0, max_value=2**64 - 1)
    duration_ms = serializers.IntegerField(min_value=1)
    bucket_ms = serializers.IntegerField(min_value=1, default=1000)
    topology = TopologySerializer()
    servers = ServerSerializer(many=True)
    legit = LegitSerializer(many=True, required=False, default=list)
    attacks = AttackSerializer(many=True, required=False, default=list)
    farm = FarmSerializer(required=False, allow_null=True, default=None)
    defense = DefenseSerializer()
    detection = DetectionSerializer()
    output = OutputSerializer()

    def to_internal_value(self, data: Any) -> Any:
        if isinstance(data, Mapping):
            data = {**{section: {} for section in DEFAULTED_SECTIONS}, **data}
        return super().to_internal_value(data)

    def validate(self, attrs: dict[str, Any]) -> dict[str, Any]:
        errors: dict[str, list[str]] = {}

        def fail(section: str, message: str) -> None:
            errors.setdefault(section, []).append(message)

        topology = attrs['topology']
        nodes = [
            Node(
                id=node['id'],
                kind=NodeKind(node['kind']),
                address=parse_address(node['address']) if node['address'] else None,
                role=FirewallRole(node['role']) if node['role'] else None,
            )
            for node in topology['nodes']
        ]
        links = [Link(**link) for link in topology['links']]
        for problem in validate_topology(nodes, links):
            fail('topology', problem)
        if errors:
            raise serializers.ValidationError(errors)

        by_id = {node.id: node for node in nodes}
        by_address = {str(node.address): node for node in nodes if node.address is not None}

        def node_of(section: str, node_id: str, *kinds: NodeKind) -> Node | None:
            node = by_id.get(node_id)
            if node is None:
                fail(section, f'unknown node {node_id!r}')
            elif node.kind not in kinds:
                fail(section, f'{node_id!r} is a {node.kind.value}, expected {"/".join(k.value for k in kinds)}')
                return None
            return node

        server_ids = set()
        services: dict[str, str] = {}
        for server in attrs['servers']:
            if node_of('servers', server['node'], NodeKind.PRODUCTION_SERVER) is None:
                continue
            if server['node'] in server_ids:
                fail('servers', f'server {server["node"]!r} is configured twice')
            server_ids.add(server['node'])
            services[str(by_id[server['node']].address)] = server['service']
        for node in nodes:
            if node.kind is NodeKind.PRODUCTION_SERVER and node.id not in server_ids:
                fail('servers', f'production server {node.id!r} has no configuration')

        protected = {address: False for address in services}
        for profile in attrs['legit']:
            for client in profile['clients']:
                node_of('legit', client, NodeKind.CLIENT_HOST)
            if profile['target'] not in services:
                fail('legit', f'target {profile["target"]} is not a production server address')
            else:
                protected[profile['target']] = True

        topology_addresses = set(by_address)
        for attack in attrs['attacks']:
            agents = [node_of('attacks', agent, NodeKind.ATTACK_AGENT, NodeKind.HANDLER) for agent in attack['agents']]
            if attack['target'] not in services:
                fail('attacks', f'target {attack["target"]} is not a production server address')
            own = {str(agent.address) for agent in agents if agent is not None}
            pool = set(attack['spoof_pool'])
            if own & pool:
                fail('attacks', f'spoof_pool contains agent address {sorted(own & pool)[0]}')
            if attack['attack'] == AttackType.SYN_FLOOD.value and pool & topology_addresses:
                fail('attacks', 'SynFlood spoof_pool must not contain topology addresses')
            if attack['attack'] in {'Smurf', 'SynFlood', 'UdpFlood', 'Nuke'} and not (pool or attack['spoof_network']):
                fail('attacks', f'{attack["attack"]} needs a spoof_pool or spoof_network')

        defense = attrs['defense']
        detection_on = defense['farm_enabled'] or defense['honeyd_enabled']
        farm = attrs['farm']
        if farm is not None:
            node_of('farm', farm['host'], NodeKind.HONEY_FARM_HOST)
            mimicked = [profile['mimics'] for profile in farm['profiles']]
            for service in sorted(set(mimicked)):
                if mimicked.count(service) > 1:
                    fail('farm', f'more than one profile mimics {service}')
            for service in sorted(set(services.values()) - set(mimicked)):
                fail('farm', f'no honey VM profile mimics {service}')
        elif detection_on:
            fail('farm', 'a farm host is required while any defense is enabled')
        if detection_on:
            for address, covered in sorted(protected.items()):
                if not covered:
                    fail('legit', f'server {address} has no legit profile to train a baseline on')

        if errors:
            raise serializers.ValidationError(errors)
        return attrs


def parse_document(document: Any) -> dict[str, Any]:
    """Validate ``document`` and return its normalised, defaults-filled form."""
    serializer = ScenarioSerializer(data=document)
    if not serializer.is_valid():
        raise ConfigValidationError(serializer.errors)
    return json.loads(json.dumps(serializer.validated_data))


def read_document(path: str | Path) -> Any:
    text = Path(path).read_text(encoding='utf-8')
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigParseError(exc.msg, exc.lineno, exc.colno) from None


def flatten_errors(errors: Any, prefix: str = '') -> list[str]:
    """Turn a nested DRF error structure into ``path: message`` lines."""
    if isinstance(errors, Mapping):
        lines = []
        for key, value in errors.items():
            lines.extend(flatten_errors(value, f'{prefix}.{key}' if prefix else str(key)))
        return lines
    if isinstance(errors, list):
        if all(isinstance(item, str) for item in errors):
            return [f'{prefix}: {item}' for item in errors]
        lines = []
        for index, value in enumerate(errors):
            if value:
                lines.extend(flatten_errors(value, f'{prefix}.{index}'))
        return lines
    return [f'{prefix}: {errors}']


# -- report schema ---------------------------------------------------------------


class ReportSerializer(StrictSerializer):
    legit_sent = serializers.IntegerField(min_value=0)
    legit_served = serializers.IntegerField(min_value=0)
    legit_dropped = serializers.IntegerField(min_value=0)
    legit_in_flight = serializers.IntegerField(min_value=0)
    legit_success_rate = serializers.FloatField(min_value=0, max_value=1)
    latency_mean_ms = serializers.FloatField(allow_null=True)
    latency_p95_ms = serializers.FloatField(allow_null=True)
    latency_p99_ms = serializers.FloatField(allow_null=True)
    time_to_first_confirm_ms = serializers.ListField(child=serializers.IntegerField(allow_null=True))
    time_to_first_block_ms = serializers.ListField(child=serializers.IntegerField(allow_null=True))
    false_positive_sources = serializers.IntegerField(min_value=0)
    false_negative_sources = serializers.IntegerField(min_value=0)
    production_crashes = serializers.IntegerField(min_value=0)
    crash_causes = serializers.DictField(child=serializers.IntegerField(min_value=0))
    honeypot_compromises = serializers.IntegerField(min_value=0)
    failovers = serializers.IntegerField(min_value=0)
    pool_exhaustions = serializers.IntegerField(min_value=0)
    firewall_drops = serializers.IntegerField(min_value=0)
    coverage_gap_ms = serializers.IntegerField(min_value=0)
    containment_violations = serializers.IntegerField(min_value=0)
    legit_drop_reasons = serializers.DictField(child=serializers.IntegerField(min_value=0))
    success_series = serializers.ListField(child=serializers.FloatField(allow_null=True))
