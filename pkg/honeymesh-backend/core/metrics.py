"""
Run recording and metrics.

``Recorder`` is the network observer for a run. It is the only component
that reads ground truth (true sources and attack tags); everything it
learns goes into an ordered list of trace records. ``compute_report``
derives the ``MetricsReport`` from those records alone, so a live run
and a replay of its trace file produce the same report.
"""
from __future__ import annotations

import logging
import math
from collections import Counter
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .exceptions import ReportFormatError
from .packets import Address, AttackType, Packet, PacketKind
from .topology import NodeKind, Topology
from .traffic import AttackScenario, Verdict, ground_truth

logger = logging.getLogger(__name__)

LEGIT_REQUEST_KINDS = frozenset({PacketKind.DATA, PacketKind.ECHO_REQUEST})


@dataclass
class MetricsReport:
    legit_sent: int = 0
    legit_served: int = 0
    legit_dropped: int = 0
    legit_in_flight: int = 0
    legit_success_rate: float = 1.0
    latency_mean_ms: float | None = None
    latency_p95_ms: float | None = None
    latency_p99_ms: float | None = None
    time_to_first_confirm_ms: list[int | None] = field(default_factory=list)
    time_to_first_block_ms: list[int | None] = field(default_factory=list)
    false_positive_sources: int = 0
    false_negative_sources: int = 0
    production_crashes: int = 0
    crash_causes: dict[str, int] = field(default_factory=dict)
    honeypot_compromises: int = 0
    failovers: int = 0
    pool_exhaustions: int = 0
    firewall_drops: int = 0
    coverage_gap_ms: int = 0
    containment_violations: int = 0
    legit_drop_reasons: dict[str, int] = field(default_factory=dict)
    success_series: list[float | None] = field(default_factory=list)


class Recorder:
    """Network observer that turns a run into trace records."""

    def __init__(self, topology: Topology, scenarios: Sequence[AttackScenario] = ()) -> None:
        self.topology = topology
        self.scenarios = list(scenarios)
        self.records: list[dict[str, Any]] = []
        self._pending: dict[int, int] = {}
        self._farm_packets: set[int] = set()
        self._legit_sources: set[Address] = set()
        self._malicious: list[set[Address]] = [set() for _ in self.scenarios]
        self._scenario_of: dict[tuple[AttackType, Address], int] = {}
        for index, scenario in enumerate(self.scenarios):
            for _, address in scenario.agents:
                self._scenario_of.setdefault((scenario.attack, address), index)

    def write(self, kind: str, now: int, **fields: Any) -> None:
        self.records.append({'t': now, 'kind': kind, **fields})

    def begin(self, *, seed: int, duration_ms: int, bucket_ms: int) -> None:
        self.write(
            'run', 0,
            seed=seed,
            duration_ms=duration_ms,
            bucket_ms=bucket_ms,
            scenarios=[
                {'attack': s.attack.value, 'start_ms': s.start_ms, 'end_ms': s.end_ms}
                for s in self.scenarios
            ],
        )

    # -- network observer -------------------------------------------------------

    def emitted(self, node: str, pkt: Packet, now: int) -> None:
        if ground_truth(pkt) is Verdict.MALICIOUS:
            index = self._scenario_of.get((pkt.attack_tag, pkt.src_actual))
            if index is not None:
                self._malicious[index].add(pkt.src_claimed)
            return
        kind = self.topology.kind(node)
        if kind is NodeKind.CLIENT_HOST and pkt.kind in LEGIT_REQUEST_KINDS and pkt.in_reply_to is None:
            self._pending[pkt.id] = now
            self._legit_sources.add(pkt.src_actual)
            self.write('legit_sent', now, id=pkt.id, src=str(pkt.src_actual))
        elif kind is NodeKind.HONEY_FARM_HOST:
            self._farm_packets.add(pkt.id)

    def dropped(self, node: str, pkt: Packet, reason: str, now: int) -> None:
        request = self._request_of(pkt)
        if request is not None:
            self._resolve_dropped(request, reason, now)

    def delivered(self, node: str, pkt: Packet, now: int) -> None:
        kind = self.topology.kind(node)
        if kind is NodeKind.PRODUCTION_SERVER and pkt.id in self._farm_packets:
            self.write('containment_violation', now, node=node, packet=pkt.id)
        if pkt.id in self._pending and kind is NodeKind.HONEY_FARM_HOST:
            self._resolve_dropped(pkt.id, 'diverted', now)
        elif pkt.in_reply_to in self._pending and kind is NodeKind.CLIENT_HOST:
            if pkt.kind is PacketKind.DEST_UNREACHABLE:
                self._resolve_dropped(pkt.in_reply_to, 'unreachable', now)
                return
            sent_at = self._pending.pop(pkt.in_reply_to)
            self.write('legit_served', now, id=pkt.in_reply_to, latency=now - sent_at)

    def note(self, kind: str, now: int, **fields: Any) -> None:
        self.write(kind, now, **fields)

    def _request_of(self, pkt: Packet) -> int | None:
        if pkt.id in self._pending:
            return pkt.id
        if pkt.in_reply_to is not None and pkt.in_reply_to in self._pending:
            return pkt.in_reply_to
        return None

    def _resolve_dropped(self, request: int, reason: str, now: int) -> None:
        del self._pending[request]
        self.write('legit_dropped', now, id=request, reason=reason)

    # -- end of run ----------------------------------------------------------------

    def finish(self, now: int, **counters: Any) -> None:
        self.write('counters', now, **counters)
        self.write(
            'source_truth', now,
            legit=_addresses(self._legit_sources),
            attacks=[_addresses(sources) for sources in self._malicious],
        )
        self.write('end', now, legit_in_flight=len(self._pending))


def _addresses(addresses: Iterable[Address]) -> list[str]:
    return [str(address) for address in sorted(addresses)]


# -- report ---------------------------------------------------------------------


def compute_report(records: Iterable[dict[str, Any]]) -> MetricsReport:
    """Derive the metrics of a run from its trace records."""
    records = list(records)
    if not records or records[0].get('kind') != 'run':
        raise ReportFormatError('trace does not start with a run header')
    header = records[0]
    duration = int(header['duration_ms'])
    bucket = int(header['bucket_ms'])
    scenarios = header.get('scenarios', [])

    sent: dict[int, int] = {}
    latencies: dict[int, int] = {}
    dropped: dict[int, str] = {}
    first_confirm: dict[str, int] = {}
    first_block: dict[str, int] = {}
    crash_causes: Counter[str] = Counter()
    report = MetricsReport()
    gaps_open: dict[str, int] = {}
    gap_total = 0
    truth: dict[str, Any] = {'legit': [], 'attacks': [[] for _ in scenarios]}
    end_time = duration

    for record in records:
        kind = record.get('kind')
        t = record.get('t', 0)
        if kind == 'legit_sent':
            sent[record['id']] = t
        elif kind == 'legit_served':
            latencies[record['id']] = record['latency']
        elif kind == 'legit_dropped':
            dropped[record['id']] = record['reason']
        elif kind == 'defense':
            source = record['source']
            if record['event'] == 'Confirmed':
                first_confirm.setdefault(source, t)
            elif record['event'] == 'BlockInstalled':
                first_block.setdefault(source, t)
        elif kind == 'crash':
            report.production_crashes += 1
            crash_causes[record['cause']] += 1
        elif kind == 'compromise':
            report.honeypot_compromises += 1
        elif kind == 'failover':
            report.failovers += 1
        elif kind == 'pool_exhausted':
            report.pool_exhaustions += 1
            gaps_open.setdefault(record['service'], t)
        elif kind == 'vm_activated':
            opened = gaps_open.pop(record['service'], None)
            if opened is not None:
                gap_total += t - opened
        elif kind == 'containment_violation':
            report.containment_violations += 1
        elif kind == 'counters':
            report.firewall_drops = int(record.get('firewall_drops', 0))
        elif kind == 'source_truth':
            truth = record
        elif kind == 'end':
            end_time = max(t, duration)

    for opened in gaps_open.values():
        gap_total += end_time - opened

    report.legit_sent = len(sent)
    report.legit_served = len(latencies)
    report.legit_dropped = len(dropped)
    report.legit_in_flight = report.legit_sent - report.legit_served - report.legit_dropped
    report.legit_success_rate = report.legit_served / report.legit_sent if sent else 1.0
    if latencies:
        values = np.fromiter(latencies.values(), dtype=np.float64)
        report.latency_mean_ms = float(values.mean())
        report.latency_p95_ms = float(np.percentile(values, 95))
        report.latency_p99_ms = float(np.percentile(values, 99))
    report.legit_drop_reasons = dict(sorted(Counter(dropped.values()).items()))
    report.crash_causes = dict(sorted(crash_causes.items()))
    report.coverage_gap_ms = gap_total

    malicious_by_scenario = [set(sources) for sources in truth.get('attacks', [])]
    malicious = set().union(*malicious_by_scenario)
    confirmed = set(first_confirm)
    report.false_positive_sources = len(confirmed - malicious)
    report.false_negative_sources = len(malicious - confirmed)
    report.time_to_first_confirm_ms = [
        _first_after(first_confirm, sources, scenario['start_ms'])
        for scenario, sources in zip(scenarios, _pad(malicious_by_scenario, len(scenarios)))
    ]
    report.time_to_first_block_ms = [
        _first_after(first_block, sources, scenario['start_ms'])
        for scenario, sources in zip(scenarios, _pad(malicious_by_scenario, len(scenarios)))
    ]
    report.success_series = success_series(sent, latencies, duration, bucket)
    return report


def _pad(groups: list[set[str]], length: int) -> list[set[str]]:
    return groups + [set() for _ in range(length - len(groups))]


def _first_after(times: dict[str, int], sources: set[str], start: int) -> int | None:
    hits = [times[source] for source in sources if source in times and times[source] >= start]
    return min(hits) - start if hits else None


def success_series(
    sent: dict[int, int], served: dict[int, Any], duration_ms: int, bucket_ms: int,
) -> list[float | None]:
    """Per-bucket share of the requests sent in that bucket that were served."""
    length = math.ceil(duration_ms / bucket_ms)
    totals = [0] * length
    hits = [0] * length
    for request, t in sent.items():
        index = t // bucket_ms
        if 0 <= index < length:
            totals[index] += 1
            if request in served:
                hits[index] += 1
    return [hit / total if total else None for hit, total in zip(hits, totals)]
