"""
Behavioural detection: baseline learning, per-source anomaly scoring and
the two-level challenge-response ladder that turns a suspicion into a
verdict without operator input.

The free functions (``train_baseline``, ``anomaly_score``,
``decide_suspicion``, ``evaluate_response``, ``next_action``) hold the
arithmetic and the state machine. ``Detector`` wires them together for
one host: it owns the flow table, the suspicion records and the
outstanding challenges, sends challenge packets through a callback and
reports progress to the defense orchestrator.

Only wire-visible header fields are read here.
"""
from __future__ import annotations

import itertools
import logging
import random
from collections import Counter, deque
from collections.abc import Callable, Iterable
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

import numpy as np

from .engine import Simulator
from .exceptions import ChallengeOutstanding, InsufficientSample
from .packets import (
    PROTOCOL_ORDER,
    Address,
    ChallengeToken,
    Header,
    Packet,
    PacketKind,
    Protocol,
    honest_packet,
)

logger = logging.getLogger(__name__)

EPSILON = 1e-6
BUCKET_MS = 1000
#: L1 protocol-mix distance that counts as one standard deviation.
MIX_SCALE = 0.25
CHALLENGE_BYTES = 64


@dataclass(frozen=True)
class DetectionSettings:
    threshold: float = 0.5
    challenge_timeout_ms: int = 2000
    warmup_n: int = 2000
    z_cap: float = 6.0
    window_ms: int = 1000
    idle_evict_ms: int = 60000


# -- baseline ---------------------------------------------------------------


@dataclass(frozen=True)
class BaselineModel:
    rate_mean: float
    rate_std: float
    size_mean: float
    size_std: float
    protocol_mix: tuple[float, float, float]
    source_rate_mean: float
    source_rate_std: float
    trained_on: int


def train_baseline(
    requests: Iterable[Header],
    warmup_n: int = 2000,
    *,
    bucket_ms: int = BUCKET_MS,
) -> BaselineModel:
    """Learn expected traffic from exactly the first ``warmup_n`` requests.

    Rates are packets per ms over fixed ``bucket_ms`` buckets measured
    from the first request; the per-source rate only looks at buckets in
    which the source was active. Every standard deviation is floored at
    ``EPSILON``.
    """
    sample = list(itertools.islice(requests, warmup_n))
    if warmup_n <= 0 or len(sample) < warmup_n:
        raise InsufficientSample(len(sample), warmup_n)

    times = np.fromiter((pkt.sent_at for pkt in sample), dtype=np.int64, count=warmup_n)
    sizes = np.fromiter((pkt.size_bytes for pkt in sample), dtype=np.float64, count=warmup_n)
    buckets = (times - times.min()) // bucket_ms
    rates = np.bincount(buckets) / bucket_ms

    per_source = Counter(zip((pkt.src_claimed for pkt in sample), buckets.tolist()))
    source_rates = np.fromiter(per_source.values(), dtype=np.float64) / bucket_ms

    protocols = Counter(pkt.protocol for pkt in sample)
    mix = tuple(protocols.get(protocol, 0) / warmup_n for protocol in PROTOCOL_ORDER)

    return BaselineModel(
        rate_mean=float(rates.mean()),
        rate_std=max(float(rates.std()), EPSILON),
        size_mean=float(sizes.mean()),
        size_std=max(float(sizes.std()), EPSILON),
        protocol_mix=mix,
        source_rate_mean=float(source_rates.mean()),
        source_rate_std=max(float(source_rates.std()), EPSILON),
        trained_on=warmup_n,
    )


# -- flows and scoring ----------------------------------------------------------


@dataclass
class FlowStats:
    """Packets seen from one claimed source over a trailing window."""

    source: Address
    window_ms: int = BUCKET_MS
    samples: deque[tuple[int, int, Protocol]] = field(default_factory=deque)
    last_seen: int = 0

    def observe(self, pkt: Header, now: int) -> None:
        self.samples.append((now, pkt.size_bytes, pkt.protocol))
        self.last_seen = now
        self.prune(now)

    def prune(self, now: int) -> None:
        horizon = now - self.window_ms
        while self.samples and self.samples[0][0] <= horizon:
            self.samples.popleft()

    @property
    def rate(self) -> float:
        return len(self.samples) / self.window_ms

    @property
    def mean_size(self) -> float:
        if not self.samples:
            return 0.0
        return sum(size for _, size, _ in self.samples) / len(self.samples)

    @property
    def proto_counts(self) -> tuple[int, int, int]:
        counts = Counter(protocol for _, _, protocol in self.samples)
        return tuple(counts.get(protocol, 0) for protocol in PROTOCOL_ORDER)

    @property
    def protocol_mix(self) -> tuple[float, float, float]:
        counts = self.proto_counts
        total = sum(counts)
        if not total:
            return (0.0, 0.0, 0.0)
        return tuple(count / total for count in counts)


@dataclass(frozen=True)
class FlowSnapshot:
    """Feature values of a flow frozen at one instant."""

    rate: float
    mean_size: float
    protocol_mix: tuple[float, float, float]


def anomaly_score(m: BaselineModel, f: FlowStats | FlowSnapshot, z_cap: float = 6.0) -> float:
    z_rate = abs(f.rate - m.source_rate_mean) / m.source_rate_std
    z_size = abs(f.mean_size - m.size_mean) / m.size_std
    distance = np.abs(np.asarray(f.protocol_mix) - np.asarray(m.protocol_mix)).sum()
    z_proto = float(distance) / MIX_SCALE
    return min(1.0, max(z_rate, z_size, z_proto) / z_cap)


def decide_suspicion(score: float, threshold: float = 0.5) -> bool:
    return score >= threshold


# -- suspicion records and challenges ----------------------------------------


class Level(str, Enum):
    NONE = 'None'
    L1_PENDING = 'L1Pending'
    L2_PENDING = 'L2Pending'


class SuspicionVerdict(str, Enum):
    BENIGN = 'Benign'
    SUSPICIOUS = 'Suspicious'
    CONFIRMED = 'Confirmed'


class Outcome(str, Enum):
    PASS = 'Pass'
    FAIL = 'Fail'
    TIMEOUT = 'Timeout'


class Action(str, Enum):
    CLEAR = 'Clear'
    ESCALATE = 'Escalate'
    CONFIRM = 'Confirm'


class Assessment(str, Enum):
    """What a host should do with a packet after the detector saw it."""

    FORWARD = 'Forward'
    PENDING = 'Pending'
    CONFIRMED = 'Confirmed'
    CONSUMED = 'Consumed'


@dataclass
class SuspicionRecord:
    source: Address
    score: float = 0.0
    level: Level = Level.NONE
    challenges_sent: int = 0
    last_challenge_id: int | None = None
    verdict: SuspicionVerdict = SuspicionVerdict.BENIGN
    last_seen: int = 0


@dataclass(frozen=True)
class Challenge:
    id: int
    level: int
    issued_to: Address
    issued_at: int
    deadline: int
    nonce: int


def evaluate_response(c: Challenge, resp: Header | None, now: int) -> Outcome:
    """Judge a challenge.

    A response passes if it carries the right nonce and arrives no later
    than the deadline. Without a response the challenge is a Timeout
    only once ``now`` is past the deadline.
    """
    if resp is None:
        if now <= c.deadline:
            raise ValueError(f'challenge {c.id} is still open at t={now}')
        return Outcome.TIMEOUT
    token = resp.token
    if (
        now <= c.deadline
        and token is not None
        and token.challenge_id == c.id
        and token.nonce == c.nonce
    ):
        return Outcome.PASS
    return Outcome.FAIL


def next_action(rec: SuspicionRecord, outcome: Outcome) -> Action:
    if rec.level is Level.NONE:
        raise ValueError(f'no challenge pending for {rec.source}')
    if outcome is Outcome.PASS:
        return Action.CLEAR
    return Action.ESCALATE if rec.level is Level.L1_PENDING else Action.CONFIRM


EventSink = Callable[[str, Address, int], None]
VerdictSink = Callable[[Address, SuspicionVerdict, int], None]


class Detector:
    """Detection state for one host (a honey-d or a farm profile).

    ``send`` transmits a challenge packet from the host, ``on_event``
    receives pipeline progress (SuspicionRaised, ChallengeIssued,
    Escalated, Cleared) and ``on_verdict`` the Cleared and Confirmed
    verdicts.
    """

    def __init__(
        self,
        name: str,
        baseline: BaselineModel,
        settings: DetectionSettings,
        *,
        sim: Simulator,
        address: Address,
        nonce_rng: random.Random,
        send: Callable[[Packet], None],
        on_event: EventSink | None = None,
        on_verdict: VerdictSink | None = None,
    ) -> None:
        self.name = name
        self.baseline = baseline
        self.settings = settings
        self.sim = sim
        self.address = address
        self.nonce_rng = nonce_rng
        self.send = send
        self.on_event: EventSink = on_event or (lambda kind, source, now: None)
        self.on_verdict: VerdictSink = on_verdict or (lambda source, verdict, now: None)
        self.flows: dict[Address, FlowStats] = {}
        self.records: dict[Address, SuspicionRecord] = {}
        self.challenges: dict[Address, Challenge] = {}
        self._sweeping = False

    # -- packet path ------------------------------------------------------

    def observe(self, pkt: Header, now: int) -> Assessment:
        source = pkt.src_claimed
        record = self.records.get(source)
        if record is not None and record.verdict is SuspicionVerdict.CONFIRMED:
            return Assessment.CONFIRMED
        if pkt.kind is PacketKind.CHALLENGE_RESPONSE and pkt.token is not None:
            self.on_response(pkt, now)
            return Assessment.CONSUMED

        flow = self.flows.get(source)
        if flow is None:
            flow = self.flows[source] = FlowStats(source, window_ms=self.settings.window_ms)
        flow.observe(pkt, now)
        if record is None:
            record = self.records[source] = SuspicionRecord(source)
        record.last_seen = now
        if record.level is not Level.NONE:
            return Assessment.PENDING

        record.score = anomaly_score(self.baseline, flow, self.settings.z_cap)
        if not decide_suspicion(record.score, self.settings.threshold):
            return Assessment.FORWARD
        record.verdict = SuspicionVerdict.SUSPICIOUS
        self.on_event('SuspicionRaised', source, now)
        self.issue_challenge(source, 1, now)
        return Assessment.PENDING

    def is_confirmed(self, source: Address) -> bool:
        record = self.records.get(source)
        return record is not None and record.verdict is SuspicionVerdict.CONFIRMED

    def owns(self, token: ChallengeToken, source: Address) -> bool:
        challenge = self.challenges.get(source)
        return challenge is not None and challenge.id == token.challenge_id

    # -- challenge ladder ---------------------------------------------------------

    def issue_challenge(self, source: Address, level: int, now: int) -> tuple[Challenge, Packet]:
        if level not in (1, 2):
            raise ValueError(f'challenge level must be 1 or 2, got {level}')
        if source in self.challenges:
            raise ChallengeOutstanding(f'{self.name} already awaits a response from {source}')
        packet_id = self.sim.next_packet_id()
        challenge = Challenge(
            id=packet_id,
            level=level,
            issued_to=source,
            issued_at=now,
            deadline=now + self.settings.challenge_timeout_ms,
            nonce=self.nonce_rng.getrandbits(32),
        )
        self.challenges[source] = challenge
        record = self.records.get(source)
        if record is None:
            record = self.records[source] = SuspicionRecord(source, last_seen=now)
        record.level = Level.L1_PENDING if level == 1 else Level.L2_PENDING
        record.challenges_sent += 1
        record.last_challenge_id = challenge.id

        pkt = honest_packet(
            id=packet_id,
            protocol=Protocol.ICMP,
            kind=PacketKind.CHALLENGE,
            src=self.address,
            dst=source,
            size_bytes=CHALLENGE_BYTES,
            sent_at=now,
            token=ChallengeToken(challenge.id, level, challenge.nonce),
        )
        self.sim.timer(challenge.deadline, self, 'deadline', (source, challenge.id), late=True)
        self.on_event('ChallengeIssued', source, now)
        logger.debug('%s challenged %s at level %s (t=%s)', self.name, source, level, now)
        self.send(pkt)
        return challenge, pkt

    def on_response(self, pkt: Header, now: int) -> None:
        challenge = self.challenges.get(pkt.src_claimed)
        if challenge is None or pkt.token is None or pkt.token.challenge_id != challenge.id:
            return
        self._resolve(challenge, evaluate_response(challenge, pkt, now), now)

    def _resolve(self, challenge: Challenge, outcome: Outcome, now: int) -> None:
        source = challenge.issued_to
        record = self.records[source]
        action = next_action(record, outcome)
        del self.challenges[source]
        logger.debug('%s: challenge %s for %s -> %s', self.name, challenge.id, source, outcome.value)
        if action is Action.CLEAR:
            record.verdict = SuspicionVerdict.BENIGN
            record.level = Level.NONE
            record.score = 0.0
            self.flows.pop(source, None)
            self.on_event('Cleared', source, now)
            self.on_verdict(source, SuspicionVerdict.BENIGN, now)
        elif action is Action.ESCALATE:
            self.on_event('Escalated', source, now)
            self.issue_challenge(source, 2, now)
        else:
            self._confirm(record, now)

    def confirm(self, source: Address, now: int) -> bool:
        """Confirm ``source`` outright, e.g. on a structurally forged header."""
        record = self.records.get(source)
        if record is None:
            record = self.records[source] = SuspicionRecord(source, last_seen=now)
        if record.verdict is SuspicionVerdict.CONFIRMED:
            return False
        if record.verdict is SuspicionVerdict.BENIGN:
            record.verdict = SuspicionVerdict.SUSPICIOUS
            record.score = 1.0
            self.on_event('SuspicionRaised', source, now)
        self.challenges.pop(source, None)
        self._confirm(record, now)
        return True

    def _confirm(self, record: SuspicionRecord, now: int) -> None:
        record.verdict = SuspicionVerdict.CONFIRMED
        record.level = Level.NONE
        self.flows.pop(record.source, None)
        logger.info('%s confirmed %s as hostile at t=%s', self.name, record.source, now)
        self.on_verdict(record.source, SuspicionVerdict.CONFIRMED, now)

    # -- timers ---------------------------------------------------------------

    def start(self) -> None:
        """Begin the periodic idle sweep."""
        if self.settings.idle_evict_ms > 0 and not self._sweeping:
            self._sweeping = True
            self.sim.timer(self.sim.now + self.settings.idle_evict_ms, self, 'sweep')

    def on_timer(self, tag: str, data: Any, now: int) -> None:
        if tag == 'deadline':
            source, challenge_id = data
            challenge = self.challenges.get(source)
            if challenge is not None and challenge.id == challenge_id:
                # Late timer: every arrival at the deadline instant has been seen.
                self._resolve(challenge, Outcome.TIMEOUT, now)
        elif tag == 'sweep':
            self.evict_idle(now)
            self.sim.timer(now + self.settings.idle_evict_ms, self, 'sweep')

    def evict_idle(self, now: int) -> int:
        horizon = now - self.settings.idle_evict_ms
        stale = [
            source for source, record in self.records.items()
            if record.verdict is not SuspicionVerdict.CONFIRMED
            and source not in self.challenges
            and record.last_seen <= horizon
        ]
        for source in stale:
            del self.records[source]
            self.flows.pop(source, None)
        return len(stale)
