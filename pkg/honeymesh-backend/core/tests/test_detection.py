import random

from django.test import SimpleTestCase

from core.detection import (
    EPSILON,
    Action,
    Assessment,
    BaselineModel,
    Challenge,
    DetectionSettings,
    Detector,
    FlowSnapshot,
    FlowStats,
    Level,
    Outcome,
    SuspicionRecord,
    SuspicionVerdict,
    anomaly_score,
    decide_suspicion,
    evaluate_response,
    next_action,
    train_baseline,
)
from core.engine import Simulator
from core.exceptions import ChallengeOutstanding, InsufficientSample
from core.packets import ChallengeToken, PacketKind, Protocol

from .helpers import CLIENT, SPOOFED, WEB, make_packet

BASELINE = BaselineModel(
    rate_mean=0.015,
    rate_std=0.004,
    size_mean=500.0,
    size_std=50.0,
    protocol_mix=(0.0, 1.0, 0.0),
    source_rate_mean=0.005,
    source_rate_std=0.002,
    trained_on=300,
)


class TrainBaselineTests(SimpleTestCase):
    def constant_sample(self, count, protocol=Protocol.TCP):
        kind = PacketKind.ECHO_REQUEST if protocol is Protocol.ICMP else PacketKind.DATA
        return [make_packet(at=10 * i, size=500, protocol=protocol, kind=kind) for i in range(count)]

    def test_constant_rate_sample(self):
        model = train_baseline(self.constant_sample(2000), 2000)
        self.assertAlmostEqual(model.rate_mean, 0.1)
        self.assertEqual(model.rate_std, EPSILON)
        self.assertEqual(model.size_mean, 500.0)
        self.assertEqual(model.size_std, EPSILON)
        self.assertAlmostEqual(model.source_rate_mean, 0.1)
        self.assertEqual(model.trained_on, 2000)

    def test_protocol_mix_of_an_icmp_sample(self):
        model = train_baseline(self.constant_sample(2000, Protocol.ICMP), 2000)
        self.assertEqual(model.protocol_mix, (1.0, 0.0, 0.0))

    def test_too_small_a_sample(self):
        with self.assertRaises(InsufficientSample) as ctx:
            train_baseline(self.constant_sample(1999), 2000)
        self.assertEqual((ctx.exception.available, ctx.exception.required), (1999, 2000))

    def test_only_the_first_requests_count(self):
        sample = self.constant_sample(2000) + [make_packet(at=20_000 + i, size=9000) for i in range(500)]
        self.assertEqual(train_baseline(sample, 2000).size_mean, 500.0)


class ScoringTests(SimpleTestCase):
    model = BaselineModel(
        rate_mean=1.0, rate_std=0.5, size_mean=500.0, size_std=50.0,
        protocol_mix=(0.0, 1.0, 0.0), source_rate_mean=1.0, source_rate_std=0.5, trained_on=2000,
    )

    def test_flow_at_the_baseline_scores_zero(self):
        self.assertEqual(anomaly_score(self.model, FlowSnapshot(1.0, 500.0, (0.0, 1.0, 0.0))), 0.0)

    def test_six_sigma_rate_saturates(self):
        self.assertEqual(anomaly_score(self.model, FlowSnapshot(4.0, 500.0, (0.0, 1.0, 0.0))), 1.0)

    def test_three_sigma_rate_scores_half(self):
        self.assertEqual(anomaly_score(self.model, FlowSnapshot(2.5, 500.0, (0.0, 1.0, 0.0))), 0.5)

    def test_protocol_mix_distance(self):
        self.assertEqual(anomaly_score(self.model, FlowSnapshot(1.0, 500.0, (1.0, 0.0, 0.0))), 1.0)
        # L1 distance 0.5 is a pseudo-z of 2.
        score = anomaly_score(self.model, FlowSnapshot(1.0, 500.0, (0.25, 0.75, 0.0)))
        self.assertAlmostEqual(score, 2 / 6)

    def test_score_grows_with_rate_deviation(self):
        scores = [
            anomaly_score(self.model, FlowSnapshot(1.0 + step * 0.25, 500.0, (0.0, 1.0, 0.0)))
            for step in range(20)
        ]
        self.assertEqual(scores, sorted(scores))

    def test_suspicion_threshold_is_inclusive(self):
        self.assertFalse(decide_suspicion(0.0, 0.5))
        self.assertTrue(decide_suspicion(0.5, 0.5))
        self.assertTrue(decide_suspicion(1.0, 0.99))

    def test_flow_window_forgets_old_packets(self):
        flow = FlowStats(CLIENT, window_ms=1000)
        for at in (0, 100, 200):
            flow.observe(make_packet(size=400), at)
        flow.observe(make_packet(size=600, protocol=Protocol.UDP), 1100)
        self.assertEqual(len(flow.samples), 2)
        self.assertEqual(flow.rate, 2 / 1000)
        self.assertEqual(flow.mean_size, 500.0)
        self.assertEqual(flow.proto_counts, (0, 1, 1))


class ChallengeLadderTests(SimpleTestCase):
    challenge = Challenge(id=9, level=1, issued_to=SPOOFED, issued_at=0, deadline=2000, nonce=77)

    def response(self, nonce=77, challenge_id=9):
        return make_packet(
            kind=PacketKind.CHALLENGE_RESPONSE, protocol=Protocol.ICMP, src=SPOOFED, size=64,
            token=ChallengeToken(challenge_id, 1, nonce),
        )

    def test_outcomes(self):
        self.assertIs(evaluate_response(self.challenge, self.response(), 2000), Outcome.PASS)
        self.assertIs(evaluate_response(self.challenge, None, 2001), Outcome.TIMEOUT)
        self.assertIs(evaluate_response(self.challenge, self.response(nonce=78), 100), Outcome.FAIL)
        self.assertIs(evaluate_response(self.challenge, self.response(), 2001), Outcome.FAIL)

    def test_open_challenge_cannot_time_out(self):
        for now in (1999, 2000):
            with self.subTest(now=now), self.assertRaises(ValueError):
                evaluate_response(self.challenge, None, now)

    def test_next_action_table(self):
        l1 = SuspicionRecord(SPOOFED, level=Level.L1_PENDING)
        l2 = SuspicionRecord(SPOOFED, level=Level.L2_PENDING)
        self.assertIs(next_action(l1, Outcome.PASS), Action.CLEAR)
        self.assertIs(next_action(l1, Outcome.TIMEOUT), Action.ESCALATE)
        self.assertIs(next_action(l1, Outcome.FAIL), Action.ESCALATE)
        self.assertIs(next_action(l2, Outcome.PASS), Action.CLEAR)
        self.assertIs(next_action(l2, Outcome.TIMEOUT), Action.CONFIRM)
        with self.assertRaises(ValueError):
            next_action(SuspicionRecord(SPOOFED), Outcome.PASS)


class DetectorTests(SimpleTestCase):
    def setUp(self):
        self.sim = Simulator()
        self.sent = []
        self.events = []
        self.verdicts = []
        self.detector = Detector(
            'web',
            BASELINE,
            DetectionSettings(challenge_timeout_ms=2000, idle_evict_ms=60000),
            sim=self.sim,
            address=WEB,
            nonce_rng=random.Random(1),
            send=self.sent.append,
            on_event=lambda kind, source, now: self.events.append((kind, source, now)),
            on_verdict=lambda source, verdict, now: self.verdicts.append((source, verdict, now)),
        )

    def syn(self, src=SPOOFED):
        return make_packet(kind=PacketKind.SYN, src=src, size=40)

    def test_ordinary_request_is_forwarded(self):
        self.assertIs(self.detector.observe(make_packet(size=500), 0), Assessment.FORWARD)
        self.assertEqual(self.sent, [])

    def test_issue_challenge(self):
        challenge, pkt = self.detector.issue_challenge(SPOOFED, 1, 100)
        self.assertEqual(pkt.dst, SPOOFED)
        self.assertEqual(pkt.src_claimed, WEB)
        self.assertEqual(pkt.token, ChallengeToken(challenge.id, 1, challenge.nonce))
        self.assertEqual(challenge.deadline, 2100)
        self.assertIs(self.detector.records[SPOOFED].level, Level.L1_PENDING)
        with self.assertRaises(ChallengeOutstanding):
            self.detector.issue_challenge(SPOOFED, 1, 200)

    def test_unanswered_source_is_confirmed_after_two_timeouts(self):
        self.assertIs(self.detector.observe(self.syn(), 0), Assessment.PENDING)
        self.assertIs(self.detector.observe(self.syn(), 10), Assessment.PENDING)
        self.sim.run_until(2000)
        self.assertIs(self.detector.records[SPOOFED].level, Level.L2_PENDING)
        self.sim.run_until(4000)
        self.assertEqual(self.verdicts, [(SPOOFED, SuspicionVerdict.CONFIRMED, 4000)])
        self.assertEqual(
            [kind for kind, _, _ in self.events],
            ['SuspicionRaised', 'ChallengeIssued', 'Escalated', 'ChallengeIssued'],
        )
        self.assertEqual(len(self.sent), 2)
        self.assertIs(self.detector.observe(self.syn(), 4001), Assessment.CONFIRMED)

    def test_response_at_the_deadline_passes(self):
        self.detector.observe(self.syn(CLIENT), 0)
        challenge = self.sent[0]
        response = make_packet(
            kind=PacketKind.CHALLENGE_RESPONSE, protocol=Protocol.ICMP, src=CLIENT, size=64,
            token=challenge.token, in_reply_to=challenge.id,
        )
        detector = self.detector

        class Deliver:
            def on_timer(self, tag, data, now):
                detector.observe(response, now)

        self.sim.timer(2000, Deliver(), 'response')
        self.sim.run_until(2000)
        self.assertEqual(self.verdicts, [(CLIENT, SuspicionVerdict.BENIGN, 2000)])
        self.assertIs(self.detector.records[CLIENT].level, Level.NONE)
        self.assertEqual(len(self.sent), 1)

    def test_silence_through_the_deadline_escalates(self):
        self.detector.observe(self.syn(CLIENT), 0)
        self.sim.run_until(1999)
        self.assertIs(self.detector.records[CLIENT].level, Level.L1_PENDING)
        self.sim.run_until(2000)
        self.assertIs(self.detector.records[CLIENT].level, Level.L2_PENDING)
        self.assertEqual(len(self.sent), 2)

    def test_correct_response_clears_the_source(self):
        self.detector.observe(self.syn(CLIENT), 0)
        challenge = self.sent[0]
        response = make_packet(
            kind=PacketKind.CHALLENGE_RESPONSE, protocol=Protocol.ICMP, src=CLIENT, size=64,
            token=challenge.token, in_reply_to=challenge.id,
        )
        self.assertIs(self.detector.observe(response, 30), Assessment.CONSUMED)
        record = self.detector.records[CLIENT]
        self.assertIs(record.verdict, SuspicionVerdict.BENIGN)
        self.assertIs(record.level, Level.NONE)
        self.assertEqual(record.score, 0.0)
        self.assertNotIn(CLIENT, self.detector.flows)
        self.assertEqual(self.verdicts, [(CLIENT, SuspicionVerdict.BENIGN, 30)])
        # The deadline timer of the answered challenge is stale.
        self.sim.run_until(5000)
        self.assertEqual(len(self.verdicts), 1)

    def test_wrong_nonce_escalates(self):
        self.detector.observe(self.syn(CLIENT), 0)
        token = self.sent[0].token
        forged = make_packet(
            kind=PacketKind.CHALLENGE_RESPONSE, protocol=Protocol.ICMP, src=CLIENT, size=64,
            token=ChallengeToken(token.challenge_id, 1, token.nonce ^ 1),
        )
        self.detector.observe(forged, 50)
        record = self.detector.records[CLIENT]
        self.assertIs(record.level, Level.L2_PENDING)
        self.assertEqual(record.challenges_sent, 2)

    def test_outright_confirmation(self):
        self.assertTrue(self.detector.confirm(WEB, 5))
        self.assertFalse(self.detector.confirm(WEB, 6))
        self.assertTrue(self.detector.is_confirmed(WEB))
        self.assertEqual(self.verdicts, [(WEB, SuspicionVerdict.CONFIRMED, 5)])

    def test_idle_sources_are_evicted_but_confirmed_ones_stay(self):
        self.detector.observe(make_packet(size=500), 0)
        self.detector.confirm(SPOOFED, 0)
        self.assertEqual(self.detector.evict_idle(60_000), 1)
        self.assertNotIn(CLIENT, self.detector.records)
        self.assertIn(SPOOFED, self.detector.records)

    def test_sweep_timer_evicts_periodically(self):
        self.detector.start()
        self.detector.observe(make_packet(size=500), 0)
        self.sim.run_until(60_000)
        self.assertNotIn(CLIENT, self.detector.records)
        self.assertEqual(self.sim.pending(), 1)
