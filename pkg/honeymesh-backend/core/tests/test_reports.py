import tempfile
from pathlib import Path

from django.test import SimpleTestCase

from core.exceptions import ReportFormatError
from core.metrics import MetricsReport, Recorder, compute_report, success_series
from core.packets import PacketKind, Protocol
from core.reports import (
    CSV_COLUMNS,
    emit_report,
    parse_report,
    read_trace,
    report_from_csv,
    report_from_json,
    report_to_csv,
    report_to_json,
    write_trace,
)

from .helpers import CLIENT, WEB, make_packet, small_topology

ATTACKER = '192.0.2.7'
MISSED = '192.0.2.8'
INNOCENT = '198.51.100.9'


def hand_written_trace():
    return [
        {'t': 0, 'kind': 'run', 'seed': 1, 'duration_ms': 5000, 'bucket_ms': 1000,
         'scenarios': [{'attack': 'SynFlood', 'start_ms': 1000, 'end_ms': 4000}]},
        {'t': 0, 'kind': 'legit_sent', 'id': 1, 'src': '198.51.100.1'},
        {'t': 20, 'kind': 'legit_served', 'id': 1, 'latency': 20},
        {'t': 500, 'kind': 'legit_sent', 'id': 2, 'src': '198.51.100.2'},
        {'t': 540, 'kind': 'legit_served', 'id': 2, 'latency': 40},
        {'t': 1500, 'kind': 'legit_sent', 'id': 3, 'src': '198.51.100.1'},
        {'t': 1503, 'kind': 'legit_dropped', 'id': 3, 'reason': 'honeyd'},
        {'t': 2000, 'kind': 'pool_exhausted', 'service': 'Web', 'failed': 'web-vm01'},
        {'t': 2500, 'kind': 'legit_sent', 'id': 4, 'src': '198.51.100.2'},
        {'t': 2600, 'kind': 'vm_activated', 'service': 'Web', 'vm': 'web-vm01'},
        {'t': 3000, 'kind': 'defense', 'event': 'Confirmed', 'source': ATTACKER, 'origin': 'web', 'detail': {}},
        {'t': 3500, 'kind': 'defense', 'event': 'Confirmed', 'source': INNOCENT, 'origin': 'web', 'detail': {}},
        {'t': 3600, 'kind': 'crash', 'node': 'web', 'cause': 'Land'},
        {'t': 3700, 'kind': 'compromise', 'vm': 'web-vm01', 'service': 'Web', 'source': ATTACKER, 'cause': 'Land'},
        {'t': 3700, 'kind': 'failover', 'service': 'Web', 'failed': 'web-vm01', 'activated': 'web-vm02'},
        {'t': 4000, 'kind': 'defense', 'event': 'BlockInstalled', 'source': ATTACKER, 'origin': 'web',
         'detail': {'firewalls': ['fw']}},
        {'t': 4500, 'kind': 'pool_exhausted', 'service': 'Web', 'failed': 'web-vm02'},
        {'t': 5000, 'kind': 'counters', 'firewall_drops': 7},
        {'t': 5000, 'kind': 'source_truth', 'legit': ['198.51.100.1', '198.51.100.2'],
         'attacks': [[ATTACKER, MISSED]]},
        {'t': 5000, 'kind': 'end', 'legit_in_flight': 1},
    ]


class ComputeReportTests(SimpleTestCase):
    def setUp(self):
        self.report = compute_report(hand_written_trace())

    def test_request_accounting(self):
        report = self.report
        self.assertEqual(
            (report.legit_sent, report.legit_served, report.legit_dropped, report.legit_in_flight),
            (4, 2, 1, 1),
        )
        self.assertEqual(report.legit_success_rate, 0.5)
        self.assertEqual(report.legit_drop_reasons, {'honeyd': 1})
        self.assertEqual(report.latency_mean_ms, 30.0)
        self.assertAlmostEqual(report.latency_p95_ms, 39.0)

    def test_detection_timing_and_errors(self):
        report = self.report
        self.assertEqual(report.time_to_first_confirm_ms, [2000])
        self.assertEqual(report.time_to_first_block_ms, [3000])
        self.assertEqual(report.false_positive_sources, 1)
        self.assertEqual(report.false_negative_sources, 1)

    def test_incidents(self):
        report = self.report
        self.assertEqual(report.production_crashes, 1)
        self.assertEqual(report.crash_causes, {'Land': 1})
        self.assertEqual((report.honeypot_compromises, report.failovers, report.pool_exhaustions), (1, 1, 2))
        self.assertEqual(report.firewall_drops, 7)
        # 600 ms until the first gap closed plus the one still open at the end.
        self.assertEqual(report.coverage_gap_ms, 1100)

    def test_success_series(self):
        self.assertEqual(self.report.success_series, [1.0, 0.0, 0.0, None, None])
        self.assertEqual(len(success_series({}, {}, 20500, 1000)), 21)

    def test_trace_must_start_with_a_run_header(self):
        with self.assertRaises(ReportFormatError):
            compute_report(hand_written_trace()[1:])
        with self.assertRaises(ReportFormatError):
            compute_report([])

    def test_quiet_run(self):
        report = compute_report([hand_written_trace()[0]])
        self.assertEqual(report.legit_success_rate, 1.0)
        self.assertIsNone(report.latency_mean_ms)
        self.assertEqual(report.time_to_first_confirm_ms, [None])


class RecorderTests(SimpleTestCase):
    def test_only_service_replies_count_as_served(self):
        recorder = Recorder(small_topology())
        recorder.begin(seed=1, duration_ms=1000, bucket_ms=1000)
        answered = make_packet(src=CLIENT, dst=WEB)
        refused = make_packet(protocol=Protocol.UDP, src=CLIENT, dst=WEB, port=7)
        recorder.emitted('c1', answered, 0)
        recorder.emitted('c1', refused, 0)
        recorder.delivered('c1', make_packet(src=WEB, dst=CLIENT, in_reply_to=answered.id), 12)
        recorder.delivered(
            'c1',
            make_packet(
                kind=PacketKind.DEST_UNREACHABLE, protocol=Protocol.ICMP, src=WEB, dst=CLIENT,
                size=56, port=7, in_reply_to=refused.id,
            ),
            14,
        )
        recorder.finish(1000)
        report = compute_report(recorder.records)
        self.assertEqual(
            (report.legit_sent, report.legit_served, report.legit_dropped, report.legit_in_flight),
            (2, 1, 1, 0),
        )
        self.assertEqual(report.legit_drop_reasons, {'unreachable': 1})
        self.assertEqual(report.legit_success_rate, 0.5)
        self.assertEqual(report.latency_mean_ms, 12.0)


class ReportFileTests(SimpleTestCase):
    def setUp(self):
        self.report = compute_report(hand_written_trace())
        tmp = tempfile.TemporaryDirectory()
        self.addCleanup(tmp.cleanup)
        self.tmp = Path(tmp.name)

    def test_csv_layout(self):
        lines = report_to_csv(self.report).splitlines()
        self.assertEqual(lines[0], ','.join(CSV_COLUMNS))
        self.assertIn('legit_sent,,4', lines)
        self.assertIn('time_to_first_confirm_ms,0,2000', lines)
        self.assertIn('crash_causes,Land,1', lines)
        self.assertIn('success_series,3,', lines)
        self.assertIn('latency_mean_ms,,30.0', lines)

    def test_both_formats_read_back_unchanged(self):
        self.assertEqual(report_from_json(report_to_json(self.report)), self.report)
        self.assertEqual(report_from_csv(report_to_csv(self.report)), self.report)
        empty = MetricsReport()
        self.assertEqual(report_from_csv(report_to_csv(empty)), empty)

    def test_emit_and_parse(self):
        for fmt in ('json', 'csv'):
            path = emit_report(self.report, fmt, self.tmp / 'out' / f'report.{fmt}')
            self.assertEqual(parse_report(path), self.report)
        with self.assertRaises(ReportFormatError):
            emit_report(self.report, 'xml', self.tmp / 'report.xml')

    def test_malformed_reports(self):
        with self.assertRaises(ReportFormatError):
            report_from_csv('name,value\n')
        with self.assertRaises(ReportFormatError):
            report_from_json('{"legit_sent": -1}')
        with self.assertRaises(ReportFormatError):
            report_from_json('{')

    def test_trace_file(self):
        records = hand_written_trace()
        path = write_trace(records, self.tmp / 'trace.ndjson')
        lines = path.read_text(encoding='utf-8').splitlines()
        self.assertEqual(len(lines), len(records))
        self.assertTrue(lines[0].startswith('{"bucket_ms":1000,'))
        self.assertEqual(read_trace(path), records)

        path.write_text(lines[0] + '\nnot json\n', encoding='utf-8')
        with self.assertRaises(ReportFormatError):
            read_trace(path)
