"""
Recompute the metrics report from a trace file.

Example:
    python manage.py report --trace runs/synflood/trace.ndjson --format csv --out report.csv

Without ``--out`` the report is printed.
"""
from __future__ import annotations

from django.core.management.base import BaseCommand, CommandError

from core.exceptions import HoneyMeshError
from core.metrics import compute_report
from core.reports import FORMATS, emit_report, read_trace, report_to_csv, report_to_json


class Command(BaseCommand):
    help = 'Compute the metrics report of a recorded run from its trace.'

    def add_arguments(self, parser) -> None:
        parser.add_argument('--trace', required=True, help='Trace file (NDJSON)')
        parser.add_argument('--format', choices=FORMATS, default='json')
        parser.add_argument('--out', help='Write the report here instead of printing it')

    def handle(self, *args, **options) -> None:
        try:
            report = compute_report(read_trace(options['trace']))
        except OSError as exc:
            raise CommandError(f'{options["trace"]}: {exc.strerror or exc}') from exc
        except (HoneyMeshError, KeyError) as exc:
            raise CommandError(f'{options["trace"]}: malformed trace ({exc})') from exc

        fmt = options['format']
        if options['out']:
            path = emit_report(report, fmt, options['out'])
            self.stdout.write(self.style.SUCCESS(f'Report written to {path}'))
        else:
            self.stdout.write(report_to_json(report) if fmt == 'json' else report_to_csv(report), ending='')
