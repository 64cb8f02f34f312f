"""
Repeat a scenario while varying one numeric field.

Example:
    python manage.py sweep --config scenarios/synflood.json \
        --axis defense.engagement_window_ms --values 0,5000,10000

The axis is a dotted path into the normalised scenario document; list
entries are addressed by index (``attacks.0.rate_pkts_per_ms``). Every
run uses the base seed. The summary is printed as CSV and also written
to ``sweep.csv`` when ``--out`` is given.
"""
from __future__ import annotations

import csv
import io
from pathlib import Path

from django.core.management.base import BaseCommand, CommandError

from core.exceptions import HoneyMeshError
from core.harness import SWEEP_COLUMNS, sweep

from ._common import load_scenario


def parse_values(text: str) -> list[int | float]:
    values: list[int | float] = []
    for part in text.split(','):
        part = part.strip()
        if not part:
            continue
        try:
            values.append(int(part))
        except ValueError:
            try:
                values.append(float(part))
            except ValueError:
                raise CommandError(f'--values: {part!r} is not a number') from None
    if not values:
        raise CommandError('--values needs at least one number')
    return values


def _cell(value) -> str:
    if isinstance(value, list):
        return ';'.join('' if item is None else str(item) for item in value)
    return '' if value is None else str(value)


class Command(BaseCommand):
    help = 'Run a scenario once per value of one numeric configuration field.'

    def add_arguments(self, parser) -> None:
        parser.add_argument('--config', required=True, help='Scenario JSON file')
        parser.add_argument('--axis', required=True, help='Dotted path of the field to vary')
        parser.add_argument('--values', required=True, help='Comma-separated values')
        parser.add_argument('--out', help='Directory for per-run output and sweep.csv')

    def handle(self, *args, **options) -> None:
        values = parse_values(options['values'])
        cfg = load_scenario(options['config'], out=options['out'])
        try:
            rows = sweep(cfg, options['axis'], values)
        except HoneyMeshError as exc:
            raise CommandError(str(exc)) from exc
        except OSError as exc:
            raise CommandError(f'could not write sweep output: {exc}') from exc

        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator='\n')
        writer.writerow(SWEEP_COLUMNS)
        for row in rows:
            writer.writerow([_cell(getattr(row, column)) for column in SWEEP_COLUMNS])
        self.stdout.write(buffer.getvalue(), ending='')
        if options['out']:
            path = Path(options['out']) / 'sweep.csv'
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(buffer.getvalue(), encoding='utf-8')
            self.stdout.write(self.style.SUCCESS(f'Sweep summary written to {path}'))
