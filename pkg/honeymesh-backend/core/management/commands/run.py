"""
Run one simulation.

Example:
    python manage.py run --config scenarios/synflood.json --seed 7 --out runs/synflood-7

Writes the trace and the JSON/CSV reports to the output directory and
prints a short summary. ``--archive`` also stores the run in the
database so it shows up in the admin.
"""
from __future__ import annotations

from pathlib import Path

from django.core.management.base import BaseCommand, CommandError

from core.exceptions import HoneyMeshError
from core.harness import run_scenario
from core.models import SimulationRun

from ._common import format_optional, load_scenario


class Command(BaseCommand):
    help = 'Run a HoneyMesh simulation scenario and write its trace and reports.'

    def add_arguments(self, parser) -> None:
        parser.add_argument('--config', required=True, help='Scenario JSON file')
        parser.add_argument('--seed', type=int, help='Override the scenario seed')
        parser.add_argument('--out', help='Override the output directory')
        parser.add_argument('--archive', action='store_true', help='Store a summary of the run in the database')
        parser.add_argument('--name', help='Name for the archived run (defaults to the scenario file name)')

    def handle(self, *args, **options) -> None:
        if options['seed'] is not None and not 0 <= options['seed'] < 2**64:
            raise CommandError('--seed must be an unsigned 64-bit integer')
        cfg = load_scenario(options['config'], seed=options['seed'], out=options['out'])
        try:
            result = run_scenario(cfg)
        except HoneyMeshError as exc:
            raise CommandError(str(exc)) from exc
        except OSError as exc:
            raise CommandError(f'could not write run output: {exc}') from exc

        report = result.report
        self.stdout.write(f'legit requests: {report.legit_served}/{report.legit_sent} served '
                          f'({report.legit_success_rate:.3f}), {report.legit_dropped} dropped')
        self.stdout.write(f'production crashes: {report.production_crashes}  '
                          f'honeypot compromises: {report.honeypot_compromises}  '
                          f'firewall drops: {report.firewall_drops}')
        self.stdout.write(f'time to first confirm (ms): {format_optional(report.time_to_first_confirm_ms)}')
        self.stdout.write(f'time to first block (ms): {format_optional(report.time_to_first_block_ms)}')
        if report.containment_violations:
            self.stdout.write(self.style.WARNING(
                f'containment violations: {report.containment_violations}'
            ))
        if options['archive']:
            name = options['name'] or Path(options['config']).stem
            run = SimulationRun.archive(name, cfg, result)
            self.stdout.write(f'archived as run #{run.pk}')
        if result.trace_path is not None:
            self.stdout.write(self.style.SUCCESS(f'Run written to {result.trace_path.parent}'))
        else:
            self.stdout.write(self.style.SUCCESS('Run finished'))
