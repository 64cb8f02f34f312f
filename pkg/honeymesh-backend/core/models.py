"""
Database models for the HoneyMesh simulator.

Runs themselves never touch the database. ``run --archive`` stores a
summary of a finished run here so past results can be browsed and
compared in the admin.
"""
from __future__ import annotations

import hashlib
import json
from typing import Any

from django.db import models

from .reports import REPORT_FIELDS


def config_digest(document: dict[str, Any]) -> str:
    """SHA-256 of the normalised scenario document."""
    text = json.dumps(document, sort_keys=True, separators=(',', ':'))
    return hashlib.sha256(text.encode('utf-8')).hexdigest()


class SimulationRun(models.Model):
    """An archived simulation run.

    ``seed`` is kept as text because seeds are unsigned 64-bit values,
    which do not fit a signed integer column. ``report`` holds the full
    metrics report with the same keys as the JSON report file.
    """

    name = models.CharField(max_length=200)
    seed = models.CharField(max_length=20)
    config_digest = models.CharField(max_length=64, db_index=True)
    duration_ms = models.PositiveBigIntegerField()
    farm_enabled = models.BooleanField(default=True)
    honeyd_enabled = models.BooleanField(default=True)
    legit_success_rate = models.FloatField()
    production_crashes = models.PositiveIntegerField(default=0)
    report = models.JSONField(default=dict)
    trace_path = models.CharField(max_length=500, blank=True)
    created_at = models.DateTimeField(auto_now_add=True)

    class Meta:
        ordering = ['-created_at']
        verbose_name = 'Simulation run'
        verbose_name_plural = 'Simulation runs'

    def __str__(self) -> str:
        return f'{self.name} (seed {self.seed})'

    @classmethod
    def archive(cls, name: str, cfg: Any, result: Any) -> 'SimulationRun':
        report = result.report
        return cls.objects.create(
            name=name,
            seed=str(cfg.seed),
            config_digest=config_digest(cfg.document),
            duration_ms=cfg.duration_ms,
            farm_enabled=cfg.defense.farm_enabled,
            honeyd_enabled=cfg.defense.honeyd_enabled,
            legit_success_rate=report.legit_success_rate,
            production_crashes=report.production_crashes,
            report={field: getattr(report, field) for field in REPORT_FIELDS},
            trace_path=str(result.trace_path or ''),
        )
