"""
Admin configuration for the HoneyMesh simulator.

Archived runs are read-only: they are written by ``run --archive`` and
only browsed here.
"""
from __future__ import annotations

from django.contrib import admin

from .models import SimulationRun

# Admin site branding
admin.site.site_header = 'HoneyMesh Admin'
admin.site.site_title = 'HoneyMesh Admin'
admin.site.index_title = 'Run archive'


@admin.register(SimulationRun)
class SimulationRunAdmin(admin.ModelAdmin):
    list_display = (
        'name', 'seed', 'duration_ms', 'farm_enabled', 'honeyd_enabled',
        'legit_success_rate', 'production_crashes', 'created_at',
    )
    search_fields = ('name', 'seed', 'config_digest')
    list_filter = ('farm_enabled', 'honeyd_enabled', 'created_at')
    readonly_fields = (
        'name', 'seed', 'config_digest', 'duration_ms', 'farm_enabled', 'honeyd_enabled',
        'legit_success_rate', 'production_crashes', 'report', 'trace_path', 'created_at',
    )
    fieldsets = (
        ('Run', {'fields': ('name', 'seed', 'config_digest', 'duration_ms', 'trace_path', 'created_at')}),
        ('Defense', {'fields': ('farm_enabled', 'honeyd_enabled')}),
        ('Results', {'fields': ('legit_success_rate', 'production_crashes', 'report')}),
    )

    def has_add_permission(self, request) -> bool:
        return False
