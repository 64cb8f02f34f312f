"""Helpers shared by the simulator management commands."""
from __future__ import annotations

from pathlib import Path

from django.conf import settings
from django.core.management.base import CommandError

from core.exceptions import ConfigParseError, ConfigValidationError, HoneyMeshError
from core.harness import ScenarioConfig, load_config, with_overrides
from core.serializers import flatten_errors


def load_scenario(path: str, *, seed: int | None = None, out: str | None = None) -> ScenarioConfig:
    """Load a scenario, applying command-line overrides.

    When neither the file nor ``--out`` names an output directory the
    run writes to ``HONEYMESH_OUTPUT_DIR/<scenario name>``.
    """
    try:
        cfg = load_config(path)
        if out is None and cfg.output.dir is None:
            out = str(Path(settings.HONEYMESH_OUTPUT_DIR) / Path(path).stem)
        if seed is not None or out is not None:
            cfg = with_overrides(cfg, seed=seed, out=out)
    except ConfigParseError as exc:
        raise CommandError(f'{path}: {exc}') from exc
    except ConfigValidationError as exc:
        lines = '\n'.join(f'  {line}' for line in flatten_errors(exc.errors))
        raise CommandError(f'{path}: invalid scenario\n{lines}') from exc
    except OSError as exc:
        raise CommandError(f'{path}: {exc.strerror or exc}') from exc
    except HoneyMeshError as exc:
        raise CommandError(f'{path}: {exc}') from exc
    return cfg


def format_optional(values: list[int | None]) -> str:
    return ', '.join('-' if value is None else str(value) for value in values) or '-'
