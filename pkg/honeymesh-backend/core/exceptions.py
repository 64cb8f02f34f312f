"""
Exceptions raised by the HoneyMesh simulator.

Everything derives from ``HoneyMeshError`` so management commands can
turn any simulator failure into a ``CommandError`` with a single
``except`` clause. Errors that happen *inside* a run (unroutable
packets, queue overflows) are counted as drops and never escape
``run_scenario``.
"""
from __future__ import annotations


class HoneyMeshError(Exception):
    """Base class for all simulator errors."""


class SchedulingInPast(HoneyMeshError):
    def __init__(self, at: int, now: int) -> None:
        super().__init__(f'cannot schedule an event at t={at} when now={now}')
        self.at = at
        self.now = now


class NoRoute(HoneyMeshError):
    def __init__(self, node: str, destination: object) -> None:
        super().__init__(f'{node} has no route toward {destination}')
        self.node = node
        self.destination = destination


class InvalidTarget(HoneyMeshError):
    """A redirect target is not a honey-farm host."""


class InvalidScenario(HoneyMeshError):
    """An attack scenario or legit profile is internally inconsistent."""


class InsufficientSample(HoneyMeshError):
    def __init__(self, available: int, required: int) -> None:
        super().__init__(f'baseline needs {required} requests, got {available}')
        self.available = available
        self.required = required


class ChallengeOutstanding(HoneyMeshError):
    """A source already has an unanswered challenge."""


class NotOperational(HoneyMeshError):
    """A honey VM cannot engage in its current lifecycle state."""


class LifecycleError(HoneyMeshError):
    """A honey VM was asked to make a transition outside its lifecycle graph."""


class ConfigParseError(HoneyMeshError):
    def __init__(self, message: str, line: int, column: int) -> None:
        super().__init__(f'line {line}, column {column}: {message}')
        self.line = line
        self.column = column


class ConfigValidationError(HoneyMeshError):
    """Raised with the DRF error mapping (field path -> messages)."""

    def __init__(self, errors: object) -> None:
        super().__init__(f'invalid scenario configuration: {errors}')
        self.errors = errors


class UnknownAxis(HoneyMeshError):
    """A sweep axis does not name a numeric configuration field."""


class ReportFormatError(HoneyMeshError):
    """A report or trace file cannot be written or parsed."""
