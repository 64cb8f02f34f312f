"""
Report and trace files.

The trace is newline-delimited JSON, one record per line with sorted
keys, in the order the run produced them. Reports are written either as
JSON (field names and order of ``MetricsReport``) or as long-form CSV
with the fixed columns ``metric,index,value``: scalars leave ``index``
empty, lists use the position and maps the key. An empty ``value``
stands for null. Floats are written with ``repr`` so both formats
round-trip exactly.
"""
from __future__ import annotations

import csv
import io
import json
import logging
from collections.abc import Iterable
from dataclasses import fields
from pathlib import Path
from typing import Any

from rest_framework import serializers

from .exceptions import ReportFormatError
from .metrics import MetricsReport
from .serializers import ReportSerializer

logger = logging.getLogger(__name__)

CSV_COLUMNS = ('metric', 'index', 'value')
FORMATS = ('json', 'csv')

REPORT_FIELDS = [f.name for f in fields(MetricsReport)]
LIST_FIELDS = {
    name for name, field in ReportSerializer().fields.items() if isinstance(field, serializers.ListField)
}
MAP_FIELDS = {
    name for name, field in ReportSerializer().fields.items() if isinstance(field, serializers.DictField)
}


# -- trace -----------------------------------------------------------------------


def dump_record(record: dict[str, Any]) -> str:
    return json.dumps(record, sort_keys=True, separators=(',', ':'))


def write_trace(records: Iterable[dict[str, Any]], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open('w', encoding='utf-8', newline='\n') as handle:
        for record in records:
            handle.write(dump_record(record))
            handle.write('\n')
    return path


def read_trace(path: str | Path) -> list[dict[str, Any]]:
    records = []
    with Path(path).open(encoding='utf-8') as handle:
        for number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ReportFormatError(f'{path}:{number}: {exc.msg}') from None
    return records


# -- reports -----------------------------------------------------------------


def report_to_json(report: MetricsReport) -> str:
    return json.dumps(ReportSerializer(report).data, indent=2) + '\n'


def _cell(value: Any) -> str:
    if value is None:
        return ''
    if isinstance(value, float):
        return repr(value)
    return str(value)


def report_to_csv(report: MetricsReport) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(CSV_COLUMNS)
    for name in REPORT_FIELDS:
        value = getattr(report, name)
        if name in LIST_FIELDS:
            writer.writerows((name, index, _cell(item)) for index, item in enumerate(value))
        elif name in MAP_FIELDS:
            writer.writerows((name, key, _cell(item)) for key, item in sorted(value.items()))
        else:
            writer.writerow((name, '', _cell(value)))
    return buffer.getvalue()


def emit_report(report: MetricsReport, fmt: str, path: str | Path) -> Path:
    if fmt not in FORMATS:
        raise ReportFormatError(f'unknown report format {fmt!r}')
    text = report_to_json(report) if fmt == 'json' else report_to_csv(report)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding='utf-8')
    return path


def _validated(data: dict[str, Any]) -> MetricsReport:
    serializer = ReportSerializer(data=data)
    if not serializer.is_valid():
        raise ReportFormatError(f'invalid report: {serializer.errors}')
    return MetricsReport(**serializer.validated_data)


def report_from_json(text: str) -> MetricsReport:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ReportFormatError(f'line {exc.lineno}: {exc.msg}') from None
    return _validated(data)


def report_from_csv(text: str) -> MetricsReport:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != CSV_COLUMNS:
        raise ReportFormatError(f'CSV header must be {",".join(CSV_COLUMNS)}')
    data: dict[str, Any] = {name: [] for name in LIST_FIELDS}
    data.update({name: {} for name in MAP_FIELDS})
    for number, row in enumerate(rows[1:], start=2):
        if len(row) != len(CSV_COLUMNS):
            raise ReportFormatError(f'row {number} has {len(row)} columns')
        metric, index, value = row
        cell = None if value == '' else value
        if metric in LIST_FIELDS:
            if index != str(len(data[metric])):
                raise ReportFormatError(f'row {number}: {metric} index {index!r} out of order')
            data[metric].append(cell)
        elif metric in MAP_FIELDS:
            data[metric][index] = cell
        else:
            data[metric] = cell
    return _validated(data)


def parse_report(path: str | Path, fmt: str | None = None) -> MetricsReport:
    path = Path(path)
    fmt = fmt or path.suffix.lstrip('.')
    text = path.read_text(encoding='utf-8')
    if fmt == 'json':
        return report_from_json(text)
    if fmt == 'csv':
        return report_from_csv(text)
    raise ReportFormatError(f'unknown report format {fmt!r}')
