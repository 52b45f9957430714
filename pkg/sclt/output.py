"""
Result files and configuration files.

CSV floats carry 17 significant digits and JSON floats their shortest round-trip
form, so equal results always produce identical bytes.
"""

import csv
import io
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np
from typing_extensions import Any, Dict, Iterable, List, Literal, Mapping, Optional, Sequence, TypeAlias, Union

from .batches import SampleBatch
from .distances import DistanceReport
from .errors import ConfigError

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1

OutputFormat: TypeAlias = Literal["csv", "json"]
PathLike: TypeAlias = Union[str, Path]
Row: TypeAlias = Mapping[str, Any]

REPORT_HEADER = (
    "stage_a", "stage_b", "estimator", "value", "uncertainty", "L", "M", "R", "F", "T", "seed", "N", "theory_shape",
    "flags",
)


def report_row(report: DistanceReport) -> Dict[str, Any]:
    """The CSV columns of one distance report."""

    return {
        "stage_a": report.pair[0],
        "stage_b": report.pair[1],
        "estimator": report.estimator,
        "value": report.value,
        "uncertainty": report.uncertainty,
        "L": report.params.get("L", math.nan),
        "M": report.params.get("M", math.nan),
        "R": report.params.get("R", math.nan),
        "F": report.params.get("F", math.nan),
        "T": report.T if report.T is not None else math.nan,
        "seed": report.seed,
        "N": report.N,
        "theory_shape": report.theory_shape,
        "flags": "|".join(report.flags),
    }


def format_value(value: Any) -> str:
    """
    Text of one CSV cell.

    >>> format_value(0.1)
    '0.10000000000000001'
    >>> format_value(None), format_value(True), format_value(3)
    ('', 'true', '3')
    """

    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"

    return str(value)


def plain(value: Any) -> Any:
    """
    Convert numpy values, tuples and dataclass-free containers to JSON-ready values.
    Non-finite floats become ``None``.

    >>> plain([1.5, float("nan"), float("inf")])
    [1.5, None, None]
    """

    if isinstance(value, np.ndarray):
        return [plain(item) for item in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return float(value) if math.isfinite(value) else None
    if isinstance(value, (complex, np.complexfloating)):
        return [plain(value.real), plain(value.imag)]
    if isinstance(value, Mapping):
        return {str(key): plain(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [plain(item) for item in value]

    return value


def _rows(reports: Iterable[Union[DistanceReport, Row]]) -> List[Row]:
    return [report_row(item) if isinstance(item, DistanceReport) else item for item in reports]


def render_csv(rows: Sequence[Row], header: Sequence[str]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_value(row.get(column)) for column in header])

    return buffer.getvalue()


def render_json(document: Mapping[str, Any]) -> str:
    body: Dict[str, Any] = {"schema_version": SCHEMA_VERSION}
    body.update(plain(document))
    return json.dumps(body, indent=2, allow_nan=False) + "\n"


def write_text(text: str, path: Optional[PathLike]) -> None:
    """
    Write ``text`` to ``path``; ``None`` or ``-`` means standard output.

    :raises OSError: with the path in the message
    """

    if path is None or str(path) == "-":
        sys.stdout.write(text)
        return

    try:
        with open(path, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
    except OSError as error:
        raise OSError(error.errno, f"Cannot write results to {path}: {error.strerror}") from None

    logger.info(f"Wrote {len(text)} bytes to {path}")


def emit(
    reports: Iterable[Union[DistanceReport, Row]],
    output_format: OutputFormat,
    path: Optional[PathLike],
    header: Optional[Sequence[str]] = None,
    kind: str = "distances",
    meta: Optional[Mapping[str, Any]] = None,
) -> None:
    """
    Write distance reports or plain rows.

    CSV gets a header line even without rows; JSON is an object with
    ``schema_version``, ``kind``, ``rows`` and an optional ``meta``.

    :param reports: reports or rows
    :param output_format: csv or json
    :param path: destination, ``None`` or ``-`` for standard output
    :param header: CSV columns, default the distance report columns
    :param kind: label stored in JSON output
    :param meta: extra JSON fields
    """

    rows = _rows(reports)
    columns = tuple(header) if header is not None else REPORT_HEADER

    if output_format == "csv":
        text = render_csv(rows, columns)
    elif output_format == "json":
        document: Dict[str, Any] = {"kind": kind, "rows": [{key: row.get(key) for key in columns} for row in rows]}
        if meta:
            document["meta"] = meta
        text = render_json(document)
    else:
        raise ConfigError(f"Unsupported format: '{output_format}'")

    write_text(text, path)


def batch_rows(batches: Mapping[str, SampleBatch]) -> List[Dict[str, Any]]:
    """One CSV row per (stage, sample) with the coordinates as x0, x1, ..."""

    rows = []
    for stage, batch in batches.items():
        excluded = batch.excluded()
        for index in range(batch.n):
            row: Dict[str, Any] = {"stage": stage, "row": index, "excluded": bool(excluded[index])}
            row.update({f"x{j}": float(batch.data[index, j]) for j in range(batch.N)})
            rows.append(row)

    return rows


def emit_batches(batches: Mapping[str, SampleBatch], output_format: OutputFormat, path: Optional[PathLike]) -> None:
    """
    Write sampled stages; JSON keeps each batch's metadata, including the digest of
    the shared heights.
    """

    width = max((batch.N for batch in batches.values()), default=0)
    header = ("stage", "row", "excluded") + tuple(f"x{j}" for j in range(width))

    if output_format == "csv":
        write_text(render_csv(batch_rows(batches), header), path)
        return

    document = {
        "kind": "samples",
        "stages": {
            stage: {
                "data": batch.data,
                "excluded": batch.excluded(),
                "seed": batch.seed,
                "meta": batch.meta,
            }
            for stage, batch in batches.items()
        },
    }
    write_text(render_json(document), path)


def emit_document(document: Mapping[str, Any], path: Optional[PathLike]) -> None:
    """Write a JSON document with the schema version."""

    write_text(render_json(document), path)


def load(path: PathLike) -> Union[Dict[str, Any], List[Dict[str, str]]]:
    """
    Read a result file back: JSON as a mapping, CSV as a list of string rows.

    :param path: a file written by ``emit``
    :returns: the parsed content
    """

    try:
        with open(path, encoding="utf-8", newline="") as handle:
            text = handle.read()
    except OSError as error:
        raise OSError(error.errno, f"Cannot read {path}: {error.strerror}") from None

    if str(path).endswith(".json"):
        parsed: Dict[str, Any] = json.loads(text)
        return parsed

    return [dict(row) for row in csv.DictReader(io.StringIO(text))]


def load_config(path: PathLike) -> Dict[str, Any]:
    """
    Read an experiment configuration.

    :param path: JSON file with ``schema_version`` 1
    :returns: the configuration mapping
    :raises ConfigError: on malformed JSON or a schema mismatch
    """

    try:
        with open(path, encoding="utf-8") as handle:
            config = json.load(handle)
    except json.JSONDecodeError as error:
        raise ConfigError(f"Malformed configuration {path}: {error}") from None
    except OSError as error:
        raise OSError(error.errno, f"Cannot read configuration {path}: {error.strerror}") from None

    if not isinstance(config, dict):
        raise ConfigError(f"Configuration {path} must be a JSON object")
    if config.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"Configuration {path} has schema_version {config.get('schema_version')}, expected 1")

    return config
