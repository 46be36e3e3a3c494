"""
CSV and JSON artifacts. Floats are written with repr (shortest round-trip form), so
loading a saved file gives back bit-identical values. Metadata travels as
`# key=value` comment lines above the header.
"""
import csv
import io
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, Iterable, List, Sequence, Tuple, Union

import numpy as np

from fringe_analysis.models import FringeScan, VisibilityCurve
from spin_echo.exceptions import InvalidArgumentError, ParseError
from spin_echo.utils import config_hash

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
Rows = List[Tuple[int, Tuple[float, ...]]]

SCAN_COLUMNS = ("tau2_s", "counts")
CURVE_COLUMNS = ("separation_s", "visibility", "error")
MANIFEST_NAME = "manifest.json"


def save_scan(scan: FringeScan, path: PathLike) -> None:
    rows = zip(scan.delays, scan.counts)
    _write_csv(path, scan.metadata, SCAN_COLUMNS, rows)


def load_scan(path: PathLike) -> FringeScan:
    metadata, rows = _read_csv(path, SCAN_COLUMNS)
    delays = np.array([row[0] for _, row in rows])
    counts = np.array([row[1] for _, row in rows])

    for (line_number, row), previous in zip(rows[1:], delays[:-1]):
        if not row[0] > previous:
            raise ParseError(
                f"tau2_s must be strictly increasing, got {row[0]!r} after"
                f" {previous!r}",
                line_number,
            )
    for line_number, row in rows:
        if not math.isfinite(row[1]) or row[1] < 0:
            raise ParseError(
                f"counts must be finite and non-negative, got {row[1]!r}", line_number,
            )

    if "separation" in metadata:
        try:
            separation = float(metadata["separation"])
        except ValueError:
            raise ParseError(
                f"separation metadata is not a number: {metadata['separation']!r}"
            )
    else:
        separation = float((delays[0] + delays[-1]) / 2)
        logger.info(
            f"{path} carries no separation metadata; using the scan centre"
            f" {separation!r} s"
        )

    try:
        return FringeScan(
            delays=delays, counts=counts, separation=separation, metadata=metadata,
        )
    except InvalidArgumentError as e:
        raise ParseError(str(e))


def save_curve(
    curve: VisibilityCurve, path: PathLike, metadata: Dict[str, str] = None,
) -> None:
    errors = curve.errors if curve.errors is not None else np.full(len(curve), math.nan)
    visibilities = np.where(curve.valid, curve.visibilities, math.nan)
    errors = np.where(curve.valid, errors, math.nan)
    rows = zip(curve.separations, visibilities, errors)
    _write_csv(path, metadata or {}, CURVE_COLUMNS, rows)


def load_curve(path: PathLike) -> VisibilityCurve:
    """
    Rows with a NaN visibility are failed points. A file whose valid rows all lack
    errors has no errors.
    """
    metadata, rows = _read_csv(path, CURVE_COLUMNS)
    separations = np.array([row[0] for _, row in rows])
    visibilities = np.array([row[1] for _, row in rows])
    errors = np.array([row[2] for _, row in rows])
    valid = np.isfinite(visibilities)

    for line_number, row in rows:
        separation, visibility, error = row
        if not math.isfinite(separation) or separation < 0:
            raise ParseError(
                f"separation_s must be finite and non-negative, got {separation!r}",
                line_number,
            )
        if math.isfinite(visibility) and not 0 <= visibility <= 1:
            raise ParseError(
                f"visibility must lie in [0, 1], got {visibility!r}", line_number,
            )
        if math.isfinite(visibility) and math.isfinite(error) and not error > 0:
            raise ParseError(f"error must be positive, got {error!r}", line_number)

    valid_errors = errors[valid]
    if not np.all(np.isfinite(valid_errors)):
        if np.any(np.isfinite(valid_errors)):
            line_number = next(
                n
                for n, row in rows
                if math.isfinite(row[1]) and not math.isfinite(row[2])
            )
            raise ParseError(
                "error missing on a valid row while other rows carry errors",
                line_number,
            )
        errors = None

    return VisibilityCurve(
        separations=separations, visibilities=visibilities, errors=errors, valid=valid,
    )


def write_json(payload: Dict[str, Any], path: PathLike) -> None:
    """Sorted keys, two-space indent, non-finite floats as null."""
    text = json.dumps(_json_safe(payload), indent=2, sort_keys=True, allow_nan=False)
    Path(path).write_text(text + "\n", encoding="utf-8")


def write_manifest(
    out_dir: PathLike, subcommand: str, resolved: Dict[str, Any], **extra: Any,
) -> Path:
    """
    Echoes the fully resolved configuration. No wall-clock fields, so reruns are
    byte-identical.
    """
    payload = {
        "subcommand": subcommand,
        "config": resolved,
        "config_hash": config_hash(resolved),
    }
    payload.update(extra)
    path = Path(out_dir) / MANIFEST_NAME
    write_json(payload, path)
    return path


def write_rows(
    path: PathLike, columns: Sequence[str], rows: Iterable[Sequence[float]],
) -> None:
    _write_csv(path, {}, columns, rows)


def _write_csv(
    path: PathLike,
    metadata: Dict[str, str],
    columns: Sequence[str],
    rows: Iterable[Sequence[Any]],
) -> None:
    buffer = io.StringIO()
    for key, value in metadata.items():
        buffer.write(f"# {key}={value}\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_format(value) for value in row])
    Path(path).write_text(buffer.getvalue(), encoding="utf-8", newline="")


def _read_csv(path: PathLike, columns: Sequence[str]) -> Tuple[Dict[str, str], Rows]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ParseError(f"cannot read {path}: {e}")
    if not text.strip():
        raise ParseError("empty file")

    metadata: Dict[str, str] = {}
    header = None
    rows: Rows = []

    for line_number, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            key, separator, value = stripped[1:].partition("=")
            if separator:
                metadata[key.strip()] = value.strip()
            continue

        fields = next(csv.reader([stripped]))
        if header is None:
            header = [field.strip() for field in fields]
            missing = [column for column in columns if column not in header]
            if missing:
                raise ParseError(
                    f"missing column(s) {', '.join(missing)}", line_number,
                )
            continue

        if len(fields) != len(header):
            raise ParseError(
                f"expected {len(header)} fields, got {len(fields)}", line_number,
            )
        try:
            values = {name: float(field) for name, field in zip(header, fields)}
        except ValueError:
            raise ParseError(f"non-numeric value in {stripped!r}", line_number)
        rows.append((line_number, tuple(values[column] for column in columns)))

    if header is None:
        raise ParseError("no header row")
    if not rows:
        raise ParseError("no data rows")
    return metadata, rows


def _format(value: Any) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _json_safe(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(key): _json_safe(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(item) for item in value]
    if isinstance(value, np.ndarray):
        return _json_safe(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return float(value) if math.isfinite(value) else None
    return value
