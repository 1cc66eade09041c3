"""JSON and CSV report files.

Reports are written canonically (sorted keys, fixed float formatting, LF
line endings) so that identical runs give byte-identical files.
"""

from __future__ import annotations

import csv
import io
import json
import math
from collections.abc import Iterable, Mapping, Sequence
from pathlib import Path
from typing import Any

import numpy as np


def to_jsonable(obj: Any) -> Any:
    """Convert numpy values, complex numbers and tuples to plain JSON types.

    Complex numbers become ``[re, im]``; non-finite floats become strings.
    """
    if isinstance(obj, Mapping):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [to_jsonable(float(obj.real)), to_jsonable(float(obj.imag))]
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        return value if math.isfinite(value) else repr(value)
    return obj


def worst_residual(values: Iterable[float]) -> float:
    """Largest of ``values`` and zero, with NaN outranking every number."""
    worst = 0.0
    for value in values:
        value = float(value)
        if math.isnan(value):
            return math.nan
        worst = max(worst, value)
    return worst


def dumps_report(data: Mapping[str, Any]) -> str:
    return json.dumps(to_jsonable(data), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def write_json(path: str | Path, data: Mapping[str, Any]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_report(data), encoding="utf-8", newline="\n")
    return path


def load_report(path: str | Path) -> dict[str, Any]:
    """Read a JSON report.

    Raises:
        ValueError: If the file cannot be read or is not a JSON object.
    """
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise ValueError(f"cannot read report {path}: {e.strerror or e}") from e
    except json.JSONDecodeError as e:
        raise ValueError(f"report {path} is not valid JSON: {e}") from e
    if not isinstance(data, dict):
        raise ValueError(f"report {path} must contain a JSON object")
    return data


def dumps_csv(rows: Iterable[Mapping[str, Any]], fieldnames: Sequence[str]) -> str:
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=list(fieldnames), lineterminator="\n", extrasaction="ignore")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: repr(float(v)) if isinstance(v, (float, np.floating)) else v for k, v in row.items()})
    return buffer.getvalue()


def write_csv(path: str | Path, rows: Iterable[Mapping[str, Any]], fieldnames: Sequence[str]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_csv(rows, fieldnames), encoding="utf-8", newline="\n")
    return path


def csv_path_for(json_path: str | Path) -> Path:
    """``report.json`` → ``report.csv``."""
    return Path(json_path).with_suffix(".csv")
