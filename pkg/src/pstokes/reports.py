"""JSON and CSV export of check reports and solve diagnostics.

Output is deterministic: keys are sorted, rows keep input order, and floats
are written with 17 significant digits so CSV and JSON round-trip exactly.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

from .errors import ContractError
from .verify import CheckReport

__all__ = ["CSV_COLUMNS", "emit_report", "dumps_json", "reports_to_csv", "reports_from_csv",
           "reports_from_json"]

CSV_COLUMNS = ("name", "lhs", "rhs", "constant", "margin", "pass", "samples", "seed",
               "status", "statement")
_FLOATS = ("lhs", "rhs", "constant", "margin")


def _fmt(x: float) -> str:
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def dumps_json(obj) -> str:
    """Deterministic JSON text (sorted keys, two-space indent, trailing newline)."""
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _as_rows(results) -> list:
    return [r.to_json() if isinstance(r, CheckReport) else dict(r) for r in results]


def reports_to_csv(rows: list) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for row in rows:
        out = []
        for col in CSV_COLUMNS:
            v = row.get(col)
            if col in _FLOATS:
                out.append(_fmt(float(v)))
            elif col == "pass":
                out.append("" if v is None else ("true" if v else "false"))
            elif v is None:
                out.append("")
            else:
                out.append(str(v))
        w.writerow(out)
    return buf.getvalue()


def reports_from_csv(text: str) -> list:
    """Parse CSV produced by :func:`reports_to_csv` back to JSON-ready rows."""
    rows = []
    for rec in csv.DictReader(io.StringIO(text)):
        row = {"name": rec["name"], "status": rec["status"], "statement": rec["statement"]}
        for col in _FLOATS:
            row[col] = float(rec[col])
        row["pass"] = None if rec["pass"] == "" else rec["pass"] == "true"
        row["samples"] = int(rec["samples"])
        row["seed"] = None if rec["seed"] == "" else int(rec["seed"])
        rows.append(row)
    return rows


def reports_from_json(text: str) -> list:
    return json.loads(text)


def emit_report(results, fmt: str, path) -> Path:
    """Write ``results`` (check reports or diagnostics dicts) as ``json`` or ``csv``.

    Diagnostics dicts without the report columns can only be written as JSON.
    """
    results = list(results)
    if not results:
        raise ContractError("emit_report needs at least one result")
    rows = _as_rows(results)
    if fmt == "json":
        text = dumps_json(rows)
    elif fmt == "csv":
        missing = [c for c in CSV_COLUMNS if c not in rows[0]]
        if missing:
            raise ContractError(f"rows lack report columns {missing}; use json")
        text = reports_to_csv(rows)
    else:
        raise ContractError(f"unknown report format {fmt!r}")
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write report to {path}: {exc}") from exc
    return path
