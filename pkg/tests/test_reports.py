import json
import math

import numpy as np
import pytest

from pstokes.errors import ContractError
from pstokes.reports import (
    CSV_COLUMNS,
    dumps_json,
    emit_report,
    reports_from_csv,
    reports_from_json,
    reports_to_csv,
)
from pstokes.verify import CheckReport


def _batch(n=50, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        if i % 10 == 9:
            out.append(CheckReport(f"gated_{i}", math.nan, math.nan, 0.5, math.nan, None,
                                   status="gated", statement="gate"))
            continue
        lhs, rhs = rng.standard_normal(2) * 10.0 ** rng.integers(-12, 12, 2)
        out.append(CheckReport(f"check_{i}", float(lhs), float(rhs), float(rng.random()),
                               float(rhs - lhs), True, int(rng.integers(1, 10**6)),
                               int(i), "checked", "a, b \"quoted\""))
    return out


class TestRoundTrip:
    def test_json_csv_json(self, tmp_path):
        reps = _batch()
        emit_report(reps, "json", tmp_path / "r.json")
        rows = reports_from_json((tmp_path / "r.json").read_text())
        back = reports_from_csv(reports_to_csv(rows))
        assert dumps_json(back) == dumps_json(rows)

    def test_float_bits_preserved(self):
        x = 0.1 + 0.2
        rows = reports_from_csv(reports_to_csv([CheckReport("a", x, 1 / 3, math.pi, 1e-300, True).to_json()]))
        assert rows[0]["lhs"] == x and rows[0]["rhs"] == 1 / 3 and rows[0]["margin"] == 1e-300

    def test_single_pass_row(self, tmp_path):
        path = emit_report([CheckReport("ok", 1.0, 2.0, 1.0, 1.0, True)], "csv", tmp_path / "r.csv")
        lines = path.read_text().splitlines()
        assert lines[0].split(",") == list(CSV_COLUMNS)
        assert len(lines) == 2 and ",true," in lines[1]


class TestErrors:
    def test_empty(self, tmp_path):
        with pytest.raises(ContractError):
            emit_report([], "json", tmp_path / "x.json")

    def test_unknown_format(self, tmp_path):
        with pytest.raises(ContractError):
            emit_report(_batch(1), "xml", tmp_path / "x")

    def test_diagnostics_need_json(self, tmp_path):
        with pytest.raises(ContractError):
            emit_report([{"residual": 1.0}], "csv", tmp_path / "x.csv")
        path = emit_report([{"residual": 1.0}], "json", tmp_path / "x.json")
        assert json.loads(path.read_text()) == [{"residual": 1.0}]

    def test_io_error_has_path(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("")
        with pytest.raises(OSError, match="file"):
            emit_report(_batch(1), "json", blocker / "sub" / "r.json")


def test_deterministic_text():
    a = dumps_json([r.to_json() for r in _batch(seed=3)])
    b = dumps_json([r.to_json() for r in _batch(seed=3)])
    assert a == b and a.endswith("\n")
