import json
import subprocess
import sys

import pytest

from pstokes.cli import COMMANDS, main, run, validate_config, ConfigInvalid

GRID8 = {"dim": 3, "points_per_axis": 8}
GRID16 = {"dim": 3, "points_per_axis": 16}

# one documented fixture per exit status
FIXTURES = {
    0: {"command": "verify", "grid": GRID8, "p": 2.0, "mu": 0.0,
        "checks": [{"name": "monotonicity", "n_samples": 2000}, "hessian", "embeddings"]},
    1: {"command": "verify", "p": 1.6,
        "checks": [{"name": "monotonicity", "n_samples": 20000, "factor": 2.0}]},
    2: {"command": "cascade", "grid": {"dim": 3, "points_per_axis": 7}, "p": 3.0},
    3: {"command": "solve", "grid": GRID8, "p": 1.5, "mu": 0.01,
        "tolerances": {"max_picard": 2, "inner_tol": 1e-14},
        "forcing": {"name": "taylor_green", "amplitude": 100.0}},
}


def _read(path):
    return json.loads(path.read_text())


class TestExitCodes:
    @pytest.mark.parametrize("code", sorted(FIXTURES))
    def test_fixture(self, tmp_path, code):
        assert run(FIXTURES[code], tmp_path) == code
        if code == 2:
            doc = _read(tmp_path / "validation.json")
            assert doc["valid"] is False and len(doc["errors"]) >= 2
        else:
            assert _read(tmp_path / "manifest.json")["exit_code"] == code

    def test_verify_p2_all_pass_csv(self, tmp_path):
        assert run(FIXTURES[0], tmp_path) == 0
        rows = (tmp_path / "reports.csv").read_text().splitlines()[1:]
        assert rows and all(",false," not in r for r in rows)

    def test_main_with_file(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps(FIXTURES[2]))
        assert main(["--config", str(cfg), "--out", str(tmp_path / "o")]) == 2

    def test_unreadable_config(self, tmp_path):
        assert main(["--config", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 2
        assert (tmp_path / "validation.json").exists()


class TestValidation:
    def test_collects_all_errors(self):
        with pytest.raises(ConfigInvalid) as exc:
            validate_config({"command": "nope", "bogus": 1, "seed": -1})
        assert len(exc.value.errors) >= 3

    def test_verify_needs_checks(self):
        with pytest.raises(ConfigInvalid):
            validate_config({"command": "verify"})

    def test_defaults(self):
        cfg = validate_config({"command": "cascade", "grid": GRID8})
        assert cfg.tolerances["inner_tol"] == 1e-9 and cfg.p == 2.0


class TestArtifacts:
    def test_cascade_outputs(self, tmp_path):
        doc = {"command": "cascade", "grid": GRID16, "p": 2.0, "mu": 1.0}
        assert run(doc, tmp_path) == 0
        for name in ("u.pstk", "pi.pstk", "diagnostics.json", "manifest.json"):
            assert (tmp_path / name).exists()
        man = _read(tmp_path / "manifest.json")
        assert man["config"]["command"] == "cascade" and "numpy" in man["versions"]
        assert man["wall_time_s"] >= 0

    def test_infeasible_admissibility_warns(self, tmp_path):
        doc = {"command": "cascade", "grid": GRID8, "p": 1.9, "mu": 0.1, "q": 4.0,
               "schedule": {"geometric": {"ratio": 0.5}}}
        assert run(doc, tmp_path) == 0
        man = _read(tmp_path / "manifest.json")
        assert man["admissibility"]["feasible"] is False
        assert any("admissibility" in w for w in man["warnings"])

    def test_cz_estimate(self, tmp_path):
        doc = {"command": "cz-estimate", "grid": GRID8, "cz": {"s": [2.0, 4.0], "n_iters": 20}}
        assert run(doc, tmp_path) == 0
        table = _read(tmp_path / "cz_table.json")
        assert table["s"] == [2.0, 4.0] and table["H"][0] <= 1 + 1e-6

    def test_sweep(self, tmp_path):
        doc = {"command": "sweep", "grid": GRID8, "sweep": {"p": [1.95, 1.9], "mu": [0.1, 0.01]},
               "check_admissibility": False}
        assert run(doc, tmp_path) == 0
        rows = _read(tmp_path / "sweep.json")
        assert len(rows) == 4 and all(r["exit_code"] == 0 for r in rows)
        assert len(list(tmp_path.glob("run_*/manifest.json"))) == 4
        assert len((tmp_path / "sweep.csv").read_text().splitlines()) == 5


class TestDeterminism:
    @pytest.mark.parametrize("doc", [
        {"command": "cascade", "grid": GRID8, "p": 1.8, "mu": 0.0,
         "forcing": {"name": "random_band_limited"}, "seed": 5, "check_admissibility": False},
        {"command": "verify", "grid": GRID8, "p": 1.9, "mu": 1.0, "seed": 3,
         "checks": [{"name": "monotonicity", "n_samples": 5000}, "hessian", "embeddings"]},
    ])
    def test_byte_identical(self, tmp_path, doc):
        assert run(doc, tmp_path / "a") == run(doc, tmp_path / "b")
        names = ("diagnostics.json", "reports.json", "reports.csv")
        found = 0
        for name in names:
            a, b = tmp_path / "a" / name, tmp_path / "b" / name
            if a.exists():
                found += 1
                assert a.read_bytes() == b.read_bytes()
        assert found
        ma, mb = _read(tmp_path / "a" / "manifest.json"), _read(tmp_path / "b" / "manifest.json")
        for m in (ma, mb):
            m.pop("timestamp"), m.pop("wall_time_s")
        assert ma == mb


def test_help_lists_flags():
    out = subprocess.run([sys.executable, "-m", "pstokes.cli", "--help"],
                         capture_output=True, text=True, check=True).stdout
    for flag in ("--config", "--seed", "--out", "--threads", "--command", "PSTOKES_THREADS"):
        assert flag in out
    assert set(COMMANDS) <= set(out.replace(",", " ").replace("{", " ").replace("}", " ").split())
