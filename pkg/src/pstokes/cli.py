"""Command-line batch front end.

A run is described by a JSON configuration::

    {
      "command": "cascade",
      "grid": {"dim": 3, "points_per_axis": 32, "box_length": 6.283185307179586},
      "p": 1.9,
      "mu": 1e-4,
      "schedule": {"geometric": {"mu_start": 1.0, "ratio": 0.5}},
      "tolerances": {"inner_tol": 1e-9, "max_picard": 500, "weak_tol": 1e-6},
      "forcing": {"name": "taylor_green"},
      "seed": 0
    }

``forcing`` is either a named profile (see :mod:`pstokes.forcings`) or
``{"file": path}`` pointing to a field written by
:func:`pstokes.fields.write_field`.  ``schedule`` is either explicit sequences
(the keys of :class:`pstokes.solver.CascadeSchedule`) or a ``geometric`` block
whose keys are the keyword arguments of
:meth:`CascadeSchedule.geometric`; ``mu_end`` defaults to ``mu``.

Exit status: 0 success, 1 a requested check failed, 2 invalid configuration
(a ``validation.json`` report is written), 3 a solve diverged.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import platform
import sys
import time
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np
import scipy

from . import __version__, kernels
from .errors import DivergenceError, PStokesError
from .fields import THREADS_ENV, build_grid, read_field, set_threads, write_field
from .forcings import make_forcing
from .nonlinearity import RegParams, StressParams
from .potentials import CZ_METHODS, admissibility, build_cz_table, required_exponents
from .reports import dumps_json, emit_report
from .solver import CascadeSchedule, cascade, solve_regularized, weak_solve
from .verify import (
    check_embeddings,
    check_hessian_inequalities,
    check_monotonicity,
    check_solution_estimates,
    check_uniqueness,
    compact_random_field,
)

__all__ = ["COMMANDS", "RunConfig", "validate_config", "run", "main"]

log = logging.getLogger(__name__)

COMMANDS = ("solve", "cascade", "verify", "cz-estimate", "sweep")
CHECKS = ("monotonicity", "hessian", "embeddings", "solution_estimates", "uniqueness")

EXIT_OK, EXIT_CHECK_FAILED, EXIT_INVALID, EXIT_DIVERGED = 0, 1, 2, 3


class ConfigInvalid(Exception):
    def __init__(self, errors):
        super().__init__("; ".join(errors))
        self.errors = list(errors)


@dataclass
class RunConfig:
    command: str
    grid: dict | None = None
    p: float = 2.0
    mu: float = 0.0
    schedule: dict = dc_field(default_factory=dict)
    tolerances: dict = dc_field(default_factory=dict)
    forcing: dict = dc_field(default_factory=lambda: {"name": "single_mode"})
    seed: int = 0
    q: float = 4.0
    checks: list = dc_field(default_factory=list)
    cz: dict = dc_field(default_factory=dict)
    sweep: dict = dc_field(default_factory=dict)
    check_admissibility: bool = True

    def to_json(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


_DEFAULT_TOL = {"inner_tol": 1e-9, "max_picard": 500, "weak_tol": 1e-6}


def validate_config(doc: dict) -> RunConfig:
    """Return a :class:`RunConfig` or raise :class:`ConfigInvalid` listing every problem."""
    errors = []
    if not isinstance(doc, dict):
        raise ConfigInvalid(["configuration must be a JSON object"])
    known = set(RunConfig.__dataclass_fields__)
    for key in sorted(set(doc) - known):
        errors.append(f"unknown key {key!r}")
    command = doc.get("command")
    if command not in COMMANDS:
        errors.append(f"command must be one of {list(COMMANDS)}, got {command!r}")
    grid = doc.get("grid")
    if command != "verify" or "grid" in doc:
        if not isinstance(grid, dict):
            errors.append("grid must be an object {dim, points_per_axis, box_length}")
        else:
            try:
                build_grid(grid.get("dim", 3), grid.get("points_per_axis", 0),
                           grid.get("box_length", 2 * math.pi))
            except (PStokesError, TypeError, ValueError) as exc:
                errors.append(f"grid: {exc}")
    p = doc.get("p", 2.0)
    mu = doc.get("mu", 0.0)
    try:
        StressParams(float(p), float(mu))
    except (PStokesError, TypeError, ValueError) as exc:
        errors.append(f"stress parameters: {exc}")
    seed = doc.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        errors.append("seed must be a non-negative integer")
    forcing = doc.get("forcing", {"name": "single_mode"})
    if not isinstance(forcing, dict) or not ("name" in forcing or "file" in forcing):
        errors.append("forcing must be {name: ...} or {file: ...}")
    for key in doc.get("tolerances", {}):
        if key not in _DEFAULT_TOL:
            errors.append(f"unknown tolerance {key!r}")
    checks = doc.get("checks", [])
    if command == "verify":
        if not checks:
            errors.append("verify needs a nonempty checks list")
        for c in checks:
            name = c.get("name") if isinstance(c, dict) else c
            if name not in CHECKS:
                errors.append(f"unknown check {name!r}; choose from {list(CHECKS)}")
    if command == "cz-estimate":
        method = doc.get("cz", {}).get("method", "power_iteration")
        if method not in CZ_METHODS:
            errors.append(f"cz.method must be one of {list(CZ_METHODS)}")
        if not doc.get("cz", {}).get("s"):
            errors.append("cz-estimate needs cz.s, a list of exponents")
    if command == "sweep":
        sw = doc.get("sweep", {})
        if not sw.get("p") or not sw.get("mu"):
            errors.append("sweep needs nonempty sweep.p and sweep.mu lists")
    if command in ("cascade", "sweep", "solve") and "schedule" in doc:
        try:
            _schedule(doc["schedule"], float(mu), {**_DEFAULT_TOL, **doc.get("tolerances", {})})
        except (PStokesError, TypeError, ValueError, KeyError) as exc:
            errors.append(f"schedule: {exc}")
    if errors:
        raise ConfigInvalid(errors)
    cfg = RunConfig(**{k: doc[k] for k in doc if k in known})
    cfg.p = float(cfg.p)
    cfg.mu = float(cfg.mu)
    cfg.tolerances = {**_DEFAULT_TOL, **cfg.tolerances}
    return cfg


def _schedule(doc: dict, mu: float, tol: dict) -> CascadeSchedule:
    if "geometric" in doc:
        kw = dict(doc["geometric"])
        kw.setdefault("mu_start", 1.0)
        floor = kw.pop("mu_floor", 1e-3)
        kw.setdefault("mu_end", mu if mu > 0 else floor)
        kw.setdefault("final_mu_zero", mu == 0)
        kw.setdefault("inner_tol", tol["inner_tol"])
        kw.setdefault("max_picard", tol["max_picard"])
        return CascadeSchedule.geometric(**kw)
    kw = {"inner_tol": tol["inner_tol"], "max_picard": tol["max_picard"], **doc}
    return CascadeSchedule.from_json(kw)


def _default_schedule(cfg: RunConfig) -> CascadeSchedule:
    doc = cfg.schedule or {"geometric": {"mu_start": max(1.0, cfg.mu)}}
    return _schedule(doc, cfg.mu, cfg.tolerances)


def _grid(cfg: RunConfig):
    g = cfg.grid or {"dim": 3, "points_per_axis": 16}
    return build_grid(g.get("dim", 3), g["points_per_axis"], g.get("box_length", 2 * math.pi))


def _forcing(cfg: RunConfig, grid):
    if "file" in cfg.forcing:
        f = read_field(cfg.forcing["file"])
        if f.grid != grid:
            raise ConfigInvalid([f"forcing file grid {f.grid.describe()} does not match config grid"])
        return f
    return make_forcing(grid, cfg.forcing, cfg.seed)


# --------------------------------------------------------------------------
# commands


def _write_solution(sol, out: Path, tag: str = "") -> dict:
    write_field(out / f"u{tag}.pstk", sol.u)
    write_field(out / f"pi{tag}.pstk", sol.pi)
    diag = sol.diagnostics()
    (out / f"diagnostics{tag}.json").write_text(dumps_json(diag))
    return diag


def _admissibility_warning(cfg: RunConfig, grid) -> tuple:
    cz_grid = build_grid(grid.dim, int(cfg.cz.get("points_per_axis", 16)), grid.box_length)
    cz = build_cz_table(required_exponents(cfg.p, grid.dim, cfg.q), cz_grid,
                        cfg.cz.get("method", "power_iteration"),
                        int(cfg.cz.get("n_iters", 60)), cfg.seed)
    adm = admissibility(cfg.p, grid.dim, cfg.q, cz)
    warn = None if adm.feasible else f"admissibility conditions fail: {adm.reason}"
    return adm.to_json(), warn


def _cmd_solve(cfg, out, manifest):
    g = _grid(cfg)
    f = _forcing(cfg, g)
    if cfg.mu == 0:
        u, info = weak_solve(f, cfg.p, cfg.tolerances["weak_tol"], return_info=True)
        write_field(out / "u.pstk", u)
        diag = {"p": cfg.p, "mu": 0.0, **info}
        (out / "diagnostics.json").write_text(dumps_json(diag))
    else:
        sol = solve_regularized(f, StressParams(cfg.p, cfg.mu), RegParams(),
                                cfg.tolerances["inner_tol"], cfg.tolerances["max_picard"])
        _write_solution(sol, out)
    return EXIT_OK


def _run_cascade(cfg, out, manifest):
    g = _grid(cfg)
    f = _forcing(cfg, g)
    if cfg.check_admissibility and cfg.p < 2:
        adm, warn = _admissibility_warning(cfg, g)
        manifest["admissibility"] = adm
        if warn:
            manifest["warnings"].append(warn)
    sol = cascade(f, cfg.p, _default_schedule(cfg), weak_tol=cfg.tolerances["weak_tol"])
    return sol, _write_solution(sol, out)


def _cmd_cascade(cfg, out, manifest):
    _run_cascade(cfg, out, manifest)
    return EXIT_OK


def _cmd_cz(cfg, out, manifest):
    g = _grid(cfg)
    table = build_cz_table(cfg.cz["s"], g, cfg.cz.get("method", "power_iteration"),
                           int(cfg.cz.get("n_iters", 60)), cfg.seed)
    (out / "cz_table.json").write_text(dumps_json(table.to_json()))
    return EXIT_OK


def _cmd_verify(cfg, out, manifest):
    reports = []
    for item in cfg.checks:
        opts = dict(item) if isinstance(item, dict) else {"name": item}
        name = opts.pop("name")
        seed = int(opts.pop("seed", cfg.seed))
        if name == "monotonicity":
            reports.append(check_monotonicity(
                opts.get("p_list", [cfg.p]), opts.get("mu_list", [0.0, 1.0]),
                int(opts.get("n_samples", 10_000)), seed,
                float(opts.get("factor", 1.0 if cfg.p == 2 else 0.9))))
            continue
        g = _grid(cfg)
        sp = StressParams(cfg.p, cfg.mu)
        if name == "hessian":
            from .fields import random_field

            cz = build_cz_table([cfg.q, cfg.q / (cfg.q - 1.0)], g,
                                cfg.cz.get("method", "power_iteration"),
                                int(cfg.cz.get("n_iters", 60)), seed)
            for i in range(int(opts.get("n_fields", 1))):
                v = random_field(g, 1, seed=[seed, i])
                reports += check_hessian_inequalities(v, sp, cfg.q, cz)
        elif name == "embeddings":
            for i in range(int(opts.get("n_fields", 1))):
                reports += check_embeddings(compact_random_field(g, [seed, i]), cfg.p, cfg.q)
        elif name == "solution_estimates":
            f = _forcing(cfg, g)
            sol, _ = _run_cascade(cfg, out, manifest)
            reports += check_solution_estimates(sol, f, cfg.q)
        elif name == "uniqueness":
            f = _forcing(cfg, g)
            seeds = tuple(opts.get("seeds", (seed + 1, seed + 2)))
            reports.append(check_uniqueness(f, cfg.p, _default_schedule(cfg), seeds))
    for r in reports:
        if r.seed is None:
            r.seed = cfg.seed
    emit_report(reports, "json", out / "reports.json")
    emit_report(reports, "csv", out / "reports.csv")
    failed = [r.name for r in reports if r.passed is False]
    manifest["checks"] = {"total": len(reports), "failed": failed,
                          "gated": sum(r.status == "gated" for r in reports)}
    return EXIT_CHECK_FAILED if failed else EXIT_OK


def _cmd_sweep(cfg, out, manifest):
    rows = []
    code = EXIT_OK
    for p in cfg.sweep["p"]:
        for mu in cfg.sweep["mu"]:
            sub = out / f"run_p{p:g}_mu{mu:g}"
            sub.mkdir(parents=True, exist_ok=True)
            member = RunConfig(**{**cfg.to_json(), "command": "cascade", "p": float(p),
                                  "mu": float(mu), "sweep": {}})
            rc = _execute(member, sub)
            row = {"p": float(p), "mu": float(mu), "exit_code": rc}
            diag_path = sub / "diagnostics.json"
            if diag_path.exists():
                diag = json.loads(diag_path.read_text())
                row.update(diag["estimate_ratios"])
                row["residual_linf"] = diag["residual_linf"]
            rows.append(row)
            code = max(code, rc)
    (out / "sweep.json").write_text(dumps_json(rows))
    cols = sorted({k for r in rows for k in r} - {"p", "mu"})
    lines = [",".join(["p", "mu"] + cols)]
    for r in rows:
        vals = [format(r["p"], ".17g"), format(r["mu"], ".17g")]
        vals += ["" if r.get(c) is None else format(r[c], ".17g") for c in cols]
        lines.append(",".join(vals))
    (out / "sweep.csv").write_text("\n".join(lines) + "\n")
    manifest["members"] = len(rows)
    return code


_DISPATCH = {
    "solve": _cmd_solve,
    "cascade": _cmd_cascade,
    "verify": _cmd_verify,
    "cz-estimate": _cmd_cz,
    "sweep": _cmd_sweep,
}


def _versions() -> dict:
    return {
        "pstokes": __version__,
        "backend": kernels.BACKEND,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
    }


def _execute(cfg: RunConfig, out: Path) -> int:
    out.mkdir(parents=True, exist_ok=True)
    manifest = {"config": cfg.to_json(), "versions": _versions(), "warnings": []}
    start = time.perf_counter()
    try:
        code = _DISPATCH[cfg.command](cfg, out, manifest)
    except DivergenceError as exc:
        manifest["error"] = {"type": type(exc).__name__, "message": str(exc),
                             "history_tail": exc.history[-5:]}
        code = EXIT_DIVERGED
    except ConfigInvalid as exc:
        (out / "validation.json").write_text(dumps_json({"valid": False, "errors": exc.errors}))
        manifest["error"] = {"type": "ConfigInvalid", "errors": exc.errors}
        code = EXIT_INVALID
    except PStokesError as exc:
        (out / "validation.json").write_text(dumps_json({"valid": False, "errors": [str(exc)]}))
        manifest["error"] = {"type": type(exc).__name__, "message": str(exc)}
        code = EXIT_INVALID
    manifest["exit_code"] = code
    manifest["wall_time_s"] = time.perf_counter() - start
    manifest["timestamp"] = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
    (out / "manifest.json").write_text(dumps_json(manifest))
    return code


def run(doc: dict, out) -> int:
    """Validate ``doc`` and execute it, writing every artifact under ``out``."""
    out = Path(out)
    try:
        cfg = validate_config(doc)
    except ConfigInvalid as exc:
        out.mkdir(parents=True, exist_ok=True)
        (out / "validation.json").write_text(dumps_json({"valid": False, "errors": exc.errors}))
        return EXIT_INVALID
    return _execute(cfg, out)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="pstokes",
        description="Batch runs for the modified p-Stokes solver and inequality checks.",
        epilog=f"The default FFT thread count is read from ${THREADS_ENV}. "
               "Exit status: 0 ok, 1 check failed, 2 invalid config, 3 diverged.",
    )
    ap.add_argument("--config", required=True, type=Path, help="JSON run configuration")
    ap.add_argument("--seed", type=int, help="override the configuration seed")
    ap.add_argument("--out", type=Path, default=Path("pstokes_out"), help="output directory")
    ap.add_argument("--threads", type=int, help=f"FFT worker threads (default ${THREADS_ENV} or 1)")
    ap.add_argument("--command", choices=COMMANDS, help="override the configuration command")
    ap.add_argument("-v", "--verbose", action="store_true", help="log stage progress")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads is not None:
        set_threads(args.threads)
    try:
        doc = json.loads(args.config.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "validation.json").write_text(
            dumps_json({"valid": False, "errors": [f"cannot read config: {exc}"]}))
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if isinstance(doc, dict):
        if args.seed is not None:
            doc["seed"] = args.seed
        if args.command is not None:
            doc["command"] = args.command
    code = run(doc, args.out)
    if code == EXIT_INVALID:
        print(f"invalid configuration, see {args.out / 'validation.json'}", file=sys.stderr)
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
