"""Executable checks of the quantitative inequalities, with measured margins.

Every check returns :class:`CheckReport` records.  A report compares a
left-hand side with a right-hand side; ``margin`` is ``rhs - lhs`` (after any
stated slack) and ``passed`` is ``margin >= 0``.  Checks whose hypothesis is
not met (for instance the smallness gate ``4 H(q') (2-p) < 1``) are returned
with ``status == "gated"`` and ``passed is None``: they are reported, never
asserted.  Constants that are only known to exist are logged as measured
ratios and pass when finite.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field as dc_field
from importlib import resources

import numpy as np

from . import kernels
from .fields import (
    Field,
    Grid,
    dual_norm_estimate,
    fft,
    grad_array,
    ifft,
    lq_norm_array,
    random_field,
    spectral_derivatives,
)
from .nonlinearity import StressParams, calibrate_monotonicity, random_matrix_pairs
from .potentials import CZTable, _multiplier

__all__ = [
    "CheckReport",
    "monotonicity_constant",
    "check_monotonicity",
    "hessian_l2_ratio",
    "check_hessian_inequalities",
    "check_embeddings",
    "gn_exponent",
    "compact_random_field",
    "check_solution_estimates",
    "check_uniqueness",
]

EXACT_SLACK = 1e-9
ESTIMATOR_SLACK = 0.05


@dataclass
class CheckReport:
    name: str
    lhs: float
    rhs: float
    constant_used: float
    margin: float
    passed: bool | None
    samples: int = 1
    seed: int | None = None
    status: str = "checked"
    statement: str = ""
    details: list = dc_field(default_factory=list)

    def __post_init__(self):
        if self.status == "checked" and self.passed is not None:
            self.passed = bool(self.margin >= 0)

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "lhs": float(self.lhs),
            "rhs": float(self.rhs),
            "constant": float(self.constant_used),
            "margin": float(self.margin),
            "pass": self.passed,
            "samples": int(self.samples),
            "seed": self.seed,
            "status": self.status,
            "statement": self.statement,
        }


def _report(name, lhs, rhs, constant, slack=0.0, samples=1, seed=None, statement=""):
    """``lhs <= rhs * (1 + slack)``; margin is ``rhs (1 + slack) - lhs``."""
    margin = rhs * (1.0 + slack) - lhs
    return CheckReport(name, lhs, rhs, constant, margin, bool(margin >= 0),
                       samples, seed, "checked", statement)


def _measured(name, value, samples=1, seed=None, statement=""):
    """A logged constant: passes when finite (margin 0), fails otherwise."""
    ok = bool(np.isfinite(value))
    return CheckReport(name, float(value), float(value), float(value), 0.0 if ok else -math.inf,
                       ok, samples, seed, "measured", statement)


def _gated(name, constant, statement, samples=1, seed=None):
    return CheckReport(name, math.nan, math.nan, constant, math.nan, None,
                       samples, seed, "gated", statement)


# --------------------------------------------------------------------------
# monotonicity


def _load_constants() -> dict:
    try:
        text = resources.files("pstokes").joinpath("data/monotonicity_constants.json").read_text()
    except FileNotFoundError:  # pragma: no cover - data file ships with the package
        return {}
    doc = json.loads(text)
    return {float(k): float(v) for k, v in doc["constants"].items()}


_CONSTANTS = None


def monotonicity_constant(p: float, dim: int = 3) -> float:
    """Calibrated ``C*(p)``: shipped table entry, else a fresh calibration."""
    global _CONSTANTS
    if p == 2:
        return 1.0
    if _CONSTANTS is None:
        _CONSTANTS = _load_constants()
    if dim == 3:
        for k, v in _CONSTANTS.items():
            if abs(k - p) < 1e-12:
                return v
    return calibrate_monotonicity(p, dim=dim)


def check_monotonicity(
    p_list,
    mu_list,
    n_samples: int = 1_000_000,
    seed: int = 0,
    factor: float = 0.9,
    constants: dict | None = None,
    dim: int = 3,
) -> CheckReport:
    """Monotonicity inequality over random matrix pairs.

    For every ``(p, mu)`` the pairs must satisfy the plain monotonicity
    ``(S(A)-S(B)):(A-B) >= 0`` and the quantitative form with
    ``C = factor * C*(p)``.  The margin is the smallest observed
    ``(S(A)-S(B)):(A-B) / ((mu+|A|^2+|B|^2)^((p-2)/2)|A-B|^2) - C`` over
    pairs with ``A != B``; pairs with ``A == B`` must give an exact zero.
    At ``p = 2`` pass ``factor=1`` to test the equality case.
    """
    details = []
    worst = None
    total = 0
    for pi_, p in enumerate(p_list):
        C = factor * (constants[p] if constants and p in constants else monotonicity_constant(p, dim))
        for mi, mu in enumerate(mu_list):
            sp = StressParams(p, mu)
            A, B = random_matrix_pairs(n_samples, dim, [int(seed), pi_, mi], include_equal=True)
            lhs, rhs = kernels.monotonicity_terms(A, B, mu, p)
            equal = np.all(A == B, axis=(1, 2))
            zero_ok = bool(np.all(lhs[equal] == 0.0) and np.all(rhs[equal] == 0.0))
            plain_ok = bool(np.all(lhs >= 0.0))
            ok = rhs > 0
            ratio = lhs[ok] / rhs[ok]
            min_ratio = float(ratio.min())
            margin = min_ratio - C
            if not (zero_ok and plain_ok):
                margin = min(margin, -1.0)
            entry = {"p": p, "mu": sp.mu, "C": C, "min_ratio": min_ratio,
                     "margin": margin, "plain_monotone": plain_ok,
                     "equal_pairs_zero": zero_ok, "equal_pairs": int(equal.sum())}
            details.append(entry)
            total += n_samples
            if worst is None or margin < worst["margin"]:
                worst = entry
    rep = CheckReport(
        "monotonicity", worst["C"], worst["min_ratio"], worst["C"], worst["margin"], True,
        total, seed, "checked",
        "(S(A)-S(B)):(A-B) >= C (mu+|A|^2+|B|^2)^((p-2)/2) |A-B|^2",
        details,
    )
    return rep


# --------------------------------------------------------------------------
# weighted Hessian inequalities


def _derivs(v: np.ndarray, grid: Grid, order: int):
    vh = fft(v, grid)
    return [ifft(spectral_derivatives(vh, grid, k), grid) for k in range(1, order + 1)]


def _weight(G: np.ndarray, mu: float, p: float, exponent: float, grid: Grid) -> np.ndarray:
    ncomp = G.ndim - grid.dim
    sq = np.sum(G**2, axis=tuple(range(ncomp)))
    return (mu + sq) ** exponent


def _components_last(a: np.ndarray, n_deriv: int, grid: Grid) -> np.ndarray:
    """Move ``n_deriv`` trailing component axes to the front for per-component norms."""
    ncomp = a.ndim - grid.dim
    order = list(range(ncomp - n_deriv, ncomp)) + list(range(ncomp - n_deriv))
    order += list(range(ncomp, a.ndim))
    return np.transpose(a, order)


def _max_component_norm(a: np.ndarray, n_deriv: int, grid: Grid, q: float, w) -> float:
    """Max over derivative-index tuples of ``||w |a[..., idx]| ||_q``."""
    b = _components_last(a, n_deriv, grid)
    d = grid.dim
    best = 0.0
    for idx in np.ndindex(*(d,) * n_deriv):
        best = max(best, lq_norm_array(b[idx] * w, grid, q))
    return best


def hessian_l2_ratio(v: Field, sp: StressParams, derivs=None) -> tuple:
    """``(||w grad grad v||_2, ||w Lap v||_2)`` with ``w = (mu+|grad v|^2)^((p-2)/2)``."""
    g = v.grid
    G, H = derivs if derivs is not None else _derivs(v.values, g, 2)
    w = _weight(G, sp.mu, sp.p, 0.5 * (sp.p - 2.0), g)
    lap = np.trace(H, axis1=H.ndim - g.dim - 2, axis2=H.ndim - g.dim - 1)
    return lq_norm_array(H * w, g, 2), lq_norm_array(lap * w, g, 2)


def check_hessian_inequalities(v: Field, sp: StressParams, q: float, cz: CZTable) -> list:
    """Four weighted second/third-derivative inequalities for one field.

    (a) ``||w D^2 v||_2 <= ||w Lap v||_2 / (2p-3)`` for ``p in (3/2, 2]``;
    (b) per component ``||w D_iD_j v||_q <= H(q')/(1-4H(q')(2-p)) ||w Lap v||_q``;
    (c) per component ``||w D_iD_jD_k v||_q <= H(q') max_i ||w D_i Lap v||_q
        + 4(2-p)H(q') ||(mu+|grad v|^2)^((p-3)/4) D^2 v||_{2q}^2``;
    (d) per component ``||D_iD_j Delta^-1 h||_q <= H(q) ||h||_q`` for each
        component ``h`` of ``Lap v``.
    (b) and (c) are gated by ``4 H(q') (2-p) < 1``; (a) by ``p > 3/2``.
    """
    g = v.grid
    p, mu = sp.p, sp.mu
    G, H, D3 = _derivs(v.values, g, 3)
    ncv = v.rank
    w = _weight(G, mu, p, 0.5 * (p - 2.0), g)
    lap = np.trace(H, axis1=ncv, axis2=ncv + 1)
    qc = q / (q - 1.0)
    Hq_conj = cz[qc]
    gate = 4.0 * Hq_conj * (2.0 - p)
    reports = []

    # (a)
    if p > 1.5:
        lhs, base = hessian_l2_ratio(v, sp, (G, H))
        C = 1.0 / (2.0 * p - 3.0)
        reports.append(_report("weighted_hessian_L2", lhs, C * base, C, EXACT_SLACK,
                               statement="||w D2v||_2 <= ||w Lap v||_2 / (2p-3)"))
    else:
        reports.append(_gated("weighted_hessian_L2", math.nan, "requires p > 3/2"))

    # (b), (c)
    stmt_b = "||w D_iD_j v||_q <= H(q')/(1-4H(q')(2-p)) ||w Lap v||_q"
    stmt_c = "||w D3v||_q <= H(q')||w D Lap v||_q + 4(2-p)H(q')||a^((p-3)/4) D2v||_2q^2"
    if gate < 1.0:
        C = Hq_conj / (1.0 - gate)
        lhs = _max_component_norm(H, 2, g, q, w)
        rhs = C * lq_norm_array(lap * w, g, q)
        reports.append(_report("weighted_hessian_Lq", lhs, rhs, C, ESTIMATOR_SLACK, statement=stmt_b))
        lhs3 = _max_component_norm(D3, 3, g, q, w)
        dlap = np.trace(D3, axis1=ncv, axis2=ncv + 1)  # dlap[..., k] = D_k Lap v
        w34 = _weight(G, mu, p, 0.25 * (p - 3.0), g)
        rhs3 = Hq_conj * _max_component_norm(dlap, 1, g, q, w) \
            + 4.0 * (2.0 - p) * Hq_conj * lq_norm_array(H * w34, g, 2.0 * q) ** 2
        reports.append(_report("weighted_third_Lq", lhs3, rhs3, Hq_conj, ESTIMATOR_SLACK,
                               statement=stmt_c))
    else:
        reports.append(_gated("weighted_hessian_Lq", Hq_conj, stmt_b + " (gate 4H(q')(2-p) >= 1)"))
        reports.append(_gated("weighted_third_Lq", Hq_conj, stmt_c + " (gate 4H(q')(2-p) >= 1)"))

    # (d)
    Hq = cz[q]
    lhs_d = 0.0
    rhs_d = 0.0
    worst = -math.inf
    lap_comp = lap.reshape((-1,) + g.shape)
    for h in lap_comp:
        hn = lq_norm_array(h, g, q)
        if hn == 0:
            continue
        hh = fft(h, g)
        for i in range(g.dim):
            for j in range(i, g.dim):
                val = lq_norm_array(ifft(_multiplier(g, i, j) * hh, g), g, q)
                if val / hn > worst:
                    worst = val / hn
                    lhs_d, rhs_d = val, Hq * hn
    reports.append(_report("poisson_Lq", lhs_d, rhs_d, Hq, ESTIMATOR_SLACK,
                           statement="||D_iD_j Delta^-1 h||_q <= H(q) ||h||_q"))
    return reports


# --------------------------------------------------------------------------
# embeddings


def gn_exponent(n: int, q: float, p: float) -> float:
    """Interpolation exponent ``a = nq / (n(q-p) + pq)``."""
    return n * q / (n * (q - p) + p * q)


def compact_random_field(grid: Grid, seed, radius: float | None = None,
                         max_mode: int = 3, power: int = 6, rank: int = 1) -> Field:
    """Low-mode random trigonometric field times ``(1 - r^2/R^2)_+^power`` about the centre.

    The field is defined analytically, so sampling it on refined grids gives
    the same continuous function.
    """
    rng = np.random.default_rng(seed)
    L = grid.box_length
    R = radius if radius is not None else L / 4
    ks = [k for k in np.ndindex(*(2 * max_mode + 1,) * grid.dim)]
    ks = np.array(ks) - max_mode
    ks = ks[np.sum(ks**2, axis=1) <= max_mode**2]
    ncomp = grid.dim**rank
    a = rng.standard_normal((ncomp, len(ks)))
    b = rng.standard_normal((ncomp, len(ks)))
    x = grid.coords
    r2 = sum((xi - ci) ** 2 for xi, ci in zip(x, grid.center))
    bump = np.clip(1.0 - r2 / R**2, 0.0, None) ** power
    vals = np.zeros((ncomp,) + grid.shape)
    expand = (-1,) + (1,) * grid.dim
    for m, k in enumerate(ks):
        phase = sum(2 * np.pi * ki * xi / L for ki, xi in zip(k, x))
        vals += a[:, m].reshape(expand) * np.cos(phase) + b[:, m].reshape(expand) * np.sin(phase)
    vals = vals * bump / math.sqrt(len(ks))
    return Field(grid, vals.reshape((grid.dim,) * rank + grid.shape))


def check_embeddings(v: Field, p: float, q: float) -> list:
    """Measured constants of the two embeddings used for the regularity bootstrap.

    ``||grad v||_2 <= C_s ||D^2 v||_{2n/(n+2)}`` and
    ``||grad v||_inf <= c ||D^2 v||_q^a ||grad v||_p^(1-a)`` with
    ``a = nq/(n(q-p)+pq)``.  Both constants exist but have no numeric value
    to compare with, so the reports log the measured ratio and pass when it
    is finite; ``v = 0`` is a vacuous pass with ratio 0.
    """
    g = v.grid
    n = g.dim
    G, H = _derivs(v.values, g, 2)
    a = gn_exponent(n, q, p)
    s = 2.0 * n / (n + 2.0)
    num1 = lq_norm_array(G, g, 2)
    den1 = lq_norm_array(H, g, s)
    num2 = lq_norm_array(G, g, math.inf)
    den2 = lq_norm_array(H, g, q) ** a * lq_norm_array(G, g, p) ** (1.0 - a)
    r1 = num1 / den1 if den1 > 0 else 0.0
    r2 = num2 / den2 if den2 > 0 else 0.0
    return [
        _measured("sobolev_grad_L2", r1,
                  statement="||grad v||_2 / ||D2 v||_{2n/(n+2)}"),
        _measured("gagliardo_nirenberg", r2,
                  statement=f"||grad v||_inf / (||D2v||_q^a ||grad v||_p^(1-a)), a={a:.12g}"),
    ]


# --------------------------------------------------------------------------
# solution estimates


def check_solution_estimates(sol, f: Field, q: float, cz: CZTable | None = None,
                             scaled=None) -> list:
    """Structural checks of the a-priori estimates on a computed solution.

    ``scaled`` may be ``(sol_lambda, lam)``, the solution for ``lam * f``; at
    ``mu = 0`` the ratio of ``||D^2 u||_q`` values must equal
    ``lam^(1/(p-1))`` within 2%, and likewise for ``||grad u||_p``.  At ``p = 2`` the identity
    ``||D^2 u||_2 = ||f||_2`` (divergence-free ``f``) is asserted exactly.
    """
    g = f.grid
    sp = sol.params
    p = sp.p
    u = sol.u
    G, H = _derivs(u.values, g, 2)
    f2 = lq_norm_array(f.values, g, 2)
    fq = lq_norm_array(f.values, g, q)
    reports = []
    d2 = lq_norm_array(H, g, 2)
    if p == 2:
        reports.append(_report("stokes_D2u_L2", d2, f2, 1.0, 1e-8,
                               statement="||D2u||_2 <= ||f||_2"))
    else:
        reports.append(_measured("D2u_over_f_L2", d2 / f2 if f2 else 0.0,
                                 statement="||D2u||_2 / ||f||_2"))
    base = sp.mu + np.sum(G**2, axis=(0, 1))
    if sp.mu > 0 or np.all(base > 0):
        inv_a = base ** ((p - 2.0) / 2.0)
        reports.append(_measured(
            "weighted_hessian_over_f_Lq",
            lq_norm_array(H * inv_a, g, q) / fq if fq else 0.0,
            statement="||D2u / a||_q / ||f||_q"))
    a_inf = float(np.max(base ** ((2.0 - p) / 2.0)))
    d2q = lq_norm_array(H, g, q)
    reports.append(_measured(
        "weighted_d2u_ratio", d2q / (fq * a_inf ** (2.0 - p)) if fq else 0.0,
        statement="||D2u||_q / (||f||_q ||a||_inf^(2-p))"))
    # weak energy estimate
    gp = lq_norm_array(G, g, p)
    dual = dual_norm_estimate(f, p / (p - 1.0))
    reports.append(_report("energy_estimate", gp ** (p - 1.0), dual, 1.0, ESTIMATOR_SLACK,
                           statement="||grad u||_p^(p-1) <= ||f||_{-1,p'}"))
    if scaled is not None:
        sol2, lam = scaled
        if sp.mu == 0:
            _, H2 = _derivs(sol2.u.values, g, 2)
            measured = lq_norm_array(H2, g, q) / d2q
            expected = lam ** (1.0 / (p - 1.0))
            rel = abs(measured / expected - 1.0)
            reports.append(CheckReport(
                "homogeneity_D2u_Lq", rel, 0.02, expected, 0.02 - rel, True,
                2, None, "checked", "||D2 u(lam f)||_q / ||D2 u(f)||_q = lam^(1/(p-1))"))
            measured = lq_norm_array(grad_array(sol2.u.values, g), g, p) / gp
            rel = abs(measured / expected - 1.0)
            reports.append(CheckReport(
                "homogeneity_grad_Lp", rel, 0.02, expected, 0.02 - rel, True,
                2, None, "checked", "||grad u(lam f)||_p / ||grad u(f)||_p = lam^(1/(p-1))"))
        else:
            reports.append(_gated("homogeneity_D2u_Lq", math.nan, "requires mu = 0"))
            reports.append(_gated("homogeneity_grad_Lp", math.nan, "requires mu = 0"))
    return reports


def check_uniqueness(f: Field, p: float, schedule, seeds=(1, 2), amplitude: float = 0.5,
                     threshold: float = 1e-6) -> CheckReport:
    """Two cascades from independent random starts must reach the same velocity."""
    from .solver import cascade

    g = f.grid
    runs = []
    for s in seeds:
        u0 = random_field(g, rank=1, seed=[int(s), 7], amplitude=amplitude)
        runs.append(cascade(f, p, schedule, u0=u0))
    ua, ub = runs[0].u.values, runs[1].u.values
    num = lq_norm_array(grad_array(ua - ub, g), g, p)
    den = lq_norm_array(grad_array(ua, g), g, p)
    rel = num / den if den > 0 else num
    return CheckReport("uniqueness", rel, threshold, threshold, threshold - rel, True, 2,
                       int(seeds[0]), "checked",
                       "||grad(u_a-u_b)||_p / ||grad u_a||_p <= 1e-6")
