"""Fundamental-solution calculus on the periodic box.

The inverse Laplacian is the zero-mean spectral inverse.  The pressure
functional ``Pi`` is represented through a density vector ``d`` with
``Pi = Delta^-1 div d``, so that ``Delta Pi = div d``.  The singular-integral
norms ``H(s)`` of the double-Riesz family ``xi_i xi_j / |xi|^2`` are estimated
on the grid and collected in a :class:`CZTable`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from . import kernels
from .errors import ContractError, ExponentError, TableIncompleteError
from .fields import (
    Field,
    Grid,
    div_array,
    fft,
    grad_array,
    ifft,
    inverse_laplacian_array,
    lq_norm_array,
    random_field,
    spectral_derivatives,
)
from .nonlinearity import RegParams, StressParams, cutoff, mollify

__all__ = [
    "inverse_laplacian",
    "newtonian_gradient",
    "leray_project",
    "pressure_density",
    "pressure_functional",
    "double_riesz",
    "cz_norm",
    "CZTable",
    "build_cz_table",
    "Admissibility",
    "admissibility",
    "feasible_p_interval",
    "VARIANTS",
    "CZ_METHODS",
]

VARIANTS = ("mollified_cutoff", "cutoff_free", "singular")
CZ_METHODS = ("power_iteration", "random_probe", "analytic_bound")


def inverse_laplacian(g: Field) -> Field:
    """Zero-mean ``w`` with ``Delta w = g - mean(g)``."""
    return Field(g.grid, inverse_laplacian_array(g.values, g.grid))


def newtonian_gradient(g: Field) -> Field:
    """``grad Delta^-1 g``; a single mode is multiplied by ``-i k / |k|^2``."""
    return Field(g.grid, grad_array(inverse_laplacian_array(g.values, g.grid), g.grid))


def leray_project(values: np.ndarray, grid: Grid) -> np.ndarray:
    """Divergence-free part ``v - grad Delta^-1 div v`` of a vector array."""
    return values - grad_array(inverse_laplacian_array(div_array(values, grid), grid), grid)


# --------------------------------------------------------------------------
# pressure


@dataclass
class _Derivs:
    """Gradient and second derivatives of a vector array.

    ``G[i, j] = D_j u_i`` and ``T[j, h, k] = D_j G_hk``.
    """

    G: np.ndarray
    T: np.ndarray
    lap: np.ndarray

    @classmethod
    def of(cls, u: np.ndarray, grid: Grid) -> "_Derivs":
        uh = fft(u, grid)
        G = ifft(spectral_derivatives(uh, grid, 1), grid)
        H = ifft(spectral_derivatives(uh, grid, 2), grid)  # H[h, k, j] = D_j D_k u_h
        T = np.ascontiguousarray(np.moveaxis(H, 2, 0))
        lap = np.einsum("ijj...->i...", H)
        return cls(G, T, lap)


def _flat(a: np.ndarray, grid: Grid) -> np.ndarray:
    return a.reshape(a.shape[: a.ndim - grid.dim] + (-1,))


def _contract(G: np.ndarray, M: np.ndarray, grid: Grid):
    gc, gtc = kernels.contract(_flat(G, grid), _flat(M, grid))
    shape = (grid.dim,) + grid.shape
    return gc.reshape(shape), gtc.reshape(shape)


def _power(base: np.ndarray, s: float) -> np.ndarray:
    out = np.zeros_like(base)
    np.power(base, s, out=out, where=base > 0)
    return out


def _check_variant(variant: str, sp: StressParams, reg: RegParams) -> None:
    if variant not in VARIANTS:
        raise ContractError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    if variant == "singular":
        if sp.mu != 0:
            raise ContractError("variant 'singular' requires mu = 0")
        return
    if sp.mu <= 0:
        raise ContractError(f"variant {variant!r} requires mu > 0")
    if variant == "mollified_cutoff" and not math.isfinite(reg.rho):
        raise ContractError("variant 'mollified_cutoff' requires a finite cut-off radius")


def _cutoff_values(grid: Grid, reg: RegParams):
    if math.isfinite(reg.rho):
        return cutoff(grid, reg.rho).values
    return None


def mollified_density(derivs: _Derivs, sp: StressParams, reg: RegParams, grid: Grid):
    """Density and A-term ingredients for the mollified, cut-off system.

    Returns ``(d, Gc, base)`` where ``c_j = G_hk M_jhk`` with
    ``M = J_eta(chi T / a)``, ``d = (p-2) G^T c / a_1`` and
    ``base = mu + |G|^2``.
    """
    p, mu = sp.p, sp.mu
    G, T = derivs.G, derivs.T
    base = mu + np.sum(G**2, axis=(0, 1))
    inv_a = _power(base, (p - 2.0) / 2.0)
    M = T * inv_a
    chi = _cutoff_values(grid, reg)
    if chi is not None:
        M = M * chi
    if reg.eta > 0:
        M = mollify(Field(grid, M), reg.eta).values
    gc, gtc = _contract(G, M, grid)
    d = (p - 2.0) * gtc / base
    return d, gc, base


def conservative_density(u: np.ndarray, sp: StressParams, grid: Grid):
    """Density ``d_j = D_i S_ij - w D_j (div u)`` with ``w = (mu+|G|^2)^((p-2)/2)``.

    It agrees with the pointwise cut-off-free density up to aliasing, and its
    divergence equals ``D_i D_j S_ij - div(w grad div u)`` exactly on the grid.
    Returns ``(d, S, w)``.
    """
    G = grad_array(u, grid)
    S = kernels.stress(_flat(G, grid), sp.mu, sp.p).reshape(G.shape)
    w = kernels.weight(_flat(G, grid), sp.mu, 0.5 * (sp.p - 2.0)).reshape(grid.shape) \
        if sp.mu > 0 else _power(np.sum(G**2, axis=(0, 1)), 0.5 * (sp.p - 2.0))
    U = np.einsum("ii...->...", G)
    d = div_array(np.swapaxes(S, 0, 1), grid) - w * grad_array(U, grid)
    return d, S, w


def pressure_density(
    u: Field, sp: StressParams, reg: RegParams | None = None, variant: str = "cutoff_free"
) -> Field:
    """Density ``d`` of the pressure functional, ``Pi = Delta^-1 div d``.

    For the cut-off-free variant ``d_i = (p-2) G_ji G_hk D_j G_hk / a_{(4-p)/2}``;
    the mollified variant replaces ``D_j G_hk`` by ``a J_eta(chi D_j G_hk / a)``.
    The singular variant has the density ``D_j S_ji``.
    """
    reg = reg or RegParams()
    _check_variant(variant, sp, reg)
    g = u.grid
    if variant == "singular":
        G = grad_array(u.values, g)
        S = kernels.stress(_flat(G, g), 0.0, sp.p).reshape(G.shape)
        return Field(g, div_array(np.swapaxes(S, 0, 1), g))
    if variant == "cutoff_free":
        reg = RegParams(eta=0.0, rho=math.inf)
    derivs = _Derivs.of(u.values, g)
    d, _, _ = mollified_density(derivs, sp, reg, g)
    return Field(g, d)


def double_riesz(S: np.ndarray, grid: Grid) -> np.ndarray:
    """``sum_ij`` of the multiplier ``xi_i xi_j / |xi|^2`` applied to ``S_ij``.

    Each ``xi_i`` is a first-derivative symbol, so Nyquist entries are zero and
    the result equals ``Delta^-1 div (div_first S)`` on the grid.
    """
    Sh = fft(S, grid)
    k = grid.odd_wavenumbers
    acc = np.zeros(grid.spectral_shape, dtype=complex)
    for i in range(grid.dim):
        for j in range(grid.dim):
            acc += k[i] * k[j] * Sh[i, j]
    return ifft(grid.inverse_k_squared * acc, grid)


def pressure_functional(
    u: Field,
    sp: StressParams,
    reg: RegParams | None = None,
    variant: str = "cutoff_free",
    form: str = "pointwise",
) -> Field:
    """Pressure functional ``Pi(u)`` (zero mean).

    ``form="pointwise"`` evaluates the density node by node from ``G`` and its
    derivatives.  ``form="conservative"`` (cut-off-free only) uses
    :func:`conservative_density`, the discretization used by the solver in its
    final stages.  The singular variant is the double-Riesz transform of the
    stress ``|G|^(p-2) G``, with the ``xi = 0`` mode set to zero; at ``p = 2``
    it reduces to ``div u`` and so vanishes on solenoidal fields.
    """
    reg = reg or RegParams()
    _check_variant(variant, sp, reg)
    g = u.grid
    if form not in ("pointwise", "conservative"):
        raise ContractError(f"unknown form {form!r}")
    if variant == "singular":
        G = grad_array(u.values, g)
        S = kernels.stress(_flat(G, g), 0.0, sp.p).reshape(G.shape)
        return Field(g, double_riesz(S, g))
    if form == "conservative":
        if variant != "cutoff_free":
            raise ContractError("the conservative form exists for the cut-off-free variant only")
        d, _, _ = conservative_density(u.values, sp, g)
    else:
        d = pressure_density(u, sp, reg, variant).values
    return Field(g, inverse_laplacian_array(div_array(d, g), g))


# --------------------------------------------------------------------------
# Calderon-Zygmund norms


def _multiplier(grid: Grid, i: int, j: int) -> np.ndarray:
    k = grid.odd_wavenumbers
    return np.broadcast_to(k[i] * k[j] * grid.inverse_k_squared, grid.spectral_shape)


def _dual_map(y: np.ndarray, s: float) -> np.ndarray:
    return np.sign(y) * np.abs(y) ** (s - 1.0)


def _lq(x, grid, s):
    return lq_norm_array(x, grid, s)


def _power_iteration(m, grid, s, n_iters, starts):
    s_conj = s / (s - 1.0)
    best = 0.0
    for x in starts:
        x = x / _lq(x, grid, s)
        prev = 0.0
        for _ in range(n_iters):
            y = ifft(m * fft(x, grid), grid)
            ny = _lq(y, grid, s)
            if ny == 0:
                break
            ratio = ny / _lq(x, grid, s)
            best = max(best, ratio)
            z = ifft(m * fft(_dual_map(y / ny, s), grid), grid)
            x = _dual_map(z, s_conj)
            nx = _lq(x, grid, s)
            if nx == 0:
                break
            x = x / nx
            if abs(ratio - prev) <= 1e-12 * ratio:
                break
            prev = ratio
    return best


def _starts(grid: Grid, n_starts: int, seed: int):
    out = []
    for r in range(n_starts):
        out.append(random_field(grid, rank=0, seed=[int(seed), 1, r], decay=1.0).values)
    # one-dimensional square-wave profile: near-extremal for the diagonal multipliers
    x = grid.coords
    out.append(np.sign(np.sin(x[0] * 2 * np.pi / grid.box_length) + 0.3))
    out.append(np.sign(np.sin(x[0] * 2 * np.pi / grid.box_length))
               * np.sign(np.sin(x[1] * 2 * np.pi / grid.box_length)))
    return out


def _component_pairs(dim: int):
    # the grid is invariant under axis permutations, so one diagonal and one
    # off-diagonal component represent all of them
    return [(0, 0), (0, 1)]


def _envelope(s: float) -> float:
    return s - 1.0 if s >= 2 else 1.0 / (s - 1.0)


def cz_norm(
    s: float,
    grid: Grid,
    method: str = "power_iteration",
    n_iters: int = 60,
    seed: int = 0,
    n_starts: int = 4,
    constant: float | None = None,
) -> float:
    """Estimate ``H(s)``, the largest ``L^s -> L^s`` norm of ``xi_i xi_j / |xi|^2``.

    ``power_iteration`` runs the nonlinear power method for ``L^s`` operator
    norms from several starts; ``random_probe`` evaluates the Rayleigh-type
    quotient on ``n_iters`` random band-limited fields.  Both are lower
    bounds.  ``analytic_bound`` returns ``C (s-1)`` for ``s >= 2`` and
    ``C / (s-1)`` below, with ``C = constant`` or calibrated from power
    iteration.
    """
    if not s > 1:
        raise ExponentError(f"s must exceed 1, got {s}")
    if method not in CZ_METHODS:
        raise ValueError(f"unknown method {method!r}")
    if method == "analytic_bound":
        if constant is None:
            constant = calibrate_cz_constant(grid, n_iters=n_iters, seed=seed)
        return float(constant * _envelope(s))
    best = 0.0
    for i, j in _component_pairs(grid.dim):
        m = _multiplier(grid, i, j)
        if method == "power_iteration":
            best = max(best, _power_iteration(m, grid, s, n_iters, _starts(grid, n_starts, seed)))
        else:
            for r in range(n_iters):
                x = random_field(grid, rank=0, seed=[int(seed), 2, r]).values
                y = ifft(m * fft(x, grid), grid)
                best = max(best, _lq(y, grid, s) / _lq(x, grid, s))
    return float(best)


def calibrate_cz_constant(grid: Grid, s_list=(4.0 / 3.0, 3.0, 4.0), n_iters=60, seed=0) -> float:
    """Smallest ``C >= 1`` with the power-iteration estimates under the envelope."""
    c = 1.0
    for s in s_list:
        c = max(c, cz_norm(s, grid, "power_iteration", n_iters, seed) / _envelope(s))
    return c


def _key(s: float) -> str:
    return f"{float(s):.12g}"


@dataclass
class CZTable:
    """Estimated norms ``H(s)`` with their provenance."""

    entries: dict = dc_field(default_factory=dict)
    method: str = "power_iteration"
    grid: dict = dc_field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        self.entries = {float(s): float(h) for s, h in self.entries.items()}
        for s, h in self.entries.items():
            if not h > 0:
                raise ValueError(f"H({s}) must be positive")
        h2 = self.lookup_optional(2.0)
        if h2 is not None and h2 > 1.0 + 1e-6 and self.method != "analytic_bound":
            raise ValueError(f"H(2) = {h2} exceeds the multiplier bound 1")

    @property
    def lower_bounds(self) -> bool:
        return self.method in ("power_iteration", "random_probe")

    def lookup_optional(self, s: float):
        for k, v in self.entries.items():
            if abs(k - s) <= 1e-9 * max(1.0, abs(s)):
                return v
        return None

    def __getitem__(self, s: float) -> float:
        v = self.lookup_optional(s)
        if v is None:
            raise TableIncompleteError(f"no H entry for s = {s}")
        return v

    def __contains__(self, s) -> bool:
        return self.lookup_optional(s) is not None

    def to_json(self) -> dict:
        items = sorted(self.entries.items())
        return {
            "s": [k for k, _ in items],
            "H": [v for _, v in items],
            "method": self.method,
            "grid": self.grid,
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "CZTable":
        return cls(dict(zip(doc["s"], doc["H"])), doc["method"], doc.get("grid", {}), doc.get("seed", 0))

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_json(), indent=2, sort_keys=True))
        return path

    @classmethod
    def load(cls, path) -> "CZTable":
        return cls.from_json(json.loads(Path(path).read_text()))


def build_cz_table(
    s_values, grid: Grid, method: str = "power_iteration", n_iters: int = 60, seed: int = 0
) -> CZTable:
    constant = None
    if method == "analytic_bound":
        constant = calibrate_cz_constant(grid, n_iters=n_iters, seed=seed)
    entries = {}
    for s in s_values:
        s = float(s)
        if s == 2.0 and method != "analytic_bound":
            entries[s] = cz_norm(s, grid, method, n_iters, seed)
        else:
            entries[s] = cz_norm(s, grid, method, n_iters, seed, constant=constant)
    return CZTable(entries, method, grid.describe(), seed)


def required_exponents(p: float, n: int, q: float) -> list:
    q1 = n * p / (n + p)
    out = [q, q / (q - 1.0), 2.0]
    if q1 > 1:
        out += [q1, q1 / (q1 - 1.0)]
    return out


# --------------------------------------------------------------------------
# admissibility


@dataclass(frozen=True)
class Admissibility:
    p: float
    n: int
    q: float
    q1: float
    q2: float
    q_conj: float
    M_q: float
    M_q1: float
    Mbar2: float
    a_exponent: float
    feasible: bool
    reason: str

    def to_json(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def M_value(r: float, p: float, cz: CZTable) -> float:
    """``M(r) = 1 - (2-p) H(r') (5 + H(r))``."""
    if p == 2:
        return 1.0
    return 1.0 - (2.0 - p) * cz[r / (r - 1.0)] * (5.0 + cz[r])


def Mbar2_value(p: float, cz: CZTable) -> float:
    if p == 2:
        return 1.0
    return 2.0 * p - 3.0 - (2.0 - p) * (1.0 + cz[2.0])


def admissibility(p: float, n: int, q: float, cz: CZTable) -> Admissibility:
    """Positivity conditions on ``M(q1), M(q), Mbar(2)`` and ``q1 > 1``."""
    if not (1 < p <= 2):
        raise ValueError(f"p must lie in (1, 2], got {p}")
    q1 = n * p / (n + p)
    q2 = n * p / (n * p - n + p)
    qc = q / (q - 1.0)
    a = n * q / (n * q + q - n)
    M_q = M_value(q, p, cz)
    Mbar = Mbar2_value(p, cz)
    reasons = []
    if q1 > 1:
        M_q1 = M_value(q1, p, cz)
    else:
        M_q1 = float("nan")
        reasons.append("q1_not_above_1")
    if q <= n:
        reasons.append("q_not_above_n")
    if not M_q > 0:
        reasons.append("M_q_nonpositive")
    if q1 > 1 and not M_q1 > 0:
        reasons.append("M_q1_nonpositive")
    if not Mbar > 0:
        reasons.append("Mbar2_nonpositive")
    return Admissibility(
        p=p, n=n, q=q, q1=q1, q2=q2, q_conj=qc, M_q=M_q, M_q1=M_q1, Mbar2=Mbar,
        a_exponent=a, feasible=not reasons, reason=",".join(reasons) or "ok",
    )


def feasible_p_interval(n: int, q: float, cz_for_p, p_grid) -> tuple:
    """Largest interval ``(p*, 2]`` on ``p_grid`` where every point is feasible.

    ``cz_for_p(p)`` must return a :class:`CZTable` covering the exponents that
    :func:`admissibility` needs at that ``p``.  Returns ``(p_star, records)``;
    ``p_star`` is ``None`` when even ``p = 2`` is infeasible.
    """
    ps = sorted(set(float(p) for p in p_grid) | {2.0}, reverse=True)
    records = []
    p_star = None
    broken = False
    for p in ps:
        rec = admissibility(p, n, q, cz_for_p(p))
        records.append(rec)
        if not broken and rec.feasible:
            p_star = p
        elif not rec.feasible:
            broken = True
    return p_star, records
