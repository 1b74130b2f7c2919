"""Picard/Galerkin solves of the regularized systems and the continuation cascade.

Unknowns are band-limited, zero-mean vector fields: the Galerkin space is the
set of Fourier modes kept by the 2/3 rule, without the constant mode.  A stage
residual is evaluated with full pointwise products and projected back onto
that space.

Stage systems, with ``G = grad u``, ``T_jhk = D_j G_hk``, ``a = a_{(2-p)/2}``:

* divided form (``epsilon > 0`` or ``eta > 0``)::

      eps Lap u + Lap u / a^2 + (p-2) G c / a_{(4-p)/2} - grad Pi / a - f / a

  with ``c_j = G_hk J_eta(chi T_jhk / a)``;
* undivided form with a cut-off (``eta = 0``, finite ``rho``)::

      Lap u / a + (p-2) chi G c / a_{(4-p)/2} - grad Pi - f,   c_j = G_hk T_jhk;

* undivided cut-off-free form (``eta = 0``, ``rho = inf``)::

      div S - grad Pi - f

  with the conservative pressure density of
  :func:`pstokes.potentials.conservative_density`.  Its divergence is
  ``div(w grad div u)``, so a converged Galerkin solution is divergence-free up
  to the solve tolerance.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy import optimize

from . import kernels
from .errors import CascadeError, DivergenceError, ParameterError
from .fields import (
    Field,
    Grid,
    div_array,
    fft,
    grad_array,
    ifft,
    inverse_laplacian_array,
    laplacian_array,
    lq_norm_array,
    spectral_derivatives,
)
from .nonlinearity import RegParams, StressParams
from .potentials import (
    _Derivs,
    _flat,
    _power,
    conservative_density,
    leray_project,
    mollified_density,
    pressure_functional,
)

__all__ = [
    "Solution",
    "CascadeSchedule",
    "stage_residual",
    "solve_regularized",
    "cascade",
    "helmholtz_decompose",
    "reconstruct_pressure",
    "weak_solve",
    "divergence_residual",
    "estimate_ratios",
]

log = logging.getLogger(__name__)


# --------------------------------------------------------------------------
# data


@dataclass
class Solution:
    u: Field
    pi: Field
    params: StressParams
    residual_linf: float
    div_l2: float
    div_linf: float
    estimate_ratios: dict = dc_field(default_factory=dict)
    iterations: int = 0
    reg: RegParams | None = None
    history: list = dc_field(default_factory=list)
    stage_log: list = dc_field(default_factory=list)

    def diagnostics(self) -> dict:
        """JSON-ready summary (no field values)."""
        return {
            "p": self.params.p,
            "mu": self.params.mu,
            "reg": None if self.reg is None else _reg_json(self.reg),
            "residual_linf": self.residual_linf,
            "div_l2": self.div_l2,
            "div_linf": self.div_linf,
            "estimate_ratios": dict(sorted(self.estimate_ratios.items())),
            "iterations": self.iterations,
            "stages": self.stage_log,
        }


def _reg_json(rg: RegParams) -> dict:
    return {
        "epsilon": rg.epsilon,
        "eta": rg.eta,
        "rho": rg.rho if math.isfinite(rg.rho) else "inf",
        "delta": rg.delta,
    }


def _strictly(seq, decreasing: bool) -> bool:
    pairs = zip(seq, seq[1:])
    return all((a > b) if decreasing else (a < b) for a, b in pairs)


@dataclass(frozen=True)
class CascadeSchedule:
    """Continuation sequences.

    The cascade runs ``epsilon_seq`` then ``epsilon = 0``; ``eta_seq`` then
    ``eta = 0``; ``rho_seq`` then the cut-off-free limit; finally ``mu_seq``.
    The first entries of ``eta_seq``, ``rho_seq`` and ``mu_seq`` are the values
    held fixed during the earlier stages.  Empty ``epsilon_seq``/``eta_seq``/
    ``rho_seq`` skip the corresponding stages.  A final ``mu = 0`` entry is
    solved by :func:`weak_solve`.
    """

    mu_seq: tuple
    epsilon_seq: tuple = ()
    eta_seq: tuple = ()
    rho_seq: tuple = ()
    inner_tol: float = 1e-9
    max_picard: int = 500

    def __post_init__(self):
        for name in ("mu_seq", "epsilon_seq", "eta_seq", "rho_seq"):
            object.__setattr__(self, name, tuple(float(x) for x in getattr(self, name)))
        if not self.mu_seq:
            raise ParameterError("mu_seq must not be empty")
        if not self.inner_tol > 0:
            raise ParameterError("inner_tol must be positive")
        if self.max_picard < 1:
            raise ParameterError("max_picard must be >= 1")
        for name in ("epsilon_seq", "eta_seq"):
            seq = getattr(self, name)
            if any(x <= 0 for x in seq) or not _strictly(seq, True):
                raise ParameterError(f"{name} must be positive and strictly decreasing")
        if any(x <= 0 for x in self.rho_seq) or not _strictly(self.rho_seq, False):
            raise ParameterError("rho_seq must be positive and strictly increasing")
        mu = self.mu_seq
        if any(x < 0 for x in mu) or any(x == 0 for x in mu[:-1]) or not _strictly(mu, True):
            raise ParameterError("mu_seq must be strictly decreasing, only the last entry may be 0")

    @classmethod
    def geometric(
        cls,
        mu_start: float,
        mu_end: float,
        *,
        ratio: float = 0.5,
        epsilon_start: float | None = None,
        epsilon_stages: int = 0,
        eta_start: float | None = None,
        eta_stages: int = 0,
        rho_start: float | None = None,
        rho_cap: float | None = None,
        final_mu_zero: bool = False,
        inner_tol: float = 1e-9,
        max_picard: int = 500,
    ) -> "CascadeSchedule":
        """Geometric sequences: factor ``ratio`` for epsilon, eta, mu and doubling for rho."""
        def geo(start, n):
            return tuple(start * ratio**k for k in range(n)) if start else ()

        mu = []
        m = mu_start
        while m > mu_end * (1 + 1e-12):
            mu.append(m)
            m *= ratio
        mu.append(mu_end)
        if final_mu_zero:
            mu.append(0.0)
        rho = []
        if rho_start:
            r = rho_start
            cap = rho_cap if rho_cap else rho_start
            while r < cap * (1 - 1e-12):
                rho.append(r)
                r *= 2.0
            rho.append(cap)
        return cls(
            mu_seq=tuple(mu),
            epsilon_seq=geo(epsilon_start, epsilon_stages),
            eta_seq=geo(eta_start, eta_stages),
            rho_seq=tuple(rho),
            inner_tol=inner_tol,
            max_picard=max_picard,
        )

    def stages(self) -> list:
        """``(kind, mu, RegParams)`` triples in cascade order."""
        mu0 = self.mu_seq[0]
        eta0 = self.eta_seq[0] if self.eta_seq else 0.0
        rho0 = self.rho_seq[0] if self.rho_seq else math.inf
        plan = [("epsilon", mu0, RegParams(eps, eta0, rho0)) for eps in self.epsilon_seq]
        plan += [("eta", mu0, RegParams(0.0, eta, rho0)) for eta in self.eta_seq]
        plan.append(("eta", mu0, RegParams(0.0, 0.0, rho0)))
        plan += [("rho", mu0, RegParams(0.0, 0.0, rho)) for rho in self.rho_seq[1:]]
        plan.append(("rho", mu0, RegParams()))
        plan += [("mu", mu, RegParams()) for mu in self.mu_seq[1:]]
        out = []
        for kind, mu, rg in plan:
            if out and out[-1][1] == mu and out[-1][2] == rg:
                continue
            out.append((kind if out else "start", mu, rg))
        return out

    def to_json(self) -> dict:
        return {
            "mu_seq": list(self.mu_seq),
            "epsilon_seq": list(self.epsilon_seq),
            "eta_seq": list(self.eta_seq),
            "rho_seq": list(self.rho_seq),
            "inner_tol": self.inner_tol,
            "max_picard": self.max_picard,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "CascadeSchedule":
        return cls(**doc)


# --------------------------------------------------------------------------
# Galerkin space


def _galerkin_mask(grid: Grid) -> np.ndarray:
    return grid.dealias_mask & (grid.k_squared > 0)


def project(values: np.ndarray, grid: Grid) -> np.ndarray:
    """Orthogonal projection onto the zero-mean dealiased modes."""
    return ifft(fft(values, grid) * _galerkin_mask(grid), grid)


def _divided(rg: RegParams) -> bool:
    return rg.epsilon > 0 or rg.eta > 0


def _raw_residual(u: np.ndarray, f: np.ndarray, sp: StressParams, rg: RegParams, grid: Grid):
    """Unprojected stage residual and the scalar coefficient field of ``Lap u``."""
    p = sp.p
    if not _divided(rg) and not math.isfinite(rg.rho):
        d, S, w = conservative_density(u, sp, grid)
        Pi = inverse_laplacian_array(div_array(d, grid), grid)
        R = div_array(S, grid) - grad_array(Pi, grid) - f
        return R, w
    derivs = _Derivs.of(u, grid)
    d, gc, base = mollified_density(derivs, sp, rg, grid)
    a4 = base ** ((4.0 - p) / 2.0)
    inv_a = base ** ((p - 2.0) / 2.0)
    Pi = inverse_laplacian_array(div_array(d, grid), grid)
    gradPi = grad_array(Pi, grid)
    if _divided(rg):
        coef = rg.epsilon + inv_a**2
        R = coef * derivs.lap + (p - 2.0) * gc / a4 - (gradPi + f) * inv_a
        return R, coef
    # undivided with cut-off: c was built from chi T / a, so the A-term
    # (p-2) G (chi T) / a_{(4-p)/2} is (p-2) G c a / a_{(4-p)/2}
    a = base ** ((2.0 - p) / 2.0)
    R = inv_a * derivs.lap + (p - 2.0) * gc * (a / a4) - gradPi - f
    return R, inv_a


def stage_residual(u: Field, f: Field, sp: StressParams, rg: RegParams) -> Field:
    """Galerkin-projected residual of the stage system at ``u``."""
    if sp.mu <= 0:
        raise ParameterError("stage systems need mu > 0")
    R, _ = _raw_residual(u.values, f.values, sp, rg, u.grid)
    return Field(u.grid, project(R, u.grid))


# --------------------------------------------------------------------------
# fixed-point iteration


class _Anderson:
    """Type-II Anderson mixing on the Picard map ``x -> x + step(x)``."""

    def __init__(self, depth: int):
        self.depth = depth
        self.dx = []
        self.dg = []
        self.prev = None

    def update(self, x: np.ndarray, g: np.ndarray) -> np.ndarray:
        # g is the Picard increment at x
        if self.depth == 0:
            return x + g
        if self.prev is not None:
            px, pg = self.prev
            self.dx.append(x - px)
            self.dg.append(g - pg)
            if len(self.dx) > self.depth:
                self.dx.pop(0)
                self.dg.pop(0)
        self.prev = (x.copy(), g.copy())
        if not self.dx:
            return x + g
        DG = np.stack([v.ravel() for v in self.dg], axis=1)
        DX = np.stack([v.ravel() for v in self.dx], axis=1)
        gamma, *_ = np.linalg.lstsq(DG, g.ravel(), rcond=None)
        out = x.ravel() + g.ravel() - (DX + DG) @ gamma
        return out.reshape(x.shape)

    def reset(self):
        self.dx.clear()
        self.dg.clear()
        self.prev = None


def solve_regularized(
    f: Field,
    sp: StressParams,
    rg: RegParams,
    tol: float = 1e-9,
    max_iter: int = 500,
    u0: Field | None = None,
    omega: float = 0.5,
    anderson: int = 5,
) -> Solution:
    """Damped Picard iteration for one stage system.

    Each step freezes the coefficients at the current iterate and applies the
    constant-coefficient inverse ``Delta^-1 / c`` (``c`` the mean of the
    coefficient of ``Lap u``) to the projected residual, damped by ``omega``.
    Anderson mixing of depth ``anderson`` accelerates the iteration; depth 0
    gives plain Richardson.  ``Solution.iterations`` counts residual
    evaluations, so an initial guess that already solves the system reports 1.
    Raises :class:`DivergenceError` when the max-norm
    residual stays above ``tol`` after ``max_iter`` steps.
    """
    if sp.mu <= 0:
        raise ParameterError("solve_regularized needs mu > 0")
    g = f.grid
    rg.check_grid(g)
    fv = f.values
    # zero forcing has the unique solution zero; a warm start would only add roundoff
    u = project(u0.values, g) if u0 is not None and np.any(fv) else np.zeros_like(fv)
    accel = _Anderson(anderson)
    history = []
    it = 0
    best = (math.inf, u)
    for it in range(max_iter + 1):
        R, coef = _raw_residual(u, fv, sp, rg, g)
        Rp = project(R, g)
        res = float(np.abs(Rp).max())
        history.append(res)
        if res < best[0]:
            best = (res, u)
        if res <= tol:
            break
        if not np.isfinite(res) or (it > 20 and res > 1e6 * max(history[0], tol)):
            raise DivergenceError(f"Picard iteration blew up at step {it}", history)
        if it == max_iter:
            raise DivergenceError(
                f"Picard iteration did not reach tol={tol:g} in {max_iter} steps "
                f"(residual {res:.3e})",
                history,
            )
        c = float(np.mean(coef))
        step = -omega * inverse_laplacian_array(Rp, g) / c
        u = project(accel.update(u, step), g)
    ufield = Field(g, u)
    return _finish(ufield, f, sp, rg, res, it + 1, history)


def _finish(u: Field, f: Field, sp, rg, res, iterations, history) -> Solution:
    g = u.grid
    if not _divided(rg) and not math.isfinite(rg.rho):
        Pi = pressure_functional(u, sp, rg, "cutoff_free", form="conservative")
    else:
        d = mollified_density(_Derivs.of(u.values, g), sp, rg, g)[0]
        Pi = Field(g, inverse_laplacian_array(div_array(d, g), g))
    U = div_array(u.values, g)
    return Solution(
        u=u,
        pi=Pi,
        params=sp,
        residual_linf=res,
        div_l2=lq_norm_array(U, g, 2),
        div_linf=float(np.abs(U).max()),
        estimate_ratios=estimate_ratios(u, f, sp),
        iterations=iterations,
        reg=rg,
        history=list(history),
    )


def estimate_ratios(u: Field, f: Field, sp: StressParams, q: float = 4.0) -> dict:
    """Measured norms and ratios echoing the a-priori estimates."""
    g = u.grid
    uh = fft(u.values, g)
    G = ifft(spectral_derivatives(uh, g, 1), g)
    D2 = ifft(spectral_derivatives(uh, g, 2), g)
    base = sp.mu + np.sum(G**2, axis=(0, 1))
    inv_a = _power(base, (sp.p - 2.0) / 2.0)
    fq = lq_norm_array(f.values, g, q)
    f2 = lq_norm_array(f.values, g, 2)
    out = {
        "grad_u_Lp": lq_norm_array(G, g, sp.p),
        "D2u_L2": lq_norm_array(D2, g, 2),
        f"D2u_L{q:g}": lq_norm_array(D2, g, q),
        "a_Linf": float(np.max(base ** ((2.0 - sp.p) / 2.0))),
        "f_L2": f2,
        f"f_L{q:g}": fq,
    }
    if f2 > 0:
        out["D2u_over_f_L2"] = out["D2u_L2"] / f2
        out["weighted_hessian_over_f_L2"] = lq_norm_array(D2 * inv_a, g, 2) / f2
    if fq > 0:
        out[f"D2u_over_f_L{q:g}"] = out[f"D2u_L{q:g}"] / fq
        out["weighted_d2u_ratio"] = out[f"D2u_L{q:g}"] / (fq * out["a_Linf"] ** (2.0 - sp.p))
    return out


# --------------------------------------------------------------------------
# Helmholtz decomposition and pressure


def helmholtz_decompose(f: Field):
    """``f = F + grad psi`` with ``Delta psi = div f`` and ``div F = 0``."""
    g = f.grid
    psi = inverse_laplacian_array(div_array(f.values, g), g)
    F = f.values - grad_array(psi, g)
    return Field(g, F), Field(g, psi)


def reconstruct_pressure(u: Field, f_gradient_part: Field, sp: StressParams) -> Field:
    """Pressure of the full system ``div S - grad pi = F + grad psi``.

    ``pi = Pi(u) - psi`` where ``Pi`` is the conservative cut-off-free
    functional for ``mu > 0`` and the double-Riesz form for ``mu = 0``.
    """
    if sp.mu > 0:
        Pi = pressure_functional(u, sp, RegParams(), "cutoff_free", form="conservative")
    else:
        Pi = pressure_functional(u, sp, None, "singular")
    pi = Pi.values - f_gradient_part.values
    return Field(u.grid, pi - pi.mean())


def system_residual(u: Field, pi: Field, f: Field, sp: StressParams) -> float:
    """Max norm of the projected residual ``div S - grad pi - f``."""
    g = u.grid
    G = grad_array(u.values, g)
    S = kernels.stress(_flat(G, g), sp.mu, sp.p).reshape(G.shape)
    R = div_array(S, g) - grad_array(pi.values, g) - f.values
    return float(np.abs(project(R, g)).max())


# --------------------------------------------------------------------------
# mu = 0: energy minimization


def _leray_symbol(grid: Grid):
    k = grid.odd_wavenumbers
    kk = grid.inverse_k_squared
    mask = _galerkin_mask(grid)
    inv_abs = np.sqrt(kk) * mask
    return k, kk, inv_abs


def _apply_L(x: np.ndarray, grid: Grid, k, kk, inv_abs) -> np.ndarray:
    """``P (-Delta)^(-1/2)`` restricted to the Galerkin space."""
    xh = fft(x, grid) * inv_abs
    kdot = sum(k[j] * xh[j] for j in range(grid.dim)) * kk
    out = np.stack([xh[i] - k[i] * kdot for i in range(grid.dim)])
    return ifft(out, grid)


def weak_solve(
    f: Field,
    p: float,
    tol: float = 1e-6,
    u0: Field | None = None,
    max_iter: int = 5000,
    return_info: bool = False,
):
    """Minimizer of ``(1/p) int |grad u|^p + (f, u)`` over divergence-free fields.

    The unknown is written ``u = P (-Delta)^(-1/2) w`` (Leray projection ``P``
    on the Galerkin space), which makes the energy well conditioned, and the
    minimization is done with L-BFGS.  It stops once the relative first-order
    residual ``||(-Delta)^(-1/2) P (div S - f)||_2 / ||(-Delta)^(-1/2) P f||_2``
    is at most ``tol``; otherwise :class:`DivergenceError` is raised.
    """
    StressParams(p, 0.0)
    g = f.grid
    ops = _leray_symbol(g)
    k, kk, inv_abs = ops
    fv = f.values
    Lf = _apply_L(fv, g, *ops)
    ref = float(np.sqrt(np.sum(Lf**2)))
    if ref == 0:
        u = np.zeros_like(fv)
        info = {"iterations": 0, "residual": 0.0, "energy": 0.0}
        return (Field(g, u), info) if return_info else Field(g, u)
    vol = g.volume

    def unpack(x):
        return _apply_L(x.reshape(fv.shape), g, *ops)

    def fun(x):
        u = unpack(x)
        G = grad_array(u, g)
        sq = np.sum(G**2, axis=(0, 1))
        S = kernels.stress(_flat(G, g), 0.0, p).reshape(G.shape)
        energy = (np.sum(sq ** (p / 2.0)) / p + np.sum(fv * u)) * g.cell_volume / vol
        gu = (f.values - div_array(S, g)) * g.cell_volume / vol
        grad = _apply_L(gu, g, *ops)
        return float(energy), grad.ravel()

    scale = g.cell_volume / vol
    state = {"res": math.inf, "it": 0}

    def relres(x):
        _, gr = fun(x)
        return float(np.sqrt(np.sum(gr**2))) / (ref * scale)

    def callback(intermediate_result):
        state["it"] += 1
        r = float(np.sqrt(np.sum(intermediate_result.jac**2))) / (ref * scale) \
            if hasattr(intermediate_result, "jac") else relres(intermediate_result.x)
        state["res"] = r
        if r <= tol:
            raise StopIteration

    # warm start: the p = 2 solution rescaled so that |G|^(p-2) matches on average
    if u0 is None:
        base = inverse_laplacian_array(leray_project(fv, g), g)
        G0 = grad_array(base, g)
        rms = math.sqrt(float(np.mean(np.sum(G0**2, axis=(0, 1)))))
        u_start = base * rms ** ((2.0 - p) / (p - 1.0)) if rms > 0 else base
    else:
        u_start = leray_project(project(u0.values, g), g)
    # invert L on the Galerkin space: w = (-Delta)^(1/2) u for divergence-free u
    x0 = ifft(fft(u_start, g) * np.sqrt(g.k_squared) * _galerkin_mask(g), g).ravel()

    res = optimize.minimize(
        fun, x0, jac=True, method="L-BFGS-B", callback=callback,
        options={"maxiter": max_iter, "maxcor": 20, "ftol": 0.0, "gtol": 0.0},
    )
    final = relres(res.x)
    if final > tol:
        raise DivergenceError(
            f"weak_solve stopped at relative residual {final:.3e} > tol={tol:g} "
            f"({res.message})",
            [state["res"]],
        )
    u = unpack(res.x)
    info = {"iterations": int(res.nit), "residual": final, "energy": float(res.fun)}
    return (Field(g, u), info) if return_info else Field(g, u)


# --------------------------------------------------------------------------
# divergence diagnostic


def divergence_residual(u: Field, sp: StressParams) -> dict:
    """Norms of ``U = div u`` and the max residual of its elliptic equation.

    ``Delta U + ((p-2)/2) grad U . grad|grad u|^2 / a_1 = 0`` with
    ``a_1 = mu + |grad u|^2``; the residual needs ``mu > 0`` unless ``p = 2``.
    """
    g = u.grid
    U = div_array(u.values, g)
    out = {"U_l2": lq_norm_array(U, g, 2), "U_linf": float(np.abs(U).max())}
    lapU = laplacian_array(U, g)
    if sp.p == 2:
        out["pde_residual"] = float(np.abs(lapU).max())
        return out
    if sp.mu <= 0:
        out["pde_residual"] = float("nan")
        return out
    G = grad_array(u.values, g)
    sq = np.sum(G**2, axis=(0, 1))
    coef = 0.5 * (sp.p - 2.0) / (sp.mu + sq)
    r = lapU + coef * np.einsum("j...,j...->...", grad_array(U, g), grad_array(sq, g))
    out["pde_residual"] = float(np.abs(r).max())
    return out


# --------------------------------------------------------------------------
# cascade


def cascade(
    f: Field,
    p: float,
    schedule: CascadeSchedule,
    u0: Field | None = None,
    omega: float = 0.5,
    anderson: int = 5,
    weak_tol: float = 1e-6,
) -> Solution:
    """Run the continuation cascade and return the solution of the target system.

    ``f`` is split into ``F + grad psi``; the stages are solved with ``F`` and
    ``psi`` enters the pressure.  Each stage starts from the previous stage's
    velocity.  A failing stage raises :class:`CascadeError`.
    """
    g = f.grid
    F, psi = helmholtz_decompose(f)
    for r in schedule.rho_seq:
        if r > g.box_length / 4 * (1 + 1e-12):
            raise ParameterError(f"rho={r} exceeds the cap box_length/4")
    u = u0
    prev = None if u0 is None else u0.values
    stage_log = []
    sol = None
    total = 0
    for idx, (name, mu, rg) in enumerate(schedule.stages()):
        sp = StressParams(p, mu)
        if mu == 0:
            break
        try:
            sol = solve_regularized(F, sp, rg, schedule.inner_tol, schedule.max_picard,
                                    u, omega=omega, anderson=anderson)
        except DivergenceError as exc:
            raise CascadeError(
                f"stage {idx} ({name}) failed: {exc}", stage=idx,
                params={"mu": mu, **_reg_json(rg)}, history=exc.history,
            ) from exc
        total += sol.iterations
        change = float("nan") if prev is None else lq_norm_array(sol.u.values - prev, g, 2)
        entry = {
            "stage": idx,
            "kind": name,
            "mu": mu,
            **_reg_json(rg),
            "iterations": sol.iterations,
            "residual_linf": sol.residual_linf,
            "change_l2": change,
            "div_l2": sol.div_l2,
        }
        if not _divided(rg) and not math.isfinite(rg.rho):
            entry["divergence_pde_residual"] = divergence_residual(sol.u, sp)["pde_residual"]
        stage_log.append(entry)
        log.info("stage %d %s mu=%g: %d iterations, residual %.3e",
                 idx, name, mu, sol.iterations, sol.residual_linf)
        prev = sol.u.values
        u = sol.u
    sp = StressParams(p, schedule.mu_seq[-1])
    if schedule.mu_seq[-1] == 0:
        uw, info = weak_solve(F, p, weak_tol, u0=u, return_info=True)
        total += info["iterations"]
        change = float("nan") if prev is None else lq_norm_array(uw.values - prev, g, 2)
        U = div_array(uw.values, g)
        stage_log.append({
            "stage": len(stage_log),
            "kind": "weak",
            "mu": 0.0,
            **_reg_json(RegParams()),
            "iterations": info["iterations"],
            "residual_linf": info["residual"],
            "change_l2": change,
            "div_l2": lq_norm_array(U, g, 2),
        })
        sol = Solution(
            u=uw, pi=Field(g, np.zeros(g.shape)), params=sp,
            residual_linf=info["residual"], div_l2=lq_norm_array(U, g, 2),
            div_linf=float(np.abs(U).max()), iterations=info["iterations"],
            reg=RegParams(),
        )
    pi = reconstruct_pressure(sol.u, psi, sp)
    ratios = estimate_ratios(sol.u, f, sp)
    return Solution(
        u=sol.u, pi=pi, params=sp, residual_linf=sol.residual_linf,
        div_l2=sol.div_l2, div_linf=sol.div_linf, estimate_ratios=ratios,
        iterations=total, reg=sol.reg, history=sol.history, stage_log=stage_log,
    )
