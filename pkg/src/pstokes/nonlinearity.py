"""Pointwise nonlinear algebra: weights, the stress tensor, mollifier, cut-off.

The weight is ``a_s(mu, u) = (mu + |grad u|^2)^s`` and the stress is
``S = (mu + |grad u|^2)^((p-2)/2) grad u``.  Rank-4 tensors ``A^s`` use the
contraction ``(B . T)_i = B_ijhk T_jhk``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from . import kernels
from .errors import ParameterError, RankError, SingularWeightError, SupportError
from .fields import Field, Grid, fft, ifft

__all__ = [
    "StressParams",
    "RegParams",
    "weight_a",
    "tensor_A",
    "contract_A",
    "stress",
    "mollify",
    "cutoff",
    "cutoff_gradient",
    "CUTOFF_GRADIENT_CONSTANT",
    "monotonicity_gap",
    "monotonicity_gaps",
    "random_matrix_pairs",
    "calibrate_monotonicity",
]


@dataclass(frozen=True)
class StressParams:
    p: float
    mu: float = 0.0

    def __post_init__(self):
        if not (1.0 < self.p <= 2.0):
            raise ParameterError(f"p must lie in (1, 2], got {self.p}")
        if not self.mu >= 0:
            raise ParameterError(f"mu must be >= 0, got {self.mu}")

    @property
    def singular(self) -> bool:
        return self.mu == 0


@dataclass(frozen=True)
class RegParams:
    """Regularization parameters.

    ``rho = inf`` denotes the cut-off-free limit (the cut-off is identically 1).
    """

    epsilon: float = 0.0
    eta: float = 0.0
    rho: float = math.inf
    delta: float = 0.0

    def __post_init__(self):
        for name in ("epsilon", "eta", "delta"):
            if not getattr(self, name) >= 0:
                raise ParameterError(f"{name} must be >= 0")
        if not self.rho > 0:
            raise ParameterError("rho must be > 0")

    def check_grid(self, grid: Grid) -> None:
        if math.isfinite(self.rho) and self.rho > grid.box_length / 2:
            raise ParameterError(
                f"rho={self.rho} exceeds half the box length {grid.box_length / 2}"
            )


def _flat(values: np.ndarray, grid: Grid) -> np.ndarray:
    return values.reshape(values.shape[: values.ndim - grid.dim] + (-1,))


def _require_grad(grad_u: Field) -> None:
    if grad_u.rank != 2:
        raise RankError(f"expected a rank-2 gradient field, got rank {grad_u.rank}")


def weight_a(grad_u: Field, s: float, params: StressParams, delta: float = 0.0) -> Field:
    """``(mu + |G|^2)^s`` with ``G = grad_u`` (or ``J_delta grad_u`` when delta > 0)."""
    _require_grad(grad_u)
    if params.mu == 0 and s < 0:
        raise SingularWeightError("negative weight exponent with mu = 0")
    g = grad_u.grid
    G = mollify(grad_u, delta).values if delta > 0 else grad_u.values
    w = kernels.weight(_flat(G, g), params.mu, s)
    return Field(g, w.reshape(g.shape))


def tensor_A(grad_u: Field, s: float, params: StressParams) -> Field:
    """Rank-4 field ``A^s_ijhk = G_ij G_hk / a_s``; zero where G vanishes."""
    _require_grad(grad_u)
    g = grad_u.grid
    G = grad_u.values
    a = weight_a(grad_u, s, params).values if params.mu > 0 or s <= 0 else None
    outer = np.einsum("ij...,hk...->ijhk...", G, G)
    if a is None:
        sq = np.sum(G**2, axis=(0, 1))
        inv = np.zeros_like(sq)
        np.power(sq, -s, out=inv, where=sq > 0)
        return Field(g, outer * inv)
    return Field(g, outer / a)


def contract_A(A: Field, T: Field) -> Field:
    """``(A . T)_i = A_ijhk T_jhk``."""
    if A.rank != 4 or T.rank != 3:
        raise RankError("contract_A needs a rank-4 and a rank-3 field")
    return Field(A.grid, np.einsum("ijhk...,jhk...->i...", A.values, T.values))


def stress(grad_u: Field, params: StressParams) -> Field:
    _require_grad(grad_u)
    g = grad_u.grid
    S = kernels.stress(_flat(grad_u.values, g), params.mu, params.p)
    return Field(g, S.reshape(grad_u.values.shape))


# --------------------------------------------------------------------------
# mollifier


def _periodic_distance(grid: Grid) -> np.ndarray:
    """Distance of every node from the origin, minimum image."""
    L = grid.box_length
    r2 = 0
    for x in grid.coords:
        dx = np.minimum(x, L - x)
        r2 = r2 + dx**2
    return np.sqrt(r2)


def mollifier_kernel(grid: Grid, eta: float) -> np.ndarray:
    """Bump ``(1 - (r/eta)^2)^4`` on ``r < eta``, periodized, unit discrete mass."""
    r = _periodic_distance(grid)
    t = np.clip(1.0 - (r / eta) ** 2, 0.0, None)
    k = t**4
    return k / (k.sum() * grid.cell_volume)


def mollify(field: Field, eta: float) -> Field:
    """Periodic convolution with the normalized bump of radius ``eta``."""
    if eta < 0:
        raise ParameterError(f"eta must be >= 0, got {eta}")
    if eta == 0:
        return field.copy()
    g = field.grid
    if eta >= g.box_length / 2:
        raise ParameterError("mollifier radius must be below half the box length")
    khat = fft(mollifier_kernel(g, eta), g).real * g.cell_volume
    return Field(g, ifft(fft(field.values, g) * khat, g))


# --------------------------------------------------------------------------
# cut-off

CUTOFF_GRADIENT_CONSTANT = 15.0 / 8.0


def _smoothstep(t):
    t = np.clip(t, 0.0, 1.0)
    return t**3 * (10.0 - 15.0 * t + 6.0 * t**2)


def _radius(grid: Grid) -> np.ndarray:
    c = grid.center
    return np.sqrt(sum((x - ci) ** 2 for x, ci in zip(grid.coords, c)))


def _check_theta(grid: Grid, theta: float) -> None:
    if not (0 < theta <= grid.box_length / 4):
        raise SupportError(
            f"cut-off radius {theta} must lie in (0, box_length/4 = {grid.box_length / 4}]"
        )


def cutoff(grid: Grid, theta: float) -> Field:
    """Radial cut-off about the box centre: 1 for r <= theta, 0 for r >= 2 theta.

    The transition is a quintic smoothstep in ``r``, so ``|grad chi| <=
    CUTOFF_GRADIENT_CONSTANT / theta``.
    """
    _check_theta(grid, theta)
    t = (_radius(grid) - theta) / theta
    return Field(grid, 1.0 - _smoothstep(t))


def cutoff_gradient(grid: Grid, theta: float) -> Field:
    """Analytic gradient of :func:`cutoff` sampled at the nodes."""
    _check_theta(grid, theta)
    r = _radius(grid)
    t = np.clip((r - theta) / theta, 0.0, 1.0)
    dchi = -30.0 * t**2 * (1.0 - t) ** 2 / theta
    unit = np.zeros((grid.dim,) + grid.shape)
    for i, (x, ci) in enumerate(zip(grid.coords, grid.center)):
        np.divide(x - ci, r, out=unit[i], where=r > 0)
    return Field(grid, unit * dchi)


# --------------------------------------------------------------------------
# monotonicity


def monotonicity_gaps(A, B, params: StressParams, C: float) -> np.ndarray:
    """Vectorized gap for batches ``A, B`` of shape ``(m, d, d)``."""
    lhs, rhs = kernels.monotonicity_terms(A, B, params.mu, params.p)
    return lhs - C * rhs


def monotonicity_gap(A, B, params: StressParams, C: float) -> float:
    """``(S(A)-S(B)):(A-B) - C (mu+|A|^2+|B|^2)^((p-2)/2) |A-B|^2``."""
    A = np.asarray(A, float)[None]
    B = np.asarray(B, float)[None]
    return float(monotonicity_gaps(A, B, params, C)[0])


def random_matrix_pairs(n: int, dim: int, seed, include_equal: bool = True):
    """Random matrix pairs spread over scales ``1e-3..1e3`` and relative configurations.

    A quarter of the pairs are near-parallel (``B = t A + small``), which is
    where the monotonicity ratio is smallest; with ``include_equal`` a few
    exact ``A = B`` pairs are mixed in.
    """
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, dim, dim))
    B = rng.standard_normal((n, dim, dim))
    sa = 10.0 ** rng.uniform(-3, 3, n)
    sb = 10.0 ** rng.uniform(-3, 3, n)
    A *= sa[:, None, None]
    B *= sb[:, None, None]
    q = n // 4
    t = rng.uniform(-1.5, 1.5, q)
    noise = 10.0 ** rng.uniform(-6, 0, q)
    B[:q] = t[:, None, None] * A[:q] + noise[:, None, None] * sa[:q, None, None] * (
        rng.standard_normal((q, dim, dim))
    )
    if include_equal:
        k = max(1, n // 1000)
        B[-k:] = A[-k:]
    return A, B


def _ratio(A, B, params):
    lhs, rhs = kernels.monotonicity_terms(A, B, params.mu, params.p)
    ok = rhs > 0
    return lhs[ok] / rhs[ok], ok


def calibrate_monotonicity(
    p: float,
    mu_list=(0.0, 1.0),
    dim: int = 3,
    n_samples: int = 200_000,
    n_refine: int = 8,
    seed: int = 0,
) -> float:
    """Empirical constant ``C*(p)`` for the monotonicity inequality.

    Minimizes ``lhs / ((mu+|A|^2+|B|^2)^((p-2)/2) |A-B|^2)`` over random pairs
    for every ``mu`` in ``mu_list``, then polishes the ``n_refine`` smallest
    ratios with Nelder-Mead.  The result is an upper estimate of the true
    infimum; the analytic bound ``p - 1`` is always below it.
    """
    best = math.inf
    for mi, mu in enumerate(mu_list):
        params = StressParams(p, mu)
        A, B = random_matrix_pairs(n_samples, dim, [seed, mi], include_equal=False)
        r, ok = _ratio(A, B, params)
        best = min(best, float(r.min()))
        idx = np.argsort(r)[:n_refine]
        A0, B0 = A[ok][idx], B[ok][idx]
        for a0, b0 in zip(A0, B0):
            x0 = np.concatenate([a0.ravel(), b0.ravel()])
            scale = max(np.abs(x0).max(), 1e-12)

            def obj(x):
                a = (x[: dim * dim] * scale).reshape(1, dim, dim)
                b = (x[dim * dim :] * scale).reshape(1, dim, dim)
                rr, okk = _ratio(a, b, params)
                return float(rr[0]) if okk[0] else math.inf

            res = optimize.minimize(
                obj, x0 / scale, method="Nelder-Mead",
                options={"maxiter": 4000, "xatol": 1e-10, "fatol": 1e-12},
            )
            if np.isfinite(res.fun):
                best = min(best, float(res.fun))
    return best
