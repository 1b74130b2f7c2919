import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pstokes.errors import ParameterError, RankError, SingularWeightError, SupportError
from pstokes.fields import Field, build_grid, norm, random_field
from pstokes.nonlinearity import (
    CUTOFF_GRADIENT_CONSTANT,
    RegParams,
    StressParams,
    calibrate_monotonicity,
    contract_A,
    cutoff,
    cutoff_gradient,
    mollifier_kernel,
    mollify,
    monotonicity_gap,
    monotonicity_gaps,
    random_matrix_pairs,
    stress,
    tensor_A,
    weight_a,
)
from pstokes.verify import monotonicity_constant


def _grad_field(grid, seed, scale=1.0):
    return Field(grid, scale * random_field(grid, rank=2, seed=seed).values)


class TestParams:
    @pytest.mark.parametrize("p", [1.0, 2.1, 0.5])
    def test_bad_p(self, p):
        with pytest.raises(ParameterError):
            StressParams(p, 0.0)

    def test_bad_mu(self):
        with pytest.raises(ParameterError):
            StressParams(1.5, -1e-3)

    def test_singular_flag(self):
        assert StressParams(1.5, 0.0).singular and not StressParams(1.5, 0.1).singular

    def test_reg_rho_box_check(self, grid8):
        with pytest.raises(ParameterError):
            RegParams(rho=4.0).check_grid(grid8)
        RegParams(rho=3.0).check_grid(grid8)

    @pytest.mark.parametrize("field", ["epsilon", "eta", "delta"])
    def test_reg_negative(self, field):
        with pytest.raises(ParameterError):
            RegParams(**{field: -1.0})


class TestWeight:
    def test_zero_gradient(self, grid8):
        w = weight_a(Field.zeros(grid8, 2), 0.25, StressParams(1.5, 1.0))
        assert np.all(w.values == 1.0)

    def test_singular_value(self, grid8):
        G = np.zeros((3, 3) + grid8.shape)
        G[0, 1] = 2.0
        w = weight_a(Field(grid8, G), 0.5, StressParams(1.5, 0.0))
        np.testing.assert_allclose(w.values, 2.0, rtol=1e-15)

    def test_s_zero(self, grid8):
        w = weight_a(_grad_field(grid8, 1), 0.0, StressParams(1.7, 0.3))
        assert np.all(w.values == 1.0)

    def test_lower_bound(self, grid8):
        mu, s = 0.3, 0.75
        w = weight_a(_grad_field(grid8, 2), s, StressParams(1.7, mu))
        assert w.values.min() >= mu**s

    def test_singular_negative_exponent(self, grid8):
        with pytest.raises(SingularWeightError):
            weight_a(_grad_field(grid8, 3), -0.1, StressParams(1.5, 0.0))

    def test_rank_check(self, grid8):
        with pytest.raises(RankError):
            weight_a(Field.zeros(grid8, 1), 0.5, StressParams(1.5, 1.0))

    def test_delta_mollifies(self, grid8):
        G = _grad_field(grid8, 4)
        w0 = weight_a(G, 1.0, StressParams(1.5, 1.0))
        w1 = weight_a(G, 1.0, StressParams(1.5, 1.0), delta=1.0)
        assert not np.allclose(w0.values, w1.values)


class TestTensorA:
    def test_entry_bound_s1(self, grid8):
        A = tensor_A(_grad_field(grid8, 5, 10.0), 1.0, StressParams(1.5, 0.0))
        assert np.abs(A.values).max() <= 1.0 + 1e-15

    def test_zero_gradient(self, grid8):
        A = tensor_A(Field.zeros(grid8, 2), 1.5, StressParams(1.5, 0.0))
        assert np.all(A.values == 0.0)

    def test_contraction_naive_oracle(self):
        g = build_grid(3, 8, 2 * math.pi)
        sp = StressParams(1.6, 0.2)
        G = _grad_field(g, 6)
        T = random_field(g, rank=3, seed=7)
        A = tensor_A(G, (4 - sp.p) / 2, sp)
        got = contract_A(A, T).values
        Av, Tv = A.values, T.values
        want = np.zeros((3,) + g.shape)
        for i in range(3):
            for j in range(3):
                for h in range(3):
                    for k in range(3):
                        want[i] += Av[i, j, h, k] * Tv[j, h, k]
        assert np.abs(got - want).max() <= 1e-12 * np.abs(want).max()

    def test_contract_rank_check(self, grid8):
        with pytest.raises(RankError):
            contract_A(Field.zeros(grid8, 3), Field.zeros(grid8, 3))


class TestStress:
    def test_p2_identity(self, grid8):
        G = _grad_field(grid8, 8)
        for mu in (0.0, 3.0):
            np.testing.assert_array_equal(stress(G, StressParams(2.0, mu)).values, G.values)

    def test_singular_value(self, grid8):
        G = np.zeros((3, 3) + grid8.shape)
        G[2, 0] = 4.0
        S = stress(Field(grid8, G), StressParams(1.5, 0.0))
        np.testing.assert_allclose(S.values, 0.5 * G, rtol=1e-15)

    def test_zero_gradient_singular(self, grid8):
        S = stress(Field.zeros(grid8, 2), StressParams(1.2, 0.0))
        assert np.all(S.values == 0.0)

    @given(lam=st.floats(1e-3, 1e3), p=st.floats(1.05, 2.0), seed=st.integers(0, 1000))
    def test_homogeneity(self, lam, p, seed):
        g = build_grid(2, 8, 1.0)
        G = _grad_field(g, seed)
        sp = StressParams(p, 0.0)
        a = stress(Field(g, lam * G.values), sp).values
        b = lam ** (p - 1) * stress(G, sp).values
        assert np.abs(a - b).max() <= 1e-12 * np.abs(b).max()


def _direct_convolution(values, kernel, grid):
    """O(N^2) periodic convolution on the node lattice."""
    n = grid.points_per_axis
    flat_k = kernel
    out = np.zeros_like(values)
    idx = np.indices(grid.shape).reshape(grid.dim, -1).T
    for a in idx:
        acc = 0.0
        for b in idx:
            shift = tuple((a - b) % n)
            acc += values[tuple(b)] * flat_k[shift]
        out[tuple(a)] = acc * grid.cell_volume
    return out


class TestMollify:
    def test_identity(self, grid8):
        f = random_field(grid8, rank=0, seed=9)
        assert np.array_equal(mollify(f, 0.0).values, f.values)

    def test_negative(self, grid8):
        with pytest.raises(ParameterError):
            mollify(Field.zeros(grid8), -0.1)

    def test_constant(self, grid8):
        f = Field(grid8, np.full(grid8.shape, 2.5))
        np.testing.assert_allclose(mollify(f, 1.2).values, 2.5, rtol=1e-13)

    def test_direct_convolution_oracle(self):
        g = build_grid(2, 8, 2 * math.pi)
        rng = np.random.default_rng(10)
        vals = rng.standard_normal(g.shape) + 1.0
        eta = 1.5
        got = mollify(Field(g, vals), eta).values
        want = _direct_convolution(vals, mollifier_kernel(g, eta), g)
        np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-12)
        assert norm(Field(g, got), "Lq", 2.0) <= norm(Field(g, vals), "Lq", 2.0)
        assert abs(got.mean() - vals.mean()) <= 1e-12


class TestCutoff:
    def test_inside_outside(self, grid16):
        theta = grid16.box_length / 8
        chi = cutoff(grid16, theta).values
        r = np.sqrt(sum((x - c) ** 2 for x, c in zip(grid16.coords, grid16.center)))
        assert np.all(chi[r <= theta] == 1.0)
        assert np.all(chi[r >= 2 * theta] == 0.0)
        assert chi.min() >= 0.0 and chi.max() <= 1.0

    def test_half_radius_node(self):
        g = build_grid(2, 16, 16.0)
        chi = cutoff(g, 4.0).values
        assert chi[10, 8] == 1.0  # distance 2 = theta / 2
        assert chi[8, 8] == 1.0

    def test_far_node(self):
        g = build_grid(2, 32, 32.0)
        chi = cutoff(g, 4.0).values
        assert chi[16 + 12, 16] == 0.0  # distance 3 theta

    @pytest.mark.parametrize("n", [16, 32, 64])
    def test_gradient_bound(self, n):
        g = build_grid(3, n, 2 * math.pi) if n < 64 else build_grid(2, n, 2 * math.pi)
        theta = g.box_length / 4
        dchi = cutoff_gradient(g, theta).magnitude().max()
        assert dchi * theta <= CUTOFF_GRADIENT_CONSTANT + 1e-12
        assert CUTOFF_GRADIENT_CONSTANT <= 2.5

    def test_support_error(self, grid8):
        with pytest.raises(SupportError):
            cutoff(grid8, grid8.box_length / 3)
        with pytest.raises(SupportError):
            cutoff(grid8, 0.0)


class TestMonotonicity:
    def test_equal_pairs(self):
        A = np.arange(9.0).reshape(3, 3)
        assert monotonicity_gap(A, A, StressParams(1.5, 0.0), 0.5) == 0.0

    @pytest.mark.parametrize("mu", [0.0, 1.0, 10.0])
    def test_p2_equality(self, mu):
        A, B = random_matrix_pairs(1000, 3, 0)
        gaps = monotonicity_gaps(A, B, StressParams(2.0, mu), 1.0)
        d2 = np.sum((A - B) ** 2, axis=(1, 2))
        assert np.all(np.abs(gaps) <= 1e-12 * d2 + 1e-300)

    @pytest.mark.parametrize("p", [1.5, 1.6, 1.8, 1.95])
    def test_calibrated_constant(self, p):
        C = monotonicity_constant(p)
        for mu in (0.0, 1.0):
            A, B = random_matrix_pairs(100_000, 3, [11, int(100 * p)])
            assert np.all(monotonicity_gaps(A, B, StressParams(p, mu), 0.9 * C) >= 0)
            assert np.all(monotonicity_gaps(A, B, StressParams(p, mu), 0.0) >= 0)

    def test_analytic_lower_bound(self):
        for p in (1.2, 1.5, 1.8):
            assert monotonicity_constant(p) >= p - 1.0

    def test_shipped_table_matches_calibration(self):
        fresh = calibrate_monotonicity(1.6, n_samples=20_000, n_refine=4)
        assert fresh == pytest.approx(monotonicity_constant(1.6), rel=1e-6)
