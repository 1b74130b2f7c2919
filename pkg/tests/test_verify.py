import json
import math

import numpy as np
import pytest

from pstokes.fields import Field, lq_norm_array, random_field
from pstokes.forcings import single_mode
from pstokes.nonlinearity import StressParams
from pstokes.potentials import CZTable, build_cz_table
from pstokes.solver import CascadeSchedule, cascade, weak_solve
from pstokes.verify import (
    CheckReport,
    check_embeddings,
    check_hessian_inequalities,
    check_monotonicity,
    check_solution_estimates,
    check_uniqueness,
    compact_random_field,
    gn_exponent,
    hessian_l2_ratio,
    monotonicity_constant,
)


@pytest.fixture(scope="module")
def cz16(grid16):
    return build_cz_table([4.0, 4.0 / 3.0, 2.0], grid16)


class TestCheckReport:
    @pytest.mark.parametrize("margin,passed", [(0.0, True), (1e-3, True), (-1e-12, False)])
    def test_pass_follows_margin(self, margin, passed):
        r = CheckReport("x", 1.0, 1.0 + margin, 1.0, margin, not passed)
        assert r.passed is passed

    def test_gated_keeps_none(self):
        r = CheckReport("x", math.nan, math.nan, 1.0, math.nan, None, status="gated")
        assert r.passed is None

    def test_json_keys(self):
        doc = CheckReport("x", 1.0, 2.0, 1.0, 1.0, True, seed=3).to_json()
        assert set(doc) >= {"name", "lhs", "rhs", "constant", "margin", "pass", "samples", "seed"}
        json.dumps(doc)


class TestMonotonicity:
    def test_p2_equality(self):
        rep = check_monotonicity([2.0], [0.0, 1.0], n_samples=20_000, factor=1.0)
        assert rep.passed
        # (A - B):(A - B) over |A - B|^2 is exactly one
        assert abs(rep.margin) < 1e-12

    def test_equal_pairs_zero(self):
        rep = check_monotonicity([1.6], [0.0], n_samples=20_000)
        assert all(d["equal_pairs"] > 0 and d["equal_pairs_zero"] for d in rep.details)

    def test_calibrated_pass(self):
        rep = check_monotonicity([1.6], [0.0, 1.0], n_samples=200_000, seed=4)
        assert rep.passed and all(d["plain_monotone"] for d in rep.details)

    def test_overstated_constant_fails(self):
        rep = check_monotonicity([1.6], [0.0], n_samples=200_000, factor=2.0)
        assert rep.passed is False

    def test_deterministic(self):
        a = check_monotonicity([1.8], [1.0], n_samples=10_000, seed=7).to_json()
        b = check_monotonicity([1.8], [1.0], n_samples=10_000, seed=7).to_json()
        assert a == b

    def test_constant_p2(self):
        assert monotonicity_constant(2.0) == 1.0


class TestHessianL2:
    def test_parseval_at_p2(self, grid16):
        for seed in range(5):
            v = random_field(grid16, 1, seed=seed)
            lhs, rhs = hessian_l2_ratio(v, StressParams(2.0, 0.3))
            assert abs(lhs / rhs - 1.0) <= 1e-10

    def test_single_mode_oracle(self, grid16):
        # v = (0, sin(k.x), 0): both sides equal |k|^2 ||w sin(k.x)||_2
        g = grid16
        k = np.array([1.0, 2.0, 0.0])
        phase = sum(ki * xi for ki, xi in zip(k, g.coords))
        vals = np.zeros((3,) + g.shape)
        vals[1] = np.sin(phase)
        sp = StressParams(1.8, 1.0)
        k2 = float(k @ k)
        w = (sp.mu + k2 * np.cos(phase) ** 2) ** ((sp.p - 2) / 2)
        expected = k2 * math.sqrt(np.mean((w * np.sin(phase)) ** 2) * g.box_length**3)
        lhs, rhs = hessian_l2_ratio(Field(g, vals), sp)
        assert lhs == pytest.approx(expected, rel=1e-10)
        assert rhs == pytest.approx(expected, rel=1e-10)

    @pytest.mark.parametrize("p", [1.6, 1.8, 1.95])
    @pytest.mark.parametrize("mu", [0.1, 1.0])
    def test_bound(self, grid16, p, mu):
        sp = StressParams(p, mu)
        for seed in range(10):
            lhs, rhs = hessian_l2_ratio(random_field(grid16, 1, seed=[seed, 1]), sp)
            assert lhs <= rhs / (2 * p - 3) * (1 + 1e-9)


class TestHessianInequalities:
    def test_four_reports(self, grid16, cz16):
        reps = check_hessian_inequalities(random_field(grid16, 1, seed=1), StressParams(1.9, 1.0), 4.0, cz16)
        assert [r.name for r in reps] == ["weighted_hessian_L2", "weighted_hessian_Lq",
                                          "weighted_third_Lq", "poisson_Lq"]
        assert all(r.passed for r in reps)

    def test_gate(self, grid16):
        # H(q') = 3 makes 4 H(q')(2-p) >= 1 at p = 1.9
        cz = CZTable({4.0: 1.5, 4.0 / 3.0: 3.0})
        reps = {r.name: r for r in check_hessian_inequalities(random_field(grid16, 1, seed=2),
                                                              StressParams(1.9, 0.5), 4.0, cz)}
        for name in ("weighted_hessian_Lq", "weighted_third_Lq"):
            assert reps[name].status == "gated" and reps[name].passed is None
        assert reps["weighted_hessian_L2"].status == "checked"

    def test_l2_gated_below_three_halves(self, grid16, cz16):
        reps = check_hessian_inequalities(random_field(grid16, 1, seed=3), StressParams(1.4, 1.0), 4.0, cz16)
        assert reps[0].status == "gated"

    def test_poisson_p2(self, grid16, cz16):
        rep = check_hessian_inequalities(random_field(grid16, 1, seed=4), StressParams(2.0, 0.0), 2.0,
                                         build_cz_table([2.0], grid16))[-1]
        assert rep.passed


class TestEmbeddings:
    def test_exponent(self):
        assert gn_exponent(3, 4, 2) == pytest.approx(6 / 7)

    def test_zero_vacuous(self, grid16):
        reps = check_embeddings(Field.zeros(grid16, 1), 1.9, 4.0)
        assert all(r.passed and r.lhs == 0 for r in reps)

    def test_compact_support(self, grid16):
        v = compact_random_field(grid16, 0)
        r2 = sum((x - c) ** 2 for x, c in zip(grid16.coords, grid16.center))
        assert np.all(v.values[:, r2 >= (grid16.box_length / 4) ** 2] == 0)

    def test_refinement_stable(self, grid32):
        from pstokes.fields import build_grid

        g64 = build_grid(3, 64, grid32.box_length)
        a = [r.lhs for r in check_embeddings(compact_random_field(grid32, 5), 1.9, 4.0)]
        b = [r.lhs for r in check_embeddings(compact_random_field(g64, 5), 1.9, 4.0)]
        for x, y in zip(a, b):
            assert abs(x / y - 1) <= 0.05


class TestSolutionEstimates:
    def test_stokes(self, grid16):
        f = single_mode(grid16, (1, 1, 0), (1, -1, 0))
        sol = cascade(f, 2.0, CascadeSchedule(mu_seq=(1.0,)))
        reps = {r.name: r for r in check_solution_estimates(sol, f, 4.0)}
        assert reps["stokes_D2u_L2"].passed and reps["energy_estimate"].passed

    def test_homogeneity(self, grid16):
        f = single_mode(grid16, (1, 0, 0), (0, 1, 0))
        p = 1.8
        sch = CascadeSchedule(mu_seq=(1.0, 0.1, 0.0))
        a, b = cascade(f, p, sch), cascade(Field(grid16, 2.0 * f.values), p, sch)
        reps = {r.name: r for r in check_solution_estimates(a, f, 4.0, scaled=(b, 2.0))}
        assert reps["homogeneity_D2u_Lq"].passed
        assert reps["homogeneity_grad_Lp"].passed

    def test_homogeneity_gated_positive_mu(self, grid16):
        f = single_mode(grid16, (1, 0, 0), (0, 1, 0))
        sch = CascadeSchedule(mu_seq=(1.0,))
        a, b = cascade(f, 1.9, sch), cascade(Field(grid16, 2.0 * f.values), 1.9, sch)
        reps = {r.name: r for r in check_solution_estimates(a, f, 4.0, scaled=(b, 2.0))}
        assert reps["homogeneity_grad_Lp"].status == "gated"


class TestUniqueness:
    def test_zero_forcing(self, grid8):
        rep = check_uniqueness(Field.zeros(grid8, 1), 1.8, CascadeSchedule(mu_seq=(1.0, 0.1)))
        assert rep.passed and rep.lhs == 0

    def test_p2(self, grid16):
        f = single_mode(grid16, (0, 1, 0), (1, 0, 0))
        rep = check_uniqueness(f, 2.0, CascadeSchedule(mu_seq=(1.0,)))
        assert rep.lhs <= 1e-10

    def test_nonlinear(self, grid16):
        f = single_mode(grid16, (0, 1, 0), (1, 0, 0))
        rep = check_uniqueness(f, 1.9, CascadeSchedule.geometric(1.0, 0.1))
        assert rep.passed
