import math

import numpy as np
import pytest

import brslab as bl
from brslab.tdinput import TOL_MEMBERSHIP, check_membership, disturbance_family


@pytest.fixture(scope="module")
def sigma1():
    return bl.make("sigma1")


class TestGrowthMargin:
    def test_requires_tags(self):
        f = bl.ScalarFun(np.array([0.0, 1.0]), np.array([0.0, 0.5]), 0.5, frozenset({"Kinf"}))
        with pytest.raises(ValueError):
            bl.GrowthMargin(f)

    def test_accepts_unit_lipschitz_kinf(self):
        f = bl.ScalarFun(
            np.array([0.0, 1.0]), np.array([0.0, 0.5]), 0.5, frozenset({"Kinf", "Lip1"})
        )
        m = bl.GrowthMargin(f)
        assert m(2.0) == pytest.approx(1.0)


class TestDisturbanceSignal:
    def test_rejects_values_outside_unit_ball(self):
        with pytest.raises(ValueError):
            bl.DisturbanceSignal(np.array([1.0]), np.array([[1.5]]), np.array([0.0]))

    def test_family_prefix_stable_and_bounded(self):
        fam3 = disturbance_family(2, 3.0, 3, seed=7)
        fam6 = disturbance_family(2, 3.0, 6, seed=7)
        for a, b in zip(fam3, fam6):
            for t in np.linspace(0, 4, 17):
                assert np.array_equal(a.eval(t), b.eval(t))
        for d in fam6:
            assert d.sup_norm() <= 1 + 1e-9

    def test_family_deterministic(self):
        a = disturbance_family(1, 2.0, 5, seed=11)
        b = disturbance_family(1, 2.0, 5, seed=11)
        for da, db in zip(a, b):
            assert np.array_equal(da.breakpoints, db.breakpoints)
            assert np.array_equal(da._all_values(), db._all_values())


class TestClosedLoop:
    def test_sigma1_feedback_rhs_formula(self, sigma1):
        cl = bl.closed_loop(sigma1.system, sigma1.margin)
        rng = np.random.default_rng(5)
        for _ in range(200):
            x = rng.uniform(-3, 3, 1)
            d = rng.uniform(-1, 1, 1)
            got = cl.rhs(x, d)[0]
            ax = abs(x[0])
            if ax == 0:
                expect = 0.0
            elif ax <= math.exp(-1):
                expect = 0.5 * abs(d[0]) * x[0] * ax
            else:
                expect = -0.5 * abs(d[0]) * x[0] * ax * math.log(ax)
            assert got == pytest.approx(expect, abs=1e-12)

    def test_name_suffix(self, sigma1):
        assert bl.closed_loop(sigma1.system, sigma1.margin).name == "sigma1:eta-loop"


class TestLiftProject:
    def test_lifted_input_is_member(self, sigma1):
        d = bl.DisturbanceSignal(np.array([1.0]), np.array([[0.8]]), np.array([-0.5]))
        u, _ = bl.lift_disturbance(sigma1.system, sigma1.margin, [0.4], d, 2.0)
        rep = check_membership(sigma1.system, sigma1.margin, [0.4], u, 2.0)
        assert rep.is_member

    def test_scaled_input_is_not_member(self, sigma1):
        d = bl.DisturbanceSignal(np.array([1.0]), np.array([[0.8]]), np.array([-0.5]))
        u, _ = bl.lift_disturbance(sigma1.system, sigma1.margin, [0.4], d, 2.0)

        class Scaled:
            breakpoints = u.breakpoints
            dim = 1

            def eval(self, t):
                return 3.0 * u.eval(t)

        rep = check_membership(sigma1.system, sigma1.margin, [0.4], Scaled(), 2.0)
        assert not rep.is_member
        assert rep.max_violation > TOL_MEMBERSHIP

    def test_roundtrip_recovers_disturbance(self, sigma1):
        d = bl.DisturbanceSignal(np.array([0.9]), np.array([[0.7]]), np.array([-0.9]))
        grid = np.linspace(0, 2, 101)
        u, traj_cl = bl.lift_disturbance(sigma1.system, sigma1.margin, [0.5], d, 2.0)
        d2 = bl.project_input(sigma1.system, sigma1.margin, [0.5], u, 2.0, grid=grid)
        for t in grid:
            eta = sigma1.margin(np.linalg.norm(traj_cl.state_at(t)))
            if eta > 1e-6:
                assert np.linalg.norm(d2.eval(t) - d.eval(t)) < 1e-6

    def test_piecewise_representation_approximates(self, sigma1):
        d = bl.DisturbanceSignal(np.array([0.9]), np.array([[0.7]]), np.array([-0.9]))
        u_pc, traj_cl = bl.lift_disturbance(
            sigma1.system, sigma1.margin, [0.5], d, 2.0, representation="piecewise"
        )
        traj_ol = bl.integrate(sigma1.system, [0.5], u_pc, 2.0)
        # discrepancy is grid-controlled, not integrator-exact
        diff = max(
            np.linalg.norm(traj_cl.state_at(t) - traj_ol.state_at(t))
            for t in np.linspace(0, 2, 41)
        )
        assert diff < 1e-2

    def test_unknown_representation(self, sigma1):
        d = bl.DisturbanceSignal.constant(np.array([1.0]))
        with pytest.raises(ValueError):
            bl.lift_disturbance(sigma1.system, sigma1.margin, [0.5], d, 1.0, representation="x")

    def test_division_guard_at_equilibrium(self, sigma1):
        # phi stays at 0, eta vanishes, yet the input is nonzero: non-dominated
        u = bl.InputSignal.constant([1.0])
        with pytest.raises(bl.DivisionGuardError):
            bl.project_input(sigma1.system, sigma1.margin, [0.0], u, 1.0)

    def test_zero_input_projects_to_zero(self, sigma1):
        u = bl.InputSignal.constant([0.0])
        d = bl.project_input(sigma1.system, sigma1.margin, [0.0], u, 1.0)
        assert d.sup_norm() == 0.0


class TestSampleTdi:
    def test_sampled_inputs_are_members(self, sigma1):
        samples = bl.sample_tdi(sigma1.system, sigma1.margin, [0.7], 1.5, 3, seed=2)
        assert len(samples) == 3
        for u, _ in samples:
            rep = check_membership(sigma1.system, sigma1.margin, [0.7], u, 1.5)
            assert rep.is_member

    def test_dump_bundles(self, tmp_path, sigma1):
        from brslab.tdinput import dump_tdi_samples

        samples = bl.sample_tdi(sigma1.system, sigma1.margin, [0.7], 1.0, 2, seed=2)
        dump_tdi_samples(samples, tmp_path)
        assert (tmp_path / "tdi_0.csv").exists()
        assert (tmp_path / "tdi_1_input.csv").exists()
