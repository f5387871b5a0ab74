import json
import math

import numpy as np
import pytest

import brslab as bl


class TestRegistry:
    def test_listing_is_json(self):
        listing = json.loads(bl.list_examples())
        assert set(listing) == {
            "linear", "quadratic", "reaction_diffusion", "sigma1", "sigma2"
        }
        for entry in listing.values():
            assert entry["documented_properties"]

    def test_unknown_name(self):
        with pytest.raises(KeyError, match="unknown example"):
            bl.make("does-not-exist")


class TestSigma1:
    def test_rhs_matches_formula(self, sigma1):
        rng = np.random.default_rng(17)
        for _ in range(1000):
            x = rng.uniform(-4, 4)
            u = rng.uniform(-4, 4)
            got = sigma1.system.rhs(np.array([x]), np.array([u]))[0]
            expect = 0.0 if x == 0 else -abs(u) * x * math.log(abs(x))
            assert got == pytest.approx(expect, abs=1e-12)

    def test_rhs_zero_at_origin(self, sigma1):
        assert sigma1.system.rhs(np.array([0.0]), np.array([7.0]))[0] == 0.0

    def test_closed_form_flow(self, sigma1):
        flow = sigma1.closed_forms["flow_u1"]
        for x in (-1.0, -0.125, 0.125, 0.729, 1.0):
            assert flow(math.log(3), np.array([x]))[0] == pytest.approx(
                math.copysign(abs(x) ** (1 / 3), x)
            )

    def test_margin_formula_and_lipschitz(self, sigma1):
        eta = sigma1.margin.eta
        s = 0.2
        assert eta(s) == pytest.approx(-s / (2 * math.log(s)), abs=1e-15)
        assert eta(1.0) == pytest.approx(0.5)
        chords = np.diff(eta.values) / np.diff(eta.knots)
        assert np.all(chords <= 1 + 1e-12)

    def test_trajectory_bound_sampled(self, sigma1):
        rng = np.random.default_rng(23)
        for _ in range(20):
            x0 = rng.uniform(-3, 3)
            u = bl.InputSignal.constant([rng.uniform(-3, 3)])
            traj = bl.integrate(sigma1.system, [x0], u, rng.uniform(0.1, 4.0))
            assert traj.norms().max() <= max(1.0, abs(x0)) + 1e-9

    def test_closed_loop_derivative_bound(self, sigma1):
        cl = bl.closed_loop(sigma1.system, sigma1.margin)
        rng = np.random.default_rng(29)
        h = 1e-7
        for _ in range(200):
            x = rng.uniform(-2.5, 2.5)
            if min(abs(x), abs(abs(x) - math.exp(-1))) < 1e-3:
                continue
            d = np.array([rng.uniform(-1, 1)])
            deriv = (cl.rhs(np.array([x + h]), d) - cl.rhs(np.array([x - h]), d))[0] / (2 * h)
            assert abs(deriv) <= max(abs(x), x * x) + 1e-4


class TestSigma2:
    def test_matches_sigma1_at_unit_input(self, sigma1):
        s2 = bl.make("sigma2")
        rng = np.random.default_rng(31)
        for _ in range(100):
            x = rng.uniform(-3, 3, 1)
            u = rng.uniform(-3, 3, 1)
            assert s2.system.rhs(x, u) == pytest.approx(
                sigma1.system.rhs(x, np.array([1.0])), abs=1e-15
            )

    def test_flow_is_sigma1_unit_flow(self):
        s2 = bl.make("sigma2")
        traj = bl.integrate(s2.system, [0.125], bl.InputSignal.constant([0.0]), math.log(3))
        assert traj.states[-1][0] == pytest.approx(0.5, rel=1e-7)


class TestLinear:
    def test_variation_of_constants(self):
        # oracle: x(t) = e^{-t} x0 + (1 - e^{-t}) u for A = -I, B = I
        b = bl.make("linear", {"A": (-np.eye(2)).tolist(), "B": np.eye(2).tolist()})
        x0 = np.array([1.0, -2.0])
        uv = np.array([0.5, 0.25])
        traj = bl.integrate(b.system, x0, bl.InputSignal.constant(uv), 1.5)
        expect = math.exp(-1.5) * x0 + (1 - math.exp(-1.5)) * uv
        assert np.allclose(traj.states[-1], expect, atol=1e-8)


class TestQuadratic:
    def test_tmax_closed_form(self):
        q = bl.make("quadratic")
        assert q.closed_forms["tmax"](2.0) == 0.5
        assert math.isinf(q.closed_forms["tmax"](-1.0))


class TestReactionDiffusion:
    def test_laplacian_structure(self):
        b = bl.make("reaction_diffusion", {"n": 8})
        A = b.system.linear_part
        assert A.shape == (8, 8)
        assert np.all(np.diag(A) == -2 * 64)
        assert np.all(np.diag(A, 1) == 64)
        ev = np.linalg.eigvalsh(A)
        assert ev.max() < 0

    def test_rhs_formula(self):
        b = bl.make("reaction_diffusion", {"n": 4, "a": 2.0})
        x = np.array([0.5, -1.0, 0.0, 2.0])
        u = np.array([0.3])
        got = b.system.rhs(x, u)
        expect = -2.0 * x**3 / (1 + x * x) + np.ones(4) / 2.0 * 0.3
        assert np.allclose(got, expect, atol=1e-12)

    def test_no_blowup_on_unit_ball(self):
        b = bl.make("reaction_diffusion")
        rng = np.random.default_rng(37)
        x0 = rng.standard_normal(32)
        x0 /= np.linalg.norm(x0)
        traj = bl.integrate(
            b.system, x0, bl.InputSignal.constant([1.0]), 1.0,
            bl.IntegratorConfig(rel_tol=1e-6, abs_tol=1e-9),
        )
        assert not traj.blew_up
