"""Tests for solution functionals, running averages and field expressions.

The centered pairing has one hand-computable anchor: with v = u = 1 it equals
pi (1 - alpha1), because <1, 1>_N = pi on any midpoint grid.  The squashing
phi = alpha2 g / (1 + (g/alpha2)^2) attains its extreme value alpha2^2/2
exactly at |g| = |alpha2|; those two facts pin the sign conventions.
"""

import numpy as np
import pytest

from schsim import (DriftSpec, NoiseSource, RunningAverage, SchemeParams,
                    TestFunctionSpec, TimeAverageObserver, build_basis,
                    evaluate_expression, g_functional, initial_state,
                    lyapunov_v, mass, phi_test, run_trajectory,
                    time_average_ensemble, time_average_single,
                    validate_expression)

WELL = DriftSpec(0.5, -0.5, 1.0, -1.0)


def make_spec(basis, expr="exp(x)", alpha1=1.0, alpha2=2.0):
    return TestFunctionSpec.from_expression(basis, expr, alpha1, alpha2)


class TestMass:
    def test_constant(self):
        assert mass(np.full(10, 0.4)) == pytest.approx(0.4, rel=1e-15)

    def test_stack_gives_per_column_masses(self):
        stack = np.stack([np.ones(6), 3 * np.ones(6)], axis=1)
        np.testing.assert_allclose(mass(stack), [1.0, 3.0], rtol=1e-15)


class TestGFunctional:
    def test_unit_pairing_anchor(self):
        """g(1) with v = 1 equals pi (1 - alpha1); frozen by hand."""
        basis = build_basis(32)
        ones = np.ones(32)
        for alpha1 in (0.0, 0.5, 1.0):
            spec = TestFunctionSpec(ones, alpha1, 2.0)
            assert g_functional(basis, spec, ones) == pytest.approx(
                np.pi * (1.0 - alpha1), rel=1e-13)

    def test_full_projection_kills_constants(self):
        """alpha1 = 1 makes the pairing blind to the conserved mean."""
        basis = build_basis(16)
        spec = make_spec(basis, "exp(x)", alpha1=1.0)
        rng = np.random.default_rng(0)
        u = rng.standard_normal(16)
        base = g_functional(basis, spec, u)
        shifted = g_functional(basis, spec, u + 7.0)
        assert shifted == pytest.approx(base, abs=1e-12)
        assert abs(g_functional(basis, spec, np.full(16, 3.0))) < 1e-13

    def test_linear_in_u(self):
        basis = build_basis(12)
        spec = make_spec(basis, "cos(x)", alpha1=0.3, alpha2=1.0)
        rng = np.random.default_rng(1)
        u, w = rng.standard_normal((2, 12))
        lhs = g_functional(basis, spec, 2.0 * u - 3.0 * w)
        rhs = 2.0 * g_functional(basis, spec, u) - 3.0 * g_functional(basis, spec, w)
        assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-13)

    def test_stacks_evaluate_columnwise(self):
        basis = build_basis(8)
        spec = make_spec(basis)
        stack = np.stack([np.ones(8), np.cos(basis.grid)], axis=1)
        got = g_functional(basis, spec, stack)
        assert got.shape == (2,)
        assert got[0] == pytest.approx(g_functional(basis, spec, stack[:, 0]),
                                       abs=1e-14)

    def test_profile_grid_mismatch_rejected(self):
        basis = build_basis(8)
        spec = make_spec(build_basis(16))
        with pytest.raises(ValueError, match="16 nodes but basis has 8"):
            g_functional(basis, spec, np.ones(8))


class TestPhiTest:
    def test_bound_is_sharp_at_g_equals_alpha2(self):
        """phi attains alpha2^2/2 exactly where g = alpha2."""
        basis = build_basis(16)
        spec = make_spec(basis, "exp(x)", alpha1=0.0, alpha2=2.0)
        u = np.ones(16)
        scale = 2.0 / g_functional(basis, spec, u)
        assert phi_test(basis, spec, scale * u) == pytest.approx(2.0, rel=1e-13)

    def test_bound_holds_for_random_fields(self):
        basis = build_basis(16)
        spec = make_spec(basis, "exp(x)", alpha1=0.5, alpha2=1.5)
        rng = np.random.default_rng(2)
        for _ in range(50):
            u = 10.0 * rng.standard_normal(16)
            assert abs(phi_test(basis, spec, u)) <= 1.5**2 / 2 + 1e-12

    def test_odd_in_u_with_full_projection(self):
        basis = build_basis(16)
        spec = make_spec(basis, "exp(x)", alpha1=1.0, alpha2=2.0)
        rng = np.random.default_rng(3)
        u = rng.standard_normal(16)
        assert phi_test(basis, spec, -u) == pytest.approx(
            -phi_test(basis, spec, u), rel=1e-13)

    def test_monotone_for_small_g(self):
        # phi is increasing in g on |g| < |alpha2|
        basis = build_basis(8)
        spec = make_spec(basis, "exp(x)", alpha1=0.0, alpha2=5.0)
        values = [phi_test(basis, spec, t * np.ones(8)) for t in (0.0, 0.1, 0.2)]
        assert values[0] < values[1] < values[2]


class TestSpecValidation:
    def test_rejects_bad_profiles(self):
        with pytest.raises(ValueError, match="1-D"):
            TestFunctionSpec(np.ones((4, 2)), 1.0, 2.0)
        with pytest.raises(ValueError, match="non-finite"):
            TestFunctionSpec(np.array([1.0, np.nan]), 1.0, 2.0)

    def test_rejects_bad_alphas(self):
        with pytest.raises(ValueError, match="alpha1"):
            TestFunctionSpec(np.ones(4), float("inf"), 2.0)
        with pytest.raises(ValueError, match="alpha2"):
            TestFunctionSpec(np.ones(4), 1.0, 0.0)


class TestLyapunov:
    def test_constant_field_value(self):
        # coefficients (c sqrt(pi), 0, ...): V = pi c^2 + 1, frozen by hand
        basis = build_basis(20)
        assert lyapunov_v(basis, np.full(20, 2.0)) == pytest.approx(
            4.0 * np.pi + 1.0, rel=1e-13)

    def test_single_mode_weighting(self):
        basis = build_basis(12)
        u = 3.0 * basis.from_spectral(np.eye(12)[4])
        expected = 9.0 / basis.eigenvalues[4] + 1.0
        assert lyapunov_v(basis, u) == pytest.approx(expected, rel=1e-12)

    def test_lower_bound_and_stacks(self):
        basis = build_basis(8)
        rng = np.random.default_rng(4)
        stack = rng.standard_normal((8, 5))
        values = lyapunov_v(basis, stack)
        assert values.shape == (5,)
        assert np.all(values >= 1.0)


class TestRunningAverage:
    def test_matches_numpy_mean(self):
        rng = np.random.default_rng(5)
        xs = rng.standard_normal(100)
        acc = RunningAverage()
        for x in xs:
            acc.update(x)
        assert acc.average == pytest.approx(np.mean(xs), rel=1e-13)
        assert acc.count == 100

    def test_update_returns_current_average(self):
        acc = RunningAverage()
        assert acc.update(2.0) == 2.0
        assert acc.update(4.0) == 3.0

    def test_empty_average_raises(self):
        with pytest.raises(ValueError, match="no samples"):
            RunningAverage().average


class TestTimeAverageObserver:
    def make(self, n=8, tau=1e-2, **kw):
        params = SchemeParams(build_basis(n), WELL, tau)
        spec = make_spec(params.basis)
        return params, TimeAverageObserver(params, spec, **kw)

    def test_counts_initial_state(self):
        params, obs = self.make()
        state = initial_state(params, np.ones(8))
        obs(0, state)
        assert obs.running.count == 1
        assert obs.history[0][0] == 0.0

    def test_burn_in_skips_early_states(self):
        params, obs = self.make(burn_in_steps=5)
        state = initial_state(params, np.ones(8))
        for m in range(10):
            obs(m, state)
        assert obs.running.count == 5  # samples at m = 5..9

    def test_record_every_thins_history_not_average(self):
        params, obs = self.make(record_every=4)
        state = initial_state(params, np.ones(8))
        for m in range(9):
            obs(m, state)
        obs.finalize()
        assert obs.running.count == 9
        assert [t for t, _ in obs.history] == pytest.approx(
            [0.0, 4 * params.tau, 8 * params.tau])

    def test_finalize_appends_missing_last_sample(self):
        params, obs = self.make(record_every=3)
        state = initial_state(params, np.ones(8))
        for m in range(5):
            obs(m, state)
        obs.finalize()
        assert obs.history[-1][0] == pytest.approx(4 * params.tau)

    def test_validation(self):
        with pytest.raises(ValueError, match="burn_in_steps"):
            self.make(burn_in_steps=-1)
        with pytest.raises(ValueError, match="record_every"):
            self.make(record_every=0)


class TestTimeAverages:
    def test_single_of_stationary_run_is_phi_of_state(self):
        """sigma = 0 from the equilibrium u = 1: every sample is equal."""
        params = SchemeParams(build_basis(8), WELL, 1e-2, 0.0)
        spec = make_spec(params.basis, alpha1=0.0, alpha2=3.0)
        state0 = initial_state(params, np.ones(8))
        source = NoiseSource(0, tau_fine=params.tau, n_modes_max=7)
        avg, history, final = time_average_single(params, state0, source, 50, spec)
        expected = phi_test(params.basis, spec, np.ones(8))
        assert avg == pytest.approx(expected, rel=1e-11)
        assert final.step_index == 50
        assert history[-1][0] == pytest.approx(50 * params.tau)

    def test_single_matches_direct_mean_of_samples(self):
        params = SchemeParams(build_basis(8), WELL, 1e-2)
        spec = make_spec(params.basis)
        state0 = initial_state(params, np.cos(params.basis.grid))
        values = []

        def recorder(m, state):
            u = params.basis.from_spectral(state.coeffs)
            values.append(phi_test(params.basis, spec, u))

        src = NoiseSource(8, tau_fine=params.tau, n_modes_max=7)
        run_trajectory(params, initial_state(params, np.cos(params.basis.grid)),
                       src, 40, observers=(recorder,))
        src2 = NoiseSource(8, tau_fine=params.tau, n_modes_max=7)
        avg, _, _ = time_average_single(params, state0, src2, 40, spec)
        assert avg == pytest.approx(np.mean(values), rel=1e-12)

    def test_ensemble_grand_average_is_mean_of_per_trajectory(self):
        params = SchemeParams(build_basis(8), WELL, 1e-2)
        spec = make_spec(params.basis)
        sources = [NoiseSource(9, l, tau_fine=params.tau, n_modes_max=7)
                   for l in range(4)]
        c0 = params.basis.to_spectral(np.full(8, 1 / 3))
        grand, per_traj, history, final = time_average_ensemble(
            params, c0, sources, 30, spec)
        assert per_traj.shape == (4,)
        assert grand == pytest.approx(np.mean(per_traj), rel=1e-14)
        assert final.shape == (8, 4)
        assert history[-1][0] == pytest.approx(30 * params.tau)

    def test_ensemble_burn_in_and_validation(self):
        params = SchemeParams(build_basis(8), WELL, 1e-2)
        spec = make_spec(params.basis)
        sources = [NoiseSource(9, 0, tau_fine=params.tau, n_modes_max=7)]
        with pytest.raises(ValueError, match="burn_in_steps"):
            time_average_ensemble(params, np.zeros(8), sources, 5, spec,
                                  burn_in_steps=-2)
        grand, per_traj, _, _ = time_average_ensemble(
            params, np.zeros(8), sources, 10, spec, burn_in_steps=10)
        # only the final state survives the burn-in
        assert per_traj.shape == (1,)


class TestExpressions:
    def test_constant_fraction(self):
        x = np.array([0.0, 1.0, 2.0])
        np.testing.assert_allclose(evaluate_expression("1/3", x),
                                   np.full(3, 1 / 3), rtol=1e-15)

    def test_cosine_with_fractional_coefficient(self):
        x = np.linspace(0, np.pi, 7)
        got = evaluate_expression("(1/3)*cos(x)+1/3", x)
        np.testing.assert_allclose(got, np.cos(x) / 3 + 1 / 3, rtol=1e-14)

    def test_harmonic_and_sum(self):
        x = np.linspace(0, 3, 5)
        got = evaluate_expression("2*cos(2x) + cos(x) + 1/3", x)
        np.testing.assert_allclose(got, 2 * np.cos(2 * x) + np.cos(x) + 1 / 3,
                                   rtol=1e-14)

    def test_exponentials(self):
        x = np.array([0.0, 0.5])
        np.testing.assert_allclose(evaluate_expression("exp(x)", x), np.exp(x))
        np.testing.assert_allclose(evaluate_expression("exp(-x)", x), np.exp(-x))

    def test_leading_minus(self):
        x = np.array([0.2])
        np.testing.assert_allclose(evaluate_expression("-cos(x)+1", x),
                                   1 - np.cos(x), rtol=1e-14)

    def test_whitespace_ignored(self):
        x = np.array([0.3])
        assert evaluate_expression(" 1/3 + cos( x ) ", x) == pytest.approx(
            evaluate_expression("1/3+cos(x)", x))

    @pytest.mark.parametrize("bad", [
        "", "   ", "import os", "u**2", "cos(x", "cos(y)", "exp(2x)",
        "1/0", "sin(x)", "cos(x))",
    ])
    def test_rejects_malformed_descriptors(self, bad):
        with pytest.raises(ValueError):
            validate_expression(bad)


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
