"""Tests for the tamed exponential-Euler step and trajectory drivers.

Oracles used here:
  * constants are fixed points of the deterministic scheme (the discrete
    Laplacian kills the drift's mean mode and mode 0 carries no noise);
  * for a linear drift the full update collapses to a per-mode scalar
    recursion that can be replayed independently;
  * mode 0 is copied verbatim every step, so mass conservation is exact,
    not approximate.
"""

import math
import warnings

import numpy as np
import pytest

from schsim import (DriftSpec, NoiseSource, SchemeParams, SchemeState,
                    TrajectoryBlowUpError, build_basis, initial_state,
                    read_checkpoint, run_ensemble, run_trajectory, solution_at,
                    state_from_coeffs, step, write_checkpoint)

# double-well drift used throughout: f(x) = x^3/2 - x^2/2 + x - 1
WELL = DriftSpec(0.5, -0.5, 1.0, -1.0)


def make_params(n=16, tau=1e-2, sigma=1.0, drift=WELL):
    return SchemeParams(build_basis(n), drift, tau, sigma)


def make_source(params, seed=3, trajectory_id=0):
    return NoiseSource(seed, trajectory_id, tau_fine=params.tau,
                       n_modes_max=params.basis.n_modes - 1)


class TestDriftSpec:
    def test_double_well_values(self):
        # hand-computed: f(1) = 0 (equilibrium), f(0) = -1
        assert WELL.evaluate(1.0) == 0.0
        assert WELL.evaluate(0.0) == -1.0

    def test_evaluate_elementwise(self):
        x = np.array([-1.0, 0.0, 2.0])
        np.testing.assert_allclose(WELL.evaluate(x), [-3.0, -1.0, 3.0],
                                   rtol=1e-15)

    def test_derivative_matches_difference_quotient(self):
        h = 1e-6
        for x in (-2.0, 0.3, 1.7):
            fd = (WELL.evaluate(x + h) - WELL.evaluate(x - h)) / (2 * h)
            assert WELL.derivative(x) == pytest.approx(fd, rel=1e-8)

    def test_one_sided_lipschitz_of_double_well(self):
        # f'(x) = (3/2)(x - 1/3)^2 + 5/6 > 0, so max(-f') = -5/6: the drift
        # is monotone and sits well below the lambda_1 dissipativity margin
        assert WELL.one_sided_lipschitz() == pytest.approx(-5.0 / 6.0, abs=2e-6)

    def test_one_sided_lipschitz_linear(self):
        spec = DriftSpec(0.0, 0.0, -2.0, 0.0, validation_mode=True)
        assert spec.one_sided_lipschitz() == pytest.approx(2.0, rel=1e-12)

    def test_rejects_negative_leading_coefficient(self):
        with pytest.raises(ValueError, match="a0 must be nonnegative"):
            DriftSpec(-1.0)

    def test_rejects_degenerate_cubic_without_validation_mode(self):
        with pytest.raises(ValueError, match="validation_mode"):
            DriftSpec(0.0, 0.0, 1.0)
        # allowed once flagged
        DriftSpec(0.0, 0.0, 1.0, validation_mode=True)

    def test_rejects_non_finite_coefficients(self):
        with pytest.raises(ValueError, match="finite"):
            DriftSpec(1.0, float("nan"))


class TestSchemeParams:
    def test_tau_range(self):
        basis = build_basis(8)
        for bad in (0.0, -0.1, 1.0, float("nan")):
            with pytest.raises(ValueError, match="tau"):
                SchemeParams(basis, WELL, bad)

    def test_sigma_range(self):
        basis = build_basis(8)
        with pytest.raises(ValueError, match="sigma"):
            SchemeParams(basis, WELL, 0.1, -1.0)

    def test_basis_type_checked(self):
        with pytest.raises(TypeError, match="SpectralBasis"):
            SchemeParams(None, WELL, 0.1)

    def test_semigroup_is_cached_and_frozen(self):
        params = make_params()
        factors = params.semigroup
        assert factors is params.semigroup
        assert factors[0] == 1.0
        assert not factors.flags.writeable

    def test_dissipativity_warning(self):
        """A drift steeper than -lambda_1 only warns; it is not an error."""
        steep = DriftSpec(0.0, 0.0, -50.0, 0.0, validation_mode=True)
        with pytest.warns(RuntimeWarning, match="dissipativity"):
            SchemeParams(build_basis(8), steep, 0.1)

    def test_no_warning_for_double_well(self):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            make_params()

    def test_step_constraint(self):
        assert make_params(n=64, tau=1e-2).step_constraint_satisfied()
        # tau^9 = 0.387 exceeds h = pi/64: the analysis coupling fails
        assert not make_params(n=64, tau=0.9).step_constraint_satisfied()


class TestStates:
    def test_initial_state_records_mass(self):
        params = make_params(n=12)
        u0 = np.linspace(-1.0, 2.0, 12)
        state = initial_state(params, u0)
        assert state.step_index == 0
        assert state.mass0 == pytest.approx(u0.mean(), rel=1e-13)

    def test_initial_state_shape_checked(self):
        params = make_params(n=12)
        with pytest.raises(ValueError, match=r"shape \(12,\)"):
            initial_state(params, np.zeros(13))

    def test_initial_state_rejects_non_finite(self):
        params = make_params(n=4)
        with pytest.raises(ValueError, match="non-finite"):
            initial_state(params, np.array([0.0, np.inf, 0.0, 0.0]))

    def test_state_from_coeffs_round_trip(self):
        params = make_params(n=6)
        state = initial_state(params, np.ones(6))
        clone = state_from_coeffs(state.step_index, state.coeffs)
        np.testing.assert_array_equal(clone.coeffs, state.coeffs)
        assert clone.mass0 == state.mass0

    def test_state_rejects_negative_index(self):
        with pytest.raises(ValueError, match="nonnegative"):
            state_from_coeffs(-1, np.zeros(4))


class TestStep:
    def test_constant_states_are_deterministic_fixed_points(self):
        """With sigma = 0 any constant is (numerically) stationary.

        Mode 0 is copied bitwise; the oscillating modes only see transform
        round-off, which the semigroup then contracts.
        """
        params = make_params(n=16, sigma=0.0)
        state = initial_state(params, np.full(16, 0.7))
        c0 = state.coeffs[0]
        zero = np.zeros(16)
        for _ in range(1000):
            state = step(params, state, zero)
        assert state.coeffs[0] == c0
        assert np.max(np.abs(state.coeffs[1:])) < 1e-14
        np.testing.assert_allclose(params.basis.from_spectral(state.coeffs),
                                   np.full(16, 0.7), atol=1e-13)

    def test_mass_mode_is_copied_bitwise_under_noise(self):
        params = make_params(n=16, sigma=1.0)
        state = initial_state(params, np.linspace(0, 1, 16))
        c0 = state.coeffs[0]
        src = make_source(params)
        state = run_trajectory(params, state, src, 500)
        assert state.coeffs[0] == c0
        assert state.mass0 == state.coeffs[0] / math.sqrt(math.pi)

    def test_linear_drift_matches_scalar_recursion(self):
        """Replay the update per mode with plain Python floats.

        For f(u) = a2 u the nodal drift evaluation is a2 * (C c) and its
        analysis is a2 c up to Gram round-off, so each mode follows
        c <- e^(-lam^2 tau) (c - tau lam a2 c / denom + sigma dw) with the
        shared taming denominator 1 + tau ||u||_w12^12.
        """
        a2 = 0.8
        drift = DriftSpec(0.0, 0.0, a2, 0.0, validation_mode=True)
        params = make_params(n=8, tau=5e-3, sigma=1.0, drift=drift)
        src = make_source(params, seed=11)
        lam = params.basis.eigenvalues
        sem = params.semigroup

        rng = np.random.default_rng(0)
        oracle = rng.standard_normal(8)
        oracle[0] = 0.4
        state = state_from_coeffs(0, oracle.copy())
        n_steps = 400
        for m in range(n_steps):
            dw = src.increment_field(params.basis, m)
            w12_sq = float(np.sum((1.0 + lam) * oracle * oracle))
            denom = 1.0 + params.tau * w12_sq**6
            new = [sem[j] * (oracle[j] - params.tau * lam[j] * a2 * oracle[j] / denom
                             + params.sigma * dw[j])
                   for j in range(8)]
            new[0] = oracle[0]
            oracle = np.array(new)
            state = step(params, state, dw)
        assert np.max(np.abs(state.coeffs - oracle)) < 1e-12

    def test_noise_shape_must_match(self):
        params = make_params(n=8)
        state = initial_state(params, np.zeros(8))
        with pytest.raises(ValueError, match="does not match"):
            step(params, state, np.zeros(7))

    def test_noise_on_mean_mode_rejected(self):
        params = make_params(n=8)
        state = initial_state(params, np.zeros(8))
        bad = np.zeros(8)
        bad[0] = 1e-300
        with pytest.raises(ValueError, match="mode 0 must be exactly zero"):
            step(params, state, bad)

    def test_overflow_raises_blow_up(self):
        params = make_params(n=8, sigma=0.0)
        state = state_from_coeffs(0, np.full(8, 1e160))
        with np.errstate(over="ignore", invalid="ignore"):
            with pytest.raises(TrajectoryBlowUpError) as exc_info:
                step(params, state, np.zeros(8))
        assert exc_info.value.step_index == 1


class TestTrajectories:
    def test_zero_steps_returns_state_and_notifies_once(self):
        params = make_params(n=8)
        state = initial_state(params, np.zeros(8))
        seen = []
        out = run_trajectory(params, state, make_source(params), 0,
                             observers=(lambda m, s: seen.append(m),))
        assert out is state
        assert seen == [0]

    def test_observer_sees_every_step_once(self):
        params = make_params(n=8)
        state = initial_state(params, np.zeros(8))
        seen = []
        run_trajectory(params, state, make_source(params), 37,
                       observers=(lambda m, s: seen.append(m),))
        assert seen == list(range(38))

    def test_split_run_is_bitwise_identical(self):
        """60 + 40 steps equals 100 steps exactly: noise is addressed by
        step index, not by how many draws happened before."""
        params = make_params(n=16, tau=2e-2)
        u0 = np.cos(params.basis.grid)
        one_go = run_trajectory(params, initial_state(params, u0),
                                make_source(params, seed=9), 100)
        part = run_trajectory(params, initial_state(params, u0),
                              make_source(params, seed=9), 60)
        part = run_trajectory(params, part, make_source(params, seed=9), 40)
        assert part.step_index == one_go.step_index == 100
        np.testing.assert_array_equal(part.coeffs, one_go.coeffs)

    def test_negative_step_count_rejected(self):
        params = make_params(n=8)
        state = initial_state(params, np.zeros(8))
        with pytest.raises(ValueError, match="nonnegative"):
            run_trajectory(params, state, make_source(params), -1)

    def test_tau_must_be_multiple_of_tau_fine(self):
        params = make_params(n=8, tau=1e-2)
        src = NoiseSource(1, tau_fine=3e-3, n_modes_max=7)
        state = initial_state(params, np.zeros(8))
        with pytest.raises(ValueError, match="integer multiple"):
            run_trajectory(params, state, src, 1)

    def test_coarse_run_consumes_refined_noise(self):
        """Running at tau = 4 tau_fine must equal a run driven by the
        pre-aggregated coarse increments."""
        params = make_params(n=8, tau=4e-3)
        src = NoiseSource(5, tau_fine=1e-3, n_modes_max=7)
        state0 = initial_state(params, np.cos(params.basis.grid))
        out = run_trajectory(params, state0, src, 25)

        manual = state0
        for m in range(25):
            manual = step(params, manual, src.increment_field(params.basis, m, 4))
        np.testing.assert_array_equal(out.coeffs, manual.coeffs)

    def test_blow_up_reports_trajectory_id(self):
        params = make_params(n=8, sigma=0.0)
        state = state_from_coeffs(0, np.full(8, 1e160))
        with np.errstate(over="ignore", invalid="ignore"):
            with pytest.raises(TrajectoryBlowUpError) as exc_info:
                run_trajectory(params, state, make_source(params, trajectory_id=7), 3)
        assert exc_info.value.trajectory_id == 7

    def test_solution_at_midpoints_recovers_nodal_values(self):
        params = make_params(n=8)
        u0 = np.sin(params.basis.grid)
        state = initial_state(params, u0)
        np.testing.assert_allclose(solution_at(params.basis, state,
                                               params.basis.grid),
                                   u0, atol=1e-13)


class TestEnsemble:
    def test_matches_individual_trajectories(self):
        """Lockstep (N, L) advance vs one-at-a-time runs.

        Matrix and vector BLAS kernels may round differently, so the match
        is close, not bitwise.
        """
        params = make_params(n=16, tau=1e-2)
        sources = [make_source(params, seed=2, trajectory_id=l) for l in range(3)]
        u0 = np.cos(2 * params.basis.grid)
        final = run_ensemble(params, params.basis.to_spectral(u0), sources, 200)
        assert final.shape == (16, 3)
        for l, src in enumerate(sources):
            single = run_trajectory(params, initial_state(params, u0), src, 200)
            np.testing.assert_allclose(final[:, l], single.coeffs,
                                       rtol=0, atol=1e-12)

    def test_distinct_columns_for_distinct_trajectories(self):
        params = make_params(n=8)
        sources = [make_source(params, trajectory_id=l) for l in range(2)]
        final = run_ensemble(params, np.zeros(8), sources, 10)
        assert not np.array_equal(final[:, 0], final[:, 1])

    def test_observer_called_on_initial_and_each_step(self):
        params = make_params(n=8)
        sources = [make_source(params)]
        seen = []
        run_ensemble(params, np.zeros(8), sources, 5,
                     observer=lambda m, c: seen.append((m, c.shape)))
        assert seen == [(m, (8, 1)) for m in range(6)]

    def test_start_index_offsets_noise(self):
        # running steps 10..20 directly equals the tail of a 0..20 run
        params = make_params(n=8)
        src = make_source(params, seed=13)
        full = run_ensemble(params, np.zeros(8), [src], 20)
        head = run_ensemble(params, np.zeros(8), [src], 10)
        tail = run_ensemble(params, head, [src], 10, start_index=10)
        np.testing.assert_array_equal(tail, full)

    def test_requires_sources(self):
        params = make_params(n=8)
        with pytest.raises(ValueError, match="at least one"):
            run_ensemble(params, np.zeros(8), [], 1)

    def test_requires_matching_tau_fine(self):
        params = make_params(n=8, tau=2e-2)
        a = NoiseSource(1, 0, tau_fine=2e-2, n_modes_max=7)
        b = NoiseSource(1, 1, tau_fine=1e-2, n_modes_max=7)
        with pytest.raises(ValueError, match="share tau_fine"):
            run_ensemble(params, np.zeros(8), [a, b], 1)

    def test_shape_validation(self):
        params = make_params(n=8)
        sources = [make_source(params)]
        with pytest.raises(ValueError, match="shape"):
            run_ensemble(params, np.zeros((8, 2)), sources, 1)


class TestCheckpointResume:
    def test_resume_is_bitwise_identical(self, tmp_path):
        """Interrupt at step 40, checkpoint to text, reload, finish: the
        final coefficients equal the uninterrupted run's exactly."""
        params = make_params(n=16, tau=1e-2)
        src = make_source(params, seed=21, trajectory_id=4)
        u0 = np.cos(params.basis.grid) / 3 + 1 / 3

        full = run_trajectory(params, initial_state(params, u0), src, 100)

        mid = run_trajectory(params, initial_state(params, u0), src, 40)
        path = tmp_path / "run.ckpt"
        write_checkpoint(path, params, mid, src)
        params2, src2, state2 = read_checkpoint(path).rebuild()
        assert state2.step_index == 40
        resumed = run_trajectory(params2, state2, src2, 60)
        np.testing.assert_array_equal(resumed.coeffs, full.coeffs)

    def test_checkpoint_preserves_every_field(self, tmp_path):
        params = make_params(n=8, tau=2e-2, sigma=0.5)
        src = NoiseSource(77, 3, tau_fine=1e-2, n_modes_max=7)
        state = state_from_coeffs(12, np.linspace(-1, 1, 8))
        path = tmp_path / "fields.ckpt"
        write_checkpoint(path, params, state, src)
        data = read_checkpoint(path)
        assert data.n_modes == 8
        assert data.tau == 2e-2 and data.sigma == 0.5
        assert data.drift == (0.5, -0.5, 1.0, -1.0)
        assert data.seed == 77 and data.trajectory_id == 3
        assert data.tau_fine == 1e-2
        assert data.step_index == 12
        np.testing.assert_array_equal(data.coeffs, state.coeffs)

    def test_rejects_foreign_files(self, tmp_path):
        path = tmp_path / "bogus.ckpt"
        path.write_text("not a checkpoint\n")
        with pytest.raises(ValueError, match="not a"):
            read_checkpoint(path)

    def test_rejects_truncated_coefficients(self, tmp_path):
        params = make_params(n=8)
        src = make_source(params)
        state = initial_state(params, np.zeros(8))
        path = tmp_path / "trunc.ckpt"
        write_checkpoint(path, params, state, src)
        lines = path.read_text().splitlines()
        path.write_text("\n".join(lines[:-2]) + "\n")
        with pytest.raises(ValueError, match="expected 8 coefficients"):
            read_checkpoint(path)


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
