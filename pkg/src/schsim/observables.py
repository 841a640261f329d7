"""Functionals of the discrete solution and long-run average estimators.

The bounded test functions used for invariant-measure estimates are built from
the centered pairing

    g(u) = <v, u>_N - alpha1 <v, phi_0>_N <u, phi_0>_N,

i.e. the inner product of u against a profile v with ``alpha1`` of the
mean-mode contribution projected out, squashed through

    phi(u) = alpha2 * g / (1 + (g / alpha2)^2),   |phi| <= alpha2^2 / 2.

With alpha1 = 1 the pairing sees only mean-zero fluctuations; when the drift's
odd symmetry point coincides with the conserved mean, the fluctuation law is
symmetric and the long-run average of phi is exactly zero, which is the
closed-form reference the ergodic experiments converge to.

All functionals accept a single field (N,) or an (N, L) stack of trajectories.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .expressions import evaluate_expression
from .grid import SpectralBasis
from .integrator import SchemeParams, SchemeState, run_ensemble, run_trajectory

__all__ = [
    "TestFunctionSpec",
    "RunningAverage",
    "TimeAverageObserver",
    "mass",
    "g_functional",
    "phi_test",
    "lyapunov_v",
    "time_average_single",
    "time_average_ensemble",
]


def mass(u: np.ndarray):
    """Spatial mean (1/N) sum_i u_i; conserved exactly by the scheme."""
    return np.mean(np.asarray(u, dtype=np.float64), axis=0)


@dataclass(frozen=True, eq=False)
class TestFunctionSpec:
    """Profile and shape parameters of the bounded test function.

    Attributes:
        v: Nodal samples of the pairing profile, shape (N,).
        alpha1: Fraction of the mean-mode pairing projected out (1.0 makes the
            functional blind to the conserved mean).
        alpha2: Squashing scale; must be nonzero.  |phi| <= alpha2^2/2.
    """

    __test__ = False  # not a test case despite the Test* name

    v: np.ndarray = field(repr=False)
    alpha1: float
    alpha2: float

    def __post_init__(self):
        v = np.asarray(self.v, dtype=np.float64)
        if v.ndim != 1 or v.size == 0:
            raise ValueError("v must be a nonempty 1-D nodal field")
        if not np.all(np.isfinite(v)):
            raise ValueError("v contains non-finite values")
        object.__setattr__(self, "v", v)
        if not (isinstance(self.alpha1, (int, float, np.floating)) and math.isfinite(self.alpha1)):
            raise ValueError(f"alpha1 must be a finite real, got {self.alpha1!r}")
        if not (isinstance(self.alpha2, (int, float, np.floating))
                and math.isfinite(self.alpha2) and self.alpha2 != 0.0):
            raise ValueError(f"alpha2 must be a nonzero finite real, got {self.alpha2!r}")

    @classmethod
    def from_expression(cls, basis: SpectralBasis, expr: str,
                        alpha1: float, alpha2: float) -> "TestFunctionSpec":
        """Sample a closed-form profile (e.g. ``exp(x)``) on the basis grid."""
        return cls(evaluate_expression(expr, basis.grid), alpha1, alpha2)


def g_functional(basis: SpectralBasis, spec: TestFunctionSpec, u: np.ndarray):
    """Centered pairing g(u) = <v,u>_N - alpha1 <v,phi_0>_N <u,phi_0>_N."""
    u = np.asarray(u, dtype=np.float64)
    if spec.v.shape[0] != basis.n_modes:
        raise ValueError(
            f"test profile has {spec.v.shape[0]} nodes but basis has {basis.n_modes}")
    pairing = basis.h * (spec.v @ u)
    mean_part = (spec.alpha1 / np.pi) * (basis.h * spec.v.sum()) * (basis.h * u.sum(axis=0))
    return pairing - mean_part


def phi_test(basis: SpectralBasis, spec: TestFunctionSpec, u: np.ndarray):
    """Bounded test function phi = alpha2 g / (1 + (g/alpha2)^2)."""
    g = g_functional(basis, spec, u)
    return spec.alpha2 * g / (1.0 + (g / spec.alpha2) ** 2)


def lyapunov_v(basis: SpectralBasis, u: np.ndarray):
    """V(u) = <u,phi_0>^2 + sum_{j>=1} lambda_j^{-1} <u,phi_j>^2 + 1.

    The negative-order Sobolev energy plus the squared mean; the scheme
    contracts its conditional expectation at rate exp(-2 lambda_1 tau) up to
    an additive constant, which makes V a Lyapunov function for the chain.
    """
    coeffs = basis.to_spectral(u)
    inv = np.zeros(basis.n_modes)
    inv[1:] = 1.0 / basis.eigenvalues[1:]
    if coeffs.ndim == 2:
        inv = inv[:, None]
    return np.sum(inv * coeffs * coeffs, axis=0) + coeffs[0] ** 2 + 1.0


class RunningAverage:
    """Incremental equal-weight mean.

    Maintains (count, total) so the average can be read out at any time
    without storing samples.
    """

    def __init__(self):
        self.count = 0
        self.total = 0.0

    def update(self, value: float) -> float:
        self.count += 1
        self.total += float(value)
        return self.total / self.count

    @property
    def average(self) -> float:
        if self.count == 0:
            raise ValueError("running average has no samples yet")
        return self.total / self.count


class TimeAverageObserver:
    """Trajectory observer accumulating the running time average of phi.

    Samples every visited state with index >= burn_in_steps (the initial
    state counts), recording (t, running average) every ``record_every``-th
    sample into ``history``.
    """

    def __init__(self, params: SchemeParams, spec: TestFunctionSpec,
                 burn_in_steps: int = 0, record_every: int = 1):
        if burn_in_steps < 0:
            raise ValueError(f"burn_in_steps must be nonnegative, got {burn_in_steps}")
        if record_every < 1:
            raise ValueError(f"record_every must be a positive integer, got {record_every}")
        self.params = params
        self.spec = spec
        self.burn_in_steps = burn_in_steps
        self.record_every = record_every
        self.running = RunningAverage()
        self.history: list[tuple[float, float]] = []
        self._last: tuple[float, float] | None = None

    def __call__(self, m: int, state: SchemeState) -> None:
        if m < self.burn_in_steps:
            return
        u = self.params.basis.from_spectral(state.coeffs)
        avg = self.running.update(phi_test(self.params.basis, self.spec, u))
        t = m * self.params.tau
        self._last = (t, avg)
        if (self.running.count - 1) % self.record_every == 0:
            self.history.append((t, avg))

    def finalize(self) -> None:
        """Ensure the last sample is present in the history."""
        if self._last is not None and (not self.history or self.history[-1] != self._last):
            self.history.append(self._last)


def time_average_single(params: SchemeParams, state0: SchemeState, source,
                        n_steps: int, spec: TestFunctionSpec,
                        burn_in_steps: int = 0, record_every: int = 1):
    """Single-trajectory estimator: equal-weight time average of phi.

    Averages phi over the M+1 states m = 0..n_steps (after the optional
    burn-in).  Returns (average, history, final_state).
    """
    obs = TimeAverageObserver(params, spec, burn_in_steps, record_every)
    final = run_trajectory(params, state0, source, n_steps, observers=(obs,))
    obs.finalize()
    return obs.running.average, obs.history, final


def time_average_ensemble(params: SchemeParams, coeffs0: np.ndarray, sources,
                          n_steps: int, spec: TestFunctionSpec,
                          burn_in_steps: int = 0, record_every: int = 1):
    """Ensemble estimator: mean over trajectories of per-trajectory averages.

    All trajectories advance in lockstep; the recorded history holds the
    ensemble mean of the running time averages.  Returns
    (grand_average, per_trajectory_averages, history, final_coeffs).
    """
    if burn_in_steps < 0:
        raise ValueError(f"burn_in_steps must be nonnegative, got {burn_in_steps}")
    if record_every < 1:
        raise ValueError(f"record_every must be a positive integer, got {record_every}")
    basis = params.basis
    sources = list(sources)
    totals = np.zeros(len(sources))
    state = {"count": 0}
    history: list[tuple[float, float]] = []

    def observer(m: int, coeffs: np.ndarray) -> None:
        if m < burn_in_steps:
            return
        u = basis.from_spectral(coeffs)
        totals[:] += phi_test(basis, spec, u)
        state["count"] += 1
        if (state["count"] - 1) % record_every == 0 or m == n_steps:
            entry = (m * params.tau, float(np.mean(totals / state["count"])))
            if not history or history[-1][0] != entry[0]:
                history.append(entry)

    final = run_ensemble(params, coeffs0, sources, n_steps, observer=observer)
    per_traj = totals / state["count"]
    return float(np.mean(per_traj)), per_traj, history, final
