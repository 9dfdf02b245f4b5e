import math

import numpy as np
import pytest

from colnoise.errors import ParameterError, StepFailureError, UnsupportedCoefficientError
from colnoise.evolve import (
    ClosureSpec,
    PufemConfig,
    SolverConfig,
    compute_moment,
    detect_stationarity,
    energy_identity_residual,
    run_evolution,
)
from colnoise.model import (
    DriftSpec,
    InitialSpec,
    NoiseSpec,
    ProblemSpec,
    normalized_bistable_problem,
)
from colnoise.oracle import exact_pdf_linear, linear_moments
from colnoise.pufem import Cover, DiscreteSystem, PuBasis


def fig3_problem(t_end=10.0):
    return ProblemSpec(
        drift=DriftSpec([0.0, -0.8]), kappa=0.2,
        noise=NoiseSpec("ou", intensity=1.0, tau=1.0, mean=0.2),
        initial=InitialSpec(mean=-0.7, variance=0.15**2),
        t0=0.0, t_end=t_end,
    )


FIG3_PUFEM = PufemConfig(domain=(-2.0, 2.0), subdomains=50, local_dim=4, smoothness=2)


class TestComputeMoment:
    def setup_method(self):
        self.system = DiscreteSystem(PuBasis(2, 4), Cover(-6.0, 6.0, 60))
        f0 = lambda x: np.exp(-0.5 * x * x) / math.sqrt(2 * math.pi)
        self.w = self.system.project_initial(f0)

    def test_bistable_slope_moment(self):
        # E[1 - 3 X^2] = 1 - 3 (m^2 + var) = -2 for a standard Gaussian
        val = compute_moment(self.system, self.w, [1.0, 0.0, -3.0])
        assert val == pytest.approx(-2.0, abs=1e-8)

    def test_constant_gives_mass(self):
        mass = compute_moment(self.system, self.w, [1.0])
        assert compute_moment(self.system, self.w, [2.5]) == pytest.approx(2.5 * mass, rel=1e-14)

    def test_linear_slope(self):
        eta = -0.8
        mass = compute_moment(self.system, self.w, [1.0])
        assert compute_moment(self.system, self.w, [eta]) == pytest.approx(eta * mass, rel=1e-14)


class TestConfigValidation:
    def test_closure_spec(self):
        with pytest.raises(ParameterError):
            ClosureSpec("magic")
        with pytest.raises(ParameterError):
            ClosureSpec("poly", order=-1)
        assert not ClosureSpec("sct").uses_history
        assert ClosureSpec("poly", 2).uses_history

    def test_solver_config(self):
        with pytest.raises(ParameterError):
            SolverConfig(dt=0.0)
        with pytest.raises(ParameterError):
            SolverConfig(eps_tol=0.0)
        with pytest.raises(ParameterError):
            SolverConfig(max_iters=0)


class TestLinearEvolution:
    def test_matches_oracle_short(self):
        problem = fig3_problem(t_end=2.0)
        solver = SolverConfig(dt=0.01, t_end=2.0, snapshot_times=(1.0, 2.0))
        traj = run_evolution(problem, ClosureSpec("poly", 2), solver, FIG3_PUFEM)
        for t, x, f, _ in traj.snapshots:
            exact = exact_pdf_linear(problem, x, t)
            assert np.max(np.abs(f - exact)) <= 5e-3

    def test_no_noise_stays_gaussian(self):
        problem = ProblemSpec(
            drift=DriftSpec([0.0, -1.0]), kappa=0.0,
            noise=NoiseSpec("ou", intensity=1.0, tau=1.0),
            initial=InitialSpec(mean=0.3, variance=0.09),
            t0=0.0, t_end=1.0,
        )
        solver = SolverConfig(dt=0.005, t_end=1.0, snapshot_times=(1.0,))
        traj = run_evolution(problem, ClosureSpec("hanggi"), solver, FIG3_PUFEM)
        i = -1
        assert traj.mean[i] == pytest.approx(0.3 * math.exp(-1.0), abs=2e-5)
        assert traj.variance[i] == pytest.approx(0.09 * math.exp(-2.0), abs=2e-5)

    def test_snapshot_times_and_grid(self):
        problem = fig3_problem(t_end=1.0)
        solver = SolverConfig(dt=0.01, t_end=1.0, snapshot_times=(0.0, 0.503, 1.0),
                              grid_points=301)
        traj = run_evolution(problem, ClosureSpec("hanggi"), solver, FIG3_PUFEM)
        times = [snap[0] for snap in traj.snapshots]
        assert times == pytest.approx([0.0, 0.5, 1.0])  # nearest grid times
        assert traj.snapshots[0][1].size == 301

    def test_energy_identity(self):
        problem = fig3_problem(t_end=3.0)
        solver = SolverConfig(dt=0.01, t_end=3.0)
        traj = run_evolution(problem, ClosureSpec("hanggi"), solver, FIG3_PUFEM)
        residual, scale = energy_identity_residual(problem, traj)
        assert residual <= 1e-3 * scale

    def test_timestep_convergence_second_order(self):
        problem = fig3_problem(t_end=2.0)
        finals = {}
        for dt in (0.08, 0.04, 0.02):
            solver = SolverConfig(dt=dt, t_end=2.0, snapshot_times=(2.0,))
            traj = run_evolution(problem, ClosureSpec("hanggi"), solver, FIG3_PUFEM)
            finals[dt] = traj.snapshots[-1][2]
        ratio = np.max(np.abs(finals[0.08] - finals[0.04])) / np.max(np.abs(finals[0.04] - finals[0.02]))
        assert 3.5 <= ratio <= 4.5


class TestClosureBehaviour:
    def test_hanggi_equals_order_zero(self):
        problem = normalized_bistable_problem(1.0, 0.5, t_end=3.0)
        solver = SolverConfig(dt=0.01, t_end=3.0, snapshot_times=(1.0, 3.0))
        pufem_cfg = PufemConfig(domain=(-6.0, 6.0), subdomains=76)
        traj_h = run_evolution(problem, ClosureSpec("hanggi"), solver, pufem_cfg)
        traj_0 = run_evolution(problem, ClosureSpec("poly", 0), solver, pufem_cfg)
        for snap_h, snap_0 in zip(traj_h.snapshots, traj_0.snapshots):
            assert np.array_equal(snap_h[3], snap_0[3])  # bit-identical weights

    def test_history_free_closures_single_pass(self):
        problem = fig3_problem(t_end=0.5)
        solver = SolverConfig(dt=0.01, t_end=0.5)
        for kind in ("sct", "fox"):
            traj = run_evolution(problem, ClosureSpec(kind), solver, FIG3_PUFEM)
            assert np.all(traj.iterations[1:] == 1)

    def test_fox_rejected_for_nonlinear_drift(self):
        problem = normalized_bistable_problem(1.0, 0.5, t_end=1.0)
        solver = SolverConfig(dt=0.01, t_end=1.0)
        with pytest.raises(UnsupportedCoefficientError):
            run_evolution(problem, ClosureSpec("fox"), solver,
                          PufemConfig(domain=(-6.0, 6.0), subdomains=76))

    def test_correction_loop_economy(self):
        problem = normalized_bistable_problem(1.0, 1.0, t_end=3.0)
        solver = SolverConfig(dt=0.01, t_end=3.0)
        traj = run_evolution(problem, ClosureSpec("poly", 2), solver,
                             PufemConfig(domain=(-6.0, 6.0), subdomains=76))
        assert np.median(traj.iterations[1:]) <= 2

    def test_nonconvergent_correction_fails(self):
        problem = normalized_bistable_problem(1.0, 1.0, t_end=1.0)
        solver = SolverConfig(dt=0.01, t_end=1.0, eps_tol=1e-16, max_iters=2)
        with pytest.raises(StepFailureError):
            run_evolution(problem, ClosureSpec("poly", 2), solver,
                          PufemConfig(domain=(-6.0, 6.0), subdomains=76))

    def test_mass_conservation_bistable(self):
        problem = normalized_bistable_problem(1.0, 1.0, t_end=5.0)
        solver = SolverConfig(dt=0.01, t_end=5.0)
        traj = run_evolution(problem, ClosureSpec("poly", 2), solver,
                             PufemConfig(domain=(-6.0, 6.0), subdomains=76))
        assert np.max(np.abs(traj.mass - 1.0)) <= 1e-4
        assert not traj.mass_flag
        assert np.min(traj.min_diffusion[1:]) > 0.0  # even-order positivity


class TestDetectStationarity:
    def test_constant_series(self):
        ts = np.linspace(0, 5, 51)
        ok, t_st = detect_stationarity(ts, np.ones(51), np.ones(51),
                                       window=1.0, threshold=1e-3)
        assert ok
        assert t_st == pytest.approx(1.0)

    def test_growing_variance(self):
        ts = np.linspace(0, 5, 51)
        ok, t_st = detect_stationarity(ts, np.zeros(51), 1.0 + ts,
                                       window=1.0, threshold=1e-3)
        assert not ok and t_st is None

    def test_short_series(self):
        ok, t_st = detect_stationarity([0.0, 0.1], [1.0, 1.0], [1.0, 1.0],
                                       window=1.0, threshold=1e-3)
        assert not ok

    def test_linear_relaxation_time(self):
        # variance settles like e^{-2t}: five relaxation times +- 20%
        problem = ProblemSpec(
            drift=DriftSpec([0.0, -1.0]), kappa=1.0,
            noise=NoiseSpec("ou", intensity=1.0, tau=1.0),
            initial=InitialSpec(mean=0.0, variance=0.01),
            t0=0.0, t_end=12.0,
        )
        ts = np.linspace(0.0, 12.0, 241)
        mom = linear_moments(problem, ts)
        ok, t_st = detect_stationarity(ts, mom.mean, mom.variance,
                                       window=1.0, threshold=5e-4)
        assert ok
        assert 4.0 <= t_st <= 6.0
