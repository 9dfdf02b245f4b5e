import math

import numpy as np
import pytest

from colnoise.errors import ClosureMismatchError, DivergentDiffusionError, ParameterError
from colnoise.model import DriftSpec, InitialSpec, NoiseSpec, ProblemSpec, normalized_bistable_problem
from colnoise.oracle import (
    GaussianState,
    exact_pdf_linear,
    hanggi_stationary_pdf,
    linear_moments,
)


def linear_problem(*, eta=-1.0, kappa=1.0, d=1.0, tau=1.0, mean=0.0,
                   m0=0.0, s0=1.0, c0=0.0, t_end=50.0):
    return ProblemSpec(
        drift=DriftSpec([0.0, eta]), kappa=kappa,
        noise=NoiseSpec("ou", intensity=d, tau=tau, mean=mean),
        initial=InitialSpec(mean=m0, variance=s0, cross_c0=c0),
        t0=0.0, t_end=t_end,
    )


FIG3 = ProblemSpec(
    drift=DriftSpec([0.0, -0.8]), kappa=0.2,
    noise=NoiseSpec("ou", intensity=1.0, tau=1.0, mean=0.2),
    initial=InitialSpec(mean=-0.7, variance=0.15**2),
    t0=0.0, t_end=20.0,
)


class TestLinearMoments:
    def test_zero_coupling_closed_forms(self):
        problem = linear_problem(kappa=0.0, m0=0.5, s0=0.04)
        ts = np.array([0.0, 0.5, 1.5])
        mom = linear_moments(problem, ts)
        assert np.allclose(mom.mean, 0.5 * np.exp(-ts), rtol=1e-10)
        assert np.allclose(mom.variance, 0.04 * np.exp(-2 * ts), rtol=1e-10)

    def test_constant_mean_forcing(self):
        problem = linear_problem(mean=0.3, kappa=0.7, m0=0.5)
        t = 1.7
        mom = linear_moments(problem, [t])
        expected = 0.5 * math.exp(-t) + 0.7 * 0.3 * (1.0 - math.exp(-t))
        assert mom.mean[0] == pytest.approx(expected, rel=1e-10)

    def test_stationary_variance(self):
        problem = linear_problem(s0=1e-12 + 0.04)
        mom = linear_moments(problem, [20.0])
        # sigma^2(inf) = D_eff(inf)/|eta| = 0.5
        assert mom.variance[0] == pytest.approx(0.5, rel=1e-7)

    def test_effective_intensity_is_cross_covariance(self):
        problem = linear_problem(c0=0.2, tau=0.7, mean=0.1)
        ts = np.linspace(0.0, 5.0, 6)
        mom = linear_moments(problem, ts)
        assert np.allclose(mom.effective_intensity,
                           problem.kappa * mom.cross_response_excitation,
                           rtol=1e-10)

    def test_monotone_relaxation(self):
        problem = linear_problem(s0=0.01)
        ts = np.linspace(0.0, 10.0, 41)
        mom = linear_moments(problem, ts)
        assert np.all(np.diff(mom.variance) > 0.0)  # relaxes upward to 0.5

    def test_nonlinear_rejected(self):
        problem = normalized_bistable_problem(1.0, 1.0)
        with pytest.raises(ClosureMismatchError):
            linear_moments(problem, [1.0])

    def test_moment_odes_satisfied(self):
        # d(mean)/dt = eta mean + kappa m_Xi and d(var)/dt/2 = eta var + D_eff,
        # verified with centred differences of the oracle series
        problem = FIG3
        ts = np.linspace(0.5, 1.5, 21)
        mom = linear_moments(problem, ts)
        dt = ts[1] - ts[0]
        dmean = (mom.mean[2:] - mom.mean[:-2]) / (2 * dt)
        dvar = (mom.variance[2:] - mom.variance[:-2]) / (2 * dt)
        eta = -0.8
        rhs_mean = eta * mom.mean[1:-1] + 0.2 * 0.2
        rhs_var = 2.0 * (eta * mom.variance[1:-1] + mom.effective_intensity[1:-1])
        # residual bounded by the centred-difference truncation dt^2 |m'''|/6
        assert np.allclose(dmean, rhs_mean, rtol=0, atol=2e-4)
        assert np.allclose(dvar, rhs_var, rtol=0, atol=2e-4)

    def test_time_validation(self):
        with pytest.raises(ParameterError):
            linear_moments(linear_problem(), [-1.0])


class TestExactPdf:
    def test_initial_time(self):
        problem = linear_problem(m0=0.3, s0=0.25)
        xs = np.linspace(-2, 2, 21)
        expected = GaussianState(0.3, 0.25).pdf(xs)
        assert np.allclose(exact_pdf_linear(problem, xs, 0.0), expected, rtol=1e-12)

    def test_symmetry(self):
        problem = linear_problem(m0=0.0, mean=0.0)
        xs = np.linspace(-3, 3, 41)
        f = exact_pdf_linear(problem, xs, 2.0)
        assert np.allclose(f, f[::-1], rtol=1e-10)

    def test_fig3_mean_limit(self):
        mom = linear_moments(FIG3, [20.0])
        # kappa m_Xi / |eta| = 0.2*0.2/0.8
        assert mom.mean[0] == pytest.approx(0.05, abs=1e-7)


class TestHanggiStationaryPdf:
    def test_bistable_peaks_at_wells(self):
        problem = normalized_bistable_problem(1.0, 0.5)
        grid = np.linspace(-3.0, 3.0, 6001)
        for r_inf in (-2.0, -1.5, -1.0):
            f = hanggi_stationary_pdf(problem, r_inf, grid)
            d = np.diff(f)
            maxima = grid[1:-1][(d[:-1] > 0) & (d[1:] <= 0)]
            assert np.allclose(np.sort(np.abs(maxima)), [1.0, 1.0], atol=1.5e-3)

    def test_linear_case_gaussian(self):
        problem = linear_problem(tau=0.5)
        grid = np.linspace(-6, 6, 4001)
        r_inf = -1.0  # R = eta for linear drift
        f = hanggi_stationary_pdf(problem, r_inf, grid)
        b = 1.0 / (1.0 - 0.5 * r_inf)
        expected = GaussianState(0.0, b / 1.0).pdf(grid)
        assert np.max(np.abs(f - expected)) < 1e-8

    def test_normalisation(self):
        problem = normalized_bistable_problem(1.0, 1.0)
        grid = np.linspace(-4, 4, 2001)
        f = hanggi_stationary_pdf(problem, -1.8, grid)
        assert abs(np.trapezoid(f, grid) - 1.0) <= 1e-8

    def test_divergence_guard(self):
        problem = normalized_bistable_problem(1.0, 4.0)  # tau_ou = 2
        with pytest.raises(DivergentDiffusionError):
            hanggi_stationary_pdf(problem, 1.0, np.linspace(-4, 4, 101))
