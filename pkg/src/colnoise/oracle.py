"""Exact analytic solutions for the linear-drift case.

For dX/dt = eta X + kappa Xi(t) with jointly Gaussian data the response
stays Gaussian, and its moments have closed integral forms that we
evaluate by adaptive quadrature (absolute tolerance 1e-10).  These serve
as ground truth for the PDE solver and the Monte-Carlo harness.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .errors import ClosureMismatchError, DivergentDiffusionError, ParameterError

_QUAD_OPTS = dict(epsabs=1e-10, epsrel=1e-10, limit=200)


@dataclass(frozen=True)
class GaussianState:
    """Mean and variance of the response at one time."""

    mean: float
    variance: float

    def __post_init__(self):
        if self.variance <= 0.0:
            raise ParameterError("variance must be positive")

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.exp(-0.5 * (x - self.mean) ** 2 / self.variance) / math.sqrt(
            2.0 * math.pi * self.variance
        )


@dataclass(frozen=True)
class LinearMomentSet:
    """Response moments of the linear problem on a time grid."""

    times: np.ndarray
    mean: np.ndarray
    variance: np.ndarray
    cross_response_excitation: np.ndarray  # C_{X Xi}(t, t)
    cross_initial_response: np.ndarray     # C_{X0 X}(t)
    effective_intensity: np.ndarray

    def state(self, i):
        return GaussianState(float(self.mean[i]), float(self.variance[i]))


def _eta(problem):
    if not problem.drift.is_linear:
        raise ClosureMismatchError("the analytic oracle requires linear drift")
    return problem.drift.coefficients[1]


def _cross_re(problem, eta, t):
    """C_{X Xi}(t, t): response-excitation cross-covariance diagonal."""
    cross = float(problem.cross_cov(t)) * math.exp(eta * (t - problem.t0))
    if t == problem.t0:
        return cross
    integral, _ = quad(
        lambda tau: problem.noise.autocov(tau, t) * math.exp(eta * (t - tau)),
        problem.t0, t, **_QUAD_OPTS,
    )
    return cross + problem.kappa * integral


def _deff(problem, eta, t):
    """Effective intensity by its own definition integral."""
    cross = problem.kappa * float(problem.cross_cov(t)) * math.exp(eta * (t - problem.t0))
    if t == problem.t0:
        return cross
    integral, _ = quad(
        lambda s: math.exp(eta * (t - s)) * problem.noise.autocov(t, s),
        problem.t0, t, **_QUAD_OPTS,
    )
    return cross + problem.kappa**2 * integral


def _mean(problem, eta, t):
    m0 = problem.initial.mean
    if t == problem.t0:
        return m0
    integral, _ = quad(
        lambda tau: float(problem.noise.mean(tau)) * math.exp(eta * (t - tau)),
        problem.t0, t, **_QUAD_OPTS,
    )
    return m0 * math.exp(eta * (t - problem.t0)) + problem.kappa * integral


def _variance(problem, eta, t):
    s0 = problem.initial.variance
    if t == problem.t0:
        return s0
    integral, _ = quad(
        lambda tau: _cross_re(problem, eta, tau) * math.exp(2.0 * eta * (t - tau)),
        problem.t0, t, **_QUAD_OPTS,
    )
    return s0 * math.exp(2.0 * eta * (t - problem.t0)) + 2.0 * problem.kappa * integral


def _cross_ir(problem, eta, t):
    """C_{X0 X}(t): initial-value/response cross-covariance."""
    s0 = problem.initial.variance
    if t == problem.t0:
        return s0
    integral, _ = quad(
        lambda tau: float(problem.cross_cov(tau)) * math.exp(eta * (t - tau)),
        problem.t0, t, **_QUAD_OPTS,
    )
    return s0 * math.exp(eta * (t - problem.t0)) + problem.kappa * integral


def linear_moments(problem, times):
    """Exact response moments of the linear problem on a time grid."""
    eta = _eta(problem)
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if np.any(times < problem.t0):
        raise ParameterError("moment times must not precede t0")
    mean = np.array([_mean(problem, eta, t) for t in times])
    var = np.array([_variance(problem, eta, t) for t in times])
    cre = np.array([_cross_re(problem, eta, t) for t in times])
    cir = np.array([_cross_ir(problem, eta, t) for t in times])
    deff = np.array([_deff(problem, eta, t) for t in times])
    return LinearMomentSet(times, mean, var, cre, cir, deff)


def exact_pdf_linear(problem, x, t):
    """Exact Gaussian response density of the linear problem at time t."""
    eta = _eta(problem)
    state = GaussianState(_mean(problem, eta, t), _variance(problem, eta, t))
    return state.pdf(x)


def stationary_pdf_constant_diffusion(problem, b, grid):
    """Stationary density exp(H(x)/b)/Z for constant diffusion b > 0,
    H the antiderivative of the drift; normalised by trapezoid on the grid."""
    if b <= 0.0:
        raise DivergentDiffusionError("stationary density requires positive diffusion")
    grid = np.asarray(grid, dtype=float)
    anti = np.polynomial.polynomial.polyint(np.asarray(problem.drift.coefficients))
    log_f = np.polynomial.polynomial.polyval(grid, anti) / b
    log_f -= np.max(log_f)
    f = np.exp(log_f)
    norm = np.trapezoid(f, grid)
    if norm <= 0.0 or not math.isfinite(norm):
        raise DivergentDiffusionError("stationary density is not normalisable on the grid")
    return f / norm


def hanggi_stationary_pdf(problem, r_inf, grid):
    """Stationary density of the decoupling closure.

    The diffusion is the x-independent kappa^2 D / (1 - tau R_inf) (for
    the dimensionless bistable problem this reads D~ / (2 - tau~ R_inf)),
    so the density is exp(H(x)/B)/Z and its stationary points sit exactly
    at the roots of the drift.
    """
    from .closures import hanggi_stationary_intensity

    b = hanggi_stationary_intensity(problem, r_inf)
    return stationary_pdf_constant_diffusion(problem, b, grid)
