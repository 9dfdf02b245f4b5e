"""Problem definition: drift, coloured-noise excitation, initial data.

A problem instance is the scalar random initial-value problem

    dX/dt = h(X) + kappa * Xi(t),    X(t0) = X0,

where ``h`` is a polynomial drift, ``Xi`` a Gaussian coloured noise with
autocovariance kernel ``C(t, s)`` and mean ``m(t)``, and ``X0`` a Gaussian
initial value that may be cross-correlated with the excitation.  All types
are immutable after construction and safe to share between threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError


def ou_autocov(D, tau, t, s):
    """Ornstein-Uhlenbeck autocovariance (D/tau) * exp(-|t-s|/tau).

    ``D`` is the noise intensity and ``tau`` the correlation time; both
    must be positive.  Symmetric in (t, s) by construction.
    """
    if D <= 0.0 or tau <= 0.0:
        raise ParameterError("OU kernel requires D > 0 and tau > 0")
    return (D / tau) * np.exp(-np.abs(np.asarray(t) - np.asarray(s)) / tau)


@dataclass(frozen=True)
class DriftSpec:
    """Polynomial drift h(x), stored as coefficients in ascending degree."""

    coefficients: tuple

    def __init__(self, coefficients):
        coeffs = np.trim_zeros(np.atleast_1d(np.asarray(coefficients, dtype=float)), "b")
        if coeffs.size < 2:
            raise ParameterError("drift polynomial must have degree >= 1")
        object.__setattr__(self, "coefficients", tuple(coeffs))

    @property
    def degree(self):
        return len(self.coefficients) - 1

    @property
    def deriv_coefficients(self):
        c = np.asarray(self.coefficients)
        return tuple(np.polynomial.polynomial.polyder(c))

    @property
    def deriv2_coefficients(self):
        c = np.asarray(self.coefficients)
        return tuple(np.polynomial.polynomial.polyder(c, 2))

    def h(self, x):
        return np.polynomial.polynomial.polyval(x, np.asarray(self.coefficients))

    def h1(self, x):
        return np.polynomial.polynomial.polyval(x, np.asarray(self.deriv_coefficients))

    def h2(self, x):
        c2 = self.deriv2_coefficients
        if not c2:
            return np.zeros_like(np.asarray(x, dtype=float))
        return np.polynomial.polynomial.polyval(x, np.asarray(c2))

    @property
    def is_linear(self):
        return self.degree == 1

    def validate_long_run(self):
        """Global stability check for long-horizon runs.

        A polynomial drift confines trajectories only if its degree is odd
        and the leading coefficient is negative (e.g. the bistable x - x^3).
        """
        if self.degree % 2 == 0 or self.coefficients[-1] >= 0.0:
            raise ParameterError(
                "long-time runs require odd drift degree with negative "
                f"leading coefficient, got degree {self.degree} with "
                f"leading coefficient {self.coefficients[-1]}"
            )


def drift_eval(spec, x):
    """Evaluate (h, h', h'') of a DriftSpec at state x."""
    return spec.h(x), spec.h1(x), spec.h2(x)


class NoiseSpec:
    """Gaussian coloured-noise excitation.

    Two kinds are supported: the OU process (intensity ``D``, correlation
    time ``tau``) and a tabulated kernel given on a symmetric time grid
    with bilinear interpolation between nodes.  The mean function is a
    constant or a sampled table interpolated linearly.
    """

    def __init__(self, kind, *, intensity=None, tau=None, mean=0.0,
                 grid=None, cov=None):
        self.kind = kind
        if kind == "ou":
            if intensity is None or tau is None:
                raise ParameterError("OU noise requires intensity and tau")
            if intensity <= 0.0 or tau <= 0.0:
                raise ParameterError("OU noise requires intensity > 0 and tau > 0")
            self.intensity = float(intensity)
            self.tau = float(tau)
            self.grid = None
            self.cov = None
        elif kind == "table":
            if grid is None or cov is None:
                raise ParameterError("tabulated noise requires grid and cov")
            grid = np.asarray(grid, dtype=float)
            cov = np.asarray(cov, dtype=float)
            if grid.ndim != 1 or grid.size < 2 or np.any(np.diff(grid) <= 0):
                raise ParameterError("kernel grid must be strictly increasing")
            if cov.shape != (grid.size, grid.size):
                raise ParameterError("kernel table must be square on the grid")
            if not np.allclose(cov, cov.T, rtol=0.0, atol=1e-12):
                raise ParameterError("kernel table must be symmetric")
            if np.any(np.diag(cov) <= 0.0):
                raise ParameterError("kernel diagonal must be positive")
            self.intensity = None
            self.tau = None
            self.grid = grid
            self.cov = cov
        else:
            raise ParameterError(f"unknown noise kind '{kind}'")

        if callable(mean):
            self._mean = mean
        elif np.isscalar(mean):
            m = float(mean)
            self._mean = lambda t: m * np.ones_like(np.asarray(t, dtype=float))
        else:
            mt, mv = np.asarray(mean[0], float), np.asarray(mean[1], float)
            self._mean = lambda t: np.interp(t, mt, mv)

    def mean(self, t):
        return self._mean(t)

    def autocov(self, t, s):
        """Kernel value C(t, s); vectorised over both arguments."""
        if self.kind == "ou":
            return ou_autocov(self.intensity, self.tau, t, s)
        t = np.asarray(t, dtype=float)
        s = np.asarray(s, dtype=float)
        return _bilinear(self.grid, self.cov, t, s)

    def variance(self, t):
        return self.autocov(t, t)


def _bilinear(grid, table, t, s):
    """Bilinear interpolation of a symmetric kernel table."""
    def frac(v):
        i = np.clip(np.searchsorted(grid, v, side="right") - 1, 0, grid.size - 2)
        return i, (v - grid[i]) / (grid[i + 1] - grid[i])

    it, ft = frac(np.clip(t, grid[0], grid[-1]))
    js, fs = frac(np.clip(s, grid[0], grid[-1]))
    c00 = table[it, js]
    c10 = table[it + 1, js]
    c01 = table[it, js + 1]
    c11 = table[it + 1, js + 1]
    return (c00 * (1 - ft) * (1 - fs) + c10 * ft * (1 - fs)
            + c01 * (1 - ft) * fs + c11 * ft * fs)


@dataclass(frozen=True)
class InitialSpec:
    """Gaussian initial value with optional exponentially decaying
    cross-covariance to the excitation, C_{X0 Xi}(t) = c0 exp(-(t-t0)/tau_c)."""

    mean: float
    variance: float
    cross_c0: float = 0.0
    cross_tau: float = 1.0

    def __post_init__(self):
        if self.variance <= 0.0:
            raise ParameterError("initial variance must be positive")
        if self.cross_tau <= 0.0:
            raise ParameterError("cross-covariance decay time must be positive")

    @property
    def sigma(self):
        return math.sqrt(self.variance)

    def cross_cov(self, t, t0=0.0):
        return self.cross_c0 * np.exp(-(np.asarray(t, dtype=float) - t0) / self.cross_tau)


@dataclass(frozen=True)
class ProblemSpec:
    """The full random initial-value problem over a horizon [t0, t_end]."""

    drift: DriftSpec
    kappa: float
    noise: NoiseSpec
    initial: InitialSpec
    t0: float = 0.0
    t_end: float = 10.0

    def __post_init__(self):
        if not math.isfinite(self.kappa):
            raise ParameterError("coupling kappa must be finite")
        if self.t_end <= self.t0:
            raise ParameterError("horizon t_end must exceed t0")
        self._check_cross_admissible()

    def _check_cross_admissible(self):
        # Cauchy-Schwarz: |C_{X0 Xi}(t)| <= sigma_X0 * sqrt(C(t, t)).
        # Necessary, not sufficient, for joint Gaussianity.
        if self.initial.cross_c0 == 0.0:
            return
        ts = np.linspace(self.t0, self.t_end, 64)
        bound = self.initial.sigma * np.sqrt(self.noise.variance(ts))
        if np.any(np.abs(self.cross_cov(ts)) > bound * (1.0 + 1e-12)):
            raise ParameterError(
                "cross-covariance violates the Cauchy-Schwarz bound "
                "sigma_X0 * sqrt(C(t,t)) on the horizon"
            )

    def cross_cov(self, t):
        return self.initial.cross_cov(t, t0=self.t0)

    def drift_coefficient(self, t):
        """Advection coefficient q(x, t) = h(x) + kappa * m(t), as ascending
        polynomial coefficients in x at fixed t."""
        c = np.array(self.drift.coefficients, dtype=float)
        c[0] += self.kappa * float(self.noise.mean(t))
        return c


def normalize_bistable(eta1, eta3, kappa, d_ou, tau_cor):
    """Dimensionless intensity and relative correlation time of the
    bistable benchmark.

    Returns (D~, tau~) with tau~ = 2 * eta1 * tau_cor (correlation time
    over the relaxation time 1/(2 eta1)) and D~ = 2 kappa^2 D |eta3| / eta1^2.
    """
    if eta1 <= 0.0:
        raise ParameterError("eta1 must be positive")
    if eta3 >= 0.0:
        raise ParameterError("eta3 must be negative")
    if d_ou <= 0.0 or tau_cor <= 0.0:
        raise ParameterError("noise intensity and correlation time must be positive")
    d_tilde = 2.0 * kappa**2 * d_ou * abs(eta3) / eta1**2
    tau_tilde = 2.0 * eta1 * tau_cor
    return d_tilde, tau_tilde


def normalized_bistable_problem(d_tilde, tau_tilde, *, sigma0=0.6, m0=0.0,
                                t0=0.0, t_end=20.0):
    """Normalized bistable problem dX = (X - X^3) dt + Xi dt.

    The dimensionless kernel (D~/tau~) exp(-2|t-s|/tau~) is the OU kernel
    with intensity D~/2 and correlation time tau~/2.
    """
    if d_tilde <= 0.0 or tau_tilde <= 0.0:
        raise ParameterError("dimensionless intensity and correlation time must be positive")
    return ProblemSpec(
        drift=DriftSpec([0.0, 1.0, 0.0, -1.0]),
        kappa=1.0,
        noise=NoiseSpec("ou", intensity=d_tilde / 2.0, tau=tau_tilde / 2.0, mean=0.0),
        initial=InitialSpec(mean=m0, variance=sigma0**2),
        t0=t0,
        t_end=t_end,
    )
