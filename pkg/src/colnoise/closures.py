"""Closure diffusion coefficients for the response-pdf evolution equations.

Every closure replaces the history-dependent term of the exact (unclosed)
pdf equation by a current-time expression, yielding a drift-diffusion
equation whose diffusion coefficient is computed here:

* ``effective_intensity``   -- exact coefficient for linear drift,
* ``sct_coefficients``      -- small-correlation-time expansion,
* ``fox_diffusion``         -- exponential current-time approximation,
* ``hanggi_diffusion``      -- decoupling (mean-effect) approximation,
* ``generalized_intensities`` / ``make_diffusion_field`` -- the order-M
  polynomial-in-fluctuation family, whose order-0 member is exactly the
  decoupling approximation.

The nonlocal closures consume a ``MomentHistory`` holding the sampled mean
drift slope R(t) = E[h'(X(t))] and its cumulative integral on a uniform
time grid; kernel integrals are composite trapezoid sums on that grid.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (
    ClosureMismatchError,
    DivergentDiffusionError,
    MissingHistoryError,
    ParameterError,
)

_polyval = np.polynomial.polynomial.polyval
_polyder = np.polynomial.polynomial.polyder


class MomentHistory:
    """Uniform-grid samples of R(t) = E[h'(X(t))] with cumulative integral.

    The cumulative integral is maintained by the trapezoid rule, so
    E_k - E_{k-1} = dt * (R_k + R_{k-1}) / 2 holds exactly; exp(E(t)-E(s))
    factors are read from the stored table instead of re-integrating.
    """

    def __init__(self, t0, dt):
        if dt <= 0.0:
            raise ParameterError("history step must be positive")
        self.t0 = float(t0)
        self.dt = float(dt)
        self._r = []
        self._e = []

    def append(self, r):
        r = float(r)
        if not self._r:
            self._r.append(r)
            self._e.append(0.0)
            return
        self._e.append(self._e[-1] + 0.5 * self.dt * (r + self._r[-1]))
        self._r.append(r)

    def pop(self):
        """Drop the newest sample (used to retract a trial iterate)."""
        if not self._r:
            raise MissingHistoryError("history is empty")
        self._r.pop()
        self._e.pop()

    def __len__(self):
        return len(self._r)

    @property
    def times(self):
        return self.t0 + self.dt * np.arange(len(self._r))

    @property
    def r_values(self):
        return np.asarray(self._r)

    @property
    def cumulative(self):
        return np.asarray(self._e)

    @property
    def t_last(self):
        return self.t0 + self.dt * (len(self._r) - 1)

    def index_of(self, t):
        if not self._r:
            raise MissingHistoryError("history is empty")
        k = round((t - self.t0) / self.dt)
        if k < 0 or k >= len(self._r) or abs(self.t0 + k * self.dt - t) > 1e-9 * max(1.0, abs(t)):
            raise MissingHistoryError(
                f"history covers [{self.t0}, {self.t_last}] in steps of {self.dt}; "
                f"t={t} is not on it"
            )
        return k

    @classmethod
    def from_samples(cls, t0, dt, r_values):
        hist = cls(t0, dt)
        for r in r_values:
            hist.append(r)
        return hist


@dataclass(frozen=True)
class DiffusionField:
    """Polynomial diffusion coefficient B(x, t) at a fixed time.

    ``coeffs`` are ascending powers of x; ``dcoeffs`` is the exact
    polynomial derivative.  ``intensities`` snapshots the coefficient
    vector [D_0 ... D_M] that produced the field.
    """

    kind: str
    time: float
    coeffs: tuple
    dcoeffs: tuple
    intensities: tuple
    negative_warning: bool = False

    def b(self, x):
        return _polyval(x, np.asarray(self.coeffs))

    def db_dx(self, x):
        if not self.dcoeffs:
            return np.zeros_like(np.asarray(x, dtype=float))
        return _polyval(x, np.asarray(self.dcoeffs))

    @property
    def degree(self):
        return len(self.coeffs) - 1


def _field(kind, time, coeffs, intensities, negative_warning=False):
    coeffs = np.trim_zeros(np.atleast_1d(np.asarray(coeffs, dtype=float)), "b")
    if coeffs.size == 0:
        coeffs = np.zeros(1)
    return DiffusionField(
        kind=kind,
        time=float(time),
        coeffs=tuple(coeffs),
        dcoeffs=tuple(_polyder(coeffs)) if coeffs.size > 1 else (),
        intensities=tuple(float(v) for v in np.atleast_1d(intensities)),
        negative_warning=negative_warning,
    )


def constant_diffusion_field(kind, t, value):
    """x-independent diffusion field (used for the linear-drift closures)."""
    return _field(kind, t, [float(value)], [float(value)])


def _grid(problem, t, num):
    if t < problem.t0:
        raise ParameterError("requires t >= t0")
    if num is None:
        num = max(256, int(round((t - problem.t0) / 0.01)) + 1)
    return np.linspace(problem.t0, t, max(2, num))


def effective_intensity(problem, t, *, num=None):
    """Exact diffusion coefficient of the linear-drift pdf equation.

    D_eff(t) = kappa e^{eta (t-t0)} C_{X0 Xi}(t)
               + kappa^2 int_{t0}^t e^{eta (t-s)} C(t, s) ds,
    with the integral taken by composite trapezoid on ``num`` nodes.
    """
    if not problem.drift.is_linear:
        raise ClosureMismatchError("effective intensity is defined for linear drift only")
    eta = problem.drift.coefficients[1]
    if t == problem.t0:
        return problem.kappa * float(problem.cross_cov(t))
    s = _grid(problem, t, num)
    integrand = np.exp(eta * (t - s)) * problem.noise.autocov(t, s)
    cross = problem.kappa * math.exp(eta * (t - problem.t0)) * float(problem.cross_cov(t))
    return cross + problem.kappa**2 * np.trapezoid(integrand, s)


def sct_coefficients(problem, t, *, num=None):
    """Small-correlation-time coefficients (D_0, D_1).

    D_n(t) = kappa C_{X0 Xi}(t) (t-t0)^n
             + kappa^2 int_{t0}^t C(t, s) (t-s)^n ds;  the closure's
    diffusion is D_0 + D_1 h'(x).
    """
    cross = problem.kappa * float(problem.cross_cov(t))
    if t == problem.t0:
        return cross, 0.0
    s = _grid(problem, t, num)
    kernel = problem.noise.autocov(t, s)
    d0 = cross + problem.kappa**2 * np.trapezoid(kernel, s)
    d1 = cross * (t - problem.t0) + problem.kappa**2 * np.trapezoid(kernel * (t - s), s)
    return float(d0), float(d1)


def sct_diffusion_field(problem, t, *, num=None, domain=None):
    """Diffusion field D_0 + D_1 h'(x) of the SCT closure.

    The SCT diffusion may go negative; it is reported as-is with a
    warning flag raised when ``domain`` is given and min B < 0 there.
    """
    d0, d1 = sct_coefficients(problem, t, num=num)
    coeffs = np.zeros(max(1, problem.drift.degree))
    coeffs[0] = d0
    dcoef = np.asarray(problem.drift.deriv_coefficients)
    coeffs[: dcoef.size] += d1 * dcoef
    negative = False
    if domain is not None:
        xs = np.linspace(domain[0], domain[1], 512)
        if np.min(_polyval(xs, coeffs)) < 0.0:
            negative = True
            warnings.warn("SCT diffusion is negative on part of the domain", stacklevel=2)
    return _field("sct", t, coeffs, (d0, d1), negative_warning=negative)


def fox_diffusion(problem, x, t, *, num=None):
    """Pointwise diffusion of the exponential current-time closure.

    D(x, t) = kappa C_{X0 Xi}(t) e^{h'(x)(t-t0)}
              + kappa^2 int_{t0}^t C(t, s) e^{h'(x)(t-s)} ds.
    Finite for finite t; reduces to the effective intensity for linear
    drift.
    """
    hp = problem.drift.h1(x)
    cross = problem.kappa * float(problem.cross_cov(t)) * np.exp(hp * (t - problem.t0))
    if t == problem.t0:
        return cross
    s = _grid(problem, t, num)
    kernel = problem.noise.autocov(t, s)
    integrand = kernel[..., :] * np.exp(np.multiply.outer(hp, t - s))
    return cross + problem.kappa**2 * np.trapezoid(integrand, s, axis=-1)


def fox_diffusion_ou_closed(problem, x, t):
    """Closed form of the exponential closure for OU noise without
    initial cross-correlation; cross-check path for ``fox_diffusion``."""
    noise = problem.noise
    if noise.kind != "ou":
        raise ClosureMismatchError("closed form requires OU noise")
    if problem.initial.cross_c0 != 0.0:
        raise ClosureMismatchError("closed form requires zero initial cross-covariance")
    hp = np.asarray(problem.drift.h1(x), dtype=float)
    rate = (1.0 - noise.tau * hp) / noise.tau
    amp = problem.kappa**2 * noise.intensity
    span = t - problem.t0
    out = np.where(
        np.abs(rate) > 1e-12,
        np.divide(amp, 1.0 - noise.tau * hp, where=np.abs(rate) > 1e-12)
        * (1.0 - np.exp(-rate * span)),
        amp * span / noise.tau,
    )
    return out if out.ndim else float(out)


def fox_stationary_diffusion(problem, x):
    """Stationary limit kappa^2 D / (1 - tau h'(x)) of the exponential
    closure; rejects states where tau h'(x) >= 1 (divergent diffusion)."""
    noise = problem.noise
    if noise.kind != "ou":
        raise ClosureMismatchError("stationary form requires OU noise")
    hp = np.asarray(problem.drift.h1(x), dtype=float)
    if np.any(noise.tau * hp >= 1.0):
        raise DivergentDiffusionError(
            "stationary diffusion diverges where tau * h'(x) >= 1"
        )
    out = problem.kappa**2 * noise.intensity / (1.0 - noise.tau * hp)
    return out if out.ndim else float(out)


def sct_stationary_diffusion(problem, x):
    """Stationary SCT diffusion kappa^2 D (1 + tau h'(x)) for OU noise."""
    noise = problem.noise
    if noise.kind != "ou":
        raise ClosureMismatchError("stationary form requires OU noise")
    out = problem.kappa**2 * noise.intensity * (1.0 + noise.tau * np.asarray(problem.drift.h1(x), dtype=float))
    return out if out.ndim else float(out)


def hanggi_stationary_intensity(problem, r_inf):
    """Stationary decoupling-closure intensity kappa^2 D / (1 - tau R_inf)."""
    noise = problem.noise
    if noise.kind != "ou":
        raise ClosureMismatchError("stationary form requires OU noise")
    denom = 1.0 - noise.tau * r_inf
    if denom <= 0.0:
        raise DivergentDiffusionError("stationary intensity requires tau * R_inf < 1")
    return problem.kappa**2 * noise.intensity / denom


def generalized_intensities(problem, history, t, order, *, e_override=None):
    """History-weighted kernel moments [D_0 ... D_M].

    D_m(t) = kappa e^{E(t)} C_{X0 Xi}(t) (t-t0)^m
             + kappa^2 int_{t0}^t e^{E(t)-E(s)} C(t, s) (t-s)^m ds,
    with E the stored cumulative integral of R and the time integral a
    composite trapezoid on the history grid.  ``e_override`` substitutes
    the value of E(t) at the upper limit (used by the solver's first-step
    rule); interior E values always come from the history table.
    """
    if order < 0:
        raise ParameterError("order must be >= 0")
    k = history.index_of(t)
    s = history.times[: k + 1]
    e = history.cumulative[: k + 1].copy()
    e_t = float(e[k]) if e_override is None else float(e_override)
    cross_base = problem.kappa * math.exp(e_t) * float(problem.cross_cov(t))
    out = np.empty(order + 1)
    if k == 0:
        for m in range(order + 1):
            out[m] = cross_base if m == 0 else 0.0
        return out
    weight = np.exp(e_t - e) * problem.noise.autocov(t, s)
    lag = t - s
    for m in range(order + 1):
        out[m] = cross_base * (t - problem.t0) ** m + problem.kappa**2 * np.trapezoid(
            weight * lag**m, s
        )
    return out


def hanggi_diffusion(problem, history, t, *, e_override=None):
    """Diffusion intensity of the decoupling closure (x-independent).

    Exactly the order-0 generalized intensity, so the two code paths are
    bit-identical by construction.
    """
    return float(generalized_intensities(problem, history, t, 0, e_override=e_override)[0])


def make_diffusion_field(problem, history, t, order, *, e_override=None,
                         r_current=None):
    """Polynomial diffusion field of the order-M closure.

    B(x, t) = sum_m D_m / m! * phi^m(x),  phi(x) = h'(x) - R(t),
    returned with its exact polynomial x-derivative.  R(t) defaults to the
    history tail; the solver passes its current iterate explicitly.
    """
    intensities = generalized_intensities(problem, history, t, order, e_override=e_override)
    if r_current is None:
        r_current = history.r_values[history.index_of(t)]
    phi = np.asarray(problem.drift.deriv_coefficients, dtype=float).copy()
    phi[0] -= r_current
    acc = np.zeros(1)
    power = np.ones(1)
    for m in range(order + 1):
        term = intensities[m] / math.factorial(m) * power
        acc = np.polynomial.polynomial.polyadd(acc, term)
        if m < order:
            power = np.polynomial.polynomial.polymul(power, phi)
    return _field("poly" if order > 0 else "hanggi", t, acc, intensities)
