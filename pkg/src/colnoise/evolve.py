"""Time-marching driver for the response-pdf evolution equations.

Advances the Galerkin weights with a Crank-Nicolson scheme.  For the
history-dependent closures the current value of R(t) = E[h'(X(t))] is
predicted by linear extrapolation and corrected by fixed-point iterations
until |R - R_upd| <= eps_tol; the accepted values feed the stored moment
history that the nonlocal diffusion coefficients integrate over.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import closures
from .errors import ParameterError, StepFailureError, UnsupportedCoefficientError
from .pufem import Cover, DiscreteSystem, PuBasis, cn_step

_CLOSURE_KINDS = ("sct", "fox", "hanggi", "poly")


@dataclass(frozen=True)
class ClosureSpec:
    """Closure selection: kind plus the expansion order for 'poly'."""

    kind: str
    order: int = 0

    def __post_init__(self):
        if self.kind not in _CLOSURE_KINDS:
            raise ParameterError(f"closure kind must be one of {_CLOSURE_KINDS}")
        if self.order < 0:
            raise ParameterError("closure order must be >= 0")

    @property
    def uses_history(self):
        return self.kind in ("hanggi", "poly")


@dataclass(frozen=True)
class PufemConfig:
    """Spatial discretization: domain, cover size, local basis, smoothness."""

    domain: tuple = (-4.0, 4.0)
    subdomains: int = 50
    local_dim: int = 4
    smoothness: int = 2

    def build(self):
        cover = Cover(self.domain[0], self.domain[1], self.subdomains)
        basis = PuBasis(self.smoothness, self.local_dim)
        return basis, cover


@dataclass(frozen=True)
class SolverConfig:
    """Time discretization and correction-loop controls."""

    dt: float = 0.01
    t_end: float = 10.0
    eps_tol: float = 1e-8
    max_iters: int = 20
    snapshot_times: tuple = ()
    grid_points: int = 801
    mass_tol: float = 1e-4
    stat_window: float = 1.0
    stat_threshold: float = 5e-4

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ParameterError("time step must be positive")
        if self.eps_tol <= 0.0:
            raise ParameterError("correction tolerance must be positive")
        if self.max_iters < 1:
            raise ParameterError("need at least one correction iteration")


@dataclass
class PdfTrajectory:
    """Solver output: snapshots, moment series and run diagnostics."""

    times: np.ndarray
    mean: np.ndarray
    variance: np.ndarray
    r_moment: np.ndarray
    mass: np.ndarray
    iterations: np.ndarray
    min_diffusion: np.ndarray
    boundary_mass: np.ndarray
    energy_l2: np.ndarray        # I(t) = int f^2 dx
    energy_grad: np.ndarray      # P(t) = int (df/dx)^2 dx
    snapshots: list = field(default_factory=list)  # (time, x, f, weights)
    history: closures.MomentHistory | None = None
    mass_flag: bool = False
    sct_negative_flag: bool = False

    def snapshot_at(self, t):
        best = min(self.snapshots, key=lambda snap: abs(snap[0] - t))
        return best


def compute_moment(system, weights, poly_coeffs):
    """int p(x) f(x) dx for the represented density, exact quadrature."""
    return float(system.integrate_poly_against_basis(poly_coeffs) @ np.asarray(weights))


class _DiffusionBuilder:
    """Produces the closure's polynomial diffusion field at a grid time."""

    def __init__(self, problem, closure, history, domain):
        self.problem = problem
        self.closure = closure
        self.history = history
        self.domain = domain
        if closure.kind == "fox" and not problem.drift.is_linear:
            raise UnsupportedCoefficientError(
                "the exponential closure has a non-polynomial diffusion for "
                "nonlinear drift; the Galerkin solver supports it only for "
                "linear problems"
            )

    def field(self, t, *, num=None, e_override=None, r_current=None):
        problem, closure = self.problem, self.closure
        if closure.kind == "sct":
            return closures.sct_diffusion_field(problem, t, num=num, domain=self.domain)
        if closure.kind == "fox":
            # linear drift only: reduces to the effective intensity
            value = closures.effective_intensity(problem, t, num=num)
            return closures.constant_diffusion_field("fox", t, value)
        order = 0 if closure.kind == "hanggi" else closure.order
        return closures.make_diffusion_field(
            problem, self.history, t, order,
            e_override=e_override, r_current=r_current,
        )


def run_evolution(problem, closure, solver_cfg, pufem_cfg):
    """March the closed pdf equation from the initial Gaussian to t_end.

    Follows the prediction-correction algorithm: project the initial
    density, seed R(t0) from it, take the first step with R(t1) = R(t0)
    and the rectangle rule for the history integral, then march with
    linear extrapolation, trapezoid history integrals, Crank-Nicolson
    solves and fixed-point correction of R at the new time.
    """
    if isinstance(closure, str):
        closure = ClosureSpec(closure)
    basis, cover = pufem_cfg.build()
    system = DiscreteSystem(basis, cover)
    dt = solver_cfg.dt
    n_steps = int(round((solver_cfg.t_end - problem.t0) / dt))
    if n_steps < 1:
        raise ParameterError("horizon shorter than one time step")
    times = problem.t0 + dt * np.arange(n_steps + 1)

    init = problem.initial
    f0 = lambda x: np.exp(-0.5 * (x - init.mean) ** 2 / init.variance) / math.sqrt(
        2.0 * math.pi * init.variance
    )
    w = system.project_initial(f0)

    hprime = np.asarray(problem.drift.deriv_coefficients)
    hvec = system.integrate_poly_against_basis(hprime)
    xvec = system.integrate_poly_against_basis([0.0, 1.0])
    x2vec = system.integrate_poly_against_basis([0.0, 0.0, 1.0])
    grid = np.linspace(cover.gmin, cover.gmax, solver_cfg.grid_points)

    history = closures.MomentHistory(problem.t0, dt)
    history.append(hvec @ w)
    builder = _DiffusionBuilder(problem, closure, history, (cover.gmin, cover.gmax))

    snapshot_idx = {
        int(np.clip(round((t - problem.t0) / dt), 0, n_steps)) for t in solver_cfg.snapshot_times
    }

    n_rec = n_steps + 1
    rec = {name: np.zeros(n_rec) for name in
           ("mean", "var", "r", "mass", "iters", "minb", "bmass", "il2", "igrad")}
    traj_snaps = []
    sct_negative = False

    def record(i, wi, iters, b_field):
        mass = float(system.mass_vector @ wi)
        mean = float(xvec @ wi)
        rec["mean"][i] = mean
        rec["var"][i] = float(x2vec @ wi) - mean**2
        rec["r"][i] = history.r_values[i]
        rec["mass"][i] = mass
        rec["iters"][i] = iters
        rec["minb"][i] = float(np.min(b_field.b(grid))) if b_field is not None else np.nan
        rec["bmass"][i] = system.boundary_mass(wi)
        rec["il2"][i] = float(wi @ system.mass @ wi)
        rec["igrad"][i] = float(wi @ system.grad @ wi)
        if i in snapshot_idx:
            traj_snaps.append((times[i], grid.copy(), system.evaluate(wi, grid), wi.copy()))

    b0 = builder.field(times[0], num=2)
    record(0, w, 0, b0)

    a_prev = system.assemble_stiffness(problem.drift_coefficient(times[0]), b0)
    mass_flag = False

    for i in range(1, n_steps + 1):
        t_i = times[i]
        r_committed = history.r_values
        if i == 1:
            r_pred = r_committed[0]
        else:
            r_pred = 2.0 * r_committed[i - 1] - r_committed[i - 2]

        if closure.uses_history:
            w_new, r_new, iters, b_new = _correct_step(
                problem, solver_cfg, system, builder, history, hvec,
                a_prev, w, t_i, dt, i, r_pred,
            )
        else:
            b_new = builder.field(t_i, num=i + 1)
            if b_new.negative_warning:
                sct_negative = True
            a_new = system.assemble_stiffness(problem.drift_coefficient(t_i), b_new)
            w_new = cn_step(system.mass, a_prev, a_new, w, dt)
            r_new = float(hvec @ w_new)
            iters = 1

        history.append(r_new)
        w = w_new
        if not np.all(np.isfinite(w)):
            raise StepFailureError(f"non-finite weights at t={t_i:.6g}")
        record(i, w, iters, b_new)
        if rec["mass"][i] < 0.0:
            raise StepFailureError(f"negative mass at t={t_i:.6g}")
        if abs(rec["mass"][i] - 1.0) > solver_cfg.mass_tol:
            mass_flag = True

        # A at the accepted time, frozen for the next step.  For the
        # history closures it is rebuilt from committed values; the
        # history-free coefficients are unchanged, so reuse is exact.
        if closure.uses_history:
            b_committed = builder.field(t_i)
            a_prev = system.assemble_stiffness(problem.drift_coefficient(t_i), b_committed)
        else:
            a_prev = a_new

    return PdfTrajectory(
        times=times,
        mean=rec["mean"], variance=rec["var"], r_moment=rec["r"],
        mass=rec["mass"], iterations=rec["iters"].astype(int),
        min_diffusion=rec["minb"], boundary_mass=rec["bmass"],
        energy_l2=rec["il2"], energy_grad=rec["igrad"],
        snapshots=traj_snaps, history=history,
        mass_flag=mass_flag, sct_negative_flag=sct_negative,
    )


def _correct_step(problem, solver_cfg, system, builder, history, hvec,
                  a_prev, w, t_i, dt, i, r_pred):
    """Fixed-point correction of R(t_i); returns accepted state.

    The first step keeps the rectangle rule E(t1) = R(t1) dt inside the
    iterations; committed history always uses the trapezoid rule.  A(t_i)
    is rebuilt every iterate with the updated R entering both the
    fluctuation polynomial and the intensity integrals; A(t_{i-1}) stays
    frozen.
    """
    q_i = problem.drift_coefficient(t_i)
    r_iter = r_pred
    for it in range(1, solver_cfg.max_iters + 1):
        history.append(r_iter)
        e_override = r_iter * dt if i == 1 else None
        try:
            b_new = builder.field(t_i, e_override=e_override, r_current=r_iter)
        finally:
            history.pop()
        a_new = system.assemble_stiffness(q_i, b_new)
        w_cand = cn_step(system.mass, a_prev, a_new, w, dt)
        r_upd = float(hvec @ w_cand)
        if not math.isfinite(r_upd):
            raise StepFailureError(f"moment update diverged at t={t_i:.6g}")
        if abs(r_iter - r_upd) <= solver_cfg.eps_tol:
            return w_cand, r_upd, it, b_new
        r_iter = r_upd
    raise StepFailureError(
        f"correction loop did not converge within {solver_cfg.max_iters} "
        f"iterations at t={t_i:.6g}"
    )


def detect_stationarity(times, mean, variance, *, window, threshold):
    """Earliest time after which both moments stop changing.

    A window is stationary when the spans of the mean and the variance
    over it fall below ``threshold`` relative to the distribution scale
    (the spread for the mean, the variance magnitude for the variance).
    """
    times = np.asarray(times, dtype=float)
    mean = np.asarray(mean, dtype=float)
    variance = np.asarray(variance, dtype=float)
    if times.size < 2 or times[-1] - times[0] < window:
        return False, None
    eps = 1e-300
    for j in range(times.size):
        if times[j] - times[0] < window:
            continue
        i0 = int(np.searchsorted(times, times[j] - window, side="left"))
        m = mean[i0:j + 1]
        v = variance[i0:j + 1]
        v_scale = max(float(np.max(np.abs(v))), eps)
        m_scale = max(float(np.max(np.abs(m))), math.sqrt(v_scale), eps)
        if (np.max(v) - np.min(v)) <= threshold * v_scale and \
           (np.max(m) - np.min(m)) <= threshold * m_scale:
            return True, float(times[j])
    return False, None


def energy_identity_residual(problem, trajectory, *, num=None):
    """Residual of the linear-case energy identity

        1/2 dI/dt + 1/2 eta I + D_eff(t) P = 0,

    with dI/dt by centred differences on the recorded series.  Returns
    (max |residual|, max |eta I|) over the interior of the run.
    """
    if not problem.drift.is_linear:
        raise ParameterError("the energy identity applies to linear drift")
    eta = problem.drift.coefficients[1]
    t = trajectory.times
    il2 = trajectory.energy_l2
    pgrad = trajectory.energy_grad
    if t.size < 3:
        raise ParameterError("need at least three recorded times")
    deff = np.array([
        closures.effective_intensity(problem, ti, num=max(2, i + 1))
        for i, ti in enumerate(t)
    ])
    didt = (il2[2:] - il2[:-2]) / (t[2:] - t[:-2])
    residual = 0.5 * didt + 0.5 * eta * il2[1:-1] + deff[1:-1] * pgrad[1:-1]
    return float(np.max(np.abs(residual))), float(np.max(np.abs(eta * il2)))
