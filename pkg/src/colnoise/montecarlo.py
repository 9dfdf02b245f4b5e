"""Ensemble path simulation and kernel density estimation.

Paths of dX/dt = h(X) + kappa Xi(t) are integrated with Heun's method on
an exactly sampled OU excitation path (the coloured-noise paths are
differentiable in time, so a deterministic second-order scheme applies).
Every path owns its generator seeded as base_seed + path_index, which
makes results bit-identical for a fixed (config, seed) regardless of how
paths are batched or parallelised.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError, StationarityError
from .evolve import detect_stationarity

_CHUNK = 2048


@dataclass(frozen=True)
class McConfig:
    """Ensemble size, integrator step, horizon and sampling controls."""

    paths: int = 50_000
    dt: float = 0.005
    t_end: float = 10.0
    seed: int = 20260810
    snapshot_times: tuple = ()
    bandwidth: object = "scott"
    # ensemble moment series carry sampling noise ~ sigma/sqrt(paths), so
    # the stationarity threshold sits above that floor
    stat_window: float = 2.0
    stat_threshold: float = 1e-2

    def __post_init__(self):
        if self.paths < 1:
            raise ParameterError("need at least one path")
        if self.dt <= 0.0:
            raise ParameterError("time step must be positive")


@dataclass
class Ensemble:
    """Snapshot samples plus per-step ensemble moments."""

    snapshot_times: np.ndarray
    samples: dict                      # time -> array of X samples
    times: np.ndarray                  # full step grid
    mean: np.ndarray
    variance: np.ndarray
    excluded_paths: int = 0
    retained: dict = field(default_factory=dict)  # retention time -> samples


def sample_ou_increment(D, tau, m, xi_prev, dt, z):
    """Exact OU transition over dt given a standard normal draw z."""
    if tau <= 0.0:
        raise ParameterError("correlation time must be positive")
    decay = math.exp(-dt / tau)
    scale = math.sqrt((D / tau) * (1.0 - decay * decay))
    return m + (xi_prev - m) * decay + scale * z


def _initial_draws(problem, z1, z2):
    """Joint stationary draw of (X0, Xi(t0)); the excitation marginal is
    Normal(m, D/tau) and the pair is conditioned on the cross-covariance."""
    noise = problem.noise
    init = problem.initial
    sig_x = init.sigma
    sig_xi = math.sqrt(noise.intensity / noise.tau)
    rho = float(problem.cross_cov(problem.t0)) / (sig_x * sig_xi)
    if abs(rho) > 1.0:
        raise ParameterError("cross-covariance exceeds the admissible bound")
    x0 = init.mean + sig_x * z1
    m0 = float(noise.mean(problem.t0))
    xi0 = m0 + sig_xi * (rho * z1 + math.sqrt(1.0 - rho * rho) * z2)
    return x0, xi0


def simulate_ensemble(problem, config, *, retention_times=()):
    """Integrate the ensemble and collect snapshot/retention samples.

    Only OU excitation is supported: path sampling of a general tabulated
    kernel would require a dense Cholesky factorisation of the kernel,
    which is out of scope here.
    """
    noise = problem.noise
    if noise.kind != "ou":
        raise ParameterError("path simulation supports OU excitation only")
    dt = config.dt
    n_steps = int(round((config.t_end - problem.t0) / dt))
    if n_steps < 1:
        raise ParameterError("horizon shorter than one Monte-Carlo step")
    times = problem.t0 + dt * np.arange(n_steps + 1)

    def step_index(t):
        k = int(np.clip(round((t - problem.t0) / dt), 0, n_steps))
        return k

    snap_steps = {step_index(t): float(t) for t in config.snapshot_times}
    ret_steps = {step_index(t): float(t) for t in retention_times}
    record_steps = sorted(set(snap_steps) | set(ret_steps))

    total = config.paths
    sums = np.zeros(n_steps + 1)
    sqsums = np.zeros(n_steps + 1)
    collected = {k: [] for k in record_steps}
    excluded = 0

    decay = math.exp(-dt / noise.tau)
    ou_scale = math.sqrt((noise.intensity / noise.tau) * (1.0 - decay * decay))
    mean_path = np.asarray(noise.mean(times), dtype=float) * np.ones_like(times)
    kappa = problem.kappa
    h = problem.drift.h

    for start in range(0, total, _CHUNK):
        count = min(_CHUNK, total - start)
        normals = np.empty((count, n_steps + 2))
        for p in range(count):
            rng = np.random.default_rng(config.seed + start + p)
            normals[p] = rng.standard_normal(n_steps + 2)
        x = np.empty(count)
        xi = np.empty(count)
        for p in range(count):
            x[p], xi[p] = _initial_draws(problem, normals[p, 0], normals[p, 1])

        states = np.empty((count, len(record_steps))) if record_steps else None
        rec_pos = {k: j for j, k in enumerate(record_steps)}
        alive = np.ones(count, dtype=bool)

        if 0 in rec_pos:
            states[:, rec_pos[0]] = x
        sums[0] += float(np.sum(x))
        sqsums[0] += float(np.sum(x * x))

        for i in range(1, n_steps + 1):
            m_next = mean_path[i]
            xi_next = m_next + (xi - m_next) * decay + ou_scale * normals[:, i + 1]
            f_now = h(x) + kappa * xi
            x_star = x + dt * f_now
            f_next = h(x_star) + kappa * xi_next
            x = x + 0.5 * dt * (f_now + f_next)
            xi = xi_next
            bad = ~np.isfinite(x)
            if np.any(bad):
                alive &= ~bad
                x = np.where(bad, 0.0, x)
            if i in rec_pos:
                states[:, rec_pos[i]] = np.where(alive, x, np.nan)
            sums[i] += float(np.sum(x[alive]))
            sqsums[i] += float(np.sum(x[alive] ** 2))

        excluded += int(np.sum(~alive))
        for k in record_steps:
            col = states[:, rec_pos[k]]
            collected[k].append(col[np.isfinite(col)])

    if excluded:
        warnings.warn(f"{excluded} path(s) diverged and were excluded", stacklevel=2)
    n_eff = total - excluded
    mean = sums / max(n_eff, 1)
    var = sqsums / max(n_eff, 1) - mean**2

    samples = {snap_steps[k]: np.concatenate(collected[k]) for k in snap_steps}
    retained = {ret_steps[k]: np.concatenate(collected[k]) for k in ret_steps}
    return Ensemble(
        snapshot_times=np.asarray(sorted(samples)), samples=samples,
        times=times, mean=mean, variance=var,
        excluded_paths=excluded, retained=retained,
    )


def kde(samples, grid, bandwidth="scott"):
    """Gaussian-kernel density estimate, renormalised on the grid.

    ``bandwidth`` is Scott's rule sigma_hat * n^(-1/5) by default, or an
    explicit width.  A degenerate (zero-spread) sample set gets a floor
    bandwidth and a warning.
    """
    samples = np.asarray(samples, dtype=float)
    grid = np.asarray(grid, dtype=float)
    if samples.size < 2:
        raise ParameterError("kernel density estimation needs at least 2 samples")
    if bandwidth == "scott":
        bw = float(np.std(samples, ddof=1)) * samples.size ** (-0.2)
    else:
        bw = float(bandwidth)
        if bw <= 0.0:
            raise ParameterError("bandwidth must be positive")
    floor = (grid[-1] - grid[0]) / max(grid.size, 2) / 10.0
    if bw < floor:
        warnings.warn("degenerate sample spread; applying bandwidth floor", stacklevel=2)
        bw = max(bw, floor)

    out = np.zeros_like(grid)
    norm = 1.0 / (samples.size * bw * math.sqrt(2.0 * math.pi))
    chunk = max(1, int(5e6 // max(grid.size, 1)))
    for start in range(0, samples.size, chunk):
        block = samples[start:start + chunk]
        z = (grid[:, None] - block[None, :]) / bw
        out += norm * np.sum(np.exp(-0.5 * z * z), axis=1)
    total = np.trapezoid(out, grid)
    if total <= 0.0:
        raise ParameterError("density estimate vanished on the grid")
    return out / total


def stationary_samples(problem, config):
    """Pooled decorrelated samples of the stationary regime.

    After the detected onset of moment stationarity, samples are kept
    every two correlation times per path (which decorrelates consecutive
    OU draws) and pooled across paths.
    """
    spacing = 2.0 * problem.noise.tau
    ret_times = problem.t0 + spacing * np.arange(1, int((config.t_end - problem.t0) / spacing) + 1)
    ens = simulate_ensemble(problem, config, retention_times=ret_times)
    ok, t_st = detect_stationarity(
        ens.times, ens.mean, ens.variance,
        window=config.stat_window, threshold=config.stat_threshold,
    )
    if not ok:
        raise StationarityError(
            "moments did not become stationary within the horizon "
            f"(t_end={config.t_end}, window={config.stat_window}, "
            f"threshold={config.stat_threshold})"
        )
    keep = [t for t in sorted(ens.retained) if t > t_st]
    if not keep:
        raise StationarityError(
            f"stationarity starts at t={t_st:.3g} but no retention time lies beyond it"
        )
    pooled = np.concatenate([ens.retained[t] for t in keep])
    return pooled, t_st, ens
