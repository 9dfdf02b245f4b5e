"""Command-line entry point.

Commands: ``solve`` (PDE run), ``mc`` (ensemble + KDE), ``oracle``
(analytic linear solution), ``compare`` (distance between two density
files), ``moments`` (combinatorics spot checks) and ``bench`` (preset
benchmark sweeps).  Configuration is a single JSON file; unknown keys are
rejected so typos in physics parameters cannot pass silently.  Exit
codes: 0 success, 1 usage/config error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import math
import os
import sys
import tempfile

import numpy as np

from . import __version__, closures, evolve, montecarlo, oracle
from .errors import ColnoiseError, ConfigError, DivergentDiffusionError
from .model import (
    DriftSpec,
    InitialSpec,
    NoiseSpec,
    ProblemSpec,
    normalized_bistable_problem,
)

_FMT = "%.15e"


# ---------------------------------------------------------------------------
# configuration


_DEFAULTS = {
    "problem": {
        "drift": None,           # required: ascending polynomial coefficients
        "kappa": 1.0,
        "noise": {"kind": "ou", "intensity": 1.0, "tau": 1.0, "mean": 0.0},
        "initial": {"mean": 0.0, "sigma": None, "cross_c0": 0.0, "cross_tau": 1.0},
        "t0": 0.0,
        "t_end": 10.0,
    },
    "closure": {"kind": "poly", "order": 2, "stationary": False},
    "solver": {
        "dt": 0.01, "t_end": None, "eps_tol": 1e-8, "max_iters": 20,
        "domain": [-4.0, 4.0], "subdomains": 50, "local_dim": 4,
        "smoothness": 2, "grid_points": 801, "mass_tol": 1e-4,
        "stat_window": 1.0, "stat_threshold": 5e-4,
    },
    "mc": {"paths": 50_000, "dt": 0.005, "seed": 20260810, "bandwidth": "scott"},
    "output": {"snapshots": [], "dir": "out"},
}


def _merge(defaults, given, path):
    if not isinstance(given, dict):
        raise ConfigError(path or "<root>", f"expected an object, got {type(given).__name__}")
    out = {}
    for key, default in defaults.items():
        sub = f"{path}.{key}" if path else key
        if key in given:
            value = given[key]
            if isinstance(default, dict) and key != "noise":
                out[key] = _merge(default, value, sub)
            else:
                out[key] = value
        else:
            out[key] = json.loads(json.dumps(default)) if isinstance(default, (dict, list)) else default
    for key in given:
        if key not in defaults:
            raise ConfigError(f"{path}.{key}" if path else key, "unknown key")
    return out


def load_config(path):
    """Parse and validate a run configuration file."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(path, f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(path, f"invalid JSON: {exc}") from exc
    cfg = _merge(_DEFAULTS, raw, "")
    if cfg["solver"]["t_end"] is None:
        cfg["solver"]["t_end"] = cfg["problem"]["t_end"]
    _require(cfg["problem"]["drift"] is not None, "problem.drift", "is required")
    _require(cfg["problem"]["initial"]["sigma"] is not None, "problem.initial.sigma", "is required")
    return cfg


def _require(condition, field, message):
    if not condition:
        raise ConfigError(field, message)


def _build_noise(block):
    kind = block.get("kind", "ou")
    try:
        if kind == "ou":
            allowed = {"kind", "intensity", "tau", "mean"}
            for key in block:
                if key not in allowed:
                    raise ConfigError(f"problem.noise.{key}", "unknown key")
            mean = block.get("mean", 0.0)
            if isinstance(mean, dict):
                mean = (mean["t"], mean["value"])
            return NoiseSpec("ou", intensity=block["intensity"], tau=block["tau"], mean=mean)
        if kind == "table":
            allowed = {"kind", "t", "cov", "mean"}
            for key in block:
                if key not in allowed:
                    raise ConfigError(f"problem.noise.{key}", "unknown key")
            mean = block.get("mean", 0.0)
            if isinstance(mean, dict):
                mean = (mean["t"], mean["value"])
            return NoiseSpec("table", grid=block["t"], cov=block["cov"], mean=mean)
        raise ConfigError("problem.noise.kind", f"unknown noise kind '{kind}'")
    except KeyError as exc:
        raise ConfigError(f"problem.noise.{exc.args[0]}", "is required") from exc
    except ColnoiseError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError("problem.noise", str(exc)) from exc


def build_problem(cfg):
    pb = cfg["problem"]
    try:
        drift = DriftSpec(pb["drift"])
    except ColnoiseError as exc:
        raise ConfigError("problem.drift", str(exc)) from exc
    noise = _build_noise(pb["noise"])
    ib = pb["initial"]
    try:
        initial = InitialSpec(
            mean=float(ib["mean"]), variance=float(ib["sigma"]) ** 2,
            cross_c0=float(ib["cross_c0"]), cross_tau=float(ib["cross_tau"]),
        )
        return ProblemSpec(drift=drift, kappa=float(pb["kappa"]), noise=noise,
                           initial=initial, t0=float(pb["t0"]), t_end=float(pb["t_end"]))
    except ColnoiseError as exc:
        raise ConfigError("problem", str(exc)) from exc


def build_closure(cfg):
    cb = cfg["closure"]
    try:
        return evolve.ClosureSpec(kind=cb["kind"], order=int(cb["order"]))
    except ColnoiseError as exc:
        raise ConfigError("closure", str(exc)) from exc


def build_solver(cfg, problem):
    sb = cfg["solver"]
    try:
        solver = evolve.SolverConfig(
            dt=float(sb["dt"]), t_end=float(sb["t_end"]),
            eps_tol=float(sb["eps_tol"]), max_iters=int(sb["max_iters"]),
            snapshot_times=tuple(cfg["output"]["snapshots"]),
            grid_points=int(sb["grid_points"]), mass_tol=float(sb["mass_tol"]),
            stat_window=float(sb["stat_window"]), stat_threshold=float(sb["stat_threshold"]),
        )
        pufem = evolve.PufemConfig(
            domain=tuple(sb["domain"]), subdomains=int(sb["subdomains"]),
            local_dim=int(sb["local_dim"]), smoothness=int(sb["smoothness"]),
        )
    except (ColnoiseError, TypeError, ValueError) as exc:
        raise ConfigError("solver", str(exc)) from exc
    if solver.t_end > problem.t_end + 1e-12:
        raise ConfigError("solver.t_end", "exceeds the problem horizon")
    if problem.t_end - problem.t0 > 5.0:
        try:
            problem.drift.validate_long_run()
        except ColnoiseError as exc:
            raise ConfigError("problem.drift", str(exc)) from exc
    return solver, pufem


# ---------------------------------------------------------------------------
# output helpers


def _atomic_write(path, text):
    directory = os.path.dirname(path) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path, header, columns):
    rows = zip(*columns)
    lines = [header]
    lines.extend(",".join(_FMT % v for v in row) for row in rows)
    _atomic_write(path, "\n".join(lines) + "\n")


def read_density_csv(path):
    try:
        data = np.loadtxt(path, delimiter=",", skiprows=1)
    except (OSError, ValueError) as exc:
        raise ConfigError(path, f"cannot read density file: {exc}") from exc
    if data.ndim != 2 or data.shape[0] < 2 or data.shape[1] < 2:
        raise ConfigError(path, "degenerate density file (need >= 2 rows of x,f)")
    x = data[:, 0]
    if np.any(np.diff(x) <= 0):
        raise ConfigError(path, "x grid must be strictly increasing")
    return x, data[:, 1]


def _snapshot_name(t):
    return f"pdf_t{t:g}.csv"


def _write_meta(outdir, cfg, extra=None):
    meta = {"version": __version__, "config": cfg}
    if extra:
        meta.update(extra)
    _atomic_write(os.path.join(outdir, "run.meta"), json.dumps(meta, indent=2) + "\n")


# ---------------------------------------------------------------------------
# commands


def cmd_solve(config_path, outdir):
    cfg = load_config(config_path)
    problem = build_problem(cfg)
    closure = build_closure(cfg)
    solver, pufem_cfg = build_solver(cfg, problem)

    if cfg["closure"].get("stationary"):
        return _solve_stationary(cfg, problem, solver, pufem_cfg, outdir)

    traj = evolve.run_evolution(problem, closure, solver, pufem_cfg)
    for t, x, f, _ in traj.snapshots:
        write_csv(os.path.join(outdir, _snapshot_name(t)), "x,f", [x, f])
    write_csv(
        os.path.join(outdir, "moments.csv"),
        "t,mean,var,R,J,min_diffusion,iters",
        [traj.times, traj.mean, traj.variance, traj.r_moment,
         traj.mass, traj.min_diffusion, traj.iterations.astype(float)],
    )
    _write_meta(outdir, cfg, {"mass_flag": traj.mass_flag})
    return 0


def _solve_stationary(cfg, problem, solver, pufem_cfg, outdir):
    """Stationary-mode run: evaluate the closure's long-time density
    directly (no time marching)."""
    kind = cfg["closure"]["kind"]
    grid = np.linspace(pufem_cfg.domain[0], pufem_cfg.domain[1], solver.grid_points)
    if kind == "fox":
        b = closures.fox_stationary_diffusion(problem, grid)  # rejects tau h' >= 1
        f = _stationary_density(problem, b, grid)
    elif kind == "hanggi":
        r_inf = _stationary_r(problem, cfg, solver, pufem_cfg)
        f = oracle.hanggi_stationary_pdf(problem, r_inf, grid)
    elif kind == "sct":
        b = closures.sct_stationary_diffusion(problem, grid)
        if np.any(b <= 0.0):
            raise DivergentDiffusionError("stationary SCT diffusion is not positive on the domain")
        f = _stationary_density(problem, b, grid)
    else:
        # the history-expansion closure has no closed stationary form;
        # use a transient run and its stationarity detector instead
        raise ConfigError("closure.kind", f"no stationary mode for '{kind}'")
    write_csv(os.path.join(outdir, "pdf_stationary.csv"), "x,f", [grid, f])
    _write_meta(outdir, cfg)
    return 0


def _stationary_density(problem, b, grid):
    """General stationary solution C/B(x) * exp(int h/B dx) by quadrature."""
    b = np.broadcast_to(np.asarray(b, dtype=float), grid.shape)
    ratio = problem.drift.h(grid) / b
    anti = np.concatenate([[0.0], np.cumsum(0.5 * (ratio[1:] + ratio[:-1]) * np.diff(grid))])
    log_f = anti - np.log(b)
    log_f -= np.max(log_f)
    f = np.exp(log_f)
    return f / np.trapezoid(f, grid)


def _stationary_r(problem, cfg, solver, pufem_cfg):
    """Stationary moment R_inf from a transient run of the same closure."""
    closure = build_closure(cfg)
    traj = evolve.run_evolution(problem, closure, solver, pufem_cfg)
    ok, t_st = evolve.detect_stationarity(
        traj.times, traj.mean, traj.variance,
        window=solver.stat_window, threshold=solver.stat_threshold,
    )
    if not ok:
        raise ColnoiseError("transient run did not reach stationarity; extend solver.t_end")
    return float(traj.r_moment[-1])


def cmd_mc(config_path, outdir, paths=None, seed=None):
    cfg = load_config(config_path)
    problem = build_problem(cfg)
    mb = dict(cfg["mc"])
    if paths is not None:
        mb["paths"] = paths
    if seed is not None:
        mb["seed"] = seed
    cfg["mc"] = mb
    solver_block = cfg["solver"]
    config = montecarlo.McConfig(
        paths=int(mb["paths"]), dt=float(mb["dt"]),
        t_end=float(solver_block["t_end"] or cfg["problem"]["t_end"]),
        seed=int(mb["seed"]), snapshot_times=tuple(cfg["output"]["snapshots"]),
        bandwidth=mb["bandwidth"],
        stat_window=float(solver_block["stat_window"]),
        stat_threshold=float(solver_block["stat_threshold"]),
    )
    ens = montecarlo.simulate_ensemble(problem, config)
    grid = np.linspace(solver_block["domain"][0], solver_block["domain"][1],
                       int(solver_block["grid_points"]))
    for t, samples in sorted(ens.samples.items()):
        f = montecarlo.kde(samples, grid, config.bandwidth)
        write_csv(os.path.join(outdir, _snapshot_name(t)), "x,f", [grid, f])
    write_csv(
        os.path.join(outdir, "mc_moments.csv"), "t,mean,var",
        [ens.times, ens.mean, ens.variance],
    )
    _write_meta(outdir, cfg, {"excluded_paths": ens.excluded_paths})
    return 0


def cmd_oracle(config_path, outdir):
    cfg = load_config(config_path)
    problem = build_problem(cfg)
    sb = cfg["solver"]
    grid = np.linspace(sb["domain"][0], sb["domain"][1], int(sb["grid_points"]))
    snaps = list(cfg["output"]["snapshots"]) or [problem.t_end]
    moments = oracle.linear_moments(problem, snaps)
    for i, t in enumerate(snaps):
        write_csv(os.path.join(outdir, _snapshot_name(t)), "x,f",
                  [grid, moments.state(i).pdf(grid)])
    write_csv(
        os.path.join(outdir, "oracle_moments.csv"), "t,mean,var,deff",
        [moments.times, moments.mean, moments.variance, moments.effective_intensity],
    )
    _write_meta(outdir, cfg)
    return 0


def density_distance(file_a, file_b, metric):
    xa, fa = read_density_csv(file_a)
    xb, fb = read_density_csv(file_b)
    if xa.size == xb.size and np.allclose(xa, xb, rtol=0.0, atol=1e-12):
        gb = fb
    else:
        gb = np.interp(xa, xb, fb)
    if metric == "l1":
        return float(np.trapezoid(np.abs(fa - gb), xa))
    if metric == "linf":
        return float(np.max(np.abs(fa - gb)))
    raise ConfigError("metric", f"unknown metric '{metric}'")


def cmd_compare(file_a, file_b, metric):
    value = density_distance(file_a, file_b, metric)
    print(f"{value:.6g}")
    return 0


def cmd_moments(args):
    if args.op == "hermite":
        from .gaussmoments import hermite_abs
        print(hermite_abs(args.n, args.k))
        return 0
    noise = NoiseSpec("ou", intensity=args.ou_d, tau=args.ou_tau)
    if args.op == "isserlis":
        from .gaussmoments import CovSpec, isserlis
        times = [float(v) for v in args.times.split(",")]
        print(f"{isserlis(CovSpec(times, noise)):.12g}")
        return 0
    from .gaussmoments import quadratic_cumulant
    value = quadratic_cumulant(args.eta, args.kappa, noise, args.x0, args.n,
                               args.t, num=args.num)
    print(f"{value:.12g}")
    return 0


# ---------------------------------------------------------------------------
# benchmark presets


def fig3_config(outdir):
    return {
        "problem": {
            "drift": [0.0, -0.8], "kappa": 0.2,
            "noise": {"kind": "ou", "intensity": 1.0, "tau": 1.0, "mean": 0.2},
            "initial": {"mean": -0.7, "sigma": 0.15, "cross_c0": 0.0, "cross_tau": 1.0},
            "t0": 0.0, "t_end": 10.0,
        },
        "closure": {"kind": "poly", "order": 0, "stationary": False},
        "solver": {"dt": 0.01, "t_end": 10.0, "domain": [-2.0, 2.0]},
        "mc": {"paths": 50_000, "dt": 0.005, "seed": 20260810, "bandwidth": "scott"},
        "output": {"snapshots": [1.0, 2.0, 5.0, 10.0], "dir": outdir},
    }


_BISTABLE_HORIZONS = {0.1: 15.0, 0.3: 15.0, 0.5: 15.0, 1.0: 20.0, 1.5: 25.0,
                      3.0: 30.0, 5.0: 40.0}


def _bistable_case(d_tilde, tau_tilde, order, outdir, *, paths=50_000, dt=0.01):
    return {
        "name": f"D{d_tilde:g}_tau{tau_tilde:g}_M{order}",
        "d": d_tilde, "tau": tau_tilde, "order": order,
        "t_end": _BISTABLE_HORIZONS.get(tau_tilde, 30.0),
        "paths": paths, "dt": dt, "outdir": outdir,
    }


def run_bistable_case(case):
    """One stationary bistable comparison: PDE closure vs pooled MC KDE.

    Returns (name, l1 distance, flag) where flag marks the edge of the
    advertised validity region D~ tau~ >= 25.
    """
    d_t, tau_t = case["d"], case["tau"]
    problem = normalized_bistable_problem(d_t, tau_t, t_end=case["t_end"])
    closure = evolve.ClosureSpec("poly", case["order"])
    solver = evolve.SolverConfig(
        dt=case["dt"], t_end=case["t_end"], snapshot_times=(case["t_end"],),
        stat_window=2.0, stat_threshold=1e-3,
    )
    pufem_cfg = evolve.PufemConfig(domain=(-4.0, 4.0))
    traj = evolve.run_evolution(problem, closure, solver, pufem_cfg)
    t, x, f_pde, _ = traj.snapshots[-1]

    mc_cfg = montecarlo.McConfig(
        paths=case["paths"], dt=0.005, t_end=case["t_end"],
        seed=20260810, stat_window=2.0, stat_threshold=1e-3,
    )
    pooled, t_st, _ = montecarlo.stationary_samples(problem, mc_cfg)
    f_mc = montecarlo.kde(pooled, x)

    name = case["name"]
    outdir = case["outdir"]
    write_csv(os.path.join(outdir, f"{name}_pde.csv"), "x,f", [x, f_pde])
    write_csv(os.path.join(outdir, f"{name}_mc.csv"), "x,f", [x, f_mc])
    l1 = float(np.trapezoid(np.abs(f_pde - f_mc), x))
    flag = "validity-edge" if d_t * tau_t >= 25.0 else ""
    return name, l1, flag


def cmd_bench(name, outdir, jobs=1, paths=50_000):
    os.makedirs(outdir, exist_ok=True)
    if name == "fig3":
        return _bench_fig3(outdir, paths)
    if name == "fig4":
        cases = [_bistable_case(1.0, tau, order, outdir, paths=paths)
                 for tau in (0.1, 0.3, 0.5, 1.0, 1.5, 3.0)
                 for order in (0, 2, 4)]
    elif name == "fig5":
        cases = [_bistable_case(d, tau, order, outdir, paths=paths)
                 for d in (0.2, 1.0, 2.0, 5.0)
                 for tau in (0.1, 1.0, 5.0)
                 for order in (0, 2, 4)]
    else:
        raise ConfigError("bench", f"unknown preset '{name}'")

    rows, failures = [], 0
    if jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = {pool.submit(run_bistable_case, case): case for case in cases}
            for fut in concurrent.futures.as_completed(futures):
                case = futures[fut]
                try:
                    rows.append(fut.result())
                except Exception as exc:  # noqa: BLE001 - recorded in summary
                    rows.append((case["name"], math.nan, f"failed: {exc}"))
                    failures += 1
    else:
        for case in cases:
            try:
                rows.append(run_bistable_case(case))
            except Exception as exc:  # noqa: BLE001
                rows.append((case["name"], math.nan, f"failed: {exc}"))
                failures += 1

    rows.sort()
    lines = ["case,l1_to_mc,flag"]
    lines.extend(f"{name},{l1:.6g},{flag}" for name, l1, flag in rows)
    _atomic_write(os.path.join(outdir, "summary.csv"), "\n".join(lines) + "\n")
    for line in lines:
        print(line)
    return 2 if failures else 0


def _bench_fig3(outdir, paths):
    cfg = fig3_config(outdir)
    cfg_path = os.path.join(outdir, "fig3_config.json")
    _atomic_write(cfg_path, json.dumps(cfg, indent=2) + "\n")
    pde_dir = os.path.join(outdir, "pde")
    mc_dir = os.path.join(outdir, "mc")
    oracle_dir = os.path.join(outdir, "oracle")
    cmd_solve(cfg_path, pde_dir)
    cmd_mc(cfg_path, mc_dir, paths=paths)
    cmd_oracle(cfg_path, oracle_dir)
    lines = ["snapshot,linf_pde_oracle,linf_mc_oracle"]
    for t in cfg["output"]["snapshots"]:
        fname = _snapshot_name(t)
        d_pde = density_distance(os.path.join(pde_dir, fname),
                                 os.path.join(oracle_dir, fname), "linf")
        d_mc = density_distance(os.path.join(mc_dir, fname),
                                os.path.join(oracle_dir, fname), "linf")
        lines.append(f"t={t:g},{d_pde:.6g},{d_mc:.6g}")
    _atomic_write(os.path.join(outdir, "summary.csv"), "\n".join(lines) + "\n")
    for line in lines:
        print(line)
    return 0


# ---------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(1)


def make_parser():
    parser = _Parser(prog="colnoise", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="run the PDE solver")
    p_solve.add_argument("--config", required=True)
    p_solve.add_argument("--out", required=True)

    p_mc = sub.add_parser("mc", help="run the Monte-Carlo harness")
    p_mc.add_argument("--config", required=True)
    p_mc.add_argument("--out", required=True)
    p_mc.add_argument("--paths", type=int, default=None)
    p_mc.add_argument("--seed", type=int, default=None)

    p_or = sub.add_parser("oracle", help="write the analytic linear solution")
    p_or.add_argument("--config", required=True)
    p_or.add_argument("--out", required=True)

    p_cmp = sub.add_parser("compare", help="distance between two density files")
    p_cmp.add_argument("file_a")
    p_cmp.add_argument("file_b")
    p_cmp.add_argument("--metric", choices=["l1", "linf"], default="l1")

    p_mom = sub.add_parser("moments", help="Gaussian moment spot checks")
    p_mom.add_argument("--op", choices=["isserlis", "hermite", "qcumulant"], required=True)
    p_mom.add_argument("--n", type=int, default=2)
    p_mom.add_argument("--k", type=int, default=0)
    p_mom.add_argument("--times", default="0.0,1.0")
    p_mom.add_argument("--ou-d", type=float, default=1.0)
    p_mom.add_argument("--ou-tau", type=float, default=1.0)
    p_mom.add_argument("--eta", type=float, default=-1.0)
    p_mom.add_argument("--kappa", type=float, default=1.0)
    p_mom.add_argument("--x0", type=float, default=0.0)
    p_mom.add_argument("--t", type=float, default=10.0)
    p_mom.add_argument("--num", type=int, default=2001)

    p_bench = sub.add_parser("bench", help="preset benchmark sweeps")
    p_bench.add_argument("name", choices=["fig3", "fig4", "fig5"])
    p_bench.add_argument("--out", required=True)
    p_bench.add_argument("--jobs", type=int, default=1)
    p_bench.add_argument("--paths", type=int, default=50_000)

    return parser


def main(argv=None):
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "solve":
            return cmd_solve(args.config, args.out)
        if args.command == "mc":
            return cmd_mc(args.config, args.out, paths=args.paths, seed=args.seed)
        if args.command == "oracle":
            return cmd_oracle(args.config, args.out)
        if args.command == "compare":
            return cmd_compare(args.file_a, args.file_b, args.metric)
        if args.command == "moments":
            return cmd_moments(args)
        if args.command == "bench":
            return cmd_bench(args.name, args.out, jobs=args.jobs, paths=args.paths)
        parser.error(f"unknown command {args.command}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except ColnoiseError as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2
    return 1


if __name__ == "__main__":
    sys.exit(main())
