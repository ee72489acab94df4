"""Command-line driver: runs, tau sweeps, step-size tuning, heatmaps, checks.

Every command writes its CSVs, a metadata.json sidecar, summary.json, the
problem instance (problem.json) and the resolved config (config.yaml) into
the output directory. ``run --replay DIR`` repeats a recorded experiment and
compares its CSVs byte for byte.
"""
import argparse
import json
import logging
import math
import os
import sys
import tempfile

import numpy as np

from . import __version__
from .config import DEFAULT_TAUS, PROBLEM_ARGS, ConfigError, ExperimentConfig, ProblemSpec
from .engine import RunConfig, heatmap_argmin, heatmap_grid, run_pearl_sgd, sweep_tau, tune_gamma
from .problems import compute_parameters, equilibrium_residual, load_problem, problem_hash
from .problems.io import atomic_write_text, dumps_problem
from .schedules import StepSizeSchedule, robot_gamma, theoretical_gamma

log = logging.getLogger("pearlsgd")

EXIT_IO = 1
EXIT_CONFIG = 2
TUNE_GRID = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6)
REPLAYABLE = ("run", "sweep-tau", "tune-gamma", "heatmap", "robot")

# flag name -> generator argument
_PROBLEM_FLAGS = {"d": "d", "M": "M", "n": "n", "mu_a": "mu_a", "L_a": "L_a", "mu_c": "mu_c", "L_c": "L_c",
                  "L_b": "L_b", "batch_size": "batch_size", "problem_seed": "seed", "mu": "mu", "ell": "ell",
                  "noise_std": "noise_std", "coupling": "coupling", "noise_variance": "noise_variance"}


def cli_robot_preset():
    """The multi-robot experiment: 5 robots, sigma^2 = 100, six taus, 5 replicates."""
    cfg = ExperimentConfig(ProblemSpec("robot", {}))
    cfg.run.tau = list(DEFAULT_TAUS)
    cfg.run.schedule = "theoretical-robot"
    cfg.run.mode = "stochastic"
    cfg.run.replicates = 5
    cfg.run.rounds = 200
    cfg.output = "pearl-robot"
    return cfg


# --- argument parsing ------------------------------------------------------

def _add_problem_args(p):
    g = p.add_argument_group("problem")
    g.add_argument("--problem", choices=sorted(PROBLEM_ARGS), help="problem kind")
    g.add_argument("--problem-file", help="load a saved problem.json (kind 'file')")
    g.add_argument("--d", type=int, help="per-player dimension")
    g.add_argument("--M", type=int, help="number of finite-sum components")
    g.add_argument("--n", type=int, help="number of players (nplayer)")
    for name in ("mu-a", "L-a", "mu-c", "L-c", "L-b"):
        g.add_argument(f"--{name}", type=float, help="spectrum bound")
    g.add_argument("--batch-size", type=int)
    g.add_argument("--problem-seed", type=int, help="generator seed (defaults to --seed)")
    g.add_argument("--mu", type=float)
    g.add_argument("--ell", type=float)
    g.add_argument("--coupling", type=float)
    g.add_argument("--noise-std", type=float)
    g.add_argument("--noise-variance", type=float)


def _add_run_args(p, multi_tau):
    g = p.add_argument_group("run")
    g.add_argument("--config", help="YAML experiment config; flags override it")
    if multi_tau:
        g.add_argument("--tau", type=int, nargs="+", help="synchronization intervals")
    else:
        g.add_argument("--tau", type=int, help="synchronization interval (>= 1)")
    g.add_argument("--schedule", help="constant | theoretical | theoretical-robot | corollary | decreasing")
    g.add_argument("--gamma", type=float, help="step-size for the constant schedule")
    g.add_argument("--total-iterations", type=int, help="T for the corollary schedule")
    g.add_argument("--rounds", type=int)
    g.add_argument("--mode", help="deterministic | stochastic")
    g.add_argument("--seed", type=int)
    g.add_argument("--replicates", type=int)
    g.add_argument("--divergence-threshold", type=float)
    g.add_argument("--x0", help="'ones', 'zeros', a number, or comma-separated values")
    g.add_argument("--out", help="output directory")
    g.add_argument("--workers", type=int, default=1, help="parallel runs (sweeps and grids)")
    g.add_argument("--timing", action="store_true", help="fill elapsed_ms (CSVs stop being reproducible)")
    g.add_argument("--no-plot", action="store_true", help="skip PNG figures")


def build_parser():
    parser = argparse.ArgumentParser(prog="pearl", description="PEARL-SGD experiments for n-player games")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="single run at one tau")
    _add_problem_args(p)
    _add_run_args(p, multi_tau=False)
    p.add_argument("--replay", metavar="DIR", help="repeat the experiment recorded in DIR")

    p = sub.add_parser("sweep-tau", help="theoretical-gamma runs over several taus")
    _add_problem_args(p)
    _add_run_args(p, multi_tau=True)

    p = sub.add_parser("tune-gamma", help="best constant gamma per tau on a grid")
    _add_problem_args(p)
    _add_run_args(p, multi_tau=True)
    p.add_argument("--gammas", type=float, nargs="+", help="grid (default 1e-1 .. 1e-6)")

    p = sub.add_parser("heatmap", help="log10 final error over a gamma x tau grid")
    _add_problem_args(p)
    _add_run_args(p, multi_tau=True)
    p.add_argument("--gammas", type=float, nargs="+", help="explicit gamma grid")
    p.add_argument("--gamma-range", type=float, nargs=3, metavar=("LO", "HI", "POINTS"),
                   help="log-uniform grid (default 1e-4 1 20)")

    p = sub.add_parser("verify", help="numerical checks of assumptions and bounds")
    _add_problem_args(p)
    _add_run_args(p, multi_tau=False)
    p.add_argument("--suite", default="all",
                   choices=("all", "assumptions", "linear-rate", "neighborhood", "lemmas", "decreasing"))
    p.add_argument("--n-samples", type=int, default=10_000, help="points for assumption checks")
    p.add_argument("--n-seeds", type=int, default=200, help="Monte Carlo replicates")
    p.add_argument("--n-chains", type=int, default=10_000, help="local chains for the lemma checks")
    p.add_argument("--strict", action="store_true", help="exit 1 when any check fails")

    p = sub.add_parser("params", help="print problem constants")
    _add_problem_args(p)
    _add_run_args(p, multi_tau=True)
    p.add_argument("--estimate-noise", action="store_true", help="Monte Carlo sigma_i when unknown")

    p = sub.add_parser("robot", help="multi-robot control preset")
    _add_run_args(p, multi_tau=True)
    return parser


def _parse_x0(text):
    if text in ("ones", "zeros"):
        return text
    try:
        values = [float(v) for v in text.split(",")]
    except ValueError:
        raise ConfigError(f"--x0 must be 'ones', 'zeros', a number or comma-separated numbers, got {text!r}")
    return values[0] if len(values) == 1 else values


def config_from_args(args):
    """Layer: preset or config file, then explicit flags, then PEARL_SEED."""
    if getattr(args, "config", None):
        cfg = ExperimentConfig.load(args.config)
    elif args.command == "robot":
        cfg = cli_robot_preset()
    else:
        cfg = ExperimentConfig()
    data = cfg.to_dict()
    prob, run = data["problem"], data["run"]

    kind = getattr(args, "problem", None)
    if getattr(args, "problem_file", None):
        kind = "file"
    if kind and kind != prob["kind"]:
        prob["kind"], prob["args"] = kind, {}
    if prob["kind"] == "file" and getattr(args, "problem_file", None):
        prob["args"]["path"] = args.problem_file
    for flag, key in _PROBLEM_FLAGS.items():
        value = getattr(args, flag, None)
        if value is None:
            continue
        if key not in PROBLEM_ARGS[prob["kind"]]:
            raise ConfigError(f"--{flag.replace('_', '-')} does not apply to problem kind {prob['kind']!r}")
        prob["args"][key] = value

    for key in ("schedule", "gamma", "total_iterations", "rounds", "mode", "seed", "replicates",
                "divergence_threshold"):
        value = getattr(args, key, None)
        if value is not None:
            run[key] = value
    if args.tau is not None:
        run["tau"] = list(args.tau) if isinstance(args.tau, list) else [args.tau]
    if getattr(args, "gammas", None):
        run["gammas"] = list(args.gammas)
    if getattr(args, "gamma_range", None):
        lo, hi, pts = args.gamma_range
        run["gammas"] = [float(g) for g in np.logspace(math.log10(lo), math.log10(hi), int(pts))]
    if args.gamma is not None and getattr(args, "schedule", None) is None:
        run["schedule"] = "constant"
    if args.x0 is not None:
        data["x0"] = _parse_x0(args.x0)
    if args.out is not None:
        data["output"] = args.out
    return ExperimentConfig.from_dict(data).with_env()


# --- artifact writing --------------------------------------------------------

def _write(outdir, name, text):
    atomic_write_text(os.path.join(outdir, name), text)
    return name


def _write_json(outdir, name, obj):
    return _write(outdir, name, json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating, np.integer)):
        v = v.item()
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def _plot(outdir, name, fn, *a, **kw):
    fd, tmp = tempfile.mkstemp(dir=outdir, prefix=".tmp-", suffix=".png")
    os.close(fd)
    try:
        fn(*a, path=tmp, **kw)
        os.replace(tmp, os.path.join(outdir, name))
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)
    return name


def _prepare_outdir(path):
    try:
        os.makedirs(path, exist_ok=True)
        probe = tempfile.NamedTemporaryFile(dir=path, prefix=".probe-", delete=True)
        probe.close()
    except OSError as exc:
        raise OSError(f"output directory {path} is not writable: {exc.strerror or exc}") from None


def _run_record(traj, csv_name):
    return {"tau": traj.tau, "schedule": traj.schedule_info, "status": traj.status,
            "rounds_completed": traj.completed_rounds, "final_rel_error": traj.final_rel_error,
            "communication": traj.communication_volume(), "csv": csv_name}


def _summary_row(traj, gamma=None):
    g = gamma if gamma is not None else traj.schedule_info.get("gamma")
    return {"tau": traj.tau, "gamma": g, "final_rel_error": traj.final_rel_error, "status": traj.status,
            "rounds_completed": traj.completed_rounds}


def _run_config(cfg, tau):
    r = cfg.run
    schedule = StepSizeSchedule(r.schedule, gamma=r.gamma, total_iterations=r.total_iterations)
    return RunConfig(tau=tau, rounds=r.rounds, schedule=schedule, mode=r.mode, seed=r.seed,
                     replicates=r.replicates, divergence_threshold=r.divergence_threshold)


def execute(command, cfg, problem, outdir, workers=1, timing=False, plot=True):
    """Run a replayable command and write its artifacts. Returns the summary dict."""
    _prepare_outdir(outdir)
    params = compute_parameters(problem)
    x0 = cfg.x0_array(problem.layout.D)
    r = cfg.run
    runs, rows, files = [], [], []

    if command == "run":
        if len(r.tau) != 1:
            raise ConfigError("run takes a single tau; use sweep-tau for several")
        trajs = [run_pearl_sgd(problem, x0, _run_config(cfg, r.tau[0]), params)]
    elif command in ("sweep-tau", "robot"):
        trajs = sweep_tau(problem, x0, r.tau, _run_config(cfg, r.tau[0]), params, workers=workers)
    elif command == "tune-gamma":
        gammas = r.gammas or list(TUNE_GRID)
        trajs, tune_lines = [], ["tau,gamma,final_rel_error,status"]
        for tau in r.tau:
            res = tune_gamma(problem, x0, tau, gammas, rounds=r.rounds, mode=r.mode, seed=r.seed,
                             replicates=r.replicates, workers=workers,
                             divergence_threshold=r.divergence_threshold)
            for g, err in res.final_errors.items():
                status = "diverged" if math.isinf(err) else "ok"
                tune_lines.append(f"{tau},{g!r},{format(err, '.17g')},{status}")
                rows.append({"tau": tau, "gamma": g, "final_rel_error": err, "status": status})
            if res.all_diverged:
                log.warning("tau=%d: every gamma in the grid diverged", tau)
            else:
                trajs.append(res.trajectory)
        files.append(_write(outdir, "tune.csv", "\n".join(tune_lines) + "\n"))
    elif command == "heatmap":
        gammas = r.gammas or [float(g) for g in np.logspace(-4, 0, 20)]
        grid = heatmap_grid(problem, x0, gammas, r.tau, rounds=r.rounds, mode=r.mode, seed=r.seed,
                            replicates=r.replicates, workers=workers)
        lines = ["gamma,tau,log10_rel_error"]
        for gi, g in enumerate(gammas):
            for ti, t in enumerate(r.tau):
                lines.append(f"{g!r},{t},{format(grid[gi, ti], '.17g')}")
                rows.append({"tau": t, "gamma": g, "log10_final_rel_error": grid[gi, ti],
                             "status": "diverged" if math.isinf(grid[gi, ti]) else "ok"})
        files.append(_write(outdir, "heatmap.csv", "\n".join(lines) + "\n"))
        best = heatmap_argmin(grid, gammas)
        trajs = []
        runs.append({"argmin_gamma": dict(zip(r.tau, best)),
                     "gamma_tau_product": dict(zip(r.tau, best * np.asarray(r.tau)))})
        if plot:
            from .plotting import plot_heatmap
            files.append(_plot(outdir, "heatmap.png", plot_heatmap, grid, gammas, r.tau))
    else:
        raise ValueError(f"command {command!r} is not replayable")

    for traj in trajs:
        name = f"trajectory_tau{traj.tau}.csv"
        files.append(_write(outdir, name, traj.csv_text(timing=timing)))
        runs.append(_run_record(traj, name))
        if command != "tune-gamma":
            rows.append(_summary_row(traj))
    if command == "tune-gamma":
        for traj in trajs:
            runs.append({"tau": traj.tau, "best_gamma": traj.schedule_info["gamma"]})
    if plot and trajs:
        from .plotting import plot_error_curves, plot_objectives
        labels = [f"tau={t.tau}" for t in trajs]
        files.append(_plot(outdir, "relative_error.png", plot_error_curves, trajs, labels))
        if command == "robot" or len(trajs) == 1:
            for t in trajs:
                files.append(_plot(outdir, f"objectives_tau{t.tau}.png", plot_objectives, t))

    _write(outdir, "problem.json", dumps_problem(problem))
    _write(outdir, "config.yaml", cfg.dumps())
    meta = {"command": command, "version": __version__, "config": cfg.to_dict(),
            "problem_kind": problem.kind, "problem_hash": problem_hash(problem), "seed": r.seed,
            "params": params.to_dict(), "runs": runs, "timing": timing}
    _write_json(outdir, "metadata.json", meta)
    summary = {"command": command, "results": rows}
    _write_json(outdir, "summary.json", summary)
    return summary


def replay(directory, outdir=None, workers=1, plot=False):
    """Repeat the experiment recorded in ``directory``; returns (summary, mismatched CSV names)."""
    try:
        with open(os.path.join(directory, "metadata.json"), encoding="utf-8") as fh:
            meta = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {directory}/metadata.json: {exc}") from None
    if meta.get("command") not in REPLAYABLE:
        raise ConfigError(f"{directory} holds a {meta.get('command')!r} result, which cannot be replayed")
    cfg = ExperimentConfig.from_dict(meta["config"])
    problem = load_problem(os.path.join(directory, "problem.json"))
    if problem_hash(problem) != meta["problem_hash"]:
        raise ConfigError(f"{directory}/problem.json does not match the recorded problem hash")
    outdir = outdir or os.path.join(directory, "replay")
    if os.path.abspath(outdir) == os.path.abspath(directory):
        raise ConfigError("replay output must differ from the recorded directory")
    summary = execute(meta["command"], cfg, problem, outdir, workers, meta.get("timing", False), plot)
    mismatched = []
    for name in sorted(os.listdir(directory)):
        if name.endswith(".csv"):
            with open(os.path.join(directory, name), "rb") as a, open(os.path.join(outdir, name), "rb") as b:
                if a.read() != b.read():
                    mismatched.append(name)
    return summary, mismatched


def _print_summary(summary):
    for row in summary["results"]:
        err = row.get("final_rel_error", row.get("log10_final_rel_error"))
        print(f"tau={row['tau']:<3d} gamma={row['gamma']!s:<24} final={err:.6g} status={row['status']}")


def cmd_params(cfg, args):
    problem = cfg.build_problem()
    params = compute_parameters(problem, estimate_noise=args.estimate_noise, seed=cfg.run.seed)
    out = {"problem": problem.kind, "problem_hash": problem_hash(problem), "params": params.to_dict()}
    x_star = problem.equilibrium()
    if x_star is not None:
        out["equilibrium_residual"] = equilibrium_residual(problem, x_star)
    out["theoretical_gamma"] = {t: theoretical_gamma(params, t) for t in cfg.run.tau}
    out["theoretical_robot_gamma"] = {t: robot_gamma(params, t) for t in cfg.run.tau}
    print(json.dumps(_jsonable(out), indent=2, sort_keys=True))
    return 0


def cmd_verify(cfg, args):
    from . import verify
    from .problems import SineNonCocoerciveGame

    problem = cfg.build_problem()
    params = compute_parameters(problem, estimate_noise=not problem.deterministic, seed=cfg.run.seed)
    x0 = cfg.x0_array(problem.layout.D)
    tau, seed, suite = cfg.run.tau[0], cfg.run.seed, args.suite
    gamma = theoretical_gamma(params, tau)
    reports = {}
    if suite in ("all", "assumptions"):
        reports.update(verify.check_assumptions(problem, params, args.n_samples, seed=seed))
        if isinstance(problem, SineNonCocoerciveGame):
            reports["witness"] = verify.check_nonmonotone_witness(problem, 10)
    if suite in ("all", "linear-rate"):
        traj = run_pearl_sgd(problem, x0, RunConfig(tau=tau, rounds=cfg.run.rounds,
                                                    schedule=StepSizeSchedule.constant(gamma)), params)
        reports["linear-rate"] = verify.check_theorem1_bound(traj, params, gamma, tau)
    if suite in ("all", "neighborhood") and not problem.deterministic:
        reports["neighborhood"] = verify.check_theorem2_neighborhood(problem, x0, gamma, tau, cfg.run.rounds,
                                                                 args.n_seeds, params, seed)
    if suite in ("all", "lemmas"):
        for i in range(problem.layout.n):
            reports[f"lemma-gradnorm-{i + 1}"] = verify.check_lemma_gradnorm(
                problem, i, x0, gamma, tau, args.n_chains, params, seed)
            reports[f"lemma-local-error-{i + 1}"] = verify.check_lemma_local_error(
                problem, i, x0, gamma, tau, args.n_chains, params, seed)
    if suite in ("all", "decreasing") and not problem.deterministic:
        grid = [tau * 2 ** k for k in range(8, 13)]
        reports.update(verify.check_decreasing_rate(problem, x0, tau, grid, args.n_seeds, params, seed))
    for rep in reports.values():
        print(rep.summary())
    _prepare_outdir(cfg.output)
    _write(cfg.output, "verify.json", verify.reports_to_json(reports))
    failed = [k for k, rep in reports.items() if rep.verdict == "fail"]
    if failed:
        print(f"{len(failed)} check(s) failed: {', '.join(failed)}")
    return 1 if (args.strict and failed) else 0


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run" and args.replay:
            summary, mismatched = replay(args.replay, args.out, args.workers, plot=not args.no_plot)
            _print_summary(summary)
            if mismatched:
                print(f"replay differs from the recording in: {', '.join(mismatched)}", file=sys.stderr)
                return 1
            print("replay matches the recorded CSVs")
            return 0
        cfg = config_from_args(args)
        if args.command == "params":
            return cmd_params(cfg, args)
        if args.command == "verify":
            return cmd_verify(cfg, args)
        problem = cfg.build_problem()
        summary = execute(args.command, cfg, problem, cfg.output, args.workers, args.timing,
                          plot=not args.no_plot)
        _print_summary(summary)
        print(f"artifacts written to {cfg.output}")
        return 0
    except ConfigError as exc:
        print(f"pearl: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, KeyError) as exc:
        print(f"pearl: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"pearl: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
