"""PEARL-SGD simulation: server rounds, per-player local SGD, sweeps and grids.

Replicates of a stochastic run are simulated together along a leading batch
axis. Their draws come from coordinate-keyed streams, so replicate r gives the
same numbers whether it runs alone or alongside others.
"""
import csv
import dataclasses
import io
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import as_array
from .problems.analysis import compute_parameters, reference_equilibrium
from .rng import RngStream
from .schedules import StepSizeSchedule

MODES = ("deterministic", "stochastic")
CONVERGED, EXHAUSTED, DIVERGED = "converged", "budget-exhausted", "diverged"


@dataclass(frozen=True)
class RunConfig:
    tau: int = 1
    rounds: int = 100
    schedule: StepSizeSchedule = field(default_factory=StepSizeSchedule)
    mode: str = "deterministic"
    seed: int = 0
    replicates: int = 1
    divergence_threshold: float = 1e12
    tol: Optional[float] = None
    parallel_players: bool = False
    keep_iterates: bool = True
    first_replicate: int = 0

    def __post_init__(self):
        if int(self.tau) != self.tau or self.tau < 1:
            raise ValueError(f"synchronization interval tau must be an integer >= 1, got {self.tau}")
        if int(self.rounds) != self.rounds or self.rounds < 1:
            raise ValueError(f"rounds must be an integer >= 1, got {self.rounds}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")

    @property
    def total_iterations(self):
        return self.tau * self.rounds

    @property
    def replicate_ids(self):
        return np.arange(self.first_replicate, self.first_replicate + self.replicates)


@dataclass
class Trajectory:
    """Round-by-round record of one run (mean and spread over replicates)."""

    n_players: int
    tau: int
    gammas: np.ndarray          # gamma used in each completed round
    sq_error: np.ndarray        # (rounds + 1, replicates) squared distances to x_star
    rel_error: np.ndarray       # mean relative error per round
    rel_error_std: np.ndarray
    objectives: np.ndarray      # (rounds + 1, n) replicate-mean f_i(x_{tau p})
    elapsed_ms: np.ndarray
    status: str
    initial_sq_error: float
    x_star: np.ndarray
    iterates: Optional[np.ndarray] = None   # (rounds + 1, replicates, D)
    schedule_info: dict = field(default_factory=dict)
    params: object = None
    config: Optional[RunConfig] = None

    @property
    def rounds(self):
        return np.arange(len(self.rel_error))

    @property
    def iterations(self):
        return self.tau * self.rounds

    @property
    def communications(self):
        return self.rounds + 1

    @property
    def completed_rounds(self):
        return len(self.gammas)

    @property
    def diverged(self):
        return self.status == DIVERGED

    @property
    def final_rel_error(self):
        return math.inf if self.diverged else float(self.rel_error[-1])

    @property
    def final_iterate(self):
        return None if self.iterates is None else self.iterates[-1]

    def communication_volume(self):
        """Exchanges and transferred model coordinates.

        Every completed round is one collect (D uplink coordinates in total)
        plus one distribute (the full joint vector to each of n players); the
        output x_{tau R} needs one more collect.
        """
        R, D = self.completed_rounds, self.x_star.shape[0]
        return {"exchanges": R, "final_collect": 1, "uplink": R * D,
                "downlink": R * self.n_players * D, "final_uplink": D}

    def csv_text(self, timing=False):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["round", "iteration", "communications", "rel_error", "rel_error_std"]
                   + [f"f_{i + 1}" for i in range(self.n_players)] + ["elapsed_ms"])
        for p in range(len(self.rel_error)):
            row = [p, self.tau * p, p + 1, _fmt(self.rel_error[p]), _fmt(self.rel_error_std[p])]
            row += [_fmt(v) for v in self.objectives[p]]
            row.append(_fmt(self.elapsed_ms[p]) if timing else "")
            w.writerow(row)
        return buf.getvalue()


def _fmt(v):
    return format(float(v), ".17g")


def default_x0(problem):
    return np.ones(problem.layout.D)


def resolve_equilibrium(problem, params=None):
    x_star = problem.equilibrium()
    if x_star is not None:
        return np.asarray(x_star, dtype=np.float64)
    params = params or compute_parameters(problem)
    x_star, _ = reference_equilibrium(problem, params.ell)
    return np.asarray(x_star, dtype=np.float64)


def _local_phase(problem, i, frozen, gamma, tau, p, stochastic, stream, reps):
    """tau local steps of player i against the frozen complement x_{tau p}^{-i}."""
    sl = problem.layout.slice(i)
    local = frozen.copy()
    for t in range(tau):
        if stochastic:
            g = problem.stoch_grad(i, local, stream.draw(i, tau * p + t, reps)).value
        else:
            g = problem.grad(i, local)
        local[:, sl] = local[:, sl] - gamma * g
    return local[:, sl]


def run_pearl_sgd(problem, x0=None, config=None, params=None, x_star=None):
    """Simulate PEARL-SGD and return its trajectory.

    Each round freezes x_{tau p}, lets every player take tau local (stochastic)
    gradient steps on its own block with the other blocks frozen, then
    concatenates the blocks. Divergence ends the run with status 'diverged'
    and keeps the rounds recorded so far.
    """
    config = config or RunConfig()
    layout = problem.layout
    if params is None and config.schedule.needs_params():
        params = compute_parameters(problem)
    resolved = config.schedule.resolve(params, config.tau)
    x_star = resolve_equilibrium(problem, params) if x_star is None else np.asarray(x_star, dtype=np.float64)
    x0 = default_x0(problem) if x0 is None else np.array(as_array(x0, layout), dtype=np.float64)

    reps = config.replicate_ids
    B = len(reps)
    stochastic = config.mode == "stochastic"
    stream = RngStream(config.seed)
    X = np.tile(x0, (B, 1))
    e0 = float(np.sum((x0 - x_star) ** 2))

    def measure(X):
        sq = np.sum((X - x_star) ** 2, axis=-1)
        rel = sq / e0 if e0 > 0 else np.zeros_like(sq)
        obj = np.array([np.mean(problem.objective(i, X)) for i in range(layout.n)])
        return sq, rel, obj

    start = time.perf_counter()
    sq, rel, obj = measure(X)
    sq_hist, rel_hist, std_hist, obj_hist = [sq], [rel.mean()], [rel.std()], [obj]
    its = [X.copy()] if config.keep_iterates else None
    elapsed = [0.0]
    gammas = []
    status = EXHAUSTED
    pool = ThreadPoolExecutor(max_workers=layout.n) if config.parallel_players else None
    try:
        for p in range(config.rounds):
            gamma = resolved(p)
            frozen = X
            args = (gamma, config.tau, p, stochastic, stream, reps)
            if pool is not None:
                blocks = list(pool.map(lambda i: _local_phase(problem, i, frozen, *args), range(layout.n)))
            else:
                blocks = [_local_phase(problem, i, frozen, *args) for i in range(layout.n)]
            X = np.concatenate(blocks, axis=-1)
            with np.errstate(all="ignore"):
                sq, rel, obj = measure(X)
            if not (np.all(np.isfinite(X)) and np.all(np.isfinite(rel))):
                # the non-finite round is not recorded
                status = DIVERGED
                break
            gammas.append(gamma)
            sq_hist.append(sq)
            rel_hist.append(rel.mean())
            std_hist.append(rel.std())
            obj_hist.append(obj)
            elapsed.append((time.perf_counter() - start) * 1e3)
            if its is not None:
                its.append(X.copy())
            if np.any(rel > config.divergence_threshold):
                status = DIVERGED
                break
            if config.tol is not None and rel.mean() <= config.tol:
                status = CONVERGED
                break
    finally:
        if pool is not None:
            pool.shutdown()

    return Trajectory(
        n_players=layout.n, tau=config.tau, gammas=np.array(gammas),
        sq_error=np.array(sq_hist), rel_error=np.array(rel_hist), rel_error_std=np.array(std_hist),
        objectives=np.array(obj_hist), elapsed_ms=np.array(elapsed), status=status,
        initial_sq_error=e0, x_star=x_star,
        iterates=None if its is None else np.array(its),
        schedule_info=resolved.describe(), params=params, config=config,
    )


def sgda_reference(problem, x0, gamma, steps, seed=0, replicate=0):
    """Plain simultaneous SGDA x_{k+1} = x_k - gamma F_xi(x_k); returns all iterates."""
    layout = problem.layout
    stream = RngStream(seed)
    reps = np.array([replicate])
    x = np.array(as_array(x0, layout), dtype=np.float64)[None, :]
    out = [x[0].copy()]
    for k in range(steps):
        g = np.concatenate([problem.stoch_grad(i, x, stream.draw(i, k, reps)).value
                            for i in range(layout.n)], axis=-1)
        x = x - gamma * g
        out.append(x[0].copy())
    return np.array(out)


def _map(fn, items, workers):
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def sweep_tau(problem, x0, taus, base_config, params=None, x_star=None, workers=1):
    """One run per tau, each with its own resolved step-size."""
    taus = list(taus)
    if any(int(t) != t or t < 1 for t in taus):
        raise ValueError("every tau must be an integer >= 1")
    if params is None and base_config.schedule.needs_params():
        params = compute_parameters(problem)
    if x_star is None:
        x_star = resolve_equilibrium(problem, params)
    run = lambda t: run_pearl_sgd(problem, x0, dataclasses.replace(base_config, tau=int(t)), params, x_star)
    return _map(run, taus, workers)


@dataclass
class TuneResult:
    best_gamma: Optional[float]
    trajectory: Optional[Trajectory]
    final_errors: dict
    all_diverged: bool


def tune_gamma(problem, x0, tau, gammas, rounds=100, mode="deterministic", seed=0, replicates=1,
               x_star=None, workers=1, **config_kw):
    """Grid search over constant step-sizes by final (mean) relative error.

    Diverged runs rank last and ties go to the larger gamma.
    """
    gammas = [float(g) for g in gammas]
    if not gammas or any(not g > 0 for g in gammas):
        raise ValueError("gamma grid must be nonempty and positive")
    if x_star is None:
        x_star = resolve_equilibrium(problem)

    def run(g):
        cfg = RunConfig(tau=tau, rounds=rounds, schedule=StepSizeSchedule.constant(g), mode=mode,
                        seed=seed, replicates=replicates, **config_kw)
        return run_pearl_sgd(problem, x0, cfg, x_star=x_star)

    trajs = _map(run, gammas, workers)
    finals = {g: t.final_rel_error for g, t in zip(gammas, trajs)}
    order = sorted(range(len(gammas)), key=lambda k: (trajs[k].diverged, trajs[k].final_rel_error, -gammas[k]))
    best = order[0]
    if trajs[best].diverged:
        return TuneResult(None, None, finals, True)
    return TuneResult(gammas[best], trajs[best], finals, False)


def heatmap_grid(problem, x0, gammas, taus, rounds=100, mode="deterministic", seed=0, replicates=1,
                 x_star=None, workers=1):
    """log10 of the final relative error for every (gamma, tau); +inf marks divergence.

    Rows follow ``gammas``, columns follow ``taus``.
    """
    gammas, taus = list(gammas), list(taus)
    if not gammas or not taus:
        raise ValueError("grids must be nonempty")
    if x_star is None:
        x_star = resolve_equilibrium(problem)
    cells = [(g, t) for g in gammas for t in taus]

    def run(cell):
        g, t = cell
        cfg = RunConfig(tau=t, rounds=rounds, schedule=StepSizeSchedule.constant(g), mode=mode,
                        seed=seed, replicates=replicates, keep_iterates=False)
        traj = run_pearl_sgd(problem, x0, cfg, x_star=x_star)
        if traj.diverged:
            return math.inf
        with np.errstate(divide="ignore"):
            return float(np.log10(traj.final_rel_error))

    values = _map(run, cells, workers)
    return np.array(values).reshape(len(gammas), len(taus))


def heatmap_argmin(grid, gammas):
    """Best gamma for every tau column of a heatmap."""
    return np.asarray(gammas, dtype=float)[np.argmin(grid, axis=0)]
