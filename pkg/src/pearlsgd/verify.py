"""Numerical checks of the structural assumptions, rate bounds and local-error bounds.

Monte Carlo checks compare a sample mean against its bound with a slack of
three normal-approximation 95% confidence half-widths. Failed checks are
reported, never raised.
"""
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import as_array, joint_gradient
from .engine import RunConfig, default_x0, resolve_equilibrium, run_pearl_sgd
from .problems.analysis import _sample_ball, compute_parameters
from .rng import RngStream
from .schedules import (StepSizeSchedule, contraction_factor, decreasing_threshold, theoretical_gamma,
                        zeta)

Z95 = 1.959963984540054
CI_SLACK = 3.0
ASSUMPTION_TOL = 1e-8


@dataclass
class BoundReport:
    name: str
    checked: int
    max_violation: float
    tolerance: float = 0.0
    ci_half_width: Optional[float] = None
    applicable: bool = True
    details: dict = field(default_factory=dict)

    @property
    def passed(self):
        return self.applicable and self.max_violation <= self.tolerance

    @property
    def verdict(self):
        if not self.applicable:
            return "inapplicable"
        return "pass" if self.passed else "fail"

    def to_dict(self):
        return {"bound": self.name, "tolerance": self.tolerance, "max_violation": self.max_violation,
                "ci_half_width": self.ci_half_width, "checked": self.checked, "verdict": self.verdict,
                "details": _plain(self.details)}

    def summary(self):
        ci = "" if self.ci_half_width is None else f" ci={self.ci_half_width:.3e}"
        return (f"{self.verdict.upper():12s} {self.name}: max_violation={self.max_violation:.3e} "
                f"tol={self.tolerance:.1e}{ci} n={self.checked}")


def _plain(value):
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [_plain(v) for v in value]
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    return value


def reports_to_json(reports):
    items = reports.values() if isinstance(reports, dict) else reports
    return json.dumps([r.to_dict() for r in items], indent=2, sort_keys=True) + "\n"


def _inapplicable(name, reason, **details):
    return BoundReport(name, 0, math.nan, applicable=False, details=dict(details, reason=reason))


def _mean_ci(samples, axis=-1):
    n = samples.shape[axis]
    mean = samples.mean(axis=axis)
    if n < 2:
        return mean, np.zeros_like(mean)
    return mean, Z95 * samples.std(axis=axis, ddof=1) / math.sqrt(n)


# --- assumptions -----------------------------------------------------------

def check_assumptions(problem, params=None, n_samples=10_000, radius=10.0, seed=0, tol=ASSUMPTION_TOL):
    """Sampled QSM, SCO, norm sandwich, per-player convexity and smoothness.

    Points are uniform in the ball of ``radius`` around the equilibrium.
    Returns a dict of BoundReports keyed by assumption.
    """
    params = params or compute_parameters(problem)
    layout = problem.layout
    x_star = resolve_equilibrium(problem, params)
    rng = np.random.default_rng(seed)
    X = _sample_ball(rng, x_star, radius, n_samples)
    F = joint_gradient(problem, X)
    diff = X - x_star
    inner = np.sum(F * diff, axis=1)
    dist_sq = np.sum(diff ** 2, axis=1)
    f_norm = np.linalg.norm(F, axis=1)
    reports = {
        "qsm": BoundReport("QSM", n_samples, float(np.max(params.mu * dist_sq - inner)), tol,
                           details={"mu": params.mu, "radius": radius}),
        "sco": BoundReport("SCO", n_samples, float(np.max(f_norm ** 2 / params.ell - inner)), tol,
                           details={"ell": params.ell, "radius": radius}),
        "sandwich": BoundReport("norm-sandwich", n_samples, float(np.max(np.maximum(
            params.mu * np.sqrt(dist_sq) - f_norm, f_norm - params.ell * np.sqrt(dist_sq)))), tol),
    }
    Y = _sample_ball(rng, x_star, radius, n_samples)
    cvx, smooth = -math.inf, -math.inf
    for i in range(layout.n):
        sl = layout.slice(i)
        Z = X.copy()
        Z[:, sl] = Y[:, sl]
        dg = problem.grad(i, X) - problem.grad(i, Z)
        dx = X[:, sl] - Y[:, sl]
        cvx = max(cvx, float(np.max(-np.sum(dg * dx, axis=1))))
        smooth = max(smooth, float(np.max(np.linalg.norm(dg, axis=1)
                                          - params.l_per_player[i] * np.linalg.norm(dx, axis=1))))
    reports["cvx"] = BoundReport("CVX", n_samples * layout.n, cvx, tol)
    reports["smoothness"] = BoundReport("SM", n_samples * layout.n, smooth, tol,
                                        details={"l_per_player": params.l_per_player})
    return reports


def check_strong_monotonicity(problem, mu, n_pairs=1000, radius=10.0, seed=0, tol=1e-9):
    """<F(x) - F(y), x - y> >= mu ||x - y||^2 on random pairs."""
    x_star = resolve_equilibrium(problem)
    rng = np.random.default_rng(seed)
    X = _sample_ball(rng, x_star, radius, n_pairs)
    Y = _sample_ball(rng, x_star, radius, n_pairs)
    d = X - Y
    lhs = np.sum((joint_gradient(problem, X) - joint_gradient(problem, Y)) * d, axis=1)
    return BoundReport("strong-monotonicity", n_pairs, float(np.max(mu * np.sum(d ** 2, 1) - lhs)), tol,
                       details={"mu": mu})


def witness_determinant(game, N, phase=0.5):
    """det(DF + DF^T) at u = v = (2N + phase) pi for a two-scalar-player game with a Jacobian."""
    t = (2 * N + phase) * math.pi
    J = game.jacobian(np.array([t, t]))
    return float(np.linalg.det(J + J.T))


def check_nonmonotone_witness(game, N, phase=0.5):
    """Monotonicity fails wherever DF + DF^T has a negative determinant."""
    det = witness_determinant(game, N, phase)
    return BoundReport("non-monotone-witness", 1, det, 0.0,
                       details={"N": N, "phase": phase, "point": (2 * N + phase) * math.pi, "det": det})


# --- rate bounds -----------------------------------------------------------

def gamma_admissible(params, gamma, tau):
    return 0 < gamma <= theoretical_gamma(params, tau) * (1 + 1e-12)


def check_theorem1_bound(trajectory, params, gamma, tau, tol=1e-9):
    """Deterministic linear rate: per-round contraction and the R-round bound.

    Violations are relative to the previous squared distance (per round) and to
    the initial one (overall).
    """
    if not gamma_admissible(params, gamma, tau):
        return _inapplicable("linear-rate", "gamma outside (0, 1/(ell tau + 2(tau-1) L_max sqrt(kappa))]",
                             gamma=gamma, gamma_max=theoretical_gamma(params, tau))
    c = contraction_factor(params, gamma, tau)
    e = trajectory.sq_error[:, 0]
    worst = -math.inf
    for p in range(len(e) - 1):
        if e[p] > 0:
            worst = max(worst, (e[p + 1] - c * e[p]) / e[p])
    R = len(e) - 1
    bound = c ** R * e[0]
    if e[0] > 0:
        worst = max(worst, (e[-1] - bound) / e[0])
    return BoundReport("linear-rate", R, float(worst), tol, details={
        "contraction": c, "zeta": zeta(params, gamma, tau), "rounds": R,
        "tightness": float(e[-1] / bound) if bound > 0 else 0.0})


def neighborhood_rhs(params, gamma, tau, rounds, initial_sq):
    z = zeta(params, gamma, tau)
    q, lmax = params.q, params.l_max
    neigh = (1 + (tau - 1) * ((4 + math.sqrt(3) * q) * gamma * tau * lmax + q / (2 * tau))) \
        * gamma * params.sigma_sq_total / (params.mu * z)
    return contraction_factor(params, gamma, tau) ** rounds * initial_sq + neigh, neigh


def check_theorem2_neighborhood(problem, x0, gamma, tau, rounds, n_seeds, params=None, seed=0):
    """Monte Carlo E||x_{tau R} - x_star||^2 against the constant-step neighborhood bound."""
    params = params or compute_parameters(problem, estimate_noise=True, seed=seed)
    if params.sigma_per_player is None:
        params = compute_parameters(problem, estimate_noise=True, seed=seed)
    if not gamma_admissible(params, gamma, tau):
        return _inapplicable("neighborhood", "gamma outside the admissible range", gamma=gamma)
    cfg = RunConfig(tau=tau, rounds=rounds, schedule=StepSizeSchedule.constant(gamma), mode="stochastic",
                    seed=seed, replicates=n_seeds, keep_iterates=False)
    traj = run_pearl_sgd(problem, x0, cfg, params)
    if traj.diverged:
        return BoundReport("neighborhood", n_seeds, math.inf, details={"status": traj.status})
    est, ci = _mean_ci(traj.sq_error[-1])
    rhs, neigh = neighborhood_rhs(params, gamma, tau, rounds, traj.initial_sq_error)
    return BoundReport("neighborhood", n_seeds, float(est - rhs - CI_SLACK * ci), 0.0, float(ci), details={
        "estimate": est, "rhs": rhs, "neighborhood": neigh, "sigma_sq": params.sigma_sq_total})


def decreasing_rate_terms(params, tau, T, initial_sq):
    q, kap, mu, s2 = params.q, params.kappa, params.mu, params.sigma_sq_total
    return (
        4 * (1 + 2 * q) ** 2 * kap ** 2 * tau ** 2 * initial_sq / (math.e * T ** 2),
        4 * (1 + q) * s2 / (mu ** 2 * T),
        4 * (1 + 2 * q) ** 2 * kap * tau * s2 / (mu ** 2 * T ** 2) * (1 + 2 * tau / math.sqrt(kap)),
        32 * (1 + q) * tau ** 2 * params.l_max * s2 * math.log(T) / (mu ** 3 * T ** 2),
    )


def check_decreasing_rate(problem, x0, tau, T_grid, n_seeds, params=None, seed=0, trend_ratio=0.75):
    """Decreasing step-sizes: the four-term bound at every T and the O(1/T) trend.

    Returns {'bound': ..., 'trend': ...}. The trend is checked on consecutive
    (T, 2T) grid pairs where the sigma^2/(mu^2 T) term exceeds the other three.
    """
    params = params or compute_parameters(problem, estimate_noise=True, seed=seed)
    if params.sigma_per_player is None:
        params = compute_parameters(problem, estimate_noise=True, seed=seed)
    T_grid = sorted(int(T) for T in T_grid)
    if any(T % tau for T in T_grid):
        raise ValueError("every T must be a multiple of tau")
    cfg = RunConfig(tau=tau, rounds=T_grid[-1] // tau, schedule=StepSizeSchedule("decreasing"),
                    mode="stochastic", seed=seed, replicates=n_seeds, keep_iterates=False)
    traj = run_pearl_sgd(problem, x0, cfg, params)
    if traj.diverged:
        return {"bound": BoundReport("decreasing-bound", n_seeds, math.inf),
                "trend": BoundReport("decreasing-trend", n_seeds, math.inf)}
    e0 = traj.initial_sq_error
    means, cis, rhs, terms = {}, {}, {}, {}
    worst = -math.inf
    for T in T_grid:
        m, ci = _mean_ci(traj.sq_error[T // tau])
        means[T], cis[T] = float(m), float(ci)
        terms[T] = decreasing_rate_terms(params, tau, T, e0)
        rhs[T] = sum(terms[T])
        worst = max(worst, m - rhs[T] - CI_SLACK * ci)
    bound = BoundReport("decreasing-bound", n_seeds * len(T_grid), float(worst), 0.0, max(cis.values()),
                        details={"mean": means, "rhs": rhs, "threshold_round": decreasing_threshold(params)})
    trend_worst, pairs = -math.inf, []
    for T in T_grid:
        if 2 * T in means and terms[T][1] > sum(terms[T]) - terms[T][1]:
            pairs.append((T, 2 * T))
            trend_worst = max(trend_worst, means[2 * T] - trend_ratio * means[T])
    trend = BoundReport("decreasing-trend", len(pairs), float(trend_worst) if pairs else math.nan, 0.0,
                        applicable=bool(pairs), details={"pairs": pairs, "ratio": trend_ratio,
                                                         "mean": means})
    return {"bound": bound, "trend": trend}


# --- local-error lemmas ------------------------------------------------------

def local_sgd_chains(problem, i, x_start, gamma, tau, n_chains, seed=0):
    """Independent local SGD chains of player i with the other blocks frozen.

    Returns (displacement_sq, grad_norm_sq), each of shape (tau + 1, n_chains).
    """
    layout = problem.layout
    sl = layout.slice(i)
    x_start = np.array(as_array(x_start, layout), dtype=np.float64)
    X = np.tile(x_start, (n_chains, 1))
    stream = RngStream(seed)
    reps = np.arange(n_chains)
    disp = [np.zeros(n_chains)]
    gn = [np.sum(problem.grad(i, X) ** 2, axis=-1)]
    for t in range(tau):
        g = problem.stoch_grad(i, X, stream.draw(i, t, reps)).value
        X[:, sl] = X[:, sl] - gamma * g
        disp.append(np.sum((X[:, sl] - x_start[sl]) ** 2, axis=-1))
        gn.append(np.sum(problem.grad(i, X) ** 2, axis=-1))
    return np.array(disp), np.array(gn)


def _lemma_setup(problem, i, gamma, tau, params, seed):
    params = params or compute_parameters(problem, estimate_noise=True, seed=seed)
    if params.sigma_per_player is None:
        params = compute_parameters(problem, estimate_noise=True, seed=seed)
    L = params.l_per_player[i]
    limit = (1.0 / L) * (1.0 if tau <= 1 else min(1.0, 1.0 / (tau - 1)))
    return params, L, params.sigma_per_player[i], 0 < gamma <= limit * (1 + 1e-12), limit


def check_lemma_gradnorm(problem, i, x_start, gamma, tau, n_chains=10_000, params=None, seed=0):
    """E||grad f_i(x_j)||^2 <= ||grad f_i(x_start)||^2 + 2 j gamma L_i sigma_i^2 along local SGD."""
    params, L, sigma, ok, limit = _lemma_setup(problem, i, gamma, tau, params, seed)
    if not ok:
        return _inapplicable("lemma-gradnorm", "gamma above min(1, 1/(tau-1))/L_i", gamma=gamma, limit=limit)
    _, gn = local_sgd_chains(problem, i, x_start, gamma, tau, n_chains, seed)
    # centring on the start value keeps the j = 0 identity exact under summation
    mean, ci = _mean_ci(gn - gn[0, 0])
    mean = mean + gn[0, 0]
    j = np.arange(tau + 1)
    rhs = gn[0, 0] + 2 * j * gamma * L * sigma ** 2
    viol = mean - rhs - CI_SLACK * ci
    return BoundReport("lemma-gradnorm", n_chains, float(viol.max()), 0.0, float(ci.max()),
                       details={"player": i, "mean": mean, "rhs": rhs, "sigma": sigma})


def local_error_rhs(gamma, t, grad_sq, L, sigma):
    return gamma ** 2 * t ** 2 * grad_sq + gamma ** 2 * t * (1 + 2 * (t - 1) * (t + 1) * gamma * L) * sigma ** 2


def check_lemma_local_error(problem, i, x_start, gamma, tau, n_chains=10_000, params=None, seed=0):
    """E||x_start^i - x_t^i||^2 against the local-error bound for t = 0..tau."""
    params, L, sigma, ok, limit = _lemma_setup(problem, i, gamma, tau, params, seed)
    if not ok:
        return _inapplicable("lemma-local-error", "gamma above min(1, 1/(tau-1))/L_i", gamma=gamma,
                             limit=limit)
    disp, gn = local_sgd_chains(problem, i, x_start, gamma, tau, n_chains, seed)
    mean, ci = _mean_ci(disp)
    t = np.arange(tau + 1)
    rhs = local_error_rhs(gamma, t, gn[0, 0], L, sigma)
    viol = mean - rhs - CI_SLACK * ci
    return BoundReport("lemma-local-error", n_chains, float(viol.max()), 0.0, float(ci.max()),
                       details={"player": i, "mean": mean, "rhs": rhs, "sigma": sigma})


def run_suite(problem, x0=None, tau=4, rounds=50, n_seeds=200, n_samples=2000, n_chains=2000, seed=0,
              params=None):
    """Every applicable check at moderate sizes, for the CLI."""
    params = params or compute_parameters(problem, estimate_noise=True, seed=seed)
    x0 = default_x0(problem) if x0 is None else x0
    reports = dict(check_assumptions(problem, params, n_samples, seed=seed))
    gamma = theoretical_gamma(params, tau)
    det = run_pearl_sgd(problem, x0, RunConfig(tau=tau, rounds=rounds, schedule=StepSizeSchedule.constant(gamma)),
                        params)
    reports["linear-rate"] = check_theorem1_bound(det, params, gamma, tau)
    if not problem.deterministic:
        reports["neighborhood"] = check_theorem2_neighborhood(problem, x0, gamma, tau, rounds, n_seeds, params, seed)
    for i in range(problem.layout.n):
        reports[f"lemma-gradnorm-{i + 1}"] = check_lemma_gradnorm(problem, i, x0, gamma, tau, n_chains, params, seed)
        reports[f"lemma-local-error-{i + 1}"] = check_lemma_local_error(problem, i, x0, gamma, tau, n_chains,
                                                                        params, seed)
    return reports
