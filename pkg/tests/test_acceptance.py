"""Acceptance criteria. Each test prints one PASS/FAIL line.

The tolerances here are fixed and must not be tuned to make a run pass.
The quadratic minimax instance is d=10, M=100 with generator seed 7.
"""
import dataclasses
import math
import os
import subprocess
import sys
import time

import numpy as np

from pearlsgd import RunConfig, StepSizeSchedule, corollary_eta_solve, run_pearl_sgd, sgda_reference, sweep_tau
from pearlsgd.engine import heatmap_argmin, heatmap_grid
from pearlsgd.problems import (RobotControlGame, SineNonCocoerciveGame, compute_parameters, equilibrium_residual,
                               generate_nplayer_quadratic, scalar_game, scalar_minimax)
from pearlsgd.schedules import PreconditionError, contraction_factor, decreasing_gamma, decreasing_threshold, theoretical_gamma
from pearlsgd.verify import (check_assumptions, check_decreasing_rate, check_lemma_gradnorm, check_lemma_local_error,
                             check_nonmonotone_witness, check_strong_monotonicity, check_theorem2_neighborhood)

TAUS = (1, 2, 4, 5, 8, 20)
REL = 1e-9


def two_dim_game():
    return scalar_game(mu=1.0, coupling=1.0, shift=(1.0, -1.0), noise_std=1.0)


def test_01_linear_rate_per_round_contraction(minimax, acceptance):
    start = time.perf_counter()
    params = compute_parameters(minimax)
    worst = -math.inf
    for tau in TAUS:
        gamma = theoretical_gamma(params, tau)
        traj = run_pearl_sgd(minimax, None, RunConfig(tau=tau, rounds=100), params)
        assert traj.completed_rounds == 100
        c = contraction_factor(params, gamma, tau)
        e = traj.sq_error[:, 0]
        worst = max(worst, float(np.max(e[1:] / (c * e[:-1] * (1 + REL)))))
    elapsed = time.perf_counter() - start
    acceptance("1 linear-rate contraction", worst <= 1.0 and elapsed < 10,
               f"max observed/bound={worst:.4f} runtime={elapsed:.2f}s")


def test_02_deterministic_sweep_spread(minimax, acceptance):
    trajs = sweep_tau(minimax, None, TAUS, RunConfig(rounds=100))
    finals = np.log10([t.final_rel_error for t in trajs])
    spread = finals.max() - finals.min()
    acceptance("2 deterministic sweep spread", spread <= 1.0,
               f"log10 finals={np.round(finals, 2).tolist()} spread={spread:.3f}")


def test_03_stochastic_sweep_ordering(minimax, acceptance):
    start = time.perf_counter()
    trajs = sweep_tau(minimax, None, TAUS, RunConfig(rounds=100, mode="stochastic", replicates=5, seed=7))
    elapsed = time.perf_counter() - start
    t1, t20 = trajs[0], trajs[-1]
    per_seed_1 = t1.sq_error[-1] / t1.initial_sq_error
    per_seed_20 = t20.sq_error[-1] / t20.initial_sq_error
    ordered = int(np.sum(per_seed_20 < per_seed_1))
    ok = t20.rel_error[-1] < t1.rel_error[-1] and ordered >= 4 and elapsed < 60
    acceptance("3 stochastic sweep ordering", ok,
               f"mean tau=1 {t1.rel_error[-1]:.3e} tau=20 {t20.rel_error[-1]:.3e} "
               f"seeds ordered {ordered}/5 runtime={elapsed:.2f}s")


def test_04_tau1_matches_sgda(minimax, acceptance):
    steps = 10_000
    traj = run_pearl_sgd(minimax, None, RunConfig(tau=1, rounds=steps, mode="stochastic", seed=11))
    ref = sgda_reference(minimax, np.ones(minimax.layout.D), traj.gammas[0], steps, seed=11)
    same = np.array_equal(traj.iterates[:, 0, :], ref)
    acceptance("4 tau=1 equals SGDA bit-for-bit", same, f"{steps} steps")


def test_05_noisy_neighborhood(acceptance):
    start = time.perf_counter()
    game = two_dim_game()
    params = compute_parameters(game)
    gamma = theoretical_gamma(params, 4)
    rep = check_theorem2_neighborhood(game, None, gamma, 4, 50, 1000, params, seed=5)
    elapsed = time.perf_counter() - start
    acceptance("5 noisy neighborhood", rep.passed and elapsed < 120,
               f"estimate={rep.details['estimate']:.4e} rhs={rep.details['rhs']:.4e} "
               f"ci={rep.ci_half_width:.2e} runtime={elapsed:.2f}s")


def test_06_corollary_eta(acceptance):
    eta, _ = corollary_eta_solve(4 * math.e, 0.5, 1.0, 1.0)
    first = abs(eta - math.e) / math.e <= 1e-10
    raised = []
    for T, kappa, tau in [(4 * math.e, 5.0, 1), (100.0, 10.0, 5), (1000.0, 50.0, 20)]:
        try:
            corollary_eta_solve(T, 0.5, kappa, tau)
            raised.append(False)
        except PreconditionError:
            raised.append(True)
    acceptance("6 corollary eta solver", first and all(raised),
               f"eta={eta!r} precondition errors={raised}")


def test_07_decreasing_schedule_and_rate(acceptance):
    game = two_dim_game()
    params = compute_parameters(game)
    tau = 4
    p0 = math.ceil(decreasing_threshold(params))
    closed_before = 1.0 / (params.ell * tau * (1 + 2 * params.q))
    closed_after = (2 * p0 + 1) / ((p0 + 1) ** 2 * tau * params.mu)
    formula_ok = decreasing_gamma(params, tau, p0 - 1) == closed_before and \
        decreasing_gamma(params, tau, p0) == closed_after
    grid = [2 ** k for k in range(8, 13)]
    reps = check_decreasing_rate(game, None, tau, grid, 200, params, seed=3)
    mean = reps["bound"].details["mean"]
    trend_ok = mean[2 ** 12] <= 0.75 * mean[2 ** 11]
    acceptance("7 decreasing schedule and O(1/T) rate", formula_ok and trend_ok and reps["bound"].passed,
               f"formula={formula_ok} mean(2^12)/mean(2^11)={mean[2 ** 12] / mean[2 ** 11]:.3f} "
               f"bound max_violation={reps['bound'].max_violation:.3e}")


def test_08_heatmap_hyperbola(minimax, acceptance):
    gammas = np.logspace(-4, 0, 20)
    grid = heatmap_grid(minimax, None, gammas, TAUS, rounds=100)
    best = heatmap_argmin(grid, gammas)
    prod = best * np.array(TAUS)
    ratio = prod.max() / prod.min()
    acceptance("8 heatmap gamma*tau band", ratio <= 3.0,
               f"gamma*tau={np.round(prod, 4).tolist()} ratio={ratio:.3f}")


def test_09a_sine_qsm_sco(acceptance):
    reps = check_assumptions(SineNonCocoerciveGame(1.0, 4.0), n_samples=10_000, seed=0)
    ok = reps["qsm"].passed and reps["sco"].passed
    acceptance("9a sine game QSM and SCO", ok,
               f"qsm={reps['qsm'].max_violation:.2e} sco={reps['sco'].max_violation:.2e}")


def test_09b_sine_witness_at_20_5pi(acceptance):
    # The criterion's point u = v = 20.5 pi has sin(2u) = 0, so the exact Jacobian is
    # diagonal there and det(DF + DF^T) = 4 phi^2 > 0. Evaluated honestly, this fails.
    rep = check_nonmonotone_witness(SineNonCocoerciveGame(1.0, 4.0), 10, phase=0.5)
    acceptance("9b sine witness det < 0 at u=v=20.5pi", rep.details["det"] < 0, f"det={rep.details['det']:.6g}")


def test_09c_nplayer_qsm(acceptance):
    game = generate_nplayer_quadratic(n=5, d=10, M=100, mu_a=1.0, seed=3)
    rep = check_strong_monotonicity(game, 1.0, n_pairs=1000, seed=0)
    declared = dataclasses.replace(compute_parameters(game), mu=1.0)
    qsm = check_assumptions(game, declared, n_samples=1000, seed=0)["qsm"]
    acceptance("9c n-player skew game QSM with mu=mu_A", rep.passed and qsm.passed,
               f"pairs max_violation={rep.max_violation:.3e} declared-mu qsm={qsm.max_violation:.3e}")


def test_10_robot_preset(tmp_path, acceptance):
    start = time.perf_counter()
    game = RobotControlGame.preset()
    residual = equilibrium_residual(game, game.equilibrium())
    traj = run_pearl_sgd(game, None, RunConfig(tau=5, rounds=200, schedule=StepSizeSchedule("theoretical-robot"),
                                               mode="stochastic", replicates=5, seed=0))
    rel = traj.rel_error[-1] / traj.rel_error[0]
    out = tmp_path / "robot"
    proc = subprocess.run([sys.executable, "-m", "pearlsgd", "robot", "--tau", "5", "--no-plot", "--out", str(out)],
                          capture_output=True, text=True, env=dict(os.environ, PEARL_SEED="0"))
    header = (out / "trajectory_tau5.csv").read_text().splitlines()[0] if proc.returncode == 0 else ""
    csv_ok = header.split(",")[5:10] == [f"f_{i}" for i in range(1, 6)]
    elapsed = time.perf_counter() - start
    ok = residual <= 1e-10 and rel < 0.1 and csv_ok and elapsed < 30
    acceptance("10 robot preset", ok, f"residual={residual:.2e} rel(200)/rel(0)={rel:.3e} "
                                      f"csv f_i columns={csv_ok} runtime={elapsed:.2f}s")


def test_11_lemma_suites(minimax, acceptance):
    params = compute_parameters(minimax, estimate_noise=True, seed=0)
    tau = 8
    x_start = np.ones(minimax.layout.D)
    results = []
    for i in range(minimax.layout.n):
        gamma = min(1.0, 1.0 / (tau - 1)) / params.l_per_player[i]
        results.append(check_lemma_gradnorm(minimax, i, x_start, gamma, tau, 10_000, params, seed=i))
        results.append(check_lemma_local_error(minimax, i, x_start, gamma, tau, 10_000, params, seed=10 + i))
    acceptance("11 lemma suites", all(r.passed for r in results),
               " ".join(f"{r.name}[{r.details['player']}]={r.verdict}" for r in results))


def test_12_player_drift(acceptance):
    game = scalar_minimax(0.5)
    unscaled = run_pearl_sgd(game, None, RunConfig(tau=50, rounds=100, schedule=StepSizeSchedule.constant(0.5)))
    scaled = run_pearl_sgd(game, None, RunConfig(tau=50, rounds=100))
    ok = unscaled.status == "diverged" and not scaled.diverged and scaled.final_rel_error < 1e-3
    acceptance("12 player drift", ok, f"unscaled={unscaled.status} after {unscaled.completed_rounds} rounds, "
                                      f"scaled final rel error={scaled.final_rel_error:.2e}")
