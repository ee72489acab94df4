import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pearlsgd import RngStream, joint_gradient
from pearlsgd.problems import (LinearGame, QSMError, RobotControlGame, SineNonCocoerciveGame, SingularSystemError,
                               compute_parameters, equilibrium_residual, estimate_sigma,
                               generate_nplayer_quadratic, generate_quadratic_minimax, load_problem,
                               problem_hash, random_symmetric, reference_equilibrium, save_problem, scalar_game,
                               scalar_minimax, solve_equilibrium_linear, spectral_norm)
from pearlsgd.problems.io import dumps_problem


def finite_difference_grad(game, i, x, h=1e-6):
    sl = game.layout.slice(i)
    g = np.zeros(sl.stop - sl.start)
    for k in range(len(g)):
        e = np.zeros_like(x)
        e[sl.start + k] = h
        g[k] = (game.objective(i, x + e) - game.objective(i, x - e)) / (2 * h)
    return g


@pytest.mark.parametrize("make", [
    lambda: generate_quadratic_minimax(d=3, M=5, seed=2),
    lambda: generate_nplayer_quadratic(n=3, d=2, M=4, seed=2),
    lambda: RobotControlGame.preset(),
    lambda: scalar_game(1.5, 0.7, (0.2, -0.4)),
    lambda: SineNonCocoerciveGame(1.0, 4.0),
])
def test_gradients_match_objective_finite_differences(make, rng):
    game = make()
    x = rng.uniform(-2, 2, game.layout.D)
    for i in range(game.layout.n):
        assert np.allclose(game.grad(i, x), finite_difference_grad(game, i, x), atol=1e-5)


@given(lo=st.floats(0.1, 5), width=st.floats(0, 5), d=st.integers(1, 6), seed=st.integers(0, 1000))
@settings(max_examples=40, deadline=None)
def test_random_symmetric_spectrum_in_range(lo, width, d, seed):
    s = random_symmetric(np.random.default_rng(seed), d, lo, lo + width)
    lam = np.linalg.eigvalsh(s)
    assert np.allclose(s, s.T)
    assert lam.min() >= lo - 1e-9 and lam.max() <= lo + width + 1e-9


def test_minimax_generator_shapes_and_mean_spectra():
    g = generate_quadratic_minimax(d=4, M=20, mu_a=1, L_a=2, mu_c=0.5, L_c=3, L_b=10, seed=3)
    assert g.layout.dims == (4, 4)
    lam_a = np.linalg.eigvalsh(g.A_bar)
    lam_c = np.linalg.eigvalsh(g.C_bar)
    assert 1 - 1e-12 <= lam_a.min() and lam_a.max() <= 2 + 1e-12
    assert 0.5 - 1e-12 <= lam_c.min() and lam_c.max() <= 3 + 1e-12
    assert not g.deterministic
    assert generate_quadratic_minimax(d=2, M=1).deterministic


def test_generators_are_seeded():
    a = generate_quadratic_minimax(d=3, M=4, seed=9)
    b = generate_quadratic_minimax(d=3, M=4, seed=9)
    c = generate_quadratic_minimax(d=3, M=4, seed=10)
    assert problem_hash(a) == problem_hash(b) != problem_hash(c)


def test_generator_rejects_bad_bounds():
    with pytest.raises(ValueError):
        generate_quadratic_minimax(mu_a=0.0)
    with pytest.raises(ValueError):
        generate_quadratic_minimax(mu_a=3.0, L_a=2.0)
    with pytest.raises(ValueError):
        generate_nplayer_quadratic(n=1)


def test_minimax_stochastic_gradient_is_unbiased_over_samples():
    g = generate_quadratic_minimax(d=3, M=6, seed=4)
    x = np.linspace(-1, 1, 6)
    # averaging the per-sample gradients over every index reproduces the full gradient
    for i in range(2):
        per_sample = []
        for m in range(g.M):
            class Fixed:
                batched = False
                draw_id = ()

                def integers(self, high, size=1, m=m):
                    return np.full(size, m)
            per_sample.append(g.stoch_grad(i, x, Fixed()).value)
        assert np.allclose(np.mean(per_sample, axis=0), g.grad(i, x))


def test_minimax_monte_carlo_mean_close_to_gradient():
    g = generate_quadratic_minimax(d=3, M=6, seed=4)
    x = np.ones(6)
    reps = np.arange(50_000)
    samples = g.stoch_grad(0, np.tile(x, (len(reps), 1)), RngStream(0).draw(0, 0, reps)).value
    se = samples.std(0) / math.sqrt(len(reps))
    assert np.all(np.abs(samples.mean(0) - g.grad(0, x)) < 5 * se + 1e-12)


def test_nplayer_skew_structure_makes_coupling_cancel(rng):
    g = generate_nplayer_quadratic(n=4, d=3, M=5, seed=1)
    assert g.skew_defect() == 0.0
    m, _ = g.affine_system()
    sym = 0.5 * (m + m.T)
    blocks = [sym[i * 3:(i + 1) * 3, j * 3:(j + 1) * 3] for i in range(4) for j in range(4) if i != j]
    assert max(np.abs(b).max() for b in blocks) < 1e-12
    x, y = rng.normal(size=12), rng.normal(size=12)
    lhs = np.dot(joint_gradient(g, x) - joint_gradient(g, y), x - y)
    rhs = sum(np.dot(x[i * 3:(i + 1) * 3] - y[i * 3:(i + 1) * 3],
                     g.A_bar[i] @ (x[i * 3:(i + 1) * 3] - y[i * 3:(i + 1) * 3])) for i in range(4))
    assert lhs == pytest.approx(rhs)


def test_robot_preset_constants():
    g = RobotControlGame.preset()
    assert g.h[0, 1] == 5 and g.h[1, 0] == -5 and g.h[4, 2] == 4
    assert g.a[2] == pytest.approx(10.5) and g.b[2] == pytest.approx(0.5)
    assert g.noise_variance == 100.0
    assert equilibrium_residual(g, g.equilibrium()) <= 1e-10


def test_robot_equilibrium_is_nash_by_brute_force():
    g = RobotControlGame.preset(noise_variance=0.0)
    x = np.asarray(g.equilibrium())
    for i in range(5):
        grid = x[i] + np.linspace(-1, 1, 2001)
        X = np.tile(x, (len(grid), 1))
        X[:, i] = grid
        assert abs(grid[np.argmin(g.objective(i, X))] - x[i]) <= 1e-3


def test_scalar_game_equilibrium_closed_form():
    g = scalar_game(mu=1.0, coupling=1.0, shift=(1.0, -1.0))
    # (u + v + 1, v - u - 1) = 0 gives u = -1, v = 0
    assert np.allclose(np.asarray(g.equilibrium()), [-1.0, 0.0], atol=1e-14)


def test_singular_system_raises():
    g = LinearGame(np.array([[1.0, 1.0], [1.0, 1.0]]), np.zeros(2), (1, 1))
    with pytest.raises(SingularSystemError):
        solve_equilibrium_linear(g)


def test_compute_parameters_affine_closed_form():
    p = compute_parameters(scalar_game(mu=1.0, coupling=1.0))
    assert p.mu == pytest.approx(1.0)
    assert p.lipschitz == pytest.approx(math.sqrt(2))
    assert p.ell == pytest.approx(2.0)
    assert p.l_per_player == pytest.approx((1.0, 1.0))
    assert p.sigma_per_player == (0.0, 0.0)


def test_compute_parameters_rejects_non_qsm():
    g = LinearGame(np.array([[-1.0, 0.0], [0.0, 1.0]]), np.zeros(2), (1, 1))
    with pytest.raises(QSMError):
        compute_parameters(g)


def test_spectral_norm_power_iteration_matches_svd(rng):
    m = rng.normal(size=(600, 600))
    assert spectral_norm(m) == pytest.approx(np.linalg.svd(m, compute_uv=False)[0], rel=1e-6)


def test_reference_equilibrium_agrees_with_linear_solve():
    g = scalar_game(mu=1.0, coupling=2.0, shift=(0.5, 1.0))
    x, res = reference_equilibrium(g, compute_parameters(g).ell, steps=5000)
    assert np.allclose(np.asarray(x), np.asarray(g.equilibrium()), atol=1e-10)
    assert res < 1e-10


def test_sigma_estimate_brackets_known_noise():
    g = scalar_game(mu=1.0, noise_std=2.0)
    est = estimate_sigma(g, n_points=3, n_draws=4000, seed=1)
    assert all(2.0 <= s <= 2.2 for s in est)
    assert estimate_sigma(scalar_minimax(1.0)) == (0.0, 0.0)


def test_sine_jacobian_matches_finite_differences(rng):
    g = SineNonCocoerciveGame(1.0, 4.0)
    x = rng.uniform(-5, 5, 2)
    h = 1e-6
    fd = np.column_stack([(joint_gradient(g, x + h * e) - joint_gradient(g, x - h * e)) / (2 * h)
                          for e in np.eye(2)])
    assert np.allclose(g.jacobian(x), fd, atol=1e-6)


def test_sine_parameters_are_analytic():
    p = compute_parameters(SineNonCocoerciveGame(1.0, 4.0))
    assert (p.mu, p.ell, p.source) == (1.0, 4.0, "analytic")
    with pytest.raises(ValueError):
        SineNonCocoerciveGame(4.0, 1.0)


@pytest.mark.parametrize("make", [
    lambda: generate_quadratic_minimax(d=2, M=3, seed=1, batch_size=2),
    lambda: generate_nplayer_quadratic(n=3, d=2, M=2, seed=1),
    lambda: RobotControlGame.preset(),
    lambda: scalar_game(1.0, 2.0, (1.0, 0.5), 0.3),
    lambda: SineNonCocoerciveGame(0.5, 3.0, 0.1),
])
def test_problem_files_round_trip(make, tmp_path):
    g = make()
    path = tmp_path / "p.json"
    save_problem(g, path)
    back = load_problem(path)
    assert type(back) is type(g)
    assert dumps_problem(back) == dumps_problem(g)
    assert problem_hash(back) == problem_hash(g)
    x = np.linspace(-1, 1, g.layout.D)
    for i in range(g.layout.n):
        assert np.array_equal(back.grad(i, x), g.grad(i, x))
