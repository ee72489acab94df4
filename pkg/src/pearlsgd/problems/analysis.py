"""Equilibria and problem constants (mu, ell, L_i, sigma_i)."""
import logging
import warnings

import numpy as np
import scipy.linalg
from scipy import stats

from ..core import JointAction, ProblemParameters, joint_gradient
from ..rng import RngStream

log = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-10
SVD_MAX_DIM = 512


class SingularSystemError(ValueError):
    """The affine equilibrium system has no unique solution."""


class QSMError(ValueError):
    """The joint gradient is not quasi-strongly monotone (mu <= 0)."""


def solve_equilibrium_linear(problem):
    """x_star with M x_star + b = 0 by LU with partial pivoting.

    Raises SingularSystemError instead of falling back to least squares.
    """
    system = problem.affine_system()
    if system is None:
        raise ValueError(f"{problem.kind} game does not have an affine joint gradient")
    m, b = system
    with warnings.catch_warnings():
        # singularity is reported below as SingularSystemError
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(m, check_finite=True)
    diag = np.abs(np.diag(lu))
    if diag.min() <= np.finfo(float).eps * m.shape[0] * max(diag.max(), 1.0):
        raise SingularSystemError("equilibrium system is singular; the equilibrium is not unique")
    x = scipy.linalg.lu_solve((lu, piv), -b)
    # one step of iterative refinement keeps the residual at rounding level
    x = x + scipy.linalg.lu_solve((lu, piv), -(m @ x + b))
    residual = float(np.linalg.norm(joint_gradient(problem, x)))
    if residual > RESIDUAL_TOL:
        log.warning("equilibrium residual %.3e exceeds %.0e", residual, RESIDUAL_TOL)
    else:
        log.debug("equilibrium residual %.3e", residual)
    return JointAction(problem.layout, x)


def equilibrium_residual(problem, x):
    return float(np.linalg.norm(joint_gradient(problem, x)))


def spectral_norm(m, tol=1e-10, max_iter=10_000, seed=0):
    """Largest singular value; power iteration on M^T M for large matrices."""
    m = np.asarray(m, dtype=np.float64)
    if max(m.shape) <= SVD_MAX_DIM:
        return float(np.linalg.svd(m, compute_uv=False)[0])
    v = np.random.default_rng(seed).standard_normal(m.shape[1])
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(max_iter):
        w = m.T @ (m @ v)
        new = np.linalg.norm(w)
        if new == 0:
            return 0.0
        v = w / new
        if abs(new - est) <= tol * new:
            est = new
            break
        est = new
    return float(np.sqrt(est))


def reference_equilibrium(problem, ell, steps=1_000_000, x0=None):
    """Long-run deterministic GDA fallback with step 1/(10 ell)."""
    x = np.zeros(problem.layout.D) if x0 is None else np.array(x0, dtype=np.float64)
    gamma = 1.0 / (10.0 * ell)
    for _ in range(steps):
        x = x - gamma * joint_gradient(problem, x)
    return JointAction(problem.layout, x), equilibrium_residual(problem, x)


def _sample_ball(rng, center, radius, count):
    D = center.shape[0]
    direction = rng.standard_normal((count, D))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    r = radius * rng.uniform(size=(count, 1)) ** (1.0 / D)
    return center + r * direction


def estimate_sigma(problem, n_points=20, n_draws=2000, seed=0, radius=10.0, level=0.99):
    """Per-player noise levels sigma_i from Monte Carlo.

    Takes the worst empirical variance E||g - grad||^2 over sampled points in a
    ball around the equilibrium (the equilibrium itself included when known)
    and inflates it by the chi-square upper confidence factor.
    """
    if n_points < 1 or n_draws < 1:
        raise ValueError("n_points and n_draws must be >= 1")
    layout = problem.layout
    if problem.deterministic:
        return (0.0,) * layout.n
    x_star = problem.equilibrium()
    center = np.zeros(layout.D) if x_star is None else np.asarray(x_star, dtype=np.float64)
    rng = np.random.default_rng(seed)
    points = _sample_ball(rng, center, radius, n_points)
    if x_star is not None:
        points[0] = center
    stream = RngStream(seed)
    reps = np.arange(n_draws)
    worst = np.zeros(layout.n)
    for k, pt in enumerate(points):
        X = np.broadcast_to(pt, (n_draws, layout.D))
        for i in range(layout.n):
            g = problem.stoch_grad(i, X, stream.draw(i, k, reps)).value
            var = np.mean(np.sum((g - problem.grad(i, pt)) ** 2, axis=-1))
            worst[i] = max(worst[i], var)
    dof = np.array([n_draws * d for d in layout.dims], dtype=float)
    inflate = dof / stats.chi2.ppf(1.0 - level, dof)
    return tuple(float(s) for s in np.sqrt(worst * inflate))


def compute_parameters(problem, estimate_noise=False, n_points=20, n_draws=2000, seed=0, radius=10.0):
    """mu, ell, L_i (and sigma_i when known or estimated) for a game.

    For affine F(x) = Mx + b: mu = lambda_min((M + M^T)/2), L = ||M||_2,
    ell = L^2/mu and L_i = ||M_ii||_2. Games with a non-affine F must provide
    ``analytic_params``.
    """
    params = problem.analytic_params()
    if params is None:
        system = problem.affine_system()
        if system is None:
            raise ValueError(f"{problem.kind} game provides neither analytic parameters nor an affine F")
        m, _ = system
        mu = float(np.linalg.eigvalsh(0.5 * (m + m.T))[0])
        if mu <= 0:
            raise QSMError(f"lambda_min of the symmetric part is {mu:.3e}; quasi-strong monotonicity fails")
        lip = spectral_norm(m)
        layout = problem.layout
        l_i = tuple(spectral_norm(m[layout.slice(i), layout.slice(i)]) for i in range(layout.n))
        params = ProblemParameters(mu, max(lip * lip / mu, mu), l_i, None, lipschitz=lip)
    if params.sigma_per_player is None:
        sigma = problem.noise_sigma()
        if sigma is None and estimate_noise:
            sigma = estimate_sigma(problem, n_points, n_draws, seed, radius)
        if sigma is not None:
            params = params.with_sigma(sigma)
    return params
