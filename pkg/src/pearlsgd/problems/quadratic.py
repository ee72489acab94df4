"""Quadratic games: finite-sum minimax, skew-coupled n-player, affine games with additive noise."""
from functools import cached_property

import numpy as np

from ..core import BlockLayout, GameProblem, GradientSample, LayoutError


def random_orthogonal(rng, d):
    """Haar-distributed orthogonal matrix from a sign-corrected QR factorization."""
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.diag(r))


def random_symmetric(rng, d, lo, hi):
    """Q diag(lam) Q^T with lam uniform in [lo, hi]."""
    q = random_orthogonal(rng, d)
    lam = rng.uniform(lo, hi, size=d)
    s = (q * lam) @ q.T
    return 0.5 * (s + s.T)


def _check_bounds(name, lo, hi, strict=True):
    if strict and not lo > 0:
        raise ValueError(f"{name}: lower spectral bound must be positive, got {lo}")
    if not strict and lo < 0:
        raise ValueError(f"{name}: lower spectral bound must be nonnegative, got {lo}")
    if lo > hi:
        raise ValueError(f"{name}: lower bound {lo} exceeds upper bound {hi}")


def _pair(x, draw_idx):
    """Align a (B, D) batch with (R, bs) sample indices."""
    X = np.atleast_2d(x)
    if X.shape[0] != draw_idx.shape[0]:
        if draw_idx.shape[0] == 1:
            draw_idx = np.broadcast_to(draw_idx, (X.shape[0], draw_idx.shape[1]))
        elif X.shape[0] == 1:
            X = np.broadcast_to(X, (draw_idx.shape[0], X.shape[1]))
        else:
            raise LayoutError(f"batch of {X.shape[0]} points cannot pair with {draw_idx.shape[0]} draws")
    return X, draw_idx


class AffineMixin:
    """Shared behaviour for games whose joint gradient is F(x) = M x + b."""

    @cached_property
    def _equilibrium(self):
        from .analysis import solve_equilibrium_linear
        return solve_equilibrium_linear(self)

    def equilibrium(self):
        return self._equilibrium


class LinearGame(AffineMixin, GameProblem):
    """Game defined directly by its affine joint gradient, with optional
    isotropic Gaussian noise of standard deviation ``noise_std`` added to every
    gradient coordinate.

    Player i's objective is 0.5 <x^i, M_ii x^i> + <x^i, sum_{j != i} M_ij x^j + b_i>,
    so each diagonal block must be symmetric.
    """

    kind = "linear"

    def __init__(self, matrix, offset, dims, noise_std=0.0, name="linear"):
        self.layout = BlockLayout(tuple(dims))
        self.matrix = np.array(matrix, dtype=np.float64)
        self.offset = np.array(offset, dtype=np.float64).reshape(-1)
        D = self.layout.D
        if self.matrix.shape != (D, D) or self.offset.shape != (D,):
            raise LayoutError(f"need a {D}x{D} matrix and length-{D} offset")
        for i in range(self.layout.n):
            sl = self.layout.slice(i)
            blk = self.matrix[sl, sl]
            if np.max(np.abs(blk - blk.T), initial=0.0) > 1e-12:
                raise ValueError(f"diagonal block {i} must be symmetric")
        if noise_std < 0:
            raise ValueError("noise_std must be nonnegative")
        self.noise_std = float(noise_std)
        self.name = name

    def grad(self, i, x):
        x = self.layout.check(x)
        sl = self.layout.slice(i)
        return x @ self.matrix[sl, :].T + self.offset[sl]

    def objective(self, i, x):
        x = self.layout.check(x)
        sl = self.layout.slice(i)
        xi = x[..., sl]
        lin = x @ self.matrix[sl, :].T + self.offset[sl]
        quad = xi @ self.matrix[sl, sl].T
        return np.sum(xi * (lin - 0.5 * quad), axis=-1)

    def stoch_grad(self, i, x, draw):
        g = self.grad(i, x)
        if self.noise_std > 0:
            g = g + self.noise_std * draw.normal(self.layout.dims[i])
        return GradientSample(i, g, draw.draw_id)

    @property
    def deterministic(self):
        return self.noise_std == 0

    def noise_sigma(self):
        return tuple(float(np.sqrt(d) * self.noise_std) for d in self.layout.dims)

    def affine_system(self):
        return self.matrix, self.offset

    def metadata(self):
        return {"name": self.name, "noise_std": self.noise_std}

    def to_dict(self):
        return {"kind": self.kind, "metadata": self.metadata(),
                "scalars": {"dims": list(self.layout.dims), "noise_std": self.noise_std, "name": self.name},
                "arrays": {"matrix": self.matrix, "offset": self.offset}}

    @classmethod
    def from_dict(cls, data):
        s, a = data["scalars"], data["arrays"]
        return cls(a["matrix"], a["offset"], s["dims"], s["noise_std"], s.get("name", "linear"))


def scalar_game(mu=1.0, coupling=1.0, shift=(0.0, 0.0), noise_std=0.0):
    """Two scalar players with L(u, v) = (mu/2)u^2 + c uv - (mu/2)v^2 + shift terms.

    F(u, v) = (mu u + c v + shift_0, mu v - c u + shift_1).
    """
    m = np.array([[mu, coupling], [-coupling, mu]], dtype=np.float64)
    return LinearGame(m, np.asarray(shift, dtype=np.float64), (1, 1), noise_std,
                      name=f"scalar-mu{mu:g}-c{coupling:g}")


ROBOT_ANCHORS = (1.0, -4.0, 8.0, -9.0, 13.0)
ROBOT_DISPLACEMENTS = (
    (0.0, 5.0, -7.0, 9.0, -8.0),
    (-5.0, 0.0, -6.0, 2.0, -9.0),
    (7.0, 6.0, 0.0, 7.0, -4.0),
    (-9.0, -2.0, -7.0, 0.0, -2.0),
    (8.0, 9.0, 4.0, 2.0, 0.0),
)
ROBOT_NOISE_VARIANCE = 100.0


class RobotControlGame(LinearGame):
    """Mobile robots anchored to targets and coupled by desired displacements.

    f_i(x) = a_i/2 ||x^i - anc_i||^2 + b_i/2 sum_j ||x^i - x^j - h_ij||^2 with
    scalar positions; gradients carry additive Gaussian noise.
    """

    kind = "robot"

    def __init__(self, a, b, anchors, h, noise_variance=ROBOT_NOISE_VARIANCE):
        self.a = np.array(a, dtype=np.float64)
        self.b = np.array(b, dtype=np.float64)
        self.anchors = np.array(anchors, dtype=np.float64)
        self.h = np.array(h, dtype=np.float64)
        n = len(self.a)
        if self.h.shape != (n, n) or np.any(np.diag(self.h) != 0):
            raise ValueError("displacement matrix must be n x n with zero diagonal")
        if np.any(self.a <= 0) or np.any(self.b < 0):
            raise ValueError("need a_i > 0 and b_i >= 0")
        # grad_i = a_i (x_i - anc_i) + b_i sum_j (x_i - x_j - h_ij); the j = i term vanishes
        m = -np.outer(self.b, np.ones(n))
        np.fill_diagonal(m, self.a + self.b * (n - 1))
        off = -self.a * self.anchors - self.b * self.h.sum(axis=1)
        self.noise_variance = float(noise_variance)
        super().__init__(m, off, (1,) * n, np.sqrt(self.noise_variance), name="robot")

    @classmethod
    def preset(cls, noise_variance=ROBOT_NOISE_VARIANCE):
        idx = np.arange(1, 6)
        return cls(10.0 + idx / 6.0, idx / 6.0, ROBOT_ANCHORS, ROBOT_DISPLACEMENTS, noise_variance)

    def objective(self, i, x):
        x = self.layout.check(x)
        xi = x[..., i]
        diff = xi[..., None] - x - self.h[i]
        return 0.5 * self.a[i] * (xi - self.anchors[i]) ** 2 + 0.5 * self.b[i] * np.sum(diff ** 2, axis=-1)

    def metadata(self):
        return {"name": "robot", "noise_variance": self.noise_variance}

    def to_dict(self):
        return {"kind": self.kind, "metadata": self.metadata(),
                "scalars": {"noise_variance": self.noise_variance},
                "arrays": {"a": self.a, "b": self.b, "anchors": self.anchors, "h": self.h}}

    @classmethod
    def from_dict(cls, data):
        a = data["arrays"]
        return cls(a["a"], a["b"], a["anchors"], a["h"], data["scalars"]["noise_variance"])


class QuadraticMinimaxGame(AffineMixin, GameProblem):
    """Two-player zero-sum finite-sum game, f_1 = L and f_2 = -L with

    L_m(u, v) = 0.5<u, A_m u> + <u, B_m v> - 0.5<v, C_m v> + <a_m, u> - <c_m, v>

    averaged over m. Stochastic gradients average ``batch_size`` samples drawn
    uniformly with replacement.
    """

    kind = "quad-minimax"

    def __init__(self, A, B, C, a, c, batch_size=1, meta=None):
        self.A, self.B, self.C = (np.array(m, dtype=np.float64) for m in (A, B, C))
        self.a, self.c = (np.array(v, dtype=np.float64) for v in (a, c))
        M, d, _ = self.A.shape
        for name, arr in (("B", self.B), ("C", self.C)):
            if arr.shape != (M, d, d):
                raise LayoutError(f"{name} must have shape {(M, d, d)}")
        if self.a.shape != (M, d) or self.c.shape != (M, d):
            raise LayoutError(f"vectors must have shape {(M, d)}")
        if batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        self.batch_size = int(batch_size)
        self.M, self.d = M, d
        self.layout = BlockLayout((d, d))
        self.A_bar, self.B_bar, self.C_bar = self.A.mean(0), self.B.mean(0), self.C.mean(0)
        self.a_bar, self.c_bar = self.a.mean(0), self.c.mean(0)
        self.meta = dict(meta or {})

    def _split(self, x):
        x = self.layout.check(x)
        return x[..., :self.d], x[..., self.d:]

    def lagrangian(self, x):
        u, v = self._split(x)
        return (0.5 * np.sum(u * (u @ self.A_bar.T), -1) + np.sum(u * (v @ self.B_bar.T), -1)
                - 0.5 * np.sum(v * (v @ self.C_bar.T), -1) + u @ self.a_bar - v @ self.c_bar)

    def objective(self, i, x):
        return self.lagrangian(x) if i == 0 else -self.lagrangian(x)

    def grad(self, i, x):
        u, v = self._split(x)
        if i == 0:
            return u @ self.A_bar.T + v @ self.B_bar.T + self.a_bar
        if i == 1:
            return v @ self.C_bar.T - u @ self.B_bar + self.c_bar
        raise IndexError(f"player index {i} out of range for 2 players")

    def stoch_grad(self, i, x, draw):
        idx = np.atleast_2d(draw.integers(self.M, self.batch_size))
        X, idx = _pair(x, idx)
        u, v = X[:, :self.d], X[:, self.d:]
        if i == 0:
            g = (np.einsum("rbij,rj->ri", self.A[idx], u) + np.einsum("rbij,rj->ri", self.B[idx], v)
                 ) / self.batch_size + self.a[idx].mean(1)
        elif i == 1:
            g = (np.einsum("rbij,rj->ri", self.C[idx], v) - np.einsum("rbji,rj->ri", self.B[idx], u)
                 ) / self.batch_size + self.c[idx].mean(1)
        else:
            raise IndexError(f"player index {i} out of range for 2 players")
        if np.ndim(x) == 1 and not draw.batched:
            g = g[0]
        return GradientSample(i, g, draw.draw_id)

    @property
    def deterministic(self):
        return self.M == 1

    def affine_system(self):
        m = np.block([[self.A_bar, self.B_bar], [-self.B_bar.T, self.C_bar]])
        return m, np.concatenate([self.a_bar, self.c_bar])

    def metadata(self):
        return dict(self.meta, d=self.d, M=self.M, batch_size=self.batch_size)

    def to_dict(self):
        return {"kind": self.kind, "metadata": self.metadata(),
                "scalars": {"batch_size": self.batch_size},
                "arrays": {"A": self.A, "B": self.B, "C": self.C, "a": self.a, "c": self.c}}

    @classmethod
    def from_dict(cls, data):
        a = data["arrays"]
        meta = {k: v for k, v in data["metadata"].items() if k not in ("d", "M", "batch_size")}
        return cls(a["A"], a["B"], a["C"], a["a"], a["c"], data["scalars"]["batch_size"], meta)


def scalar_minimax(mu, coupling=1.0):
    """Deterministic (mu/2)u^2 + c uv - (mu/2)v^2 as a one-sample minimax game."""
    one = np.ones((1, 1, 1))
    zero = np.zeros((1, 1))
    return QuadraticMinimaxGame(mu * one, coupling * one, mu * one, zero, zero,
                                meta={"generator": "scalar", "mu": mu, "coupling": coupling})


def generate_quadratic_minimax(d=10, M=100, mu_a=1.0, L_a=2.0, mu_c=1.0, L_c=2.0, L_b=10.0,
                               seed=0, batch_size=1):
    """Random finite-sum minimax game with controlled per-sample spectra.

    A_m, C_m have eigenvalues uniform in [mu_a, L_a] and [mu_c, L_c]; B_m is
    symmetric with eigenvalues in [0, L_b]; a_m, c_m are uniform on [0, 1)^d.
    """
    _check_bounds("A", mu_a, L_a)
    _check_bounds("C", mu_c, L_c)
    _check_bounds("B", 0.0, L_b, strict=False)
    if d < 1 or M < 1:
        raise ValueError("need d >= 1 and M >= 1")
    rng = np.random.default_rng(seed)
    A = np.stack([random_symmetric(rng, d, mu_a, L_a) for _ in range(M)])
    B = np.stack([random_symmetric(rng, d, 0.0, L_b) for _ in range(M)])
    C = np.stack([random_symmetric(rng, d, mu_c, L_c) for _ in range(M)])
    a = rng.uniform(0.0, 1.0, size=(M, d))
    c = rng.uniform(0.0, 1.0, size=(M, d))
    meta = {"generator": "quad-minimax", "seed": seed, "mu_a": mu_a, "L_a": L_a, "mu_c": mu_c,
            "L_c": L_c, "L_b": L_b, "vector_distribution": "uniform[0,1)"}
    return QuadraticMinimaxGame(A, B, C, a, c, batch_size, meta)


class NPlayerQuadraticGame(AffineMixin, GameProblem):
    """n players with f_{i,m} = 0.5<x^i, A_{i,m} x^i> + sum_{j != i} <x^i, B_{i,j,m} x^j> + <a_{i,m}, x^i>.

    ``B`` holds every ordered pair with B[j, i] = -B[i, j]^T and zero diagonal.
    """

    kind = "nplayer"

    def __init__(self, A, B, a, batch_size=1, meta=None):
        self.A = np.array(A, dtype=np.float64)
        self.B = np.array(B, dtype=np.float64)
        self.a = np.array(a, dtype=np.float64)
        n, M, d, _ = self.A.shape
        if self.B.shape != (n, n, M, d, d) or self.a.shape != (n, M, d):
            raise LayoutError("inconsistent n-player array shapes")
        self.n, self.M, self.d = n, M, d
        self.batch_size = int(batch_size)
        self.layout = BlockLayout.uniform(n, d)
        self.A_bar, self.B_bar, self.a_bar = self.A.mean(1), self.B.mean(2), self.a.mean(1)
        self.meta = dict(meta or {})

    @classmethod
    def from_upper(cls, A, B_upper, a, batch_size=1, meta=None):
        """Build from the i < j couplings; the lower triangle is set to -B_upper^T."""
        A = np.asarray(A, dtype=np.float64)
        n, M, d, _ = A.shape
        B = np.zeros((n, n, M, d, d))
        for (i, j), blk in B_upper.items():
            if not i < j:
                raise ValueError("B_upper keys must satisfy i < j")
            B[i, j] = blk
            B[j, i] = -np.swapaxes(np.asarray(blk, dtype=np.float64), -1, -2)
        return cls(A, B, a, batch_size, meta)

    def _blocks(self, x):
        x = self.layout.check(x)
        return x.reshape(x.shape[:-1] + (self.n, self.d))

    def grad(self, i, x):
        xb = self._blocks(x)
        return (xb[..., i, :] @ self.A_bar[i].T + np.einsum("jkl,...jl->...k", self.B_bar[i], xb)
                + self.a_bar[i])

    def objective(self, i, x):
        xb = self._blocks(x)
        xi = xb[..., i, :]
        return (0.5 * np.sum(xi * (xi @ self.A_bar[i].T), -1)
                + np.sum(xi * np.einsum("jkl,...jl->...k", self.B_bar[i], xb), -1)
                + xi @ self.a_bar[i])

    def stoch_grad(self, i, x, draw):
        idx = np.atleast_2d(draw.integers(self.M, self.batch_size))
        X, idx = _pair(x, idx)
        xb = X.reshape(X.shape[0], self.n, self.d)
        Ai = self.A[i][idx]                       # (R, bs, d, d)
        Bi = np.moveaxis(self.B[i], 1, 0)[idx]     # (R, bs, n, d, d)
        g = (np.einsum("rbkl,rl->rk", Ai, xb[:, i]) + np.einsum("rbjkl,rjl->rk", Bi, xb)
             ) / self.batch_size + self.a[i][idx].mean(1)
        if np.ndim(x) == 1 and not draw.batched:
            g = g[0]
        return GradientSample(i, g, draw.draw_id)

    @property
    def deterministic(self):
        return self.M == 1

    def affine_system(self):
        n, d = self.n, self.d
        m = np.zeros((n * d, n * d))
        for i in range(n):
            for j in range(n):
                m[i * d:(i + 1) * d, j * d:(j + 1) * d] = self.A_bar[i] if i == j else self.B_bar[i, j]
        return m, self.a_bar.reshape(-1)

    def skew_defect(self):
        """max |B_{j,i,m} + B_{i,j,m}^T| over all pairs and samples."""
        return float(np.max(np.abs(self.B + np.swapaxes(np.swapaxes(self.B, 0, 1), -1, -2))))

    def metadata(self):
        return dict(self.meta, n=self.n, d=self.d, M=self.M, batch_size=self.batch_size)

    def to_dict(self):
        upper = np.stack([self.B[i, j] for i in range(self.n) for j in range(i + 1, self.n)]) \
            if self.n > 1 else np.zeros((0, self.M, self.d, self.d))
        return {"kind": self.kind, "metadata": self.metadata(),
                "scalars": {"batch_size": self.batch_size, "n": self.n},
                "arrays": {"A": self.A, "B_upper": upper, "a": self.a}}

    @classmethod
    def from_dict(cls, data):
        arr, n = data["arrays"], data["scalars"]["n"]
        pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
        upper = {p: arr["B_upper"][k] for k, p in enumerate(pairs)}
        meta = {k: v for k, v in data["metadata"].items() if k not in ("n", "d", "M", "batch_size")}
        return cls.from_upper(arr["A"], upper, arr["a"], data["scalars"]["batch_size"], meta)


def generate_nplayer_quadratic(n=5, d=10, M=100, mu_a=1.0, L_a=2.0, L_b=1.0, seed=0, batch_size=1):
    """Random skew-coupled n-player game; the coupling cancels in <F(x)-F(y), x-y>."""
    if n < 2:
        raise ValueError("need n >= 2 players")
    _check_bounds("A", mu_a, L_a)
    _check_bounds("B", 0.0, L_b, strict=False)
    if d < 1 or M < 1:
        raise ValueError("need d >= 1 and M >= 1")
    rng = np.random.default_rng(seed)
    A = np.stack([np.stack([random_symmetric(rng, d, mu_a, L_a) for _ in range(M)]) for _ in range(n)])
    upper = {}
    for i in range(n):
        for j in range(i + 1, n):
            upper[(i, j)] = np.stack([random_symmetric(rng, d, 0.0, L_b) for _ in range(M)])
    a = rng.uniform(0.0, 1.0, size=(n, M, d))
    meta = {"generator": "nplayer", "seed": seed, "mu_a": mu_a, "L_a": L_a, "L_b": L_b,
            "vector_distribution": "uniform[0,1)"}
    return NPlayerQuadraticGame.from_upper(A, upper, a, batch_size, meta)
