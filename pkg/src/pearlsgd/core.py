"""Joint actions, block layouts, the game problem contract and problem constants."""
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np


class LayoutError(ValueError):
    pass


@dataclass(frozen=True)
class BlockLayout:
    """Per-player dimensions of the joint strategy vector."""

    dims: tuple

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if len(dims) < 1:
            raise LayoutError("a game needs at least one player")
        if any(d < 1 for d in dims):
            raise LayoutError(f"player dimensions must be positive, got {dims}")
        object.__setattr__(self, "dims", dims)
        offsets = np.concatenate([[0], np.cumsum(dims)]).astype(int)
        object.__setattr__(self, "_offsets", tuple(int(o) for o in offsets))

    @classmethod
    def uniform(cls, n, d):
        return cls((d,) * n)

    @property
    def n(self):
        return len(self.dims)

    @property
    def D(self):
        return self._offsets[-1]

    def _check_player(self, i):
        if not 0 <= i < self.n:
            raise IndexError(f"player index {i} out of range for {self.n} players")

    def slice(self, i):
        self._check_player(i)
        return slice(self._offsets[i], self._offsets[i + 1])

    def offset(self, i):
        self._check_player(i)
        return self._offsets[i]

    def check(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.D:
            raise LayoutError(f"expected trailing dimension {self.D}, got shape {x.shape}")
        return x


def block_view(x, i, layout):
    """x^i as a view into the joint vector (works on a leading batch axis)."""
    x = layout.check(x)
    return x[..., layout.slice(i)]


def complement_view(x, i, layout):
    """x^{-i}: every block except player i's, in player order."""
    x = layout.check(x)
    sl = layout.slice(i)
    return np.concatenate([x[..., :sl.start], x[..., sl.stop:]], axis=-1)


def reassemble(block, complement, i, layout):
    block = np.asarray(block, dtype=np.float64)
    complement = np.asarray(complement, dtype=np.float64)
    if block.shape[-1] != layout.dims[i] or complement.shape[-1] != layout.D - layout.dims[i]:
        raise LayoutError("block/complement sizes do not match the layout")
    off = layout.offset(i)
    return np.concatenate([complement[..., :off], block, complement[..., off:]], axis=-1)


@dataclass(frozen=True)
class JointAction:
    layout: BlockLayout
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 1 or values.shape[0] != self.layout.D:
            raise LayoutError(f"joint action needs {self.layout.D} values, got shape {values.shape}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def block(self, i):
        return block_view(self.values, i, self.layout)

    def complement(self, i):
        return complement_view(self.values, i, self.layout)

    def with_block(self, i, block):
        return JointAction(self.layout, reassemble(block, self.complement(i), i, self.layout))

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)


@dataclass
class GradientSample:
    player: int
    value: np.ndarray
    draw_id: tuple = ()


@dataclass(frozen=True)
class ProblemParameters:
    """Constants that set step-sizes and convergence bounds.

    ``sigma_per_player`` is None when the noise level is unknown (it has not
    been estimated yet).
    """

    mu: float
    ell: float
    l_per_player: tuple
    sigma_per_player: Optional[tuple] = None
    lipschitz: Optional[float] = None
    source: str = "computed"

    def __post_init__(self):
        object.__setattr__(self, "l_per_player", tuple(float(v) for v in self.l_per_player))
        if self.sigma_per_player is not None:
            object.__setattr__(self, "sigma_per_player", tuple(float(v) for v in self.sigma_per_player))
            if any(s < 0 for s in self.sigma_per_player):
                raise ValueError("noise levels must be nonnegative")
        if not self.mu > 0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        if not self.ell >= self.mu:
            raise ValueError(f"ell ({self.ell}) must be at least mu ({self.mu})")

    @property
    def l_max(self):
        return max(self.l_per_player)

    @property
    def kappa(self):
        return self.ell / self.mu

    @property
    def q(self):
        return self.l_max / math.sqrt(self.ell * self.mu)

    @property
    def sigma_sq_total(self):
        if self.sigma_per_player is None:
            return None
        return float(sum(s * s for s in self.sigma_per_player))

    def with_sigma(self, sigma):
        return ProblemParameters(self.mu, self.ell, self.l_per_player, tuple(sigma),
                                 self.lipschitz, self.source)

    def to_dict(self):
        return {
            "mu": self.mu, "ell": self.ell, "l_per_player": list(self.l_per_player),
            "l_max": self.l_max, "kappa": self.kappa, "q": self.q,
            "sigma_per_player": None if self.sigma_per_player is None else list(self.sigma_per_player),
            "sigma_sq_total": self.sigma_sq_total, "lipschitz": self.lipschitz,
            "source": self.source,
        }


class GameProblem:
    """Base class for n-player games.

    Subclasses implement ``grad`` and ``objective`` for joint actions with an
    optional leading batch axis, and ``stoch_grad`` which consumes variates
    from a :class:`pearlsgd.rng.Draw`. Players are indexed from 0.
    """

    kind = "abstract"
    layout: BlockLayout

    def objective(self, i, x):
        raise NotImplementedError

    def grad(self, i, x):
        raise NotImplementedError

    def stoch_grad(self, i, x, draw):
        return GradientSample(i, self.grad(i, x), draw.draw_id)

    @property
    def deterministic(self):
        """True when ``stoch_grad`` always equals ``grad``."""
        return True

    def equilibrium(self):
        return None

    def analytic_params(self):
        return None

    def noise_sigma(self):
        """Exact per-player noise levels, or None if they must be estimated."""
        return (0.0,) * self.layout.n if self.deterministic else None

    def affine_system(self):
        """(M, b) with F(x) = M x + b, or None if F is not affine."""
        return None

    def metadata(self):
        return {}


def joint_gradient(problem, x):
    """F(x): the stacked own-block gradients of every player."""
    layout = problem.layout
    if isinstance(x, JointAction):
        if x.layout != layout:
            raise LayoutError("joint action layout differs from the problem layout")
        x = x.values
    x = layout.check(x)
    return np.concatenate([problem.grad(i, x) for i in range(layout.n)], axis=-1)


def as_array(x, layout):
    if isinstance(x, JointAction):
        return x.values
    return layout.check(x)
