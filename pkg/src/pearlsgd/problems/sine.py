import numpy as np

from ..core import BlockLayout, GameProblem, GradientSample, JointAction, ProblemParameters


class SineNonCocoerciveGame(GameProblem):
    """Two scalar players with f_1 = u^2/2 phi(v), f_2 = v^2/2 phi(u),
    phi(t) = mu + (ell - mu) sin^2 t.

    F(u, v) = (u phi(v), v phi(u)) is quasi-strongly monotone and
    star-cocoercive around (0, 0) but neither Lipschitz nor monotone.
    """

    kind = "sine"

    def __init__(self, mu=1.0, ell=4.0, noise_std=0.0):
        if not 0 < mu < ell:
            raise ValueError(f"need 0 < mu < ell, got mu={mu}, ell={ell}")
        self.mu, self.ell = float(mu), float(ell)
        self.noise_std = float(noise_std)
        self.layout = BlockLayout((1, 1))

    def phi(self, t):
        return self.mu + (self.ell - self.mu) * np.sin(t) ** 2

    def dphi(self, t):
        return (self.ell - self.mu) * np.sin(2 * t)

    def objective(self, i, x):
        x = self.layout.check(x)
        own, other = x[..., i], x[..., 1 - i]
        return 0.5 * own ** 2 * self.phi(other)

    def grad(self, i, x):
        x = self.layout.check(x)
        if i not in (0, 1):
            raise IndexError(f"player index {i} out of range for 2 players")
        return (x[..., i] * self.phi(x[..., 1 - i]))[..., None]

    def stoch_grad(self, i, x, draw):
        g = self.grad(i, x)
        if self.noise_std > 0:
            g = g + self.noise_std * draw.normal(1)
        return GradientSample(i, g, draw.draw_id)

    def jacobian(self, x):
        """DF at a single point x = (u, v)."""
        u, v = self.layout.check(x)
        return np.array([[self.phi(v), u * self.dphi(v)],
                         [v * self.dphi(u), self.phi(u)]])

    @property
    def deterministic(self):
        return self.noise_std == 0

    def noise_sigma(self):
        return (self.noise_std, self.noise_std)

    def equilibrium(self):
        return JointAction(self.layout, np.zeros(2))

    def analytic_params(self):
        # second derivative in the own variable is phi(.) which lies in [mu, ell]
        return ProblemParameters(self.mu, self.ell, (self.ell, self.ell), self.noise_sigma(),
                                 source="analytic")

    def metadata(self):
        return {"mu": self.mu, "ell": self.ell, "noise_std": self.noise_std}

    def to_dict(self):
        return {"kind": self.kind, "metadata": self.metadata(), "scalars": self.metadata(), "arrays": {}}

    @classmethod
    def from_dict(cls, data):
        s = data["scalars"]
        return cls(s["mu"], s["ell"], s["noise_std"])
