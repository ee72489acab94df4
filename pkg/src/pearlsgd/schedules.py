"""Step-size rules for PEARL-SGD. All rules hold gamma fixed within a round."""
import math
from dataclasses import dataclass
from typing import Optional

from scipy import optimize

KINDS = ("constant", "theoretical", "theoretical-robot", "corollary", "decreasing")


class PreconditionError(ValueError):
    pass


def theoretical_gamma(params, tau):
    """Largest constant step 1 / (ell tau + 2 (tau - 1) L_max sqrt(kappa))."""
    return 1.0 / (params.ell * tau + 2.0 * (tau - 1) * params.l_max * math.sqrt(params.kappa))


def robot_gamma(params, tau):
    """1 / (ell tau + L_max (tau - 1) sqrt(kappa)), the variant used for the robot experiment."""
    return 1.0 / (params.ell * tau + (tau - 1) * params.l_max * math.sqrt(params.kappa))


def zeta(params, gamma, tau):
    return 2.0 - gamma * params.ell * tau - 2.0 * (tau - 1) * gamma * params.l_max * math.sqrt(params.kappa / 3.0)


def contraction_factor(params, gamma, tau):
    """Per-round factor 1 - gamma tau mu zeta of the linear rate."""
    return 1.0 - gamma * tau * params.mu * zeta(params, gamma, tau)


def decreasing_threshold(params):
    """Real threshold 2(1 + 2q) kappa; rounds p below it use the constant phase."""
    return 2.0 * (1.0 + 2.0 * params.q) * params.kappa


def first_decreasing_round(params):
    return math.ceil(decreasing_threshold(params))


def decreasing_gamma(params, tau, p):
    if p < decreasing_threshold(params):
        return 1.0 / (params.ell * tau * (1.0 + 2.0 * params.q))
    return (2.0 * p + 1.0) / ((p + 1.0) ** 2 * tau * params.mu)


def corollary_eta_solve(T, q, kappa, tau, mu=None, rtol=1e-12):
    """Solve eta log eta = T / (2(1 + 2q)) for eta on [e, T] by bisection.

    Returns (eta, gamma) with gamma = 1/(mu eta (1 + 2q)) when ``mu`` is given,
    else (eta, None). Raises PreconditionError when the solution does not
    satisfy eta > kappa tau.
    """
    target = T / (2.0 * (1.0 + 2.0 * q))
    f = lambda eta: eta * math.log(eta) - target
    lo, hi = math.e, float(T)

    def min_T():
        b = kappa * tau
        return 2.0 * (1.0 + 2.0 * q) * b * math.log(b) if b > math.e else 2.0 * (1.0 + 2.0 * q) * math.e

    if f(lo) > 0 or hi < lo:
        raise PreconditionError(f"T={T} is too small: eta log eta = {target:.6g} has no root in [e, T]; "
                                f"need T > {min_T():.6g}")
    if f(lo) == 0:
        eta = lo
    elif f(hi) == 0:
        eta = hi
    else:
        eta = optimize.bisect(f, lo, hi, rtol=rtol, xtol=1e-300, maxiter=2000)
    if eta <= kappa * tau:
        raise PreconditionError(f"solved eta={eta:.6g} does not exceed kappa*tau={kappa * tau:.6g}; "
                                f"need T > {min_T():.6g}")
    gamma = None if mu is None else 1.0 / (mu * eta * (1.0 + 2.0 * q))
    return eta, gamma


@dataclass(frozen=True)
class StepSizeSchedule:
    """A step-size rule; ``resolve`` binds it to problem constants and tau.

    ``gamma`` is used by the constant rule, ``total_iterations`` by the
    corollary rule.
    """

    kind: str = "theoretical"
    gamma: Optional[float] = None
    total_iterations: Optional[int] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown schedule {self.kind!r}; choose from {', '.join(KINDS)}")
        if self.kind == "constant" and not (self.gamma is not None and self.gamma > 0):
            raise ValueError("constant schedule needs gamma > 0")
        if self.kind == "corollary" and not (self.total_iterations and self.total_iterations > 0):
            raise ValueError("corollary schedule needs total_iterations > 0")

    @classmethod
    def constant(cls, gamma):
        return cls("constant", gamma=float(gamma))

    def needs_params(self):
        return self.kind != "constant"

    def resolve(self, params, tau):
        return ResolvedSchedule(self, params, int(tau))

    def to_dict(self):
        return {"kind": self.kind, "gamma": self.gamma, "total_iterations": self.total_iterations}


class ResolvedSchedule:
    def __init__(self, schedule, params, tau):
        self.schedule, self.params, self.tau = schedule, params, tau
        self.eta = None
        kind = schedule.kind
        if kind == "constant":
            self._const = schedule.gamma
        elif kind == "theoretical":
            self._const = theoretical_gamma(params, tau)
        elif kind == "theoretical-robot":
            self._const = robot_gamma(params, tau)
        elif kind == "corollary":
            self.eta, self._const = corollary_eta_solve(schedule.total_iterations, params.q,
                                                        params.kappa, tau, params.mu)
        else:
            self._const = None

    @property
    def constant_gamma(self):
        """The single gamma of a constant rule, None for the decreasing rule."""
        return self._const

    def __call__(self, p):
        if self._const is not None:
            return self._const
        return decreasing_gamma(self.params, self.tau, p)

    def describe(self):
        out = {"kind": self.schedule.kind, "tau": self.tau, "gamma": self._const}
        if self.eta is not None:
            out["eta"] = self.eta
        if self.schedule.kind == "decreasing":
            out["threshold_round"] = first_decreasing_round(self.params)
            out["gamma_initial"] = decreasing_gamma(self.params, self.tau, 0)
        return out
