import math

import pytest

from pearlsgd import ProblemParameters, StepSizeSchedule, corollary_eta_solve, theoretical_gamma
from pearlsgd.schedules import (PreconditionError, contraction_factor, decreasing_gamma, decreasing_threshold,
                                first_decreasing_round, robot_gamma, zeta)

P = ProblemParameters(mu=1.0, ell=4.0, l_per_player=(2.0, 1.0))


def test_theoretical_gamma_closed_form():
    # kappa = 4, L_max = 2: 1 / (4 tau + 8 (tau - 1))
    for tau in (1, 2, 5, 20):
        assert theoretical_gamma(P, tau) == pytest.approx(1.0 / (4 * tau + 8 * (tau - 1)))
    assert theoretical_gamma(P, 1) == 1.0 / P.ell


def test_robot_variant_drops_factor_two():
    assert robot_gamma(P, 5) == pytest.approx(1.0 / (20 + 4 * 2.0 * 2.0))
    assert robot_gamma(P, 1) == theoretical_gamma(P, 1)
    assert robot_gamma(P, 5) > theoretical_gamma(P, 5)


def test_zeta_and_contraction_at_tau1_are_classical():
    gamma = 1.0 / P.ell
    assert zeta(P, gamma, 1) == pytest.approx(1.0)
    assert contraction_factor(P, gamma, 1) == pytest.approx(1 - P.mu / P.ell)


def test_zeta_at_theoretical_gamma_is_at_least_one():
    for tau in (1, 2, 4, 8, 50):
        assert zeta(P, theoretical_gamma(P, tau), tau) >= 1.0


def test_decreasing_schedule_phases():
    tau = 3
    thr = decreasing_threshold(P)
    p0 = first_decreasing_round(P)
    assert p0 == math.ceil(thr) and p0 - 1 < thr <= p0
    assert decreasing_gamma(P, tau, 0) == 1.0 / (P.ell * tau * (1 + 2 * P.q))
    assert decreasing_gamma(P, tau, p0 - 1) == decreasing_gamma(P, tau, 0)
    assert decreasing_gamma(P, tau, p0) == (2 * p0 + 1) / ((p0 + 1) ** 2 * tau * P.mu)
    tail = [decreasing_gamma(P, tau, p) for p in range(p0, p0 + 200)]
    assert all(a > b > 0 for a, b in zip(tail, tail[1:]))
    # the second phase starts no higher than the constant phase
    assert decreasing_gamma(P, tau, p0) <= decreasing_gamma(P, tau, p0 - 1)


def test_corollary_closed_form_root():
    eta, gamma = corollary_eta_solve(4 * math.e, 0.5, 1.0, 1, mu=1.0)
    assert eta == pytest.approx(math.e, rel=1e-12)
    assert gamma == pytest.approx(1.0 / (2 * math.e), rel=1e-12)


def test_corollary_root_satisfies_equation():
    T, q = 10_000.0, 0.3
    eta, _ = corollary_eta_solve(T, q, 2.0, 4)
    assert eta * math.log(eta) == pytest.approx(T / (2 * (1 + 2 * q)), rel=1e-11)


def test_corollary_precondition_names_minimum_T():
    with pytest.raises(PreconditionError, match="need T >"):
        corollary_eta_solve(50.0, 0.5, 10.0, 5)
    with pytest.raises(PreconditionError):
        corollary_eta_solve(5.0, 0.5, 1.0, 1)


def test_schedule_validation_and_resolution():
    with pytest.raises(ValueError):
        StepSizeSchedule("bogus")
    with pytest.raises(ValueError):
        StepSizeSchedule("constant")
    with pytest.raises(ValueError):
        StepSizeSchedule("corollary")
    assert not StepSizeSchedule.constant(0.1).needs_params()
    r = StepSizeSchedule("theoretical").resolve(P, 4)
    assert r(0) == r(99) == theoretical_gamma(P, 4)
    d = StepSizeSchedule("decreasing").resolve(P, 2)
    assert d.constant_gamma is None and d(0) == decreasing_gamma(P, 2, 0)
    c = StepSizeSchedule("corollary", total_iterations=100_000).resolve(P, 2)
    assert c.describe()["eta"] > P.kappa * 2
