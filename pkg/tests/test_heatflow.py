from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from starindex.cli import load_geometry
from starindex.errors import DivergentTerm, ZeroK
from starindex.heatflow import (CurvatureData, etk_solve, evolve, integrate_against_euler, lambda_component,
                                lambda_max_degree, limit_t_infinity, rescale_operator, rescaled_closed_form,
                                rescaled_evolve_zero, rescaled_residual, sigma_zero_formula)
from starindex.superseries import SuperSeries
from starindex.superstar import SuperStar

CP1 = load_geometry("cp1")
SS = SuperStar(CP1, 4)
FLOW = evolve(SS)
ALG = CP1.alg

rationals = st.fractions(min_value=-5, max_value=5, max_denominator=4).filter(lambda x: x != 0)


def _poly_deriv(p):
    return [i * c for i, c in enumerate(p)][1:] + [Fraction(0)]


@settings(max_examples=60, deadline=None)
@given(rationals, st.integers(0, 6))
def test_etk_solve_satisfies_ode(k, l):
    # (e^{-kt} p)' = e^{-kt} (p' - k p) must equal e^{-kt} t^l
    p = etk_solve(k, l)
    lhs = [a - k * b for a, b in zip(_poly_deriv(p), p)]
    assert lhs == [Fraction(1 if i == l else 0) for i in range(l + 1)]


def test_etk_solve_rejects_zero():
    with pytest.raises(ZeroK):
        etk_solve(0, 2)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 3), st.integers(0, 3), st.integers(0, 3), st.integers(0, 2))
def test_integrate_against_euler(a, b, k, l):
    # dQ/dt = -E Q + R with Q(0) = 0, E = holomorphic fiber degree
    R = SuperSeries.monomial(ALG, eta=(a,), etabar=(b,)).with_time(k, l)
    Q = integrate_against_euler(SS, R)
    assert (Q.d_t() + Q.euler_apply("E") - R).is_zero()
    assert Q.at_time_zero().is_zero()


def test_flow_solution_properties():
    assert FLOW.residual().is_zero()
    assert FLOW.time_structure_ok()
    assert (FLOW.at_zero() - 1).is_zero()
    assert (limit_t_infinity(FLOW.P) - SS.epsilon().P).truncated(SS.win).is_zero()


def test_log_of_flow_has_nu_filtration_minus_one():
    G = FLOW.K + (FLOW.P - 1).log1p()
    assert G.nu_range()[0] >= -1


def test_limit_rejects_secular_terms():
    with pytest.raises(DivergentTerm):
        limit_t_infinity(SS.eta(0).with_time(0, 1))


def test_flat_flow_is_gaussian():
    flat = SuperStar(load_geometry("flat"), 6)
    fl = evolve(flat)
    assert (fl.P - 1).is_zero() and fl.residual().is_zero()


def test_lambda_grading():
    op = SS.sigma_operator()
    assert lambda_max_degree(op) == 2
    assert (lambda_component(op, 2) - sigma_zero_formula(SS)).is_zero()


def test_rescale_operator_identity_at_one():
    op = SS.sigma_operator()
    assert (rescale_operator(op, 1) - op).is_zero()


def test_curvature_and_h_matrix():
    cv = CurvatureData(SS)
    u = ALG.atom("u")
    R = cv.Rhat[0][0]
    assert R == (SS.theta(0) * SS.thetabar(0)).scale(u ** 2 * 2)
    t = SuperSeries.base(ALG, 1).with_time(0, 1)
    H = cv.H()[0][0]
    nil = H - t
    assert (nil * nil).is_zero() and not nil.is_zero()


def test_rescaled_flow_two_routes():
    cv = CurvatureData(SS)
    Q = rescaled_evolve_zero(SS, cv)
    assert (Q - rescaled_closed_form(SS, cv)).is_zero()
    assert rescaled_residual(SS, Q).is_zero()
