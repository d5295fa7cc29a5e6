from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from starindex.cli import load_geometry
from starindex.errors import OutOfWindow, ZeroElement
from starindex.superseries import SuperSeries, Window, key_deg

from strategies import super_series

ALG = load_geometry("cp1").alg
eta, etab = SuperSeries.eta(ALG, 0), SuperSeries.etabar(ALG, 0)
th, thb = SuperSeries.theta(ALG, 0), SuperSeries.thetabar(ALG, 0)
even = super_series(ALG, parity=0)
odd = super_series(ALG, parity=1)
anyp = super_series(ALG)


def test_odd_variables_anticommute():
    assert (th * th).is_zero()
    assert (th * thb + thb * th).is_zero()
    assert (eta * th - th * eta).is_zero()


def test_standard_degree():
    nu = SuperSeries.base(ALG, 1, r=1)
    assert (nu * eta * thb).degs() == [4]
    assert key_deg((1, (1, 0), 0b10, 0, 0)) == 4


def test_window_truncation_and_out_of_window():
    F = (eta * etab * eta + eta).with_window(Window(deg_max=2))
    assert F.truncated().degs() == [1]
    with pytest.raises(OutOfWindow):
        F.deg_component(3)


def test_fdeg_of_zero_raises():
    with pytest.raises(ZeroElement):
        SuperSeries.zero(ALG).fdeg()


def test_exp_log_roundtrip():
    x = (eta * etab).scale(ALG.atom("u")) + th * thb
    X = x.with_window(Window(deg_max=8))
    assert (X.exp() - 1).log1p().truncated() == X.truncated()


def test_odd_derivative_sign():
    F = th * thb
    assert F.d_odd(0) == thb
    assert F.d_odd(1) == -th


def test_time_calculus():
    F = eta.with_time(2, 1)          # eta e^{-2t} t
    assert F.d_t() == eta.with_time(2, 0) - eta.with_time(2, 1).scale(2)
    assert F.at_time_zero().is_zero()
    assert F.time_scale(Fraction(1, 2)) == eta.with_time(1, 1).scale(Fraction(1, 2))


@settings(max_examples=30, deadline=None)
@given(anyp, anyp, anyp)
def test_associative_and_distributive(a, b, c):
    assert (a * b) * c == a * (b * c)
    assert a * (b + c) == a * b + a * c


@settings(max_examples=30, deadline=None)
@given(st.one_of(even, odd), st.one_of(even, odd))
def test_koszul_supercommutativity(a, b):
    s = -1 if (a.parity() == 1 and b.parity() == 1) else 1
    assert a * b == (b * a).scale(s)


@settings(max_examples=30, deadline=None)
@given(anyp, anyp)
def test_deg_component_projection_and_cauchy_rule(a, b):
    for d in a.degs():
        p = a.deg_component(d)
        assert p.deg_component(d) == p
    prod = a * b
    for d in range(0, 16):
        cauchy = SuperSeries.zero(ALG)
        for i in a.degs():
            if d - i in b.degs():
                cauchy = cauchy + a.deg_component(i) * b.deg_component(d - i)
        assert prod.deg_component(d) == cauchy


@settings(max_examples=30, deadline=None)
@given(anyp, anyp)
def test_fdeg_subadditive(a, b):
    p = a * b
    if not p.is_zero():
        assert p.fdeg() >= a.fdeg() + b.fdeg()


@settings(max_examples=30, deadline=None)
@given(anyp, anyp)
def test_submodules_are_ideals(a, b):
    left = a * etab
    right = eta * a
    assert left.submodule_membership()["in_Jl"]
    assert (b * left).submodule_membership()["in_Jl"]
    assert right.submodule_membership()["in_Jr"]
    assert (right * b).submodule_membership()["in_Jr"]
