from fractions import Fraction

import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st

from starindex.cli import load_geometry, parse_geometry
from starindex.coeffalg import Scalar
from starindex.errors import Divergent, NoClosedForm, PreconditionViolated, SingularH, TDependenceResidual
from starindex.oscint import (IntegralValue, T_h, ahat_coeffs, base_integral, bernoulli_coeffs, coeff_integral,
                              rescale_residual, rewrite_residual, th_identity_residuals, todd_coeffs,
                              traceono_residual, transpose_residual)
from starindex.superseries import SuperSeries, Window
from starindex.superstar import SuperStar
from starindex.suites import is_zero

from strategies import coeff_exprs, super_series

FLAT = load_geometry("flat")
CP1 = load_geometry("cp1")
SS = SuperStar(CP1, 6)
ALG = CP1.alg
u = ALG.atom("u")
TOP = SuperSeries.theta(ALG, 0) * SuperSeries.thetabar(ALG, 0)


def _h(geom, a, b):
    alg = geom.alg
    return [[geom.g[0][0] * a + alg.const(b)]]


h_params = st.sampled_from([(-1, 0), (1, 1), (2, 5), (-3, 7), (1, 0)])


@pytest.mark.parametrize("a,k,j", [(0, 2, 0), (0, 3, 1), (1, 4, 0), (2, 5, 2), (1, 3, 3)])
def test_radial_moments_match_sympy(a, k, j):
    s, y = sympy.symbols("s y", positive=True)
    integrand = s ** a / (1 + s) ** k * sympy.log(1 + s) ** j
    # substitute s = e^y - 1 so sympy sees exponential moments
    sub = sympy.expand(integrand.subs(s, sympy.exp(y) - 1) * sympy.exp(y))
    moment = sympy.integrate(sympy.powsimp(sympy.expand_log(sub, force=True)), (y, 0, sympy.oo))
    c = ALG.z(0) ** a * ALG.zb(0) ** a * u ** k * ALG.atom("L") ** j
    got = coeff_integral(ALG, c)
    # int over C of |z|^2a f(|z|^2) dx dy = pi int_0^oo s^a f(s) ds, and dz^dzb = -2i dx dy
    assert got == Scalar(0, -2) * Scalar(Fraction(str(moment)))


def test_angular_terms_vanish_and_divergence():
    assert coeff_integral(ALG, ALG.z(0) * u ** 3).re == 0 and coeff_integral(ALG, ALG.z(0) * u ** 3).im == 0
    with pytest.raises(Divergent):
        coeff_integral(ALG, u)


def test_base_integral_preconditions():
    with pytest.raises(PreconditionViolated):
        base_integral(SuperSeries.eta(ALG, 0) * TOP.scale(u ** 2))
    fa = FLAT.alg
    with pytest.raises(Divergent):
        base_integral(SuperSeries.theta(fa, 0) * SuperSeries.thetabar(fa, 0))
    c2 = parse_geometry("[chart]\ndim = 2\n[potential]\n-1 = z1*zb1 + z2*zb2\n").alg
    with pytest.raises(NoClosedForm):
        base_integral(SuperSeries.base(c2, 1))
    omega = TOP.scale(u ** 2 * ALG.I)
    assert base_integral(omega) == IntegralValue({(0, 0, 0): Scalar(2)})


def test_integral_value_time_dependence():
    v = IntegralValue({(0, 1, 0): Scalar(1), (1, 0, 0): Scalar(2)})
    assert not v.is_static()
    assert v.nu_coefficient(1) == Scalar(2)
    with pytest.raises(TDependenceResidual):
        v.nu_coefficient(0)


def test_series_coefficients_match_sympy():
    x = sympy.symbols("x")
    n = 6
    for coeffs, f in ((todd_coeffs(n), x / (1 - sympy.exp(-x))),
                      (ahat_coeffs(n), (x / 2) / sympy.sinh(x / 2)),
                      (bernoulli_coeffs(n), x / (sympy.exp(x) - 1))):
        ser = sympy.series(f, x, 0, n + 1).removeO()
        assert [Fraction(str(ser.coeff(x, i))) for i in range(n + 1)] == coeffs


def test_singular_h():
    with pytest.raises(SingularH):
        T_h(CP1, [[ALG.zero]], SuperSeries.base(ALG, 1))


def test_gaussian_moments():
    # T_h(1) = det(g h^-1); T_h(eta etabar) = nu h^-1 T_h(1)
    h = _h(CP1, -1, 0)
    one = T_h(CP1, h, SuperSeries.base(ALG, 1))
    assert one == SuperSeries.base(ALG, -1)
    second = T_h(CP1, h, SuperSeries.eta(ALG, 0) * SuperSeries.etabar(ALG, 0))
    assert second == SuperSeries.base(ALG, (1 + ALG.z(0) * ALG.zb(0)) ** 2, r=1)


@pytest.mark.parametrize("geom", [FLAT, CP1], ids=["flat", "cp1"])
@settings(max_examples=15, deadline=None)
@given(data=st.data())
def test_nine_identities(geom, data):
    h = _h(geom, *data.draw(h_params))
    G = data.draw(super_series(geom.alg, max_terms=3, max_ex=2, nu=(-1, 1)))
    assert is_zero(th_identity_residuals(geom, h, G))


@pytest.mark.parametrize("geom", [FLAT, CP1], ids=["flat", "cp1"])
@settings(max_examples=15, deadline=None)
@given(data=st.data())
def test_rewrite_and_rescale(geom, data):
    alg = geom.alg
    h = _h(geom, *data.draw(h_params))
    G = data.draw(super_series(alg, max_terms=3, max_ex=2, nu=(-1, 1)))
    c = data.draw(coeff_exprs(alg, max_terms=2, max_deg=1))
    alpha = [[(SuperSeries.theta(alg, 0) * SuperSeries.thetabar(alg, 0)).scale(c)]]
    assert rewrite_residual(geom, h, alpha, G).is_zero()
    s = data.draw(st.sampled_from([2, Fraction(1, 3), Fraction(-3, 2)]))
    assert rescale_residual(geom, h, G, s).is_zero()


# each fiber contraction costs a factor u^-2, so decay must grow with the window
decaying = super_series(ALG, max_terms=3, max_ex=2, coeffs=coeff_exprs(ALG, max_terms=2, max_deg=1)).map(
    lambda G: G.scale(u ** (4 + SS.D)).truncated(Window(deg_max=SS.D)))
VARS = [(kind, j) for kind in "ceo" for j in range(2)]


@settings(max_examples=10, deadline=None)
@given(super_series(ALG, max_terms=2, max_ex=1), decaying, st.sampled_from(VARS))
def test_transpose_adjointness(f, G, var):
    assert transpose_residual(SS, var, f, G).is_zero()


@settings(max_examples=8, deadline=None)
@given(super_series(ALG, max_terms=2, max_ex=1), super_series(ALG, max_terms=2, max_ex=2))
def test_trace_vanishes(f, G):
    G = G.scale(u ** (4 + SS.D)).truncated(SS.win)
    assert traceono_residual(SS, f, G).is_zero()
