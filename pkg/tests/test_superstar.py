from hypothesis import given, settings

from starindex.cli import load_geometry
from starindex.superstar import SuperStar
from starindex.suites import is_zero

from strategies import coeff_exprs, super_series

CP1 = load_geometry("cp1")
SS = SuperStar(CP1, 4)
ALG = CP1.alg
fiber = super_series(ALG, max_terms=3, max_ex=2).map(lambda F: F.truncated(SS.win))


def _generators():
    u = SS.base(ALG.atom("u"))
    return [SS.base(ALG.z(0)), SS.base(ALG.zb(0)), u, SS.eta(0), SS.etabar(0), SS.theta(0), SS.thetabar(0)]


def test_generator_identities():
    assert SS.star(SS.chi, SS.chi).is_zero()
    assert SS.star(SS.chit, SS.chit).is_zero()
    assert (SS.supercommutator(SS.chi, SS.chit) - SS.sigma).is_zero()
    # the degree-zero part of sigma is -S
    assert (SS.sigma.deg_component(0) + SS.S.deg_component(0)).is_zero()


def test_superpotential_odd_gradient():
    # dX/dtheta = nu^-1 g thetabar
    assert SS.X.d_odd(0) == SS.thetabar(0).scale(CP1.g[0][0]).nu_shift(-1)


def test_separation_in_the_fiber():
    F = SS.eta(0) * SS.base(ALG.zb(0))
    assert SS.star(SS.eta(0), F) == SS.eta(0) * F
    assert SS.star(F, SS.etabar(0)) == F * SS.etabar(0)


@settings(max_examples=10, deadline=None)
@given(fiber)
def test_left_and_right_supercommute(F):
    gens = _generators()
    for f in gens:
        for g in gens:
            a = SS.left_apply(f, SS.right_apply(g, F))
            b = SS.right_apply(g, SS.left_apply(f, F))
            s = -1 if (f.parity() and g.parity()) else 1
            assert (a - b.scale(s)).truncated(SS.win).is_zero()


@settings(max_examples=10, deadline=None)
@given(fiber)
def test_sigma_ranges(F):
    assert SS.sigma_operator().apply(F, window=SS.win).submodule_membership()["in_Jr"]
    assert SS.sigma_right_operator().apply(F, window=SS.win).submodule_membership()["in_Jl"]


@settings(max_examples=10, deadline=None)
@given(fiber)
def test_filtration_of_left_action(F):
    if F.is_zero():
        return
    for f in _generators():
        out = SS.left_apply(f, F)
        if not out.is_zero():
            assert out.fdeg() >= f.fdeg() + F.fdeg()


@settings(max_examples=10, deadline=None)
@given(fiber)
def test_berezin_roundtrip(F):
    assert (SS.berezin_inverse(SS.berezin(F)) - F).truncated(SS.win).is_zero()


@settings(max_examples=8, deadline=None)
@given(coeff_exprs(ALG, gens=["z1", "zb1", "u"], max_terms=2, max_deg=2))
def test_solve_k_conditions(f):
    K = SS.solve_K(f)
    assert is_zero(SS.k_conditions(K))
    assert SS.harmonic_residual(K).is_zero()
    # the fiber-constant part of K_f is f itself
    assert (K.P.zeta().deg_component(0) - SS.base(f)).is_zero()


def test_kappa_lies_in_both_submodules():
    k = SS.kappa()
    mem = k.submodule_membership()
    assert mem["in_Jl"] and mem["in_Jr"]
    assert k.fiber_degree_min() >= 1 and k.nu_range()[0] >= -1


def test_flat_kappa_vanishes():
    assert SuperStar(load_geometry("flat"), 6).kappa().is_zero()
