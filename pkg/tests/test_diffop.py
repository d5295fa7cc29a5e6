import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from starindex.cli import load_geometry
from starindex.diffop import SuperDiffOp, compose, conjugate_by_exp, supercommutator, transpose
from starindex.errors import MixedParity
from starindex.superseries import SuperSeries, Window

from strategies import super_series

ALG = load_geometry("cp1").alg
W = Window(deg_max=10)
VARS = [("c", 0), ("c", 1), ("e", 0), ("e", 1), ("o", 0), ("o", 1)]
eta, etab = SuperSeries.eta(ALG, 0), SuperSeries.etabar(ALG, 0)
th, thb = SuperSeries.theta(ALG, 0), SuperSeries.thetabar(ALG, 0)


def _op(terms):
    out = SuperDiffOp(ALG, {}, W)
    for C, vs in terms:
        A = SuperDiffOp.mult(C)
        for v in vs:
            A = compose(A, SuperDiffOp.deriv(ALG, v), W)
        out = out + A
    return out


ops = st.lists(st.tuples(super_series(ALG, max_terms=2, max_ex=1), st.lists(st.sampled_from(VARS), max_size=2)),
               min_size=1, max_size=2).map(_op)
series = super_series(ALG, max_terms=3, max_ex=2)


def test_elementary_derivatives():
    assert SuperDiffOp.deriv(ALG, ("e", 0)).apply(eta * eta) == eta.scale(2)
    assert SuperDiffOp.deriv(ALG, ("o", 1)).apply(th * thb) == -th
    u = SuperSeries.base(ALG, ALG.atom("u"))
    assert SuperDiffOp.deriv(ALG, "z").apply(u) == SuperSeries.base(ALG, -ALG.zb(0) * ALG.atom("u") ** 2)


def test_canonical_commutation():
    d_eta = SuperDiffOp.deriv(ALG, ("e", 0))
    d_th = SuperDiffOp.deriv(ALG, ("o", 0))
    one = SuperDiffOp.identity(ALG)
    assert supercommutator(d_eta, SuperDiffOp.mult(eta)) == one
    assert supercommutator(d_th, SuperDiffOp.mult(th)) == one


def test_supercommutator_needs_homogeneous_parity():
    mixed = SuperDiffOp.mult(th + eta)
    with pytest.raises(MixedParity):
        supercommutator(mixed, mixed)


@settings(max_examples=30, deadline=None)
@given(ops, ops, series)
def test_compose_matches_apply(A, B, F):
    assert compose(A, B).apply(F) == A.apply(B.apply(F))


@settings(max_examples=30, deadline=None)
@given(ops, ops, ops, series)
def test_compose_associative(A, B, C, F):
    assert compose(compose(A, B), C) == compose(A, compose(B, C))


@settings(max_examples=30, deadline=None)
@given(ops)
def test_transpose_involution(A):
    assert transpose(transpose(A)) == A


@settings(max_examples=30, deadline=None)
@given(ops, ops)
def test_transpose_antihomomorphism(A, B):
    pa, pb = A.parity(), B.parity()
    assume(pa is not None and pb is not None)
    s = -1 if (pa and pb) else 1
    assert transpose(compose(A, B)) == compose(transpose(B), transpose(A)).scale(s)


@settings(max_examples=30, deadline=None)
@given(ops)
def test_deg_components_reconstruct(A):
    total = SuperDiffOp(ALG, {}, A.window)
    for _, part in A.components().items():
        total = total + part
    assert total == A


@settings(max_examples=20, deadline=None)
@given(ops, series, super_series(ALG, max_terms=2, max_ex=1, parity=0))
def test_conjugated_apply(A, F, K):
    # only nilpotent K so that both sides are finite
    K = K.mul_monomial(mask=0b11)
    assume(not K.is_zero())
    direct = K.exp() * A.apply((-K).exp() * F)
    assert A.apply(F, conj=K) == direct
    assert conjugate_by_exp(A, K).apply(F) == direct
