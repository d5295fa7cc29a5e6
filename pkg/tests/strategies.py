"""Hypothesis strategies for coefficient expressions and super series."""

from hypothesis import strategies as st

from starindex.superseries import SuperSeries

small = st.integers(-3, 3).filter(lambda x: x != 0)


def coeff_exprs(alg, gens=None, max_terms=3, max_deg=2):
    """Random polynomials in the chart generators (and atoms if listed)."""
    names = gens or (alg.zn + alg.zbn)
    mono = st.tuples(small, st.lists(st.sampled_from(names), max_size=max_deg))

    def build(terms):
        out = alg.zero
        for c, factors in terms:
            t = alg.const(c)
            for n in factors:
                t = t * alg.gen(n)
            out = out + t
        return out
    return st.lists(mono, min_size=1, max_size=max_terms).map(build)


def super_series(alg, max_terms=3, max_ex=2, nu=(0, 1), parity=None, coeffs=None):
    """Random static super series; parity 0/1 restricts the odd degree."""
    m = alg.m
    if coeffs is None:
        coeffs = coeff_exprs(alg, max_terms=2, max_deg=1)
    masks = list(range(1 << (2 * m)))
    if parity is not None:
        masks = [b for b in masks if bin(b).count("1") % 2 == parity]
    key = st.tuples(st.integers(*nu), st.tuples(*[st.integers(0, max_ex)] * (2 * m)), st.sampled_from(masks))

    def build(terms):
        out = SuperSeries.zero(alg)
        for (r, ex, mask), c in terms:
            if not c.is_zero():
                out = out + SuperSeries(alg, {(r, ex, mask, 0, 0): c})
        return out
    return st.lists(st.tuples(key, coeffs), min_size=1, max_size=max_terms).map(build)
