"""Acceptance checks, one test per criterion; each prints a PASS/FAIL line."""

import random
from fractions import Fraction

import pytest
import sympy

from starindex.coeffalg import Scalar
from starindex.heatflow import (conjugation_check, limit_t_infinity, rescaled_closed_form,
                                rescaled_evolve_zero, commute_residuals)
from starindex.oscint import (IntegralValue, mu_star_integral, rescale_residual, rewrite_residual,
                              tau, th_identity_residuals, traceono_residual, transpose_residual)
from starindex.starprod import StarProduct, TraceDensity, order_bound_ok
from starindex.superseries import SuperSeries, Window
from starindex.suites import (antiholomorphic_part, assoc_residual, decaying_factor, holomorphic_part,
                              index_values, is_zero, nd_diff, poisson, random_fiber_poly, random_poly)


def _gens(geom):
    alg = geom.alg
    out = [alg.one, alg.z(0), alg.zb(0), alg.z(0) * alg.zb(0)]
    if "u" in alg.atom_names:
        out.append(alg.atom("u"))
    return out


def _star_soundness(geom, N, npairs, seed):
    sp = StarProduct(geom, N)
    alg = geom.alg
    rng = random.Random("%s:accept1:%s" % (seed, geom.name))
    gens = _gens(geom)
    checks = {}
    checks["assoc generators"] = all(is_zero(assoc_residual(sp, a, b, c))
                                     for a in gens for b in gens for c in gens)
    pairs = [(random_poly(alg, rng), random_poly(alg, rng)) for _ in range(npairs)]
    simple = [alg.z(0), alg.zb(0)]
    checks["assoc random"] = all(is_zero(assoc_residual(sp, f, g, simple[i % 2]))
                                 and is_zero(assoc_residual(sp, simple[i % 2], f, g))
                                 for i, (f, g) in enumerate(pairs))
    checks["C1 antisymmetric part"] = all(
        (sp.C(1, f, g) - sp.C(1, g, f) - poisson(geom, f, g) * alg.I).is_zero() for f, g in pairs)
    checks["order of C_r"] = order_bound_ok(sp.table(N))
    return checks


def test_criterion_01_star_soundness(flat, cp1, criterion):
    checks = {}
    for geom in (flat, cp1):
        for k, v in _star_soundness(geom, 4, 50, 0).items():
            checks["%s %s" % (geom.name, k)] = v
    criterion(1, checks)


def test_criterion_02_closed_forms(flat, cp1, criterion):
    alg = flat.alg
    z, zb = alg.z(0), alg.zb(0)
    p = StarProduct(flat, 3).star(zb, z)
    q = StarProduct(cp1, 3).star(cp1.alg.zb(0), cp1.alg.z(0))
    z1, zb1 = cp1.alg.z(0), cp1.alg.zb(0)
    criterion(2, {
        "flat zb*z = z zb + nu": is_zero(nd_diff(p, {0: z * zb, 1: alg.one})),
        "cp1 order 0": (q[0] - z1 * zb1).is_zero(),
        "cp1 order 1": (q[1] - (1 + z1 * zb1) ** 2).is_zero(),
    })


def test_criterion_03_berezin(flat, cp1, criterion):
    checks = {}
    for geom in (flat, cp1):
        sp = StarProduct(geom, 3)
        alg = geom.alg
        rng = random.Random("accept3:" + geom.name)
        ok_ba = ok_a = ok_b = True
        for _ in range(5):
            a = holomorphic_part(alg, random_poly(alg, rng))
            b = antiholomorphic_part(alg, random_poly(alg, rng))
            ok_ba &= is_zero(nd_diff(sp.berezin(b * a), sp.star(b, a)))
            ok_a &= is_zero(nd_diff(sp.berezin(a), {0: a}))
            ok_b &= is_zero(nd_diff(sp.berezin(b), {0: b}))
        checks[geom.name + " I(ba) = b*a"] = ok_ba
        checks[geom.name + " I(a) = a"] = ok_a
        checks[geom.name + " I(b) = b"] = ok_b
    criterion(3, checks)


def test_criterion_04_trace_density(flat_ctx, cp1_ctx, criterion):
    checks = {}
    for ctx in (flat_ctx, cp1_ctx):
        d = ctx.density
        geom = ctx.geom
        r, lead = d.leading()
        checks[geom.name + " leading"] = r == -geom.m and (lead - geom.det).is_zero()
        rng = random.Random("accept4:" + geom.name)
        checks[geom.name + " transpose residual"] = all(
            is_zero(d.trace_residual(random_poly(ctx.alg, rng))) for _ in range(20))
        checks[geom.name + " within nu^N"] = max(d.rho) <= ctx.N
    rho = flat_ctx.density.rho
    checks["flat rho = 1/nu"] = set(rho) == {-1} and (rho[-1] - 1).is_zero()
    criterion(4, checks)


def test_criterion_05_super_identities(flat_ctx, cp1_ctx, criterion):
    checks = {}
    for ctx in (flat_ctx, cp1_ctx):
        ss, n = ctx.ss, ctx.geom.name
        checks[n + " chi*chi"] = ss.star(ss.chi, ss.chi).is_zero()
        checks[n + " chi~*chi~"] = ss.star(ss.chit, ss.chit).is_zero()
        sig = ss.phi + ss.omega_hat.scale(ctx.alg.I)
        checks[n + " [chi,chi~] = phi + i omega"] = (ss.supercommutator(ss.chi, ss.chit) - sig).is_zero()
        checks[n + " L_sigma closed form"] = (ss.sigma_operator() - ss.left_op(ss.sigma)).truncated(ss.D).is_zero()
        res = ss.superdens_residuals()
        checks[n + " six density equations"] = len(res) == 6 * ctx.alg.m and is_zero(res)
        geom = ctx.geom
        # X + X' = log det g, so its gradient must be that of log det g
        checks[n + " e^{X+X'} = g"] = all(
            (geom.log_det_gradient(i) * geom.det - geom.det.partial(i)).is_zero() for i in range(2 * geom.m))
        checks[n + " phitheta"] = all(ss.phitheta_residual(k).is_zero() for k in range(geom.m))
        checks[n + " berdx"] = ss.berdx_residual().is_zero()
    criterion(5, checks)


def test_criterion_06_kspace(flat_ctx, cp1_ctx, criterion):
    ss = cp1_ctx.ss
    assert (cp1_ctx.N, cp1_ctx.D) == (3, 8)
    K = ss.epsilon()
    conds = dict(ss.k_conditions(K))
    kap = ss.kappa()
    mem = kap.submodule_membership()
    criterion(6, {
        "three condition families": is_zero(conds) and len(conds) >= 3,
        "harmonic": ss.harmonic_residual(K).is_zero(),
        "deg-0 part is e^{-S}": (K.P.deg_component(0) - 1).is_zero(),
        "kappa in J_l": mem["in_Jl"],
        "kappa in J_r": mem["in_Jr"],
        "kappa fdeg >= 1": kap.fiber_degree_min() >= 1,
        "kappa nu >= -1": kap.nu_range()[0] >= -1,
        "kappa nonzero on cp1": not kap.is_zero(),
        "flat kappa = 0": flat_ctx.ss.kappa().is_zero(),
    })


def test_criterion_07_homomorphisms(cp1_ctx, criterion):
    ss, alg = cp1_ctx.ss, cp1_ctx.alg
    sp = ss._base_star()
    rng = random.Random("accept7")
    hom = lift = True
    pairs = [(random_poly(alg, rng, deg=2), random_poly(alg, rng, deg=2)) for _ in range(20)]
    for f, g in pairs:
        fg = sp.star(f, g)
        af = ss.alpha(f)
        hom &= (ss.alpha(fg) - ss.star(af, ss.alpha(g))).is_zero()
        lift &= (ss.left_on_K(af, ss.solve_K(g)) - ss.solve_K(fg).P).is_zero()
    kc = True
    for f, g in pairs[:2]:
        kf, Kg = ss.kappa_f(f), ss.solve_K(g)
        comm = nd_diff(sp.star(f, g), sp.star(g, f))
        kc &= (ss.left_on_K(kf, Kg) - ss.right_on_K(kf, Kg) - ss.solve_K(comm).P).is_zero()
    criterion(7, {"alpha homomorphism": hom, "alpha(f)*K_g = K_{f*g}": lift, "kcomm": kc})


def test_criterion_08_heat_flow(flat_ctx, cp1_ctx, criterion):
    fl = cp1_ctx.flow
    ss = cp1_ctx.ss
    eps = ss.epsilon().P
    criterion(8, {
        "residual": fl.residual().is_zero(),
        "F^0 = e^{(e^{-t}-1)S}": (fl.P.deg_component(0) - 1).is_zero()
        and (fl.K - (ss.S.with_time(1, 0) - ss.S)).is_zero(),
        "k = 0 implies l = 0": fl.time_structure_ok(),
        "F(0) = 1": (fl.at_zero() - 1).is_zero(),
        "limit is epsilon": (limit_t_infinity(fl.P) - eps).truncated(ss.win).is_zero(),
        "(L_W - R_W)F = 0": is_zero(commute_residuals(fl)),
        "flat closed form": (flat_ctx.flow.P - 1).is_zero() and flat_ctx.flow.residual().is_zero(),
    })


def _h_choices(geom):
    alg = geom.alg
    m = geom.m
    out = [[[-x for x in row] for row in geom.g]]
    for a, b in ((1, 1), (2, 5), (-3, 7), (1, 7)):
        out.append([[geom.g[k][l] * a + (alg.const(b) if k == l else alg.zero) for l in range(m)]
                    for k in range(m)])
    return out


def test_criterion_09_oscillatory_calculus(flat_ctx, cp1_ctx, criterion):
    checks = {}
    for ctx in (flat_ctx, cp1_ctx):
        geom, ss, alg = ctx.geom, ctx.ss, ctx.alg
        n = geom.name
        rng = random.Random("accept9:" + n)
        hs = _h_choices(geom)
        ids = rew = resc = True
        for i in range(50):
            h = hs[i % len(hs)]
            G = random_fiber_poly(ss, rng)
            ids &= is_zero(th_identity_residuals(geom, h, G))
            alpha = [[(ss.theta(k) * ss.thetabar(l)).scale(random_poly(alg, rng, deg=1))
                      for l in range(alg.m)] for k in range(alg.m)]
            rew &= rewrite_residual(geom, h, alpha, G).is_zero()
            if i < 10:
                resc &= all(rescale_residual(geom, h, G, s).is_zero() for s in (2, Fraction(1, 3)))
        checks[n + " nine identities"] = ids
        checks[n + " rewrite"] = rew
        checks[n + " rescale at 2 and 1/3"] = resc
    ss, alg = cp1_ctx.ss, cp1_ctx.alg
    rng = random.Random("accept9:integrals")
    tr = tc = True
    variables = [(kind, j) for kind in "ceo" for j in range(2 * alg.m)]
    for _ in range(4):
        f = random_fiber_poly(ss, rng, terms=2, deg=2).truncated(Window(deg_max=ss.D))
        G = random_fiber_poly(ss, rng, coeff=decaying_factor(alg)).truncated(Window(deg_max=ss.D))
        tr &= all(transpose_residual(ss, v, f, G).is_zero() for v in variables)
        G2 = random_fiber_poly(ss, rng, coeff=decaying_factor(alg, 4 + ss.D)).truncated(ss.win)
        tc &= traceono_residual(ss, f, G2).is_zero()
    checks["cp1 transpose adjointness"] = tr
    checks["cp1 trace vanishing"] = tc
    criterion(9, checks)


def test_criterion_10_rescaling(cp1_ctx, criterion):
    ss, cv = cp1_ctx.ss, cp1_ctx.curv
    Q = rescaled_evolve_zero(ss, cv)
    H = cv.H()
    t = SuperSeries.base(ss.alg, 1).with_time(0, 1)
    expected_H = t + cv.Rhat[0][0].with_time(0, 2).scale(Fraction(1, 2))
    criterion(10, {
        "conjugation s=1": conjugation_check(cp1_ctx.flow, 1).is_zero(),
        "conjugation s=1/2": conjugation_check(cp1_ctx.flow, Fraction(1, 2)).is_zero(),
        "G(0,t) closed form": (Q - rescaled_closed_form(ss, cv)).is_zero(),
        "H = t + t^2 Rhat / 2": (H[0][0] - expected_H).is_zero(),
        "Rhat^2 = 0": (cv.Rhat[0][0] * cv.Rhat[0][0]).is_zero(),
    })


def _fubini_study_oracle():
    """int omega_-1 and rho / omega_-1 on CP^1 by direct radial integration."""
    z, zb, r = sympy.symbols("z zb r", positive=True)
    pot = sympy.log(1 + z * zb)
    g = sympy.simplify(sympy.diff(pot, z, zb))
    # omega_-1 = i g dz ^ dzb = 2 g dx ^ dy; polar: g = 1/(1 + r^2)^2
    g_r = g.subs({z: r, zb: r})
    int_omega = sympy.integrate(2 * g_r * 2 * sympy.pi * r, (r, 0, sympy.oo))
    ricci = -sympy.I * sympy.diff(sympy.log(g), z, zb)
    ratio = sympy.simplify(ricci / (sympy.I * g))
    return int_omega, ratio


def test_criterion_11_index_identity(cp1_ctx, criterion):
    int_omega, ratio = _fubini_study_oracle()
    assert int_omega == 2 * sympy.pi
    assert ratio == 2
    # -i int omega / nu - i int rho / 2, in units of pi
    expected = IntegralValue({(-1, 0, 0): Scalar(0, -2), (0, 0, 0): Scalar(0, -2)})
    v = index_values(cp1_ctx)
    checks = {}
    for k in ("mu_star", "tau", "flow", "rescaled", "todd", "ahat"):
        checks[k + " = -2 pi i/nu - 2 pi i"] = v[k] == expected
        checks[k + " nu^1..nu^3 vanish"] = all(v[k].nu_coefficient(r) == 0 for r in (1, 2, 3))
    checks["flow t-independent"] = is_zero(v["_flow_t_residual"])
    checks["G(0,t) integral t-independent"] = v["_rescaled_static"]
    checks["fiber kernel"] = is_zero(v["_fiber_residual"])
    checks["rho = i tr R"] = is_zero(v["_rho_minus_itrR"])
    criterion(11, checks)


def test_criterion_12_negative_controls(flat, cp1, cp1_ctx, criterion):
    checks = {}
    for geom in (flat, cp1):
        # a constant shift is d dbar of a shifted potential and stays associative
        bad = geom.perturbed_metric(geom.alg.z(0) * geom.alg.zb(0) * Fraction(1, 3))
        sp = StarProduct(bad, 4)
        gens = _gens(bad)
        broken = any(not is_zero(assoc_residual(sp, a, b, c)) for a in gens for b in gens for c in gens)
        checks[geom.name + " perturbed metric breaks associativity"] = broken
    ss = cp1_ctx.ss
    good = mu_star_integral(ss, cp1_ctx.density).truncated(3)
    off = mu_star_integral(ss, TraceDensity(cp1_ctx.sp, lead_factor=2)).truncated(3)
    t1 = tau(ss).truncated(3)
    checks["unperturbed lead constant matches tau(1)"] = good == t1
    checks["perturbed lead constant detected"] = not (off == t1)
    criterion(12, checks)


@pytest.mark.parametrize("geometry", ["flat"])
def test_run_suite_flat_all_pass(geometry):
    from starindex.cli import load_geometry
    from starindex.suites import SUITES, Context, run_checks
    recs = run_checks(Context(load_geometry(geometry), N=3, D=6), SUITES)
    assert all(r["status"] in ("pass", "skip") for r in recs), [r for r in recs if r["status"] not in ("pass", "skip")]


def test_run_suite_cp1_all_pass(cp1_ctx):
    from starindex.suites import SUITES, run_checks
    recs = run_checks(cp1_ctx, SUITES)
    assert all(r["status"] == "pass" for r in recs), [r for r in recs if r["status"] != "pass"]
