"""Oscillatory symbols e^{-h} G, the fiberwise Gaussian integral T_h, chart
integration on the base and the two sides of the index identity.

Integrals over a chart are returned as IntegralValue, an exact multiple of pi
with Gaussian-rational coefficients of nu^r e^{-kt} t^l.
"""

import itertools
from fractions import Fraction
from math import comb, factorial

from .coeffalg import CoeffExpr, Scalar
from .errors import (Divergent, NoClosedForm, PreconditionViolated, SingularH,
                     SingularMetric, TDependenceResidual)
from .starprod import mat_inverse
from .superseries import SuperSeries


# -- exact values ---------------------------------------------------------------

class IntegralValue:
    """pi * sum c[r, k, l] nu^r e^{-kt} t^l."""

    def __init__(self, terms=None):
        self.terms = {k: v for k, v in (terms or {}).items() if v}

    def __add__(self, o):
        t = dict(self.terms)
        for k, v in o.terms.items():
            t[k] = t.get(k, Scalar(0)) + v
        return IntegralValue(t)

    def __neg__(self):
        return IntegralValue({k: -v for k, v in self.terms.items()})

    def __sub__(self, o):
        return self + (-o)

    def scale(self, c):
        c = Scalar.of(c)
        return IntegralValue({k: v * c for k, v in self.terms.items()})

    def __eq__(self, o):
        return (self - o).is_zero()

    __hash__ = None

    def is_zero(self):
        return not self.terms

    def nu_coefficient(self, r):
        """Coefficient of nu^r as a static value, in units of pi."""
        t = {k: v for k, v in self.terms.items() if k[0] == r}
        if any(k[1:] != (0, 0) for k in t):
            raise TDependenceResidual("nu^%d coefficient depends on t" % r)
        return t.get((r, 0, 0), Scalar(0))

    def nu_range(self):
        rs = [k[0] for k in self.terms]
        return (min(rs), max(rs)) if rs else None

    def truncated(self, nu_max):
        return IntegralValue({k: v for k, v in self.terms.items() if k[0] <= nu_max})

    def is_static(self):
        return all(k[1:] == (0, 0) for k in self.terms)

    def as_dict(self):
        return {"unit": "pi", "terms": [
            {"nu": k[0], "k": _jsonnum(k[1]), "l": k[2], "re": str(v.re), "im": str(v.im)}
            for k, v in sorted(self.terms.items(), key=lambda kv: (kv[0][0], str(kv[0][1]), kv[0][2]))]}

    def __str__(self):
        if not self.terms:
            return "0"
        parts = []
        for (r, k, l), v in sorted(self.terms.items(), key=lambda kv: (kv[0][0], str(kv[0][1]), kv[0][2])):
            mono = "pi"
            if r:
                mono += "*nu^%d" % r
            if k:
                mono += "*e^(-%st)" % k
            if l:
                mono += "*t^%d" % l
            parts.append("(%s)*%s" % (v, mono))
        return " + ".join(parts)

    __repr__ = __str__


def _jsonnum(x):
    return x if isinstance(x, int) else str(x)


# -- base integration ---------------------------------------------------------------

def _radial_atoms(alg):
    """Names of u = 1/(1 + z zb) and L = log(1 + z zb) in a one-dimensional chart."""
    if alg.m != 1:
        raise NoClosedForm("radial integration needs a one-dimensional chart")
    zz = alg.z(0) * alg.zb(0)
    u = None
    for name, P, c in alg._inv:
        if c == 1 and (CoeffExpr.make(alg, P) - (zz + 1)).is_zero():
            u = name
    log = None
    if u is not None:
        ua = alg.atom(u)
        for name in alg.atom_names:
            if name == u:
                continue
            a = alg.atom(name)
            if (a.partial(0) - alg.zb(0) * ua).is_zero() and (a.partial(1) - alg.z(0) * ua).is_zero():
                log = name
    return u, log


def _radial_moment(a, k, j):
    """int_0^oo s^a u^k L^j ds with u = 1/(1+s), L = log(1+s)."""
    if k - a < 2:
        raise Divergent("integrand s^%d u^%d L^%d is not integrable" % (a, k, j))
    total = Fraction(0)
    for i in range(a + 1):
        total += comb(a, i) * (-1) ** (a - i) * Fraction(factorial(j), (k - i - 1) ** (j + 1))
    return total


def coeff_integral(alg, c, atoms=None):
    """int_C c dz^dzb in units of pi; dz^dzb = -2i dx^dy."""
    if c.is_zero():
        return Scalar(0)
    if c.den is not None:
        raise NoClosedForm("denominator %s outside the radial atoms" % c.den)
    u, log = atoms or _radial_atoms(alg)
    total = Scalar(0)
    for exps, v in c.poly_terms():
        exps = {n: int(e) for n, e in exps.items()}
        a, b = exps["z1"], exps["zb1"]
        k = exps[u] if u else 0
        j = exps[log] if log else 0
        if any(e for n, e in exps.items() if n not in ("z1", "zb1", u, log)):
            raise NoClosedForm("integrand depends on atoms outside the radial family")
        if a != b:
            continue
        total = total + v * _radial_moment(a, k, j)
    return total * Scalar(0, -2)


def base_integral(F, alg=None):
    """Berezin-chart integral of a function on Pi TU: picks the coefficient of
    theta^1..theta^m thetabar^1..thetabar^m and integrates it over the chart."""
    alg = alg or F.alg
    atoms = _radial_atoms(alg)
    top = F.top_odd()
    out = {}
    for key, v in top.terms.items():
        if any(key[1]):
            raise PreconditionViolated("integrand depends on the fiber variables eta")
        s = coeff_integral(alg, v, atoms)
        if s:
            tk = (key[0], key[3], key[4])
            out[tk] = out.get(tk, Scalar(0)) + s
    return IntegralValue(out)


# -- the fiberwise Gaussian integral ----------------------------------------------

def _as_series(alg, x):
    return x if isinstance(x, SuperSeries) else SuperSeries.base(alg, x)


def _matmul(A, B, zero):
    n = len(A)
    return [[sum((A[i][k] * B[k][j] for k in range(n)), zero) for j in range(n)] for i in range(n)]


def series_det(M, alg):
    """Leibniz determinant of a matrix of even (commuting) series."""
    n = len(M)
    total = SuperSeries.zero(alg)
    for perm in itertools.permutations(range(n)):
        inv = sum(1 for i in range(n) for j in range(i + 1, n) if perm[i] > perm[j])
        p = SuperSeries.base(alg, 1)
        for i in range(n):
            p = p * M[i][perm[i]]
        total = total + (p if inv % 2 == 0 else -p)
    return total


def augmented_inverse(h, alpha, alg):
    """(h + alpha)^{-1} for h invertible and alpha nilpotent, by a Neumann series."""
    m = len(h)
    try:
        hinv = mat_inverse(h)
    except SingularMetric as e:
        raise SingularH(str(e))
    zero = SuperSeries.zero(alg)
    Hi = [[_as_series(alg, x) for x in row] for row in hinv]
    if alpha is None:
        return Hi
    # (h + a)^-1 = sum_n (-h^-1 a)^n h^-1
    step = _matmul(Hi, [[-_as_series(alg, x) for x in row] for row in alpha], zero)
    out = Hi
    term = Hi
    for _ in range(4 * m + 8):
        term = _matmul(step, term, zero)
        if all(x.is_zero() for row in term for x in row):
            return out
        out = [[out[i][j] + term[i][j] for j in range(m)] for i in range(m)]
    raise PreconditionViolated("augmentation of h is not nilpotent")


def h_function(h, alg, alpha=None):
    """nu^-1 h_{kl} eta^k etabar^l (plus the augmentation)."""
    m = len(h)
    out = SuperSeries.zero(alg)
    for k in range(m):
        for l in range(m):
            c = _as_series(alg, h[k][l])
            if alpha is not None:
                c = c + _as_series(alg, alpha[k][l])
            out = out + c * (SuperSeries.eta(alg, k) * SuperSeries.etabar(alg, l))
    return out.nu_shift(-1)


class GaussianData:
    """Lambda_h, Delta_h and det(Lambda_h) for a (possibly augmented) matrix h."""

    def __init__(self, geom, h, alpha=None):
        alg, m = geom.alg, geom.m
        self.alg, self.m = alg, m
        self.h, self.alpha = h, alpha
        self.hinv = augmented_inverse(h, alpha, alg)
        g = [[_as_series(alg, x) for x in row] for row in geom.g]
        self.Lambda = _matmul(g, self.hinv, SuperSeries.zero(alg))
        self.det = series_det(self.Lambda, alg)

    def delta(self, G):
        """nu h^{lk} d^2/deta^k detabar^l."""
        m = self.m
        out = SuperSeries(G.alg, {}, G.window)
        for k in range(m):
            Gk = G.d_eta(k)
            if Gk.is_zero():
                continue
            for l in range(m):
                c = self.hinv[l][k]
                if c.is_zero():
                    continue
                out = out + c * Gk.d_eta(m + l)
        return out.nu_shift(1)

    def graded(self, G):
        """[det(Lambda) zeta(Delta^n G)/n!]_n; their sum is T_h(G)."""
        out = []
        cur = G
        n = 0
        while not cur.is_zero():
            out.append((self.det * cur.zeta()).scale(Fraction(1, factorial(n))).truncated(G.window))
            cur = self.delta(cur)
            n += 1
        return out

    def T(self, G):
        out = SuperSeries(G.alg, {}, G.window)
        for x in self.graded(G):
            out = out + x
        return out


def T_h(geom, h, G, alpha=None):
    """det(Lambda_h) zeta(e^{Delta_h} G)."""
    return GaussianData(geom, h, alpha).T(G)


class OscSymbol:
    """e^{-h} G with h = nu^-1 (h_{kl} + alpha_{kl}) eta^k etabar^l."""

    def __init__(self, alg, h, prefactor, alpha=None):
        self.alg = alg
        self.h = h
        self.alpha = alpha
        self.G = prefactor

    def gaussian(self):
        return h_function(self.h, self.alg, self.alpha)

    def fiber_integral(self, geom):
        return T_h(geom, self.h, self.G, self.alpha)

    def integral(self, geom):
        return base_integral(self.fiber_integral(geom))

    def rescaled(self, s):
        """lambda_s applied to e^{-h} G."""
        s = Fraction(s)
        h = [[x * (s * s) for x in row] for row in self.h]
        alpha = None if self.alpha is None else [[_as_series(self.alg, x).scale(s * s) for x in row]
                                                  for row in self.alpha]
        return OscSymbol(self.alg, h, self.G.rescale(s), alpha)


# -- identities of T_h -----------------------------------------------------------

def th_identity_residuals(geom, h, G, f=None):
    """Residuals of the nine identities for T_h on a fiber-polynomial G.

    f is a function on Pi TU used in the first identity."""
    alg, m = geom.alg, geom.m
    gd = GaussianData(geom, h)
    T = gd.T
    TG = T(G)
    hf = h_function(h, alg)
    out = {}
    f = f if f is not None else SuperSeries.base(alg, alg.z(0) + 1) * SuperSeries.theta(alg, 0)
    out["1 f-linear"] = T(f * G) - f * TG
    for p in range(m):
        acc = G.d_eta(p)
        for l in range(m):
            acc = acc - (SuperSeries.etabar(alg, l) * G).scale(h[p][l]).nu_shift(-1)
        out["2 eta%d" % (p + 1)] = T(acc)
        acc = G.d_eta(m + p)
        for k in range(m):
            acc = acc - (SuperSeries.eta(alg, k) * G).scale(h[k][p]).nu_shift(-1)
        out["3 etabar%d" % (p + 1)] = T(acc)
    rhs = G.d_nu() + (hf * G).nu_shift(-1) - G.scale(m).nu_shift(-1)
    out["4 d/dnu"] = TG.d_nu() - T(rhs)
    for i in range(2 * m):
        dh = h_function([[x.partial(i) for x in row] for row in h], alg)
        dlog = SuperSeries.base(alg, geom.log_det_gradient(i))
        rhs = G.partial(i) - dh * G + dlog * G
        out["%d d/d%s" % (5 if i < m else 6, alg.coord_name(i))] = TG.partial(i) - T(rhs)
    for b in range(2 * m):
        nm = ("theta%d" if b < m else "thetabar%d") % (b % m + 1)
        out["%d d/d%s" % (7 if b < m else 8, nm)] = TG.d_odd(b) - T(G.d_odd(b))
    for k in range(m):
        for l in range(m):
            lhs = dT_dh(gd, G, k, l)
            rhs = T(-(SuperSeries.eta(alg, k) * SuperSeries.etabar(alg, l) * G).nu_shift(-1))
            out["9 d/dh%d%d" % (k + 1, l + 1)] = lhs - rhs
    return out


def dT_dh(gd, G, k, l):
    """d T_h(G)/d h_{kl} by the chain rule on det(Lambda_h) and Delta_h."""
    m = gd.m
    hinv = gd.hinv
    # d h^{ba}/d h_{kl} = -h^{bk} h^{la}
    dD = SuperSeries(G.alg, {}, G.window)

    def ddelta(F):
        out = SuperSeries(F.alg, {}, F.window)
        for a in range(m):
            Fa = F.d_eta(a)
            for b in range(m):
                c = -(hinv[b][k] * hinv[l][a])
                if not c.is_zero():
                    out = out + c * Fa.d_eta(m + b)
        return out.nu_shift(1)

    dD = gd.T(ddelta(G))
    return dD - hinv[l][k] * gd.T(G)


def rewrite_residual(geom, h, alpha, G):
    """T_{h+alpha}(G) - T_h(e^{-alpha} G)."""
    a = h_function([[SuperSeries.zero(geom.alg)] * geom.m for _ in range(geom.m)], geom.alg, alpha)
    return T_h(geom, h, G, alpha) - T_h(geom, h, (-a).exp() * G)


def rescale_residual(geom, h, G, s):
    """T_{s^2 h}(lambda_s G) - s^{-2m} lambda_s T_h(G); lambda_s on Pi TU scales theta."""
    s = Fraction(s)
    hs = [[x * (s * s) for x in row] for row in h]
    lhs = T_h(geom, hs, G.rescale(s))
    return lhs - T_h(geom, h, G).rescale(s).scale(s ** (-2 * geom.m))


# -- transposes and the trace property ------------------------------------------------

def transpose_residual(ss, var, f, G):
    """int (A f) e^{-h} G mu - (-1)^{|f||A|} int f A^t(e^{-h} G) mu for an
    elementary derivative A and h = -g, computed through the chart integral.

    var: ('c', i) chart coordinate, ('e', j) even fiber, ('o', bit) odd."""
    geom, alg = ss.geom, ss.alg
    h = [[-x for x in row] for row in geom.g]
    phi = ss.phi
    kind, i = var
    if kind == "c":
        Af = f.partial(i)
        dlog = SuperSeries.base(alg, geom.log_det_gradient(i))
        # A^t(e^{phi} G) = e^{phi}(-d/dv - dphi/dv - dlog g/dv) G
        AtG = -G.partial(i) - phi.partial(i) * G - dlog * G
        sign = 1
    elif kind == "e":
        Af = f.d_eta(i)
        AtG = -G.d_eta(i) - phi.d_eta(i) * G
        sign = 1
    else:
        Af = f.d_odd(i)
        AtG = -G.d_odd(i)
        sign = -1 if f.parity() == 1 else 1
    lhs = base_integral(T_h(geom, h, Af * G))
    rhs = base_integral(T_h(geom, h, f * AtG)).scale(sign)
    return lhs - rhs


def traceono_residual(ss, f, G):
    """int (L_f - R_f)(e^{-h} G) mu with e^{-h} = e^{phi}."""
    geom = ss.geom
    h = [[-x for x in row] for row in geom.g]
    w = G.window
    a = ss.left_apply(f, G, conj=-ss.phi, window=w)
    b = ss.right_apply(f, G, conj=-ss.phi, window=w)
    return base_integral(T_h(geom, h, (a - b).truncated(w)))


# -- trace functional and the index ----------------------------------------------

def valid_nu_max(ss, window=None):
    D = (window or ss.win).deg_max
    return (D - 2 * ss.m) // 2


def tau(ss, f=1, window=None):
    """int K_f mu."""
    K = ss.solve_K(f, window) if not (isinstance(f, int) and f == 1) else ss.epsilon(window)
    return K.to_osc().integral(ss.geom).truncated(valid_nu_max(ss, window))


def mu_star_integral(ss, density, f=None):
    """int f mu_star with mu_star = rho dz^1..dz^m dzb^1..dzb^m."""
    alg, m = ss.alg, ss.m
    F = SuperSeries.zero(alg)
    full = (1 << (2 * m)) - 1
    for r, v in density.rho.items():
        F = F + SuperSeries(alg, {(r, (0,) * (2 * m), full, 0, 0): v})
    if f is not None:
        F = ss.nu_series(f) * F
    return base_integral(F)


def _inverse_coeffs(a, n):
    b = [Fraction(1) / a[0]]
    for k in range(1, n + 1):
        b.append(-sum(a[i] * b[k - i] for i in range(1, k + 1) if i < len(a)) / a[0])
    return b


def todd_coeffs(n):
    """x/(1 - e^{-x})."""
    return _inverse_coeffs([Fraction((-1) ** i, factorial(i + 1)) for i in range(n + 1)], n)


def ahat_coeffs(n):
    """(x/2)/sinh(x/2)."""
    a = [Fraction(0)] * (n + 1)
    for i in range(0, n + 1, 2):
        a[i] = Fraction(1, factorial(i + 1) * 2 ** i)
    return _inverse_coeffs(a, n)


def bernoulli_coeffs(n):
    """x/(e^x - 1) = sum B_k x^k/k!."""
    return _inverse_coeffs([Fraction(1, factorial(i + 1)) for i in range(n + 1)], n)


def matrix_power_series(M, coeffs, alg, time_shift=None):
    """sum c_n M^n for a nilpotent matrix M; time_shift(n) gives (k, l) of the
    time monomial multiplying the n-th coefficient."""
    m = len(M)
    zero = SuperSeries.zero(alg)
    power = [[SuperSeries.base(alg, 1 if i == j else 0) for j in range(m)] for i in range(m)]
    out = [[zero for _ in range(m)] for _ in range(m)]
    for n, c in enumerate(coeffs):
        if all(x.is_zero() for row in power for x in row):
            return out
        for i in range(m):
            for j in range(m):
                t = power[i][j].scale(c)
                if time_shift is not None:
                    t = t.with_time(*time_shift(n))
                out[i][j] = out[i][j] + t
        power = _matmul(power, M, zero)
    if any(not x.is_zero() for row in power for x in row):
        raise PreconditionViolated("curvature matrix is not nilpotent within the coefficient budget")
    return out


class CharClasses:
    """Characteristic forms on Pi TU as functions of theta, thetabar."""

    def __init__(self, ss, curv=None):
        from .heatflow import CurvatureData
        self.ss = ss
        self.curv = curv or CurvatureData(ss)
        self.alg, self.m = ss.alg, ss.m
        self.nmax = 2 * self.m + 2

    def Rhat(self):
        return self.curv.Rhat

    def trace_R(self):
        return sum((self.curv.Rhat[k][k] for k in range(self.m)), SuperSeries.zero(self.alg))

    def ricci(self):
        """rho = -i d dbar log det g, as a function of theta, thetabar."""
        alg, m, geom = self.alg, self.m, self.ss.geom
        out = SuperSeries.zero(alg)
        for k in range(m):
            dk = geom.log_det_gradient(k)
            for l in range(m):
                c = dk.partial(m + l) * alg.I * (-1)
                if not c.is_zero():
                    out = out + (SuperSeries.theta(alg, k) * SuperSeries.thetabar(alg, l)).scale(c)
        return out

    def todd(self):
        M = matrix_power_series(self.curv.Rhat, todd_coeffs(self.nmax), self.alg)
        return series_det(M, self.alg)

    def ahat(self):
        M = matrix_power_series(self.curv.Rhat, ahat_coeffs(self.nmax), self.alg)
        return series_det(M, self.alg)

    def theta_star(self):
        """-i(omega + rho/2)."""
        return (self.ss.omega_hat + self.ricci().scale(Fraction(1, 2))).scale(-self.alg.I)

    def flow_kernel(self):
        """det(Rhat/(1 - e^{t Rhat})) as a Laurent polynomial in t."""
        B = bernoulli_coeffs(self.nmax)
        # x/(1 - e^{tx}) = -(1/t) sum B_n (tx)^n/n!
        coeffs = [-b / factorial(n) for n, b in enumerate(B)]
        M = matrix_power_series(self.curv.Rhat, coeffs, self.alg, lambda n: (0, n - 1))
        return series_det(M, self.alg)


def index_rhs(ss, curv=None):
    """Both index-side routes: e^{-i omega} Td and e^{theta_star} Ahat."""
    cc = CharClasses(ss, curv)
    wm = -ss.omega_hat.scale(ss.alg.I)
    td_form = (wm.exp() * cc.todd())
    ahat_form = cc.theta_star().exp() * cc.ahat()
    rho_check = cc.ricci() - cc.trace_R().scale(ss.alg.I)
    return {"todd": base_integral(td_form), "ahat": base_integral(ahat_form),
            "todd_form": td_form, "ahat_form": ahat_form, "rho_minus_itrR": rho_check}


def scaled_gaussian_integral(geom, G):
    """Graded pieces A_n with T_{c h}(G) = sum_n c^{-m-n} A_n for h = -g."""
    h = [[-x for x in row] for row in geom.g]
    return GaussianData(geom, h).graded(G)


def flow_integral(ss, flow):
    """int F(t) mu for F = e^{K} P, K = (e^{-t} - 1) S, as {n: value}: the
    integral equals sum_n (1 - e^{-t})^{-n} value_n."""
    psi = ss.psi
    pref = (psi.with_time(1, 0) - psi).exp() * flow.P
    pieces = scaled_gaussian_integral(ss.geom, pref.truncated(flow.P.window))
    return {ss.m + n: base_integral(A) for n, A in enumerate(pieces)}


def flow_integral_constant(ss, graded, nu_max):
    """Clear the (1 - x)^n denominators, x = e^{-t}, and test t-independence.

    Returns (constant, residual)."""
    N = max(graded) if graded else 0
    num = IntegralValue()
    for n, v in graded.items():
        j = N - n
        for i in range(j + 1):
            c = comb(j, i) * (-1) ** i
            t = {}
            for (r, k, l), s in v.terms.items():
                t[(r, _add_k(k, i), l)] = s * c
            num = num + IntegralValue(t)
    num = num.truncated(nu_max)
    const = IntegralValue({k: v for k, v in num.terms.items() if k[1:] == (0, 0)})
    expect = IntegralValue()
    for i in range(N + 1):
        c = comb(N, i) * (-1) ** i
        expect = expect + IntegralValue({(r, i, 0): v * c for (r, _, _), v in const.terms.items()})
    return const, num - expect


def _add_k(k, i):
    s = Fraction(k) + i
    return int(s) if s.denominator == 1 else s


def rescaled_fiber_integral(ss, Q):
    """int G(0,t) (1/m!)((i/2pi) gamma)^m for G(0,t) = e^{t phi} Q: Gaussian -t g."""
    pieces = scaled_gaussian_integral(ss.geom, Q)
    out = SuperSeries.zero(ss.alg)
    for n, A in enumerate(pieces):
        out = out + A.with_time(0, -(ss.m + n))
    return out


def fiber_kernel_residual(ss, Q=None, curv=None):
    """Fiber integral of G(0,t) minus e^{i t omega} det(Rhat/(1 - e^{t Rhat}))."""
    from .heatflow import CurvatureData, rescaled_evolve_zero
    curv = curv or CurvatureData(ss)
    Q = Q if Q is not None else rescaled_evolve_zero(ss, curv)
    kernel = CharClasses(ss, curv).flow_kernel()
    wt = ss.omega_hat.scale(ss.alg.I).with_time(0, 1).exp()
    return rescaled_fiber_integral(ss, Q) - wt * kernel


def index_lhs_via_flow(ss, flow=None, Q=None, curv=None):
    """tau(1), int F(t) mu and int G(0,t) mu, with the t-independence residuals."""
    from .heatflow import CurvatureData, evolve, rescaled_evolve_zero
    curv = curv or CurvatureData(ss)
    nu_max = valid_nu_max(ss)
    flow = flow or evolve(ss)
    Q = Q if Q is not None else rescaled_evolve_zero(ss, curv)
    t1 = tau(ss)
    const, res = flow_integral_constant(ss, flow_integral(ss, flow), nu_max)
    fib = rescaled_fiber_integral(ss, Q)
    g0 = base_integral(fib).truncated(nu_max)
    fiber_res = fiber_kernel_residual(ss, Q, curv)
    return {"tau": t1, "flow": const, "flow_t_residual": res, "rescaled": g0,
            "rescaled_static": g0.is_static(), "fiber_residual": fiber_res}
