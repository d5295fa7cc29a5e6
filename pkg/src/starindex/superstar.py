"""The star product on TU + PiTU built from the superpotential

    X = Phi + nu^-1 (dPhi_-1/dz^p eta^p + dPhi_-1/dzb^l etabar^l + g_kl theta^k thetabar^l).

Left and right multiplication operators are assembled from the operators of
the generators: base functions act through

    L_f = sum nu^r/r! (D^k1..D^kr f) d^r/deta^k1..deta^kr,  D^k = g^{qk} d/dzb^q,

and eta, theta act by plain multiplication; etabar, thetabar go through
L_{g_kq thetabar^q} and L_{g_kq etabar^q}.  The right operators mirror this
with the graded convention R_f g = (-1)^{|f||g|} g * f.

Elements of the K-space are stored in the frame F = e^{-S} P; the operators
act on P after conjugation by e^{S}.
"""

from fractions import Fraction
from math import factorial

from .coeffalg import Scalar
from .diffop import SuperDiffOp, compose, conjugate_by_exp
from .errors import NonConvergentWindow, PreconditionViolated
from .starprod import StarProduct, as_nu_dict, multi_indices, _unit, _add_mi
from .superseries import SuperSeries, Window, popcount


def _mfact(a):
    r = 1
    for x in a:
        r *= factorial(x)
    return r


def _bits(mask):
    out = []
    b = 0
    while mask:
        if mask & 1:
            out.append(b)
        mask >>= 1
        b += 1
    return out


class KLift:
    """An element e^{-S} P of the K-space; P is a polynomial fiber series."""

    def __init__(self, ss, P):
        self.ss = ss
        self.P = P

    def deg_component(self, d):
        return self.P.deg_component(d)

    def to_osc(self):
        from .oscint import OscSymbol
        ss = self.ss
        h = [[-x for x in row] for row in ss.geom.g]
        pref = (-ss.psi).exp()
        return OscSymbol(ss.alg, h, (pref * self.P).truncated(self.P.window))


class SuperStar:
    def __init__(self, geom, D, slack=4):
        self.geom = geom
        self.alg = geom.alg
        self.m = geom.m
        self.D = D
        self.Dop = D + slack
        self.win = Window(deg_max=D)
        self.owin = Window(deg_max=self.Dop)
        self._ops = {}
        self._build_functions()

    # -- series helpers --------------------------------------------------
    def base(self, f, r=0):
        return SuperSeries.base(self.alg, f, r)

    def nu_series(self, d, window=None):
        s = SuperSeries.zero(self.alg)
        for r, v in d.items():
            s = s + SuperSeries.base(self.alg, v, r)
        return s if window is None else s.with_window(window)

    def eta(self, k):
        return SuperSeries.eta(self.alg, k)

    def etabar(self, k):
        return SuperSeries.etabar(self.alg, k)

    def theta(self, k):
        return SuperSeries.theta(self.alg, k)

    def thetabar(self, k):
        return SuperSeries.thetabar(self.alg, k)

    def _build_functions(self):
        geom, alg, m = self.geom, self.alg, self.m
        g = geom.g
        P = geom.phi_jets
        X = geom.phi_series()
        Y = SuperSeries.zero(alg)
        for p in range(m):
            Y = Y + self.eta(p).scale(P[-1](_unit(m, p)))
            Y = Y + self.etabar(p).scale(P[-1]((0,) * m, _unit(m, p)))
        for k in range(m):
            for l in range(m):
                Y = Y + (self.theta(k) * self.thetabar(l)).scale(g[k][l])
        Y = Y.nu_shift(-1)
        self.Y = Y
        self.X = X + Y
        phi = SuperSeries.zero(alg)
        psi = SuperSeries.zero(alg)
        chi = SuperSeries.zero(alg)
        chit = SuperSeries.zero(alg)
        omh = SuperSeries.zero(alg)
        for k in range(m):
            for l in range(m):
                phi = phi + (self.eta(k) * self.etabar(l)).scale(g[k][l])
                psi = psi + (self.theta(k) * self.thetabar(l)).scale(g[k][l])
                chi = chi + (self.eta(k) * self.thetabar(l)).scale(g[k][l])
                chit = chit + (self.theta(k) * self.etabar(l)).scale(g[k][l])
                for r, v in geom.potential.items():
                    c = P[r](_unit(m, k), _unit(m, l))
                    if not c.is_zero():
                        omh = omh + (self.theta(k) * self.thetabar(l)).scale(c * alg.I).nu_shift(r)
        self.phi = phi.nu_shift(-1)
        self.psi = psi.nu_shift(-1)
        self.chi = chi.nu_shift(-1)
        self.chit = chit.nu_shift(-1)
        self.omega_hat = omh
        self.S = self.psi - self.phi
        self.sigma = self.phi + omh.scale(alg.I)

    # -- base operators ------------------------------------------------
    def _Dgamma(self, c, bar):
        """Return a function gamma -> D^gamma c (or Dbar^gamma c)."""
        m, ginv = self.m, self.geom.ginv
        memo = {(0,) * m: c}

        def get(gamma):
            if gamma in memo:
                return memo[gamma]
            k = next(i for i, x in enumerate(gamma) if x)
            prev = get(tuple(x - (1 if i == k else 0) for i, x in enumerate(gamma)))
            acc = self.alg.zero
            for q in range(m):
                if bar:
                    # Dbar^l = g^{l p} d/dz^p
                    acc = acc + ginv[k][q] * prev.partial(q)
                else:
                    # D^k = g^{q k} d/dzb^q
                    acc = acc + ginv[q][k] * prev.partial(m + q)
            memo[gamma] = acc
            return acc
        return get

    def base_op(self, f, bar=False, skip0=False):
        """L_f (bar=False) or R_f (bar=True) for a base formal function f."""
        alg, m = self.alg, self.m
        fd = as_nu_dict(alg, f)
        op = SuperDiffOp(alg, {}, self.owin)
        zero_c = (0,) * (2 * m)
        for r, c in fd.items():
            get = self._Dgamma(c, bar)
            n = 1 if skip0 else 0
            while 2 * r + n <= self.Dop:
                for gamma in multi_indices(m, n):
                    v = get(gamma)
                    if v.is_zero():
                        continue
                    de = (tuple(gamma) + (0,) * m) if not bar else ((0,) * m + tuple(gamma))
                    C = SuperSeries.base(alg, v * Fraction(1, _mfact(gamma)), r + n)
                    op._acc((zero_c, de, 0), C)
                n += 1
        return op

    def mult(self, F):
        return SuperDiffOp.mult(F.truncated(self.owin))

    def nu_deriv(self, v, coeff=1):
        return SuperDiffOp.deriv(self.alg, v, SuperSeries.base(self.alg, coeff, 1), self.owin)

    def _compose(self, A, B):
        return compose(A, B, self.owin)

    def _cached(self, key, build):
        if key not in self._ops:
            self._ops[key] = build()
        return self._ops[key]

    # -- generator operators ---------------------------------------------
    def L_gthetabar(self, s):
        """L of g_{sq} thetabar^q: g_{sq} thetabar^q + nu d/dtheta^s."""
        def build():
            F = SuperSeries.zero(self.alg)
            for q in range(self.m):
                F = F + self.thetabar(q).scale(self.geom.g[s][q])
            return self.mult(F) + self.nu_deriv(("o", s))
        return self._cached(("Lgtb", s), build)

    def L_thetabar(self, l):
        def build():
            op = SuperDiffOp(self.alg, {}, self.owin)
            for k in range(self.m):
                op = op + self._compose(self.base_op(self.geom.ginv[l][k]), self.L_gthetabar(k))
            return op
        return self._cached(("Ltb", l), build)

    def L_getabar(self, k):
        """L of g_{kq} etabar^q."""
        def build():
            geom, m = self.geom, self.m
            Pj = geom.phi_jets
            op = self.mult(self.X.partial(k).nu_shift(1)) + self.nu_deriv(("c", k))
            dphi = {r + 1: Pj[r](_unit(m, k)) for r in geom.potential}
            op = op - self.base_op(dphi)
            Gam = geom.christoffel()
            for p in range(m):
                c = Pj[-1](_add_mi(_unit(m, k), _unit(m, p)))
                if not c.is_zero():
                    op = op - self.base_op(c).left_mul(self.eta(p))
                for s in range(m):
                    if Gam[s][k][p].is_zero():
                        continue
                    t = self._compose(self.base_op(Gam[s][k][p]), self.L_gthetabar(s))
                    op = op - t.left_mul(self.theta(p))
            return op
        return self._cached(("Lgeb", k), build)

    def L_etabar(self, l):
        def build():
            op = SuperDiffOp(self.alg, {}, self.owin)
            for k in range(self.m):
                op = op + self._compose(self.base_op(self.geom.ginv[l][k]), self.L_getabar(k))
            return op
        return self._cached(("Leb", l), build)

    def R_gtheta(self, l):
        """R of g_{pl} theta^p: g_{pl} theta^p - nu d/dthetabar^l."""
        def build():
            F = SuperSeries.zero(self.alg)
            for p in range(self.m):
                F = F + self.theta(p).scale(self.geom.g[p][l])
            return self.mult(F) - self.nu_deriv(("o", self.m + l))
        return self._cached(("Rgt", l), build)

    def R_theta(self, k):
        def build():
            op = SuperDiffOp(self.alg, {}, self.owin)
            for l in range(self.m):
                op = op + self._compose(self.base_op(self.geom.ginv[l][k], bar=True),
                                        self.R_gtheta(l))
            return op
        return self._cached(("Rt", k), build)

    def R_geta(self, l):
        """R of g_{pl} eta^p."""
        def build():
            geom, m = self.geom, self.m
            Pj = geom.phi_jets
            op = self.mult(self.X.partial(m + l).nu_shift(1)) + self.nu_deriv(("c", m + l))
            dphi = {r + 1: Pj[r]((0,) * m, _unit(m, l)) for r in geom.potential}
            op = op - self.base_op(dphi, bar=True)
            Gb = geom.christoffel_bar()
            for q in range(m):
                c = Pj[-1]((0,) * m, _add_mi(_unit(m, l), _unit(m, q)))
                if not c.is_zero():
                    op = op - self.base_op(c, bar=True).left_mul(self.etabar(q))
                for s in range(m):
                    if Gb[s][q][l].is_zero():
                        continue
                    t = self._compose(self.base_op(Gb[s][q][l], bar=True), self.R_gtheta(s))
                    op = op + t.left_mul(self.thetabar(q))
            return op
        return self._cached(("Rge", l), build)

    def R_eta(self, k):
        def build():
            op = SuperDiffOp(self.alg, {}, self.owin)
            for l in range(self.m):
                op = op + self._compose(self.base_op(self.geom.ginv[l][k], bar=True),
                                        self.R_geta(l))
            return op
        return self._cached(("Re", k), build)

    # -- monomial decomposition ----------------------------------------
    def _split(self, key):
        m = self.m
        r, ex, mask, k, l = key
        hol = (ex[:m], mask & ((1 << m) - 1))
        anti = (ex[m:], mask >> m << m)
        return r, hol, anti, (k, l)

    # -- applying left / right multiplication ----------------------------
    def _iw(self, F, window):
        lo = min((k[0] for k in F.terms), default=0)
        D = window.deg_max
        if D is None:
            return window
        return Window(window.nu_min, window.nu_max, D + max(0, -2 * lo))

    def left_apply(self, F, G, conj=None, window=None):
        """F * G (equivalently L_F G); with conj=K computes e^K L_F e^{-K} G."""
        w = window or self.win
        iw = self._iw(F, w)
        m = self.m
        groups = {}
        for key, c in F.terms.items():
            r, hol, anti, tk = self._split(key)
            groups.setdefault(anti, []).append((r, hol, tk, c))
        out = SuperSeries(self.alg, {}, w)
        for (exC, maskD), items in groups.items():
            W = G
            for bit in reversed(_bits(maskD)):
                W = self.L_thetabar(bit - m).apply(W, conj, iw)
            for j, e in enumerate(exC):
                for _ in range(e):
                    W = self.L_etabar(j).apply(W, conj, iw)
            for r, (exA, maskB), (tk, tl), c in items:
                V = self.base_op({r: c}).apply(W, conj, iw)
                V = V.mul_monomial(ex=tuple(exA) + (0,) * m, mask=maskB)
                if tk or tl:
                    V = V.with_time(tk, tl)
                out = out + V.truncated(w)
        return out.truncated(w)

    def right_apply(self, F, G, conj=None, window=None):
        """R_F G = (-1)^{|F||G|} G * F."""
        w = window or self.win
        iw = self._iw(F, w)
        m = self.m
        groups = {}
        for key, c in F.terms.items():
            r, hol, anti, tk = self._split(key)
            groups.setdefault(hol, []).append((r, anti, tk, c))
        out = SuperSeries(self.alg, {}, w)
        for (exA, maskB), items in groups.items():
            H = G
            for j, e in enumerate(exA):
                for _ in range(e):
                    H = self.R_eta(j).apply(H, conj, iw)
            for bit in _bits(maskB):
                H = self.R_theta(bit).apply(H, conj, iw)
            p = popcount(maskB)
            for r, (exC, maskD), (tk, tl), c in items:
                q = popcount(maskD)
                n = p + q
                sign = -1 if ((n * (n - 1) // 2) + (q * (q - 1) // 2)) & 1 else 1
                V = self.base_op({r: c}, bar=True).apply(H, conj, iw)
                V = V.mul_monomial(ex=(0,) * m + tuple(exC), mask=maskD)
                if sign < 0:
                    V = -V
                if tk or tl:
                    V = V.with_time(tk, tl)
                out = out + V.truncated(w)
        return out.truncated(w)

    def star(self, F, G, window=None):
        return self.left_apply(F, G, window=window)

    def right_star(self, G, F, window=None):
        """G * F computed through the right action."""
        pf = F.parity()
        if pf == 0:
            return self.right_apply(F, G, window=window)
        Ge = G._new({k: v for k, v in G.terms.items() if not popcount(k[2]) & 1})
        Go = G._new({k: v for k, v in G.terms.items() if popcount(k[2]) & 1})
        return self.right_apply(F, Ge, window=window) - self.right_apply(F, Go, window=window)

    def supercommutator(self, F, G, window=None):
        pf, pg = F.parity(), G.parity()
        s = -1 if (pf and pg) else 1
        return self.star(F, G, window) - self.star(G, F, window).scale(s)

    # -- operators as SuperDiffOp ------------------------------------------
    def left_op(self, F):
        m = self.m
        out = SuperDiffOp(self.alg, {}, self.owin)
        for key, c in F.terms.items():
            r, (exA, maskB), (exC, maskD), (tk, tl) = self._split(key)
            op = self.base_op({r: c})
            for j, e in enumerate(exC):
                for _ in range(e):
                    op = self._compose(op, self.L_etabar(j))
            for bit in _bits(maskD):
                op = self._compose(op, self.L_thetabar(bit - m))
            mono = SuperSeries(self.alg, {(0, tuple(exA) + (0,) * m, maskB, tk, tl): self.alg.one})
            out = out + op.left_mul(mono)
        return out

    def right_op(self, F):
        m = self.m
        out = SuperDiffOp(self.alg, {}, self.owin)
        for key, c in F.terms.items():
            r, (exA, maskB), (exC, maskD), (tk, tl) = self._split(key)
            op = self.base_op({r: c}, bar=True)
            for bit in reversed(_bits(maskB)):
                op = self._compose(op, self.R_theta(bit))
            for j, e in enumerate(exA):
                for _ in range(e):
                    op = self._compose(op, self.R_eta(j))
            p, q = popcount(maskB), popcount(maskD)
            n = p + q
            sign = -1 if ((n * (n - 1) // 2) + (q * (q - 1) // 2)) & 1 else 1
            mono = SuperSeries(self.alg, {(0, (0,) * m + tuple(exC), maskD, tk, tl): self.alg.one})
            t = op.left_mul(mono)
            out = out + (t if sign > 0 else t.scale(-1))
        return out

    # -- sigma ---------------------------------------------------------
    def sigma_operator(self):
        """L_sigma from its closed form."""
        def build():
            geom, alg, m = self.geom, self.alg, self.m
            Pj = geom.phi_jets
            op = self.mult(self.phi)
            for k in range(m):
                dphi = {r: Pj[r](_unit(m, k)) for r in geom.potential}
                op = op - self.base_op(dphi, skip0=True).left_mul(self.eta(k))
                op = op + SuperDiffOp.deriv(alg, ("c", k), self.eta(k), self.owin)
                for p in range(m):
                    c = Pj[-1](_add_mi(_unit(m, k), _unit(m, p)))
                    if not c.is_zero():
                        op = op - self.base_op({-1: c}, skip0=True).left_mul(self.eta(k) * self.eta(p))
                    for q in range(m):
                        gd = geom.g_d(k, p, q)
                        if not gd.is_zero():
                            t = (self.eta(k) * self.theta(p) * self.thetabar(q)).scale(gd).nu_shift(-1)
                            op = op + self.mult(t)
            Gam = geom.christoffel()
            for k in range(m):
                for s in range(m):
                    inner = SuperDiffOp(alg, {}, self.owin)
                    for p in range(m):
                        if not Gam[s][k][p].is_zero():
                            inner = inner + self.base_op({-1: Gam[s][k][p]}).left_mul(self.eta(p))
                    hd = {}
                    for r in geom.potential:
                        acc = alg.zero
                        for l in range(m):
                            acc = acc + Pj[r](_unit(m, k), _unit(m, l)) * geom.ginv[l][s]
                        if not acc.is_zero():
                            hd[r] = acc
                    inner = inner + self.base_op(hd)
                    t = self._compose(inner, self.L_gthetabar(s)).left_mul(self.theta(k))
                    op = op - t
            return op
        return self._cached("Lsigma", build)

    def sigma_right_operator(self):
        return self._cached("Rsigma", lambda: self.right_op(self.sigma))

    def euler_op(self, which="E"):
        """Holomorphic (E) or antiholomorphic (Ebar) fiber Euler operator."""
        alg, m = self.alg, self.m
        op = SuperDiffOp(alg, {}, self.owin)
        off = 0 if which == "E" else m
        for j in range(m):
            v = self.eta(j) if which == "E" else self.etabar(j)
            op = op + SuperDiffOp.deriv(alg, ("e", off + j), v, self.owin)
            v = self.theta(j) if which == "E" else self.thetabar(j)
            op = op + SuperDiffOp.deriv(alg, ("o", off + j), v, self.owin)
        return op

    # -- K-space -----------------------------------------------------------
    def frame_operator(self):
        """e^{S} (L_sigma + R_sigma) e^{-S}, whose degree-zero part is -(E + Ebar)."""
        def build():
            A = self.sigma_operator() + self.sigma_right_operator()
            return conjugate_by_exp(A, self.S, self.owin)
        return self._cached("frame", build)

    def solve_K(self, f, window=None):
        """K_f = e^{-S} P with (L_sigma + R_sigma) K_f = 0 and K_f - f in J_l + J_r."""
        w = window or self.win
        D = w.deg_max
        fd = as_nu_dict(self.alg, f)
        fs = self.nu_series(fd)
        comps = self.frame_operator().components()
        d0 = min(2 * r for r in fd) if fd else 0
        P = SuperSeries(self.alg, {}, w)
        for d in range(d0, D + 1):
            rhs = SuperSeries(self.alg, {}, w)
            for i, Ai in comps.items():
                if i < 1 or d - i < d0:
                    continue
                Pd = P.deg_component(d - i) if d - i <= D else None
                if Pd is None or Pd.is_zero():
                    continue
                rhs = rhs + Ai.apply(Pd, window=Window(deg_max=d)).deg_component(d)
            new = {}
            for key, v in rhs.terms.items():
                n = sum(key[1]) + popcount(key[2])
                if n == 0:
                    raise PreconditionViolated("fiber-constant obstruction at degree %d" % d)
                new[key] = v * Fraction(1, n)
            for key, v in fs.deg_component(d).terms.items() if d <= D else []:
                new[key] = v
            P = P + SuperSeries(self.alg, new, w)
        return KLift(self, P.truncated(w))

    def epsilon(self, window=None):
        key = ("eps", (window or self.win).deg_max)
        return self._cached(key, lambda: self.solve_K(1, window))

    def kappa(self, window=None):
        """kappa with epsilon = e^{-(S + kappa)}."""
        P = self.epsilon(window).P
        rest = P - 1
        if rest.is_zero():
            return rest
        return -(rest.log1p())

    def k_conditions(self, K):
        """etabar*K, thetabar*K, K*eta, K*theta in the e^{-S} frame."""
        out = {}
        for j in range(self.m):
            out["etabar%d*K" % (j + 1)] = self.L_etabar(j).apply(K.P, self.S, self.win)
            out["thetabar%d*K" % (j + 1)] = self.L_thetabar(j).apply(K.P, self.S, self.win)
            out["K*eta%d" % (j + 1)] = self.R_eta(j).apply(K.P, self.S, self.win)
            out["K*theta%d" % (j + 1)] = self.R_theta(j).apply(K.P, self.S, self.win)
        return out

    def harmonic_residual(self, K):
        A = self.sigma_operator() + self.sigma_right_operator()
        return A.apply(K.P, self.S, self.win)

    def left_on_K(self, F, K, window=None):
        return self.left_apply(F, K.P, conj=self.S, window=window)

    def right_on_K(self, F, K, window=None):
        return self.right_apply(F, K.P, conj=self.S, window=window)

    # -- homomorphisms alpha, beta ----------------------------------------
    def _base_star(self, N=None):
        N = max(self.D, 1) if N is None else max(N, 1)
        return self._cached(("basestar", N), lambda: StarProduct(self.geom, N))

    def alpha(self, f, window=None):
        """(e^{-Y} R*_f e^{Y}) 1."""
        return self._conj_one(f, False, window)

    def beta(self, f, window=None):
        """(e^{-Y} L*_f e^{Y}) 1."""
        return self._conj_one(f, True, window)

    def _conj_one(self, f, left, window):
        w = window or self.win
        out = SuperSeries(self.alg, {}, w)
        for r, c in as_nu_dict(self.alg, f).items():
            # nu^r times the image of c; terms of base order n have degree >= n
            Dr = w.deg_max - 2 * r
            if Dr < 0:
                continue
            sp = self._base_star(Dr)
            op = sp.left_op(c) if left else sp.right_op(c)
            op.window = Window(deg_max=Dr + 8)
            one = SuperSeries.base(self.alg, 1, 0, Window(deg_max=Dr + 8))
            out = out + op.apply(one, -self.Y, Window(deg_max=Dr)).nu_shift(r)
        return out.truncated(w)

    def alpha_tilde(self, f, window=None):
        return self.alpha(f, window).set_antiholo_zero()

    def beta_tilde(self, f, window=None):
        return self.beta(f, window).set_holo_zero()

    def kappa_f(self, f, window=None):
        return self.alpha_tilde(f, window) + self.beta_tilde(f, window) - self.nu_series(
            as_nu_dict(self.alg, f), window or self.win)

    # -- Berezin transform -------------------------------------------------
    def berezin(self, F, window=None):
        """I(b c a) = b * (c * a) for antiholomorphic b, base c, holomorphic a."""
        w = window or self.win
        m = self.m
        out = SuperSeries(self.alg, {}, w)
        for key, c in F.terms.items():
            r, (exA, maskB), (exC, maskD), (tk, tl) = self._split(key)
            a = SuperSeries(self.alg, {(0, tuple(exA) + (0,) * m, maskB, 0, 0): self.alg.one})
            b = SuperSeries(self.alg, {(0, (0,) * m + tuple(exC), maskD, 0, 0): self.alg.one})
            ca = self.base_op({r: c}).apply(a, window=self._iw(F, w))
            V = self.left_apply(b, ca, window=w)
            if popcount(maskB) * popcount(maskD) & 1:
                V = -V
            if tk or tl:
                V = V.with_time(tk, tl)
            out = out + V
        return out.truncated(w)

    def berezin_inverse(self, F, window=None):
        w = window or self.win
        total = F.truncated(w)
        term = total
        for _ in range(4 * (w.deg_max or 0) + 16):
            term = (term - self.berezin(term, w)).truncated(w)
            if term.is_zero():
                return total
            total = total + term
        raise NonConvergentWindow("Neumann series for the inverse Berezin transform")

    # -- supertrace density data -------------------------------------------
    def superdens_residuals(self, window=None):
        """dX/dv + I(dX'/dv) for X' = -X + log det g over all fiber and base variables."""
        w = window or self.win
        geom, m = self.geom, self.m
        out = {}
        X = self.X.truncated(Window(deg_max=w.deg_max + 2))
        for i in range(2 * m):
            name = self.alg.coord_name(i)
            dX = X.partial(i)
            dXp = -dX + SuperSeries.base(self.alg, geom.log_det_gradient(i))
            out["d/d" + name] = (dX + self.berezin(dXp, w)).truncated(w)
        for j in range(2 * m):
            nm = ("eta%d" if j < m else "etabar%d") % (j % m + 1)
            dX = X.d_eta(j)
            out["d/d" + nm] = (dX + self.berezin(-dX, w)).truncated(w)
        for b in range(2 * m):
            nm = ("theta%d" if b < m else "thetabar%d") % (b % m + 1)
            dX = X.d_odd(b)
            out["d/d" + nm] = (dX + self.berezin(-dX, w)).truncated(w)
        return out

    def phitheta_residual(self, k, window=None):
        """thetabar^q * (nu^-1 g_{kp qbar}) * theta^p + nu^-1 g_{kp qbar} theta^p thetabar^q
        - g^{qp} g_{kp qbar}."""
        w = window or self.win
        geom, m = self.geom, self.m
        res = SuperSeries(self.alg, {}, w)
        for p in range(m):
            for q in range(m):
                gd = geom.g_d(k, p, q)
                if gd.is_zero():
                    continue
                t = self.star(self.thetabar(q), self.star(self.base(gd, -1), self.theta(p), w), w)
                res = res + t
                res = res + (self.theta(p) * self.thetabar(q)).scale(gd).nu_shift(-1)
                res = res - self.base(geom.ginv[q][p] * gd)
        return res.truncated(w)

    def dX_dnu(self):
        return self.X.d_nu()

    def berdx_residual(self, window=None):
        w = window or self.win
        dX = self.dX_dnu()
        return (self.berezin_inverse(dX, w) - dX - self.base(self.m, -1)).truncated(w)

    # -- nu-derivations ----------------------------------------------------
    def delta(self, F, window=None):
        """dF/dnu + dX/dnu F - R_{dX/dnu} F."""
        w = window or self.win
        dX = self.dX_dnu()
        return (F.d_nu() + dX * F - self.right_apply(dX, F, window=w)).truncated(w)

    def w_element(self, window=None):
        """w = -beta~(dPhi/dnu) + eta^k beta~(nu^-2 dPhi_-1/dz^k)."""
        w = window or self.win
        wide = Window(deg_max=w.deg_max + 6)
        dphi = self.geom.dphi_dnu()
        out = -self.beta_tilde(dphi, wide)
        Pj = self.geom.phi_jets
        for k in range(self.m):
            b = self.beta_tilde({-2: Pj[-1](_unit(self.m, k))}, wide)
            out = out + b.mul_monomial(ex=tuple(_unit(self.m, k)) + (0,) * self.m)
        return out

    def delta_tilde_on_K(self, K, window=None):
        """e^{S} delta~ e^{-S} P for K = e^{-S} P, delta~ = delta + L_w - R_w."""
        w = window or self.win
        P = K.P
        dX = self.dX_dnu()
        Sdn = self.S.nu_shift(-1)
        out = P.d_nu() + Sdn * P + dX * P
        out = out - self.right_apply(dX, P, conj=self.S, window=w)
        we = self.w_element(w)
        out = out + self.left_apply(we, P, conj=self.S, window=w)
        out = out - self.right_apply(we, P, conj=self.S, window=w)
        return out.truncated(w)

    # -- supertrace density -------------------------------------------------
    def density_data(self):
        """Fiber Gaussian weight of mu: (1/m!)((i/2pi) gamma)^m with gamma = nu^-1 g deta deta-bar."""
        return {"metric": self.geom.g, "det": self.geom.det, "nu_power": -self.m,
                "normalization": "(i/2pi)^m / m! * gamma^m * dbeta",
                "scalar": Scalar(0, 1)}
