"""Heat flow dF/dt = L_sigma F, its t -> infinity limit, and the rescaled flow.

Time dependence is carried by the (k, l) slots of SuperSeries keys, i.e. each
coefficient multiplies e^{-kt} t^l.  The solution is stored in the frame
F(t) = e^{K(t)} P(t) with K(t) = (e^{-t} - 1) S, so P(t) is polynomial in the
fiber variables.
"""

from fractions import Fraction
from math import factorial

from .diffop import SuperDiffOp
from .errors import DivergentTerm, ZeroK
from .superseries import SuperSeries, Window, popcount


def etk_solve(k, l):
    """Polynomial p with (e^{-kt} p(t))' = e^{-kt} t^l, as a coefficient list in t."""
    k = Fraction(k)
    if k == 0:
        raise ZeroK("etk_solve needs k != 0")
    # p = -(1/k) sum_r ((1/k) d/dt)^r t^l
    p = [Fraction(0)] * (l + 1)
    coef = Fraction(1)
    for r in range(l + 1):
        # d^r/dt^r t^l = l!/(l-r)! t^(l-r)
        p[l - r] += -coef / k * Fraction(factorial(l), factorial(l - r))
        coef /= k
    return p


def _acc(t, key, v):
    if key in t:
        v = t[key] + v
    if v.is_zero():
        t.pop(key, None)
    else:
        t[key] = v


def integrate_against_euler(ss, R):
    """Solution of dQ/dt = -E Q + R(t) with Q(0) = 0."""
    out = {}
    for key, v in R.terms.items():
        r, ex, mask, k, l = key
        j = R.holo_degree(key)
        if Fraction(k) == j:
            _acc(out, key[:4] + (l + 1,), v * Fraction(1, l + 1))
            continue
        p = etk_solve(Fraction(k) - j, l)
        for i, c in enumerate(p):
            if c:
                _acc(out, key[:4] + (i,), v * c)
        if p[0]:
            _acc(out, (r, ex, mask, _norm(j), 0), v * (-p[0]))
    return SuperSeries(R.alg, out, R.window)


def _norm(x):
    x = Fraction(x)
    return int(x) if x.denominator == 1 else x


class FlowSolution:
    """F(t) = e^{K(t)} P(t)."""

    def __init__(self, ss, K, P, op=None):
        self.ss = ss
        self.K = K
        self.P = P
        self.op = op

    def residual(self, window=None):
        """e^{-K}(dF/dt - L F) = dP/dt + K' P - e^{-K} L e^{K} P."""
        ss = self.ss
        w = window or self.P.window
        op = self.op or ss.sigma_operator()
        Kd = self.K.d_t()
        return (self.P.d_t() + Kd * self.P - op.apply(self.P, -self.K, w)).truncated(w)

    def time_structure_ok(self):
        """No term with k = 0 and l > 0."""
        return all(not (k[3] == 0 and k[4] > 0) for k in self.P.terms)

    def at_zero(self):
        return self.P.at_time_zero()


def evolve(ss, window=None):
    w = window or ss.win
    S = ss.S
    K = S.with_time(1, 0) - S
    Kd = K.d_t()
    op = ss.sigma_operator()
    P = SuperSeries.base(ss.alg, 1, 0, w)
    contrib = SuperSeries(ss.alg, {}, w)
    last = P
    for d in range(1, w.deg_max + 1):
        contrib = contrib + (op.apply(last, -K, w) - Kd * last).truncated(w)
        rhs = contrib.deg_component(d)
        last = integrate_against_euler(ss, rhs)
        P = P + last
    return FlowSolution(ss, K, P.truncated(w), op)


def limit_t_infinity(P):
    """Select the (k=0, l=0) part of a time-keyed series."""
    for key in P.terms:
        if key[3] == 0 and key[4] > 0:
            raise DivergentTerm("term e^0 t^%d does not converge" % key[4])
    return P.time_part(0, 0)


def commute_residuals(flow, window=None):
    """(L_W - R_W) F(t) for W in chi, chi~, sigma, in the flow frame."""
    ss = flow.ss
    w = window or flow.P.window
    out = {}
    for name, W in (("chi", ss.chi), ("chi~", ss.chit), ("sigma", ss.sigma)):
        a = ss.left_apply(W, flow.P, conj=-flow.K, window=w)
        b = ss.right_apply(W, flow.P, conj=-flow.K, window=w)
        out[name] = (a - b).truncated(w)
    return out


# -- curvature and the rescaled flow -----------------------------------------

class CurvatureData:
    def __init__(self, ss):
        self.ss = ss
        geom, m = ss.geom, ss.m
        R = geom.curvature()
        self.R = R
        Rhat = [[SuperSeries.zero(ss.alg) for _ in range(m)] for _ in range(m)]
        for k in range(m):
            for u in range(m):
                acc = SuperSeries.zero(ss.alg)
                for p in range(m):
                    for q in range(m):
                        c = R[u][k][p][q]
                        if not c.is_zero():
                            acc = acc + (ss.theta(p) * ss.thetabar(q)).scale(c)
                Rhat[k][u] = acc
        self.Rhat = Rhat

    def matmul(self, A, B):
        m = self.ss.m
        return [[sum((A[i][k] * B[k][j] for k in range(m)), SuperSeries.zero(self.ss.alg))
                 for j in range(m)] for i in range(m)]

    def H(self):
        """(e^{t Rhat} - 1)/Rhat as a matrix of series polynomial in t."""
        m, alg = self.ss.m, self.ss.alg
        ident = [[SuperSeries.base(alg, 1 if i == j else 0) for j in range(m)] for i in range(m)]
        out = [[SuperSeries.zero(alg) for _ in range(m)] for _ in range(m)]
        power = ident
        n = 0
        while any(not x.is_zero() for row in power for x in row):
            c = Fraction(1, factorial(n + 1))
            for i in range(m):
                for j in range(m):
                    out[i][j] = out[i][j] + power[i][j].with_time(0, n + 1).scale(c)
            power = self.matmul(power, self.Rhat)
            n += 1
        return out

    def h_tilde(self):
        """-nu^-1 H_k^u(t) g_{u lbar} eta^k etabar^l."""
        ss = self.ss
        m, g = ss.m, ss.geom.g
        H = self.H()
        out = SuperSeries.zero(ss.alg)
        for k in range(m):
            for l in range(m):
                acc = SuperSeries.zero(ss.alg)
                for u in range(m):
                    acc = acc + H[k][u].scale(g[u][l])
                out = out + acc * (ss.eta(k) * ss.etabar(l))
        return -out.nu_shift(-1)


def lambda_degree(dk, key):
    """Fiber degree of the coefficient monomial minus fiber order of the derivative."""
    return sum(key[1]) + popcount(key[2]) - (sum(dk[1]) + popcount(dk[2]))


def lambda_component(op, j):
    out = SuperDiffOp(op.alg, {}, op.window)
    for dk, C in op.terms.items():
        t = {k: v for k, v in C.terms.items() if lambda_degree(dk, k) == j}
        if t:
            out._acc(dk, SuperSeries(op.alg, t, C.window))
    return out


def lambda_max_degree(op):
    return max((lambda_degree(dk, k) for dk, C in op.terms.items() for k in C.terms), default=None)


def sigma_zero_formula(ss, curv=None):
    """sigma + Rhat_k^u eta^k d/deta^u."""
    curv = curv or CurvatureData(ss)
    m = ss.m
    op = SuperDiffOp.mult(ss.sigma)
    for k in range(m):
        for u in range(m):
            if curv.Rhat[k][u].is_zero():
                continue
            op = op + SuperDiffOp.deriv(ss.alg, ("e", u), ss.eta(k) * curv.Rhat[k][u], ss.owin)
    return op


def rescaled_evolve_zero(ss, curv=None):
    """G(0,t) = e^{t phi} Q(t) with dG/dt = L0 G, G(0) = 1, by Picard iteration on Q."""
    curv = curv or CurvatureData(ss)
    m, g = ss.m, ss.geom.g
    omega_term = ss.omega_hat.scale(ss.alg.I)
    gbar = []
    for u in range(m):
        acc = SuperSeries.zero(ss.alg)
        for l in range(m):
            acc = acc + ss.etabar(l).scale(g[u][l])
        gbar.append(acc.nu_shift(-1).with_time(0, 1))

    def A(Q):
        out = omega_term * Q
        for k in range(m):
            for u in range(m):
                Rk = curv.Rhat[k][u]
                if Rk.is_zero():
                    continue
                inner = Q.d_eta(u) + gbar[u] * Q
                out = out + ss.eta(k) * Rk * inner
        return out

    def integrate(Q):
        t = {}
        for key, v in Q.terms.items():
            _acc(t, key[:4] + (key[4] + 1,), v * Fraction(1, key[4] + 1))
        return SuperSeries(Q.alg, t, Q.window)

    one = SuperSeries.base(ss.alg, 1)
    Q = one
    for _ in range(4 * m + 4):
        Qn = one + integrate(A(Q))
        if (Qn - Q).is_zero():
            return Q
        Q = Qn
    raise DivergentTerm("Picard iteration for the rescaled flow did not terminate")


def rescaled_closed_form(ss, curv=None):
    """exp{i t omega_hat - h~} divided by e^{t phi}."""
    curv = curv or CurvatureData(ss)
    tphi = ss.phi.with_time(0, 1)
    E = ss.omega_hat.scale(ss.alg.I).with_time(0, 1) - curv.h_tilde() - tphi
    return E.exp()


def rescaled_residual(ss, Q, L0=None):
    """e^{-t phi} (d/dt - L0) e^{t phi} Q."""
    L0 = L0 if L0 is not None else lambda_component(ss.sigma_operator(), 2)
    tphi = ss.phi.with_time(0, 1)
    return Q.d_t() + ss.phi * Q - L0.apply(Q, -tphi, Window())


def rescale_operator(op, s):
    """s^2 lambda_s^{-1} op lambda_s."""
    s = Fraction(s)
    out = SuperDiffOp(op.alg, {}, op.window)
    for dk, C in op.terms.items():
        f = sum(dk[1]) + popcount(dk[2])
        out._acc(dk, C.rescale(1 / s).scale(s ** (2 + f)))
    return out


def conjugation_check(flow, s, window=None):
    """Residual of dG/dt = L^s G for G(s,t) = lambda_s^{-1} F(s^2 t)."""
    s = Fraction(s)
    w = window or flow.P.window
    Ps = flow.P.time_scale(s * s).rescale(1 / s)
    Ks = flow.K.time_scale(s * s).rescale(1 / s)
    Ls = rescale_operator(flow.op or flow.ss.sigma_operator(), s)
    sol = FlowSolution(flow.ss, Ks, Ps.truncated(w), Ls)
    return sol.residual(w)
