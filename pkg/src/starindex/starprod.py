"""Star products with separation of variables on a chart.

The left multiplication operator L_f = sum nu^r A_r is found by a
triangular solve: A_r contains only holomorphic derivatives, A_r 1 = 0 for
r >= 1, and L_f commutes with R_{dPhi/dzb^l} = dPhi/dzb^l + d/dzb^l.
Its coefficients are linear in the antiholomorphic jets of f, which gives
the bidifferential table c_r^{beta alpha}:

    f * g = sum nu^r c_r^{beta alpha} (dbar^beta f)(d^alpha g).
"""

import itertools
from fractions import Fraction
from math import comb, factorial

import flint

from .coeffalg import CoeffExpr
from .diffop import SuperDiffOp
from .errors import NonClosedGradient, NonExpressible, SingularMetric
from .superseries import SuperSeries, Window


def multi_indices(m, n):
    """All multi-indices of length m and total order exactly n."""
    if m == 1:
        return [(n,)]
    out = []
    for first in range(n, -1, -1):
        for rest in multi_indices(m - 1, n - first):
            out.append((first,) + rest)
    return out


def multi_upto(m, n):
    return [a for j in range(n + 1) for a in multi_indices(m, j)]


def _add_mi(a, b):
    return tuple(x + y for x, y in zip(a, b))


def _sub_mi(a, b):
    return tuple(x - y for x, y in zip(a, b))


def _unit(m, k):
    e = [0] * m
    e[k] = 1
    return tuple(e)


def _mcomb(a, b):
    r = 1
    for x, y in zip(a, b):
        r *= comb(x, y)
    return r


def _mfact(a):
    r = 1
    for x in a:
        r *= factorial(x)
    return r


def mat_inverse(M):
    """Inverse of a square matrix of CoeffExpr by Gauss-Jordan elimination."""
    n = len(M)
    alg = M[0][0].alg
    A = [list(row) + [alg.one if i == j else alg.zero for j in range(n)] for i, row in enumerate(M)]
    for c in range(n):
        piv = next((r for r in range(c, n) if not A[r][c].is_zero()), None)
        if piv is None:
            raise SingularMetric("matrix is singular")
        A[c], A[piv] = A[piv], A[c]
        inv = A[c][c].invert()
        A[c] = [x * inv for x in A[c]]
        for r in range(n):
            if r != c and not A[r][c].is_zero():
                f = A[r][c]
                A[r] = [x - f * y for x, y in zip(A[r], A[c])]
    return [row[n:] for row in A]


def mat_det(M):
    n = len(M)
    if n == 1:
        return M[0][0]
    alg = M[0][0].alg
    total = alg.zero
    for perm in itertools.permutations(range(n)):
        inv = sum(1 for i in range(n) for j in range(i + 1, n) if perm[i] > perm[j])
        p = alg.one
        for i in range(n):
            p = p * M[i][perm[i]]
        total = total + (p if inv % 2 == 0 else -p)
    return total


class Jets:
    """Cached mixed partial derivatives d^alpha dbar^beta of one coefficient."""

    def __init__(self, e):
        self.e = e
        self.m = e.alg.m
        self.cache = {((0,) * self.m, (0,) * self.m): e}

    def __call__(self, alpha, beta=None):
        m = self.m
        beta = beta or (0,) * m
        key = (tuple(alpha), tuple(beta))
        if key in self.cache:
            return self.cache[key]
        # peel one derivative
        for k in range(m):
            if beta[k]:
                prev = self(alpha, _sub_mi(beta, _unit(m, k)))
                val = prev.partial(m + k)
                break
        else:
            for k in range(m):
                if alpha[k]:
                    prev = self(_sub_mi(alpha, _unit(m, k)), beta)
                    val = prev.partial(k)
                    break
        self.cache[key] = val
        return val


class GeometrySpec:
    """Chart geometry from a formal potential Phi = sum nu^r Phi_r (r >= -1)."""

    def __init__(self, alg, potential, name="chart", metric_override=None, source=None):
        self.alg = alg
        self.m = alg.m
        self.name = name
        self.source = source
        self.potential = {r: alg.coerce(v) for r, v in potential.items()}
        if -1 not in self.potential:
            raise SingularMetric("potential has no nu^-1 component")
        m = self.m
        self.phi_jets = {r: Jets(v) for r, v in self.potential.items()}
        P = self.phi_jets[-1]
        if metric_override is not None:
            self.g = [[alg.coerce(x) for x in row] for row in metric_override]
            self.perturbed = True
        else:
            self.g = [[P(_unit(m, k), _unit(m, l)) for l in range(m)] for k in range(m)]
            self.perturbed = False
        self.det = mat_det(self.g)
        if self.det.is_zero():
            raise SingularMetric("metric determinant vanishes")
        self.ginv = mat_inverse(self.g)
        self._tables = {}
        self._christoffel = None
        self._curv = None

    # g_{k lbar} = g[k][l]; g^{lbar p} = ginv[l][p]
    def metric(self, k, l):
        return self.g[k][l]

    def metric_inv(self, l, k):
        return self.ginv[l][k]

    def log_det_gradient(self, var):
        """d(log det g)/dvar."""
        return self.det.partial(var) / self.det

    def g_d(self, k, p, q):
        """g_{k p qbar} = d g_{k qbar} / dz^p."""
        return self.phi_jets[-1](_add_mi(_unit(self.m, k), _unit(self.m, p)), _unit(self.m, q))

    def g_dd(self, k, p, l, q):
        """g_{k p lbar qbar}."""
        m = self.m
        return self.phi_jets[-1](_add_mi(_unit(m, k), _unit(m, p)), _add_mi(_unit(m, l), _unit(m, q)))

    def g_db(self, a, l, q):
        """g_{a lbar qbar}."""
        m = self.m
        return self.phi_jets[-1](_unit(m, a), _add_mi(_unit(m, l), _unit(m, q)))

    def christoffel(self):
        """Gamma^s_{kp} = g_{kp qbar} g^{qbar s}, indexed [s][k][p]."""
        if self._christoffel is None:
            m, alg = self.m, self.alg
            G = [[[sum((self.g_d(k, p, q) * self.ginv[q][s] for q in range(m)), alg.zero)
                   for p in range(m)] for k in range(m)] for s in range(m)]
            self._christoffel = G
        return self._christoffel

    def christoffel_bar(self):
        """Gammabar^s_{ql} = g^{s p'} g_{p' qbar lbar} (antiholomorphic), indexed [s][q][l]."""
        m, alg = self.m, self.alg
        return [[[sum((self.ginv[s][p] * self.g_db(p, q, l) for p in range(m)), alg.zero)
                  for l in range(m)] for q in range(m)] for s in range(m)]

    def curvature(self):
        """R^u_{k p qbar} = (g_{kp bbar} g^{bbar a} g_{a lbar qbar} - g_{kp lbar qbar}) g^{lbar u},
        indexed [u][k][p][q]."""
        if self._curv is None:
            m, alg = self.m, self.alg
            R = [[[[alg.zero] * m for _ in range(m)] for _ in range(m)] for _ in range(m)]
            for k in range(m):
                for p in range(m):
                    for q in range(m):
                        low = []
                        for l in range(m):
                            s = -self.g_dd(k, p, l, q)
                            for b in range(m):
                                for a in range(m):
                                    s = s + self.g_d(k, p, b) * self.ginv[b][a] * self.g_db(a, l, q)
                            low.append(s)
                        for u in range(m):
                            R[u][k][p][q] = sum((low[l] * self.ginv[l][u] for l in range(m)), alg.zero)
            self._curv = R
        return self._curv

    def phi_series(self, window=None):
        s = SuperSeries.zero(self.alg)
        for r, v in self.potential.items():
            s = s + SuperSeries.base(self.alg, v, r)
        return s if window is None else s.with_window(window)

    def dphi_dnu(self):
        """dPhi/dnu as a dict r -> coefficient."""
        return {r - 1: v * r for r, v in self.potential.items() if r != 0 and not v.is_zero()}

    def perturbed_metric(self, delta):
        """Same potential with the metric replaced by g + delta*I (inconsistent on purpose)."""
        alg = self.alg
        d = alg.coerce(delta)
        g = [[self.g[k][l] + (d if k == l else alg.zero) for l in range(self.m)] for k in range(self.m)]
        return GeometrySpec(alg, self.potential, self.name + "-perturbed", metric_override=g)

    # -- bidifferential table ----------------------------------------
    def table(self, N):
        """c[r][(beta, alpha)] for r <= N."""
        for n in sorted(self._tables, reverse=True):
            if n >= N:
                return {r: self._tables[n][r] for r in range(N + 1)}
        tab = extract_bidiff(self, N)
        self._tables[N] = tab
        return tab


def _jet_add(a, b, scale=1):
    out = dict(a)
    for k, v in b.items():
        s = out[k] + v * scale if k in out else v * scale
        if s.is_zero():
            out.pop(k, None)
        else:
            out[k] = s
    return out


def _jet_scale(a, c):
    out = {}
    for k, v in a.items():
        s = v * c
        if not s.is_zero():
            out[k] = s
    return out


def _op_commutator_fn(m, A, Fj, l_index=None):
    """[A, F] for A = {alpha: jet}, F given by Jets (times dbar_l when l_index set)."""
    out = {}
    for alpha, coef in A.items():
        for gamma in multi_upto(m, sum(alpha)):
            if sum(gamma) == 0 or any(g > a for g, a in zip(gamma, alpha)):
                continue
            dF = Fj(gamma, l_index) if l_index is not None else Fj(gamma)
            if dF.is_zero():
                continue
            c = dF * _mcomb(alpha, gamma)
            tgt = _sub_mi(alpha, gamma)
            out[tgt] = _jet_add(out.get(tgt, {}), _jet_scale(coef, c))
    return out


def extract_bidiff(geom, N):
    """Triangular solve for L_f in jet form; returns c[r][(beta, alpha)]."""
    m, alg = geom.m, geom.alg
    zero_mi = (0,) * m
    ops = [{zero_mi: {zero_mi: alg.one}}]
    ebar = [_unit(m, l) for l in range(m)]
    phis = geom.phi_jets
    for n in range(N):
        B = []
        for l in range(m):
            # dbar_l (A_n) on jet coefficients
            An = ops[n]
            Bl = {}
            for alpha, coef in An.items():
                d = {}
                for beta, c in coef.items():
                    dc = c.partial(m + l)
                    if not dc.is_zero():
                        d = _jet_add(d, {beta: dc})
                    d = _jet_add(d, {_add_mi(beta, ebar[l]): c})
                if d:
                    Bl[alpha] = _jet_add(Bl.get(alpha, {}), d)
            for s in range(0, n + 1):
                if s not in phis or phis[s].e.is_zero():
                    continue
                C = _op_commutator_fn(m, ops[n - s], phis[s], ebar[l])
                for alpha, coef in C.items():
                    Bl[alpha] = _jet_add(Bl.get(alpha, {}), coef, -1)
            B.append(Bl)
        new = {}
        P = phis[-1]
        for j in range(n, -1, -1):
            for bp in multi_indices(m, j):
                rhs = []
                for l in range(m):
                    r = dict(B[l].get(bp, {}))
                    for alpha, coef in new.items():
                        gamma = _sub_mi(alpha, bp)
                        if sum(alpha) < j + 2 or any(g < 0 for g in gamma):
                            continue
                        c = P(gamma, ebar[l]) * _mcomb(alpha, gamma)
                        r = _jet_add(r, _jet_scale(coef, c), -1)
                    rhs.append(r)
                for k in range(m):
                    v = {}
                    for l in range(m):
                        v = _jet_add(v, _jet_scale(rhs[l], geom.ginv[l][k]))
                    alpha = _add_mi(bp, _unit(m, k))
                    val = _jet_scale(v, Fraction(1, bp[k] + 1))
                    if alpha in new:
                        diff = _jet_add(new[alpha], val, -1)
                        if diff:
                            raise SingularMetric("triangular solve is inconsistent at order %d" % (n + 1))
                    else:
                        new[alpha] = val
        ops.append({a: c for a, c in new.items() if c})
    table = {}
    for r, A in enumerate(ops):
        t = {}
        for alpha, coef in A.items():
            for beta, c in coef.items():
                t[(beta, alpha)] = c
        table[r] = t
    return table


def order_bound_ok(table):
    return all(sum(b) <= r and sum(a) <= r for r, t in table.items() for (b, a) in t)


# -- base nu-series helpers (dict r -> CoeffExpr) ---------------------------

def as_nu_dict(alg, f):
    if isinstance(f, dict):
        return {r: alg.coerce(v) for r, v in f.items() if not alg.coerce(v).is_zero()}
    if isinstance(f, SuperSeries):
        out = {}
        for k, v in f.terms.items():
            if any(k[1]) or k[2] or k[3] or k[4]:
                raise ValueError("not a base series")
            out[k[0]] = v
        return out
    e = alg.coerce(f)
    return {} if e.is_zero() else {0: e}


def nu_dict_to_series(alg, d, N=None):
    s = SuperSeries(alg, {}, Window(None, N, None))
    z = (0,) * (2 * alg.m)
    for r, v in d.items():
        if (N is None or r <= N) and not v.is_zero():
            s.terms[(r, z, 0, 0, 0)] = v
    return s


def _nd_add(a, b, scale=1):
    out = dict(a)
    for r, v in b.items():
        s = out[r] + v * scale if r in out else v * scale
        if s.is_zero():
            out.pop(r, None)
        else:
            out[r] = s
    return out


class StarProduct:
    """Star product of a GeometrySpec truncated at nu^N."""

    def __init__(self, geom, N):
        self.geom = geom
        self.alg = geom.alg
        self.m = geom.m
        self.N = N
        self._extra = 0

    def table(self, order):
        return self.geom.table(max(order, 0))

    def star(self, f, g):
        """f * g through nu^N (inputs: coefficients, nu-dicts or base series)."""
        alg, m, N = self.alg, self.m, self.N
        fd, gd = as_nu_dict(alg, f), as_nu_dict(alg, g)
        if not fd or not gd:
            return {}
        lo = min(fd) + min(gd)
        tab = self.table(N - lo)
        fj = {s: Jets(v) for s, v in fd.items()}
        gj = {t: Jets(v) for t, v in gd.items()}
        out = {}
        zero_mi = (0,) * m
        for r, t in tab.items():
            for s, F in fj.items():
                for u, G in gj.items():
                    e = r + s + u
                    if e > N:
                        continue
                    acc = out.get(e, alg.zero)
                    for (beta, alpha), c in t.items():
                        acc = acc + c * F(zero_mi, beta) * G(alpha)
                    out[e] = acc
        return {r: v for r, v in out.items() if not v.is_zero()}

    def C(self, r, f, g):
        """The bidifferential operator C_r(f, g) for coefficients f, g."""
        tab = self.table(r)[r]
        F, G = Jets(self.alg.coerce(f)), Jets(self.alg.coerce(g))
        zero_mi = (0,) * self.m
        acc = self.alg.zero
        for (beta, alpha), c in tab.items():
            acc = acc + c * F(zero_mi, beta) * G(alpha)
        return acc

    def left_op(self, f):
        """L_f as a SuperDiffOp with holomorphic coordinate derivatives."""
        return self._op(f, left=True)

    def right_op(self, f):
        return self._op(f, left=False)

    def _op(self, f, left):
        alg, m, N = self.alg, self.m, self.N
        fd = as_nu_dict(alg, f)
        lo = min(fd) if fd else 0
        tab = self.table(N - lo)
        zero_mi = (0,) * m
        pairs = {}
        for s, v in fd.items():
            F = Jets(v)
            for r, t in tab.items():
                if r + s > N:
                    continue
                for (beta, alpha), c in t.items():
                    if left:
                        coef = c * F(zero_mi, beta)
                        dc = tuple(alpha) + (0,) * m
                    else:
                        coef = c * F(alpha)
                        dc = (0,) * m + tuple(beta)
                    if coef.is_zero():
                        continue
                    dk = (dc, (0,) * (2 * m), 0)
                    pairs[dk] = _nd_add(pairs.get(dk, {}), {r + s: coef})
        op = SuperDiffOp(alg, {}, Window(None, N, None))
        for dk, d in pairs.items():
            op._acc(dk, nu_dict_to_series(alg, d))
        return op

    def apply_base_op(self, op, f):
        out = op.apply(nu_dict_to_series(self.alg, as_nu_dict(self.alg, f)),
                       window=Window(None, self.N, None))
        return as_nu_dict(self.alg, out.truncated(Window(None, self.N, None)))

    # -- Berezin transform -----------------------------------------------
    def berezin(self, f, order=None):
        """I(f) = sum nu^r c_r^{beta alpha} dbar^beta d^alpha f through nu^N."""
        alg, N = self.alg, self.N
        fd = as_nu_dict(alg, f)
        if not fd:
            return {}
        tab = self.table(N - min(fd))
        out = {}
        for s, v in fd.items():
            F = Jets(v)
            for r, t in tab.items():
                if r + s > N:
                    continue
                acc = out.get(r + s, alg.zero)
                for (beta, alpha), c in t.items():
                    acc = acc + c * F(alpha, beta)
                out[r + s] = acc
        return {r: v for r, v in out.items() if not v.is_zero()}

    def berezin_inverse(self, f):
        """I^{-1}(f) = sum_n (1 - I)^n f through nu^N."""
        fd = as_nu_dict(self.alg, f)
        if not fd:
            return {}
        total = dict(fd)
        term = dict(fd)
        for _ in range(self.N - min(fd) + 1):
            term = _nd_add(term, self.berezin(term), -1)
            term = {r: v for r, v in term.items() if r <= self.N}
            if not term:
                break
            total = _nd_add(total, term)
        return total

    # -- nu-derivation -------------------------------------------------
    def delta_A(self):
        """A in delta = d/dnu + A, A = dPhi/dnu - R_{dPhi/dnu}."""
        dphi = self.geom.dphi_dnu()
        R = self.right_op(dphi)
        return SuperDiffOp.mult(nu_dict_to_series(self.alg, dphi)) - R

    def delta(self, f):
        fd = as_nu_dict(self.alg, f)
        d = {r - 1: v * r for r, v in fd.items() if r}
        return _nd_add(d, self.apply_base_op(self.delta_A(), fd))

    def delta_tilde(self, f):
        """d/dnu + dPhi/dnu - L_{dPhi/dnu}."""
        fd = as_nu_dict(self.alg, f)
        dphi = self.geom.dphi_dnu()
        A = SuperDiffOp.mult(nu_dict_to_series(self.alg, dphi)) - self.left_op(dphi)
        d = {r - 1: v * r for r, v in fd.items() if r}
        return _nd_add(d, self.apply_base_op(A, fd))


def lebesgue_transpose_apply(sp, op, rho):
    """A^t(rho) for a base operator A (Lebesgue measure): sum (-1)^|D| D(c rho)."""
    alg = sp.alg
    out = {}
    rho_d = as_nu_dict(alg, rho)
    for dk, C in op.terms.items():
        cd = as_nu_dict(alg, C)
        prod = {}
        for r1, a in cd.items():
            for r2, b in rho_d.items():
                if r1 + r2 <= sp.N:
                    prod = _nd_add(prod, {r1 + r2: a * b})
        order = sum(dk[0])
        for r, v in prod.items():
            x = v
            for i, e in enumerate(dk[0]):
                for _ in range(e):
                    x = x.partial(i)
            if order % 2:
                x = -x
            out = _nd_add(out, {r: x})
    return out


# -- gradient integration ------------------------------------------------

def integrate_gradient(alg, grads):
    """Find w with dw/dz^k = grads[k], dw/dzb^l = grads[m+l] inside the algebra.
    Returns w (up to an additive constant)."""
    m = alg.m
    grads = [alg.coerce(g) for g in grads]
    for i in range(2 * m):
        for j in range(i + 1, 2 * m):
            if not (grads[i].partial(j) - grads[j].partial(i)).is_zero():
                raise NonClosedGradient("gradient is not closed in (%s, %s)"
                                        % (alg.coord_name(i), alg.coord_name(j)))
    if all(g.is_zero() for g in grads):
        return alg.zero
    den = alg._poly_one
    for g in grads:
        if g.den is not None:
            den = den * g.den / den.gcd(g.den)
    maxdeg = max(g.num.total_degree() for g in grads) + 2 + (den.total_degree() if den else 0)
    gen_names = [n for n in alg.names if n != "I"]
    basis = []
    for e in itertools.product(range(maxdeg + 1), repeat=len(gen_names)):
        if sum(e) <= maxdeg:
            p = alg._poly_one
            for n, k in zip(gen_names, e):
                if k:
                    p = p * alg.gens[alg.index[n]] ** k
            basis.append(CoeffExpr.make(alg, p, den))
    basis += [alg.atom(n) for n in alg.atom_names]
    unknowns = []
    for b in basis:
        unknowns.append(b)
        unknowns.append(b * alg.I)
    # linear system: sum x_j d_i(b_j) = grads[i]
    cols = []
    for j, b in enumerate(unknowns):
        col = {}
        for i in range(2 * m):
            d = b.partial(i) * CoeffExpr(alg, den)
            if d.den is not None:
                raise NonExpressible("gradient ansatz left the polynomial class")
            for exps, c in d.num.terms():
                col[(i, tuple(exps))] = Fraction(int(c.p), int(c.q))
        cols.append(col)
    target = {}
    for i, g in enumerate(grads):
        d = g * CoeffExpr(alg, den)
        if d.den is not None:
            raise NonExpressible("gradient has a denominator outside the ansatz")
        for exps, c in d.num.terms():
            target[(i, tuple(exps))] = Fraction(int(c.p), int(c.q))
    keys = sorted(set(target) | {k for c in cols for k in c})
    idx = {k: n for n, k in enumerate(keys)}
    M = flint.fmpq_mat(len(keys), len(cols) + 1)
    for j, col in enumerate(cols):
        for k, v in col.items():
            M[idx[k], j] = flint.fmpq(v.numerator, v.denominator)
    for k, v in target.items():
        M[idx[k], len(cols)] = flint.fmpq(v.numerator, v.denominator)
    R, rank = M.rref()
    sol = [Fraction(0)] * len(cols)
    for r in range(rank):
        lead = next(c for c in range(len(cols) + 1) if R[r, c] != 0)
        if lead == len(cols):
            raise NonExpressible("no antiderivative in the atom algebra")
        v = R[r, len(cols)]
        sol[lead] = Fraction(int(v.p), int(v.q))
    w = alg.zero
    for x, b in zip(sol, unknowns):
        if x:
            w = w + b * x
    for i in range(2 * m):
        if not (w.partial(i) - grads[i]).is_zero():
            raise NonExpressible("antiderivative check failed")
    return w


class TraceDensity:
    """rho with mu = rho dz^1 dzb^1 ... dz^m dzb^m, normalized so that
    rho = nu^-m det(g) (1 + O(nu)) and d rho/d nu = A^t(rho)."""

    def __init__(self, sp, lead_factor=1):
        self.sp = sp
        self.lead_factor = lead_factor
        self.rho, self.w, self.constants = self._solve()

    def _solve(self):
        sp = self.sp
        geom, alg, m = sp.geom, sp.alg, sp.m
        N = sp.N
        # work with enough relative precision: rho ~ nu^-m
        inner = StarProduct(geom, N + m + 1)
        phi = geom.potential
        grads = []
        for i in range(2 * m):
            dphi = {r: v.partial(i) for r, v in phi.items() if not v.partial(i).is_zero()}
            dpsi = inner.berezin_inverse(dphi)
            G = _nd_add(dphi, dpsi, -1)
            if any(r < 0 for r in G):
                raise NonClosedGradient("nu^-1 part of the trace potential does not cancel")
            grads.append(G)
        w = {}
        for r in range(0, N + m + 1):
            gr = [grads[i].get(r, alg.zero) for i in range(2 * m)]
            if r == 0:
                for i in range(2 * m):
                    if not (gr[i] - geom.log_det_gradient(i)).is_zero():
                        raise NonClosedGradient("leading trace potential is not log det g")
                continue
            w[r] = integrate_gradient(alg, gr)
        Wn = nu_dict_to_series(alg, w, N + m).with_window(Window(None, N + m, None))
        E = Wn.exp(max_terms=N + m + 2) if w else SuperSeries.base(alg, 1).with_window(
            Window(None, N + m, None))
        base = as_nu_dict(alg, E)
        rho0 = {r - m: v * geom.det * self.lead_factor for r, v in base.items()}
        # constants from d rho/d nu = A^t rho
        A = inner.delta_A()
        At = lebesgue_transpose_apply(StarProduct(geom, N), A, rho0)
        drho = {r - 1: v * r for r, v in rho0.items() if r}
        rhs = _nd_add(At, drho, -1)
        # rhs = C'(nu) rho0 -> C' = rhs / rho0
        q = _nd_divide(alg, rhs, rho0, N + m)
        for r, v in q.items():
            if v.depends_on_coords():
                raise NonClosedGradient("nu-normalization ratio depends on the point")
        if q.get(-1) is not None and not q[-1].is_zero():
            raise NonExpressible("nu-normalization needs a log(nu) term")
        consts = {r + 1: v * Fraction(1, r + 1) for r, v in q.items() if r >= 0}
        Cs = nu_dict_to_series(alg, consts, N + m).with_window(Window(None, N + m, None))
        Ce = as_nu_dict(alg, Cs.exp(max_terms=N + m + 2)) if consts else {0: alg.one}
        rho = {}
        for r1, a in rho0.items():
            for r2, b in Ce.items():
                if r1 + r2 <= N:
                    rho = _nd_add(rho, {r1 + r2: a * b})
        return rho, w, consts

    def leading(self):
        r = min(self.rho)
        return r, self.rho[r]

    def trace_residual(self, f):
        """(L_f - R_f)^t(rho) through nu^N."""
        sp = self.sp
        L = sp.left_op(f)
        R = sp.right_op(f)
        return lebesgue_transpose_apply(sp, L - R, self.rho)


def _nd_divide(alg, a, b, N):
    """a / b for nu-dicts, b with invertible leading coefficient, through nu^(N-1)."""
    lo_b = min(b)
    inv_lead = b[lo_b].invert()
    a = dict(a)
    out = {}
    if not a:
        return out
    r = min(a)
    limit = N + 1
    while r <= limit - 1 + lo_b and a:
        if r in a:
            q = a[r] * inv_lead
            e = r - lo_b
            out[e] = q
            for s, v in b.items():
                a = _nd_add(a, {e + s: q * v}, -1)
        a.pop(r, None)
        r += 1
    return {k: v for k, v in out.items() if not v.is_zero() and k <= N - 1}
