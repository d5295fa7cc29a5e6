"""Formal differential operators on SuperSeries.

An operator is a finite sum of terms ``C * D`` in normal order: the
coefficient series C stands to the left of a derivative monomial D.
D is keyed by ``(dc, de, dmask)``:

* ``dc``    exponents of d/dz^1..d/dz^m, d/dzb^1..d/dzb^m,
* ``de``    exponents of d/deta^1.., d/detabar^1..,
* ``dmask`` odd derivatives, bit layout as in superseries.

The odd part of D is the product d/do_1 d/do_2 ... with o_1 < o_2 < ...
(so d/do_last acts first).  Odd derivatives act from the left:
d/dtheta (theta thetabar) = thetabar and d/dtheta (thetabar theta) = -thetabar.
"""

from fractions import Fraction

from .errors import MixedParity, NonUnitDensity, PreconditionViolated
from .superseries import EXACT, SuperSeries, Window, key_deg, mask_sign, mul, popcount


def dkey_order(dk):
    return sum(dk[0]) + sum(dk[1]) + popcount(dk[2])


def dkey_fiber_order(dk):
    return sum(dk[1]) + popcount(dk[2])


def dkey_parity(dk):
    return popcount(dk[2]) & 1


def elementary(dk):
    """Elementary factors of a derivative monomial, leftmost (outermost) first."""
    out = []
    for i, e in enumerate(dk[0]):
        out += [("c", i)] * e
    for j, e in enumerate(dk[1]):
        out += [("e", j)] * e
    b = 0
    mask = dk[2]
    while mask:
        if mask & 1:
            out.append(("o", b))
        mask >>= 1
        b += 1
    return out


def _outer_split(dk):
    """Split D = v * D' with v the outermost elementary factor."""
    dc, de, dm = dk
    for i, e in enumerate(dc):
        if e:
            dc2 = list(dc)
            dc2[i] -= 1
            return ("c", i), (tuple(dc2), de, dm)
    for j, e in enumerate(de):
        if e:
            de2 = list(de)
            de2[j] -= 1
            return ("e", j), (dc, tuple(de2), dm)
    low = dm & -dm
    return ("o", low.bit_length() - 1), (dc, de, dm ^ low)


def _elem_series(F, v):
    if v[0] == "c":
        return F.partial(v[1])
    if v[0] == "e":
        return F.d_eta(v[1])
    return F.d_odd(v[1])


def _mul_elem_key(v, dk):
    """Normal order v * D; returns (sign, key) or None."""
    dc, de, dm = dk
    if v[0] == "c":
        dc2 = list(dc)
        dc2[v[1]] += 1
        return 1, (tuple(dc2), de, dm)
    if v[0] == "e":
        de2 = list(de)
        de2[v[1]] += 1
        return 1, (dc, tuple(de2), dm)
    b = 1 << v[1]
    if dm & b:
        return None
    return mask_sign(b, dm), (dc, de, dm | b)


class SuperDiffOp:
    __slots__ = ("alg", "m", "terms", "window")

    def __init__(self, alg, terms=None, window=EXACT):
        self.alg = alg
        self.m = alg.m
        self.terms = terms if terms is not None else {}
        self.window = window

    def zero_key(self):
        m = self.m
        return ((0,) * (2 * m), (0,) * (2 * m), 0)

    # -- constructors --------------------------------------------------
    @classmethod
    def mult(cls, F):
        """Left multiplication by a series."""
        op = cls(F.alg, {}, F.window)
        if not F.is_zero():
            op.terms[op.zero_key()] = F
        return op

    @classmethod
    def identity(cls, alg, window=EXACT):
        return cls.mult(SuperSeries.base(alg, 1, window=window))

    @classmethod
    def deriv(cls, alg, v, coeff=None, window=EXACT):
        """Elementary derivative; v = ('c', i) | ('e', j) | ('o', bit) or a
        name such as 'z', 'zb', 'eta1', 'etab1', 'th1', 'thb1'."""
        v = parse_var(alg, v)
        op = cls(alg, {}, window)
        sk = _mul_elem_key(v, op.zero_key())
        c = SuperSeries.base(alg, 1, window=window) if coeff is None else coeff
        op.terms[sk[1]] = c
        return op

    @classmethod
    def from_terms(cls, alg, pairs, window=EXACT):
        op = cls(alg, {}, window)
        for dk, C in pairs:
            op._acc(dk, C)
        return op

    def _acc(self, dk, C):
        if C.is_zero():
            return
        if dk in self.terms:
            s = self.terms[dk] + C
            if s.is_zero():
                del self.terms[dk]
            else:
                self.terms[dk] = s
        else:
            self.terms[dk] = C

    def _new(self, terms, window=None):
        return SuperDiffOp(self.alg, terms, self.window if window is None else window)

    # -- inspection ----------------------------------------------------
    def is_zero(self):
        return not self.terms

    def term_degs(self):
        for dk, C in self.terms.items():
            f = dkey_fiber_order(dk)
            for k in C.terms:
                yield key_deg(k) - f

    def lo_deg(self):
        ds = list(self.term_degs())
        return min(ds) if ds else None

    def parity(self):
        ps = set()
        for dk, C in self.terms.items():
            for k in C.terms:
                ps.add((popcount(k[2]) + popcount(dk[2])) & 1)
        if not ps:
            return 0
        if len(ps) == 2:
            return None
        return ps.pop()

    def max_order(self):
        return max((dkey_order(dk) for dk in self.terms), default=0)

    def deg_component(self, i):
        out = {}
        for dk, C in self.terms.items():
            f = dkey_fiber_order(dk)
            t = {k: v for k, v in C.terms.items() if key_deg(k) - f == i}
            if t:
                out[dk] = SuperSeries(self.alg, t, C.window)
        return self._new(out)

    def components(self):
        degs = sorted(set(self.term_degs()))
        return {d: self.deg_component(d) for d in degs}

    def truncated(self, deg_max):
        out = {}
        for dk, C in self.terms.items():
            f = dkey_fiber_order(dk)
            t = {k: v for k, v in C.terms.items() if key_deg(k) - f <= deg_max}
            if t:
                out[dk] = SuperSeries(self.alg, t, C.window)
        return self._new(out, Window(self.window.nu_min, self.window.nu_max, deg_max))

    def order_at_nu(self, r):
        return max((dkey_order(dk) for dk, C in self.terms.items()
                    if any(k[0] == r for k in C.terms)), default=-1)

    # -- linear structure ----------------------------------------------
    def __add__(self, o):
        out = dict(self.terms)
        res = SuperDiffOp(self.alg, out, self.window.meet(o.window))
        for dk, C in o.terms.items():
            res._acc(dk, C)
        return res

    def __neg__(self):
        return self._new({dk: -C for dk, C in self.terms.items()})

    def __sub__(self, o):
        return self + (-o)

    def scale(self, c):
        out = {}
        for dk, C in self.terms.items():
            s = C.scale(c)
            if not s.is_zero():
                out[dk] = s
        return self._new(out)

    def left_mul(self, F):
        """F * self (series on the left)."""
        out = SuperDiffOp(self.alg, {}, self.window)
        for dk, C in self.terms.items():
            out._acc(dk, F * C)
        return out

    def __eq__(self, o):
        if not isinstance(o, SuperDiffOp):
            return NotImplemented
        return (self - o).is_zero()

    __hash__ = None

    def map_coeffs(self, f):
        out = SuperDiffOp(self.alg, {}, self.window)
        for dk, C in self.terms.items():
            out._acc(dk, f(C))
        return out

    # -- action --------------------------------------------------------
    def apply(self, F, conj=None, window=None):
        """Apply to F.  With conj=K, apply e^K A e^(-K) instead (K even),
        each derivative d/dv acting as d/dv - (dK/dv)."""
        return apply(self, F, conj, window)

    def __call__(self, F, conj=None, window=None):
        return apply(self, F, conj, window)

    def __str__(self):
        if not self.terms:
            return "0"
        parts = []
        for dk in sorted(self.terms):
            parts.append("[%s]*%s" % (self.terms[dk], dkey_str(self.alg, dk)))
        return " + ".join(parts)

    __repr__ = __str__


def dkey_str(alg, dk):
    m = alg.m
    s = []
    ix = (lambda j: "") if m == 1 else (lambda j: str(j + 1))
    for i, e in enumerate(dk[0]):
        if e:
            s.append("d/d%s%s" % ("z" if i < m else "zb", ix(i % m)) + ("^%d" % e if e > 1 else ""))
    for j, e in enumerate(dk[1]):
        if e:
            s.append("d/d%s%s" % ("eta" if j < m else "etab", ix(j % m)) + ("^%d" % e if e > 1 else ""))
    for b in range(2 * m):
        if dk[2] >> b & 1:
            s.append("d/d%s%s" % ("th" if b < m else "thb", ix(b % m)))
    return "*".join(s) if s else "1"


def parse_var(alg, v):
    if isinstance(v, tuple):
        return v
    m = alg.m
    for prefix, fam, off in (("etab", "e", m), ("eta", "e", 0), ("thb", "o", m), ("th", "o", 0),
                             ("zb", "c", m), ("z", "c", 0)):
        if v.startswith(prefix):
            rest = v[len(prefix):]
            k = int(rest) - 1 if rest else 0
            if not 0 <= k < m:
                break
            return (fam, off + k)
    raise ValueError("unknown variable %r" % v)


def _conj_terms(alg, K, variables):
    out = {}
    for v in variables:
        if v in out:
            continue
        out[v] = -_elem_series(K, v)
    return out


def _result_window(op, F, window):
    if window is not None:
        return window
    lo_op = op.lo_deg()
    lo_f = F.fdeg() if F.terms else None
    cands = []
    if op.window.deg_max is not None and lo_f is not None:
        cands.append(op.window.deg_max + lo_f)
    if F.window.deg_max is not None and lo_op is not None:
        cands.append(F.window.deg_max + lo_op)
    if cands:
        d = min(cands)
    else:
        d = None
        if op.window.deg_max is not None or F.window.deg_max is not None:
            d = min(x for x in (op.window.deg_max, F.window.deg_max) if x is not None)
    w = op.window.meet(F.window)
    return Window(w.nu_min, w.nu_max, d)


def apply(op, F, conj=None, window=None):
    w = _result_window(op, F, window)
    alg = op.alg
    cterms = None
    bound = None
    if conj is not None and not conj.is_zero():
        if conj.parity() == 1:
            raise PreconditionViolated("conjugation by an odd element")
        vars_used = set()
        for dk in op.terms:
            vars_used.update(elementary(dk))
        cterms = _conj_terms(alg, conj, vars_used)
        if w.deg_max is not None:
            lo_c = min((C.fdeg() for C in op.terms.values() if C.terms), default=0)
            drop = 0
            for v, s in cterms.items():
                dv = -1 if v[0] != "c" else 0
                if s.terms:
                    dv = min(dv, s.fdeg())
                drop = max(drop, -dv)
            bound = w.deg_max - lo_c + drop * op.max_order()
    memo = {}
    zk = op.zero_key()
    memo[zk] = F if bound is None else F.truncated(Window(deg_max=bound))
    inter_w = Window(deg_max=bound) if bound is not None else EXACT

    def get(dk):
        if dk in memo:
            return memo[dk]
        v, rest = _outer_split(dk)
        Y = get(rest)
        R = _elem_series(Y, v)
        if cterms is not None:
            R = R + mul(cterms[v], Y, inter_w)
        memo[dk] = R
        return R

    out = {}
    for dk in sorted(op.terms, key=dkey_order):
        C = op.terms[dk]
        Y = get(dk)
        if Y.is_zero():
            continue
        P = mul(C, Y, w)
        for k, v in P.terms.items():
            if k in out:
                s = out[k] + v
                if s.is_zero():
                    del out[k]
                else:
                    out[k] = s
            else:
                out[k] = v
    return SuperSeries(alg, out, w)


def _d_left(op, v, window):
    """Normal-ordered composition d/dv o op."""
    out = SuperDiffOp(op.alg, {}, window)
    for dk, C in op.terms.items():
        dC = _elem_series(C, v)
        if not dC.is_zero():
            out._acc(dk, dC)
        sk = _mul_elem_key(v, dk)
        if sk is None:
            continue
        sign, nk = sk
        if v[0] == "o":
            # d/do (C X) = (d/do C) X + (-1)^|C| C d/do X, per coefficient term
            even = {k: c for k, c in C.terms.items() if not popcount(k[2]) & 1}
            odd = {k: -c for k, c in C.terms.items() if popcount(k[2]) & 1}
            even.update(odd)
            C2 = SuperSeries(C.alg, even, C.window)
        else:
            C2 = C
        out._acc(nk, C2 if sign == 1 else -C2)
    return out


def compose(A, B, window=None):
    """Normal-ordered product A o B."""
    if window is None:
        da = A.window.deg_max
        db = B.window.deg_max
        la, lb = A.lo_deg(), B.lo_deg()
        cands = []
        if da is not None and lb is not None:
            cands.append(da + lb)
        if db is not None and la is not None:
            cands.append(db + la)
        d = min(cands) if cands else (da if db is None else db if da is None else min(da, db))
        window = Window(None, None, d)
    memo = {A.zero_key(): B}

    def get(dk):
        if dk in memo:
            return memo[dk]
        v, rest = _outer_split(dk)
        R = _d_left(get(rest), v, EXACT)
        memo[dk] = R
        return R

    out = SuperDiffOp(A.alg, {}, window)
    D = window.deg_max
    for dk in sorted(A.terms, key=dkey_order):
        CA = A.terms[dk]
        Bd = get(dk)
        for dk2, C2 in Bd.terms.items():
            f = dkey_fiber_order(dk2)
            w2 = Window(window.nu_min, window.nu_max, None if D is None else D + f)
            P = mul(CA, C2, w2)
            if not P.is_zero():
                out._acc(dk2, P)
    # drop terms beyond the window degree
    if D is not None:
        out = out.truncated(D)
        out.window = window
    return out


def supercommutator(A, B, window=None):
    pa, pb = A.parity(), B.parity()
    if pa is None or pb is None:
        raise MixedParity("supercommutator needs homogeneous parities")
    s = -1 if (pa and pb) else 1
    return compose(A, B, window) - compose(B, A, window).scale(s)


def commutator(A, B, window=None):
    return compose(A, B, window) - compose(B, A, window)


def transpose(A, density=None):
    """Transpose with respect to density * (Berezin-Lebesgue measure):
    (d/dv)^t = -d/dv - d(log density)/dv, (C D)^t = (-1)^{|C||D|} D^t C."""
    alg = A.alg
    w = A.window
    if density is None:
        logd = None
    else:
        if not isinstance(density, SuperSeries):
            density = SuperSeries.base(alg, density)
        try:
            inv = density.inverse()
        except Exception as exc:
            raise NonUnitDensity(str(exc)) from None
        logd = (density, inv)
    cache = {}

    def elem_t(v):
        if v in cache:
            return cache[v]
        op = SuperDiffOp.deriv(alg, v).scale(-1)
        if logd is not None:
            g = _elem_series(logd[0], v)
            if not g.is_zero():
                op = op + SuperDiffOp.mult(-(logd[1] * g))
        cache[v] = op
        return op

    out = SuperDiffOp(alg, {}, w)
    for dk, C in A.terms.items():
        es = elementary(dk)
        odd = [v for v in es if v[0] == "o"]
        n = len(odd)
        sign = -1 if (n * (n - 1) // 2) & 1 else 1
        # split C into parity parts for (-1)^{|C||D|}
        pd = n & 1
        for par in (0, 1):
            Cp = SuperSeries(alg, {k: c for k, c in C.terms.items() if popcount(k[2]) & 1 == par},
                             C.window)
            if Cp.is_zero():
                continue
            s = sign * (-1 if (par and pd) else 1)
            T = SuperDiffOp.mult(Cp)
            for v in es:
                T = compose(elem_t(v), T, EXACT)
            out = out + T.scale(s)
    out.window = w
    if w.deg_max is not None:
        out = out.truncated(w.deg_max)
    return out


def naturality_check(A):
    for dk, C in A.terms.items():
        o = dkey_order(dk)
        for k in C.terms:
            if k[0] < 0 or k[0] < o:
                return False
    return True


def conjugate_by_exp(A, K, window=None, max_terms=64):
    """e^K A e^(-K) as the ad-series sum (ad K)^n A / n!."""
    if K.is_zero():
        return A
    if K.parity() != 0:
        raise PreconditionViolated("K must be even")
    fk = K.fdeg()
    if fk < -1 or (fk == -1 and (A.lo_deg() or 0) < 0):
        raise PreconditionViolated("conjugation outside the natural cases")
    Kop = SuperDiffOp.mult(K)
    w = window or A.window
    result = A
    term = A
    for n in range(1, max_terms):
        term = commutator(Kop, term, w).scale(Fraction(1, n))
        if term.is_zero():
            return result
        result = result + term
    raise PreconditionViolated("ad-series did not terminate in the window")
