"""Windowed formal nu-Laurent series over TU + PiTU.

A term is keyed by ``(r, ex, mask, k, l)``:

* ``r``    exponent of nu,
* ``ex``   exponents of eta^1..eta^m, etabar^1..etabar^m,
* ``mask`` odd variables; bit j < m is theta^(j+1), bit m + j is thetabar^(j+1),
  multiplied in increasing bit order,
* ``k, l`` time dependence e^(-k t) t^l (both 0 for static series).

The standard degree of a term is 2r + |ex| + popcount(mask).
"""

from fractions import Fraction
from functools import lru_cache

from .coeffalg import CoeffExpr, Scalar
from .errors import EmptyWindow, NonConvergentWindow, OutOfWindow, ZeroElement


class Window:
    __slots__ = ("nu_min", "nu_max", "deg_max")

    def __init__(self, nu_min=None, nu_max=None, deg_max=None):
        if nu_min is not None and nu_max is not None and nu_min > nu_max:
            raise EmptyWindow("nu_min %d > nu_max %d" % (nu_min, nu_max))
        self.nu_min = nu_min
        self.nu_max = nu_max
        self.deg_max = deg_max

    def admits(self, r, d):
        if self.deg_max is not None and d > self.deg_max:
            return False
        if self.nu_max is not None and r > self.nu_max:
            return False
        if self.nu_min is not None and r < self.nu_min:
            return False
        return True

    def meet(self, o):
        return Window(_opt(max, self.nu_min, o.nu_min), _opt(min, self.nu_max, o.nu_max),
                      _opt(min, self.deg_max, o.deg_max))

    def __eq__(self, o):
        return (self.nu_min, self.nu_max, self.deg_max) == (o.nu_min, o.nu_max, o.deg_max)

    def as_dict(self):
        return {"nu_min": self.nu_min, "nu_max": self.nu_max, "deg_max": self.deg_max}

    def __repr__(self):
        return "Window(nu_min=%s, nu_max=%s, deg_max=%s)" % (self.nu_min, self.nu_max, self.deg_max)


EXACT = Window()


def _opt(f, a, b):
    if a is None:
        return b
    if b is None:
        return a
    return f(a, b)


def _add_opt(a, b):
    return None if a is None or b is None else a + b


@lru_cache(maxsize=None)
def mask_sign(a, b):
    """Sign of (odd monomial a)*(odd monomial b) -> sorted monomial a|b."""
    n = 0
    bb = b
    while bb:
        low = bb & -bb
        n += bin(a & ~((low << 1) - 1)).count("1")
        bb ^= low
    return -1 if n & 1 else 1


@lru_cache(maxsize=None)
def popcount(x):
    return bin(x).count("1")


def key_deg(key):
    return 2 * key[0] + sum(key[1]) + popcount(key[2])


class SuperSeries:
    __slots__ = ("alg", "m", "terms", "window")

    def __init__(self, alg, terms=None, window=EXACT):
        self.alg = alg
        self.m = alg.m
        self.terms = terms if terms is not None else {}
        self.window = window

    # -- constructors --------------------------------------------------
    @classmethod
    def zero(cls, alg, window=EXACT):
        return cls(alg, {}, window)

    @classmethod
    def base(cls, alg, f, r=0, window=EXACT):
        """nu^r * f for a coefficient f."""
        f = alg.coerce(f)
        s = cls(alg, {}, window)
        if not f.is_zero():
            s.terms[(r, (0,) * (2 * alg.m), 0, 0, 0)] = f
        return s.truncated()

    @classmethod
    def monomial(cls, alg, coeff=1, r=0, eta=None, etabar=None, theta=(), thetabar=(),
                 window=EXACT):
        """coeff * nu^r * eta^a * etabar^b * theta_{i1}... * thetabar_{j1}...
        with the odd factors multiplied in the given order (0-based indices)."""
        m = alg.m
        ex = tuple(eta or (0,) * m) + tuple(etabar or (0,) * m)
        sign, mask = 1, 0
        for bit in [t for t in theta] + [m + t for t in thetabar]:
            b = 1 << bit
            if mask & b:
                return cls(alg, {}, window)
            sign *= mask_sign(mask, b)
            mask |= b
        c = alg.coerce(coeff) * sign
        s = cls(alg, {}, window)
        if not c.is_zero():
            s.terms[(r, ex, mask, 0, 0)] = c
        return s.truncated()

    @classmethod
    def eta(cls, alg, k, window=EXACT):
        e = [0] * alg.m
        e[k] = 1
        return cls.monomial(alg, eta=e, window=window)

    @classmethod
    def etabar(cls, alg, k, window=EXACT):
        e = [0] * alg.m
        e[k] = 1
        return cls.monomial(alg, etabar=e, window=window)

    @classmethod
    def theta(cls, alg, k, window=EXACT):
        return cls.monomial(alg, theta=(k,), window=window)

    @classmethod
    def thetabar(cls, alg, k, window=EXACT):
        return cls.monomial(alg, thetabar=(k,), window=window)

    def copy(self):
        return SuperSeries(self.alg, dict(self.terms), self.window)

    def _new(self, terms, window=None):
        return SuperSeries(self.alg, terms, self.window if window is None else window)

    def with_window(self, window):
        return SuperSeries(self.alg, dict(self.terms), window).truncated()

    def truncated(self, window=None):
        w = self.window if window is None else window
        t = {k: v for k, v in self.terms.items() if w.admits(k[0], key_deg(k))}
        return SuperSeries(self.alg, t, w)

    # -- inspection ----------------------------------------------------
    def is_zero(self):
        return not self.terms

    def __bool__(self):
        return bool(self.terms)

    def __len__(self):
        return len(self.terms)

    def __iter__(self):
        return iter(self.terms.items())

    def parity(self):
        ps = {popcount(k[2]) & 1 for k in self.terms}
        if not ps:
            return 0
        if len(ps) == 2:
            return None
        return ps.pop()

    def fdeg(self):
        if not self.terms:
            raise ZeroElement("fdeg of zero")
        return min(key_deg(k) for k in self.terms)

    def degs(self):
        return sorted({key_deg(k) for k in self.terms})

    def nu_range(self):
        if not self.terms:
            raise ZeroElement("nu range of zero")
        rs = [k[0] for k in self.terms]
        return min(rs), max(rs)

    def fiber_degree_min(self):
        return min(sum(k[1]) + popcount(k[2]) for k in self.terms)

    def deg_component(self, i):
        if self.window.deg_max is not None and i > self.window.deg_max:
            raise OutOfWindow("degree %d beyond window %d" % (i, self.window.deg_max))
        return self._new({k: v for k, v in self.terms.items() if key_deg(k) == i})

    def components(self):
        out = {}
        for k, v in self.terms.items():
            out.setdefault(key_deg(k), {})[k] = v
        return {d: self._new(t) for d, t in sorted(out.items())}

    def holo_degree(self, key):
        m = self.m
        return sum(key[1][:m]) + popcount(key[2] & ((1 << m) - 1))

    def antiholo_degree(self, key):
        m = self.m
        return sum(key[1][m:]) + popcount(key[2] >> m)

    def submodule_membership(self):
        in_jr = all(self.holo_degree(k) > 0 for k in self.terms)
        in_jl = all(self.antiholo_degree(k) > 0 for k in self.terms)
        return {"in_Jl": in_jl, "in_Jr": in_jr}

    def in_JlJr(self):
        """Every term lies in J_l + J_r (no fiber-constant term)."""
        return all(sum(k[1]) or k[2] for k in self.terms)

    def coefficient(self, r=0, eta=None, etabar=None, mask=0, k=0, l=0):
        m = self.m
        ex = tuple(eta or (0,) * m) + tuple(etabar or (0,) * m)
        return self.terms.get((r, ex, mask, k, l), self.alg.zero)

    def is_static(self):
        return all(k[3] == 0 and k[4] == 0 for k in self.terms)

    def time_keys(self):
        return sorted({(k[3], k[4]) for k in self.terms})

    # -- linear structure ----------------------------------------------
    def _coerce(self, o):
        if isinstance(o, SuperSeries):
            return o
        return SuperSeries.base(self.alg, o)

    def __add__(self, o):
        o = self._coerce(o)
        w = self.window.meet(o.window)
        t = dict(self.terms)
        for k, v in o.terms.items():
            if k in t:
                s = t[k] + v
                if s.is_zero():
                    del t[k]
                else:
                    t[k] = s
            else:
                t[k] = v
        return SuperSeries(self.alg, t, w).truncated()

    __radd__ = __add__

    def __neg__(self):
        return self._new({k: -v for k, v in self.terms.items()})

    def __sub__(self, o):
        return self + (-self._coerce(o))

    def __rsub__(self, o):
        return self._coerce(o) - self

    def scale(self, c):
        """Multiply by a coefficient (CoeffExpr, int, Fraction or Scalar)."""
        if isinstance(c, (int, Fraction)):
            if c == 0:
                return self._new({})
            if c == 1:
                return self
            return self._new({k: v * c for k, v in self.terms.items()})
        c = self.alg.coerce(c)
        t = {}
        for k, v in self.terms.items():
            p = v * c
            if not p.is_zero():
                t[k] = p
        return self._new(t)

    def __mul__(self, o):
        if not isinstance(o, SuperSeries):
            return self.scale(o)
        return mul(self, o)

    def __rmul__(self, o):
        return self.scale(o)

    def __eq__(self, o):
        if isinstance(o, (int, Fraction, Scalar, CoeffExpr)):
            o = self._coerce(o)
        if not isinstance(o, SuperSeries):
            return NotImplemented
        return (self - o).is_zero()

    __hash__ = None

    # -- maps ----------------------------------------------------------
    def map_keys(self, f):
        """Apply f(key) -> (key', factor) termwise; factor None drops the term."""
        t = {}
        for k, v in self.terms.items():
            res = f(k)
            if res is None:
                continue
            k2, c = res
            v2 = v * c if c != 1 else v
            if k2 in t:
                v2 = t[k2] + v2
            if v2.is_zero():
                t.pop(k2, None)
            else:
                t[k2] = v2
        return t

    def map_coeffs(self, f):
        t = {}
        for k, v in self.terms.items():
            c = f(v)
            if not c.is_zero():
                t[k] = c
        return t

    def euler_apply(self, which="E"):
        deg = self.holo_degree if which == "E" else self.antiholo_degree
        return self._new(self.map_keys(lambda k: (k, deg(k)) if deg(k) else None))

    def rescale(self, s):
        s = Fraction(s)

        def f(k):
            n = sum(k[1]) + popcount(k[2])
            return k, s ** n

        return self._new(self.map_keys(f), EXACT if self.window.deg_max is None else self.window)

    def partial(self, var):
        """Derivative of the coefficients with respect to a chart coordinate."""
        return self._new(self.map_coeffs(lambda c: c.partial(var)))

    def d_eta(self, j):
        """d/d(eta or etabar) with j in 0..2m-1 indexing the even fiber vector."""
        def f(k):
            e = k[1][j]
            if not e:
                return None
            ex = list(k[1])
            ex[j] -= 1
            return (k[0], tuple(ex), k[2], k[3], k[4]), e
        return self._new(self.map_keys(f))

    def d_odd(self, bit):
        """Left derivative with respect to the odd variable of the given bit."""
        b = 1 << bit

        def f(k):
            if not k[2] & b:
                return None
            sign = -1 if popcount(k[2] & (b - 1)) & 1 else 1
            return (k[0], k[1], k[2] ^ b, k[3], k[4]), sign
        return self._new(self.map_keys(f))

    def mul_monomial(self, r=0, ex=None, mask=0, coeff=None, left=True):
        """Multiply by the monomial nu^r * fiber(ex) * odd(mask) on the left or right."""
        m = self.m
        ex = ex or (0,) * (2 * m)
        t = {}
        for k, v in self.terms.items():
            if k[2] & mask:
                continue
            sign = mask_sign(mask, k[2]) if left else mask_sign(k[2], mask)
            key = (k[0] + r, tuple(a + b for a, b in zip(k[1], ex)), k[2] | mask, k[3], k[4])
            c = v if sign == 1 else -v
            if coeff is not None:
                c = c * coeff
            t[key] = c
        return self._new(t).truncated()

    def nu_shift(self, r):
        return self._new({(k[0] + r,) + k[1:]: v for k, v in self.terms.items()},
                         _shift_window(self.window, r))

    def d_nu(self):
        def f(k):
            if k[0] == 0:
                return None
            return (k[0] - 1,) + k[1:], k[0]
        w = self.window
        w = Window(_add_opt(w.nu_min, -1), _add_opt(w.nu_max, -1), _add_opt(w.deg_max, -2))
        return self._new(self.map_keys(f), w)

    def zeta(self):
        """Set eta = etabar = 0."""
        return self._new({k: v for k, v in self.terms.items() if not any(k[1])})

    def set_antiholo_zero(self):
        """Set etabar = thetabar = 0."""
        m = self.m
        return self._new({k: v for k, v in self.terms.items()
                          if not any(k[1][m:]) and not k[2] >> m})

    def set_holo_zero(self):
        m = self.m
        return self._new({k: v for k, v in self.terms.items()
                          if not any(k[1][:m]) and not k[2] & ((1 << m) - 1)})

    def top_odd(self):
        """Coefficient series of theta^1..theta^m thetabar^1..thetabar^m."""
        full = (1 << (2 * self.m)) - 1
        return self._new({k[:2] + (0,) + k[3:]: v for k, v in self.terms.items() if k[2] == full})

    # -- time ---------------------------------------------------------
    def d_t(self):
        t = {}
        for key, v in self.terms.items():
            k, l = key[3], key[4]
            if k:
                _acc(t, key, v * (-Fraction(k)))
            if l:
                _acc(t, key[:4] + (l - 1,), v * l)
        return self._new(t)

    def time_scale(self, c):
        """Substitute t -> c*t."""
        c = Fraction(c)
        t = {}
        for key, v in self.terms.items():
            k, l = key[3], key[4]
            k2 = _norm_rat(Fraction(k) * c)
            _acc(t, key[:3] + (k2, l), v * (c ** l))
        return self._new(t)

    def at_time_zero(self):
        t = {}
        for key, v in self.terms.items():
            if key[4] == 0:
                _acc(t, key[:3] + (0, 0), v)
        return self._new(t)

    def time_part(self, k, l):
        return self._new({key[:3] + (0, 0): v for key, v in self.terms.items()
                          if key[3] == k and key[4] == l})

    def with_time(self, k, l):
        return self._new({key[:3] + (key[3] + k, key[4] + l): v for key, v in self.terms.items()})

    # -- exponentials --------------------------------------------------
    def exp(self, max_terms=None):
        """exp of an even element that is nilpotent or has fdeg >= 1 within the window."""
        if self.parity() == 1:
            raise ValueError("exp of an odd element")
        result = self._new({}).__add__(1).with_window(self.window)
        power = result
        limit = max_terms or (4 * self.m + (self.window.deg_max or 0) + 8)
        for n in range(1, limit + 1):
            power = mul(power, self, self.window).scale(Fraction(1, n))
            if power.is_zero():
                return result
            result = result + power
        raise NonConvergentWindow("exp series did not terminate in the window")

    def log1p(self, max_terms=None):
        """log(1 + self) for self nilpotent or of fdeg >= 1."""
        result = self._new({})
        power = self.with_window(self.window)
        limit = max_terms or (4 * self.m + (self.window.deg_max or 0) + 8)
        for n in range(1, limit + 1):
            if power.is_zero():
                return result
            result = result + power.scale(Fraction((-1) ** (n + 1), n))
            power = mul(power, self, self.window)
        raise NonConvergentWindow("log series did not terminate in the window")

    def inverse(self):
        """Inverse of a series whose fiber-free leading part is a unit."""
        lead_keys = [k for k in self.terms if not any(k[1]) and not k[2] and not k[3] and not k[4]]
        if not lead_keys:
            raise ZeroElement("no invertible leading part")
        r0 = min(k[0] for k in lead_keys)
        c0 = self.terms[(r0, (0,) * (2 * self.m), 0, 0, 0)]
        inv0 = SuperSeries.base(self.alg, c0.invert(), -r0)
        rest = (self * inv0) - 1
        w = self.window
        if w.deg_max is not None:
            w = Window(w.nu_min, w.nu_max, w.deg_max - 2 * r0)
        rest = rest.with_window(w)
        acc = SuperSeries.base(self.alg, 1).with_window(w)
        power = acc
        limit = 4 * self.m + (w.deg_max or 0) + 8
        for _ in range(limit):
            power = -mul(power, rest, w)
            if power.is_zero():
                return (acc * inv0)
            acc = acc + power
        raise NonConvergentWindow("inverse series did not terminate in the window")

    # -- display -------------------------------------------------------
    def sorted_terms(self):
        return sorted(self.terms.items(), key=lambda kv: (kv[0][0], kv[0][1], kv[0][2],
                                                          Fraction(kv[0][3]), kv[0][4]))

    def monomial_str(self, key):
        m = self.m
        r, ex, mask, k, l = key
        parts = []
        if r:
            parts.append("nu" if r == 1 else "nu^%d" % r)
        for j in range(m):
            if ex[j]:
                parts.append(_pw("eta%s" % _ix(j, m), ex[j]))
        for j in range(m):
            if ex[m + j]:
                parts.append(_pw("etab%s" % _ix(j, m), ex[m + j]))
        for j in range(2 * m):
            if mask >> j & 1:
                parts.append(("th%s" if j < m else "thb%s") % _ix(j % m, m))
        if k:
            parts.append("exp(-%s*t)" % k if k != 1 else "exp(-t)")
        if l:
            parts.append(_pw("t", l))
        return "*".join(parts) if parts else "1"

    def __str__(self):
        if not self.terms:
            return "0"
        return " + ".join("(%s)*%s" % (v, self.monomial_str(k)) for k, v in self.sorted_terms())

    def __repr__(self):
        return "SuperSeries(%s)" % self


def _pw(s, e):
    return s if e == 1 else "%s^%d" % (s, e)


def _ix(j, m):
    return "" if m == 1 else str(j + 1)


def _acc(t, key, v):
    if key in t:
        v = t[key] + v
    if v.is_zero():
        t.pop(key, None)
    else:
        t[key] = v


def _norm_rat(x):
    x = Fraction(x)
    return int(x) if x.denominator == 1 else x


def _shift_window(w, r):
    return Window(_add_opt(w.nu_min, r), _add_opt(w.nu_max, r), _add_opt(w.deg_max, 2 * r))


def _lo(s):
    if s.terms:
        return min(key_deg(k) for k in s.terms)
    return None


def product_window(a, b):
    """Largest window on which a*b is determined by the stored terms."""
    wa, wb = a.window, b.window
    la, lb = _lo(a), _lo(b)
    cands = []
    if wa.deg_max is not None:
        cands.append(None if lb is None else wa.deg_max + lb)
    if wb.deg_max is not None:
        cands.append(None if la is None else wb.deg_max + la)
    cands = [c for c in cands if c is not None]
    if not cands and (wa.deg_max is not None or wb.deg_max is not None):
        # a zero factor: the product is determined up to the other bound
        d = _opt(min, wa.deg_max, wb.deg_max)
    else:
        d = min(cands) if cands else None
    n_max = None
    if wa.nu_max is not None or wb.nu_max is not None:
        ca = []
        if wa.nu_max is not None and b.terms:
            ca.append(wa.nu_max + min(k[0] for k in b.terms))
        if wb.nu_max is not None and a.terms:
            ca.append(wb.nu_max + min(k[0] for k in a.terms))
        n_max = min(ca) if ca else _opt(min, wa.nu_max, wb.nu_max)
    n_min = None
    if wa.nu_min is not None or wb.nu_min is not None:
        ca = []
        if wa.nu_min is not None and b.terms:
            ca.append(wa.nu_min + max(k[0] for k in b.terms))
        if wb.nu_min is not None and a.terms:
            ca.append(wb.nu_min + max(k[0] for k in a.terms))
        n_min = max(ca) if ca else _opt(max, wa.nu_min, wb.nu_min)
    return Window(n_min, n_max, d)


def mul(a, b, window=None):
    """Koszul-signed pointwise product."""
    w = product_window(a, b) if window is None else window
    D = w.deg_max
    ta = sorted(((key_deg(k), k, v) for k, v in a.terms.items()), key=lambda x: x[0])
    tb = sorted(((key_deg(k), k, v) for k, v in b.terms.items()), key=lambda x: x[0])
    out = {}
    for da, ka, va in ta:
        ra, exa, ma, kka, la = ka
        for db, kb, vb in tb:
            if D is not None and da + db > D:
                break
            mb = kb[2]
            if ma & mb:
                continue
            r = ra + kb[0]
            if (w.nu_max is not None and r > w.nu_max) or (w.nu_min is not None and r < w.nu_min):
                continue
            key = (r, tuple(x + y for x, y in zip(exa, kb[1])), ma | mb, kka + kb[3], la + kb[4])
            c = va * vb
            if mask_sign(ma, mb) < 0:
                c = -c
            if key in out:
                c = out[key] + c
                if c.is_zero():
                    del out[key]
                    continue
            out[key] = c
    return SuperSeries(a.alg, out, w)


def supercommutes(a, b):
    pa, pb = a.parity(), b.parity()
    return (a * b) - (b * a).scale(-1 if (pa and pb) else 1)
