"""Exact differential coefficient algebra.

Elements are fractions N/D of polynomials in the chart coordinates
z1..zm, zb1..zbm, declared atoms and the imaginary unit I.  Atoms carry
derivative rules, so the algebra is closed under d/dz and d/dzb.

Two kinds of side relations are reduced eagerly:

* ``I**2 + 1``
* inverse relations ``a*P - c`` (e.g. ``u*(1 + z*zb) - 1``), which make
  the atom ``a`` stand for ``c/P``.

Numerators are kept in normal form modulo the relations and denominators
are kept free of I and of inverse atoms, so zero testing is a polynomial
zero test.
"""

import ast
from fractions import Fraction

import flint

from .errors import InconsistentRules, ParseError, ZeroInverse


def _fmpq(x):
    if isinstance(x, int):
        return flint.fmpq(x)
    x = Fraction(x)
    return flint.fmpq(x.numerator, x.denominator)


class Scalar:
    """Gaussian rational re + i*im."""

    __slots__ = ("re", "im")

    def __init__(self, re=0, im=0):
        self.re = Fraction(re)
        self.im = Fraction(im)

    @staticmethod
    def of(x):
        if isinstance(x, Scalar):
            return x
        if isinstance(x, complex):
            raise TypeError("floating point values are not allowed")
        return Scalar(x)

    def __add__(self, o):
        o = Scalar.of(o)
        return Scalar(self.re + o.re, self.im + o.im)

    __radd__ = __add__

    def __neg__(self):
        return Scalar(-self.re, -self.im)

    def __sub__(self, o):
        return self + (-Scalar.of(o))

    def __rsub__(self, o):
        return Scalar.of(o) - self

    def __mul__(self, o):
        o = Scalar.of(o)
        return Scalar(self.re * o.re - self.im * o.im, self.re * o.im + self.im * o.re)

    __rmul__ = __mul__

    def conjugate(self):
        return Scalar(self.re, -self.im)

    def __truediv__(self, o):
        o = Scalar.of(o)
        n = o.re * o.re + o.im * o.im
        if n == 0:
            raise ZeroInverse("division of a scalar by zero")
        p = self * o.conjugate()
        return Scalar(p.re / n, p.im / n)

    def __rtruediv__(self, o):
        return Scalar.of(o) / self

    def __pow__(self, n):
        if n < 0:
            return Scalar(1) / (self ** (-n))
        r = Scalar(1)
        for _ in range(n):
            r = r * self
        return r

    def __eq__(self, o):
        try:
            o = Scalar.of(o)
        except TypeError:
            return NotImplemented
        return self.re == o.re and self.im == o.im

    def __hash__(self):
        return hash((self.re, self.im))

    def __bool__(self):
        return bool(self.re) or bool(self.im)

    def __repr__(self):
        return "Scalar(%s)" % self

    def __str__(self):
        if not self.im:
            return str(self.re)
        if not self.re:
            return "%s*i" % _paren(self.im)
        return "(%s + %s*i)" % (self.re, _paren(self.im))


def _paren(q):
    s = str(q)
    return "(%s)" % s if ("/" in s or s.startswith("-")) else s


class Atom:
    __slots__ = ("name", "deriv_z", "deriv_zbar")

    def __init__(self, name, deriv_z, deriv_zbar):
        self.name = name
        self.deriv_z = tuple(deriv_z)
        self.deriv_zbar = tuple(deriv_zbar)

    parity = 0


class CoeffAlgebra:
    """Coordinates, atoms and side relations of one chart."""

    def __init__(self, m, atoms=(), relations=(), free_atoms=()):
        """atoms: iterable of (name, [dz rule strings], [dzb rule strings]).
        free_atoms: names of atoms with zero coordinate derivatives (symbolic
        parameters).  relations: strings ``expr`` meaning expr = 0, or
        ``lhs = rhs``."""
        if m < 1:
            raise ParseError("chart dimension must be positive")
        self.m = m
        atoms = list(atoms)
        free_atoms = list(free_atoms)
        self.zn = ["z%d" % (k + 1) for k in range(m)]
        self.zbn = ["zb%d" % (k + 1) for k in range(m)]
        self.atom_names = [a[0] for a in atoms] + free_atoms
        names = self.zn + self.zbn + self.atom_names + ["I"]
        if len(set(names)) != len(names):
            raise ParseError("duplicate generator names")
        for n in self.atom_names:
            if not n.isidentifier() or n in ("i", "nu", "z", "zb"):
                raise ParseError("bad atom name %r" % n)
        self.names = names
        self.ctx = flint.fmpq_mpoly_ctx.get(tuple(names), "degrevlex")
        self.gens = self.ctx.gens()
        self.index = {n: i for i, n in enumerate(names)}
        self._I = self.gens[-1]
        self._irel = self._I ** 2 + 1
        self._iconj = list(self.gens[:-1]) + [-self._I]
        self._rels = []
        self._inv = []
        self._poly_zero = self.ctx.from_dict({})
        self._poly_one = self.ctx.from_dict({(0,) * len(names): 1})
        self.zero = CoeffExpr(self, self._poly_zero)
        self.one = CoeffExpr(self, self._poly_one)
        # derivative rules as polynomials, indexed [atom][var]
        self._rules = {}
        for name in free_atoms:
            self._rules[name] = [self._poly_zero] * (2 * m)
        raw = {}
        for name, dz, dzb in atoms:
            if len(dz) != m or len(dzb) != m:
                raise ParseError("atom %s needs %d rules per coordinate family" % (name, m))
            raw[name] = list(dz) + list(dzb)
        for name, rules in raw.items():
            polys = []
            for r in rules:
                e = self.parse(r, reduce=False) if isinstance(r, str) else r
                if e.den is not None:
                    raise ParseError("derivative rule of %s must be polynomial" % name)
                polys.append(e.num)
            self._rules[name] = polys
        for rel in relations:
            self._add_relation(rel)
        self._check_rules()

    # -- construction -------------------------------------------------
    def _add_relation(self, text):
        if isinstance(text, str):
            if "=" in text:
                lhs, rhs = text.split("=", 1)
                e = self.parse(lhs, reduce=False) - self.parse(rhs, reduce=False)
            else:
                e = self.parse(text, reduce=False)
        else:
            e = text
        if e.den is not None:
            raise ParseError("relations must be polynomial")
        p = e.num
        degs = p.degrees()
        found = None
        for name in self.atom_names:
            i = self.index[name]
            if degs[i] != 1:
                continue
            # p = a*P + Q with Q a nonzero constant and P free of a
            P = p.derivative(name)
            Q = p - self.gens[i] * P
            if Q.is_constant() and not Q.is_zero() and P.degrees()[i] == 0:
                found = (name, P, -Q.leading_coefficient())
                break
        if found is None:
            raise ParseError("unsupported relation %r: expected atom*P = constant" % (text,))
        name, P, c = found
        for other, _, _ in self._inv:
            if P.degrees()[self.index[other]]:
                raise ParseError("relation for %s refers to inverse atom %s" % (name, other))
        self._rels.append(p)
        self._inv.append((name, P, c))

    def _check_rules(self):
        m = self.m
        for name in self.atom_names:
            a = self.atom(name)
            for k in range(2 * m):
                for l in range(k + 1, 2 * m):
                    d1 = a.partial(k).partial(l)
                    d2 = a.partial(l).partial(k)
                    if not (d1 - d2).is_zero():
                        raise InconsistentRules(
                            "mixed partials of atom %s do not commute (%s, %s)"
                            % (name, self.names[k], self.names[l]))
        for rel in self._rels:
            e = CoeffExpr(self, rel)
            for k in range(2 * m):
                if not e.partial(k).is_zero():
                    raise InconsistentRules(
                        "relation %s is not preserved by d/d%s" % (rel, self.names[k]))

    # -- helpers ------------------------------------------------------
    def reduce(self, p):
        ii = len(self.names) - 1
        degs = p.degrees()
        if degs[ii] >= 2:
            p = p % self._irel
        if self._rels:
            for _ in range(64):
                before = p
                for rel, (name, _, _) in zip(self._rels, self._inv):
                    if p.degrees()[self.index[name]]:
                        p = p % rel
                if p == before:
                    break
        return p

    def const(self, x):
        x = Scalar.of(x)
        p = self._poly_one * _fmpq(x.re)
        if x.im:
            p = p + self._I * _fmpq(x.im)
        return CoeffExpr(self, p)

    def coerce(self, x):
        if isinstance(x, CoeffExpr):
            if x.alg is not self:
                raise ValueError("coefficients from different algebras")
            return x
        return self.const(x)

    def gen(self, name):
        return CoeffExpr(self, self.gens[self.index[name]])

    def z(self, k=0):
        return CoeffExpr(self, self.gens[k])

    def zb(self, k=0):
        return CoeffExpr(self, self.gens[self.m + k])

    def atom(self, name):
        return CoeffExpr(self, self.gens[self.index[name]])

    @property
    def I(self):
        return CoeffExpr(self, self._I)

    def var_index(self, var):
        """Map 'z', 'zb', 'z2', 'zb1' or ('z', k) / ('zb', k) to 0..2m-1."""
        if isinstance(var, int):
            if not 0 <= var < 2 * self.m:
                raise ValueError("bad coordinate index %r" % var)
            return var
        if isinstance(var, tuple):
            fam, k = var
            return k if fam == "z" else self.m + k
        if self.m == 1 and var in ("z", "zb"):
            return 0 if var == "z" else 1
        if var in self.index and self.index[var] < 2 * self.m:
            return self.index[var]
        raise ValueError("%r is not a chart coordinate" % (var,))

    def coord_name(self, i):
        if self.m == 1:
            return "z" if i == 0 else "zb"
        return self.names[i]

    def display_name(self, n):
        if n == "I":
            return "i"
        if n in self.index and self.index[n] < 2 * self.m:
            return self.coord_name(self.index[n])
        return n

    # -- parsing --------------------------------------------------------
    def parse(self, text, reduce=True, symbols=None):
        """Parse an infix expression (+ - * / ^ **, parentheses, integers,
        i for the imaginary unit, coordinates and atoms)."""
        try:
            tree = ast.parse(text.replace("^", "**").strip(), mode="eval")
        except SyntaxError as exc:
            raise ParseError("cannot parse %r: %s" % (text, exc)) from None
        e = self._walk(tree.body, text, symbols or {})
        if reduce:
            e = CoeffExpr.make(self, e.num, e.den)
        return e

    def _walk(self, node, text, symbols):
        if isinstance(node, ast.BinOp):
            a = self._walk(node.left, text, symbols)
            if isinstance(node.op, ast.Pow):
                n = _int_literal(node.right, text)
                return a ** n
            b = self._walk(node.right, text, symbols)
            if isinstance(node.op, ast.Add):
                return a + b
            if isinstance(node.op, ast.Sub):
                return a - b
            if isinstance(node.op, ast.Mult):
                return a * b
            if isinstance(node.op, ast.Div):
                return a / b
        elif isinstance(node, ast.UnaryOp):
            a = self._walk(node.operand, text, symbols)
            if isinstance(node.op, ast.USub):
                return -a
            if isinstance(node.op, ast.UAdd):
                return a
        elif isinstance(node, ast.Constant):
            if isinstance(node.value, int) and not isinstance(node.value, bool):
                return self.const(node.value)
        elif isinstance(node, ast.Name):
            n = node.id
            if n in symbols:
                return symbols[n]
            if n in ("i", "I"):
                return self.I
            if self.m == 1 and n in ("z", "zb"):
                return CoeffExpr(self, self.gens[0 if n == "z" else 1])
            if n in self.index:
                return CoeffExpr(self, self.gens[self.index[n]])
            raise ParseError("unknown symbol %r in %r" % (n, text))
        raise ParseError("unsupported syntax in %r" % text)


def _int_literal(node, text):
    sign = 1
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, ast.USub):
        sign, node = -1, node.operand
    if isinstance(node, ast.Constant) and isinstance(node.value, int):
        return sign * node.value
    raise ParseError("exponents must be integer literals in %r" % text)


class CoeffExpr:
    """Immutable element N/D of a CoeffAlgebra (den None means D = 1)."""

    __slots__ = ("alg", "num", "den")
    __hash__ = None

    def __init__(self, alg, num, den=None):
        self.alg = alg
        self.num = num
        self.den = den

    @staticmethod
    def make(alg, num, den=None):
        num = alg.reduce(num)
        if den is None or den.is_one():
            return CoeffExpr(alg, num)
        if den.is_zero():
            raise ZeroInverse("zero denominator")
        if num.is_zero():
            return CoeffExpr(alg, num)
        # clear inverse atoms from the denominator
        for name, P, c in alg._inv:
            k = den.degrees()[alg.index[name]]
            if k:
                f = P ** k
                num = alg.reduce(num * f)
                den = alg.reduce(den * f)
        if den.degrees()[-1]:
            cj = den.compose(*alg._iconj)
            num = alg.reduce(num * cj)
            den = alg.reduce(den * cj)
        if den.is_zero():
            raise ZeroInverse("zero denominator")
        if den.is_constant():
            c = den.leading_coefficient()
            return CoeffExpr(alg, num / c)
        g = num.gcd(den)
        if not g.is_one():
            num = num / g
            den = den / g
        for name, P, c in alg._inv:
            while True:
                q, r = divmod(den, P)
                if not r.is_zero():
                    break
                den = q
                num = alg.reduce(num * alg.gens[alg.index[name]] / c)
        c = den.leading_coefficient()
        if c != 1:
            num = num / c
            den = den / c
        if den.is_one():
            return CoeffExpr(alg, num)
        return CoeffExpr(alg, num, den)

    # -- arithmetic ----------------------------------------------------
    def _co(self, o):
        if isinstance(o, CoeffExpr):
            return o
        return self.alg.const(o)

    def __add__(self, o):
        o = self._co(o)
        if self.den is None and o.den is None:
            return CoeffExpr(self.alg, self.num + o.num)
        if self.den is None:
            return CoeffExpr.make(self.alg, self.num * o.den + o.num, o.den)
        if o.den is None:
            return CoeffExpr.make(self.alg, self.num + o.num * self.den, self.den)
        if self.den == o.den:
            return CoeffExpr.make(self.alg, self.num + o.num, self.den)
        return CoeffExpr.make(self.alg, self.num * o.den + o.num * self.den, self.den * o.den)

    __radd__ = __add__

    def __neg__(self):
        return CoeffExpr(self.alg, -self.num, self.den)

    def __sub__(self, o):
        return self + (-self._co(o))

    def __rsub__(self, o):
        return self._co(o) - self

    def __mul__(self, o):
        if not isinstance(o, CoeffExpr):
            if isinstance(o, (int, Fraction)):
                if o == 0:
                    return CoeffExpr(self.alg, self.alg._poly_zero)
                return CoeffExpr(self.alg, self.num * _fmpq(o), self.den)
            o = self._co(o)
        if self.den is None and o.den is None:
            return CoeffExpr(self.alg, self.alg.reduce(self.num * o.num))
        d = o.den if self.den is None else (self.den if o.den is None else self.den * o.den)
        return CoeffExpr.make(self.alg, self.num * o.num, d)

    __rmul__ = __mul__

    def invert(self):
        if self.is_zero():
            raise ZeroInverse("inverse of zero")
        den = self.den if self.den is not None else self.alg._poly_one
        return CoeffExpr.make(self.alg, den, self.num)

    def __truediv__(self, o):
        return self * self._co(o).invert()

    def __rtruediv__(self, o):
        return self._co(o) * self.invert()

    def __pow__(self, n):
        if n < 0:
            return self.invert() ** (-n)
        r = self.alg.one
        b = self
        while n:
            if n & 1:
                r = r * b
            n >>= 1
            if n:
                b = b * b
        return r

    def is_zero(self):
        return self.num.is_zero()

    def __bool__(self):
        return not self.num.is_zero()

    def __eq__(self, o):
        if not isinstance(o, (CoeffExpr, int, Fraction, Scalar)):
            return NotImplemented
        return (self - o).is_zero()

    def __ne__(self, o):
        r = self.__eq__(o)
        return r if r is NotImplemented else not r

    # -- calculus ------------------------------------------------------
    def _dpoly(self, p, i):
        alg = self.alg
        r = p.derivative(i)
        degs = p.degrees()
        for name in alg.atom_names:
            j = alg.index[name]
            if degs[j]:
                rule = alg._rules[name][i]
                if not rule.is_zero():
                    r = r + p.derivative(j) * rule
        return alg.reduce(r)

    def partial(self, var):
        i = self.alg.var_index(var)
        dn = self._dpoly(self.num, i)
        if self.den is None:
            return CoeffExpr(self.alg, dn)
        dd = self._dpoly(self.den, i)
        return CoeffExpr.make(self.alg, dn * self.den - self.num * dd, self.den * self.den)

    def partial_gen(self, name):
        """Derivative with respect to a generator treated as independent."""
        i = self.alg.index[name]
        if self.den is None:
            return CoeffExpr(self.alg, self.alg.reduce(self.num.derivative(i)))
        return CoeffExpr.make(self.alg, self.num.derivative(i) * self.den
                              - self.num * self.den.derivative(i), self.den * self.den)

    def subs_gen(self, name, value):
        """Substitute a polynomial CoeffExpr for one generator."""
        alg = self.alg
        value = alg.coerce(value)
        args = list(alg.gens)
        i = alg.index[name]
        if value.den is None:
            args[i] = value.num
            n = self.num.compose(*args)
            d = None if self.den is None else self.den.compose(*args)
            return CoeffExpr.make(alg, n, d)
        raise ValueError("substitution of fractions is not supported")

    # -- inspection ----------------------------------------------------
    def is_constant(self):
        return self.num.is_constant() and self.den is None

    def constant_value(self):
        if self.den is not None:
            return None
        re = Fraction(0)
        im = Fraction(0)
        ii = len(self.alg.names) - 1
        for exps, c in self.num.terms():
            if any(exps[:ii]):
                return None
            c = Fraction(int(c.p), int(c.q))
            if exps[ii] == 0:
                re += c
            else:
                im += c
        return Scalar(re, im)

    def degrees(self):
        d = dict(zip(self.alg.names, self.num.degrees()))
        if self.den is not None:
            for n, e in zip(self.alg.names, self.den.degrees()):
                d[n] = max(d[n], e)
        return d

    def depends_on_coords(self):
        degs = self.degrees()
        names = self.alg.zn + self.alg.zbn + [n for n, _, _ in self.alg._inv]
        names += [n for n in self.alg.atom_names if any(not r.is_zero() for r in self.alg._rules[n])]
        return any(degs[n] for n in names)

    def poly_terms(self):
        """List of (exponent dict, Scalar) of the numerator (den must be 1)."""
        if self.den is not None:
            raise ValueError("not a polynomial")
        return _poly_terms(self.alg, self.num)

    def __repr__(self):
        return "CoeffExpr(%s)" % self

    def __str__(self):
        n = _poly_str(self.alg, self.num)
        if self.den is None:
            return n
        return "(%s)/(%s)" % (n, _poly_str(self.alg, self.den))


def _poly_terms(alg, p):
    ii = len(alg.names) - 1
    out = {}
    for exps, c in p.terms():
        key = tuple(exps[:ii])
        c = Fraction(int(c.p), int(c.q))
        s = out.get(key, Scalar(0))
        out[key] = s + (Scalar(0, c) if exps[ii] else Scalar(c))
    return [(dict(zip(alg.names[:ii], k)), v) for k, v in out.items()]


def _poly_str(alg, p):
    if p.is_zero():
        return "0"
    parts = []
    for exps, c in sorted(p.terms(), key=lambda t: tuple(t[0])):
        mono = []
        for n, e in zip(alg.names, exps):
            if e:
                mono.append(alg.display_name(n) + ("^%d" % e if e > 1 else ""))
        c = Fraction(int(c.p), int(c.q))
        if not mono:
            parts.append(str(c))
        elif c == 1:
            parts.append("*".join(mono))
        elif c == -1:
            parts.append("-" + "*".join(mono))
        else:
            parts.append("%s*%s" % (_paren(c) if c.denominator != 1 else c, "*".join(mono)))
    return " + ".join(parts).replace("+ -", "- ")
