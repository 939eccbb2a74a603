"""Exact polynomial arithmetic in (z_1..z_N, zbar_1..zbar_N).

Coefficients are Gaussian rationals built on ``gmpy2.mpq``.  A term is keyed
by the flat exponent tuple ``I + J`` of length 2N; descending lexicographic
order on that tuple is the canonical term order used for rendering and for
matrix assembly.
"""
from __future__ import annotations

import re
from fractions import Fraction
from math import factorial
from operator import add as _add

from gmpy2 import mpq, mpz

__all__ = [
    "Scalar", "Poly", "DimensionError", "TruncationError", "ParseError",
    "to_q", "add", "mul", "diff", "conjugate", "homogeneous_component",
    "bidegree_component", "substitute", "apply_adjoint", "parse_poly",
    "monomials", "QZERO", "QONE",
]

QZERO = mpq(0)
QONE = mpq(1)


class DimensionError(ValueError):
    pass


class TruncationError(ValueError):
    pass


class ParseError(ValueError):
    def __init__(self, msg, line=1, col=1):
        super().__init__(f"line {line}, column {col}: {msg}")
        self.line = line
        self.col = col


def to_q(x):
    """Coerce int / str / Fraction / mpq to mpq."""
    if isinstance(x, type(QZERO)):
        return x
    if isinstance(x, (int, type(mpz(0)))):
        return mpq(x)
    if isinstance(x, Fraction):
        return mpq(x.numerator, x.denominator)
    if isinstance(x, str):
        s = x.strip()
        if not re.fullmatch(r"[+-]?\d+(/\d+)?", s):
            raise ValueError(f"not a rational: {x!r}")
        if "/" in s:
            a, b = s.split("/")
            if int(b) == 0:
                raise ValueError(f"zero denominator: {x!r}")
            return mpq(int(a), int(b))
        return mpq(int(s))
    raise TypeError(f"cannot convert {type(x).__name__} to an exact rational")


def qstr(q) -> str:
    q = mpq(q)
    if q.denominator == 1:
        return str(q.numerator)
    return f"{q.numerator}/{q.denominator}"


class Scalar:
    """Gaussian rational re + im*i."""

    __slots__ = ("re", "im")

    def __init__(self, re=0, im=0):
        if isinstance(re, Scalar):
            self.re, self.im = re.re, re.im
            return
        self.re = to_q(re)
        self.im = to_q(im)

    @staticmethod
    def _mk(re, im):
        s = object.__new__(Scalar)
        s.re = re
        s.im = im
        return s

    @staticmethod
    def coerce(x) -> "Scalar":
        return x if isinstance(x, Scalar) else Scalar(x)

    def is_zero(self):
        return not self.re and not self.im

    def __bool__(self):
        return bool(self.re) or bool(self.im)

    def is_real(self):
        return not self.im

    def conjugate(self):
        return Scalar._mk(self.re, -self.im)

    def __neg__(self):
        return Scalar._mk(-self.re, -self.im)

    def __add__(self, o):
        if not isinstance(o, Scalar):
            o = Scalar(o)
        return Scalar._mk(self.re + o.re, self.im + o.im)

    __radd__ = __add__

    def __sub__(self, o):
        if not isinstance(o, Scalar):
            o = Scalar(o)
        return Scalar._mk(self.re - o.re, self.im - o.im)

    def __rsub__(self, o):
        return Scalar(o) - self

    def __mul__(self, o):
        if not isinstance(o, Scalar):
            o = Scalar(o)
        a, b, c, d = self.re, self.im, o.re, o.im
        if not b and not d:
            return Scalar._mk(a * c, QZERO)
        return Scalar._mk(a * c - b * d, a * d + b * c)

    __rmul__ = __mul__

    def __truediv__(self, o):
        if not isinstance(o, Scalar):
            o = Scalar(o)
        if o.is_zero():
            raise ZeroDivisionError("division by zero Scalar")
        c, d = o.re, o.im
        den = c * c + d * d
        return Scalar._mk((self.re * c + self.im * d) / den, (self.im * c - self.re * d) / den)

    def __rtruediv__(self, o):
        return Scalar(o) / self

    def __eq__(self, o):
        if isinstance(o, Scalar):
            return self.re == o.re and self.im == o.im
        try:
            o = Scalar(o)
        except (TypeError, ValueError):
            return NotImplemented
        return self.re == o.re and self.im == o.im

    def __hash__(self):
        if not self.im:
            return hash(self.re)
        return hash((self.re, self.im))

    def __repr__(self):
        return f"Scalar({self})"

    def __str__(self):
        re_, im_ = self.re, self.im
        if not im_:
            return qstr(re_)
        ims = _imag_str(im_)
        if not re_:
            return ims
        sign = "" if ims.startswith("-") else "+"
        return f"{qstr(re_)}{sign}{ims}"


def _imag_str(im):
    if im == 1:
        return "i"
    if im == -1:
        return "-i"
    return f"{qstr(im)}*i"


SZERO = Scalar._mk(QZERO, QZERO)
SONE = Scalar._mk(QONE, QZERO)
SI = Scalar._mk(QZERO, QONE)


def monomials(n: int, p: int):
    """All exponent tuples of length n summing to p, in descending lex order."""
    if n == 0:
        if p == 0:
            yield ()
        return
    for first in range(p, -1, -1):
        for rest in monomials(n - 1, p - first):
            yield (first,) + rest


class Poly:
    """Immutable polynomial in N holomorphic and N antiholomorphic variables."""

    __slots__ = ("n", "_t", "_h")

    def __init__(self, n: int, terms=None):
        if n < 0:
            raise DimensionError("negative number of variables")
        self.n = n
        self._h = None
        t = {}
        if terms:
            items = terms.items() if isinstance(terms, dict) else terms
            for key, c in items:
                key = _norm_key(key, n)
                c = Scalar.coerce(c)
                if key in t:
                    c = t[key] + c
                if c:
                    t[key] = c
                else:
                    t.pop(key, None)
        self._t = t

    @staticmethod
    def _raw(n, t):
        p = object.__new__(Poly)
        p.n = n
        p._t = t
        p._h = None
        return p

    # constructors
    @staticmethod
    def zero(n):
        return Poly._raw(n, {})

    @staticmethod
    def const(n, c):
        c = Scalar.coerce(c)
        return Poly._raw(n, {(0,) * (2 * n): c} if c else {})

    @staticmethod
    def z(n, l):
        """Holomorphic variable z_l (1-based)."""
        if not 1 <= l <= n:
            raise IndexError(f"variable index {l} out of range 1..{n}")
        k = [0] * (2 * n)
        k[l - 1] = 1
        return Poly._raw(n, {tuple(k): SONE})

    @staticmethod
    def zbar(n, l):
        if not 1 <= l <= n:
            raise IndexError(f"variable index {l} out of range 1..{n}")
        k = [0] * (2 * n)
        k[n + l - 1] = 1
        return Poly._raw(n, {tuple(k): SONE})

    @staticmethod
    def monomial(I, J=None, c=1):
        I = tuple(I)
        J = tuple(J) if J is not None else (0,) * len(I)
        if len(I) != len(J):
            raise DimensionError("I and J must have equal length")
        return Poly(len(I), {I + J: c})

    # inspection
    def __len__(self):
        return len(self._t)

    def is_zero(self):
        return not self._t

    def __bool__(self):
        return bool(self._t)

    def items(self):
        """Terms in canonical (descending lex on I;J) order."""
        return sorted(self._t.items(), reverse=True)

    def keys(self):
        return self._t.keys()

    def raw(self):
        return self._t

    def coeff(self, I, J=None) -> Scalar:
        key = tuple(I) + tuple(J) if J is not None else tuple(I)
        return self._t.get(key, SZERO)

    def degree(self):
        """Total degree; -1 stands for the zero polynomial."""
        return max((sum(k) for k in self._t), default=-1)

    def weighted_degree(self, weights):
        return max((_wdeg(k, weights) for k in self._t), default=-1)

    def is_homogeneous(self, p=None):
        degs = {sum(k) for k in self._t}
        if not degs:
            return True
        return len(degs) == 1 and (p is None or p in degs)

    def is_real(self):
        return self == self.conjugate()

    def is_holomorphic(self):
        n = self.n
        return all(not any(k[n:]) for k in self._t)

    def conjugate(self):
        n = self.n
        return Poly._raw(n, {k[n:] + k[:n]: c.conjugate() for k, c in self._t.items()})

    # arithmetic
    def _check(self, o):
        if not isinstance(o, Poly):
            o = Poly.const(self.n, o)
        if o.n != self.n:
            raise DimensionError(f"n_vars mismatch: {self.n} vs {o.n}")
        return o

    def __add__(self, o):
        o = self._check(o)
        t = dict(self._t)
        for k, c in o._t.items():
            e = t.get(k)
            if e is None:
                t[k] = c
            else:
                s = e + c
                if s:
                    t[k] = s
                else:
                    del t[k]
        return Poly._raw(self.n, t)

    __radd__ = __add__

    def __neg__(self):
        return Poly._raw(self.n, {k: -c for k, c in self._t.items()})

    def __sub__(self, o):
        return self + (-self._check(o))

    def __rsub__(self, o):
        return self._check(o) - self

    def scale(self, c):
        c = Scalar.coerce(c)
        if not c:
            return Poly._raw(self.n, {})
        return Poly._raw(self.n, {k: v * c for k, v in self._t.items()})

    def __mul__(self, o):
        if isinstance(o, Poly):
            return mul(self, o)
        return self.scale(o)

    def __rmul__(self, o):
        return self.scale(o)

    def __truediv__(self, o):
        return self.scale(SONE / Scalar.coerce(o))

    def __pow__(self, e: int):
        if e < 0:
            raise ValueError("negative power")
        out = Poly.const(self.n, 1)
        base = self
        while e:
            if e & 1:
                out = mul(out, base)
            e >>= 1
            if e:
                base = mul(base, base)
        return out

    def __eq__(self, o):
        if isinstance(o, Poly):
            return self.n == o.n and self._t == o._t
        if isinstance(o, (int, Scalar)) or isinstance(o, type(QZERO)):
            return self == Poly.const(self.n, o)
        return NotImplemented

    def __hash__(self):
        if self._h is None:
            self._h = hash((self.n, frozenset(self._t.items())))
        return self._h

    # components
    def homogeneous_component(self, k):
        return Poly._raw(self.n, {key: c for key, c in self._t.items() if sum(key) == k})

    def bidegree_component(self, a, b):
        n = self.n
        return Poly._raw(self.n, {key: c for key, c in self._t.items()
                                  if sum(key[:n]) == a and sum(key[n:]) == b})

    def truncate(self, d, weights=None):
        if weights is None:
            return Poly._raw(self.n, {k: c for k, c in self._t.items() if sum(k) <= d})
        return Poly._raw(self.n, {k: c for k, c in self._t.items() if _wdeg(k, weights) <= d})

    def weighted_component(self, d, weights):
        return Poly._raw(self.n, {k: c for k, c in self._t.items() if _wdeg(k, weights) == d})

    def diff(self, l, conj=False, times=1):
        return diff(self, l, conj, times)

    def map_coeffs(self, f):
        return Poly(self.n, {k: f(c) for k, c in self._t.items()})

    def real_part(self):
        return (self + self.conjugate()).scale(Scalar._mk(mpq(1, 2), QZERO))

    def __repr__(self):
        return f"Poly({self.n}, {self.render()!r})"

    def __str__(self):
        return self.render()

    def render(self, names=None):
        return render(self, names)


def _norm_key(key, n):
    if len(key) == 2 and isinstance(key[0], (tuple, list)):
        key = tuple(key[0]) + tuple(key[1])
    key = tuple(int(e) for e in key)
    if len(key) != 2 * n:
        raise DimensionError(f"exponent key {key} does not match n_vars={n}")
    if any(e < 0 for e in key):
        raise ValueError(f"negative exponent in {key}")
    return key


def _wdeg(key, weights):
    n = len(weights)
    return sum(e * weights[i % n] for i, e in enumerate(key))


# module-level ring operations

def add(p: Poly, q: Poly) -> Poly:
    return p + q


def mul(p: Poly, q: Poly, truncate_at=None, weights=None) -> Poly:
    """Product, optionally dropping terms of (weighted) degree > truncate_at."""
    if p.n != q.n:
        raise DimensionError(f"n_vars mismatch: {p.n} vs {q.n}")
    n = p.n
    tp, tq = p._t, q._t
    if not tp or not tq:
        return Poly._raw(n, {})
    if len(tp) < len(tq):
        tp, tq = tq, tp
    acc_r = {}
    acc_i = {}
    real = all(not c.im for c in tp.values()) and all(not c.im for c in tq.values())
    if truncate_at is not None:
        w = weights or (1,) * n
        dq = {k: _wdeg(k, w) for k in tq}
    for k1, c1 in tp.items():
        r1, i1 = c1.re, c1.im
        if truncate_at is not None:
            room = truncate_at - _wdeg(k1, w)
            if room < 0:
                continue
        for k2, c2 in tq.items():
            if truncate_at is not None and dq[k2] > room:
                continue
            k = tuple(map(_add, k1, k2))
            if real:
                v = r1 * c2.re
                acc_r[k] = acc_r.get(k, QZERO) + v
            else:
                r2, i2 = c2.re, c2.im
                acc_r[k] = acc_r.get(k, QZERO) + (r1 * r2 - i1 * i2)
                acc_i[k] = acc_i.get(k, QZERO) + (r1 * i2 + i1 * r2)
    t = {}
    for k, r in acc_r.items():
        i = acc_i.get(k, QZERO)
        if r or i:
            t[k] = Scalar._mk(r, i)
    return Poly._raw(n, t)


def diff(p: Poly, l: int, conj: bool = False, times: int = 1) -> Poly:
    """Partial derivative in z_l (or zbar_l when conj), 1-based index."""
    n = p.n
    if not 1 <= l <= n:
        raise IndexError(f"variable index {l} out of range 1..{n}")
    idx = (n if conj else 0) + l - 1
    t = {}
    for k, c in p._t.items():
        e = k[idx]
        if e < times:
            continue
        f = 1
        for j in range(times):
            f *= e - j
        nk = list(k)
        nk[idx] = e - times
        t[tuple(nk)] = c * f
    return Poly._raw(n, t)


def conjugate(p: Poly) -> Poly:
    return p.conjugate()


def homogeneous_component(p: Poly, k: int) -> Poly:
    return p.homogeneous_component(k)


def bidegree_component(p: Poly, a: int, b: int) -> Poly:
    return p.bidegree_component(a, b)


def apply_adjoint(q: Poly, p: Poly) -> Poly:
    """Apply the constant-coefficient operator conj(q)(d/dz, d/dzbar) to p.

    This is the adjoint of multiplication by q for the pairing
    <z^I zbar^J, z^K zbar^L> = I! J! delta.
    """
    if q.n != p.n:
        raise DimensionError("n_vars mismatch")
    n = p.n
    acc = {}
    for a, c in q._t.items():
        cc = c.conjugate()
        for b, d in p._t.items():
            f = 1
            ok = True
            for ai, bi in zip(a, b):
                if ai > bi:
                    ok = False
                    break
                for j in range(ai):
                    f *= bi - j
            if not ok:
                continue
            k = tuple(bi - ai for ai, bi in zip(a, b))
            v = cc * d * f
            e = acc.get(k)
            acc[k] = v if e is None else e + v
    return Poly._raw(n, {k: v for k, v in acc.items() if v})


def monomial_weight(key) -> int:
    """Fischer norm of a monomial: I! J!."""
    w = 1
    for e in key:
        w *= factorial(e)
    return w


def substitute(p: Poly, images, truncate_at=None, weights=None, conj_images=None) -> Poly:
    """Compose p with holomorphic-variable images.

    ``images[i]`` replaces z_{i+1}; zbar_{i+1} is replaced by its conjugate
    (or by ``conj_images[i]`` when given, which lets callers substitute into
    purely holomorphic series where no conjugation is wanted).  All images
    share one n_vars.  Terms above ``truncate_at`` (weighted by ``weights``
    on the target variables) are dropped.
    """
    if len(images) != p.n:
        raise DimensionError(f"expected {p.n} images, got {len(images)}")
    if not images:
        return p
    m = images[0].n
    if any(im.n != m for im in images):
        raise DimensionError("images must share n_vars")
    if conj_images is None:
        conj_images = [im.conjugate() for im in images]
    allv = list(images) + list(conj_images)
    w = weights or (1,) * m
    cache = {}

    def power(i, e):
        key = (i, e)
        r = cache.get(key)
        if r is None:
            if e == 0:
                r = Poly.const(m, 1)
            elif e == 1:
                r = allv[i]
            else:
                r = mul(power(i, e - 1), allv[i], truncate_at, w)
            cache[key] = r
        return r

    # low-order bound of each image lets us skip hopeless terms
    lows = [min((_wdeg(k, w) for k in v._t), default=None) for v in allv]
    out = Poly._raw(m, {})
    acc = {}
    for key, c in p._t.items():
        if truncate_at is not None:
            lo = 0
            dead = False
            for i, e in enumerate(key):
                if e:
                    if lows[i] is None:
                        dead = True
                        break
                    lo += e * lows[i]
            if dead or lo > truncate_at:
                continue
        term = Poly.const(m, c)
        for i, e in enumerate(key):
            if e:
                term = mul(term, power(i, e), truncate_at, w)
                if not term:
                    break
        for k, v in term._t.items():
            old = acc.get(k)
            acc[k] = v if old is None else old + v
    out = Poly._raw(m, {k: v for k, v in acc.items() if v})
    return out


# text rendering and parsing

def default_names(n):
    return [f"z{i}" for i in range(1, n + 1)] + [f"Z{i}" for i in range(1, n + 1)]


def _coeff_str(c: Scalar, has_mono: bool) -> str:
    if not c.im:
        if has_mono and c.re == 1:
            return ""
        if has_mono and c.re == -1:
            return "-"
        return qstr(c.re)
    if not c.re:
        s = _imag_str(c.im)
        return s
    return f"({c})"


def render(p: Poly, names=None) -> str:
    """Canonical text form: terms in descending lex order of (I;J)."""
    if not p._t:
        return "0"
    names = names or default_names(p.n)
    parts = []
    for key, c in p.items():
        mono = "*".join(
            names[i] if e == 1 else f"{names[i]}^{e}"
            for i, e in enumerate(key) if e
        )
        cs = _coeff_str(c, bool(mono))
        if mono:
            if cs in ("", "-"):
                s = cs + mono
            else:
                s = f"{cs}*{mono}"
        else:
            s = cs
        parts.append(s)
    out = parts[0]
    for s in parts[1:]:
        out += s if s.startswith("-") else "+" + s
    return out


_TOKEN = re.compile(r"\s*(?:(\d+)|([A-Za-z]\d*)|(.))")


def parse_poly(text: str, n: int, names=None) -> Poly:
    """Parse the mini-grammar: z1..zN, Z1..ZN, i, rationals, + - * / ^ ( )."""
    names = names or default_names(n)
    index = {nm: i for i, nm in enumerate(names)}
    toks = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            break
        start = m.start(m.lastindex) if m.lastindex else m.end()
        # track line/column for error messages
        line = text.count("\n", 0, start) + 1
        col = start - (text.rfind("\n", 0, start) + 1) + 1
        if m.group(1) is not None:
            toks.append(("num", int(m.group(1)), line, col))
        elif m.group(2) is not None:
            toks.append(("id", m.group(2), line, col))
        elif m.group(3) is not None:
            toks.append(("op", m.group(3), line, col))
        pos = m.end()
    end_line = text.count("\n") + 1
    end_col = len(text) - (text.rfind("\n") + 1) + 1
    toks.append(("end", None, end_line, end_col))
    st = {"i": 0}

    def peek():
        return toks[st["i"]]

    def take():
        t = toks[st["i"]]
        st["i"] += 1
        return t

    def fail(t, msg):
        raise ParseError(msg, t[2], t[3])

    def expr():
        t = peek()
        sign = 1
        if t[0] == "op" and t[1] in "+-":
            take()
            sign = -1 if t[1] == "-" else 1
        acc = term()
        if sign < 0:
            acc = -acc
        while True:
            t = peek()
            if t[0] == "op" and t[1] in "+-":
                take()
                rhs = term()
                acc = acc + rhs if t[1] == "+" else acc - rhs
            else:
                return acc

    def term():
        acc = power()
        while True:
            t = peek()
            if t[0] == "op" and t[1] == "*":
                take()
                acc = acc * power()
            elif t[0] == "op" and t[1] == "/":
                take()
                d = power()
                if not d or d.degree() > 0:
                    fail(t, "division only by nonzero constants")
                acc = acc / d.coeff((0,) * (2 * n))
            elif t[0] in ("num", "id") or (t[0] == "op" and t[1] == "("):
                acc = acc * power()  # implicit multiplication
            else:
                return acc

    def power():
        base = atom()
        t = peek()
        if t[0] == "op" and t[1] == "^":
            take()
            e = peek()
            if e[0] != "num":
                fail(e, "exponent must be a non-negative integer")
            take()
            return base ** e[1]
        return base

    def atom():
        t = take()
        if t[0] == "num":
            return Poly.const(n, t[1])
        if t[0] == "id":
            if t[1] == "i":
                return Poly.const(n, SI)
            if t[1] in index:
                k = [0] * (2 * n)
                k[index[t[1]]] = 1
                return Poly._raw(n, {tuple(k): SONE})
            fail(t, f"unknown variable {t[1]!r}")
        if t[0] == "op" and t[1] == "(":
            v = expr()
            c = take()
            if not (c[0] == "op" and c[1] == ")"):
                fail(c, "expected ')'")
            return v
        if t[0] == "end":
            fail(t, "unexpected end of input")
        fail(t, f"unexpected {t[1]!r}")

    if not text.strip():
        raise ParseError("empty polynomial", 1, 1)
    out = expr()
    t = peek()
    if t[0] != "end":
        fail(t, f"unexpected {t[1]!r}")
    return out
