"""Shared hypothesis strategies and sympy conversion helpers."""
import random
from fractions import Fraction

import sympy
from gmpy2 import mpq
from hypothesis import strategies as st

from crnormal.polyring import Poly, Scalar, monomials

small_q = st.fractions(min_value=-3, max_value=3, max_denominator=5)


@st.composite
def scalars(draw, real=False):
    re = draw(small_q)
    im = Fraction(0) if real else draw(small_q)
    return Scalar(mpq(re.numerator, re.denominator), mpq(im.numerator, im.denominator))


@st.composite
def polys(draw, n=None, max_deg=3, max_terms=5, homogeneous=None):
    n = n if n is not None else draw(st.integers(1, 2))
    terms = {}
    k = draw(st.integers(0, max_terms))
    for _ in range(k):
        deg = homogeneous if homogeneous is not None else draw(st.integers(0, max_deg))
        key = tuple(draw(st.lists(st.integers(0, deg), min_size=2 * n, max_size=2 * n)))
        # rescale into total degree deg
        s = sum(key)
        if s != deg:
            key = list(key)
            while sum(key) > deg:
                i = max(range(2 * n), key=lambda j: key[j])
                key[i] -= 1
            while sum(key) < deg:
                key[0] += 1
            key = tuple(key)
        terms[key] = draw(scalars())
    return Poly(n, terms)


@st.composite
def lambdas(draw, n):
    out = []
    for _ in range(n):
        den = draw(st.integers(3, 13))
        num = draw(st.integers(1, (den - 1) // 2))
        out.append(f"{num}/{den}")
    return out


def random_lambda(rng: random.Random):
    den = rng.randint(3, 17)
    num = rng.randint(1, (den - 1) // 2)
    return f"{num}/{den}"


def random_homogeneous(rng: random.Random, n, p, density=0.6, real=False, cmax=5):
    keys = list(monomials(2 * n, p))
    terms = {}
    for k in keys:
        if rng.random() < density:
            re = Fraction(rng.randint(-cmax, cmax), rng.randint(1, 4))
            im = Fraction(0) if real else Fraction(rng.randint(-cmax, cmax), rng.randint(1, 4))
            terms[k] = Scalar(mpq(re.numerator, re.denominator), mpq(im.numerator, im.denominator))
    P = Poly(n, terms)
    if real:
        P = (P + P.conjugate()).scale(Scalar(mpq(1, 2)))
    return P


def sym_vars(n):
    z = sympy.symbols(f"z1:{n + 1}")
    zb = sympy.symbols(f"Z1:{n + 1}")
    return list(z), list(zb)


def q_to_sym(x):
    x = mpq(x)
    return sympy.Rational(int(x.numerator), int(x.denominator))


def to_sympy(p: Poly, zs=None):
    n = p.n
    if zs is None:
        z, zb = sym_vars(n)
        zs = z + zb
    out = sympy.Integer(0)
    for key, c in p.items():
        mono = sympy.Integer(1)
        for v, e in zip(zs, key):
            if e:
                mono *= v ** e
        out += (q_to_sym(c.re) + sympy.I * q_to_sym(c.im)) * mono
    return sympy.expand(out)


def from_sympy(expr, n, zs=None):
    if zs is None:
        z, zb = sym_vars(n)
        zs = z + zb
    expr = sympy.expand(expr)
    if expr == 0:
        return Poly.zero(n)
    pl = sympy.Poly(expr, *zs)
    terms = {}
    for mon, c in pl.terms():
        re, im = c.as_real_imag()
        terms[tuple(mon)] = Scalar(mpq(int(re.p), int(re.q)), mpq(int(im.p), int(im.q)))
    return Poly(n, terms)
