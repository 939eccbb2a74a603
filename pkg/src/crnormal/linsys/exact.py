"""Exact dense linear algebra over the rationals.

Matrices are lists of rows of ``mpq``.  Elimination is fraction-free
(Bareiss): each row is scaled to integers first, then every update divides
exactly by the previous pivot, so no intermediate fraction ever appears.
"""
from __future__ import annotations

from math import lcm

from gmpy2 import mpq, mpz

QZERO = mpq(0)


class SingularSystemError(ArithmeticError):
    """Raised when a system has no unique solution; carries a kernel witness."""

    def __init__(self, msg, witness=None):
        super().__init__(msg)
        self.witness = witness


class InconsistentSystemError(ArithmeticError):
    pass


def zeros(r, c):
    return [[QZERO] * c for _ in range(r)]


def identity(n):
    m = zeros(n, n)
    for i in range(n):
        m[i][i] = mpq(1)
    return m


def matmul(a, b):
    if not a:
        return []
    inner = len(b)
    cols = len(b[0]) if b else 0
    out = []
    for row in a:
        acc = [QZERO] * cols
        for k in range(inner):
            v = row[k]
            if v:
                bk = b[k]
                for j in range(cols):
                    if bk[j]:
                        acc[j] += v * bk[j]
        out.append(acc)
    return out


def matvec(a, x):
    return [sum((v * xi for v, xi in zip(row, x) if v and xi), QZERO) for row in a]


def transpose(a):
    return [list(r) for r in zip(*a)] if a else []


def _integer_rows(rows):
    """Scale each row to integers; returns (int rows, per-row scale)."""
    out, scales = [], []
    for r in rows:
        den = 1
        for v in r:
            if v:
                den = lcm(den, int(mpq(v).denominator))
        out.append([mpz(mpq(v) * den) for v in r])
        scales.append(den)
    return out, scales


def bareiss_echelon(rows, pivot_cols=None):
    """Fraction-free forward elimination.

    Pivots are searched only among the first ``pivot_cols`` columns (the rest
    is an augmented block).  Returns (echelon int rows, pivot columns, sign of
    the row permutation).
    """
    m, _ = _integer_rows(rows)
    nrows = len(m)
    ncols = len(m[0]) if m else 0
    pc = ncols if pivot_cols is None else pivot_cols
    prev = mpz(1)
    pivots = []
    sign = 1
    r = 0
    for c in range(pc):
        if r >= nrows:
            break
        piv = None
        for i in range(r, nrows):
            if m[i][c]:
                piv = i
                break
        if piv is None:
            continue
        if piv != r:
            m[r], m[piv] = m[piv], m[r]
            sign = -sign
        pr = m[r]
        p = pr[c]
        for i in range(r + 1, nrows):
            row = m[i]
            a = row[c]
            if a:
                for j in range(c + 1, ncols):
                    row[j] = (p * row[j] - a * pr[j]) // prev
            else:
                for j in range(c + 1, ncols):
                    if row[j]:
                        row[j] = (p * row[j]) // prev
            row[c] = mpz(0)
        # rows below whose pivot-column entry was zero still got scaled; fine
        prev = p
        pivots.append(c)
        r += 1
    return m, pivots, sign


def rank(a):
    if not a or not a[0]:
        return 0
    return len(bareiss_echelon(a)[1])


def det(a):
    """Exact determinant via Bareiss; the last pivot is the determinant."""
    n = len(a)
    if n == 0:
        return mpq(1)
    if any(len(r) != n for r in a):
        raise ValueError("det of non-square matrix")
    ints, scales = _integer_rows(a)
    m = [list(r) for r in ints]
    sign = 1
    prev = mpz(1)
    for k in range(n - 1):
        if not m[k][k]:
            sw = next((i for i in range(k + 1, n) if m[i][k]), None)
            if sw is None:
                return mpq(0)
            m[k], m[sw] = m[sw], m[k]
            sign = -sign
        p = m[k][k]
        rk = m[k]
        for i in range(k + 1, n):
            row = m[i]
            a_ik = row[k]
            for j in range(k + 1, n):
                row[j] = (p * row[j] - a_ik * rk[j]) // prev
            row[k] = mpz(0)
        prev = p
    d = m[n - 1][n - 1] * sign
    total = 1
    for s in scales:
        total *= s
    return mpq(d, total)


def _back_substitute(ech, pivots, ncols, free_values, rhs_col=None):
    """Solve the echelon system for pivot variables given free variables."""
    x = [QZERO] * ncols
    for j, v in free_values.items():
        x[j] = v
    for r in range(len(pivots) - 1, -1, -1):
        c = pivots[r]
        row = ech[r]
        s = mpq(row[rhs_col]) if rhs_col is not None else QZERO
        for j in range(c + 1, ncols):
            if row[j] and x[j]:
                s -= row[j] * x[j]
        x[c] = s / row[c]
    return x


def nullspace(a, ncols=None):
    """Basis of {x : a x = 0}, one vector per free column."""
    if not a:
        n = ncols or 0
        return [[mpq(1) if i == j else QZERO for i in range(n)] for j in range(n)]
    n = len(a[0])
    ech, pivots, _ = bareiss_echelon(a)
    pset = set(pivots)
    basis = []
    for f in range(n):
        if f in pset:
            continue
        basis.append(_back_substitute(ech, pivots, n, {f: mpq(1)}))
    return basis


def solve(a, b, unique=True):
    """Solve a X = b exactly for a matrix of right-hand sides ``b`` (list of columns).

    With ``unique`` the system must be nonsingular; otherwise a particular
    solution (free variables zero) is returned.  Inconsistent systems raise.
    """
    n = len(a[0]) if a else 0
    rows = len(a)
    cols = b if b and isinstance(b[0], list) else [b]
    aug = [list(a[i]) + [c[i] for c in cols] for i in range(rows)]
    ech, pivots, _ = bareiss_echelon(aug, pivot_cols=n)
    if unique and len(pivots) < n:
        ns = nullspace(a)
        raise SingularSystemError("system is singular", witness=ns[0] if ns else None)
    r = len(pivots)
    for i in range(r, rows):
        if any(ech[i][n + k] for k in range(len(cols))):
            raise InconsistentSystemError("system has no solution")
    out = []
    for k in range(len(cols)):
        out.append(_back_substitute(ech, pivots, n, {}, rhs_col=n + k))
    if b and isinstance(b[0], list):
        return out
    return out[0]


def inverse(a):
    n = len(a)
    cols = [[mpq(1) if i == j else QZERO for i in range(n)] for j in range(n)]
    sol = solve(a, cols)
    return transpose(sol)
