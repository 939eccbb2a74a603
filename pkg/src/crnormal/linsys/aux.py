"""Conjugate-coupled systems of the degree-by-degree normalization.

A change of coordinates z -> z + f(z, w), w -> w + g(z, w) with f of weight
p-1 and g of weight p (w has weight 2) changes the degree-p part of the
defining equations w_l = rho_l by -L(f, g), where

    L(f, g)_l = g_l(z, q) - sum_t f_t(z, q) dq_l/dz_t - sum_t conj(f_t(z, q)) dq_l/dzbar_t.

Writing L Z = M1 Z + M2 conj(Z) on the coefficient vector Z of (g, f), the
Fischer-orthogonal projection onto the image of L is given by the normal
equations

    Nm Z + Bm conj(Z) = M1^T W phi + M2^T W conj(phi),
    Nm = M1^T W M1 + M2^T W M2,  Bm = M1^T W M2 + M2^T W M1.

Dividing by D = diag(Nm) puts them in the form
(I - Aux_p A) Z + B conj(Z) = V with B = D^{-1} Bm and
A = Aux_p^{-1}(I - D^{-1} Nm).  Aux_p is the product of the one-row matrices
recording which g-coefficients feed each holomorphic monomial of degree p.
Real and imaginary parts decouple into (I - Aux_p A +- B).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

from gmpy2 import mpq

from ..model import ModelManifold, quadric
from ..polyring import Poly, Scalar, diff, monomial_weight, monomials, mul, qstr
from . import exact

QZERO = mpq(0)
QONE = mpq(1)


def holo_keys(n, weight):
    """(K, beta) with |K| + 2|beta| = weight, descending lex on K + beta."""
    out = []
    for b in range(weight // 2, -1, -1):
        for beta in monomials(n, b):
            for K in monomials(n, weight - 2 * b):
                out.append(K + beta)
    out.sort(reverse=True)
    return out


@lru_cache(maxsize=64)
def _eval_at_quadrics(m: ModelManifold, key):
    """z^K q^beta as a polynomial in (z, zbar)."""
    n = m.n
    K, beta = key[:n], key[n:]
    out = Poly.monomial(K, (0,) * n)
    for l, b in enumerate(beta):
        for _ in range(b):
            out = mul(out, quadric(m, l + 1))
    return out


@dataclass
class AuxBlock:
    rows_l: tuple  # equation indices covered (1-based)
    unknowns: list  # ("g", l, key) / ("f", t, key)
    row_keys: list  # (l, monomial key of degree p)
    m1: list
    m2: list
    weights: list
    nm: list = None
    bm: list = None
    diag: list = None
    factors: list = field(default_factory=list)  # (row, {col: value})
    aux: list = None
    a: list = None
    b: list = None
    op: list = None  # I - Aux_p A = D^{-1} Nm

    @property
    def size(self):
        return len(self.unknowns)


@dataclass
class AuxSystem:
    model: ModelManifold
    p: int
    flavor: str
    blocks: list
    rhs: list | None = None

    @property
    def size(self):
        return sum(b.size for b in self.blocks)

    def _blockdiag(self, attr):
        n = self.size
        out = exact.zeros(n, n)
        off = 0
        for blk in self.blocks:
            mat = getattr(blk, attr)
            for i, row in enumerate(mat):
                for j, v in enumerate(row):
                    if v:
                        out[off + i][off + j] = v
            off += blk.size
        return out

    def operator(self):
        return self._blockdiag("op")

    def companion(self):
        return self._blockdiag("b")

    def aux_matrix(self):
        return self._blockdiag("aux")

    def a_matrix(self):
        return self._blockdiag("a")

    def unknowns(self):
        return [u for blk in self.blocks for u in blk.unknowns]

    def rhs_from(self, phis):
        """V = D^{-1}(M1^T W phi + M2^T W conj(phi)) for degree-p parts phi_l."""
        out = []
        for blk in self.blocks:
            vals = []
            for l, key in blk.row_keys:
                vals.append(phis[l - 1].coeff(key))
            for j in range(blk.size):
                acc_r, acc_i = QZERO, QZERO
                for i, v in enumerate(vals):
                    if not v:
                        continue
                    a, c = blk.m1[i][j], blk.m2[i][j]
                    w = blk.weights[i]
                    if a:
                        acc_r += a * w * v.re
                        acc_i += a * w * v.im
                    if c:
                        acc_r += c * w * v.re
                        acc_i -= c * w * v.im
                out.append(Scalar._mk(acc_r / blk.diag[j], acc_i / blk.diag[j]))
        return out

    def apply_l(self, z):
        """L Z as per-equation polynomials of degree p."""
        n = self.model.n
        out = [Poly.zero(n) for _ in range(n)]
        off = 0
        for blk in self.blocks:
            acc = {}
            for i, (l, key) in enumerate(blk.row_keys):
                s = Scalar(0)
                for j in range(blk.size):
                    zj = z[off + j]
                    if not zj:
                        continue
                    if blk.m1[i][j]:
                        s = s + zj * blk.m1[i][j]
                    if blk.m2[i][j]:
                        s = s + zj.conjugate() * blk.m2[i][j]
                if s:
                    acc.setdefault(l, {})[key] = s
            for l, t in acc.items():
                out[l - 1] = out[l - 1] + Poly(n, t)
            off += blk.size
        return out

    def vector_to_fg(self, z):
        """Coefficient vector -> (f, g), each a list of N polynomials in (z, w)."""
        n = self.model.n
        f = [dict() for _ in range(n)]
        g = [dict() for _ in range(n)]
        for (kind, idx, key), v in zip(self.unknowns(), z):
            if v:
                (f if kind == "f" else g)[idx - 1][key + (0,) * (2 * n)] = v
        return [Poly(2 * n, t) for t in f], [Poly(2 * n, t) for t in g]


def _build_block(m: ModelManifold, p: int, rows_l, f_idx):
    n = m.n
    unknowns = []
    for l in rows_l:
        for key in holo_keys(n, p):
            unknowns.append(("g", l, key))
    for t in f_idx:
        for key in holo_keys(n, p - 1):
            unknowns.append(("f", t, key))
    row_keys = [(l, key) for l in rows_l for key in monomials(2 * n, p)]
    rpos = {rk: i for i, rk in enumerate(row_keys)}
    nr, nc = len(row_keys), len(unknowns)
    m1 = exact.zeros(nr, nc)
    m2 = exact.zeros(nr, nc)
    dq = {}
    for l in rows_l:
        for t in f_idx:
            q = quadric(m, l)
            dq[(l, t)] = (diff(q, t), diff(q, t, conj=True))
    for j, (kind, idx, key) in enumerate(unknowns):
        mono = _eval_at_quadrics(m, key)
        if kind == "g":
            for k, c in mono.raw().items():
                m1[rpos[(idx, k)]][j] += c.re
            continue
        cmono = mono.conjugate()
        for l in rows_l:
            dz, dzb = dq[(l, idx)]
            if dz:
                for k, c in mul(mono, dz).raw().items():
                    m1[rpos[(l, k)]][j] -= c.re
            if dzb:
                for k, c in mul(cmono, dzb).raw().items():
                    m2[rpos[(l, k)]][j] -= c.re
    weights = [monomial_weight(k) for _, k in row_keys]
    blk = AuxBlock(tuple(rows_l), unknowns, row_keys, m1, m2, weights)
    _finish_block(m, p, blk)
    return blk


def _gram(x, w, y):
    """x^T diag(w) y."""
    nr = len(x)
    nc = len(x[0]) if nr else 0
    xt = [[x[i][j] * w[i] for i in range(nr)] for j in range(nc)]
    return exact.matmul(xt, y)


def _aux_factors(m: ModelManifold, p: int, blk: AuxBlock):
    """One factor per holomorphic degree-p monomial reached by some g-coefficient z^K w_l'."""
    n = m.n
    upos = {u: i for i, u in enumerate(blk.unknowns)}
    factors = []
    for l in blk.rows_l:
        for I in monomials(n, p):
            feeders = []
            for lp in range(1, n + 1):
                # holomorphic part of q_lp is c * z_lp z_sigma(lp)
                s = m.sigma[lp - 1]
                K = list(I)
                K[lp - 1] -= 1
                K[s - 1] -= 1
                if min(K) < 0:
                    continue
                e = [0] * (2 * n)
                e[lp - 1] += 1
                e[s - 1] += 1
                c = quadric(m, lp).coeff(tuple(e)).re
                beta = tuple(1 if i == lp - 1 else 0 for i in range(n))
                feeders.append((upos[("g", l, tuple(K) + beta)], c))
            if feeders:
                row = feeders[0][0]
                factors.append((row, {col: c for col, c in feeders}))
    return factors


def _factor_matrix(size, row, pattern):
    mat = exact.identity(size)
    mat[row] = [QZERO] * size
    for col, c in pattern.items():
        mat[row][col] = c
    return mat


def _finish_block(m: ModelManifold, p: int, blk: AuxBlock):
    nm = _gram(blk.m1, blk.weights, blk.m1)
    t = _gram(blk.m2, blk.weights, blk.m2)
    nm = [[a + b for a, b in zip(r1, r2)] for r1, r2 in zip(nm, t)]
    b12 = _gram(blk.m1, blk.weights, blk.m2)
    bm = [[b12[i][j] + b12[j][i] for j in range(len(b12))] for i in range(len(b12))]
    diag = [nm[i][i] for i in range(len(nm))]
    if any(not d for d in diag):
        raise ArithmeticError("normalization operator has a zero column")
    op = [[v / diag[i] for v in row] for i, row in enumerate(nm)]
    bb = [[v / diag[i] for v in row] for i, row in enumerate(bm)]
    size = len(nm)
    factors = _aux_factors(m, p, blk)
    aux = exact.identity(size)
    for row, pattern in factors:
        aux = exact.matmul(aux, _factor_matrix(size, row, pattern))
    i_minus = [[(QONE if i == j else QZERO) - op[i][j] for j in range(size)] for i in range(size)]
    a = exact.transpose(exact.solve(aux, exact.transpose(i_minus)))
    blk.nm, blk.bm, blk.diag, blk.op, blk.b = nm, bm, diag, op, bb
    blk.factors, blk.aux, blk.a = factors, aux, a


@lru_cache(maxsize=128)
def assemble_aux_system(m: ModelManifold, p: int, flavor: str = "tilded", row: int = 1) -> AuxSystem:
    """Normal-equation system at degree p.

    "tilded" covers all N equations (block-diagonal for diagonal models);
    "plain" is the single-equation block of row ``row`` (diagonal models).
    """
    if p < 3:
        raise ValueError("aux systems start at p = 3")
    n = m.n
    if flavor == "plain":
        if not m.is_diagonal:
            raise ValueError("plain flavor needs a diagonal model")
        blocks = [_build_block(m, p, (row,), (row,))]
    elif flavor == "tilded":
        if m.is_diagonal:
            blocks = [_build_block(m, p, (l,), (l,)) for l in range(1, n + 1)]
        else:
            ls = tuple(range(1, n + 1))
            blocks = [_build_block(m, p, ls, ls)]
    else:
        raise ValueError("flavor must be 'plain' or 'tilded'")
    return AuxSystem(m, p, flavor, blocks)


def automorphism_tangents(m: ModelManifold, p: int, blk: AuxBlock):
    """Weight-p tangents of the model automorphisms z_l -> z_l u(w), w_l -> w_l u(w)^2.

    For a diagonal model and any real monomial h(w) of weight p - 2 the pair
    f_l = z_l h / 2, g_l = w_l h lies in the kernel of L.  These are real
    vectors, so they only enter the real-part matrix.  Returns vectors in the
    block's unknown coordinates (empty for non-diagonal models or odd p).
    """
    if not m.is_diagonal or p % 2:
        return []
    n = m.n
    upos = {u: i for i, u in enumerate(blk.unknowns)}
    out = []
    for l in blk.rows_l:
        for beta in monomials(n, (p - 2) // 2):
            v = [QZERO] * blk.size
            gk = (0,) * n + tuple(b + (1 if i == l - 1 else 0) for i, b in enumerate(beta))
            fk = tuple(1 if i == l - 1 else 0 for i in range(n)) + tuple(beta)
            v[upos[("g", l, gk)]] = QONE
            v[upos[("f", l, fk)]] = mpq(1, 2)
            out.append(v)
    return out


def _bordered(mat, vecs):
    k = len(vecs)
    out = [list(r) + [vecs[c][i] for c in range(k)] for i, r in enumerate(mat)]
    for c in range(k):
        out.append(list(vecs[c]) + [QZERO] * k)
    return out


def _solve_gauged(mat, rhs, gauge):
    """Solve mat x = rhs; with gauge vectors E, pick the solution with E^T x = 0."""
    if not gauge:
        return exact.solve(mat, rhs)
    sol = exact.solve(_bordered(mat, gauge), list(rhs) + [QZERO] * len(gauge))
    if any(sol[len(mat):]):
        raise exact.InconsistentSystemError("right-hand side outside the gauged range")
    return sol[:len(mat)]


def _solve_real_pair(k, b, rhs, gauge_plus=(), gauge_minus=()):
    """Solve k Z + b conj(Z) = rhs with real k, b via (Re Z, Im Z)."""
    n = len(k)
    plus = [[k[i][j] + b[i][j] for j in range(n)] for i in range(n)]
    minus = [[k[i][j] - b[i][j] for j in range(n)] for i in range(n)]
    try:
        x = _solve_gauged(plus, [r.re for r in rhs], list(gauge_plus))
    except exact.SingularSystemError as e:
        raise exact.SingularSystemError("real part singular", witness=(e.witness, None)) from None
    try:
        y = _solve_gauged(minus, [r.im for r in rhs], list(gauge_minus))
    except exact.SingularSystemError as e:
        raise exact.SingularSystemError("imaginary part singular", witness=(None, e.witness)) from None
    return [Scalar._mk(a, c) for a, c in zip(x, y)]


def solve_conjugate_coupled(op, rhs, companion=None, gauge=False):
    """Exact solution of op Z + B conj(Z) = rhs.

    ``op`` is an AuxSystem (its own companion is used) or a real matrix with
    ``companion`` given.  The realified unknown is ordered (Re Z, Im Z).
    Singular systems raise SingularSystemError whose witness is a kernel
    vector of the block that failed.  With ``gauge`` the model automorphism
    tangents are fixed by requiring Re Z to be orthogonal to them.
    """
    rhs = [Scalar.coerce(r) for r in rhs]
    if isinstance(op, AuxSystem):
        out = []
        off = 0
        for blk in op.blocks:
            tang = automorphism_tangents(op.model, op.p, blk) if gauge else []
            out.extend(_solve_real_pair(blk.op, blk.b, rhs[off:off + blk.size], tang))
            off += blk.size
        return out
    b = companion if companion is not None else exact.zeros(len(op), len(op))
    return _solve_real_pair(op, b, rhs)


@dataclass
class InvertibilityAudit:
    model: ModelManifold
    p: int
    flavor: str
    dims: list
    det_minus: object  # det(I - Aux_p A - B)
    det_plus: object  # det(I - Aux_p A + B)
    kernel_minus: int = 0
    kernel_plus: int = 0
    tangent_dim: int = 0
    gauged_det_minus: object = None
    gauged_det_plus: object = None

    @property
    def ok(self):
        """Both matrices nonsingular as they stand."""
        return bool(self.det_minus) and bool(self.det_plus)

    @property
    def explained(self):
        """Every kernel vector is a model-automorphism tangent."""
        return self.kernel_minus == 0 and self.kernel_plus == self.tangent_dim

    @property
    def ok_modulo_automorphisms(self):
        return bool(self.gauged_det_minus) and bool(self.gauged_det_plus) and self.explained

    def render(self) -> str:
        def st(v):
            return "nonzero" if v else "ZERO"
        lines = [
            f"invertibility audit: {self.model}",
            f"degree {self.p}, flavor {self.flavor}, block sizes {self.dims}",
            f"det(I - Aux_p A - B) = {qstr(self.det_minus)} ({st(self.det_minus)})",
            f"det(I - Aux_p A + B) = {qstr(self.det_plus)} ({st(self.det_plus)})",
            f"kernel dims: minus {self.kernel_minus}, plus {self.kernel_plus}; "
            f"automorphism tangents {self.tangent_dim}",
            f"gauged det minus = {qstr(self.gauged_det_minus)} ({st(self.gauged_det_minus)})",
            f"gauged det plus = {qstr(self.gauged_det_plus)} ({st(self.gauged_det_plus)})",
            f"verdict: {'invertible' if self.ok else 'SINGULAR'}"
            + ("" if self.ok else
               f"; {'unique modulo model automorphisms' if self.ok_modulo_automorphisms else 'singularity not explained'}"),
        ]
        return "\n".join(lines) + "\n"


@lru_cache(maxsize=128)
def verify_invertibility(m: ModelManifold, p: int, flavor: str = "tilded") -> InvertibilityAudit:
    """Exact determinants of both realified matrices, computed blockwise.

    Also reports kernel dimensions and the determinants after bordering the
    real-part matrix with the automorphism tangents.
    """
    sysm = assemble_aux_system(m, p, flavor)
    dm, dp = QONE, QONE
    gdm, gdp = QONE, QONE
    km = kp = td = 0
    for blk in sysm.blocks:
        n = blk.size
        minus = [[blk.op[i][j] - blk.b[i][j] for j in range(n)] for i in range(n)]
        plus = [[blk.op[i][j] + blk.b[i][j] for j in range(n)] for i in range(n)]
        d1, d2 = exact.det(minus), exact.det(plus)
        dm *= d1
        dp *= d2
        tang = automorphism_tangents(m, p, blk)
        td += len(tang)
        if not d1:
            km += len(exact.nullspace(minus))
        if not d2:
            kp += len(exact.nullspace(plus))
        gdm *= d1
        gdp *= exact.det(_bordered(plus, tang)) if tang else d2
    return InvertibilityAudit(m, p, flavor, [b.size for b in sysm.blocks], dm, dp,
                              km, kp, td, gdm, gdp)
