"""Generalized Fischer decompositions relative to model quadrics.

Every homogeneous P of degree p splits as P = sum_l A_l q_l + C where C is
annihilated by every trace operator.  C is the orthogonal projection of P
(for the Fischer pairing) onto the joint kernel, so it is unique; the A_l
are made canonical by taking the solution of least Fischer norm.

The multiplication map (A_1..A_N) -> sum A_l q_l has real rational entries
and is very sparse.  The solver splits it into connected components of the
unknown/monomial incidence graph and works on each block separately.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from functools import lru_cache

from gmpy2 import mpq

from .linsys import exact
from .model import ModelManifold, quadric, trace_op
from .polyring import Poly, Scalar, diff, monomial_weight, monomials, mul

QZERO = mpq(0)
HALF = mpq(1, 2)


class DecompositionError(ArithmeticError):
    """The multiplication operator is not injective where it must be."""

    def __init__(self, msg, witness=None):
        super().__init__(msg)
        self.witness = witness


def fischer_inner(p: Poly, q: Poly) -> Scalar:
    """<p, q> with <z^I zbar^J, z^K zbar^L> = I! J! delta; linear in p."""
    if p.n != q.n:
        raise ValueError("n_vars mismatch")
    a, b = p.raw(), q.raw()
    if len(a) > len(b):
        small, big, flip = b, a, True
    else:
        small, big, flip = a, b, False
    re = QZERO
    im = QZERO
    for k, c in small.items():
        d = big.get(k)
        if d is None:
            continue
        x, y = (d, c) if flip else (c, d)
        w = monomial_weight(k)
        # x * conj(y)
        re += (x.re * y.re + x.im * y.im) * w
        im += (x.im * y.re - x.re * y.im) * w
    return Scalar._mk(re, im)


def fischer_norm2(p: Poly):
    return fischer_inner(p, p).re


def _poly_hash(*parts) -> str:
    h = hashlib.sha256()
    for s in parts:
        h.update(str(s).encode())
        h.update(b"\0")
    return h.hexdigest()[:16]


# -- block structure of the multiplication operator -------------------------

@dataclass
class _Block:
    rows: list  # monomial keys of degree p
    cols: list  # (l index 0-based, monomial key of degree p-2)
    mat: list  # dense |rows| x |cols|, mpq
    solver: list  # |cols| x |rows|: maps P restricted to rows -> least-norm A
    rank: int
    nullity: int
    witness: list | None


def _components(row_keys, col_entries):
    """Union-find over rows; ``col_entries[j]`` is the list of rows column j touches."""
    parent = {r: r for r in row_keys}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for ent in col_entries:
        if not ent:
            continue
        r0 = find(ent[0])
        for r in ent[1:]:
            r1 = find(r)
            if r1 != r0:
                parent[r1] = r0
    groups = {}
    for r in row_keys:
        groups.setdefault(find(r), []).append(r)
    return groups, find


def _least_norm_solver(mat, wrows, wcols):
    """Operator S with S b = least-W_cols-norm minimizer of ||M a - b||_W_rows."""
    nr, nc = len(mat), len(mat[0])
    mt_w = [[mat[i][j] * wrows[i] for i in range(nr)] for j in range(nc)]  # M^T W
    gram = exact.matmul(mt_w, mat)
    rhs_cols = [[mt_w[j][i] for j in range(nc)] for i in range(nr)]
    ker = exact.nullspace(mat)
    if not ker:
        sol_cols = exact.solve(gram, rhs_cols)
        return exact.transpose(sol_cols), nc, 0, None
    sol_cols = exact.solve(gram, rhs_cols, unique=False)
    s0 = exact.transpose(sol_cols)  # nc x nr
    # subtract the W_cols-orthogonal projection onto ker M
    kw = [[k[j] * wcols[j] for j in range(nc)] for k in ker]  # rows K^T W
    kgram = exact.matmul(kw, exact.transpose(ker))
    kws0 = exact.matmul(kw, s0)
    coef = exact.transpose(exact.solve(kgram, exact.transpose(kws0)))
    corr = exact.matmul(exact.transpose(ker), coef)
    s = [[s0[i][j] - corr[i][j] for j in range(nr)] for i in range(nc)]
    return s, nc - len(ker), len(ker), ker[0]


@lru_cache(maxsize=256)
def _operator(m: ModelManifold, ls: tuple, p: int):
    """Blocks of (A_l)_{l in ls} -> sum A_l q_l on degree-p polynomials."""
    n = m.n
    qs = [quadric(m, l) for l in ls]
    for q in qs:
        if any(c.im for _, c in q.items()):
            raise ValueError("quadric with non-real coefficients")
    rows = list(monomials(2 * n, p))
    cols = []
    col_entries = []
    col_vals = []
    for li, q in enumerate(qs):
        qt = [(k, c.re) for k, c in q.items()]
        for mono in monomials(2 * n, p - 2):
            ent = [tuple(a + b for a, b in zip(mono, k)) for k, _ in qt]
            cols.append((li, mono))
            col_entries.append(ent)
            col_vals.append([v for _, v in qt])
    groups, find = _components(rows, col_entries)
    cols_by = {}
    for j, ent in enumerate(col_entries):
        cols_by.setdefault(find(ent[0]), []).append(j)
    blocks = []
    isolated = []
    for root, rlist in groups.items():
        cj = cols_by.get(root)
        if not cj:
            isolated.extend(rlist)
            continue
        ridx = {r: i for i, r in enumerate(rlist)}
        mat = [[QZERO] * len(cj) for _ in rlist]
        for jj, j in enumerate(cj):
            for r, v in zip(col_entries[j], col_vals[j]):
                mat[ridx[r]][jj] += v
        wr = [monomial_weight(r) for r in rlist]
        wc = [monomial_weight(cols[j][1]) for j in cj]
        solver, rk, nul, wit = _least_norm_solver(mat, wr, wc)
        if wit is not None:
            wit = {cols[j]: v for j, v in zip(cj, wit) if v}
        blocks.append(_Block(rlist, [cols[j] for j in cj], mat, solver, rk, nul, wit))
    return blocks, isolated


@dataclass
class DecompResult:
    coeffs: tuple  # A_1..A_k, degree p-2
    remainder: Poly  # C, degree p
    certificate: dict = field(default_factory=dict)

    def verify(self, m: ModelManifold, P: Poly, ls=None) -> bool:
        ls = ls or tuple(range(1, m.n + 1))
        recon = self.remainder
        for l, a in zip(ls, self.coeffs):
            recon = recon + mul(a, quadric(m, l))
        if recon != P:
            return False
        return all(not trace_op(m, l, self.remainder) for l in ls)


def _decompose(P: Poly, m: ModelManifold, ls: tuple, p: int | None = None) -> DecompResult:
    n = m.n
    if P.n != n:
        raise ValueError(f"polynomial has {P.n} variables, model has {n}")
    if p is None:
        p = P.degree()
    if P and not P.is_homogeneous(p):
        raise ValueError("polynomial must be homogeneous")
    cert = {"input_hash": _poly_hash(m, ls, P.render()), "degree": p, "quadrics": list(ls)}
    if p < 2:
        cert.update(rank=0, solution_space_dim=0, components=0, unknowns=0)
        return DecompResult(tuple(Poly.zero(n) for _ in ls), P, cert)
    blocks, _ = _operator(m, ls, p)
    t = P.raw()
    acc = [dict() for _ in ls]
    ctoms = dict(t)
    rank = 0
    nullity = 0
    unknowns = 0
    for b in blocks:
        rank += b.rank
        nullity += b.nullity
        unknowns += len(b.cols)
        vals = [t.get(r) for r in b.rows]
        if not any(vals):
            continue
        re = [v.re if v is not None else QZERO for v in vals]
        im = [v.im if v is not None else QZERO for v in vals]
        has_im = any(im)
        a_re = exact.matvec(b.solver, re)
        a_im = exact.matvec(b.solver, im) if has_im else [QZERO] * len(b.cols)
        for (li, mono), x, y in zip(b.cols, a_re, a_im):
            if x or y:
                acc[li][mono] = Scalar._mk(x, y)
        # remainder on this block: P - M a
        img_re = exact.matvec(b.mat, a_re)
        img_im = exact.matvec(b.mat, a_im) if has_im else [QZERO] * len(b.rows)
        for r, v, x, y in zip(b.rows, vals, img_re, img_im):
            cr = (v.re if v is not None else QZERO) - x
            ci = (v.im if v is not None else QZERO) - y
            if cr or ci:
                ctoms[r] = Scalar._mk(cr, ci)
            else:
                ctoms.pop(r, None)
    cert.update(rank=rank, solution_space_dim=nullity, components=len(blocks), unknowns=unknowns)
    coeffs = tuple(Poly._raw(n, a) for a in acc)
    return DecompResult(coeffs, Poly._raw(n, ctoms), cert)


def fischer_decompose_joint(P: Poly, m: ModelManifold, degree: int | None = None) -> DecompResult:
    """P = sum_l A_l q_l + C with C in the joint kernel of all traces."""
    return _decompose(P, m, tuple(range(1, m.n + 1)), degree)


def fischer_decompose_single_result(P: Poly, m: ModelManifold, l: int, degree=None) -> DecompResult:
    if not 1 <= l <= m.n:
        raise IndexError(f"equation index {l} out of range")
    res = _decompose(P, m, (l,), degree)
    if res.certificate["solution_space_dim"]:
        p = res.certificate["degree"]
        blocks, _ = _operator(m, (l,), p)
        wit = next(b.witness for b in blocks if b.witness)
        wpoly = Poly(m.n, {mono: v for (_, mono), v in wit.items()})
        raise DecompositionError("multiplication by q_l is not injective", witness=wpoly)
    return res


def fischer_decompose_single(P: Poly, m: ModelManifold, l: int, degree=None):
    """(A, C) with P = A q_l + C and tr_l C = 0; unique."""
    res = fischer_decompose_single_result(P, m, l, degree)
    return res.coeffs[0], res.remainder


def harmonic_part(P: Poly, m: ModelManifold, l: int) -> Poly:
    return fischer_decompose_single(P, m, l)[1]


# -- joint kernel -------------------------------------------------------------

def kernel_basis(m: ModelManifold, degree) -> list:
    """Basis of the joint kernel of all traces on degree-p polynomials.

    ``degree`` is a total degree p or a bidegree (a, b).
    """
    n = m.n
    if isinstance(degree, tuple):
        a, b = degree
        p = a + b
        keep = lambda k: sum(k[:n]) == a
    else:
        p = degree
        keep = lambda k: True
    if p < 0:
        raise ValueError("degree must be non-negative")
    if p < 2:
        return [Poly(n, {k: 1}) for k in monomials(2 * n, p) if keep(k)]
    blocks, isolated = _operator(m, tuple(range(1, n + 1)), p)
    out = [Poly(n, {k: 1}) for k in isolated if keep(k)]
    for b in blocks:
        ridx = [i for i, r in enumerate(b.rows) if keep(r)]
        if not ridx:
            continue
        # kernel of tr restricted to these rows = kernel of M^T W on them
        mtw = [[b.mat[i][j] * monomial_weight(b.rows[i]) for i in ridx] for j in range(len(b.cols))]
        for v in exact.nullspace(mtw, ncols=len(ridx)):
            out.append(Poly(n, {b.rows[i]: x for i, x in zip(ridx, v) if x}))
    out.sort(key=lambda e: max(e.keys()), reverse=True)
    return out


# -- chains and normalization spaces -----------------------------------------

def split_real_imag(phi: Poly):
    """(Re, Im) with phi = Re + i Im, both real polynomials."""
    c = phi.conjugate()
    re = (phi + c).scale(Scalar(HALF))
    im = (phi - c).scale(Scalar._mk(QZERO, -HALF))  # 1/(2i) = -i/2
    return re, im


def _holo_mono(n, I):
    return Poly(n, {tuple(I) + (0,) * n: 1})


@lru_cache(maxsize=512)
def _chain_basis(m: ModelManifold, l: int, flavor: str, deg: int):
    """Basis elements C of one rung, labelled by I (G) or (l', J) (F)."""
    n = m.n
    gens = []
    if flavor == "G":
        for I in monomials(n, deg):
            gens.append((I, _holo_mono(n, I)))
    else:
        if deg < 1:
            return ()
        for lp in range(1, n + 1):
            dq = diff(quadric(m, lp), lp)  # zbar_l + 2 lam_l z_l in the diagonal case
            for J in monomials(n, deg - 1):
                gens.append(((lp, J), mul(dq, _holo_mono(n, J))))
    out = []
    for lab, g in gens:
        c = fischer_decompose_single(g, m, l)[1]
        out.append((lab, c))
    return tuple(out)


@dataclass
class RungCombo:
    a: dict  # label -> Scalar (coefficient of C)
    b: dict  # label -> Scalar (coefficient of conj C)
    residual: Poly  # R_{k+1,0}
    rank_deficient: bool = False

    def span_part(self, basis):
        n = self.residual.n
        out = Poly.zero(n)
        for lab, c in basis:
            x, y = self.a.get(lab), self.b.get(lab)
            if x:
                out = out + c.scale(x)
            if y:
                out = out + c.conjugate().scale(y)
        return out


@dataclass
class DecompChain:
    degree: int
    flavor: str
    l: int
    ladder: list  # (P_{k+1}, R_{k+1})
    combos: list  # RungCombo per rung
    excluded: tuple = ()

    def __len__(self):
        return len(self.ladder)


def _project_on_basis(R: Poly, basis, excluded=()):
    """Fischer projection of R on span{C, conj C}; returns RungCombo."""
    elems = []
    for lab, c in basis:
        if lab in excluded:
            continue
        elems.append((("a", lab), c))
        elems.append((("b", lab), c.conjugate()))
    if not elems or not R:
        return RungCombo({}, {}, R)
    k = len(elems)
    gram_re = [[QZERO] * k for _ in range(k)]
    gram_im = [[QZERO] * k for _ in range(k)]
    for i in range(k):
        for j in range(i, k):
            g = fischer_inner(elems[j][1], elems[i][1])
            gram_re[i][j] = g.re
            gram_im[i][j] = g.im
            if i != j:
                gram_re[j][i] = g.re
                gram_im[j][i] = -g.im
    if any(any(r) for r in gram_im):
        raise ValueError("chain basis with non-real Gram matrix")
    rhs = [fischer_inner(R, e) for _, e in elems]
    rre = [x.re for x in rhs]
    rim = [x.im for x in rhs]
    deficient = exact.rank(gram_re) < k
    xre, xim = exact.solve(gram_re, [rre, rim], unique=not deficient)
    a, b = {}, {}
    resid = R
    for ((kind, lab), e), x, y in zip(elems, xre, xim):
        s = Scalar._mk(x, y)
        if s:
            (a if kind == "a" else b)[lab] = s
            resid = resid - e.scale(s)
    return RungCombo(a, b, resid, deficient)


def nested_chain(P: Poly, m: ModelManifold, l: int, flavor: str = "G",
                 degree: int | None = None, strict: bool = True, excluded=()) -> DecompChain:
    """Iterated decomposition P_k = P_{k+1} q_l + R_{k+1}.

    G chains have floor(p/2) rungs, F chains floor((p-1)/2).
    """
    if flavor not in ("G", "F"):
        raise ValueError("flavor must be 'G' or 'F'")
    if strict and not P.is_real():
        raise ValueError("chain input must be real")
    p = P.degree() if degree is None else degree
    if P and not P.is_homogeneous(p):
        raise ValueError("chain input must be homogeneous")
    if p < 0:
        return DecompChain(p, flavor, l, [], [], tuple(excluded))
    rungs = p // 2 if flavor == "G" else (p - 1) // 2
    ladder, combos = [], []
    cur = P
    for k in range(rungs):
        deg = p - 2 * k
        a, r = fischer_decompose_single(cur, m, l, degree=deg)
        ladder.append((a, r))
        combos.append(_project_on_basis(r, _chain_basis(m, l, flavor, deg), tuple(excluded)))
        cur = a
    return DecompChain(p, flavor, l, ladder, combos, tuple(excluded))


def project_normalization_space(P: Poly, m: ModelManifold, l: int, flavor: str = "G",
                                degree: int | None = None, excluded=()):
    """(is_member, defect) for the G/F normalization space of equation l.

    The defect collects, rung by rung, the part of R_{k+1} lying in
    span{C, conj C} (re-multiplied by q_l^k); it vanishes iff P is a member.
    """
    ch = nested_chain(P, m, l, flavor, degree=degree, excluded=excluded)
    n = m.n
    defect = Poly.zero(n)
    q = quadric(m, l)
    qk = Poly.const(n, 1)
    for (_, r), combo in zip(ch.ladder, ch.combos):
        defect = defect + mul(r - combo.residual, qk)
        qk = mul(qk, q)
    return (not defect), defect
