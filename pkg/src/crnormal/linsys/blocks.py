"""Layered block form of the traced decomposition equations.

For a diagonal model, applying tr_l to z^I = sum_m A_m q_m + C gives, for
every l,

    sum_m tr_l(A_m) q_m + (1+4 lam_l^2)(z_l d_z + zbar_l d_zbar + 1) A_l
        + 4 lam_l (zbar_l d_z + z_l d_zbar) A_l = tr_l(z^I).

Unknowns are the coefficients of A_1..A_N (degree p-2).  They are grouped in
layers k = |J| + 1 and, inside a layer, ordered by descending lex on (I;J)
and then by component.  Each contribution only moves |J| by at most 2, so
the block matrix has bandwidth 2.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from gmpy2 import mpq

from ..model import ModelManifold, quadric
from ..polyring import Poly, Scalar, monomials, qstr
from . import exact

QZERO = mpq(0)

# name -> (derivative kind, quadric part); derivative kinds act in variable l,
# quadric parts multiply in variable m
TRACE_FAMILIES = {
    "O": ("zzbar", "zzbar"), "O'": ("zzbar", "zz"), "O''": ("zzbar", "zbzb"),
    "V": ("zz", "zzbar"), "V'": ("zz", "zz"), "V''": ("zz", "zbzb"),
    "W": ("zbzb", "zzbar"), "W'": ("zbzb", "zz"), "W''": ("zbzb", "zbzb"),
}
SHIFT_FAMILIES = ("O0", "V0", "W0")


class AssemblyError(ValueError):
    pass


@dataclass
class BlockSystem:
    n: int
    p: int
    target: tuple
    labels: list  # (layer, key, component) for rows and columns alike
    layer_dims: list
    families: dict  # name -> {(row, col): value}
    rhs: list
    blocks: dict = field(default_factory=dict)  # (r, c) -> {(row, col): value}

    @property
    def size(self):
        return len(self.labels)

    def layer_of(self, i):
        return self.labels[i][0]

    def matrix(self):
        m = exact.zeros(self.size, self.size)
        for ent in self.families.values():
            for (i, j), v in ent.items():
                m[i][j] += v
        return m

    def apply(self, vec):
        out = [QZERO] * self.size
        for ent in self.families.values():
            for (i, j), v in ent.items():
                if vec[j]:
                    out[i] += v * vec[j]
        return out

    def nonzero_blocks(self):
        return sorted(k for k, v in self.blocks.items() if any(v.values()))

    def bandwidth(self):
        return max((abs(r - c) for r, c in self.nonzero_blocks()), default=0)

    def vector_to_polys(self, vec):
        """Coefficient vector -> (A_1..A_N)."""
        acc = [dict() for _ in range(self.n)]
        for (_, key, m), v in zip(self.labels, vec):
            if v:
                acc[m - 1][key] = Scalar(v)
        return [Poly(self.n, a) for a in acc]

    def polys_to_vector(self, polys, part="re"):
        out = []
        for _, key, m in self.labels:
            c = polys[m - 1].coeff(key)
            out.append(c.re if part == "re" else c.im)
        return out

    def dump(self) -> str:
        lines = [f"block-system n={self.n} p={self.p} target={list(self.target)}",
                 "layer_dims " + " ".join(str(d) for d in self.layer_dims)]
        for i, (k, key, m) in enumerate(self.labels):
            lines.append(f"label {i} layer={k} I={list(key[:self.n])} J={list(key[self.n:])} component={m}")
        for r, c in self.nonzero_blocks():
            lines.append(f"block {r} {c}")
            for (i, j), v in sorted(self.blocks[(r, c)].items()):
                if v:
                    lines.append(f"  {i} {j} {qstr(v)}")
        lines.append("rhs")
        for i, v in enumerate(self.rhs):
            if v:
                lines.append(f"  {i} {qstr(v)}")
        return "\n".join(lines) + "\n"


def _deriv(key, idx_z, idx_zb, kind):
    """Coefficient and new key of a second derivative of a monomial."""
    k = list(key)
    if kind == "zzbar":
        c = k[idx_z] * k[idx_zb]
        k[idx_z] -= 1
        k[idx_zb] -= 1
    elif kind == "zz":
        c = k[idx_z] * (k[idx_z] - 1)
        k[idx_z] -= 2
    else:
        c = k[idx_zb] * (k[idx_zb] - 1)
        k[idx_zb] -= 2
    return c, tuple(k)


def _raise(key, idx_z, idx_zb, part):
    k = list(key)
    if part == "zzbar":
        k[idx_z] += 1
        k[idx_zb] += 1
    elif part == "zz":
        k[idx_z] += 2
    else:
        k[idx_zb] += 2
    return tuple(k)


def assemble_block_system(m: ModelManifold, target, p: int | None = None) -> BlockSystem:
    """Block system for the decomposition of the holomorphic monomial z^target."""
    if not m.is_diagonal:
        raise AssemblyError("block system is defined for diagonal models")
    n = m.n
    target = tuple(int(x) for x in target)
    if len(target) != n:
        raise AssemblyError(f"target index has length {len(target)}, expected {n}")
    if p is None:
        p = sum(target)
    if sum(target) != p:
        raise AssemblyError(f"|target| = {sum(target)} does not match p = {p}")
    if p < 3:
        raise AssemblyError("block system needs p >= 3")
    lam = m.lam
    keys = list(monomials(2 * n, p - 2))
    layers = {}
    for key in keys:
        layers.setdefault(sum(key[n:]) + 1, []).append(key)
    labels = []
    layer_dims = []
    for k in range(1, p):
        group = layers.get(k, [])
        layer_dims.append(len(group) * n)
        for key in group:
            for comp in range(1, n + 1):
                labels.append((k, key, comp))
    pos = {(key, comp): i for i, (_, key, comp) in enumerate(labels)}
    fam = {name: {} for name in list(SHIFT_FAMILIES) + list(TRACE_FAMILIES)}

    def put(name, i, j, v):
        if v:
            d = fam[name]
            d[(i, j)] = d.get((i, j), QZERO) + v

    for j, (_, key, mcomp) in enumerate(labels):
        mz, mzb = mcomp - 1, n + mcomp - 1
        for l in range(1, n + 1):
            lz, lzb = l - 1, n + l - 1
            lam_l = lam[l - 1]
            for name, (dk, qp) in TRACE_FAMILIES.items():
                c, dkey = _deriv(key, lz, lzb, dk)
                if c == 0:
                    continue
                w = mpq(c)
                if dk != "zzbar":
                    w *= lam_l
                if qp != "zzbar":
                    w *= lam[mcomp - 1]
                put(name, pos[(_raise(dkey, mz, mzb, qp), l)], j, w)
        # shift terms only couple A_l with row l
        l = mcomp
        lam_l = lam[l - 1]
        i_l, j_l = key[mz], key[mzb]
        put("O0", j, j, (1 + 4 * lam_l * lam_l) * (i_l + j_l + 1))
        if i_l:
            k2 = list(key)
            k2[mz] -= 1
            k2[mzb] += 1
            put("V0", pos[(tuple(k2), l)], j, 4 * lam_l * i_l)
        if j_l:
            k2 = list(key)
            k2[mzb] -= 1
            k2[mz] += 1
            put("W0", pos[(tuple(k2), l)], j, 4 * lam_l * j_l)
    rhs = [QZERO] * len(labels)
    for l in range(1, n + 1):
        if target[l - 1] >= 2:
            key = list(target) + [0] * n
            key[l - 1] -= 2
            rhs[pos[(tuple(key), l)]] = lam[l - 1] * target[l - 1] * (target[l - 1] - 1)
    bs = BlockSystem(n, p, target, labels, layer_dims, fam, rhs)
    for ent in fam.values():
        for (i, j), v in ent.items():
            r, c = labels[i][0], labels[j][0]
            blk = bs.blocks.setdefault((r, c), {})
            blk[(i, j)] = blk.get((i, j), QZERO) + v
    return bs


def family_shift(name: str) -> int:
    """Row layer minus column layer for each named contribution."""
    shifts = {"O0": 0, "V0": 1, "W0": -1}
    if name in shifts:
        return shifts[name]
    dk, qp = TRACE_FAMILIES[name]
    dj = {"zzbar": -1, "zz": 0, "zbzb": -2}[dk] + {"zzbar": 1, "zz": 0, "zbzb": 2}[qp]
    return dj


def symbolic_action(m: ModelManifold, polys):
    """Oracle: the left-hand side computed directly with polynomial arithmetic."""
    from ..model import trace_op
    from ..polyring import diff

    n = m.n
    out = []
    for l in range(1, n + 1):
        lam = Scalar(m.lam[l - 1])
        one4 = Scalar(1 + 4 * m.lam[l - 1] ** 2)
        acc = Poly.zero(n)
        for mm in range(1, n + 1):
            acc = acc + trace_op(m, l, polys[mm - 1]) * quadric(m, mm)
        a = polys[l - 1]
        z, zb = Poly.z(n, l), Poly.zbar(n, l)
        acc = acc + (z * one4 + zb * (lam * 4)) * diff(a, l)
        acc = acc + (zb * one4 + z * (lam * 4)) * diff(a, l, conj=True)
        acc = acc + a * one4
        out.append(acc)
    return out
