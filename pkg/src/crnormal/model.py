"""Model quadrics, trace operators and perturbed manifolds.

A model of dimension N is the system w_l = q_l(z, zbar), l = 1..N, with

    q_l = z_l zbar_{tau(l)} + lam_l (z_l z_{sigma(l)} + zbar_l zbar_{sigma(l)}).

Indices exposed to callers are 1-based.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

from gmpy2 import mpq

from .polyring import Poly, Scalar, apply_adjoint, diff, substitute, to_q

HALF = mpq(1, 2)


class RegimeError(ValueError):
    """lambda outside the admissible interval."""


class ValidationError(ValueError):
    pass


def _perm(p, n, name):
    if p is None:
        return tuple(range(1, n + 1))
    p = tuple(int(x) for x in p)
    if sorted(p) != list(range(1, n + 1)):
        raise ValidationError(f"{name} is not a permutation of 1..{n}: {p}")
    return p


@dataclass(frozen=True)
class ModelManifold:
    n: int
    lam: tuple
    sigma: tuple
    tau: tuple
    regime: str | None = "elliptic"

    @property
    def is_diagonal(self):
        ident = tuple(range(1, self.n + 1))
        return self.sigma == ident and self.tau == ident

    @property
    def in_elliptic_regime(self):
        return all(0 < x < HALF for x in self.lam)

    def quadrics(self):
        return _quadrics(self)

    def __str__(self):
        lam = ", ".join(str(x) for x in self.lam)
        return f"Model(N={self.n}, lambda=[{lam}], sigma={list(self.sigma)}, tau={list(self.tau)})"


def make_model(n, lam, sigma=None, tau=None, regime="elliptic") -> ModelManifold:
    """Validated model.

    ``regime`` is "elliptic" (every lambda in (0,1/2)), "positive" (lambda > 0,
    the admissible range for a target manifold) or None (no check).
    """
    if n < 1:
        raise ValidationError("dimension must be at least 1")
    lam = tuple(to_q(x) for x in lam)
    if len(lam) != n:
        raise ValidationError(f"expected {n} lambda values, got {len(lam)}")
    sigma = _perm(sigma, n, "sigma")
    tau = _perm(tau, n, "tau")
    if regime == "elliptic":
        bad = [x for x in lam if not 0 < x < HALF]
        if bad:
            raise RegimeError(f"lambda {bad[0]} outside (0, 1/2)")
    elif regime == "positive":
        bad = [x for x in lam if not x > 0]
        if bad:
            raise RegimeError(f"lambda {bad[0]} is not positive")
    elif regime is not None:
        raise ValidationError(f"unknown regime {regime!r}")
    return ModelManifold(n, lam, sigma, tau, regime)


def _check_index(m, l):
    if not 1 <= l <= m.n:
        raise IndexError(f"equation index {l} out of range 1..{m.n}")


@lru_cache(maxsize=None)
def _quadrics(m: ModelManifold):
    out = []
    n = m.n
    for l in range(1, n + 1):
        s, t = m.sigma[l - 1], m.tau[l - 1]
        lam = Scalar(m.lam[l - 1])
        q = Poly.z(n, l) * Poly.zbar(n, t)
        q = q + (Poly.z(n, l) * Poly.z(n, s) + Poly.zbar(n, l) * Poly.zbar(n, s)).scale(lam)
        out.append(q)
    return tuple(out)


def quadric(m: ModelManifold, l: int) -> Poly:
    _check_index(m, l)
    return _quadrics(m)[l - 1]


def trace_op(m: ModelManifold, l: int, p: Poly) -> Poly:
    """Fischer adjoint of multiplication by q_l.

    For a diagonal model this is d^2/dz_l dzbar_l + lam_l (d^2/dz_l^2 + d^2/dzbar_l^2).
    """
    _check_index(m, l)
    if p.n != m.n:
        raise ValueError(f"polynomial has {p.n} variables, model has {m.n}")
    return apply_adjoint(quadric(m, l), p)


def trace_op_closed_form(m: ModelManifold, l: int, p: Poly) -> Poly:
    """Explicit second-order form; only valid for diagonal models."""
    if not m.is_diagonal:
        raise ValueError("closed-form trace needs sigma = tau = id")
    lam = m.lam[l - 1]
    mixed = diff(diff(p, l), l, conj=True)
    return mixed + (diff(p, l, times=2) + diff(p, l, conj=True, times=2)).scale(lam)


@dataclass(frozen=True)
class RealitySplit:
    n_real: int
    classes: tuple  # "real" / "complex" per equation
    order: tuple  # permutation putting real equations first (1-based)


def reality_split(m: ModelManifold) -> RealitySplit:
    classes = []
    for l in range(1, m.n + 1):
        q = quadric(m, l)
        classes.append("real" if q == q.conjugate() else "complex")
    real = [l for l in range(1, m.n + 1) if classes[l - 1] == "real"]
    cplx = [l for l in range(1, m.n + 1) if classes[l - 1] == "complex"]
    return RealitySplit(len(real), tuple(classes), tuple(real + cplx))


@dataclass(frozen=True)
class PerturbedManifold:
    """w_l = q_l + sum_k phi_k^(l), truncated at d_max."""

    base: ModelManifold
    d_max: int
    perturbations: tuple = field(default=())  # per l: tuple of (k, Poly)

    @property
    def n(self):
        return self.base.n

    def phi(self, l, k):
        for kk, p in self.perturbations[l - 1]:
            if kk == k:
                return p
        return Poly.zero(self.n)

    def is_unperturbed(self):
        return all(not p for row in self.perturbations for _, p in row)


def make_perturbed(base: ModelManifold, d_max: int, perturbations=None, strict_reality=False):
    """``perturbations`` maps l -> {k: Poly} (or a list of (l, k, Poly) triples)."""
    n = base.n
    if d_max < 2:
        raise ValidationError("d_max must be at least 2")
    rows = [dict() for _ in range(n)]
    if perturbations:
        items = perturbations
        if isinstance(perturbations, dict):
            items = [(l, k, p) for l, ks in perturbations.items() for k, p in ks.items()]
        for l, k, p in items:
            if not 1 <= l <= n:
                raise ValidationError(f"perturbation index l={l} out of range")
            if k < 3 or k > d_max:
                raise ValidationError(f"perturbation degree {k} outside 3..{d_max}")
            if p.n != n:
                raise ValidationError("perturbation has wrong number of variables")
            if p and not p.is_homogeneous(k):
                raise ValidationError(f"phi_{k}^({l}) is not homogeneous of degree {k}")
            if strict_reality and not p.is_real():
                raise ValidationError(f"phi_{k}^({l}) is not real")
            rows[l - 1][k] = rows[l - 1].get(k, Poly.zero(n)) + p
    pert = tuple(tuple(sorted((k, p) for k, p in r.items() if p)) for r in rows)
    return PerturbedManifold(base, d_max, pert)


def unperturbed(base: ModelManifold, d_max: int) -> PerturbedManifold:
    return make_perturbed(base, d_max)


def defining_series(pm: PerturbedManifold, l: int) -> Poly:
    _check_index(pm.base, l)
    out = quadric(pm.base, l)
    for k, p in pm.perturbations[l - 1]:
        if k <= pm.d_max:
            out = out + p
    return out


def _as_matrix(a, name):
    rows = [[Scalar.coerce(x) for x in r] for r in a]
    n = len(rows)
    if n == 0 or any(len(r) != n for r in rows):
        raise ValidationError(f"{name} must be a non-empty square matrix")
    return rows


def _complex_det(rows):
    # Gaussian-rational determinant by plain elimination; tiny matrices only
    a = [list(r) for r in rows]
    n = len(a)
    d = Scalar(1)
    for c in range(n):
        piv = next((i for i in range(c, n) if a[i][c]), None)
        if piv is None:
            return Scalar(0)
        if piv != c:
            a[c], a[piv] = a[piv], a[c]
            d = -d
        d = d * a[c][c]
        for i in range(c + 1, n):
            if a[i][c]:
                f = a[i][c] / a[c][c]
                a[i] = [x - f * y for x, y in zip(a[i], a[c])]
    return d


def model_automorphism_check(gamma, delta, m: ModelManifold) -> bool:
    """True iff z' = gamma z, w' = delta w maps the model to itself.

    Equivalently q(gamma z, conj(gamma z)) = delta q(z, zbar) componentwise.
    """
    g = _as_matrix(gamma, "Gamma")
    dl = _as_matrix(delta, "Delta")
    n = m.n
    if len(g) != n or len(dl) != n:
        raise ValidationError(f"Gamma and Delta must be {n}x{n}")
    if not _complex_det(g) or not _complex_det(dl):
        raise ValidationError("Gamma and Delta must be invertible")
    zs = [Poly.z(n, j) for j in range(1, n + 1)]
    images = []
    for r in g:
        acc = Poly.zero(n)
        for c, zj in zip(r, zs):
            if c:
                acc = acc + zj.scale(c)
        images.append(acc)
    qs = _quadrics(m)
    for l in range(n):
        lhs = substitute(qs[l], images)
        rhs = Poly.zero(n)
        for c, qj in zip(dl[l], qs):
            if c:
                rhs = rhs + qj.scale(c)
        if lhs != rhs:
            return False
    return True
