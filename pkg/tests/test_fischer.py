import random

import pytest
import sympy
from gmpy2 import mpq
from hypothesis import given, settings
from hypothesis import strategies as st

from crnormal.fischer import (_chain_basis, _project_on_basis, fischer_decompose_joint,
                              fischer_decompose_single, fischer_decompose_single_result, fischer_inner,
                              fischer_norm2, harmonic_part, kernel_basis, nested_chain,
                              project_normalization_space, split_real_imag)
from crnormal.model import make_model, quadric, trace_op
from crnormal.polyring import Poly, Scalar, monomial_weight, monomials, parse_poly
from strategies import lambdas, polys, q_to_sym, random_homogeneous

M1 = make_model(1, ["1/4"])
M2 = make_model(2, ["1/4", "1/3"])
z1, Z1 = Poly.z(1, 1), Poly.zbar(1, 1)


def test_inner_examples():
    assert fischer_inner(z1 ** 2, z1 ** 2) == 2
    assert fischer_inner(z1 * Z1, z1 ** 2) == 0
    assert fischer_inner(quadric(M1, 1), quadric(M1, 1)) == mpq(5, 4)
    assert fischer_norm2(quadric(M1, 1)) == mpq(5, 4)


@settings(max_examples=50)
@given(st.data())
def test_inner_is_hermitian_and_positive(data):
    n = data.draw(st.integers(1, 2))
    p, q = data.draw(polys(n=n)), data.draw(polys(n=n))
    c = data.draw(st.sampled_from([Scalar(2), Scalar(0, 1), Scalar(mpq(1, 3), -1)]))
    assert fischer_inner(p, q) == fischer_inner(q, p).conjugate()
    assert fischer_inner(p.scale(c), q) == c * fischer_inner(p, q)
    nrm = fischer_inner(p, p)
    assert nrm.im == 0 and (nrm.re > 0 or not p)


def test_single_oracle_z_cubed():
    # 2a(1+4lam^2) + 4b lam = 6 lam, 4a lam + 2b(1+4lam^2) = 0 at lam = 1/4
    a, b = sympy.symbols("a b")
    lam = sympy.Rational(1, 4)
    sol = sympy.solve([2 * a * (1 + 4 * lam ** 2) + 4 * b * lam - 6 * lam,
                       4 * a * lam + 2 * b * (1 + 4 * lam ** 2)], [a, b])
    assert (sol[a], sol[b]) == (sympy.Rational(5, 7), sympy.Rational(-2, 7))
    A, C = fischer_decompose_single(z1 ** 3, M1, 1)
    assert A == parse_poly("5/7*z1 - 2/7*Z1", 1)
    assert C == z1 ** 3 - A * quadric(M1, 1)
    assert trace_op(M1, 1, C).is_zero()


def test_single_examples():
    A, C = fischer_decompose_single(quadric(M1, 1), M1, 1)
    assert A == Poly.const(1, 1) and C.is_zero()
    h = kernel_basis(M1, 3)[0]
    A, C = fischer_decompose_single(h, M1, 1)
    assert A.is_zero() and C == h
    assert harmonic_part(h, M1, 1) == h


@settings(max_examples=30)
@given(st.data())
def test_single_decomposition_properties(data):
    n = data.draw(st.integers(1, 2))
    m = make_model(n, data.draw(lambdas(n)))
    l = data.draw(st.integers(1, n))
    p = data.draw(st.integers(2, 4))
    P = data.draw(polys(n=n, homogeneous=p, max_terms=5))
    res = fischer_decompose_single_result(P, m, l, degree=p)
    A, C = res.coeffs[0], res.remainder
    assert A * quadric(m, l) + C == P
    assert trace_op(m, l, C).is_zero()
    assert res.certificate["solution_space_dim"] == 0
    # C is orthogonal to the image of multiplication by q_l
    assert fischer_inner(C, A * quadric(m, l)) == 0
    for k in monomials(2 * n, p - 2):
        assert fischer_inner(C, Poly(n, {k: 1}) * quadric(m, l)) == 0
    # determinism
    assert fischer_decompose_single(P, m, l, degree=p) == (A, C)


def test_joint_examples():
    q1, q2 = quadric(M2, 1), quadric(M2, 2)
    res = fischer_decompose_joint(q1 + q2, M2)
    assert res.coeffs == (Poly.const(2, 1), Poly.const(2, 1))
    assert res.remainder.is_zero()
    P = parse_poly("z1^3 - 2*z1*Z1^2 + i*Z1^3", 1)
    single = fischer_decompose_single(P, M1, 1)
    joint = fischer_decompose_joint(P, M1)
    assert (joint.coeffs[0], joint.remainder) == single


def _trace_matrix(m, p):
    """Matrix of (A_1..A_N) -> (tr_l(sum A_m q_m))_l in monomial coordinates, via sympy."""
    n = m.n
    cols = [(mm, k) for mm in range(1, n + 1) for k in monomials(2 * n, p - 2)]
    rows = [(l, k) for l in range(1, n + 1) for k in monomials(2 * n, p - 2)]
    rpos = {r: i for i, r in enumerate(rows)}
    K = sympy.zeros(len(rows), len(cols))
    for j, (mm, k) in enumerate(cols):
        prod = Poly(n, {k: 1}) * quadric(m, mm)
        for l in range(1, n + 1):
            for key, c in trace_op(m, l, prod).items():
                K[rpos[(l, key)], j] += q_to_sym(c.re)
    return K, cols, rows


def test_joint_minimal_norm_oracle():
    # N=2, lam=(1/4,1/3), P = z1^2 zbar2^2: check the defining system and W-orthogonality
    # of A to the solution-space kernel, computed independently with sympy
    P = Poly(2, {(2, 0, 0, 2): 1})
    res = fischer_decompose_joint(P, M2)
    A1, A2 = res.coeffs
    C = res.remainder
    assert A1 * quadric(M2, 1) + A2 * quadric(M2, 2) + C == P
    assert trace_op(M2, 1, C).is_zero() and trace_op(M2, 2, C).is_zero()
    K, cols, rows = _trace_matrix(M2, 4)
    x = sympy.Matrix([q_to_sym((A1 if mm == 1 else A2).coeff(k).re) for mm, k in cols])
    b = sympy.zeros(len(rows), 1)
    for i, (l, key) in enumerate(rows):
        b[i] = q_to_sym(trace_op(M2, l, P).coeff(key).re)
    assert K * x == b
    null = K.nullspace()
    assert len(null) == res.certificate["solution_space_dim"]
    for v in null:
        s = sum(x[j] * v[j] * monomial_weight(k) for j, (_, k) in enumerate(cols))
        assert s == 0


def test_reconstruction_random():
    rng = random.Random(11)
    for _ in range(40):
        n = rng.choice([1, 2, 3])
        p = rng.randint(2, 5 if n < 3 else 4)
        m = make_model(n, [f"{rng.randint(1, 4)}/{rng.randint(9, 13)}" for _ in range(n)])
        P = random_homogeneous(rng, n, p, density=0.4)
        res = fischer_decompose_joint(P, m)
        assert res.verify(m, P)


def test_kernel_examples():
    assert len(kernel_basis(M1, 0)) == 1
    assert len(kernel_basis(M2, 1)) == 4
    assert len(kernel_basis(M1, 2)) == 2
    for e in kernel_basis(M2, 3):
        assert trace_op(M2, 1, e).is_zero() and trace_op(M2, 2, e).is_zero()


@pytest.mark.parametrize("n,lam,p", [(1, ["1/4"], 4), (2, ["1/4", "1/3"], 3), (2, ["1/5", "2/5"], 4)])
def test_kernel_dimension_oracle(n, lam, p):
    m = make_model(n, lam)
    keys = list(monomials(2 * n, p))
    low = list(monomials(2 * n, p - 2))
    lpos = {k: i for i, k in enumerate(low)}
    T = sympy.zeros(n * len(low), len(keys))
    for j, k in enumerate(keys):
        for l in range(1, n + 1):
            for key, c in trace_op(m, l, Poly(n, {k: 1})).items():
                T[(l - 1) * len(low) + lpos[key], j] += q_to_sym(c.re)
    basis = kernel_basis(m, p)
    assert len(basis) == len(keys) - T.rank()
    B = sympy.Matrix([[q_to_sym(b.coeff(k).re) for k in keys] for b in basis])
    assert B.rank() == len(basis)


def test_kernel_bidegree():
    # traces mix bidegrees when lambda != 0, so pure-bidegree kernel elements are rarer
    total = kernel_basis(M2, 3)
    pure = [e for a in range(4) for e in kernel_basis(M2, (a, 3 - a))]
    assert len(pure) <= len(total)
    for e in pure:
        assert trace_op(M2, 1, e).is_zero() and trace_op(M2, 2, e).is_zero()
    for a in range(2):
        for e in kernel_basis(M1, (a, 1 - a)):
            assert e.bidegree_component(a, 1 - a) == e
    assert len(kernel_basis(M1, (1, 1))) == 0


def test_split_real_imag():
    re, im = split_real_imag(z1 ** 2)
    assert re == (z1 ** 2 + Z1 ** 2).scale(mpq(1, 2))
    assert im == (z1 ** 2 - Z1 ** 2).scale(Scalar(0, mpq(-1, 2)))
    assert split_real_imag(z1 * Z1)[1].is_zero()
    re, im = split_real_imag((z1 * Z1).scale(Scalar(0, 1)))
    assert re.is_zero() and im == z1 * Z1


@given(polys())
def test_split_reconstructs(phi):
    re, im = split_real_imag(phi)
    assert re.is_real() and im.is_real()
    assert re + im.scale(Scalar(0, 1)) == phi


# -- chains -----------------------------------------------------------------------

def test_chain_examples():
    ch = nested_chain(Poly.zero(1), M1, 1, degree=4)
    assert all(a.is_zero() and r.is_zero() for a, r in ch.ladder)
    ch = nested_chain(quadric(M1, 1), M1, 1)
    assert len(ch) == 1
    assert ch.ladder[0] == (Poly.const(1, 1), Poly.zero(1))
    ch = nested_chain(z1 ** 3 + Z1 ** 3, M1, 1)
    assert len(ch) == 1
    cb = ch.combos[0]
    assert cb.a[(3,)] == 1 and cb.b[(3,)] == 1
    assert cb.residual.is_zero()
    with pytest.raises(ValueError):
        nested_chain(z1 ** 3, M1, 1)


@settings(max_examples=25)
@given(st.data())
def test_chain_invariants(data):
    n = data.draw(st.integers(1, 2))
    m = make_model(n, data.draw(lambdas(n)))
    l = data.draw(st.integers(1, n))
    flavor = data.draw(st.sampled_from(["G", "F"]))
    p = data.draw(st.integers(1, 5 if n == 1 else 4))
    raw = data.draw(polys(n=n, homogeneous=p, max_terms=5))
    P = raw + raw.conjugate()
    ch = nested_chain(P, m, l, flavor, degree=p)
    assert len(ch) == (p // 2 if flavor == "G" else (p - 1) // 2)
    cur = P
    for k, ((pk, rk), cb) in enumerate(zip(ch.ladder, ch.combos)):
        assert pk * quadric(m, l) + rk == cur
        assert trace_op(m, l, rk).is_zero()
        basis = _chain_basis(m, l, flavor, p - 2 * k)
        assert cb.span_part(basis) + cb.residual == rk
        for _, c in basis:
            assert fischer_inner(cb.residual, c) == 0
            assert fischer_inner(cb.residual, c.conjugate()) == 0
        for lab in set(cb.a) | set(cb.b):
            assert cb.b.get(lab, Scalar(0)) == cb.a.get(lab, Scalar(0)).conjugate()
        cur = pk


def _basis_rank(basis):
    vecs = [e for _, c in basis for e in (c, c.conjugate())]
    keys = sorted({k for v in vecs for k in v.keys()})
    rows = [[q_to_sym(v.coeff(k).re) + sympy.I * q_to_sym(v.coeff(k).im) for k in keys] for v in vecs]
    return sympy.Matrix(rows).rank(), len(vecs)


def test_f_basis_can_be_dependent():
    # N=1, degree 2: the harmonic part of (zbar + 2 lam z) z is lam (z^2 - zbar^2), so conj C = -C
    basis = _chain_basis(M1, 1, "F", 2)
    (_, c), = basis
    assert c.conjugate() == -c
    assert _basis_rank(basis) == (1, 2)
    ch = nested_chain(quadric(M1, 1) * (z1 ** 2 + Z1 ** 2), M1, 1, "F")
    assert len(ch) == 1
    cb = ch.combos[0]
    assert cb.span_part(_chain_basis(M1, 1, "F", 4)) + cb.residual == ch.ladder[0][1]


@pytest.mark.parametrize("n,lam", [(1, ["1/4"]), (2, ["1/4", "1/3"])])
def test_chain_basis_independent(n, lam):
    m = make_model(n, lam)
    flavor = "G"
    for deg in range(1, 6 if n == 1 else 5):
        basis = _chain_basis(m, 1, flavor, deg)
        vecs = []
        for _, c in basis:
            for e in (c, c.conjugate()):
                vecs.append(e)
        if not vecs:
            continue
        keys = sorted({k for v in vecs for k in v.keys()})
        rows = []
        for v in vecs:
            rows.append([q_to_sym(v.coeff(k).re) + sympy.I * q_to_sym(v.coeff(k).im) for k in keys])
        assert sympy.Matrix(rows).rank() == len(vecs)


def test_normalization_space_examples():
    assert project_normalization_space(Poly.zero(1), M1, 1, degree=3) == (True, Poly.zero(1))
    # q * (z^2 + zbar^2): second rung picks up the harmonic part of z^2 + zbar^2
    h = z1 ** 2 + Z1 ** 2
    member, defect = project_normalization_space(quadric(M1, 1) * h, M1, 1)
    assert not member
    c = harmonic_part(z1 ** 2, M1, 1)
    assert defect == quadric(M1, 1) * (c + c.conjugate())
    # q^2: every rung remainder vanishes, so the induced rungs are trivial
    member, defect = project_normalization_space(quadric(M1, 1) ** 2, M1, 1)
    assert member and defect.is_zero()


def test_normalization_space_member_from_kernel():
    # p = 3, N = 2: real joint-kernel elements Fischer-orthogonal to the chain basis are members
    m = M2
    basis = _chain_basis(m, 1, "G", 3)
    found = 0
    for e in kernel_basis(m, 3):
        r = (e + e.conjugate())
        if not r:
            continue
        res = _project_on_basis(r, basis).residual
        if not res:
            continue
        # definition check, independent of the chain code
        assert trace_op(m, 1, res).is_zero()
        for _, c in basis:
            assert fischer_inner(res, c) == 0 and fischer_inner(res, c.conjugate()) == 0
        member, defect = project_normalization_space(res, m, 1)
        assert member and defect.is_zero()
        found += 1
    assert found > 0


def test_excluded_labels():
    P = z1 ** 3 + Z1 ** 3
    ch = nested_chain(P, M1, 1, excluded=[(3,)])
    assert ch.combos[0].a == {} and ch.combos[0].residual == ch.ladder[0][1]
    member, _ = project_normalization_space(P, M1, 1, excluded=[(3,)])
    assert member
