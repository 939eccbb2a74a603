import pytest
from gmpy2 import mpq
from hypothesis import given, settings
from hypothesis import strategies as st

from crnormal.fischer import fischer_inner
from crnormal.model import (RegimeError, ValidationError, defining_series, make_model, make_perturbed,
                            model_automorphism_check, quadric, reality_split, trace_op, trace_op_closed_form,
                            unperturbed)
from crnormal.polyring import Poly, Scalar, diff, monomials, parse_poly
from strategies import lambdas, polys

z1, Z1 = Poly.z(1, 1), Poly.zbar(1, 1)


def test_make_model_examples():
    m = make_model(1, ["1/4"])
    assert quadric(m, 1) == parse_poly("z1*Z1 + 1/4*z1^2 + 1/4*Z1^2", 1)
    m2 = make_model(2, ["1/4", "1/3"])
    assert m2.is_diagonal and m2.in_elliptic_regime
    with pytest.raises(RegimeError):
        make_model(1, ["1/2"])
    with pytest.raises(RegimeError):
        make_model(1, ["0"])
    # the target regime only needs positivity
    assert make_model(1, ["3"], regime="positive").lam == (mpq(3),)
    assert not make_model(1, ["3"], regime=None).in_elliptic_regime


def test_validation_errors():
    with pytest.raises(ValidationError):
        make_model(2, ["1/4", "1/5"], sigma=[1, 1])
    with pytest.raises(ValidationError):
        make_model(2, ["1/4"])
    with pytest.raises(ValidationError):
        make_model(0, [])
    with pytest.raises(IndexError):
        quadric(make_model(1, ["1/4"]), 2)


def test_quadric_non_diagonal():
    m = make_model(2, ["1/4", "1/5"], sigma=[1, 2], tau=[2, 1])
    want = parse_poly("z1*Z2 + 1/4*(z1^2 + Z1^2)", 2)
    assert quadric(m, 1) == want
    # real iff tau(l) = l
    assert not quadric(m, 1).is_real()
    d = make_model(2, ["1/4", "1/5"])
    assert all(quadric(d, l).conjugate() == quadric(d, l) for l in (1, 2))


def test_trace_examples():
    m = make_model(1, ["1/4"])
    lam = mpq(1, 4)
    assert trace_op(m, 1, quadric(m, 1)) == Poly.const(1, 1 + 4 * lam * lam)
    assert trace_op(m, 1, z1 ** 3) == z1.scale(6 * lam)
    m2 = make_model(2, ["1/4", "1/3"])
    assert trace_op(m2, 1, Poly.z(2, 1) * Poly.zbar(2, 2)).is_zero()


@settings(max_examples=40)
@given(st.data())
def test_trace_is_fischer_adjoint(data):
    n = data.draw(st.integers(1, 2))
    m = make_model(n, data.draw(lambdas(n)))
    l = data.draw(st.integers(1, n))
    deg = data.draw(st.integers(2, 5))
    p = data.draw(polys(n=n, homogeneous=deg, max_terms=4))
    a = data.draw(polys(n=n, homogeneous=deg - 2, max_terms=4))
    t = trace_op(m, l, p)
    assert t == trace_op_closed_form(m, l, p)
    assert fischer_inner(a * quadric(m, l), p) == fischer_inner(a, t)
    assert t.is_zero() or t.is_homogeneous(deg - 2)


def test_trace_adjoint_all_monomials_degree_five():
    # exhaustive over monomial pairs for N <= 2 up to degree 5
    for n, lam in ((1, ["2/7"]), (2, ["1/4", "1/3"])):
        m = make_model(n, lam)
        for deg in range(2, 6 if n == 1 else 5):
            basis = [Poly(n, {k: 1}) for k in monomials(2 * n, deg)]
            low = [Poly(n, {k: 1}) for k in monomials(2 * n, deg - 2)]
            for l in range(1, n + 1):
                q = quadric(m, l)
                for b in basis:
                    t = trace_op(m, l, b)
                    for a in low:
                        assert fischer_inner(a * q, b) == fischer_inner(a, t)


@settings(max_examples=25)
@given(st.data())
def test_trace_of_product_expansion(data):
    # tr(A q) = tr(A) q + (1 + 4 lam^2)(z d + zbar dbar + 1) A + 4 lam (zbar d + z dbar) A
    m = make_model(1, data.draw(lambdas(1)))
    lam = m.lam[0]
    A = data.draw(polys(n=1, homogeneous=data.draw(st.integers(0, 3)), max_terms=4))
    one4 = Scalar(1 + 4 * lam * lam)
    rhs = trace_op(m, 1, A) * quadric(m, 1)
    rhs = rhs + (z1 * diff(A, 1) + Z1 * diff(A, 1, conj=True) + A).scale(one4)
    rhs = rhs + (Z1 * diff(A, 1) + z1 * diff(A, 1, conj=True)).scale(Scalar(4 * lam))
    assert trace_op(m, 1, A * quadric(m, 1)) == rhs


def test_closed_form_needs_diagonal():
    m = make_model(2, ["1/4", "1/5"], tau=[2, 1])
    with pytest.raises(ValueError):
        trace_op_closed_form(m, 1, Poly.z(2, 1))


def test_reality_split_examples():
    assert reality_split(make_model(2, ["1/4", "1/5"])).n_real == 2
    assert reality_split(make_model(2, ["1/4", "1/5"], tau=[2, 1])).n_real == 0
    rs = reality_split(make_model(3, ["1/4", "1/5", "1/7"], tau=[1, 3, 2]))
    assert rs.n_real == 1
    assert rs.order[0] == 1


@given(st.permutations([1, 2, 3]), st.permutations([1, 2, 3]))
def test_reality_split_invariant_under_relabeling(tau, pi):
    # conjugating tau by a relabeling pi keeps the number of fixed points
    inv = {v: i + 1 for i, v in enumerate(pi)}
    tau2 = [pi[tau[inv[j] - 1] - 1] for j in (1, 2, 3)]
    a = reality_split(make_model(3, ["1/4", "1/5", "1/7"], tau=list(tau)))
    b = reality_split(make_model(3, ["1/4", "1/5", "1/7"], tau=tau2))
    assert a.n_real == b.n_real


def test_defining_series():
    m = make_model(1, ["1/4"])
    assert defining_series(unperturbed(m, 5), 1) == quadric(m, 1)
    pm = make_perturbed(m, 5, {1: {3: z1 ** 3}})
    assert defining_series(pm, 1) == quadric(m, 1) + z1 ** 3
    assert defining_series(pm, 1).degree() <= 5
    with pytest.raises(ValidationError):
        make_perturbed(m, 3, {1: {4: z1 ** 4}})
    with pytest.raises(ValidationError):
        make_perturbed(m, 5, {1: {3: z1 ** 2}})
    with pytest.raises(ValidationError):
        make_perturbed(m, 5, {1: {3: z1 ** 3}}, strict_reality=True)
    assert make_perturbed(m, 5, {1: {3: z1 ** 3 + Z1 ** 3}}, strict_reality=True).phi(1, 3) == z1 ** 3 + Z1 ** 3


def test_automorphism_check_examples():
    m = make_model(1, ["1/4"])
    assert model_automorphism_check([[1]], [[1]], m)
    assert model_automorphism_check([[-1]], [[1]], m)
    assert not model_automorphism_check([[2]], [[1]], m)
    assert model_automorphism_check([[2]], [[4]], m)
    with pytest.raises(ValidationError):
        model_automorphism_check([[0]], [[1]], m)
    with pytest.raises(ValidationError):
        model_automorphism_check([[1, 0]], [[1]], m)


def test_automorphism_check_swap():
    same = make_model(2, ["1/4", "1/4"])
    diff_ = make_model(2, ["1/4", "1/3"])
    sw = [[0, 1], [1, 0]]
    assert model_automorphism_check(sw, sw, same)
    assert not model_automorphism_check(sw, sw, diff_)
