import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crnormal.formats import FormatError, atomic_write, dump_manifold, dump_map, load_manifold, load_map
from crnormal.model import ModelManifold, PerturbedManifold, make_model, make_perturbed
from crnormal.normalize import standard_linear_embedding
from strategies import lambdas, polys

FIX = __import__("pathlib").Path(__file__).parent / "fixtures"


@pytest.mark.parametrize("name", ["m1.json", "m2.json", "m1_third.json", "p1.json"])
def test_fixture_round_trip_is_bit_exact(name):
    text = (FIX / name).read_text()
    assert dump_manifold(load_manifold(text)) == text


def test_fixture_kinds():
    assert isinstance(load_manifold((FIX / "m1.json").read_text()), ModelManifold)
    pm = load_manifold((FIX / "p1.json").read_text())
    assert isinstance(pm, PerturbedManifold) and pm.d_max == 5


@settings(max_examples=30)
@given(st.data())
def test_manifold_round_trip(data):
    n = data.draw(st.integers(1, 2))
    m = make_model(n, data.draw(lambdas(n)))
    k = data.draw(st.integers(3, 4))
    p = data.draw(polys(n=n, homogeneous=k, max_terms=3))
    pm = make_perturbed(m, 4, [(1, k, p)] if p else [])
    text = dump_manifold(pm)
    back = load_manifold(text)
    assert back == pm and dump_manifold(back) == text


def test_regime_field():
    m = make_model(1, ["3"], regime="positive")
    text = dump_manifold(m)
    assert '"regime": "positive"' in text
    assert load_manifold(text) == m


def test_map_round_trip():
    mp = standard_linear_embedding(1, 2, 4)
    text = dump_map(mp)
    assert load_map(text) == mp and dump_map(load_map(text)) == text


def test_json_syntax_error_position():
    with pytest.raises(FormatError) as e:
        load_manifold('{\n  "n": 1,\n  "lambda": [1/4]\n}')
    assert (e.value.line, e.value.col) == (3, 15)  # the slash


def test_bad_polynomial_position():
    text = ('{\n  "n": 1,\n  "lambda": ["1/4"],\n  "d_max": 3,\n'
            '  "perturbations": [{"l": 1, "k": 3, "poly": "z1^3 + z9"}]\n}')
    with pytest.raises(FormatError) as e:
        load_manifold(text)
    line = text.splitlines()[4]
    assert e.value.line == 5
    assert line[e.value.col - 1:].startswith("z9")


def test_semantic_errors_carry_location():
    with pytest.raises(FormatError) as e:
        load_manifold('{\n  "n": 1,\n  "lambda": ["1/2"]\n}')
    assert e.value.line == 3
    with pytest.raises(FormatError):
        load_manifold('{"n": true, "lambda": ["1/4"]}')
    with pytest.raises(FormatError):
        load_manifold('{"n": 1, "lambda": ["1/4"], "perturbations": [{"l": 1, "k": 3, "poly": "z1^3"}]}')
    with pytest.raises(FormatError):
        load_map(json.dumps({"n_src": 1, "n_dst": 1, "d_max": 2, "F": ["Z1"], "G": ["w1"]}))


def test_atomic_write(tmp_path):
    p = tmp_path / "sub" / "r.txt"
    atomic_write(str(p), "one\n")
    atomic_write(str(p), "two\n")
    assert p.read_text() == "two\n"
    assert [x.name for x in p.parent.iterdir()] == ["r.txt"]
