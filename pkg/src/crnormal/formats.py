"""Text formats for manifolds and maps (JSON with canonical field order).

Writing then reading then writing gives the same bytes; parse failures carry
the line and column of the offending spot in the file.
"""
from __future__ import annotations

import json
import os
import tempfile

from .model import PerturbedManifold, RegimeError, ValidationError, make_model, make_perturbed
from .normalize import FormalMap, standard_linear_embedding, zw_names
from .polyring import ParseError, default_names, parse_poly, qstr, render


class FormatError(ValueError):
    def __init__(self, msg, line=1, col=1):
        super().__init__(f"line {line}, column {col}: {msg}")
        self.line = line
        self.col = col


def _loc(text, needle):
    """Line/column of the first occurrence of ``needle`` (1-based), else 1:1."""
    i = text.find(needle)
    if i < 0:
        return 1, 1
    return text.count("\n", 0, i) + 1, i - (text.rfind("\n", 0, i) + 1) + 1


def _load_json(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise FormatError(e.msg, e.lineno, e.colno) from None


def _field(obj, name, text, kind=None, optional=False):
    if name not in obj:
        if optional:
            return None
        raise FormatError(f"missing field {name!r}", *_loc(text, "{"))
    v = obj[name]
    if kind is not None and (not isinstance(v, kind) or isinstance(v, bool)):
        raise FormatError(f"field {name!r} has the wrong type", *_loc(text, f'"{name}"'))
    return v


def _poly(s, n, names, text):
    if not isinstance(s, str):
        raise FormatError("polynomial must be a string", *_loc(text, json.dumps(s)))
    try:
        return parse_poly(s, n, names)
    except ParseError as e:
        line, col = _loc(text, json.dumps(s))
        # the error column is relative to the string body, which starts after the quote
        if e.line == 1:
            col += e.col
        else:
            line, col = line + e.line - 1, e.col
        raise FormatError(f"bad polynomial: {e.args[0].split(': ', 1)[-1]}", line, col) from None


# -- manifolds -----------------------------------------------------------------------

def load_manifold(text: str, regime: str | None = "elliptic"):
    """ModelManifold, or PerturbedManifold when ``d_max``/``perturbations`` are present.

    A ``regime`` field in the file overrides the argument.
    """
    obj = _load_json(text)
    if not isinstance(obj, dict):
        raise FormatError("top level must be an object")
    n = _field(obj, "n", text, int)
    lam = _field(obj, "lambda", text, list)
    for x in lam:
        if not isinstance(x, str):
            raise FormatError("lambda entries must be strings \"p/q\"", *_loc(text, '"lambda"'))
    sigma = _field(obj, "sigma", text, list, optional=True)
    tau = _field(obj, "tau", text, list, optional=True)
    if "regime" in obj:
        regime = obj["regime"]
        if regime == "none":
            regime = None
    try:
        m = make_model(n, lam, sigma, tau, regime=regime)
    except (RegimeError, ValidationError, ValueError, ZeroDivisionError) as e:
        raise FormatError(str(e), *_loc(text, '"lambda"' if "lambda" in str(e) else '"n"')) from None
    d_max = _field(obj, "d_max", text, int, optional=True)
    pert = _field(obj, "perturbations", text, list, optional=True)
    if d_max is None and not pert:
        return m
    if d_max is None:
        raise FormatError("perturbations need an explicit d_max", *_loc(text, '"perturbations"'))
    items = []
    for ent in pert or []:
        if not isinstance(ent, dict):
            raise FormatError("perturbation entries must be objects", *_loc(text, '"perturbations"'))
        l = _field(ent, "l", text, int)
        k = _field(ent, "k", text, int)
        items.append((l, k, _poly(_field(ent, "poly", text), n, default_names(n), text)))
    try:
        return make_perturbed(m, d_max, items)
    except ValidationError as e:
        raise FormatError(str(e), *_loc(text, '"perturbations"')) from None


def dump_manifold(m) -> str:
    pm = m if isinstance(m, PerturbedManifold) else None
    base = pm.base if pm else m
    obj = {"n": base.n, "lambda": [qstr(x) for x in base.lam],
           "sigma": list(base.sigma), "tau": list(base.tau)}
    if base.regime != "elliptic":
        obj["regime"] = base.regime or "none"
    if pm is not None:
        obj["d_max"] = pm.d_max
        obj["perturbations"] = [{"l": l, "k": k, "poly": render(p)}
                                for l, row in enumerate(pm.perturbations, 1) for k, p in row]
    return json.dumps(obj, indent=2) + "\n"


# -- maps --------------------------------------------------------------------------------

def load_map(text: str) -> FormalMap:
    obj = _load_json(text)
    if not isinstance(obj, dict):
        raise FormatError("top level must be an object")
    n = _field(obj, "n_src", text, int)
    nd = _field(obj, "n_dst", text, int)
    d = _field(obj, "d_max", text, int)
    names = zw_names(n)
    F = [_poly(s, 2 * n, names, text) for s in _field(obj, "F", text, list)]
    G = [_poly(s, 2 * n, names, text) for s in _field(obj, "G", text, list)]
    try:
        return FormalMap(n, nd, d, tuple(F), tuple(G))
    except ValueError as e:
        raise FormatError(str(e), *_loc(text, '"F"')) from None


def dump_map(mp: FormalMap) -> str:
    names = zw_names(mp.n_src)
    obj = {"n_src": mp.n_src, "n_dst": mp.n_dst, "d_max": mp.d_max,
           "F": [render(f, names) for f in mp.F], "G": [render(g, names) for g in mp.G]}
    return json.dumps(obj, indent=2) + "\n"


def resolve_map(arg: str, n_src: int, n_dst: int, d: int) -> FormalMap:
    """``standard`` or a path to a map file."""
    if arg == "standard":
        return standard_linear_embedding(n_src, n_dst, d)
    with open(arg, encoding="utf-8") as fh:
        return load_map(fh.read())


def read_text(path):
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def atomic_write(path, data: str):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
