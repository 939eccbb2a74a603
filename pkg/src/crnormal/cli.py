"""Command-line front end.

Exit status: 0 success / true verdict, 1 false verdict or obstruction,
2 bad input.  Reports go to stdout and, with --output or when
CRNORMAL_REPORT_DIR is set, to a file written atomically.
"""
from __future__ import annotations

import argparse
import os
import sys

from . import fischer
from .formats import FormatError, atomic_write, load_manifold, read_text, resolve_map
from .linsys.aux import verify_invertibility
from .linsys.blocks import AssemblyError, assemble_block_system
from .linsys.indices import layer_dimension_audit, render_layer_audit
from .model import ModelManifold, PerturbedManifold, RegimeError, ValidationError, unperturbed
from .normalize import (DiagramError, NormalizationHalted, NotAnEmbeddingError, check_theorem_A,
                        check_theorem_B, is_embedding, normalize_embedding, verify_embedding_equation)
from .polyring import ParseError, TruncationError, parse_poly, render

REPORT_DIR_ENV = "CRNORMAL_REPORT_DIR"
DEFAULT_DEGREE = 5


class InputError(Exception):
    pass


def _model_file(path, regime="elliptic", strict_reality=False):
    try:
        m = load_manifold(read_text(path), regime=regime)
    except FormatError as e:
        raise InputError(f"{path}: {e}") from None
    except OSError as e:
        raise InputError(f"{path}: {e.strerror}") from None
    if strict_reality and isinstance(m, PerturbedManifold):
        for l, row in enumerate(m.perturbations, 1):
            for k, p in row:
                if not p.is_real():
                    raise InputError(f"{path}: perturbation l={l}, k={k} is not real")
    return m


def _base(m):
    return m.base if isinstance(m, PerturbedManifold) else m


def _require_model(m, path):
    if isinstance(m, PerturbedManifold):
        if not m.is_unperturbed():
            raise InputError(f"{path}: expected a model without perturbations")
        return m.base
    return m


def _with_dmax(m, d):
    if isinstance(m, ModelManifold):
        return unperturbed(m, d)
    if d > m.d_max:
        raise TruncationError(f"degree {d} exceeds d_max = {m.d_max}")
    return m


def _poly_arg(text, n):
    try:
        return parse_poly(text, n)
    except ParseError as e:
        raise InputError(f"--poly: {e}") from None


def _map_arg(arg, n_src, n_dst, d):
    try:
        mp = resolve_map(arg, n_src, n_dst, d)
    except FormatError as e:
        raise InputError(f"{arg}: {e}") from None
    except OSError as e:
        raise InputError(f"{arg}: {e.strerror}") from None
    if (mp.n_src, mp.n_dst) != (n_src, n_dst):
        raise InputError(f"{arg}: map is {mp.n_src} -> {mp.n_dst}, manifolds are {n_src} -> {n_dst}")
    if d > mp.d_max:
        raise TruncationError(f"degree {d} exceeds map d_max = {mp.d_max}")
    return mp


# -- commands: each returns (exit code, text) ------------------------------------------

def cmd_decompose(a):
    m = _base(_model_file(a.model, strict_reality=a.strict_reality))
    P = _poly_arg(a.poly, m.n)
    if a.l is None:
        res = fischer.fischer_decompose_joint(P, m)
        lines = [f"A{l} = {render(c)}" for l, c in enumerate(res.coeffs, 1)]
    else:
        res = fischer.fischer_decompose_single_result(P, m, a.l)
        lines = [f"A = {render(res.coeffs[0])}"]
    lines.append(f"C = {render(res.remainder)}")
    cert = res.certificate
    for k in sorted(cert):
        lines.append(f"certificate {k}: {cert[k]}")
    return 0, "\n".join(lines) + "\n"


def cmd_chain(a):
    m = _base(_model_file(a.model))
    P = _poly_arg(a.poly, m.n)
    excl = tuple(tuple(int(x) for x in e.split(",")) for e in a.exclude or ())
    try:
        ch = fischer.nested_chain(P, m, a.l, a.flavor, strict=a.strict_reality, excluded=excl)
        member, defect = fischer.project_normalization_space(P, m, a.l, a.flavor, excluded=excl) \
            if P.is_real() else (None, None)
    except ValueError as e:
        raise InputError(str(e)) from None
    lines = [f"chain flavor={ch.flavor} l={ch.l} degree={ch.degree} rungs={len(ch)}"]
    for k, ((pk, rk), cb) in enumerate(zip(ch.ladder, ch.combos)):
        lines.append(f"rung {k}: P = {render(pk)}")
        lines.append(f"rung {k}: R = {render(rk)}")
        for lab in sorted(set(cb.a) | set(cb.b), key=str):
            x, y = cb.a.get(lab), cb.b.get(lab)
            lines.append(f"rung {k}: label {lab}: a = {x if x else 0}, b = {y if y else 0}")
        lines.append(f"rung {k}: residual = {render(cb.residual)}" +
                     (" (rank deficient)" if cb.rank_deficient else ""))
    if member is not None:
        lines.append(f"member: {'yes' if member else 'no'}")
        lines.append(f"defect = {render(defect)}")
    return 0, "\n".join(lines) + "\n"


def cmd_kernel(a):
    m = _base(_model_file(a.model))
    deg = tuple(int(x) for x in a.bidegree.split(",")) if a.bidegree else a.degree
    if deg is None:
        raise InputError("give --degree or --bidegree")
    basis = fischer.kernel_basis(m, deg)
    lines = [f"kernel degree={deg} dim={len(basis)}"]
    lines += [render(b) for b in basis]
    return 0, "\n".join(lines) + "\n"


def cmd_dump_system(a):
    if a.layer_audit:
        return 0, render_layer_audit(layer_dimension_audit(a.n_max, a.p_max))
    if a.model is None or a.target is None:
        raise InputError("dump-system needs --model and --target (or --layer-audit)")
    m = _base(_model_file(a.model))
    try:
        target = [int(x) for x in a.target.split(",")]
        bs = assemble_block_system(m, target, a.degree)
    except (ValueError, AssemblyError) as e:
        raise InputError(str(e)) from None
    return 0, bs.dump()


def cmd_audit(a):
    m = _base(_model_file(a.model))
    if a.degree is None or a.degree < 3:
        raise InputError("--degree must be at least 3")
    if a.flavor == "plain" and not m.is_diagonal:
        raise InputError("plain flavor needs a diagonal model")
    au = verify_invertibility(m, a.degree, a.flavor)
    return (0 if au.ok else 1), au.render()


def _pair(a, dst_regime="positive"):
    src = _model_file(a.src, strict_reality=a.strict_reality)
    dst = _model_file(a.dst, regime=dst_regime, strict_reality=a.strict_reality)
    d = a.degree
    mp = _map_arg(a.map, src.n, dst.n, d)
    return src, dst, mp, d


def cmd_verify(a):
    src, dst, mp, d = _pair(a)
    res = verify_embedding_equation(mp, _with_dmax(src, d), _with_dmax(dst, d), d)
    ok = is_embedding(mp, _with_dmax(src, d), _with_dmax(dst, d), d)
    lines = [f"equation {s}: {render(r)}" for s, r in enumerate(res, 1)]
    lines.append(f"embedding up to degree {d}: {'yes' if ok else 'no'}")
    return (0 if ok else 1), "\n".join(lines) + "\n"


def cmd_normalize(a):
    src, dst, mp, d = _pair(a)
    res = normalize_embedding(mp, _with_dmax(src, d), _with_dmax(dst, d), d)
    text = res.report.render("normalization report")
    if res.normalized is not None:
        text += "[normalized map]\n" + res.normalized.render() + "\n"
    return (0 if res.report.linear.ok else 1), text


def cmd_theorem_a(a):
    src, dst, mp, d = _pair(a)
    src = _require_model(src, a.src)
    dst = _require_model(dst, a.dst)
    res = check_theorem_A(src, dst, mp, d)
    return (0 if res.verdict else 1), res.report.render("theorem A check")


def cmd_theorem_b(a):
    d = a.degree
    src = _with_dmax(_model_file(a.src, strict_reality=a.strict_reality), d)
    dst = _with_dmax(_model_file(a.dst, strict_reality=a.strict_reality), d)
    asrc = _require_model(_model_file(a.ambient_src), a.ambient_src)
    adst = _require_model(_model_file(a.ambient_dst, regime="positive"), a.ambient_dst)
    sv = _map_arg(a.src_vertical, src.n, asrc.n, d)
    dv = _map_arg(a.dst_vertical, dst.n, adst.n, d)
    top = _map_arg(a.top, asrc.n, adst.n, d)
    ind = _map_arg(a.induced, src.n, dst.n, d)
    res = check_theorem_B(src, dst, asrc, adst, sv, dv, d, top=top, induced=ind)
    return (0 if res.verdict else 1), res.report.render("theorem B check")


COMMANDS = {
    "decompose": cmd_decompose, "chain": cmd_chain, "kernel": cmd_kernel,
    "dump-system": cmd_dump_system, "audit-invertibility": cmd_audit,
    "normalize": cmd_normalize, "verify": cmd_verify,
    "theorem-a": cmd_theorem_a, "theorem-b": cmd_theorem_b,
}


def build_parser():
    ap = argparse.ArgumentParser(prog="crnormal", description="Fischer decompositions and normal forms of embeddings")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, degree_default=None):
        p.add_argument("--degree", "-d", type=int, default=degree_default)
        p.add_argument("--strict-reality", action="store_true")
        p.add_argument("--output", "-o")
        return p

    p = common(sub.add_parser("decompose", help="generalized Fischer decomposition"))
    p.add_argument("--model", required=True)
    p.add_argument("--poly", required=True)
    p.add_argument("--l", type=int, help="single quadric index; joint decomposition if omitted")

    p = common(sub.add_parser("chain", help="nested decomposition chain"))
    p.add_argument("--model", required=True)
    p.add_argument("--poly", required=True)
    p.add_argument("--l", type=int, default=1)
    p.add_argument("--flavor", choices=("G", "F"), default="G")
    p.add_argument("--exclude", action="append", help="label to leave out, comma separated")

    p = common(sub.add_parser("kernel", help="joint kernel of the traces"))
    p.add_argument("--model", required=True)
    p.add_argument("--bidegree")

    p = common(sub.add_parser("dump-system", help="block system matrix dump"))
    p.add_argument("--model")
    p.add_argument("--target", help="holomorphic multi-index, e.g. 2,1")
    p.add_argument("--layer-audit", action="store_true")
    p.add_argument("--n-max", type=int, default=4)
    p.add_argument("--p-max", type=int, default=8)

    p = common(sub.add_parser("audit-invertibility", help="determinants of the coupled systems"))
    p.add_argument("--model", required=True)
    p.add_argument("--flavor", choices=("tilded", "plain"), default="tilded")

    for name in ("normalize", "verify", "theorem-a"):
        p = common(sub.add_parser(name), DEFAULT_DEGREE)
        p.add_argument("--src", required=True)
        p.add_argument("--dst", required=True)
        p.add_argument("--map", default="standard")

    p = common(sub.add_parser("theorem-b"), DEFAULT_DEGREE)
    p.add_argument("--src", required=True)
    p.add_argument("--dst", required=True)
    p.add_argument("--ambient-src", required=True)
    p.add_argument("--ambient-dst", required=True)
    p.add_argument("--src-vertical", default="standard")
    p.add_argument("--dst-vertical", default="standard")
    p.add_argument("--top", default="standard")
    p.add_argument("--induced", default="standard")
    return ap


def _report_path(a):
    base = os.environ.get(REPORT_DIR_ENV)
    if a.output:
        return a.output if os.path.isabs(a.output) or not base else os.path.join(base, a.output)
    if base:
        return os.path.join(base, f"{a.command}.txt")
    return None


def run(argv=None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    ap = build_parser()
    try:
        a = ap.parse_args(argv)
    except SystemExit as e:
        return 2 if e.code else 0
    if getattr(a, "degree", None) is not None and a.degree < 1:
        err.write("error: --degree must be positive\n")
        return 2
    try:
        code, text = COMMANDS[a.command](a)
    except NormalizationHalted as e:
        code, text = 1, f"normalization halted: {e}\n" + e.audit.render()
    except DiagramError as e:
        err.write(f"error: diagram {e}\n")
        return 2
    except (InputError, NotAnEmbeddingError, TruncationError, ValidationError, RegimeError) as e:
        err.write(f"error: {e}\n")
        return 2
    out.write(text)
    path = _report_path(a)
    if path:
        atomic_write(path, text)
    return code


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
