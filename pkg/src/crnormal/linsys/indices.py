"""Enumeration of exponent pairs (I; J) in descending lexicographic order."""
from __future__ import annotations

from dataclasses import dataclass
from math import comb

from ..polyring import monomials


@dataclass(frozen=True)
class IndexTable:
    n: int
    p: int
    entries: tuple  # flat keys I + J
    layer: int | None = None

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def position(self, key):
        return self._pos()[tuple(key)]

    def _pos(self):
        cache = self.__dict__.get("_posmap")
        if cache is None:
            cache = {k: i for i, k in enumerate(self.entries)}
            object.__setattr__(self, "_posmap", cache)
        return cache

    def pairs(self):
        n = self.n
        return [(k[:n], k[n:]) for k in self.entries]

    def by_layer(self):
        """Groups keyed by |J|."""
        n = self.n
        out = {}
        for k in self.entries:
            out.setdefault(sum(k[n:]), []).append(k)
        return out


def enumerate_indices(n: int, p: int, layer: int | None = None) -> IndexTable:
    """All (I; J) with |I| + |J| = p; ``layer`` keeps only |J| = layer."""
    if n < 1 or p < 0:
        raise ValueError("need n >= 1 and p >= 0")
    keys = [k for k in monomials(2 * n, p) if layer is None or sum(k[n:]) == layer]
    return IndexTable(n, p, tuple(keys), layer)


def layer_size(n: int, p: int, j: int) -> int:
    """Number of (I; J) with |I| = p - j and |J| = j."""
    if j < 0 or j > p:
        return 0
    return comb(p - j + n - 1, n - 1) * comb(j + n - 1, n - 1)


def layer_dimension_audit(n_max: int = 4, p_max: int = 8):
    """Compare enumerated layer sizes with the binomial law and with N^p.

    Returns a list of records (n, p, j, enumerated, binomial, n_pow_p).
    """
    rows = []
    for n in range(1, n_max + 1):
        for p in range(0, p_max + 1):
            table = enumerate_indices(n, p).by_layer()
            for j in range(p + 1):
                got = len(table.get(j, ()))
                rows.append((n, p, j, got, layer_size(n, p, j), n ** p))
    return rows


def render_layer_audit(rows) -> str:
    lines = ["n p |J| enumerated binomial N^p agree_binomial agree_N^p"]
    bad_pow = 0
    for n, p, j, got, binom, npow in rows:
        lines.append(f"{n} {p} {j} {got} {binom} {npow} {'yes' if got == binom else 'NO'} "
                     f"{'yes' if got == npow else 'no'}")
        bad_pow += got != npow
    lines.append(f"binomial mismatches: {sum(1 for r in rows if r[3] != r[4])}")
    lines.append(f"N^p mismatches: {bad_pow} of {len(rows)}")
    return "\n".join(lines) + "\n"
