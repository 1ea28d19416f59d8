"""Independent reference implementations over plain dicts.

None of these touch the sparse machinery under test: arrays are compared
through ``as_dict`` and results are built from scratch.
"""
import itertools

import numpy as np
from hypothesis import strategies as st

from cmdmask.assoc import AssociativeArray


def as_dict(A):
    return {(t.row, t.col): t.val for t in A}


def from_dict(d):
    d = {k: v for k, v in d.items() if v != 0 and v != b""}
    if not d:
        return AssociativeArray.empty()
    (rows, cols), vals = zip(*d.keys()), list(d.values())
    return AssociativeArray.from_lists(rows, cols, vals)


def dense_multiply(a, b):
    """Triple loop over the union key space; absent entries are 0."""
    rows = sorted({r for r, _ in a})
    inner = sorted({c for _, c in a} | {r for r, _ in b})
    cols = sorted({c for _, c in b})
    out = {}
    for r in rows:
        for c in cols:
            s = 0.0
            for k in inner:
                s += _num(a.get((r, k), 0.0)) * _num(b.get((k, c), 0.0))
            if s != 0:
                out[(r, c)] = s
    return out


def _num(v):
    return 1.0 if isinstance(v, bytes) else float(v)


def dense_combine(a, b, op):
    out = {}
    keys = a.keys() & b.keys() if op == "min" else a.keys() | b.keys()
    for k in keys:
        x, y = a.get(k, 0.0), b.get(k, 0.0)
        if op == "add":
            v = x + y
        elif op == "sub":
            v = x - y
        elif op == "min":
            v = min(x, y)
        else:
            v = max(a[k], b[k]) if k in a and k in b else (a.get(k) if k in a else b[k])
        if v != 0:
            out[k] = v
    return out


def dense_transpose(a):
    return {(c, r): v for (r, c), v in a.items()}


def dense_threshold(a, cut):
    return {k: v for k, v in a.items() if v > cut}


def dense_select(a, rmatch, cmatch):
    return {(r, c): v for (r, c), v in a.items() if rmatch(r) and cmatch(c)}


def kmer_match(seqs, k, cut=0.0):
    """Pairwise k-mer-set intersection sizes above ``cut``."""
    sets = {s.id: {s.bases[i:i + k] for i in range(len(s.bases) - k + 1)} for s in seqs}
    out = {}
    for (i, a), (j, b) in itertools.product(sets.items(), repeat=2):
        n = len(a & b)
        if n > cut:
            out[(i, j)] = float(n)
    return out


def random_array(rng: np.random.Generator, n_rows, n_cols, density, integer=True,
                 row_prefix=b"r", col_prefix=b"c"):
    """Seeded random numeric array with zero-padded keys."""
    mask = rng.random((n_rows, n_cols)) < density
    ri, ci = np.nonzero(mask)
    if integer:
        vals = rng.integers(1, 10, len(ri)).astype(float)
    else:
        vals = rng.random(len(ri)) + 0.5
    if len(ri) == 0:
        return AssociativeArray.empty()
    rows = [row_prefix + b"%04d" % i for i in ri]
    cols = [col_prefix + b"%04d" % j for j in ci]
    return AssociativeArray.from_lists(rows, cols, list(vals))


# -- hypothesis strategies ---------------------------------------------------

# a small key pool forces overlaps, shared prefixes and non-ASCII bytes
key_letters = st.sampled_from([b"a", b"b", b"c", b"ab", b"ba", b"abc", b"b\x00", b"\xff"])
int_values = st.integers(-5, 5).map(float)


@st.composite
def dicts(draw, keys=key_letters, values=int_values, max_size=20):
    d = draw(st.dictionaries(st.tuples(keys, keys), values, max_size=max_size))
    return {k: v for k, v in d.items() if v != 0}


@st.composite
def arrays(draw, **kw):
    return from_dict(draw(dicts(**kw)))
