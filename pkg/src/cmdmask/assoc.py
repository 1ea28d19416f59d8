"""Immutable sparse associative arrays over byte-string keys.

An :class:`AssociativeArray` is a sparse matrix whose rows and columns are
indexed by byte strings instead of integers. Values are either numbers
(stored as 64-bit floats) or non-empty byte strings. Zero and empty values
are never stored, and every row/column key appears in at least one entry.

Internally the array keeps its sorted key tuples plus COO index arrays sorted
by ``(row, col)``; numeric work is delegated to :mod:`scipy.sparse`.
"""
from __future__ import annotations

import bisect
import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Iterator, NamedTuple, Sequence, Union

import numpy as np
import scipy.sparse as sp

from .errors import InvalidRange, MixedTypeCollision, TypeMismatch

Value = Union[float, bytes]
KeyLike = Union[bytes, str]

__all__ = [
    "ALL",
    "All",
    "AssociativeArray",
    "CollisionRule",
    "Exact",
    "KeySpec",
    "Prefix",
    "Range",
    "Triple",
    "combine",
    "from_triples",
    "multiply",
    "select",
    "threshold",
    "to_triples",
    "transpose",
]


class Triple(NamedTuple):
    row: bytes
    col: bytes
    val: Value


class CollisionRule(enum.Enum):
    #: Sum numbers, last write wins for strings; mixing the two is an error.
    SUM = "sum"
    #: Last write wins for every value type.
    LAST = "last"


def as_key(key: KeyLike) -> bytes:
    if isinstance(key, (bytes, bytearray, memoryview)):
        key = bytes(key)
    elif isinstance(key, str):
        key = key.encode("utf-8")
    else:
        raise TypeError(f"keys must be bytes or str, not {type(key).__name__}")
    if not key:
        raise ValueError("keys must be non-empty")
    return key


def as_value(val) -> Value | None:
    """Normalize a value; returns None for values that mean "absent"."""
    if isinstance(val, (bytes, bytearray, memoryview)):
        val = bytes(val)
        return val or None
    if isinstance(val, str):
        return val.encode("utf-8") or None
    if isinstance(val, (int, float, np.integer, np.floating)):
        val = float(val)
        if not math.isfinite(val):
            raise ValueError(f"non-finite value {val!r}")
        return val if val != 0.0 else None
    raise TypeError(f"unsupported value type {type(val).__name__}")


# ---------------------------------------------------------------------------
# key specifications


def _prefix_successor(prefix: bytes) -> bytes | None:
    stripped = prefix.rstrip(b"\xff")
    if not stripped:
        return None
    return stripped[:-1] + bytes((stripped[-1] + 1,))


class KeySpec:
    """Base class for row/column selectors."""

    def matches(self, key: bytes) -> bool:
        raise NotImplementedError

    def spans(self, keys: Sequence[bytes]) -> list[tuple[int, int]]:
        """Half-open index spans of ``keys`` (sorted) selected by this spec."""
        raise NotImplementedError


@dataclass(frozen=True)
class All(KeySpec):
    def matches(self, key):
        return True

    def spans(self, keys):
        return [(0, len(keys))]


ALL = All()


@dataclass(frozen=True)
class Exact(KeySpec):
    keys: tuple[bytes, ...]

    def __init__(self, keys: Iterable[KeyLike]):
        if isinstance(keys, (bytes, str)):
            keys = [keys]
        object.__setattr__(self, "keys", tuple(sorted({as_key(k) for k in keys})))

    def matches(self, key):
        i = bisect.bisect_left(self.keys, key)
        return i < len(self.keys) and self.keys[i] == key

    def spans(self, keys):
        out = []
        for k in self.keys:
            lo = bisect.bisect_left(keys, k)
            hi = bisect.bisect_right(keys, k, lo)
            if hi > lo:
                out.append((lo, hi))
        return out


@dataclass(frozen=True)
class Prefix(KeySpec):
    prefix: bytes

    def __init__(self, prefix: KeyLike):
        object.__setattr__(self, "prefix", as_key(prefix))

    def matches(self, key):
        return key.startswith(self.prefix)

    def spans(self, keys):
        lo = bisect.bisect_left(keys, self.prefix)
        succ = _prefix_successor(self.prefix)
        hi = len(keys) if succ is None else bisect.bisect_left(keys, succ, lo)
        return [(lo, hi)] if hi > lo else []


@dataclass(frozen=True)
class Range(KeySpec):
    """Keys from ``start`` to ``end``, both inclusive."""

    start: bytes
    end: bytes

    def __init__(self, start: KeyLike, end: KeyLike):
        start, end = as_key(start), as_key(end)
        if start > end:
            raise InvalidRange(f"range start {start!r} > end {end!r}")
        object.__setattr__(self, "start", start)
        object.__setattr__(self, "end", end)

    def matches(self, key):
        return self.start <= key <= self.end

    def spans(self, keys):
        lo = bisect.bisect_left(keys, self.start)
        hi = bisect.bisect_right(keys, self.end, lo)
        return [(lo, hi)] if hi > lo else []


def as_keyspec(spec) -> KeySpec:
    """Accept D4M-ish shorthands: ``:`` (slice(None)), a key, a list of keys,
    or ``slice(lo, hi)`` for an inclusive range."""
    if spec is None:
        return ALL
    if isinstance(spec, KeySpec):
        return spec
    if isinstance(spec, slice):
        if spec.step is not None:
            raise ValueError("stepped slices are not supported")
        if spec.start is None and spec.stop is None:
            return ALL
        if spec.start is None or spec.stop is None:
            raise ValueError("open-ended ranges need both endpoints")
        return Range(spec.start, spec.stop)
    if isinstance(spec, (bytes, str)):
        return Exact([spec])
    return Exact(spec)


# ---------------------------------------------------------------------------
# the array type


def _is_numeric(vals: np.ndarray) -> bool:
    return vals.dtype != object


def _values_array(vals: Sequence) -> np.ndarray:
    """Build the value array: float64 when all numeric, object otherwise."""
    if isinstance(vals, np.ndarray) and vals.dtype.kind in "fiu":
        arr = vals.astype(np.float64, copy=False)
        if not np.isfinite(arr).all():
            raise ValueError("non-finite value")
        return arr
    norm = []
    any_str = False
    for v in vals:
        if isinstance(v, (bytes, bytearray, memoryview, str)):
            v = as_value(v)
            any_str = True
            norm.append(v if v is not None else b"")
        else:
            v = as_value(v)
            norm.append(0.0 if v is None else v)
    if not any_str:
        return np.asarray(norm, dtype=np.float64)
    arr = np.empty(len(norm), dtype=object)
    arr[:] = norm
    return arr


def _present(vals: np.ndarray) -> np.ndarray:
    if _is_numeric(vals):
        return vals != 0.0
    return np.fromiter((v != b"" and v != 0.0 for v in vals), bool, len(vals))


def _maybe_numeric(vals: np.ndarray) -> np.ndarray:
    if _is_numeric(vals) or any(isinstance(v, bytes) for v in vals):
        return vals
    return vals.astype(np.float64)


def _as_float(vals: np.ndarray) -> np.ndarray:
    """Presence semantics: strings count as 1.0."""
    if _is_numeric(vals):
        return vals
    return np.fromiter((1.0 if isinstance(v, bytes) else v for v in vals), np.float64, len(vals))


class AssociativeArray:
    """Immutable sparse array keyed by byte strings.

    Build instances with :meth:`from_triples` or :meth:`from_lists`; the
    constructor itself is internal.
    """

    __slots__ = ("_rows", "_cols", "_ri", "_ci", "_vals")

    def __init__(self, rows, cols, ri, ci, vals):
        self._rows: tuple[bytes, ...] = rows
        self._cols: tuple[bytes, ...] = cols
        self._ri: np.ndarray = ri
        self._ci: np.ndarray = ci
        self._vals: np.ndarray = vals
        for a in (ri, ci, vals):
            a.flags.writeable = False

    # -- construction -------------------------------------------------------

    @classmethod
    def empty(cls) -> AssociativeArray:
        z = np.zeros(0, dtype=np.int64)
        return cls((), (), z, z.copy(), np.zeros(0, dtype=np.float64))

    @classmethod
    def from_lists(cls, rows: Sequence[KeyLike], cols: Sequence[KeyLike], vals,
                   collide: CollisionRule = CollisionRule.SUM) -> AssociativeArray:
        """Parallel-sequence constructor; ``vals`` may be a scalar."""
        n = len(rows)
        if len(cols) != n:
            raise ValueError("rows and cols differ in length")
        if n == 0:
            return cls.empty()
        if isinstance(vals, (int, float, bytes, str, np.number)):
            v = as_value(vals)
            if v is None:
                return cls.empty()
            vals = np.full(n, v, dtype=np.float64) if isinstance(v, float) else [v] * n
        elif len(vals) != n:
            raise ValueError("vals differ in length from keys")
        varr = _values_array(vals)
        rows = [as_key(k) for k in rows]
        cols = [as_key(k) for k in cols]
        rkeys = sorted(set(rows))
        ckeys = sorted(set(cols))
        rpos = {k: i for i, k in enumerate(rkeys)}
        cpos = {k: i for i, k in enumerate(ckeys)}
        ri = np.fromiter((rpos[k] for k in rows), np.int64, n)
        ci = np.fromiter((cpos[k] for k in cols), np.int64, n)
        return cls._assemble(tuple(rkeys), tuple(ckeys), ri, ci, varr, collide)

    @classmethod
    def from_triples(cls, triples: Iterable, collide: CollisionRule = CollisionRule.SUM
                     ) -> AssociativeArray:
        triples = list(triples)
        if not triples:
            return cls.empty()
        rows, cols, vals = zip(*triples)
        return cls.from_lists(rows, cols, list(vals), collide)

    @classmethod
    def _assemble(cls, rows, cols, ri, ci, vals, collide=CollisionRule.SUM,
                  presorted=False) -> AssociativeArray:
        """Normalize raw COO data: resolve duplicates, drop absent values,
        drop phantom keys."""
        ri = np.asarray(ri, dtype=np.int64)
        ci = np.asarray(ci, dtype=np.int64)
        if not presorted and len(ri):
            lin = ri * max(len(cols), 1) + ci
            order = np.argsort(lin, kind="stable")
            lin = lin[order]
            ri, ci, vals = ri[order], ci[order], vals[order]
            starts = np.flatnonzero(np.r_[True, lin[1:] != lin[:-1]])
            if len(starts) < len(lin):
                ri, ci = ri[starts], ci[starts]
                vals = _collapse(vals, starts, collide)
        keep = _present(vals)
        if not keep.all():
            ri, ci, vals = ri[keep], ci[keep], vals[keep]
        vals = _maybe_numeric(vals)
        rows, ri = _compact(rows, ri)
        cols, ci = _compact(cols, ci)
        return cls(rows, cols, ri, ci, vals)

    # -- basic accessors ----------------------------------------------------

    @property
    def rows(self) -> tuple[bytes, ...]:
        return self._rows

    @property
    def cols(self) -> tuple[bytes, ...]:
        return self._cols

    @property
    def nnz(self) -> int:
        return len(self._vals)

    @property
    def shape(self) -> tuple[int, int]:
        return len(self._rows), len(self._cols)

    @property
    def is_numeric(self) -> bool:
        return _is_numeric(self._vals)

    @property
    def T(self) -> AssociativeArray:
        return transpose(self)

    def __len__(self):
        return self.nnz

    def __iter__(self) -> Iterator[Triple]:
        rows, cols = self._rows, self._cols
        for r, c, v in zip(self._ri.tolist(), self._ci.tolist(), self._vals.tolist()):
            yield Triple(rows[r], cols[c], v)

    def values(self) -> np.ndarray:
        """Entry values in (row, col) order (read-only view)."""
        return self._vals

    def get(self, row: KeyLike, col: KeyLike, default=None):
        row, col = as_key(row), as_key(col)
        r = bisect.bisect_left(self._rows, row)
        c = bisect.bisect_left(self._cols, col)
        if r == len(self._rows) or self._rows[r] != row:
            return default
        if c == len(self._cols) or self._cols[c] != col:
            return default
        lo, hi = np.searchsorted(self._ri, [r, r + 1])
        j = lo + np.searchsorted(self._ci[lo:hi], c)
        if j < hi and self._ci[j] == c:
            v = self._vals[j]
            return v if isinstance(v, bytes) else float(v)
        return default

    def __getitem__(self, key):
        if not isinstance(key, tuple) or len(key) != 2:
            raise TypeError("index with A[rowspec, colspec]")
        return select(self, key[0], key[1])

    def __eq__(self, other):
        if not isinstance(other, AssociativeArray):
            return NotImplemented
        if self._rows != other._rows or self._cols != other._cols:
            return False
        if not (np.array_equal(self._ri, other._ri) and np.array_equal(self._ci, other._ci)):
            return False
        if self.is_numeric != other.is_numeric:
            return False
        if self.is_numeric:
            return bool(np.array_equal(self._vals, other._vals))
        return all(type(a) is type(b) and a == b
                   for a, b in zip(self._vals.tolist(), other._vals.tolist()))

    __hash__ = None

    def __repr__(self):
        r, c = self.shape
        body = ", ".join(f"({t.row!r}, {t.col!r}): {t.val!r}" for _, t in zip(range(4), self))
        more = ", ..." if self.nnz > 4 else ""
        return f"AssociativeArray({r}x{c}, nnz={self.nnz}{', ' if body else ''}{body}{more})"

    # -- operators ----------------------------------------------------------

    def __add__(self, other):
        return combine(self, other, "add")

    def __sub__(self, other):
        return combine(self, other, "sub")

    def __and__(self, other):
        return combine(self, other, "min")

    def __or__(self, other):
        return combine(self, other, "max")

    def __matmul__(self, other):
        return multiply(self, other)

    # -- relabelling (used by masking) --------------------------------------

    def relabel(self, new_rows: Sequence[bytes], new_cols: Sequence[bytes]) -> AssociativeArray:
        """Rename every row/col key (parallel to :attr:`rows`/:attr:`cols`)
        and re-sort. Renamings must be injective."""
        if len(new_rows) != len(self._rows) or len(new_cols) != len(self._cols):
            raise ValueError("relabel needs one new key per existing key")
        rows, rperm = _sorted_with_inverse(new_rows)
        cols, cperm = _sorted_with_inverse(new_cols)
        ri = rperm[self._ri]
        ci = cperm[self._ci]
        order = np.lexsort((ci, ri))
        return AssociativeArray(rows, cols, ri[order], ci[order], self._vals[order])

    def with_values(self, vals) -> AssociativeArray:
        """Same sparsity pattern, new values (parallel to iteration order)."""
        if len(vals) != self.nnz:
            raise ValueError("one value per entry required")
        varr = vals if isinstance(vals, np.ndarray) and vals.dtype == object else _values_array(vals)
        return AssociativeArray._assemble(self._rows, self._cols, self._ri.copy(),
                                          self._ci.copy(), varr, presorted=True)

    def to_scipy(self) -> sp.csr_matrix:
        """Numeric CSR view over (rows x cols); strings count as 1."""
        return _csr(self._ri, self._ci, _as_float(self._vals), self.shape)


def _sorted_with_inverse(keys: Sequence[bytes]) -> tuple[tuple[bytes, ...], np.ndarray]:
    keys = list(keys)
    order = sorted(range(len(keys)), key=keys.__getitem__)
    out = tuple(keys[i] for i in order)
    if any(out[i] == out[i + 1] for i in range(len(out) - 1)):
        raise ValueError("relabelling is not injective")
    inv = np.empty(len(keys), dtype=np.int64)
    inv[np.asarray(order, dtype=np.int64)] = np.arange(len(keys))
    return out, inv


def _compact(keys: tuple[bytes, ...], idx: np.ndarray):
    if len(idx) == 0:
        return (), idx
    counts = np.bincount(idx, minlength=len(keys))
    used = np.flatnonzero(counts)
    if len(used) == len(keys):
        return tuple(keys), idx
    remap = np.full(len(keys), -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    return tuple(keys[i] for i in used.tolist()), remap[idx]


def _collapse(vals: np.ndarray, starts: np.ndarray, collide: CollisionRule) -> np.ndarray:
    ends = np.r_[starts[1:], len(vals)]
    if _is_numeric(vals):
        if collide is CollisionRule.LAST:
            return vals[ends - 1]
        return np.add.reduceat(vals, starts)
    out = np.empty(len(starts), dtype=object)
    for j, (s, e) in enumerate(zip(starts.tolist(), ends.tolist())):
        group = vals[s:e].tolist()
        if collide is CollisionRule.LAST or len(group) == 1:
            out[j] = group[-1]
            continue
        kinds = {isinstance(v, bytes) for v in group}
        if len(kinds) > 1:
            raise MixedTypeCollision("duplicate key pair mixes numeric and string values")
        out[j] = group[-1] if kinds == {True} else math.fsum(group)
    return out


def _csr(ri, ci, vals, shape) -> sp.csr_matrix:
    indptr = np.zeros(shape[0] + 1, dtype=np.int64)
    np.cumsum(np.bincount(ri, minlength=shape[0]), out=indptr[1:])
    return sp.csr_matrix((vals, ci, indptr), shape=shape)


# ---------------------------------------------------------------------------
# operations


def from_triples(triples: Iterable, collide: CollisionRule = CollisionRule.SUM) -> AssociativeArray:
    return AssociativeArray.from_triples(triples, collide)


def to_triples(A: AssociativeArray) -> list[Triple]:
    return list(A)


def transpose(A: AssociativeArray) -> AssociativeArray:
    order = np.lexsort((A._ri, A._ci))
    return AssociativeArray(A._cols, A._rows, A._ci[order], A._ri[order], A._vals[order])


def _selected(keys: tuple[bytes, ...], spec: KeySpec) -> np.ndarray | None:
    if isinstance(spec, All):
        return None
    mask = np.zeros(len(keys), dtype=bool)
    for lo, hi in spec.spans(keys):
        mask[lo:hi] = True
    return mask


def select(A: AssociativeArray, row_spec=ALL, col_spec=ALL) -> AssociativeArray:
    """Sub-array of entries whose row matches ``row_spec`` and column
    matches ``col_spec``."""
    rmask = _selected(A._rows, as_keyspec(row_spec))
    cmask = _selected(A._cols, as_keyspec(col_spec))
    if rmask is None and cmask is None:
        return A
    keep = np.ones(A.nnz, dtype=bool)
    if rmask is not None:
        keep &= rmask[A._ri]
    if cmask is not None:
        keep &= cmask[A._ci]
    rows, ri = _compact(A._rows, A._ri[keep])
    cols, ci = _compact(A._cols, A._ci[keep])
    return AssociativeArray(rows, cols, ri, ci, _maybe_numeric(A._vals[keep]))


_OPS = {"add", "sub", "min", "max"}


def _union_keys(a: tuple[bytes, ...], b: tuple[bytes, ...]):
    if a == b:
        ident = np.arange(len(a), dtype=np.int64)
        return a, ident, ident
    keys = tuple(sorted(set(a).union(b)))
    pos = {k: i for i, k in enumerate(keys)}
    return (keys,
            np.fromiter((pos[k] for k in a), np.int64, len(a)),
            np.fromiter((pos[k] for k in b), np.int64, len(b)))


def combine(A: AssociativeArray, B: AssociativeArray, op: str) -> AssociativeArray:
    """Elementwise ``add``/``sub`` (union), ``min`` (intersection, D4M ``&``)
    or ``max`` (union, D4M ``|``)."""
    op = op.lower()
    if op not in _OPS:
        raise ValueError(f"unknown op {op!r}; expected one of {sorted(_OPS)}")
    rows, ra, rb = _union_keys(A._rows, B._rows)
    cols, ca, cb = _union_keys(A._cols, B._cols)
    ncols = max(len(cols), 1)
    la = ra[A._ri] * ncols + ca[A._ci]
    lb = rb[B._ri] * ncols + cb[B._ci]
    if A.is_numeric and B.is_numeric:
        lin, vals = _combine_numeric(la, A._vals, lb, B._vals, op)
    else:
        lin, vals = _combine_objects(la, A._vals, lb, B._vals, op)
    return AssociativeArray._assemble(rows, cols, lin // ncols, lin % ncols, vals, presorted=True)


def _combine_numeric(la, va, lb, vb, op):
    if op == "min":
        lin, ia, ib = np.intersect1d(la, lb, assume_unique=True, return_indices=True)
        return lin, np.minimum(va[ia], vb[ib])
    lin = np.union1d(la, lb)
    a = np.zeros(len(lin))
    b = np.zeros(len(lin))
    ina = np.zeros(len(lin), dtype=bool)
    inb = np.zeros(len(lin), dtype=bool)
    pa = np.searchsorted(lin, la)
    pb = np.searchsorted(lin, lb)
    a[pa], ina[pa] = va, True
    b[pb], inb[pb] = vb, True
    if op == "add":
        return lin, a + b
    if op == "sub":
        return lin, a - b
    both = ina & inb
    out = np.where(ina, a, b)
    out[both] = np.maximum(a[both], b[both])
    return lin, out


def _combine_objects(la, va, lb, vb, op):
    da = dict(zip(la.tolist(), va.tolist()))
    db = dict(zip(lb.tolist(), vb.tolist()))
    if op == "sub" and any(isinstance(v, bytes) for v in db.values()):
        raise TypeMismatch("cannot subtract string values")
    keys = sorted(da.keys() & db.keys()) if op == "min" else sorted(da.keys() | db.keys())
    out = np.empty(len(keys), dtype=object)
    for j, k in enumerate(keys):
        a, b = da.get(k), db.get(k)
        if a is None or b is None:
            out[j] = a if b is None else (-b if op == "sub" else b)
            continue
        if isinstance(a, bytes) != isinstance(b, bytes):
            raise TypeMismatch("cannot combine numeric and string values")
        if isinstance(a, bytes):
            if op in ("add", "sub"):
                raise TypeMismatch(f"{op} is undefined for string values")
            out[j] = min(a, b) if op == "min" else max(a, b)
        elif op == "add":
            out[j] = a + b
        elif op == "sub":
            out[j] = a - b
        else:
            out[j] = min(a, b) if op == "min" else max(a, b)
    return np.asarray(keys, dtype=np.int64), out


def multiply(A: AssociativeArray, B: AssociativeArray, threads: int = 1) -> AssociativeArray:
    """Sparse (+, x) product contracting A's column keys against B's row
    keys by name. String values count as 1.

    ``threads > 1`` splits A's rows across a thread pool; each output row is
    computed identically either way, so results are bit-exact.
    """
    if A.nnz == 0 or B.nnz == 0:
        return AssociativeArray.empty()
    a_ri, a_vals = A._ri, _as_float(A._vals)
    if A._cols is B._rows or A._cols == B._rows:
        a_ci = A._ci
    else:
        pos = {k: i for i, k in enumerate(B._rows)}
        remap = np.fromiter((pos.get(k, -1) for k in A._cols), np.int64, len(A._cols))
        a_ci = remap[A._ci]
        keep = a_ci >= 0
        if not keep.any():
            return AssociativeArray.empty()
        a_ri, a_ci, a_vals = a_ri[keep], a_ci[keep], a_vals[keep]
    k = len(B._rows)
    am = _csr(a_ri, a_ci, a_vals, (len(A._rows), k))
    bm = _csr(B._ri, B._ci, _as_float(B._vals), (k, len(B._cols)))
    if threads > 1 and am.shape[0] > 1:
        bounds = np.linspace(0, am.shape[0], min(threads, am.shape[0]) + 1).astype(int)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda se: am[se[0]:se[1]] @ bm, zip(bounds[:-1], bounds[1:])))
        cm = sp.vstack(parts, format="csr")
    else:
        cm = am @ bm
    cm.sort_indices()
    cm.eliminate_zeros()
    ri = np.repeat(np.arange(cm.shape[0], dtype=np.int64), np.diff(cm.indptr))
    ci = cm.indices.astype(np.int64)
    rows, ri = _compact(A._rows, ri)
    cols, ci = _compact(B._cols, ci)
    return AssociativeArray(rows, cols, ri, ci, cm.data.astype(np.float64, copy=True))


def threshold(A: AssociativeArray, cut: float) -> AssociativeArray:
    """Keep entries strictly greater than ``cut``."""
    if not A.is_numeric:
        raise TypeMismatch("threshold requires numeric values")
    keep = A._vals > cut
    rows, ri = _compact(A._rows, A._ri[keep])
    cols, ci = _compact(A._cols, A._ci[keep])
    return AssociativeArray(rows, cols, ri, ci, A._vals[keep])
