"""DNA k-mer matching and network-log graphs, on plain or masked arrays."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .assoc import ALL, AssociativeArray, Exact, Prefix, as_key, multiply, select, threshold, transpose
from .crypto.keys import MaskKeySet
from .crypto.mask import (MaskedArray, MaskPolicy, Scheme, mask_array, mask_keys, masked_multiply,
                          masked_select, masked_threshold, masked_transpose, unmask_array)
from .errors import EmptyProjection, PolicyMismatch, SequenceTooShort

DEFAULT_K = 10
BASES = b"ACGT"


@dataclass(frozen=True)
class SequenceRecord:
    id: bytes
    bases: bytes

    def __post_init__(self):
        object.__setattr__(self, "id", as_key(self.id))
        b = self.bases.encode("ascii") if isinstance(self.bases, str) else bytes(self.bases)
        object.__setattr__(self, "bases", b.upper())


@dataclass(frozen=True)
class MatchResult:
    X: AssociativeArray
    cut: float


class MaskedMatch(NamedTuple):
    masked: MaskedArray
    plain: MatchResult
    timings: dict


# ---------------------------------------------------------------------------
# FASTA


def parse_fasta(data: bytes) -> list[SequenceRecord]:
    records, ident, chunks = [], None, []
    for line in data.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith(b">"):
            if ident is not None:
                records.append(SequenceRecord(ident, b"".join(chunks)))
            fields = line[1:].split()
            if not fields:
                raise ValueError("FASTA header without an id")
            ident, chunks = fields[0], []
        elif ident is None:
            raise ValueError("sequence data before the first FASTA header")
        else:
            chunks.append(line)
    if ident is not None:
        records.append(SequenceRecord(ident, b"".join(chunks)))
    return records


def format_fasta(seqs: Sequence[SequenceRecord], width: int = 60) -> bytes:
    out = []
    for s in seqs:
        out.append(b">" + s.id)
        out.extend(s.bases[i:i + width] for i in range(0, len(s.bases), width))
    return b"\n".join(out) + b"\n" if out else b""


# ---------------------------------------------------------------------------
# DNA matching


def kmerize(seqs: Sequence[SequenceRecord], k: int = DEFAULT_K) -> AssociativeArray:
    """Sequence-id x k-mer presence array (each distinct k-mer counted once)."""
    if k < 1:
        raise ValueError("k must be positive")
    rows, cols, seen = [], [], set()
    for s in seqs:
        if s.id in seen:
            raise ValueError(f"duplicate sequence id {s.id!r}")
        seen.add(s.id)
        if len(s.bases) < k:
            raise SequenceTooShort(f"sequence {s.id!r} is shorter than k={k}")
        kmers = {s.bases[i:i + k] for i in range(len(s.bases) - k + 1)}
        rows.extend([s.id] * len(kmers))
        cols.extend(kmers)
    return AssociativeArray.from_lists(rows, cols, 1.0)


def dna_match(A: AssociativeArray, cut: float = 0.0, threads: int = 1) -> MatchResult:
    """Count shared k-mers between every pair of sequences, keeping counts
    above ``cut``."""
    return MatchResult(threshold(multiply(A, transpose(A), threads), cut), cut)


def _masked_match(M: MaskedArray, cut: float, threads: int) -> MaskedArray:
    return masked_threshold(masked_multiply(M, masked_transpose(M), threads), cut)


def masked_dna_match(seqs: Sequence[SequenceRecord], k: int, cut: float, policy: MaskPolicy,
                     keys: MaskKeySet, threads: int = 1) -> MaskedMatch:
    """Run the match on masked and plain data side by side.

    ``timings`` holds seconds for ``mask``, ``compute_masked``,
    ``compute_plain`` and ``unmask``.
    """
    if policy.values is not Scheme.CLEAR:
        raise PolicyMismatch("match counts must stay CLEAR to be summed and thresholded")
    A = kmerize(seqs, k)
    t = {}
    t0 = time.perf_counter()
    M = mask_array(A, policy, keys)
    t["mask"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    Xm = _masked_match(M, cut, threads)
    t["compute_masked"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    plain = dna_match(A, cut, threads)
    t["compute_plain"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    unmask_array(Xm, keys)
    t["unmask"] = time.perf_counter() - t0
    return MaskedMatch(Xm, plain, t)


# ---------------------------------------------------------------------------
# network-log graphs


def _projection(E: AssociativeArray, spec) -> AssociativeArray:
    P = select(E, ALL, spec)
    if P.nnz == 0:
        raise EmptyProjection(f"no columns match {spec!r}")
    return P


def log_graph(E: AssociativeArray, prefix_a, prefix_b) -> AssociativeArray:
    """Co-occurrence graph between two exploded column families, e.g.
    ``src_ip|`` x ``srv_ip|``: entry (a, b) counts records holding both."""
    Pa = _projection(E, Prefix(prefix_a))
    Pb = _projection(E, Prefix(prefix_b))
    return multiply(transpose(Pa), Pb)


def masked_columns(E: AssociativeArray, prefix, keys: MaskKeySet,
                   scheme: Scheme = Scheme.DET) -> Exact:
    """Expand a column prefix on the plaintext side and mask every matching
    column, giving an exact selector that works on the masked array."""
    cols = select(E, ALL, Prefix(prefix)).cols
    if not cols:
        raise EmptyProjection(f"no columns start with {prefix!r}")
    return Exact(mask_keys(list(cols), keys, scheme))


def masked_log_graph(M: MaskedArray, cols_a: Exact, cols_b: Exact) -> MaskedArray:
    if M.policy.values is not Scheme.CLEAR:
        raise PolicyMismatch("log graph counts need CLEAR values")
    Pa = masked_select(M, ALL, cols_a)
    Pb = masked_select(M, ALL, cols_b)
    if Pa.nnz == 0 or Pb.nnz == 0:
        raise EmptyProjection("masked column selection is empty")
    return masked_multiply(masked_transpose(Pa), Pb)


# ---------------------------------------------------------------------------
# corpora


def synthetic_corpus(nnz: int, seed: int = 0, k: int = DEFAULT_K, length: int = 60,
                     mutation_rate: float = 0.02) -> list[SequenceRecord]:
    """Seeded sequences grouped into families of point-mutated copies.

    Family size grows like sqrt(#sequences), so shared k-mers (and the match
    work) grow faster than the corpus, as in real collections of related
    sequences. ``nnz`` is the approximate number of (sequence, k-mer) entries.
    """
    rng = np.random.default_rng(seed)
    per_seq = length - k + 1
    n = max(2, round(nnz / per_seq))
    fam_size = max(2, round(math.sqrt(n) / 2))
    seqs = []
    lut = np.frombuffer(BASES, dtype=np.uint8)
    i = 0
    while i < n:
        ancestor = rng.integers(0, 4, length)
        for _ in range(min(fam_size, n - i)):
            s = ancestor.copy()
            hit = rng.random(length) < mutation_rate
            s[hit] = rng.integers(0, 4, int(hit.sum()))
            seqs.append(SequenceRecord(b"SYN%06d.1:F%05d" % (i, i // fam_size), lut[s].tobytes()))
            i += 1
    return seqs


# Ids of the eight sequences in the published match matrix, in its order.
REFERENCE_IDS = (
    b"JN005713.1:AEN70400.1",
    b"JN005718.1:AEN70406.1",
    b"JN005718.1:AEN70407.1",
    b"JN033200.1:AEK64751.1",
    b"JN851865.1:AFN02593.1",
    b"JN851865.1:AFN02596.1",
    b"JN851865.1:AFN02601.1",
    b"JN851865.1:AFN02604.1",
)


def reference_corpus() -> list[SequenceRecord]:
    """Eight sequences whose 10-mer match matrix at cut=0 has the published
    block shape: a 3x3 unit block, a self-match of 2 with one partner, and a
    matching pair of singletons."""
    p, q, r, s = b"ACGTACGTAA", b"CCCCCGGGGG", b"TTGACCATGCA", b"GATTACAGAT"
    bases = (p, q, r, p, s, s, s, r[1:])
    return [SequenceRecord(i, b) for i, b in zip(REFERENCE_IDS, bases)]
