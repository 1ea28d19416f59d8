"""Benchmark harness: masked vs plain DNA matching and table insert/query.

Every (workload, size) is preceded by a correctness gate comparing the
unmasked masked result with the plain result; a mismatch raises
:class:`CorrectnessFailure` and no timings are reported for it. Each phase
is timed as the median of ``reps`` runs after one discarded warm-up.
"""
from __future__ import annotations

import csv
import io
import shutil
import statistics
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from .analytics import DEFAULT_K, _masked_match, dna_match, kmerize, synthetic_corpus
from .assoc import ALL, AssociativeArray, Exact, transpose
from .crypto.keys import derive_keys
from .crypto.mask import (MaskPolicy, mask_array, masked_transpose, str_mask,
                          unmask_array)
from .errors import CorrectnessFailure
from .schema import DenseTable, ExplodeConfig, explode
from .store import open_table

CSV_HEADER = ("workload", "size", "phase", "seconds", "reps")
DNA_SIZES = (1_000, 10_000, 100_000)
TWEET_SIZES = (10_000, 20_000, 50_000)
DEFAULT_POLICY = MaskPolicy()  # DET rows, DET cols, CLEAR values

# tweet corpus shape
WORDS_PER_TWEET = 6
VOCABULARY = 20_000
USERS = 2_000
ZIPF_EXPONENT = 1.1
PROBE_WORDS = 20
PROBE_TWEETS = 25  # per probe word, independent of corpus size


@dataclass(frozen=True)
class BenchRecord:
    workload: str
    size: int
    phase: str
    seconds: float
    reps: int

    def row(self) -> tuple:
        return (self.workload, self.size, self.phase, f"{self.seconds:.6f}", self.reps)


@dataclass
class RunConfig:
    seed: int = 0
    sizes: tuple[int, ...] = ()
    k: int = DEFAULT_K
    cut: float = 0.0
    policy: MaskPolicy = DEFAULT_POLICY
    password: str = "cmd-bench"
    store_dir: Path | None = None
    threads: int = 1
    reps: int = 5
    salt: bytes = field(default=b"\0" * 16)

    def __post_init__(self):
        self.sizes = tuple(int(s) for s in self.sizes)
        if any(b <= a for a, b in zip(self.sizes, self.sizes[1:])):
            raise ValueError("sizes must be strictly increasing")
        if any(s <= 0 for s in self.sizes):
            raise ValueError("sizes must be positive")
        if self.reps < 5:
            raise ValueError("at least 5 repetitions are required")


def time_median(fn: Callable[[], object], reps: int,
                after: Callable[[object], object] | None = None) -> float:
    """Median wall time of ``fn`` over ``reps`` runs after one warm-up.
    ``after`` (untimed) receives each result, e.g. to clean up."""
    samples = []
    for i in range(reps + 1):
        t0 = time.perf_counter()
        result = fn()
        elapsed = time.perf_counter() - t0
        if i:
            samples.append(elapsed)
        if after is not None:
            after(result)
    return statistics.median(samples)


def write_csv(records: Iterable[BenchRecord], fp=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in records:
        w.writerow(r.row())
    if fp is not None:
        fp.write(buf.getvalue())
    return buf.getvalue()


# ---------------------------------------------------------------------------
# DNA


def bench_dna(cfg: RunConfig) -> list[BenchRecord]:
    ks = derive_keys(cfg.password, cfg.salt)
    out = []
    for size in cfg.sizes or DNA_SIZES:
        A = kmerize(synthetic_corpus(size, cfg.seed, cfg.k), cfg.k)
        M = mask_array(A, cfg.policy, ks)
        Xm = _masked_match(M, cfg.cut, cfg.threads)
        if unmask_array(Xm, ks) != dna_match(A, cfg.cut, cfg.threads).X:
            raise CorrectnessFailure(f"masked DNA match differs from plain at size {size}")
        phases = {
            "mask": lambda: mask_array(A, cfg.policy, ks),
            "compute_masked": lambda: _masked_match(M, cfg.cut, cfg.threads),
            "compute_plain": lambda: dna_match(A, cfg.cut, cfg.threads),
            "unmask": lambda: unmask_array(Xm, ks),
        }
        for phase, fn in phases.items():
            out.append(BenchRecord("dna", size, phase, time_median(fn, cfg.reps), cfg.reps))
    return out


# ---------------------------------------------------------------------------
# tweets


def _pseudo_words(rng: np.random.Generator, n: int) -> list[bytes]:
    letters = np.frombuffer(b"abcdefghijklmnopqrstuvwxyz", dtype=np.uint8)
    words: set[bytes] = set()
    while len(words) < n:
        length = int(rng.integers(3, 10))
        words.add(letters[rng.integers(0, 26, length)].tobytes())
    return sorted(words)


def probe_words() -> list[bytes]:
    return [b"probe%02d" % i for i in range(PROBE_WORDS)]


def synthetic_tweets(n: int, seed: int = 0) -> DenseTable:
    """``n`` tweets with ``user`` and space-separated ``word`` columns.

    Words follow a Zipf law over a fixed vocabulary. Each probe word is
    planted in exactly ``PROBE_TWEETS`` tweets, so probe queries return the
    same amount of data at every corpus size.
    """
    rng = np.random.default_rng(seed)
    vocab = _pseudo_words(rng, VOCABULARY)
    users = [b"u%05d" % i for i in range(USERS)]
    ranks = np.arange(1, VOCABULARY + 1, dtype=float) ** -ZIPF_EXPONENT
    draws = rng.choice(VOCABULARY, size=(n, WORDS_PER_TWEET), p=ranks / ranks.sum())
    who = rng.integers(0, USERS, n)
    planted: dict[int, list[bytes]] = {}
    for w in probe_words():
        for i in rng.choice(n, size=min(PROBE_TWEETS, n), replace=False):
            planted.setdefault(int(i), []).append(w)
    rows = []
    for i in range(n):
        words = [vocab[j] for j in draws[i]] + planted.get(i, [])
        rows.append((b"t%09d" % i, (users[who[i]], b" ".join(words))))
    return DenseTable((b"user", b"word"), tuple(rows))


TWEET_EXPLODE = ExplodeConfig(split_columns=frozenset({b"word"}))


def explode_tweets(t: DenseTable) -> AssociativeArray:
    return explode(t, TWEET_EXPLODE)


class _Stores:
    """Fresh (main, transpose) table pairs under one scratch directory."""

    def __init__(self, root: Path):
        self.root = root
        self.n = 0

    def fresh(self, tag: str):
        self.n += 1
        d = self.root / f"{tag}{self.n}"
        return open_table(d, "Tmain", create=True), open_table(d, "Ttrans", create=True)

    def drop(self, *tables):
        for T in tables:
            T.close()
        shutil.rmtree(tables[0].directory, ignore_errors=True)


def insert_plain(stores: _Stores, A: AssociativeArray):
    T, TT = stores.fresh("p")
    T.put(A)
    TT.put(transpose(A))
    return T, TT


def insert_masked(stores: _Stores, A: AssociativeArray, policy, ks):
    T, TT = stores.fresh("m")
    M = mask_array(A, policy, ks)
    T.put(M)
    TT.put(masked_transpose(M))
    return T, TT


def query_plain(TT, words: list[bytes]) -> list[AssociativeArray]:
    return [transpose(TT.query(Exact([b"word|" + w]), ALL)) for w in words]


def query_masked(TT, words: list[bytes], ks) -> list[AssociativeArray]:
    scheme = TT.meta[1].cols
    out = []
    for w in words:
        key = str_mask(b"word|" + w, ks, scheme)
        M = TT.query_masked(Exact([key]), ALL)
        out.append(unmask_array(masked_transpose(M), ks))
    return out


def bench_tweets(cfg: RunConfig) -> list[BenchRecord]:
    ks = derive_keys(cfg.password, cfg.salt)
    probes = probe_words()
    root = Path(tempfile.mkdtemp(prefix="cmdbench-", dir=cfg.store_dir))
    stores = _Stores(root)
    out = []
    try:
        for size in cfg.sizes or TWEET_SIZES:
            A = explode_tweets(synthetic_tweets(size, cfg.seed))
            Tp = insert_plain(stores, A)
            Tm = insert_masked(stores, A, cfg.policy, ks)
            if query_plain(Tp[1], probes) != query_masked(Tm[1], probes, ks):
                raise CorrectnessFailure(f"masked tweet query differs from plain at size {size}")

            def timed_insert(fn):
                return time_median(fn, cfg.reps, after=lambda t: stores.drop(*t))

            recs = {
                "insert_masked": timed_insert(lambda: insert_masked(stores, A, cfg.policy, ks)),
                "insert_plain": timed_insert(lambda: insert_plain(stores, A)),
                "query_masked": time_median(lambda: query_masked(Tm[1], probes, ks), cfg.reps),
                "query_plain": time_median(lambda: query_plain(Tp[1], probes), cfg.reps),
            }
            stores.drop(*Tp)
            stores.drop(*Tm)
            out.extend(BenchRecord("tweets", size, p, s, cfg.reps) for p, s in recs.items())
    finally:
        shutil.rmtree(root, ignore_errors=True)
    return out


def ratio(records: list[BenchRecord], size: int, num: str, den: str) -> float:
    by = {(r.size, r.phase): r.seconds for r in records}
    return by[(size, num)] / by[(size, den)]
