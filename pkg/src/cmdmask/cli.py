"""Command-line interface.

Exit status: 0 on success, 1 on usage errors, 2 on data or crypto errors.
Data goes to stdout or ``--out``; diagnostics go to stderr. Input files
named ``-`` are read from stdin.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import analytics, bench, schema, tripleio
from .assoc import ALL, AssociativeArray, Exact, Prefix, Range, multiply, transpose
from .crypto.keys import derive_keys, new_salt
from .crypto.mask import (MaskedArray, MaskPolicy, Scheme, dumps_masked, is_masked_file,
                          loads_masked, mask_array, mask_spec, masked_multiply,
                          masked_transpose, str_mask, unmask_array)
from .errors import CMDError
from .store import open_table

log = logging.getLogger("cmdmask")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------------------
# helpers


def _read(path: str) -> bytes:
    if path == "-":
        return sys.stdin.buffer.read()
    try:
        return Path(path).read_bytes()
    except FileNotFoundError:
        raise UsageError(f"no such file: {path}") from None


def _emit(args, data: bytes) -> None:
    if args.out:
        tmp = f"{args.out}.tmp"
        with open(tmp, "wb") as f:
            f.write(data)
        os.replace(tmp, args.out)
    else:
        sys.stdout.buffer.write(data)
        sys.stdout.buffer.flush()


def _load_any(data: bytes) -> AssociativeArray | MaskedArray:
    return loads_masked(data) if is_masked_file(data) else tripleio.loads(data)


def _dump_any(A) -> bytes:
    return dumps_masked(A) if isinstance(A, MaskedArray) else tripleio.dumps(A)


def _policy(args) -> MaskPolicy:
    if not args.policy:
        raise UsageError("--policy is required (a policy file or R,C,V)")
    p = Path(args.policy)
    if p.is_file():
        return MaskPolicy.parse(p.read_text())
    if args.policy.count(",") == 2:
        return MaskPolicy.from_compact(args.policy)
    raise UsageError(f"--policy {args.policy!r} is neither a file nor R,C,V")


def _password(args) -> str:
    if not args.password:
        raise UsageError("--password is required")
    return args.password


def _salt(args) -> bytes:
    if not getattr(args, "salt", None):
        return new_salt()
    try:
        salt = bytes.fromhex(args.salt)
    except ValueError:
        raise UsageError("--salt must be hex") from None
    if len(salt) != 16:
        raise UsageError("--salt must be 16 bytes (32 hex digits)")
    return salt


def _keyspec(keys, prefix, rng):
    given = [x for x in (keys, prefix, rng) if x]
    if len(given) > 1:
        raise UsageError("give at most one of a key list, a prefix or a range per dimension")
    if keys:
        return Exact([k.encode() for k in keys])
    if prefix:
        return Prefix(prefix.encode())
    if rng:
        lo, sep, hi = rng.partition(",")
        if not sep:
            raise UsageError("ranges are written LO,HI")
        return Range(lo.encode(), hi.encode())
    return ALL


def _sizes(text: str | None) -> tuple[int, ...]:
    if not text:
        return ()
    try:
        return tuple(int(float(s)) for s in text.split(","))
    except ValueError:
        raise UsageError(f"bad --sizes {text!r}") from None


# ---------------------------------------------------------------------------
# subcommands


def cmd_explode(args):
    t = schema.parse_dense(_read(args.input), has_header=not args.no_header)
    split = frozenset(c.encode() for c in args.split_columns.split(",")) if args.split_columns else frozenset()
    cfg = schema.ExplodeConfig(args.delimiter.encode(), split)
    _emit(args, tripleio.dumps(schema.explode(t, cfg)))


def cmd_mask(args):
    policy, password, salt = _policy(args), _password(args), _salt(args)
    A = tripleio.loads(_read(args.input))
    _emit(args, dumps_masked(mask_array(A, policy, derive_keys(password, salt))))


def cmd_unmask(args):
    password = _password(args)
    M = loads_masked(_read(args.input))
    _emit(args, tripleio.dumps(unmask_array(M, derive_keys(password, M.salt))))


def cmd_multiply(args):
    A, B = _load_any(_read(args.a)), _load_any(_read(args.b))
    if isinstance(A, MaskedArray) != isinstance(B, MaskedArray):
        raise UsageError("multiply needs two plain or two masked arrays")
    if isinstance(A, MaskedArray):
        if args.transpose_b:
            B = masked_transpose(B)
        C = masked_multiply(A, B, args.threads)
    else:
        C = multiply(A, transpose(B) if args.transpose_b else B, args.threads)
    _emit(args, _dump_any(C))


def cmd_dnamatch(args):
    seqs = analytics.parse_fasta(_read(args.input))
    if args.masked:
        policy, password, salt = _policy(args), _password(args), _salt(args)
        ks = derive_keys(password, salt)
        A = analytics.kmerize(seqs, args.k)
        M = mask_array(A, policy, ks)
        _emit(args, dumps_masked(analytics._masked_match(M, args.cut, args.threads)))
    else:
        A = analytics.kmerize(seqs, args.k)
        _emit(args, tripleio.dumps(analytics.dna_match(A, args.cut, args.threads).X))


def cmd_loggraph(args):
    E = tripleio.loads(_read(args.input))
    if args.masked:
        policy, password, salt = _policy(args), _password(args), _salt(args)
        ks = derive_keys(password, salt)
        M = mask_array(E, policy, ks)
        ca = analytics.masked_columns(E, args.prefix_a.encode(), ks, policy.cols)
        cb = analytics.masked_columns(E, args.prefix_b.encode(), ks, policy.cols)
        _emit(args, dumps_masked(analytics.masked_log_graph(M, ca, cb)))
    else:
        _emit(args, tripleio.dumps(analytics.log_graph(E, args.prefix_a.encode(),
                                                       args.prefix_b.encode())))


def _table(args, writable):
    if not args.store or not args.table:
        raise UsageError("--store and --table are required")
    return open_table(args.store, args.table, create=writable, writable=writable,
                      recover=getattr(args, "recover", False))


def cmd_put(args):
    A = _load_any(_read(args.input))
    with _table(args, True) as T:
        n = T.put(A)
    print(n, file=sys.stderr)


def cmd_query(args):
    rspec = _keyspec(args.row, args.row_prefix, args.row_range)
    cspec = _keyspec(args.col, args.col_prefix, args.col_range)
    with _table(args, False) as T:
        meta = T.meta
        if meta is None:
            _emit(args, tripleio.dumps(T.query(rspec, cspec)))
        elif args.password:
            # plaintext selectors: mask them, query, unmask the result
            salt, policy = meta
            ks = derive_keys(args.password, salt)
            M = T.query_masked(mask_spec(rspec, ks, policy.rows), mask_spec(cspec, ks, policy.cols))
            _emit(args, tripleio.dumps(unmask_array(M, ks)))
        else:
            _emit(args, dumps_masked(T.query_masked(rspec, cspec)))


def cmd_scan(args):
    with _table(args, False) as T:
        meta = T.meta
        A = T.scan()
        _emit(args, tripleio.dumps(A) if meta is None else dumps_masked(MaskedArray(A, meta[1], meta[0])))


def cmd_compact(args):
    with _table(args, True) as T:
        T.compact()


def cmd_strmask(args):
    password = _password(args)
    if args.store and args.table:
        with _table(args, False) as T:
            if T.meta is None:
                raise UsageError("table is not masked")
            salt = T.meta[0]
    elif args.salt:
        salt = _salt(args)
    else:
        raise UsageError("strmask needs --salt or --store/--table to find the salt")
    key = str_mask(args.word.encode(), derive_keys(password, salt), Scheme(args.scheme))
    _emit(args, key + b"\n")


def cmd_bench(args):
    try:
        cfg = _run_config(args)
    except ValueError as e:
        raise UsageError(f"bench: {e}") from None
    records = []
    if args.workload in ("dna", "all"):
        records += bench.bench_dna(cfg)
    if args.workload in ("tweets", "all"):
        records += bench.bench_tweets(cfg)
    _emit(args, bench.write_csv(records).encode())


def _run_config(args) -> bench.RunConfig:
    return bench.RunConfig(
        seed=args.seed, sizes=_sizes(args.sizes), k=args.k, cut=args.cut,
        policy=_policy(args) if args.policy else bench.DEFAULT_POLICY,
        password=args.password or "cmd-bench", store_dir=args.store, threads=args.threads,
        reps=args.reps)


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cmdmask", description="Compute on masked associative arrays.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def cmd(name, fn, help, *, out=True, pw=False, policy=False, salt=False, store=False):
        s = sub.add_parser(name, help=help, description=help)
        s.set_defaults(fn=fn)
        if out:
            s.add_argument("--out", help="output file (default: stdout)")
        if pw:
            s.add_argument("--password")
        if policy:
            s.add_argument("--policy", help="policy file (rows=/cols=/values=) or R,C,V")
        if salt:
            s.add_argument("--salt", help="16-byte salt as hex (default: random)")
        if store:
            s.add_argument("--store", help="store directory")
            s.add_argument("--table", help="table name")
        return s

    s = cmd("explode", cmd_explode, "dense CSV (first field = id) to exploded triples")
    s.add_argument("input")
    s.add_argument("--delimiter", default="|")
    s.add_argument("--split-columns", help="comma-separated columns holding space-separated values")
    s.add_argument("--no-header", action="store_true")

    s = cmd("mask", cmd_mask, "mask a triple file", pw=True, policy=True, salt=True)
    s.add_argument("input")

    s = cmd("unmask", cmd_unmask, "unmask a masked triple file", pw=True)
    s.add_argument("input")

    s = cmd("multiply", cmd_multiply, "A @ B on plain or masked triple files")
    s.add_argument("a")
    s.add_argument("b")
    s.add_argument("--transpose-b", action="store_true", help="compute A @ B'")
    s.add_argument("--threads", type=int, default=1)

    s = cmd("dnamatch", cmd_dnamatch, "k-mer match matrix of a FASTA file",
            pw=True, policy=True, salt=True)
    s.add_argument("input")
    mode = s.add_mutually_exclusive_group(required=True)
    mode.add_argument("--plain", action="store_true")
    mode.add_argument("--masked", action="store_true")
    s.add_argument("--k", type=int, default=analytics.DEFAULT_K)
    s.add_argument("--cut", type=float, default=0.0)
    s.add_argument("--threads", type=int, default=1)

    s = cmd("loggraph", cmd_loggraph, "co-occurrence graph of two column families",
            pw=True, policy=True, salt=True)
    s.add_argument("input")
    s.add_argument("--prefix-a", required=True)
    s.add_argument("--prefix-b", required=True)
    s.add_argument("--masked", action="store_true")

    s = cmd("put", cmd_put, "append a (masked) triple file to a table", out=False, store=True)
    s.add_argument("input")

    s = cmd("query", cmd_query, "select from a table", pw=True, store=True)
    for dim in ("row", "col"):
        s.add_argument(f"--{dim}", action="append", help="exact key (repeatable)")
        s.add_argument(f"--{dim}-prefix")
        s.add_argument(f"--{dim}-range", help="inclusive LO,HI")

    s = cmd("scan", cmd_scan, "dump a whole table", store=True)
    s = cmd("compact", cmd_compact, "rewrite a table without superseded records",
            out=False, store=True)
    s.add_argument("--recover", action="store_true", help="truncate a damaged log first")

    s = cmd("strmask", cmd_strmask, "mask one query key", pw=True, salt=True, store=True)
    s.add_argument("word")
    s.add_argument("--scheme", default="DET", choices=["DET", "OPE"])

    s = cmd("bench", cmd_bench, "timing benchmarks (CSV)", pw=True, policy=True)
    s.add_argument("workload", choices=["dna", "tweets", "all"])
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--sizes", help="comma-separated, increasing")
    s.add_argument("--k", type=int, default=analytics.DEFAULT_K)
    s.add_argument("--cut", type=float, default=0.0)
    s.add_argument("--threads", type=int, default=1)
    s.add_argument("--reps", type=int, default=5)
    s.add_argument("--store", help="scratch directory for benchmark tables")
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s: %(message)s")
        args.fn(args)
    except UsageError as e:
        print(e, file=sys.stderr)
        return 1
    except SystemExit as e:  # --help
        return 0 if not e.code else 1
    except (CMDError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
