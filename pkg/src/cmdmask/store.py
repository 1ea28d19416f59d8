"""Embedded sorted triple table with an append-only, checksummed log.

On-disk layout of ``<name>.cmdt``::

    b"CMDT" version:u8
    record*  where record = varint(len(body)) body crc32c(body):u32be
                   body   = seq:u64be varint(len) row varint(len) col varint(len) value

Values use the tagged encoding of the triple text format (``n:``/``s:``).
``<name>.meta`` (present only for masked tables) holds ``salt=`` and
``policy=`` lines. Duplicate (row, col) cells resolve to the highest
sequence number, like a versioning iterator that keeps one version.

The whole table is indexed in memory in both row-major and column-major
order, so exact-key queries on either dimension cost O(log n + result).
"""
from __future__ import annotations

import fcntl
import logging
import os
import re
import struct
import threading
from dataclasses import dataclass
from pathlib import Path

from crc32c import crc32c

from .assoc import (All, AssociativeArray, CollisionRule, KeySpec, as_keyspec)
from .crypto.mask import MaskedArray, MaskPolicy
from .errors import Corrupt, IoFailure, NotFound, SchemeMismatch, TableLocked
from .tripleio import decode_value, encode_value

log = logging.getLogger(__name__)

MAGIC = b"CMDT"
VERSION = 1
HEADER = MAGIC + bytes((VERSION,))
_U64 = struct.Struct(">Q")
_U32 = struct.Struct(">I")
_UNREAD = object()
_NAME_RE = re.compile(r"^[A-Za-z0-9_.-]+$")


def _varint(n: int) -> bytes:
    if n < 0x80:
        return bytes((n,))
    out = bytearray()
    while n >= 0x80:
        out.append((n & 0x7F) | 0x80)
        n >>= 7
    out.append(n)
    return bytes(out)


def _read_varint(buf: bytes, pos: int) -> tuple[int, int]:
    shift = result = 0
    while True:
        if pos >= len(buf):
            raise IndexError("truncated varint")
        b = buf[pos]
        pos += 1
        result |= (b & 0x7F) << shift
        if b < 0x80:
            return result, pos
        shift += 7
        if shift > 63:
            raise ValueError("varint too long")


def encode_record(seq: int, row: bytes, col: bytes, value: bytes) -> bytes:
    body = b"".join((_U64.pack(seq), _varint(len(row)), row, _varint(len(col)), col,
                     _varint(len(value)), value))
    return _varint(len(body)) + body + _U32.pack(crc32c(body))


def _decode_body(body: bytes) -> tuple[int, bytes, bytes, bytes]:
    seq = _U64.unpack_from(body)[0]
    pos = 8
    fields = []
    for _ in range(3):
        n, pos = _read_varint(body, pos)
        if pos + n > len(body):
            raise ValueError("field overruns record")
        fields.append(body[pos:pos + n])
        pos += n
    if pos != len(body):
        raise ValueError("trailing bytes in record")
    return seq, fields[0], fields[1], fields[2]


def scan_log(data: bytes) -> tuple[list[tuple[int, bytes, bytes, bytes]], int, str | None]:
    """Decode records; returns (records, end of last good record, error)."""
    if data[:len(HEADER)] != HEADER:
        return [], 0, "bad magic or version"
    pos = len(HEADER)
    records = []
    while pos < len(data):
        start = pos
        try:
            n, pos = _read_varint(data, pos)
            body = data[pos:pos + n]
            crc = data[pos + n:pos + n + 4]
            if len(body) != n or len(crc) != 4:
                return records, start, f"truncated record at offset {start}"
            if _U32.unpack(crc)[0] != crc32c(body):
                return records, start, f"checksum mismatch at offset {start}"
            records.append(_decode_body(body))
            pos += n + 4
        except (IndexError, ValueError, struct.error) as e:
            return records, start, f"malformed record at offset {start}: {e}"
    return records, pos, None


@dataclass(frozen=True)
class _Index:
    """Immutable snapshot of the table contents in both orientations."""

    row_major: tuple  # sorted (row, col, value)
    row_keys: tuple   # first elements of row_major, for bisect
    col_major: tuple  # sorted (col, row, value)
    col_keys: tuple

    @classmethod
    def build(cls, cells: dict) -> _Index:
        rm = sorted((r, c, v) for (r, c), (_, v) in cells.items())
        cm = sorted((c, r, v) for r, c, v in rm)
        return cls(tuple(rm), tuple(t[0] for t in rm), tuple(cm), tuple(t[0] for t in cm))


class TableHandle:
    """An open table. Writable handles hold an exclusive lock file."""

    def __init__(self, directory: Path, name: str, writable: bool):
        self.directory = directory
        self.name = name
        self.path = directory / f"{name}.cmdt"
        self.meta_path = directory / f"{name}.meta"
        self.writable = writable
        self._lock_fd: int | None = None
        self._cells: dict[tuple[bytes, bytes], tuple[int, bytes]] = {}
        self._next_seq = 1
        self._index: _Index | None = None
        self._mutex = threading.Lock()
        self._meta = _UNREAD

    # -- lifecycle ----------------------------------------------------------

    def _acquire(self) -> None:
        fd = os.open(self.directory / f"{self.name}.lock", os.O_RDWR | os.O_CREAT, 0o644)
        try:
            fcntl.flock(fd, fcntl.LOCK_EX | fcntl.LOCK_NB)
        except BlockingIOError:
            os.close(fd)
            raise TableLocked(f"table {self.name!r} is open for writing elsewhere") from None
        self._lock_fd = fd

    def close(self) -> None:
        if self._lock_fd is not None:
            fcntl.flock(self._lock_fd, fcntl.LOCK_UN)
            os.close(self._lock_fd)
            self._lock_fd = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _load(self, recover: bool) -> None:
        data = self.path.read_bytes()
        records, end, err = scan_log(data)
        if err is not None:
            if not recover or end == 0:
                raise Corrupt(f"{self.path}: {err}; {len(records)} records recoverable",
                              recovered=len(records), valid_length=end)
            log.warning("%s: %s; truncating to %d intact records", self.path, err, len(records))
            with open(self.path, "r+b") as f:
                f.truncate(end)
                f.flush()
                os.fsync(f.fileno())
        for seq, row, col, value in records:
            prev = self._cells.get((row, col))
            if prev is None or prev[0] < seq:
                self._cells[(row, col)] = (seq, decode_value(value))
            self._next_seq = max(self._next_seq, seq + 1)

    # -- metadata -----------------------------------------------------------

    @property
    def meta(self) -> tuple[bytes, MaskPolicy] | None:
        """(salt, policy) for masked tables, else None."""
        if self._meta is _UNREAD:
            self._meta = None
            if self.meta_path.exists():
                lines = self.meta_path.read_text().splitlines()
                fields = dict(line.split("=", 1) for line in lines if "=" in line)
                self._meta = bytes.fromhex(fields["salt"]), MaskPolicy.from_compact(fields["policy"])
        return self._meta

    def _write_meta(self, salt: bytes, policy: MaskPolicy) -> None:
        tmp = self.meta_path.with_suffix(".meta.tmp")
        tmp.write_text(f"salt={salt.hex()}\npolicy={policy.compact()}\n")
        os.replace(tmp, self.meta_path)
        self._meta = (salt, policy)

    # -- operations ---------------------------------------------------------

    def put(self, A: AssociativeArray | MaskedArray) -> int:
        """Append every entry of ``A`` durably; returns the entry count."""
        if not self.writable:
            raise IoFailure("table handle is read-only")
        meta = self.meta
        if isinstance(A, MaskedArray):
            if meta is None and (self._cells or self.path.stat().st_size > len(HEADER)):
                raise SchemeMismatch("cannot put masked data into a plain table")
            if meta is not None and meta != (A.salt, A.policy):
                raise SchemeMismatch("masked data does not match the table's salt/policy")
            if meta is None:
                self._write_meta(A.salt, A.policy)
            A = A.payload
        elif meta is not None:
            raise SchemeMismatch("cannot put plain data into a masked table")
        if A.nnz == 0:
            return 0
        seq = self._next_seq
        rows = [_varint(len(k)) + k for k in A.rows]
        cols = [_varint(len(k)) + k for k in A.cols]
        vals = A.values().tolist()
        venc: dict = {}
        parts = []
        for i, (r, c, v) in enumerate(zip(A._ri.tolist(), A._ci.tolist(), vals)):
            ev = venc.get(v)
            if ev is None:
                e = encode_value(v)
                ev = venc[v] = _varint(len(e)) + e
            body = b"".join((_U64.pack(seq + i), rows[r], cols[c], ev))
            parts.append(_varint(len(body)))
            parts.append(body)
            parts.append(_U32.pack(crc32c(body)))
        try:
            with open(self.path, "ab") as f:
                f.write(b"".join(parts))
                f.flush()
                os.fsync(f.fileno())
        except OSError as e:
            raise IoFailure(f"write to {self.path} failed: {e}") from e
        with self._mutex:
            cells, rk, ck = self._cells, A.rows, A.cols
            for i, (r, c, v) in enumerate(zip(A._ri.tolist(), A._ci.tolist(), vals)):
                cells[(rk[r], ck[c])] = (seq + i, v)
            self._next_seq = seq + A.nnz
            self._index = None
        return A.nnz

    @property
    def index(self) -> _Index:
        """Current snapshot, rebuilt lazily after writes."""
        with self._mutex:
            if self._index is None:
                self._index = _Index.build(self._cells)
            return self._index

    def scan(self) -> AssociativeArray:
        idx = self.index
        if not idx.row_major:
            return AssociativeArray.empty()
        rows, cols, vals = zip(*idx.row_major)
        return AssociativeArray.from_lists(rows, cols, list(vals), CollisionRule.LAST)

    def query(self, row_spec: KeySpec = All(), col_spec: KeySpec = All()) -> AssociativeArray:
        """Entries matching both selectors; equals ``select(scan(), r, c)``."""
        row_spec, col_spec = as_keyspec(row_spec), as_keyspec(col_spec)
        idx = self.index  # snapshot
        if isinstance(row_spec, All) and isinstance(col_spec, All):
            return self.scan()
        if not isinstance(row_spec, All):
            hits = [(r, c, v) for lo, hi in row_spec.spans(idx.row_keys)
                    for r, c, v in idx.row_major[lo:hi] if col_spec.matches(c)]
        else:
            hits = [(r, c, v) for lo, hi in col_spec.spans(idx.col_keys)
                    for c, r, v in idx.col_major[lo:hi]]
        if not hits:
            return AssociativeArray.empty()
        rows, cols, vals = zip(*hits)
        return AssociativeArray.from_lists(rows, cols, list(vals), CollisionRule.LAST)

    def query_masked(self, row_spec=All(), col_spec=All()) -> MaskedArray:
        """Query a masked table; selectors must already be over masked keys."""
        meta = self.meta
        if meta is None:
            raise SchemeMismatch("table is not masked")
        return MaskedArray(self.query(row_spec, col_spec), meta[1], meta[0])

    def compact(self) -> None:
        """Rewrite the log sorted, one record per cell."""
        if not self.writable:
            raise IoFailure("table handle is read-only")
        tmp = self.path.with_suffix(".cmdt.tmp")
        items = sorted(self._cells.items())
        try:
            with open(tmp, "wb") as f:
                f.write(HEADER)
                f.write(b"".join(encode_record(seq, r, c, encode_value(v))
                                 for (r, c), (seq, v) in items))
                f.flush()
                os.fsync(f.fileno())
            os.replace(tmp, self.path)
            _fsync_dir(self.directory)
        except OSError as e:
            raise IoFailure(f"compaction of {self.path} failed: {e}") from e

    @property
    def nnz(self) -> int:
        return len(self._cells)


def _fsync_dir(d: Path) -> None:
    fd = os.open(d, os.O_RDONLY)
    try:
        os.fsync(fd)
    finally:
        os.close(fd)


def open_table(directory, name, create: bool = False, writable: bool = True,
               recover: bool = False) -> TableHandle:
    """Open (or create) table ``name`` in ``directory``.

    Raises :class:`NotFound` if missing and ``create`` is false, and
    :class:`Corrupt` on a damaged log unless ``recover`` truncates it to the
    intact prefix.
    """
    if isinstance(name, bytes):
        name = name.decode("ascii", "replace")
    if not _NAME_RE.match(name):
        raise ValueError(f"table names are limited to [A-Za-z0-9_.-]: {name!r}")
    directory = Path(directory)
    h = TableHandle(directory, name, writable)
    if not h.path.exists():
        if not create:
            raise NotFound(f"no table {name!r} in {directory}")
        directory.mkdir(parents=True, exist_ok=True)
        if writable:
            h._acquire()
        try:
            with open(h.path, "xb") as f:
                f.write(HEADER)
                f.flush()
                os.fsync(f.fileno())
            _fsync_dir(directory)
        except FileExistsError:
            pass
        except OSError as e:
            h.close()
            raise IoFailure(str(e)) from e
    elif writable:
        h._acquire()
    try:
        h._load(recover and writable)
    except BaseException:
        h.close()
        raise
    return h


def put(T: TableHandle, A) -> int:
    return T.put(A)


def query(T: TableHandle, row_spec=All(), col_spec=All()) -> AssociativeArray:
    return T.query(row_spec, col_spec)


def compact(T: TableHandle) -> None:
    T.compact()
