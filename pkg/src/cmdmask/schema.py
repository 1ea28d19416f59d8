"""D4M exploded-column schema: dense tables in, sparse arrays out.

Every non-empty cell ``(row_id, column, value)`` of a dense table becomes the
sparse entry ``(row_id, column + delimiter + value) = 1``, so the record
content lives entirely in the keys.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

from .assoc import AssociativeArray, as_key
from .errors import (DelimiterClash, DuplicateRowId, MalformedColumn, MultiValueCell,
                     RaggedRow)


@dataclass(frozen=True)
class DenseTable:
    column_names: tuple[bytes, ...]
    rows: tuple[tuple[bytes, tuple[bytes, ...]], ...]

    def __post_init__(self):
        width = len(self.column_names)
        seen = set()
        for row_id, cells in self.rows:
            if len(cells) != width:
                raise RaggedRow(f"row {row_id!r} has {len(cells)} cells, expected {width}")
            if row_id in seen:
                raise DuplicateRowId(f"duplicate row id {row_id!r}")
            seen.add(row_id)

    def canonical(self) -> DenseTable:
        """Columns and rows sorted by key; the form :func:`unexplode` returns."""
        order = sorted(range(len(self.column_names)), key=self.column_names.__getitem__)
        rows = sorted((rid, tuple(cells[i] for i in order)) for rid, cells in self.rows)
        return DenseTable(tuple(self.column_names[i] for i in order), tuple(rows))

    @property
    def n_cells(self) -> int:
        return sum(1 for _, cells in self.rows for c in cells if c)


@dataclass(frozen=True)
class ExplodeConfig:
    delimiter: bytes = b"|"
    # Columns whose cells hold whitespace-separated multi-values (e.g. the
    # words of a tweet); each token becomes its own exploded column.
    split_columns: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if len(self.delimiter) != 1:
            raise ValueError("delimiter must be a single byte")
        object.__setattr__(self, "split_columns",
                           frozenset(as_key(c) for c in self.split_columns))


def parse_dense(data: bytes, has_header: bool = True) -> DenseTable:
    """Parse comma-separated text; the first field of each record is its id."""
    text = data.decode("utf-8", "surrogateescape")
    records = [r for r in csv.reader(io.StringIO(text, newline="")) if r]

    def enc(s: str) -> bytes:
        return s.encode("utf-8", "surrogateescape")

    if has_header:
        if not records:
            return DenseTable((), ())
        header, body = records[0], records[1:]
        names = tuple(enc(h) for h in header[1:])
    else:
        body = records
        width = len(body[0]) - 1 if body else 0
        names = tuple(b"c%d" % (i + 1) for i in range(width))
    rows = []
    for n, rec in enumerate(body, 1):
        if len(rec) - 1 != len(names):
            raise RaggedRow(f"record {n} has {len(rec) - 1} cells, expected {len(names)}")
        rows.append((as_key(enc(rec[0])), tuple(enc(c) for c in rec[1:])))
    return DenseTable(names, tuple(rows))


def explode(t: DenseTable, cfg: ExplodeConfig = ExplodeConfig()) -> AssociativeArray:
    d = cfg.delimiter
    for name in t.column_names:
        if d in name:
            raise DelimiterClash(f"delimiter {d!r} occurs in column name {name!r}")
    rows, cols = [], []
    for row_id, cells in t.rows:
        for name, cell in zip(t.column_names, cells):
            if not cell:
                continue
            values = cell.split() if name in cfg.split_columns else (cell,)
            for v in values:
                rows.append(row_id)
                cols.append(name + d + v)
    return AssociativeArray.from_lists(rows, cols, 1.0)


def unexplode(A: AssociativeArray, cfg: ExplodeConfig = ExplodeConfig()) -> DenseTable:
    """Rebuild the dense table (columns and rows in sorted order)."""
    d = cfg.delimiter
    split = {}
    for col in A.cols:
        name, sep, value = col.partition(d)
        if not sep:
            raise MalformedColumn(f"column key {col!r} has no delimiter {d!r}")
        split[col] = (name, value)
    names = sorted({name for name, _ in split.values()})
    pos = {n: i for i, n in enumerate(names)}
    table: dict[bytes, list[bytes]] = {}
    for t in A:
        name, value = split[t.col]
        cells = table.setdefault(t.row, [b""] * len(names))
        if cells[pos[name]]:
            raise MultiValueCell(f"row {t.row!r} has several values for column {name!r}")
        cells[pos[name]] = value
    return DenseTable(tuple(names), tuple((rid, tuple(c)) for rid, c in sorted(table.items())))

