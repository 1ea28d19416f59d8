"""Canonical triple text format.

One entry per line, ``row<TAB>col<TAB>value``, sorted by (row, col). Values
carry a type tag: ``n:`` followed by the shortest round-trip decimal for
numbers, ``s:`` followed by the raw bytes for strings. Tab, newline and
backslash inside keys and string values are escaped as ``\\t``, ``\\n`` and
``\\\\``.
"""
from __future__ import annotations

import re
from typing import BinaryIO, Iterable

from .assoc import AssociativeArray, CollisionRule, Triple, Value
from .errors import CMDError

_ESCAPES = {b"\\": b"\\\\", b"\t": b"\\t", b"\n": b"\\n"}
_UNESCAPES = {b"\\\\": b"\\", b"\\t": b"\t", b"\\n": b"\n"}
_ESC_RE = re.compile(rb"[\\\t\n]")
_UNESC_RE = re.compile(rb"\\(.|$)", re.S)


class FormatError(CMDError, ValueError):
    pass


def escape(b: bytes) -> bytes:
    return _ESC_RE.sub(lambda m: _ESCAPES[m.group()], b)


def unescape(b: bytes) -> bytes:
    def sub(m):
        try:
            return _UNESCAPES[m.group()]
        except KeyError:
            raise FormatError(f"bad escape {m.group()!r}") from None
    return _UNESC_RE.sub(sub, b)


def encode_value(v: Value) -> bytes:
    if isinstance(v, bytes):
        return b"s:" + escape(v)
    return b"n:" + repr(float(v)).encode("ascii")


def decode_value(b: bytes) -> Value:
    tag, body = b[:2], b[2:]
    if tag == b"n:":
        try:
            return float(body)
        except ValueError:
            raise FormatError(f"bad number {body!r}") from None
    if tag == b"s:":
        return unescape(body)
    raise FormatError(f"unknown value tag {tag!r}")


def format_line(t: Triple) -> bytes:
    return b"\t".join((escape(t.row), escape(t.col), encode_value(t.val))) + b"\n"


def dumps(A: AssociativeArray) -> bytes:
    return b"".join(format_line(t) for t in A)


def parse_lines(lines: Iterable[bytes]) -> list[Triple]:
    out = []
    for n, line in enumerate(lines, 1):
        line = line.rstrip(b"\n")
        if not line:
            continue
        parts = line.split(b"\t")
        if len(parts) != 3:
            raise FormatError(f"line {n}: expected 3 tab-separated fields")
        out.append(Triple(unescape(parts[0]), unescape(parts[1]), decode_value(parts[2])))
    return out


def loads(data: bytes) -> AssociativeArray:
    return AssociativeArray.from_triples(parse_lines(data.split(b"\n")), CollisionRule.SUM)


def dump(A: AssociativeArray, fp: BinaryIO) -> None:
    fp.write(dumps(A))


def load(fp: BinaryIO) -> AssociativeArray:
    return loads(fp.read())
