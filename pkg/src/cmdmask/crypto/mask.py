"""Masking and unmasking of associative arrays.

A :class:`MaskPolicy` picks one scheme for each of rows, columns and values.
Masking renames every key through its scheme (so the array is re-sorted by
ciphertext) and transforms the values; keys stay comparable byte strings, so
the ordinary array algebra runs unchanged on the masked payload.
"""
from __future__ import annotations

import base64
import binascii
import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..assoc import (All, AssociativeArray, Exact, KeySpec, Prefix, Range, as_key, as_keyspec,
                     combine, multiply)
from ..assoc import select as aa_select
from ..assoc import threshold as aa_threshold
from ..assoc import transpose as aa_transpose
from .. import tripleio
from ..errors import DecryptFailure, PolicyMismatch, SchemeMismatch
from .det import det_cipher
from .keys import MaskKeySet
from .ope import ope_cipher
from .rnd import rnd_decrypt, rnd_encrypt

HOM_MAX = 1 << 64


class Scheme(str, enum.Enum):
    DET = "DET"
    OPE = "OPE"
    RND = "RND"
    HOMPLUS = "HOMPLUS"
    CLEAR = "CLEAR"

    def __str__(self):
        return self.value


KEY_SCHEMES = frozenset({Scheme.DET, Scheme.OPE, Scheme.CLEAR})
VALUE_SCHEMES = frozenset({Scheme.RND, Scheme.HOMPLUS, Scheme.CLEAR})


def _scheme(s) -> Scheme:
    name = str(s).strip().upper()
    try:
        return Scheme("HOMPLUS" if name == "HOM+" else name)
    except ValueError:
        raise PolicyMismatch(f"unknown scheme {s!r}") from None


@dataclass(frozen=True)
class MaskPolicy:
    rows: Scheme = Scheme.DET
    cols: Scheme = Scheme.DET
    values: Scheme = Scheme.CLEAR

    def __post_init__(self):
        for name in ("rows", "cols", "values"):
            object.__setattr__(self, name, _scheme(getattr(self, name)))
        if self.rows not in KEY_SCHEMES or self.cols not in KEY_SCHEMES:
            raise PolicyMismatch("rows/cols must be DET, OPE or CLEAR")
        if self.values not in VALUE_SCHEMES:
            raise PolicyMismatch("values must be RND, HOMPLUS or CLEAR")

    @classmethod
    def parse(cls, text: str) -> MaskPolicy:
        """Read the 3-line ``rows=... / cols=... / values=...`` policy file."""
        fields = {}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            k, sep, v = line.partition("=")
            if not sep or k.strip() not in ("rows", "cols", "values"):
                raise PolicyMismatch(f"bad policy line {line!r}")
            fields[k.strip()] = v.strip()
        return cls(**fields)

    @classmethod
    def from_compact(cls, text: str) -> MaskPolicy:
        parts = text.split(",")
        if len(parts) != 3:
            raise PolicyMismatch(f"bad policy {text!r}")
        return cls(*parts)

    def compact(self) -> str:
        return f"{self.rows},{self.cols},{self.values}"

    def to_text(self) -> str:
        return f"rows={self.rows}\ncols={self.cols}\nvalues={self.values}\n"


CLEAR_POLICY = MaskPolicy(Scheme.CLEAR, Scheme.CLEAR, Scheme.CLEAR)


@dataclass(frozen=True)
class MaskedArray:
    payload: AssociativeArray
    policy: MaskPolicy
    salt: bytes

    @property
    def nnz(self) -> int:
        return self.payload.nnz


# ---------------------------------------------------------------------------
# per-key transforms


def mask_keys(keys: Sequence[bytes], ks: MaskKeySet, scheme: Scheme) -> list[bytes]:
    if scheme is Scheme.DET:
        return det_cipher(ks.det_key).encrypt_many(keys)
    if scheme is Scheme.OPE:
        return ope_cipher(ks.ope_key).encrypt_many(keys)
    if scheme is Scheme.CLEAR:
        return list(keys)
    raise PolicyMismatch(f"{scheme} cannot mask keys")


def unmask_keys(keys: Sequence[bytes], ks: MaskKeySet, scheme: Scheme) -> list[bytes]:
    if scheme is Scheme.DET:
        return det_cipher(ks.det_key).decrypt_many(keys)
    if scheme is Scheme.OPE:
        return ope_cipher(ks.ope_key).decrypt_many(keys)
    if scheme is Scheme.CLEAR:
        return list(keys)
    raise PolicyMismatch(f"{scheme} cannot mask keys")


def str_mask(word, ks: MaskKeySet, scheme: Scheme = Scheme.DET) -> bytes:
    """Mask a single query key exactly as :func:`mask_array` masks stored keys."""
    scheme = _scheme(scheme)
    if scheme not in (Scheme.DET, Scheme.OPE):
        raise PolicyMismatch("query keys are masked with DET or OPE")
    return mask_keys([as_key(word)], ks, scheme)[0]


def mask_spec(spec, ks: MaskKeySet, scheme: Scheme) -> KeySpec:
    """Translate a plaintext key selector into one over masked keys."""
    spec = as_keyspec(spec)
    if isinstance(spec, All) or scheme is Scheme.CLEAR:
        return spec
    if isinstance(spec, Exact):
        return Exact(mask_keys(list(spec.keys), ks, scheme))
    if isinstance(spec, Range):
        if scheme is not Scheme.OPE:
            raise PolicyMismatch("range queries on masked keys need OPE")
        return Range(str_mask(spec.start, ks, scheme), str_mask(spec.end, ks, scheme))
    if isinstance(spec, Prefix):
        raise PolicyMismatch("prefix queries do not survive masking; expand them first")
    raise TypeError(f"unsupported key spec {spec!r}")


# ---------------------------------------------------------------------------
# values


def _tagged(v) -> bytes:
    return b"s:" + v if isinstance(v, bytes) else b"n:" + repr(float(v)).encode()


def _untagged(b: bytes):
    if b.startswith(b"s:"):
        return b[2:]
    if b.startswith(b"n:"):
        return float(b[2:])
    raise DecryptFailure("decrypted value has no type tag")


def _obj(vals: list) -> np.ndarray:
    out = np.empty(len(vals), dtype=object)
    out[:] = vals
    return out


def _hom_int(v) -> int:
    if isinstance(v, bytes) or v != int(v) or not 0 <= v < HOM_MAX:
        raise PolicyMismatch(f"HOMPLUS needs integer values in [0, 2^64), got {v!r}")
    return int(v)


def hom_to_text(c: int, ks: MaskKeySet) -> bytes:
    width = ks.hom_keypair[0].ciphertext_bytes
    return base64.b64encode(c.to_bytes(width, "big"))


def hom_from_text(t) -> int:
    if not isinstance(t, bytes):
        raise SchemeMismatch("HOMPLUS value is not a ciphertext string")
    try:
        return int.from_bytes(base64.b64decode(t, validate=True), "big")
    except binascii.Error:
        raise SchemeMismatch("HOMPLUS value is not Base64") from None


def _mask_values(vals: np.ndarray, ks: MaskKeySet, scheme: Scheme) -> np.ndarray:
    if scheme is Scheme.CLEAR:
        return vals
    items = vals.tolist()
    if scheme is Scheme.RND:
        return _obj([rnd_encrypt(ks.rnd_key, _tagged(v)) for v in items])
    sk = ks.hom_keypair[1]
    return _obj([hom_to_text(sk.encrypt(_hom_int(v)), ks) for v in items])


def _unmask_values(vals: np.ndarray, ks: MaskKeySet, scheme: Scheme) -> list:
    if scheme is Scheme.CLEAR:
        return vals
    items = vals.tolist()
    if scheme is Scheme.RND:
        out = []
        for v in items:
            if not isinstance(v, bytes):
                raise SchemeMismatch("RND value is not a ciphertext string")
            out.append(_untagged(rnd_decrypt(ks.rnd_key, v)))
        return out
    sk = ks.hom_keypair[1]
    n = ks.hom_keypair[0].n
    out = []
    for v in items:
        c = hom_from_text(v)
        if not 0 < c < n * n:
            raise DecryptFailure("HOMPLUS ciphertext out of range")
        out.append(float(sk.decrypt(c)))
    return out


# ---------------------------------------------------------------------------
# arrays


def mask_array(A: AssociativeArray, policy: MaskPolicy, ks: MaskKeySet) -> MaskedArray:
    """Mask keys and values of ``A``; the payload is re-sorted by ciphertext."""
    if policy.values is Scheme.HOMPLUS and not A.is_numeric:
        raise PolicyMismatch("HOMPLUS values must be numeric")
    rows = mask_keys(A.rows, ks, policy.rows)
    cols = mask_keys(A.cols, ks, policy.cols)
    payload = A.relabel(rows, cols)
    if policy.values is not Scheme.CLEAR:
        payload = payload.with_values(_mask_values(payload.values(), ks, policy.values))
    return MaskedArray(payload, policy, ks.salt)


def unmask_array(M: MaskedArray, ks: MaskKeySet) -> AssociativeArray:
    if M.salt != ks.salt:
        raise DecryptFailure("key set was derived with a different salt")
    P = M.payload
    rows = unmask_keys(P.rows, ks, M.policy.rows)
    cols = unmask_keys(P.cols, ks, M.policy.cols)
    try:
        out = P.relabel(rows, cols)
    except ValueError:
        raise DecryptFailure("unmasked keys collide (wrong key set?)") from None
    if M.policy.values is not Scheme.CLEAR:
        out = out.with_values(_unmask_values(out.values(), ks, M.policy.values))
    return out


# ---------------------------------------------------------------------------
# algebra on masked arrays; each result carries the policy its keys came from


def _clear_values(*ms: MaskedArray) -> None:
    for m in ms:
        if m.policy.values is not Scheme.CLEAR:
            raise PolicyMismatch(f"operation needs CLEAR values, array has {m.policy.values}")


def _same_salt(a: MaskedArray, b: MaskedArray) -> None:
    if a.salt != b.salt:
        raise SchemeMismatch("arrays were masked under different salts")


def masked_transpose(M: MaskedArray) -> MaskedArray:
    p = M.policy
    return MaskedArray(aa_transpose(M.payload), MaskPolicy(p.cols, p.rows, p.values), M.salt)


def masked_multiply(A: MaskedArray, B: MaskedArray, threads: int = 1) -> MaskedArray:
    _clear_values(A, B)
    _same_salt(A, B)
    if A.policy.cols is not B.policy.rows:
        raise SchemeMismatch("contraction keys were masked with different schemes")
    policy = MaskPolicy(A.policy.rows, B.policy.cols, Scheme.CLEAR)
    return MaskedArray(multiply(A.payload, B.payload, threads), policy, A.salt)


def masked_combine(A: MaskedArray, B: MaskedArray, op: str, ks: MaskKeySet | None = None
                   ) -> MaskedArray:
    """Elementwise combine. HOMPLUS arrays support ``add`` through the
    homomorphism (needs the key set for the public key)."""
    _same_salt(A, B)
    if (A.policy.rows, A.policy.cols) != (B.policy.rows, B.policy.cols):
        raise SchemeMismatch("key schemes differ")
    if A.policy.values is Scheme.HOMPLUS and B.policy.values is Scheme.HOMPLUS:
        if op != "add" or ks is None:
            raise PolicyMismatch("HOMPLUS arrays only support add (with a key set)")
        return MaskedArray(_hom_add_arrays(A.payload, B.payload, ks), A.policy, A.salt)
    _clear_values(A, B)
    return MaskedArray(combine(A.payload, B.payload, op), A.policy, A.salt)


def _hom_add_arrays(A: AssociativeArray, B: AssociativeArray, ks: MaskKeySet) -> AssociativeArray:
    pk = ks.hom_keypair[0]
    cells = {(t.row, t.col): t.val for t in A}
    for t in B:
        key = (t.row, t.col)
        if key in cells:
            s = pk.add(hom_from_text(cells[key]), hom_from_text(t.val))
            cells[key] = hom_to_text(s, ks)
        else:
            cells[key] = t.val
    return AssociativeArray.from_triples((r, c, v) for (r, c), v in cells.items())


def masked_threshold(M: MaskedArray, cut: float) -> MaskedArray:
    _clear_values(M)
    return MaskedArray(aa_threshold(M.payload, cut), M.policy, M.salt)


def masked_select(M: MaskedArray, row_spec, col_spec) -> MaskedArray:
    """Select with selectors that are already expressed over masked keys."""
    return MaskedArray(aa_select(M.payload, row_spec, col_spec), M.policy, M.salt)


# ---------------------------------------------------------------------------
# file format


def dumps_masked(M: MaskedArray) -> bytes:
    """Triple text preceded by ``salt=<hex>`` and ``policy=<r>,<c>,<v>`` lines."""
    header = f"salt={M.salt.hex()}\npolicy={M.policy.compact()}\n".encode("ascii")
    return header + tripleio.dumps(M.payload)


def split_header(data: bytes) -> tuple[bytes, MaskPolicy, bytes]:
    """Return (salt, policy, body) of a masked-array file."""
    lines = data.split(b"\n", 2)
    if len(lines) < 3 or not lines[0].startswith(b"salt=") or not lines[1].startswith(b"policy="):
        raise tripleio.FormatError("missing salt/policy header")
    try:
        salt = bytes.fromhex(lines[0][5:].decode("ascii"))
    except ValueError:
        raise tripleio.FormatError("bad salt") from None
    policy = MaskPolicy.from_compact(lines[1][7:].decode("ascii"))
    return salt, policy, lines[2]


def is_masked_file(data: bytes) -> bool:
    return data.startswith(b"salt=")


def loads_masked(data: bytes) -> MaskedArray:
    salt, policy, body = split_header(data)
    return MaskedArray(tripleio.loads(body), policy, salt)
