"""Stateless order-preserving encryption for short byte strings.

Strings of up to 16 bytes are ranked into the integer domain
``[0, 257**16)`` (each byte ``b`` becomes digit ``b + 1``, shorter strings
are right-padded with digit 0), which preserves byte-lexicographic order,
prefixes included. The domain is mapped into ``[0, 2**192)`` by keyed
recursive binary splitting of the range: at every step a PRF-seeded sample
decides how many domain points fall into the lower half of the current range,
in the manner of Boldyreva et al. The split count is drawn from a binomial
approximation of the hypergeometric distribution, computed with integer
arithmetic only so results are identical on every platform.

Ciphertexts are 24 bytes, rendered as 32 characters of the Base64 alphabet
in sorted order, so comparing ciphertext *text* compares ciphertext values.
"""
from __future__ import annotations

import base64
import binascii
import functools
import hashlib
import math
import struct

from ..errors import DecryptFailure, InputTooLong

MAX_LEN = 16
DOMAIN = 257 ** MAX_LEN
RANGE_BITS = 192
RANGE = 1 << RANGE_BITS
CT_BYTES = RANGE_BITS // 8

_STD = b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/"
_SORTED = bytes(sorted(_STD))
_TO_SORTED = bytes.maketrans(_STD, _SORTED)
_FROM_SORTED = bytes.maketrans(_SORTED, _STD)
# exact binomial sampling by coin counting below this many domain points
_EXACT_LIMIT = 256
_TWELVE_U32 = struct.Struct(">12I")


def encode_plaintext(m: bytes) -> int:
    if not m:
        raise ValueError("cannot OPE-encrypt an empty string")
    if len(m) > MAX_LEN:
        raise InputTooLong(f"OPE accepts at most {MAX_LEN} bytes, got {len(m)}")
    x = 0
    for b in m:
        x = x * 257 + b + 1
    return x * 257 ** (MAX_LEN - len(m))


def decode_plaintext(x: int) -> bytes:
    digits = []
    for _ in range(MAX_LEN):
        x, d = divmod(x, 257)
        digits.append(d)
    digits.reverse()
    while digits and digits[-1] == 0:
        digits.pop()
    if not digits or 0 in digits:
        raise DecryptFailure("OPE ciphertext does not decode to a valid string")
    return bytes(d - 1 for d in digits)


def to_text(c: int) -> bytes:
    return base64.b64encode(c.to_bytes(CT_BYTES, "big")).translate(_TO_SORTED)


def from_text(t: bytes) -> int:
    if len(t) != CT_BYTES * 4 // 3:
        raise DecryptFailure("OPE ciphertext has the wrong length")
    try:
        raw = base64.b64decode(t.translate(_FROM_SORTED), validate=True)
    except binascii.Error:
        raise DecryptFailure("OPE ciphertext is not in the Base64 alphabet") from None
    return int.from_bytes(raw, "big")


class OpeCipher:
    def __init__(self, key: bytes):
        if len(key) != 16:
            raise ValueError("OPE key must be 16 bytes")
        self._key = key
        self.encrypt_int = functools.lru_cache(maxsize=1 << 16)(self._encrypt_int)

    def _coins(self, *node: int) -> bytes:
        data = b"".join(v.to_bytes(32, "big") for v in node)
        return hashlib.blake2b(data, key=self._key, digest_size=64).digest()

    def _split(self, dlo: int, dhi: int, rlo: int, rhi: int) -> int:
        """Number of domain points of [dlo, dhi] mapped into the lower half of
        [rlo, rhi]."""
        m = dhi - dlo + 1
        n = rhi - rlo + 1
        left = n // 2
        lo_bound = max(0, m - (n - left))
        hi_bound = min(m, left)
        coins = self._coins(0, dlo, dhi, rlo, rhi)
        if m <= _EXACT_LIMIT:
            bits = int.from_bytes(coins, "big") >> (512 - m)
            x = bin(bits).count("1")
        else:
            mean = m * left // n
            sd = math.isqrt(m * left * (n - left) // (n * n))
            # Irwin-Hall: the sum of 12 uniforms on [0, 1) minus 6 is ~N(0, 1)
            z = sum(_TWELVE_U32.unpack_from(coins)) - (6 << 32)
            x = mean + ((z * sd) >> 32)
        return min(max(x, lo_bound), hi_bound)

    def _encrypt_int(self, x: int) -> int:
        dlo, dhi, rlo, rhi = 0, DOMAIN - 1, 0, RANGE - 1
        while dlo < dhi:
            k = self._split(dlo, dhi, rlo, rhi)
            mid = rlo + (rhi - rlo + 1) // 2 - 1
            if x < dlo + k:
                dhi, rhi = dlo + k - 1, mid
            else:
                dlo, rlo = dlo + k, mid + 1
        span = rhi - rlo + 1
        return rlo + int.from_bytes(self._coins(1, dlo), "big") % span

    def decrypt_int(self, c: int) -> int:
        if not 0 <= c < RANGE:
            raise DecryptFailure("OPE ciphertext out of range")
        dlo, dhi, rlo, rhi = 0, DOMAIN - 1, 0, RANGE - 1
        while dlo < dhi:
            k = self._split(dlo, dhi, rlo, rhi)
            mid = rlo + (rhi - rlo + 1) // 2 - 1
            if c <= mid:
                dhi, rhi = dlo + k - 1, mid
            else:
                dlo, rlo = dlo + k, mid + 1
            if dlo > dhi:
                raise DecryptFailure("OPE ciphertext was not produced under this key")
        if self.encrypt_int(dlo) != c:
            raise DecryptFailure("OPE ciphertext was not produced under this key")
        return dlo

    def encrypt(self, m: bytes) -> bytes:
        return to_text(self.encrypt_int(encode_plaintext(m)))

    def decrypt(self, c: bytes) -> bytes:
        return decode_plaintext(self.decrypt_int(from_text(c)))

    def encrypt_many(self, msgs):
        return [self.encrypt(m) for m in msgs]

    def decrypt_many(self, cts):
        return [self.decrypt(c) for c in cts]


@functools.lru_cache(maxsize=64)
def ope_cipher(key: bytes) -> OpeCipher:
    return OpeCipher(key)


def ope_encrypt(key: bytes, m: bytes) -> bytes:
    return ope_cipher(key).encrypt(m)


def ope_decrypt(key: bytes, c: bytes) -> bytes:
    return ope_cipher(key).decrypt(c)
