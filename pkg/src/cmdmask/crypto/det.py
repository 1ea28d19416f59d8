"""Deterministic, length-preserving encryption of byte strings.

Plaintexts are PKCS#7 padded to whole 16-byte blocks and enciphered with
CMC, the CBC-Mask-CBC tweakable wide-block mode of Halevi and Rogaway, over
AES-128. Every ciphertext bit depends on every plaintext bit, the mapping is
a permutation on each block count, and the ciphertext is exactly as long as
the padded plaintext: 24 Base64 characters per block.

The tweak is fixed, so a key maps to the same ciphertext whether it sits in
a row or a column position. Batched entry points process many strings with
a handful of AES calls by grouping them by block count.
"""
from __future__ import annotations

import base64
import binascii
import functools
import hashlib
import hmac
from typing import Sequence

import numpy as np
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from ..errors import DecryptFailure

BLOCK = 16
_TWEAK = b"cmdmask/det/v1".ljust(BLOCK, b"\0")


def _subkey(key: bytes, label: bytes) -> bytes:
    return hmac.new(key, label, hashlib.sha256).digest()[:16]


def _gf_double(x: np.ndarray) -> np.ndarray:
    """Multiply each 16-byte row by x in GF(2^128), big-endian convention."""
    carry = x[:, 0] >> 7
    out = (x << 1) & 0xFF
    out[:, :-1] |= x[:, 1:] >> 7
    out[:, -1] ^= (carry * 0x87).astype(np.uint8)
    return out.astype(np.uint8)


class DetCipher:
    def __init__(self, key: bytes):
        if len(key) != 16:
            raise ValueError("DET key must be 16 bytes")
        # contexts are created per call: cipher contexts are not thread-safe
        self._aes = Cipher(algorithms.AES(_subkey(key, b"block")), modes.ECB())
        tk = Cipher(algorithms.AES(_subkey(key, b"tweak")), modes.ECB()).encryptor()
        self._t = np.frombuffer(tk.update(_TWEAK), dtype=np.uint8)

    def _ecb(self, encrypt: bool, blocks: np.ndarray) -> np.ndarray:
        shape = blocks.shape
        ctx = self._aes.encryptor() if encrypt else self._aes.decryptor()
        out = ctx.update(np.ascontiguousarray(blocks).tobytes())
        return np.frombuffer(out, dtype=np.uint8).reshape(shape)

    # -- raw block-level CMC on arrays of shape (n, m, 16) ------------------

    def _encipher(self, p: np.ndarray) -> np.ndarray:
        n, m, _ = p.shape
        ppp = np.empty_like(p)
        prev = np.broadcast_to(self._t, (n, BLOCK))
        for i in range(m):
            prev = self._ecb(True, p[:, i] ^ prev)
            ppp[:, i] = prev
        mask = _gf_double(ppp[:, 0] ^ ppp[:, m - 1])
        ccc = ppp[:, ::-1] ^ mask[:, None, :]
        cc = self._ecb(True, ccc.reshape(n * m, BLOCK)).reshape(n, m, BLOCK)
        c = cc.copy()
        c[:, 1:] ^= ccc[:, :-1]
        c[:, 0] ^= self._t
        return c

    def _decipher(self, c: np.ndarray) -> np.ndarray:
        n, m, _ = c.shape
        c = c.copy()
        c[:, 0] ^= self._t
        ccc = np.empty_like(c)
        prev = np.zeros((n, BLOCK), dtype=np.uint8)
        for i in range(m):
            prev = self._ecb(False, c[:, i] ^ prev)
            ccc[:, i] = prev
        mask = _gf_double(ccc[:, 0] ^ ccc[:, m - 1])
        ppp = ccc[:, ::-1] ^ mask[:, None, :]
        pp = self._ecb(False, ppp.reshape(n * m, BLOCK)).reshape(n, m, BLOCK)
        p = pp.copy()
        p[:, 0] ^= self._t
        p[:, 1:] ^= ppp[:, :-1]
        return p

    # -- byte-string API ----------------------------------------------------

    def encrypt_raw_many(self, msgs: Sequence[bytes]) -> list[bytes]:
        out: list[bytes | None] = [None] * len(msgs)
        groups: dict[int, list[int]] = {}
        padded = []
        for i, m in enumerate(msgs):
            if not m:
                raise ValueError("cannot DET-encrypt an empty string")
            k = BLOCK - len(m) % BLOCK
            padded.append(m + bytes((k,)) * k)
            groups.setdefault(len(padded[-1]) // BLOCK, []).append(i)
        for nblocks, idx in groups.items():
            buf = b"".join(padded[i] for i in idx)
            arr = np.frombuffer(buf, dtype=np.uint8).reshape(len(idx), nblocks, BLOCK)
            ct = self._encipher(arr).tobytes()
            width = nblocks * BLOCK
            for j, i in enumerate(idx):
                out[i] = ct[j * width:(j + 1) * width]
        return out

    def decrypt_raw_many(self, cts: Sequence[bytes]) -> list[bytes]:
        out: list[bytes | None] = [None] * len(cts)
        groups: dict[int, list[int]] = {}
        for i, c in enumerate(cts):
            if not c or len(c) % BLOCK:
                raise DecryptFailure("DET ciphertext is not a whole number of blocks")
            groups.setdefault(len(c) // BLOCK, []).append(i)
        for nblocks, idx in groups.items():
            buf = b"".join(cts[i] for i in idx)
            arr = np.frombuffer(buf, dtype=np.uint8).reshape(len(idx), nblocks, BLOCK)
            pt = self._decipher(arr).tobytes()
            width = nblocks * BLOCK
            for j, i in enumerate(idx):
                out[i] = _unpad(pt[j * width:(j + 1) * width])
        return out

    def encrypt_many(self, msgs: Sequence[bytes]) -> list[bytes]:
        return [base64.b64encode(c) for c in self.encrypt_raw_many(msgs)]

    def decrypt_many(self, cts: Sequence[bytes]) -> list[bytes]:
        raw = []
        for c in cts:
            try:
                raw.append(base64.b64decode(c, validate=True))
            except binascii.Error:
                raise DecryptFailure(f"not Base64: {c[:32]!r}") from None
        return self.decrypt_raw_many(raw)

    def encrypt(self, m: bytes) -> bytes:
        return self.encrypt_many([m])[0]

    def decrypt(self, c: bytes) -> bytes:
        return self.decrypt_many([c])[0]


def _unpad(b: bytes) -> bytes:
    k = b[-1]
    if not 1 <= k <= BLOCK or b[-k:] != bytes((k,)) * k:
        raise DecryptFailure("bad padding (wrong key or corrupt ciphertext)")
    return b[:-k]


@functools.lru_cache(maxsize=64)
def det_cipher(key: bytes) -> DetCipher:
    return DetCipher(key)


def det_encrypt(key: bytes, m: bytes) -> bytes:
    return det_cipher(key).encrypt(m)


def det_decrypt(key: bytes, c: bytes) -> bytes:
    return det_cipher(key).decrypt(c)
