"""Randomized authenticated encryption (AES-128-GCM, random 96-bit nonce).

Ciphertexts are ``Base64(nonce || ciphertext || tag)``; they leak only the
plaintext length and fail loudly on any modification.
"""
from __future__ import annotations

import base64
import binascii
import os

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from ..errors import AuthFailure

NONCE_BYTES = 12


def rnd_encrypt(key: bytes, m: bytes) -> bytes:
    nonce = os.urandom(NONCE_BYTES)
    return base64.b64encode(nonce + AESGCM(key).encrypt(nonce, m, None))


def rnd_decrypt(key: bytes, c: bytes) -> bytes:
    try:
        raw = base64.b64decode(c, validate=True)
    except binascii.Error:
        raise AuthFailure("RND ciphertext is not Base64") from None
    if len(raw) < NONCE_BYTES + 16:
        raise AuthFailure("RND ciphertext is truncated")
    try:
        return AESGCM(key).decrypt(raw[:NONCE_BYTES], raw[NONCE_BYTES:], None)
    except InvalidTag:
        raise AuthFailure("RND ciphertext failed authentication") from None
