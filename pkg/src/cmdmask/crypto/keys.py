"""Password-derived key material for the masking schemes."""
from __future__ import annotations

import functools
import hashlib
import hmac
import os
from dataclasses import dataclass, field

from ..errors import EmptyPassword
from . import paillier

SALT_BYTES = 16
# scrypt cost: 16 MiB of memory per derivation
SCRYPT_N, SCRYPT_R, SCRYPT_P = 1 << 14, 8, 1


def new_salt() -> bytes:
    return os.urandom(SALT_BYTES)


@dataclass(frozen=True)
class MaskKeySet:
    det_key: bytes
    ope_key: bytes
    rnd_key: bytes
    hom_seed: bytes = field(repr=False)
    salt: bytes

    @functools.cached_property
    def hom_keypair(self) -> tuple[paillier.PublicKey, paillier.PrivateKey]:
        # generated lazily: prime search dominates key derivation otherwise
        return paillier.keypair_from_seed(self.hom_seed)

    def __repr__(self):
        return f"MaskKeySet(salt={self.salt.hex()})"


def _expand(master: bytes, label: bytes, n: int) -> bytes:
    return hmac.new(master, b"cmdmask/" + label, hashlib.sha256).digest()[:n]


@functools.lru_cache(maxsize=32)
def derive_keys(password: bytes | str, salt: bytes) -> MaskKeySet:
    """Derive the key set from ``password`` with scrypt; deterministic in
    (password, salt)."""
    if isinstance(password, str):
        password = password.encode("utf-8")
    if not password:
        raise EmptyPassword("password must be non-empty")
    if len(salt) != SALT_BYTES:
        raise ValueError(f"salt must be {SALT_BYTES} bytes")
    master = hashlib.scrypt(password, salt=salt, n=SCRYPT_N, r=SCRYPT_R, p=SCRYPT_P,
                            maxmem=64 << 20, dklen=32)
    return MaskKeySet(
        det_key=_expand(master, b"det", 16),
        ope_key=_expand(master, b"ope", 16),
        rnd_key=_expand(master, b"rnd", 16),
        hom_seed=_expand(master, b"hom", 32),
        salt=salt,
    )
