"""Paillier additively homomorphic encryption (g = n + 1 variant).

Key pairs are generated from a seed so that a password-derived key set
always reproduces the same pair. Arithmetic uses gmpy2.
"""
from __future__ import annotations

import hashlib
import secrets
from dataclasses import dataclass

import gmpy2

DEFAULT_BITS = 2048


@dataclass(frozen=True)
class PublicKey:
    n: int

    @property
    def nsquare(self) -> int:
        return self.n * self.n

    @property
    def ciphertext_bytes(self) -> int:
        return (self.nsquare.bit_length() + 7) // 8

    def encrypt(self, m: int, r: int | None = None) -> int:
        if not 0 <= m < self.n:
            raise ValueError("plaintext out of range [0, n)")
        n, n2 = gmpy2.mpz(self.n), gmpy2.mpz(self.nsquare)
        if r is None:
            r = secrets.randbelow(self.n - 1) + 1
        # g^m = (1 + n)^m = 1 + m*n  (mod n^2)
        c = (1 + m * n) % n2 * gmpy2.powmod(r, n, n2) % n2
        return int(c)

    def add(self, c1: int, c2: int) -> int:
        """Ciphertext of the sum of the two plaintexts (mod n)."""
        return int(gmpy2.mpz(c1) * c2 % self.nsquare)


@dataclass(frozen=True)
class PrivateKey:
    """Private key holding the factors; decryption and owner-side encryption
    both work modulo p^2 and q^2 and recombine with the CRT."""

    public_key: PublicKey
    p: int
    q: int

    def __post_init__(self):
        p, q, n = gmpy2.mpz(self.p), gmpy2.mpz(self.q), gmpy2.mpz(self.public_key.n)
        object.__setattr__(self, "_psq", p * p)
        object.__setattr__(self, "_qsq", q * q)
        object.__setattr__(self, "_hp", self._h(p, self._psq, n))
        object.__setattr__(self, "_hq", self._h(q, self._qsq, n))
        object.__setattr__(self, "_qinv_p", gmpy2.invert(q, p))
        object.__setattr__(self, "_q2inv_p2", gmpy2.invert(self._qsq, self._psq))

    @staticmethod
    def _h(prime, prime_sq, n):
        x = gmpy2.powmod(n + 1, prime - 1, prime_sq)
        return gmpy2.invert((x - 1) // prime, prime)

    def _crt(self, mp, mq, mod_p, mod_q, inv):
        return mq + (mp - mq) * inv % mod_p * mod_q

    def decrypt(self, c: int) -> int:
        p, q = self.p, self.q
        mp = (gmpy2.powmod(c, p - 1, self._psq) - 1) // p * self._hp % p
        mq = (gmpy2.powmod(c, q - 1, self._qsq) - 1) // q * self._hq % q
        return int(self._crt(mp, mq, p, q, self._qinv_p))

    def encrypt(self, m: int) -> int:
        """Same distribution as :meth:`PublicKey.encrypt`, several times faster."""
        pk = self.public_key
        if not 0 <= m < pk.n:
            raise ValueError("plaintext out of range [0, n)")
        n = gmpy2.mpz(pk.n)
        r = secrets.randbelow(pk.n - 1) + 1
        p, q = self.p, self.q
        rp = gmpy2.powmod(r, n % (p * (p - 1)), self._psq)
        rq = gmpy2.powmod(r, n % (q * (q - 1)), self._qsq)
        rn = self._crt(rp, rq, self._psq, self._qsq, self._q2inv_p2)
        return int((1 + m * n) * rn % (n * n))


def _prime(stream, bits: int) -> int:
    while True:
        cand = int.from_bytes(stream(bits // 8), "big") | (3 << (bits - 2)) | 1
        p = int(gmpy2.next_prime(cand))
        if p.bit_length() == bits:
            return p


def keypair_from_seed(seed: bytes, bits: int = DEFAULT_BITS) -> tuple[PublicKey, PrivateKey]:
    counter = 0

    def stream(nbytes: int) -> bytes:
        nonlocal counter
        counter += 1
        return hashlib.shake_256(seed + counter.to_bytes(4, "big")).digest(nbytes)

    while True:
        p = _prime(stream, bits // 2)
        q = _prime(stream, bits // 2)
        n = p * q
        if p != q and n.bit_length() == bits:
            break
    pk = PublicKey(n)
    return pk, PrivateKey(pk, p, q)


def generate_keypair(bits: int = DEFAULT_BITS) -> tuple[PublicKey, PrivateKey]:
    return keypair_from_seed(secrets.token_bytes(32), bits)


def hom_encrypt(pk: PublicKey, m: int) -> int:
    return pk.encrypt(m)


def hom_add(pk: PublicKey, c1: int, c2: int) -> int:
    return pk.add(c1, c2)


def hom_decrypt(sk: PrivateKey, c: int) -> int:
    return sk.decrypt(c)
