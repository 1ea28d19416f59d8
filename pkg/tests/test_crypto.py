import base64
import math
import random

import pytest
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes
from hypothesis import given, strategies as st

from cmdmask.crypto import det, ope, paillier
from cmdmask.crypto.keys import derive_keys, new_salt
from cmdmask.crypto.rnd import rnd_decrypt, rnd_encrypt
from cmdmask.errors import AuthFailure, DecryptFailure, EmptyPassword, InputTooLong

KS = derive_keys("test", bytes(16))
SMALL_HOM = paillier.keypair_from_seed(b"unit-test", bits=512)


# -- key derivation ----------------------------------------------------------


def test_golden_key_vector():
    assert KS.det_key.hex() == "19c2199ac90b21ff19fef5da311b03a7"
    assert KS.ope_key.hex() == "bf11ee0bb797a2ba44adb919ffb496d6"
    assert KS.rnd_key.hex() == "39544fc35c3ff69469014c42495eab93"
    assert KS.hom_seed.hex() == ("2d2038835553a157547b121ad11566c1"
                                 "08e8e6448900dd637c6a8b12bde87862")


def test_golden_ciphertexts():
    assert det.det_encrypt(KS.det_key, b"bob") == b"PVsFHyrHist5PaHFUYRSJQ=="
    assert ope.ope_encrypt(KS.ope_key, b"bob") == b"MknZlD9mWdLQs9gywDlbld9WhNUIfd9K"


def test_kdf_determinism_and_salts():
    assert derive_keys("test", bytes(16)) == KS
    other = derive_keys("test", bytes(15) + b"\1")
    assert other.det_key != KS.det_key and other.ope_key != KS.ope_key
    assert derive_keys(b"test", bytes(16)) == KS
    assert len(new_salt()) == 16 and new_salt() != new_salt()


def test_empty_password():
    with pytest.raises(EmptyPassword):
        derive_keys("", bytes(16))


def test_keyset_repr_hides_keys():
    assert KS.det_key.hex() not in repr(KS)


# -- DET ---------------------------------------------------------------------


def _aes(key, block, decrypt=False):
    c = Cipher(algorithms.AES(key), modes.ECB())
    ctx = c.decryptor() if decrypt else c.encryptor()
    return ctx.update(block) + ctx.finalize()


def _xor(a, b):
    return bytes(x ^ y for x, y in zip(a, b))


def _double(b):
    x = int.from_bytes(b, "big") << 1
    if x >> 128:
        x = (x ^ 0x87) & ((1 << 128) - 1)
    return x.to_bytes(16, "big")


def cmc_reference(key, msg):
    """Block-at-a-time CMC (Halevi-Rogaway) encryption with PKCS#7 padding."""
    k1, k2 = det._subkey(key, b"block"), det._subkey(key, b"tweak")
    t = _aes(k2, det._TWEAK)
    pad = 16 - len(msg) % 16
    p = msg + bytes([pad]) * pad
    blocks = [p[i:i + 16] for i in range(0, len(p), 16)]
    m = len(blocks)
    ppp, prev = [], t
    for pb in blocks:
        prev = _aes(k1, _xor(pb, prev))
        ppp.append(prev)
    mask = _double(_xor(ppp[0], ppp[-1]))
    ccc = [_xor(ppp[m - 1 - i], mask) for i in range(m)]
    out, prev = [], bytes(16)
    for i in range(m):
        cc = _aes(k1, ccc[i])
        out.append(_xor(cc, prev))
        prev = ccc[i]
    out[0] = _xor(out[0], t)
    return b"".join(out)


@given(st.binary(min_size=1, max_size=80))
def test_det_matches_reference_cmc(m):
    raw = det.det_cipher(KS.det_key).encrypt_raw_many([m])[0]
    assert raw == cmc_reference(KS.det_key, m)


@given(st.binary(min_size=1, max_size=1024))
def test_det_roundtrip_and_determinism(m):
    c = det.det_encrypt(KS.det_key, m)
    assert c == det.det_encrypt(KS.det_key, m)
    assert det.det_decrypt(KS.det_key, c) == m


def test_det_length_is_padded_blocks_in_base64():
    expected = {1: 24, 10: 24, 15: 24, 16: 44, 17: 44, 31: 44, 32: 64}
    for n, chars in expected.items():
        assert len(det.det_encrypt(KS.det_key, b"x" * n)) == chars


def test_det_no_collisions_10k():
    msgs = [b"%d" % i for i in range(10_000)]
    cts = det.det_cipher(KS.det_key).encrypt_many(msgs)
    assert len(set(cts)) == 10_000
    assert det.det_cipher(KS.det_key).decrypt_many(cts) == msgs


def test_det_wide_block_diffusion():
    # changing the last byte changes every block of a multi-block ciphertext
    a = det.det_cipher(KS.det_key).encrypt_raw_many([b"a" * 40])[0]
    b = det.det_cipher(KS.det_key).encrypt_raw_many([b"a" * 39 + b"b"])[0]
    assert all(a[i:i + 16] != b[i:i + 16] for i in range(0, len(a), 16))


def test_det_wrong_key_and_garbage():
    c = det.det_encrypt(KS.det_key, b"bob")
    with pytest.raises(DecryptFailure):
        det.det_decrypt(derive_keys("other", bytes(16)).det_key, c)
    with pytest.raises(DecryptFailure):
        det.det_decrypt(KS.det_key, b"not base64!")
    with pytest.raises(DecryptFailure):
        det.det_decrypt(KS.det_key, base64.b64encode(b"short"))
    with pytest.raises(ValueError):
        det.det_encrypt(KS.det_key, b"")


# -- OPE ---------------------------------------------------------------------


def test_ope_examples():
    ca, cb = ope.ope_encrypt(KS.ope_key, b"a"), ope.ope_encrypt(KS.ope_key, b"b")
    assert ca < cb
    assert ope.ope_decrypt(KS.ope_key, ca) == b"a"
    assert len(ca) == 32


def test_ope_sort_oracle():
    rng = random.Random(7)
    words = [bytes(rng.randrange(256) for _ in range(rng.randint(1, 16))) for _ in range(1000)]
    cts = ope.ope_cipher(KS.ope_key).encrypt_many(words)
    assert sorted(cts) == ope.ope_cipher(KS.ope_key).encrypt_many(sorted(words))
    assert ope.ope_cipher(KS.ope_key).decrypt_many(cts) == words


@given(st.binary(min_size=1, max_size=16), st.binary(min_size=1, max_size=16))
def test_ope_order_pairs(a, b):
    ca, cb = ope.ope_encrypt(KS.ope_key, a), ope.ope_encrypt(KS.ope_key, b)
    assert (a < b) == (ca < cb) and (a == b) == (ca == cb)


def test_ope_plaintext_encoding_preserves_order_with_prefixes():
    vals = [b"a", b"a\x00", b"a\x00\x00", b"a\x01", b"ab", b"b", b"\xff" * 16]
    enc = [ope.encode_plaintext(v) for v in vals]
    assert enc == sorted(enc) and len(set(enc)) == len(enc)
    assert all(ope.decode_plaintext(e) == v for e, v in zip(enc, vals))


def test_ope_text_order_matches_integer_order():
    rng = random.Random(1)
    ints = sorted(rng.randrange(ope.RANGE) for _ in range(500))
    texts = [ope.to_text(i) for i in ints]
    assert texts == sorted(texts)
    assert [ope.from_text(t) for t in texts] == ints


def test_ope_errors():
    with pytest.raises(InputTooLong):
        ope.ope_encrypt(KS.ope_key, b"x" * 17)
    c = ope.ope_encrypt(KS.ope_key, b"bob")
    with pytest.raises(DecryptFailure):
        ope.ope_decrypt(derive_keys("other", bytes(16)).ope_key, c)
    with pytest.raises(DecryptFailure):
        ope.ope_decrypt(KS.ope_key, c[:-1])


def test_ope_split_is_within_bounds():
    cipher = ope.ope_cipher(KS.ope_key)
    rng = random.Random(2)
    for _ in range(200):
        m = rng.randint(1, 10 ** 6)
        n = rng.randint(m, 3 * 10 ** 6)
        k = cipher._split(0, m - 1, 0, n - 1)
        left = n // 2
        assert max(0, m - (n - left)) <= k <= min(m, left)


# -- RND ---------------------------------------------------------------------


def test_rnd_roundtrip_and_freshness():
    c1, c2 = rnd_encrypt(KS.rnd_key, b"hello"), rnd_encrypt(KS.rnd_key, b"hello")
    assert c1 != c2
    assert rnd_decrypt(KS.rnd_key, c1) == rnd_decrypt(KS.rnd_key, c2) == b"hello"


def test_rnd_rejects_tampering():
    rng = random.Random(3)
    c = base64.b64decode(rnd_encrypt(KS.rnd_key, b"attack at dawn"))
    for _ in range(200):
        bit = rng.randrange(len(c) * 8)
        bad = bytearray(c)
        bad[bit // 8] ^= 1 << (bit % 8)
        with pytest.raises(AuthFailure):
            rnd_decrypt(KS.rnd_key, base64.b64encode(bytes(bad)))
    for junk in (b"", b"!!", base64.b64encode(c[:20])):
        with pytest.raises(AuthFailure):
            rnd_decrypt(KS.rnd_key, junk)


# -- HOM+ --------------------------------------------------------------------


def textbook_decrypt(pk, sk, c):
    lam = math.lcm(sk.p - 1, sk.q - 1)
    n2 = pk.n * pk.n
    L = lambda x: (x - 1) // pk.n  # noqa: E731
    mu = pow(L(pow(pk.n + 1, lam, n2)), -1, pk.n)
    return L(pow(c, lam, n2)) * mu % pk.n


def test_hom_examples():
    pk, sk = SMALL_HOM
    assert paillier.hom_decrypt(sk, paillier.hom_add(pk, paillier.hom_encrypt(pk, 2),
                                                     paillier.hom_encrypt(pk, 3))) == 5
    c = paillier.hom_encrypt(pk, 42)
    assert paillier.hom_decrypt(sk, pk.add(c, pk.encrypt(0))) == 42


def test_hom_random_pairs_against_textbook():
    pk, sk = SMALL_HOM
    rng = random.Random(4)
    for _ in range(100):
        a, b = rng.randrange(2 ** 64), rng.randrange(2 ** 64)
        c = pk.add(pk.encrypt(a), sk.encrypt(b))
        assert sk.decrypt(c) == a + b == textbook_decrypt(pk, sk, c)


def test_hom_randomized():
    pk, _ = SMALL_HOM
    assert pk.encrypt(7) != pk.encrypt(7)


def test_hom_keypair_deterministic_and_full_size():
    pk, sk = KS.hom_keypair
    assert pk.n.bit_length() == 2048
    assert sk.p * sk.q == pk.n
    assert paillier.keypair_from_seed(b"unit-test", bits=512)[0] == SMALL_HOM[0]
    with pytest.raises(ValueError):
        pk.encrypt(pk.n)
