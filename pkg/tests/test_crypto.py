import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rfidsim import crypto
from rfidsim.crypto import IntegrityFailure, SymKey

# P-256 domain parameters, typed in from the published curve definition rather
# than taken from the library under test.
P = 2**256 - 2**224 + 2**192 + 2**96 - 1
A = P - 3
B = 0x5AC635D8AA3A93E7B3EBBD55769886BC651D06B0CC53B0F63BCE3C3E27D2604B
N = 0xFFFFFFFF00000000FFFFFFFFFFFFFFFFBCE6FAADA7179E84F3B9CAC2FC632551
GX = 0x6B17D1F2E12C4247F8BCE6E563A440F277037D812DEB33A0F4A13945D898C296


def decompress(point: bytes) -> tuple[int, int]:
    assert point[0] in (2, 3) and len(point) == 33
    x = int.from_bytes(point[1:], "big")
    rhs = (x**3 + A * x + B) % P
    y = pow(rhs, (P + 1) // 4, P)  # P is 3 mod 4
    assert y * y % P == rhs, "x is not on the curve"
    if y % 2 != point[0] - 2:
        y = P - y
    return x, y


def flips(data: bytes):
    for i in range(8 * len(data)):
        b = bytearray(data)
        b[i // 8] ^= 1 << (i % 8)
        yield bytes(b)


def test_curve_constants_match_reference():
    assert crypto.CURVE_ORDER == N
    assert crypto.POINT_BYTES == 33


def test_generator_point_from_scalar_one():
    x, _ = decompress(crypto.public_point(1))
    assert x == GX


@given(st.integers(min_value=1, max_value=N - 1))
def test_public_points_lie_on_curve(scalar):
    x, y = decompress(crypto.public_point(scalar))
    assert (y * y - (x**3 + A * x + B)) % P == 0


def test_scalar_out_of_range():
    for bad in (0, N):
        with pytest.raises(ValueError):
            crypto.public_point(bad)


def test_aes_block_matches_fips197_vector(rng):
    # with a zero IV, the first CBC block is the raw AES block encryption
    key = SymKey(bytes(range(16)))
    pt = bytes.fromhex("00112233445566778899aabbccddeeff")
    ct = crypto.sym_encrypt(key, pt, rng, iv=bytes(16))
    assert ct.blocks[:16].hex() == "69c4e0d86a7b0430d8cdb78070b4c55a"


@given(st.integers(min_value=1, max_value=200))
def test_sym_size_matches_ceil_oracle(n):
    # PKCS7 always adds 1..16 bytes after the 4-byte check value, plus one IV block
    assert crypto.sym_ciphertext_bits(n) == 128 * math.ceil((8 * n + 40) / 128) + 128
    ct = crypto.sym_encrypt(SymKey(bytes(16)), bytes(n), np.random.default_rng(n))
    assert ct.bit_length == crypto.sym_ciphertext_bits(n)


@given(st.integers(min_value=1, max_value=100))
def test_kem_size(n):
    assert crypto.kem_ciphertext_bits(n) == 8 * (33 + n + 8)


def test_sym_roundtrip_10k():
    rng = np.random.default_rng(1)
    for _ in range(10_000):
        key = SymKey.generate(rng)
        pt = rng.bytes(int(rng.integers(1, 64)))
        assert crypto.sym_decrypt(key, crypto.sym_encrypt(key, pt, rng)) == pt


def test_kem_roundtrip_10k():
    rng = np.random.default_rng(2)
    keys = [crypto.kem_keygen(rng) for _ in range(8)]
    for i in range(10_000):
        kp = keys[i % len(keys)]
        payload = rng.bytes(20)
        ct = crypto.kem_encapsulate(kp.public_point, payload, rng)
        assert crypto.kem_decapsulate(kp.private_scalar, ct) == payload


@given(st.binary(min_size=1, max_size=80), st.binary(min_size=16, max_size=16))
def test_sym_roundtrip_property(pt, key):
    rng = np.random.default_rng(len(pt))
    k = SymKey(key)
    ct = crypto.sym_encrypt(k, pt, rng)
    assert crypto.sym_decrypt(k, crypto.SymCiphertext.from_bytes(ct.to_bytes())) == pt


def test_sym_every_single_bit_flip_rejected(rng):
    key = SymKey.generate(rng)
    for n in (1, 12, 44, 64):
        raw = crypto.sym_encrypt(key, rng.bytes(n), rng).raw()
        for mutated in flips(raw):
            with pytest.raises(IntegrityFailure):
                crypto.sym_decrypt(key, crypto.SymCiphertext.from_raw(mutated))


def test_kem_every_single_bit_flip_rejected(rng):
    kp = crypto.kem_keygen(rng)
    for _ in range(3):
        raw = crypto.kem_encapsulate(kp.public_point, rng.bytes(20), rng).raw()
        for mutated in flips(raw):
            with pytest.raises(IntegrityFailure):
                crypto.kem_decapsulate(kp.private_scalar, crypto.KemCiphertext.from_raw(mutated))


def test_wrong_keys_rejected(rng):
    ct = crypto.sym_encrypt(SymKey.generate(rng), b"payload", rng)
    with pytest.raises(IntegrityFailure):
        crypto.sym_decrypt(SymKey.generate(rng), ct)
    a, b = crypto.kem_keygen(rng), crypto.kem_keygen(rng)
    kct = crypto.kem_encapsulate(a.public_point, b"x" * 20, rng)
    with pytest.raises(IntegrityFailure):
        crypto.kem_decapsulate(b.private_scalar, kct)


def test_empty_plaintext_rejected(rng):
    with pytest.raises(ValueError):
        crypto.sym_encrypt(SymKey(bytes(16)), b"", rng)


def test_bad_key_length():
    with pytest.raises(ValueError):
        SymKey(bytes(15))


def test_encryption_is_randomised(rng):
    key = SymKey.generate(rng)
    assert crypto.sym_encrypt(key, b"same", rng).raw() != crypto.sym_encrypt(key, b"same", rng).raw()
    kp = crypto.kem_keygen(rng)
    assert crypto.kem_encapsulate(kp.public_point, b"same", rng) != crypto.kem_encapsulate(kp.public_point, b"same", rng)


def test_truncated_encodings(rng):
    ct = crypto.sym_encrypt(SymKey(bytes(16)), b"abc", rng).to_bytes()
    with pytest.raises(IntegrityFailure):
        crypto.SymCiphertext.from_bytes(ct[:-1])
    with pytest.raises(IntegrityFailure):
        crypto.KemCiphertext.from_raw(bytes(20))


def test_invalid_point_rejected(rng):
    kp = crypto.kem_keygen(rng)
    good = crypto.kem_encapsulate(kp.public_point, b"z" * 20, rng)
    bad = crypto.KemCiphertext(b"\x02" + b"\xff" * 32, good.wrapped_payload, good.auth_tag)
    with pytest.raises(IntegrityFailure):
        crypto.kem_decapsulate(kp.private_scalar, bad)


def test_key_size_table():
    assert crypto.equivalent_key_sizes(128) == {"ECC": "256-383", "Rabin": 3072, "RSA": 3072}
    assert crypto.equivalent_key_sizes(56)["RSA"] == 512
    assert set(crypto.KEY_SIZE_TABLE) == {56, 80, 112, 128, 192, 256}
