"""Hybrid cryptography: AES-128-CBC for data, ECIES-style encapsulation for the session key.

All randomness comes from an explicitly passed ``numpy.random.Generator`` so
that every ciphertext is reproducible for a fixed seed.
"""
from __future__ import annotations

import hashlib
import hmac
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from cryptography.hazmat.primitives import hashes, padding
from cryptography.hazmat.primitives.asymmetric import ec
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes
from cryptography.hazmat.primitives.kdf.hkdf import HKDF
from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat

BLOCK_BYTES = 16
KEY_BYTES = 16
CHECK_BYTES = 4
TAG_BYTES = 8

CURVE = ec.SECP256R1()
CURVE_NAME = "secp256r1"
CURVE_ORDER = 0xFFFFFFFF00000000FFFFFFFFFFFFFFFFBCE6FAADA7179E84F3B9CAC2FC632551
POINT_BYTES = 33  # SEC1 compressed encoding
CIPHER_MODE = "AES-128-CBC/PKCS7 + 32-bit SHA-256 check value"
KEM_SCHEME = f"ECIES({CURVE_NAME}, HKDF-SHA256, XOR wrap, HMAC-SHA256/64)"

# Symmetric key size (bits) -> comparable asymmetric key sizes, after NIST SP 800-57.
KEY_SIZE_TABLE = {
    56: {"ECC": "112-159", "Rabin": 512, "RSA": 512},
    80: {"ECC": "160-223", "Rabin": 1024, "RSA": 1024},
    112: {"ECC": "224-255", "Rabin": 2048, "RSA": 2048},
    128: {"ECC": "256-383", "Rabin": 3072, "RSA": 3072},
    192: {"ECC": "384-511", "Rabin": 7680, "RSA": 7680},
    256: {"ECC": "512+", "Rabin": 15360, "RSA": 15360},
}


class IntegrityFailure(Exception):
    """Wrong key, tampered ciphertext or malformed encoding."""


def equivalent_key_sizes(aes_bits: int) -> dict:
    return dict(KEY_SIZE_TABLE[aes_bits])


@dataclass(frozen=True)
class SymKey:
    key: bytes

    def __post_init__(self):
        if len(self.key) != KEY_BYTES:
            raise ValueError("SymKey must be exactly 128 bits")

    @classmethod
    def generate(cls, rng: np.random.Generator) -> "SymKey":
        return cls(rng.bytes(KEY_BYTES))


@dataclass(frozen=True)
class SymCiphertext:
    iv: bytes
    blocks: bytes

    @property
    def bit_length(self) -> int:
        return 8 * (len(self.iv) + len(self.blocks))

    def raw(self) -> bytes:
        return self.iv + self.blocks

    def to_bytes(self) -> bytes:
        body = self.raw()
        return len(body).to_bytes(2, "big") + body

    @classmethod
    def from_raw(cls, data: bytes) -> "SymCiphertext":
        return cls(bytes(data[:BLOCK_BYTES]), bytes(data[BLOCK_BYTES:]))

    @classmethod
    def from_bytes(cls, data: bytes) -> "SymCiphertext":
        n = int.from_bytes(data[:2], "big")
        if len(data) != n + 2:
            raise IntegrityFailure("length prefix mismatch")
        return cls.from_raw(data[2:])


@dataclass(frozen=True)
class KemCiphertext:
    ephemeral_point: bytes
    wrapped_payload: bytes
    auth_tag: bytes

    @property
    def bit_length(self) -> int:
        return 8 * len(self.raw())

    def raw(self) -> bytes:
        return self.ephemeral_point + self.wrapped_payload + self.auth_tag

    def to_bytes(self) -> bytes:
        body = self.raw()
        return len(body).to_bytes(2, "big") + body

    @classmethod
    def from_raw(cls, data: bytes) -> "KemCiphertext":
        if len(data) < POINT_BYTES + TAG_BYTES:
            raise IntegrityFailure("KEM ciphertext too short")
        return cls(
            bytes(data[:POINT_BYTES]),
            bytes(data[POINT_BYTES:-TAG_BYTES]),
            bytes(data[-TAG_BYTES:]),
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "KemCiphertext":
        n = int.from_bytes(data[:2], "big")
        if len(data) != n + 2:
            raise IntegrityFailure("length prefix mismatch")
        return cls.from_raw(data[2:])


@dataclass(frozen=True)
class CurveKeyPair:
    private_scalar: int
    public_point: bytes


def _check_value(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()[:CHECK_BYTES]


def sym_ciphertext_bits(plaintext_bytes: int) -> int:
    """On-air size of ``sym_encrypt`` output for a plaintext of the given length."""
    n_blocks = (plaintext_bytes + CHECK_BYTES) // BLOCK_BYTES + 1
    return 8 * BLOCK_BYTES * (1 + n_blocks)


def kem_ciphertext_bits(payload_bytes: int) -> int:
    return 8 * (POINT_BYTES + payload_bytes + TAG_BYTES)


def sym_encrypt(key: SymKey, plaintext: bytes, rng: np.random.Generator, *, iv: bytes | None = None) -> SymCiphertext:
    """CBC-encrypt ``plaintext`` under a fresh random IV.

    A truncated SHA-256 of the plaintext is appended before padding so that a
    wrong key is reported as :class:`IntegrityFailure` instead of garbage.
    Passing ``iv`` explicitly is only meant for weakened test variants.
    """
    if not plaintext:
        raise ValueError("plaintext must be non-empty")
    if iv is None:
        iv = rng.bytes(BLOCK_BYTES)
    padder = padding.PKCS7(8 * BLOCK_BYTES).padder()
    body = padder.update(plaintext + _check_value(plaintext)) + padder.finalize()
    enc = Cipher(algorithms.AES(key.key), modes.CBC(iv)).encryptor()
    return SymCiphertext(iv, enc.update(body) + enc.finalize())


def sym_decrypt(key: SymKey, ct: SymCiphertext) -> bytes:
    if len(ct.iv) != BLOCK_BYTES or not ct.blocks or len(ct.blocks) % BLOCK_BYTES:
        raise IntegrityFailure("malformed symmetric ciphertext")
    dec = Cipher(algorithms.AES(key.key), modes.CBC(ct.iv)).decryptor()
    body = dec.update(ct.blocks) + dec.finalize()
    unpadder = padding.PKCS7(8 * BLOCK_BYTES).unpadder()
    try:
        body = unpadder.update(body) + unpadder.finalize()
    except ValueError as exc:
        raise IntegrityFailure("bad padding") from exc
    if len(body) <= CHECK_BYTES:
        raise IntegrityFailure("plaintext too short")
    plaintext, check = body[:-CHECK_BYTES], body[-CHECK_BYTES:]
    if not hmac.compare_digest(check, _check_value(plaintext)):
        raise IntegrityFailure("check value mismatch")
    return plaintext


def _random_scalar(rng: np.random.Generator) -> int:
    # 64 extra bits make the modular bias negligible
    return int.from_bytes(rng.bytes(40), "big") % (CURVE_ORDER - 1) + 1


@lru_cache(maxsize=256)
def _private_key(scalar: int) -> ec.EllipticCurvePrivateKey:
    return ec.derive_private_key(scalar, CURVE)


def _encode_point(key: ec.EllipticCurvePublicKey) -> bytes:
    return key.public_bytes(Encoding.X962, PublicFormat.CompressedPoint)


@lru_cache(maxsize=256)
def _decode_point(data: bytes) -> ec.EllipticCurvePublicKey:
    try:
        return ec.EllipticCurvePublicKey.from_encoded_point(CURVE, data)
    except ValueError as exc:
        raise IntegrityFailure("invalid curve point") from exc


def public_point(scalar: int) -> bytes:
    if not 1 <= scalar < CURVE_ORDER:
        raise ValueError("scalar out of range")
    return _encode_point(_private_key(scalar).public_key())


def kem_keygen(rng: np.random.Generator) -> CurveKeyPair:
    scalar = _random_scalar(rng)
    return CurveKeyPair(scalar, public_point(scalar))


def _derive(shared: bytes, eph: bytes, n: int) -> tuple[bytes, bytes]:
    okm = HKDF(hashes.SHA256(), length=n + 32, salt=eph, info=b"rfid-hybrid-kem").derive(shared)
    return okm[:n], okm[n:]


def _mac(mac_key: bytes, eph: bytes, wrapped: bytes) -> bytes:
    return hmac.new(mac_key, eph + wrapped, hashlib.sha256).digest()[:TAG_BYTES]


def kem_encapsulate(pk: bytes, payload: bytes, rng: np.random.Generator) -> KemCiphertext:
    eph_key = ec.derive_private_key(_random_scalar(rng), CURVE)
    eph = _encode_point(eph_key.public_key())
    shared = eph_key.exchange(ec.ECDH(), _decode_point(pk))
    wrap_key, mac_key = _derive(shared, eph, len(payload))
    wrapped = bytes(a ^ b for a, b in zip(payload, wrap_key))
    return KemCiphertext(eph, wrapped, _mac(mac_key, eph, wrapped))


def kem_decapsulate(sk: int, ct: KemCiphertext) -> bytes:
    if len(ct.ephemeral_point) != POINT_BYTES or len(ct.auth_tag) != TAG_BYTES:
        raise IntegrityFailure("malformed KEM ciphertext")
    shared = _private_key(sk).exchange(ec.ECDH(), _decode_point(ct.ephemeral_point))
    wrap_key, mac_key = _derive(shared, ct.ephemeral_point, len(ct.wrapped_payload))
    if not hmac.compare_digest(ct.auth_tag, _mac(mac_key, ct.ephemeral_point, ct.wrapped_payload)):
        raise IntegrityFailure("authentication tag mismatch")
    return bytes(a ^ b for a, b in zip(ct.wrapped_payload, wrap_key))
