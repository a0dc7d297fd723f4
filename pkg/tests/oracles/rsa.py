"""PKCS#1 v1.5 encryption and SHA-1 signatures with bare modular exponentiation."""

from .sha1 import sha1

# DER prefix of DigestInfo for SHA-1
SHA1_DIGEST_INFO = bytes.fromhex("3021300906052b0e03021a05000414")


def _k(n: int) -> int:
    return (n.bit_length() + 7) // 8


def i2osp(x: int, length: int) -> bytes:
    return x.to_bytes(length, "big")


def os2ip(octets: bytes) -> int:
    return int.from_bytes(octets, "big")


def encrypt(n: int, e: int, message: bytes, seed: bytes) -> bytes:
    """``seed`` supplies the nonzero padding string PS."""
    k = _k(n)
    if len(seed) != k - 3 - len(message) or 0 in seed:
        raise ValueError("seed must be k - 3 - mLen nonzero octets")
    em = b"\x00\x02" + seed + b"\x00" + message
    return i2osp(pow(os2ip(em), e, n), k)


def decrypt(n: int, d: int, ciphertext: bytes) -> bytes:
    k = _k(n)
    em = i2osp(pow(os2ip(ciphertext), d, n), k)
    if em[:2] != b"\x00\x02":
        raise ValueError("decryption error")
    sep = em.find(b"\x00", 2)
    if sep < 10:
        raise ValueError("decryption error")
    return em[sep + 1:]


def emsa_encode(message: bytes, k: int) -> bytes:
    t = SHA1_DIGEST_INFO + sha1(message)
    return b"\x00\x01" + b"\xff" * (k - len(t) - 3) + b"\x00" + t


def sign(n: int, d: int, message: bytes) -> bytes:
    k = _k(n)
    return i2osp(pow(os2ip(emsa_encode(message, k)), d, n), k)


def verify(n: int, e: int, message: bytes, signature: bytes) -> bool:
    k = _k(n)
    if len(signature) != k:
        return False
    return i2osp(pow(os2ip(signature), e, n), k) == emsa_encode(message, k)
