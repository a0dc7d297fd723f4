"""Block ciphers in CBC mode, RSA PKCS#1 v1.5 key transport, SHA1, RSA/DSA signatures.

Primitives run on OpenSSL through ``cryptography``; this module fixes the
algorithm matrix, key-size rules, padding, error mapping and the on-wire
encodings used by the WS-Security layer.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass
from enum import Enum

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.decrepit.ciphers.algorithms import IDEA, TripleDES
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives import padding as sympadding
from cryptography.hazmat.primitives.asymmetric import dsa, rsa
from cryptography.hazmat.primitives.asymmetric.padding import PKCS1v15
from cryptography.hazmat.primitives.asymmetric.utils import (
    decode_dss_signature,
    encode_dss_signature,
)
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from .errors import (
    DecryptionFailure,
    InvalidArgument,
    InvalidKey,
    KeyUnwrapFailure,
    MalformedCiphertext,
    UnsupportedAlgorithm,
)

XMLENC_NS = "http://www.w3.org/2001/04/xmlenc#"
XMLDSIG_NS = "http://www.w3.org/2000/09/xmldsig#"
RSA15_URI = XMLENC_NS + "rsa-1_5"

SYSTEM_RNG = random.SystemRandom()


class CipherAlg(Enum):
    # name, block bytes, key bytes, XML-Encryption algorithm URI
    DES_64 = ("des", 8, 8, XMLENC_NS + "des-cbc")
    TDES_192 = ("3des", 8, 24, XMLENC_NS + "tripledes-cbc")
    IDEA_128 = ("idea", 8, 16, XMLENC_NS + "idea-cbc")
    AES_128 = ("aes128", 16, 16, XMLENC_NS + "aes128-cbc")
    AES_192 = ("aes192", 16, 24, XMLENC_NS + "aes192-cbc")
    AES_256 = ("aes256", 16, 32, XMLENC_NS + "aes256-cbc")

    def __init__(self, label, block_size, key_length, uri):
        self.label = label
        self.block_size = block_size
        self.key_length = key_length
        self.uri = uri


class KeyTransportAlg(Enum):
    RSA15_1024 = ("rsa1024", 1024)
    RSA15_2048 = ("rsa2048", 2048)

    def __init__(self, label, modulus_bits):
        self.label = label
        self.modulus_bits = modulus_bits
        self.uri = RSA15_URI


class SignatureAlg(Enum):
    RSA_SHA1_1024 = ("rsa-sha1-1024", "RSA", 1024, XMLDSIG_NS + "rsa-sha1")
    RSA_SHA1_2048 = ("rsa-sha1-2048", "RSA", 2048, XMLDSIG_NS + "rsa-sha1")
    DSA_SHA1_1024 = ("dsa-sha1-1024", "DSA", 1024, XMLDSIG_NS + "dsa-sha1")

    def __init__(self, label, kind, bits, uri):
        self.label = label
        self.kind = kind
        self.bits = bits
        self.uri = uri

    @classmethod
    def for_key(cls, uri: str, kind: str, bits: int) -> SignatureAlg:
        for a in cls:
            if a.uri == uri and a.kind == kind and a.bits == bits:
                return a
        raise UnsupportedAlgorithm(f"no signature algorithm {uri} for {kind}-{bits}")


SHA1_URI = XMLDSIG_NS + "sha1"

_CIPHER_ALIASES = {
    "des": CipherAlg.DES_64, "des64": CipherAlg.DES_64,
    "3des": CipherAlg.TDES_192, "tdes": CipherAlg.TDES_192, "tripledes": CipherAlg.TDES_192,
    "des192": CipherAlg.TDES_192,
    "idea": CipherAlg.IDEA_128, "idea128": CipherAlg.IDEA_128,
    "aes128": CipherAlg.AES_128, "aes192": CipherAlg.AES_192, "aes256": CipherAlg.AES_256,
}


def cipher_by_name(name: str) -> CipherAlg:
    key = name.lower().replace("-", "").replace("_", "")
    if key == "idea256":
        raise UnsupportedAlgorithm("IDEA is only defined for 128-bit keys")
    try:
        return _CIPHER_ALIASES[key]
    except KeyError:
        raise UnsupportedAlgorithm(f"unknown cipher {name!r}") from None


def cipher_by_uri(uri: str) -> CipherAlg:
    for a in CipherAlg:
        if a.uri == uri:
            return a
    raise UnsupportedAlgorithm(f"unknown encryption method {uri!r}")


def transport_by_name(name: str) -> KeyTransportAlg:
    for a in KeyTransportAlg:
        if a.label == name.lower().replace("-", ""):
            return a
    raise UnsupportedAlgorithm(f"unknown key transport {name!r}")


def transport_by_bits(bits: int) -> KeyTransportAlg:
    for a in KeyTransportAlg:
        if a.modulus_bits == bits:
            return a
    raise UnsupportedAlgorithm(f"no RSA key transport with {bits}-bit modulus")


def signature_by_name(name: str) -> SignatureAlg:
    for a in SignatureAlg:
        if a.label == name.lower():
            return a
    if name.lower() in ("dsa-sha1-2048", "dsa-sha1-3072"):
        raise UnsupportedAlgorithm("DSA signing is limited to 1024-bit keys")
    raise UnsupportedAlgorithm(f"unknown signature algorithm {name!r}")


# -- key material -----------------------------------------------------------

@dataclass(frozen=True)
class SymmetricKey:
    alg: CipherAlg
    octets: bytes

    def __post_init__(self):
        if len(self.octets) != self.alg.key_length:
            raise InvalidKey(f"{self.alg.label} needs {self.alg.key_length} key octets, got {len(self.octets)}")

    def __repr__(self):
        return f"SymmetricKey({self.alg.label}, <{len(self.octets)} octets>)"


@dataclass(frozen=True)
class AsymmetricKeyPair:
    """An RSA or DSA key pair; ``private`` is None for a public-only handle."""

    kind: str
    bits: int
    public: rsa.RSAPublicKey | dsa.DSAPublicKey
    private: rsa.RSAPrivateKey | dsa.DSAPrivateKey | None = None
    owner: str = ""
    key_id: str = ""

    def __post_init__(self):
        expected = rsa.RSAPublicKey if self.kind == "RSA" else dsa.DSAPublicKey
        if self.kind not in ("RSA", "DSA") or not isinstance(self.public, expected):
            raise InvalidKey(f"public key does not match kind {self.kind!r}")
        if self.public.key_size != self.bits:
            raise InvalidKey(f"key is {self.public.key_size} bits, declared {self.bits}")
        if self.private is not None and (
            self.private.public_key().public_numbers() != self.public.public_numbers()
        ):
            raise InvalidKey("private key does not match public key")

    @property
    def modulus_bytes(self) -> int:
        return (self.bits + 7) // 8

    def public_only(self) -> AsymmetricKeyPair:
        return AsymmetricKeyPair(self.kind, self.bits, self.public, None, self.owner, self.key_id)

    def same_public(self, other: AsymmetricKeyPair) -> bool:
        return self.kind == other.kind and self.public.public_numbers() == other.public.public_numbers()

    def __repr__(self):
        priv = "+private" if self.private is not None else ""
        return f"AsymmetricKeyPair({self.kind}-{self.bits}{priv}, owner={self.owner!r}, id={self.key_id!r})"


SUPPORTED_KEYPAIRS = {("RSA", 1024), ("RSA", 2048), ("DSA", 1024)}


def generate_keypair(kind: str, bits: int, owner: str = "", key_id: str = "") -> AsymmetricKeyPair:
    if (kind, bits) not in SUPPORTED_KEYPAIRS:
        raise UnsupportedAlgorithm(f"{kind}-{bits} key pairs are not supported")
    if kind == "RSA":
        priv = rsa.generate_private_key(public_exponent=65537, key_size=bits)
    else:
        priv = dsa.generate_private_key(key_size=bits)
    return AsymmetricKeyPair(kind, bits, priv.public_key(), priv, owner, key_id)


def _set_odd_parity(octets: bytes) -> bytes:
    out = bytearray()
    for b in octets:
        b &= 0xFE
        if bin(b).count("1") % 2 == 0:
            b |= 1
        out.append(b)
    return bytes(out)


def gen_symmetric_key(alg: CipherAlg, rng: random.Random | None = None) -> SymmetricKey:
    octets = (rng or SYSTEM_RNG).randbytes(alg.key_length)
    if alg in (CipherAlg.DES_64, CipherAlg.TDES_192):
        octets = _set_odd_parity(octets)
    return SymmetricKey(alg, octets)


def gen_iv(alg: CipherAlg, rng: random.Random | None = None) -> bytes:
    return (rng or SYSTEM_RNG).randbytes(alg.block_size)


# -- block ciphers ----------------------------------------------------------

def _block_cipher(key: SymmetricKey):
    if key.alg is CipherAlg.DES_64:
        # EDE with K1 = K2 = K3 is single DES
        return TripleDES(key.octets * 3)
    if key.alg is CipherAlg.TDES_192:
        return TripleDES(key.octets)
    if key.alg is CipherAlg.IDEA_128:
        return IDEA(key.octets)
    return algorithms.AES(key.octets)


def _check(alg: CipherAlg, key: SymmetricKey, iv: bytes) -> None:
    if key.alg is not alg:
        raise InvalidKey(f"key is for {key.alg.label}, not {alg.label}")
    if len(iv) != alg.block_size:
        raise InvalidArgument(f"IV must be {alg.block_size} octets")


def encrypt_cbc(alg: CipherAlg, key: SymmetricKey, iv: bytes, plaintext: bytes) -> bytes:
    """PKCS#7-padded CBC encryption; the IV is not part of the output."""
    _check(alg, key, iv)
    padder = sympadding.PKCS7(alg.block_size * 8).padder()
    padded = padder.update(plaintext) + padder.finalize()
    enc = Cipher(_block_cipher(key), modes.CBC(iv)).encryptor()
    return enc.update(padded) + enc.finalize()


def decrypt_cbc(alg: CipherAlg, key: SymmetricKey, iv: bytes, ciphertext: bytes) -> bytes:
    _check(alg, key, iv)
    if not ciphertext or len(ciphertext) % alg.block_size:
        raise MalformedCiphertext(f"ciphertext length {len(ciphertext)} is not a positive multiple of {alg.block_size}")
    dec = Cipher(_block_cipher(key), modes.CBC(iv)).decryptor()
    padded = dec.update(ciphertext) + dec.finalize()
    unpadder = sympadding.PKCS7(alg.block_size * 8).unpadder()
    try:
        return unpadder.update(padded) + unpadder.finalize()
    except ValueError:
        raise DecryptionFailure("bad padding") from None


# -- RSA key transport ------------------------------------------------------

def wrap_key(pub: AsymmetricKeyPair, key: SymmetricKey) -> bytes:
    if pub.kind != "RSA":
        raise InvalidKey("key transport needs an RSA public key")
    if len(key.octets) + 11 > pub.modulus_bytes:
        raise InvalidArgument("symmetric key too long for the RSA modulus")
    return pub.public.encrypt(key.octets, PKCS1v15())


def unwrap_key(priv: AsymmetricKeyPair, wrapped: bytes, expected_alg: CipherAlg) -> SymmetricKey:
    if priv.kind != "RSA" or priv.private is None:
        raise InvalidKey("key unwrap needs an RSA private key")
    if len(wrapped) != priv.modulus_bytes:
        raise KeyUnwrapFailure()
    try:
        octets = priv.private.decrypt(wrapped, PKCS1v15())
    except ValueError:
        raise KeyUnwrapFailure() from None
    if len(octets) != expected_alg.key_length:
        raise KeyUnwrapFailure()
    return SymmetricKey(expected_alg, octets)


# -- digests and signatures -------------------------------------------------

def sha1(octets: bytes) -> bytes:
    return hashlib.sha1(octets).digest()


_DSA_PART = 20


def _check_signer(alg: SignatureAlg, key: AsymmetricKeyPair) -> None:
    if key.kind != alg.kind or key.bits != alg.bits:
        raise InvalidKey(f"{key.kind}-{key.bits} key cannot be used for {alg.label}")


def sign(alg: SignatureAlg, priv: AsymmetricKeyPair, octets: bytes) -> bytes:
    """RSA: PKCS#1 v1.5 over SHA1. DSA: fixed 40-octet r||s as in XML Signature."""
    _check_signer(alg, priv)
    if priv.private is None:
        raise InvalidKey("signing needs a private key")
    if alg.kind == "RSA":
        return priv.private.sign(octets, PKCS1v15(), hashes.SHA1())
    r, s = decode_dss_signature(priv.private.sign(octets, hashes.SHA1()))
    return r.to_bytes(_DSA_PART, "big") + s.to_bytes(_DSA_PART, "big")


def verify(alg: SignatureAlg, pub: AsymmetricKeyPair, octets: bytes, signature: bytes) -> bool:
    if pub.kind != alg.kind or pub.bits != alg.bits:
        return False
    try:
        if alg.kind == "RSA":
            if len(signature) != pub.modulus_bytes:
                return False
            pub.public.verify(signature, octets, PKCS1v15(), hashes.SHA1())
        else:
            if len(signature) != 2 * _DSA_PART:
                return False
            r = int.from_bytes(signature[:_DSA_PART], "big")
            s = int.from_bytes(signature[_DSA_PART:], "big")
            pub.public.verify(encode_dss_signature(r, s), octets, hashes.SHA1())
    except (InvalidSignature, ValueError):
        return False
    return True
