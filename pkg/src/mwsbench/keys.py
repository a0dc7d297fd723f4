"""Key XML documents and per-party key rings.

Public halves use the XML Signature ``RSAKeyValue`` (Modulus, Exponent) and
``DSAKeyValue`` (P, Q, G, Y) vocabulary with base64 big-endian integers.
Private halves add an ``RSAPrivateKey`` block (PrivateExponent, P, Q, DP,
DQ, InverseQ) or a ``DSAPrivateKey`` block (X). A ``KeyRecord`` document
wraps both for storage and for the identity provider's issue response::

    <KeyRecord xmlns="urn:mwsbench:keys" keyId="..." owner="..." kind="RSA" bits="1024" created="...">
      <RSAKeyValue>...</RSAKeyValue>
      <RSAPrivateKey>...</RSAPrivateKey>
    </KeyRecord>

A ``PublicKey`` document has the same attributes (minus ``created``) and
only the key-value element.
"""

from __future__ import annotations

import base64
import binascii
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from cryptography.hazmat.primitives.asymmetric import dsa, rsa

from .crypto import (
    AsymmetricKeyPair,
    KeyTransportAlg,
    SignatureAlg,
    generate_keypair,
    transport_by_bits,
)
from .envelope import Element, parse_element, serialize_element
from .errors import InvalidKey, NotFound, ProtocolError

KEYS_NS = "urn:mwsbench:keys"


def b64int(n: int, width: int = 0) -> str:
    """Base64 of the big-endian octets of ``n``, left-padded to ``width`` octets."""
    size = max(width, 1, (n.bit_length() + 7) // 8)
    return base64.b64encode(n.to_bytes(size, "big")).decode("ascii")


def int64(text: str | None) -> int:
    if text is None:
        raise ProtocolError("missing key field")
    text = text.strip()
    try:
        data = base64.b64decode(text, validate=True)
    except (binascii.Error, ValueError):
        raise ProtocolError("key field is not valid base64") from None
    # one spelling per value, as for every other base64 field
    if base64.b64encode(data).decode("ascii") != text:
        raise ProtocolError("key field is not canonical base64")
    return int.from_bytes(data, "big")


def _leaf(tag: str, n: int, width: int = 0) -> Element:
    return Element(tag, (), (), b64int(n, width))


def _q(prefix: str | None, local: str) -> str:
    return f"{prefix}:{local}" if prefix else local


def key_value_element(key: AsymmetricKeyPair, prefix: str | None = None) -> Element:
    """The public half as RSAKeyValue or DSAKeyValue (optionally prefixed)."""
    if key.kind == "RSA":
        n = key.public.public_numbers()
        return Element(_q(prefix, "RSAKeyValue"), (), (
            _leaf(_q(prefix, "Modulus"), n.n), _leaf(_q(prefix, "Exponent"), n.e)))
    n = key.public.public_numbers()
    p = n.parameter_numbers
    # G and Y padded to the width of P so message sizes do not depend on the key
    width = key.modulus_bytes
    return Element(_q(prefix, "DSAKeyValue"), (), (
        _leaf(_q(prefix, "P"), p.p), _leaf(_q(prefix, "Q"), p.q),
        _leaf(_q(prefix, "G"), p.g, width), _leaf(_q(prefix, "Y"), n.y, width)))


def _fields(e: Element) -> dict[str, str]:
    return {c.local: c.text for c in e.children}


def key_from_value_element(e: Element, owner: str = "", key_id: str = "") -> AsymmetricKeyPair:
    f = _fields(e)
    try:
        if e.local == "RSAKeyValue":
            pub = rsa.RSAPublicNumbers(int64(f.get("Exponent")), int64(f.get("Modulus"))).public_key()
            return AsymmetricKeyPair("RSA", pub.key_size, pub, None, owner, key_id)
        if e.local == "DSAKeyValue":
            params = dsa.DSAParameterNumbers(int64(f.get("P")), int64(f.get("Q")), int64(f.get("G")))
            pub = dsa.DSAPublicNumbers(int64(f.get("Y")), params).public_key()
            return AsymmetricKeyPair("DSA", pub.key_size, pub, None, owner, key_id)
    except ValueError as exc:
        raise InvalidKey(f"unusable key value: {exc}") from None
    raise ProtocolError(f"{e.tag!r} is not a key value element")


def _private_element(key: AsymmetricKeyPair) -> Element:
    if key.kind == "RSA":
        n = key.private.private_numbers()
        return Element("RSAPrivateKey", (), (
            _leaf("PrivateExponent", n.d), _leaf("P", n.p), _leaf("Q", n.q),
            _leaf("DP", n.dmp1), _leaf("DQ", n.dmq1), _leaf("InverseQ", n.iqmp)))
    return Element("DSAPrivateKey", (), (_leaf("X", key.private.private_numbers().x),))


def _head_attrs(key: AsymmetricKeyPair) -> list[tuple[str, str]]:
    return [("xmlns", KEYS_NS), ("keyId", key.key_id), ("owner", key.owner),
            ("kind", key.kind), ("bits", str(key.bits))]


def public_key_document(key: AsymmetricKeyPair) -> bytes:
    return serialize_element(Element("PublicKey", tuple(_head_attrs(key)), (key_value_element(key),)))


@dataclass(frozen=True)
class KeyRecord:
    key_id: str
    owner: str
    pair: AsymmetricKeyPair
    created_at: datetime = field(default_factory=lambda: datetime.now(timezone.utc))

    def __post_init__(self):
        if not self.owner:
            raise InvalidKey("key record owner must be non-empty")


def key_record_document(rec: KeyRecord) -> bytes:
    attrs = _head_attrs(rec.pair) + [("created", rec.created_at.isoformat())]
    children = [key_value_element(rec.pair)]
    if rec.pair.private is not None:
        children.append(_private_element(rec.pair))
    return serialize_element(Element("KeyRecord", tuple(attrs), tuple(children)))


def _load_private(kind: str, pub: AsymmetricKeyPair, priv_el: Element):
    f = _fields(priv_el)
    try:
        if kind == "RSA":
            return rsa.RSAPrivateNumbers(
                p=int64(f.get("P")), q=int64(f.get("Q")), d=int64(f.get("PrivateExponent")),
                dmp1=int64(f.get("DP")), dmq1=int64(f.get("DQ")), iqmp=int64(f.get("InverseQ")),
                public_numbers=pub.public.public_numbers(),
            ).private_key()
        return dsa.DSAPrivateNumbers(int64(f.get("X")), pub.public.public_numbers()).private_key()
    except ValueError as exc:
        raise InvalidKey(f"inconsistent private key: {exc}") from None


def parse_key_document(octets: bytes) -> KeyRecord:
    """Parse a KeyRecord or PublicKey document."""
    root = parse_element(octets)
    if root.local not in ("KeyRecord", "PublicKey"):
        raise ProtocolError(f"unexpected key document root {root.tag!r}")
    value = next((c for c in root.children if c.local in ("RSAKeyValue", "DSAKeyValue")), None)
    if value is None:
        raise ProtocolError("key document has no key value")
    owner, key_id = root.get("owner", ""), root.get("keyId", "")
    pub = key_from_value_element(value, owner, key_id)
    if pub.kind != root.get("kind") or str(pub.bits) != root.get("bits"):
        raise InvalidKey("declared kind/bits do not match the key value")
    priv_el = next((c for c in root.children if c.local in ("RSAPrivateKey", "DSAPrivateKey")), None)
    pair = pub
    if priv_el is not None:
        priv = _load_private(pub.kind, pub, priv_el)
        pair = AsymmetricKeyPair(pub.kind, pub.bits, pub.public, priv, owner, key_id)
    created = root.get("created")
    rec_created = datetime.fromisoformat(created) if created else datetime.now(timezone.utc)
    return KeyRecord(key_id or "-", owner or "-", pair, rec_created)


# -- key rings --------------------------------------------------------------

@dataclass
class KeyRing:
    """Everything one party holds: its own pairs and its peer's public keys.

    ``transport`` maps modulus bits to the party's own RSA key-transport
    pair, ``signing`` maps each signature algorithm to a dedicated signing
    pair, and ``peer_transport``/``peer_signing`` hold the other side's
    public halves.
    """

    owner: str = ""
    transport: dict[int, AsymmetricKeyPair] = field(default_factory=dict)
    signing: dict[SignatureAlg, AsymmetricKeyPair] = field(default_factory=dict)
    peer_transport: dict[int, AsymmetricKeyPair] = field(default_factory=dict)
    peer_signing: dict[SignatureAlg, AsymmetricKeyPair] = field(default_factory=dict)

    def own_transport(self, alg: KeyTransportAlg) -> AsymmetricKeyPair:
        try:
            return self.transport[alg.modulus_bits]
        except KeyError:
            raise NotFound(f"{self.owner or 'party'} has no {alg.label} transport key") from None

    def peer_transport_key(self, alg: KeyTransportAlg) -> AsymmetricKeyPair:
        try:
            return self.peer_transport[alg.modulus_bits]
        except KeyError:
            raise NotFound(f"no peer {alg.label} transport key") from None

    def signer(self, alg: SignatureAlg, reuse_transport: bool = False) -> AsymmetricKeyPair:
        if reuse_transport:
            if alg.kind != "RSA":
                raise InvalidKey("only RSA transport keys can be reused for signing")
            return self.own_transport(transport_by_bits(alg.bits))
        try:
            return self.signing[alg]
        except KeyError:
            raise NotFound(f"{self.owner or 'party'} has no {alg.label} signing key") from None

    def decryption_key_for(self, modulus_bytes: int) -> AsymmetricKeyPair:
        for pair in self.transport.values():
            if pair.modulus_bytes == modulus_bytes:
                return pair
        raise NotFound(f"no transport key with a {modulus_bytes}-octet modulus")

    def known_peer_keys(self) -> list[AsymmetricKeyPair]:
        return list(self.peer_transport.values()) + list(self.peer_signing.values())


def suite_owner(owner: str, label: str) -> str:
    """Registry name under which a party publishes one of its keys."""
    return f"{owner}.{label}"


def transport_label(bits: int) -> str:
    return f"transport-rsa{bits}"


def signing_label(alg: SignatureAlg) -> str:
    return f"sign-{alg.label}"


def generate_ring(owner: str, transport_bits=(1024, 2048), signatures=tuple(SignatureAlg)) -> KeyRing:
    """Generate a ring locally (tests and offline runs; services use the IdP)."""
    ring = KeyRing(owner)
    for bits in transport_bits:
        ring.transport[bits] = generate_keypair("RSA", bits, suite_owner(owner, transport_label(bits)))
    for alg in signatures:
        ring.signing[alg] = generate_keypair(alg.kind, alg.bits, suite_owner(owner, signing_label(alg)))
    return ring


def pair_rings(a: KeyRing, b: KeyRing) -> None:
    """Give each ring the other's public keys."""
    a.peer_transport = {k: v.public_only() for k, v in b.transport.items()}
    a.peer_signing = {k: v.public_only() for k, v in b.signing.items()}
    b.peer_transport = {k: v.public_only() for k, v in a.transport.items()}
    b.peer_signing = {k: v.public_only() for k, v in a.signing.items()}


# -- local key directories --------------------------------------------------

def save_record(directory: str | Path, rec: KeyRecord) -> Path:
    """Write one record as ``<owner>.xml``; owners are suite names like ``host.transport-rsa1024``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    path = d / f"{rec.owner}.xml"
    path.write_bytes(key_record_document(rec))
    return path


def save_ring(directory: str | Path, ring: KeyRing) -> None:
    for pair in list(ring.transport.values()) + list(ring.signing.values()):
        save_record(directory, KeyRecord(pair.key_id or pair.owner, pair.owner, pair))


def load_ring(directory: str | Path, owner: str) -> KeyRing:
    ring = KeyRing(owner)
    by_label = {signing_label(a): a for a in SignatureAlg}
    for path in sorted(Path(directory).glob(f"{owner}.*.xml")):
        label = path.name[len(owner) + 1:-len(".xml")]
        rec = parse_key_document(path.read_bytes())
        if rec.pair.private is None:
            continue
        if label.startswith("transport-rsa"):
            ring.transport[rec.pair.bits] = rec.pair
        elif label in by_label:
            ring.signing[by_label[label]] = rec.pair
    if not ring.transport and not ring.signing:
        raise NotFound(f"no private keys for {owner!r} in {directory}")
    return ring


def save_peer_keys(directory: str | Path, ring: KeyRing) -> None:
    """Write the peer public keys held by ``ring`` as ``<owner>.pub.xml``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for pair in list(ring.peer_transport.values()) + list(ring.peer_signing.values()):
        (d / f"{pair.owner}.pub.xml").write_bytes(public_key_document(pair))


def load_peer_keys(directory: str | Path, ring: KeyRing, peer: str) -> KeyRing:
    """Fill ``ring``'s peer tables from ``peer``'s key files (private or public) in ``directory``."""
    by_label = {signing_label(a): a for a in SignatureAlg}
    found = False
    for path in sorted(Path(directory).glob(f"{peer}.*.xml")):
        label = path.name[len(peer) + 1:-len(".xml")].removesuffix(".pub")
        pair = parse_key_document(path.read_bytes()).pair.public_only()
        if label.startswith("transport-rsa"):
            ring.peer_transport[pair.bits] = pair
            found = True
        elif label in by_label:
            ring.peer_signing[by_label[label]] = pair
            found = True
    if not found:
        raise NotFound(f"no keys for peer {peer!r} in {directory}")
    return ring
