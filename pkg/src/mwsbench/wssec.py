"""WS-Security header processing: XML Encryption, XML Signature, encrypt-then-sign.

Layout of a fully secured message::

    Header/wsse:Security
        xenc:EncryptedKey      rsa-1_5 wrapped session key, DataReference -> #Id
        ds:Signature           SignedInfo(Reference #Id, sha1 digest), SignatureValue, KeyInfo
    Body
        xenc:EncryptedData Id  base64(IV || CBC ciphertext)

Digests and signatures cover the deterministic serialization produced by
:mod:`mwsbench.envelope`, not W3C canonical XML. As in inclusive
canonicalization, the referenced element is digested with every namespace
binding in scope declared on it, so rebinding a prefix breaks the digest.
Receivers check the security header's shape, verify, and only then decrypt.
"""

from __future__ import annotations

import base64
import binascii
import hmac
import random
import time
from dataclasses import dataclass, replace
from enum import Enum

from . import crypto
from .crypto import (
    RSA15_URI,
    SHA1_URI,
    AsymmetricKeyPair,
    CipherAlg,
    KeyTransportAlg,
    SignatureAlg,
)
from .envelope import (
    Element,
    Envelope,
    parse_element,
    serialize,
    serialize_element,
)
from .errors import (
    DataReferenceError,
    DecryptionFailure,
    InvalidArgument,
    InvalidKey,
    MalformedCiphertext,
    MalformedPlaintext,
    MalformedSignature,
    MwsError,
    NoSignature,
    NotFound,
    ParseError,
    ProtocolError,
    ScopeError,
    SerializationError,
    UnsupportedAlgorithm,
)
from .keys import KeyRing, key_from_value_element, key_value_element

WSSE_NS = "http://docs.oasis-open.org/wss/2004/01/oasis-200401-wss-wssecurity-secext-1.0.xsd"
WSU_NS = "http://docs.oasis-open.org/wss/2004/01/oasis-200401-wss-wssecurity-utility-1.0.xsd"
XENC_NS = crypto.XMLENC_NS
DSIG_NS = crypto.XMLDSIG_NS
XENC_ELEMENT_TYPE = XENC_NS + "Element"

ID_WIDTH = 9


class Mode(Enum):
    PLAIN = "plain"
    ENC = "enc"
    SIGN = "sign"
    ENC_SIGN = "encsign"

    @property
    def encrypts(self) -> bool:
        return self in (Mode.ENC, Mode.ENC_SIGN)

    @property
    def signs(self) -> bool:
        return self in (Mode.SIGN, Mode.ENC_SIGN)


@dataclass(frozen=True)
class SecurityPolicy:
    """What to apply to a message. ``scope`` None means the whole body child,
    otherwise the local name of the first matching element to encrypt."""

    mode: Mode = Mode.PLAIN
    cipher: CipherAlg | None = None
    key_transport: KeyTransportAlg | None = None
    signature: SignatureAlg | None = None
    scope: str | None = None
    reuse_transport_key_for_signing: bool = False

    def __post_init__(self):
        m = self.mode
        if m.encrypts and (self.cipher is None or self.key_transport is None):
            raise InvalidArgument(f"{m.value} needs both a cipher and a key transport")
        if m.signs and self.signature is None:
            raise InvalidArgument(f"{m.value} needs a signature algorithm")
        if not m.encrypts and self.cipher is not None:
            raise InvalidArgument(f"a cipher makes no sense in {m.value} mode")
        if not m.encrypts and self.scope is not None:
            raise InvalidArgument(f"an encryption scope makes no sense in {m.value} mode")
        if not m.signs and self.signature is not None:
            raise InvalidArgument(f"a signature algorithm makes no sense in {m.value} mode")
        if self.reuse_transport_key_for_signing:
            if self.signature is None or self.signature.kind != "RSA":
                raise InvalidArgument("transport key reuse needs an RSA signature")
            if self.key_transport is None:
                raise InvalidArgument("transport key reuse needs a key transport")
            if self.key_transport.modulus_bits != self.signature.bits:
                raise InvalidArgument("reused transport key and signature must have the same size")
        elif self.key_transport is not None and not m.encrypts:
            raise InvalidArgument(f"a key transport makes no sense in {m.value} mode")

    def describe(self) -> str:
        parts = [self.mode.value]
        if self.cipher:
            parts.append(self.cipher.label)
        if self.key_transport:
            parts.append(self.key_transport.label)
        if self.signature:
            parts.append(self.signature.label)
        if self.scope:
            parts.append(f"scope={self.scope}")
        if self.reuse_transport_key_for_signing:
            parts.append("reuse")
        return "/".join(parts)


# -- parsed blocks ----------------------------------------------------------

def _b64(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


def _unb64(text: str, err: type[MwsError]) -> bytes:
    try:
        data = base64.b64decode(text, validate=True)
    except (binascii.Error, ValueError):
        raise err("invalid base64 content") from None
    # reject non-canonical encodings (nonzero unused bits) so each value has one spelling
    if _b64(data) != text:
        raise err("non-canonical base64 content")
    return data


def _child(e: Element, *locals_: str) -> Element:
    for loc in locals_:
        c = e.find(loc)
        if c is not None:
            return c
    raise ProtocolError(f"{e.tag} has no {'/'.join(locals_)} child")


@dataclass(frozen=True)
class EncryptedKeyBlock:
    transport_alg: str
    cipher_value: str
    data_reference_uri: str

    @classmethod
    def from_element(cls, e: Element) -> EncryptedKeyBlock:
        method = _child(e, "EncryptedMethod", "EncryptionMethod")
        value = _child(_child(e, "CipherData"), "CipherValue")
        ref = _child(_child(e, "ReferenceList"), "DataReference")
        return cls(method.get("Algorithm", ""), value.text, ref.get("URI", ""))


@dataclass(frozen=True)
class EncryptedDataBlock:
    id: str
    cipher_alg: str
    cipher_value: str

    @classmethod
    def from_element(cls, e: Element) -> EncryptedDataBlock:
        method = _child(e, "EncryptionMethod")
        value = _child(_child(e, "CipherData"), "CipherValue")
        return cls(e.get("Id", ""), method.get("Algorithm", ""), value.text)


@dataclass(frozen=True)
class SignatureBlock:
    signature_method: str
    digest_method: str
    reference_uri: str
    digest_value: bytes
    signature_value: bytes
    key: AsymmetricKeyPair
    signed_info: Element

    @classmethod
    def from_element(cls, e: Element) -> SignatureBlock:
        try:
            si = _child(e, "SignedInfo")
            ref = _child(si, "Reference")
            key_value = _child(_child(_child(e, "KeyInfo"), "KeyValue"), "RSAKeyValue", "DSAKeyValue")
            block = cls(
                signature_method=_child(si, "SignatureMethod").get("Algorithm", ""),
                digest_method=_child(ref, "DigestMethod").get("Algorithm", ""),
                reference_uri=ref.get("URI", ""),
                digest_value=_unb64(_child(ref, "DigestValue").text, MalformedSignature),
                signature_value=_unb64(_child(e, "SignatureValue").text, MalformedSignature),
                key=key_from_value_element(key_value),
                signed_info=si,
            )
        except (ProtocolError, InvalidKey) as exc:
            raise MalformedSignature(str(exc)) from None
        if len(block.digest_value) != 20:
            raise MalformedSignature("digest value is not a SHA1 digest")
        return block


@dataclass
class UnsecureReport:
    """Outcome of processing an incoming message.

    ``envelope`` is only set when every applicable check passed.
    ``failure`` names the failing stage: "header", "signature",
    "decryption", "reference" or "plaintext".
    """

    detected_mode: Mode
    policy: SecurityPolicy | None = None
    signature_valid: bool | None = None
    decryption_ok: bool | None = None
    envelope: Envelope | None = None
    failure: str | None = None
    signer_key: AsymmetricKeyPair | None = None
    verify_us: int = 0
    decrypt_us: int = 0

    @property
    def ok(self) -> bool:
        return self.envelope is not None


# -- tree helpers -----------------------------------------------------------

def _bindings(scope: dict[str, str], attrs) -> dict[str, str]:
    out = scope
    for k, v in attrs:
        if k == "xmlns" or k.startswith("xmlns:"):
            if out is scope:
                out = dict(scope)
            out[k[6:] if k != "xmlns" else ""] = v
    return out


def _find_path(root: Element, pred) -> list[int] | None:
    if pred(root):
        return []
    for i, c in enumerate(root.children):
        sub = _find_path(c, pred)
        if sub is not None:
            return [i] + sub
    return None


def _at(root: Element, path: list[int]) -> Element:
    for i in path:
        root = root.children[i]
    return root


def _scope_at(root: Element, path: list[int], scope: dict[str, str]) -> dict[str, str]:
    scope = _bindings(scope, root.attrs)
    for i in path:
        root = root.children[i]
        scope = _bindings(scope, root.attrs)
    return scope


def _replace_at(root: Element, path: list[int], new: Element) -> Element:
    if not path:
        return new
    i = path[0]
    kids = list(root.children)
    kids[i] = _replace_at(kids[i], path[1:], new)
    return replace(root, children=tuple(kids))


def _used_ids(e: Envelope) -> set[str]:
    out = set()
    for x in e.elements():
        for k, v in x.attrs:
            if k == "Id" or k.endswith(":Id"):
                out.add(v)
    return out


def next_id(e: Envelope, rng: random.Random | None = None) -> str:
    """A fresh 9-digit Id: lowest unused counter value, or random when ``rng`` is given."""
    used = _used_ids(e)
    if rng is not None:
        while True:
            cand = str(rng.randrange(10 ** (ID_WIDTH - 1), 10 ** ID_WIDTH))
            if cand not in used:
                return cand
    n = 1
    while f"{n:0{ID_WIDTH}d}" in used:
        n += 1
    return f"{n:0{ID_WIDTH}d}"


def _security(e: Envelope) -> Element | None:
    return e.header("Security")


def _with_security(e: Envelope, sec: Element | None) -> Envelope:
    blocks = [h for h in e.header_blocks if h.local != "Security"]
    pos = next((i for i, h in enumerate(e.header_blocks) if h.local == "Security"), len(blocks))
    if sec is not None and sec.children:
        blocks.insert(pos, sec)
    return replace(e, header_blocks=tuple(blocks))


def _new_security(e: Envelope) -> Element:
    return Element(
        "wsse:Security",
        (("xmlns:wsse", WSSE_NS), (f"{e.prefix}:mustUnderstand", "1")),
    )


_BLOCK_NS = {"EncryptedKey": XENC_NS, "Signature": DSIG_NS}


def _ns(tag: str, scope: dict[str, str]) -> str | None:
    p, sep, _ = tag.rpartition(":")
    return scope.get(p if sep else "")


def _all_in_ns(e: Element, scope: dict[str, str], uri: str) -> bool:
    scope = _bindings(scope, e.attrs)
    return _ns(e.tag, scope) == uri and all(_all_in_ns(c, scope, uri) for c in e.children)


def check_security_header(e: Envelope) -> None:
    """Reject a Security header that differs in shape from the ones this module writes.

    The header must be a single wsse:Security marked mustUnderstand="1"
    whose blocks are EncryptedKey and/or Signature elements, each entirely
    in its own namespace.
    """
    blocks = [h for h in e.header_blocks if h.local == "Security"]
    if not blocks:
        return
    if len(blocks) > 1:
        raise ProtocolError("more than one Security header")
    sec = blocks[0]
    scope = _bindings(e.namespaces, sec.attrs)
    if _ns(sec.tag, scope) != WSSE_NS:
        raise ProtocolError("Security header is not in the WS-Security namespace")
    plain = [(k, v) for k, v in sec.attrs if k != "xmlns" and not k.startswith("xmlns:")]
    if len(plain) != 1 or plain[0][0].rpartition(":")[2] != "mustUnderstand" or plain[0][1] != "1" \
            or _ns(plain[0][0], scope) != e.namespaces.get(e.prefix):
        raise ProtocolError("Security header must carry only mustUnderstand=\"1\"")
    seen = set()
    for block in sec.children:
        uri = _BLOCK_NS.get(block.local)
        if uri is None or block.local in seen or not _all_in_ns(block, scope, uri):
            raise ProtocolError(f"unexpected Security block {block.tag!r}")
        seen.add(block.local)


def _append_to_security(e: Envelope, block: Element) -> Envelope:
    sec = _security(e) or _new_security(e)
    return _with_security(e, replace(sec, children=sec.children + (block,)))


def _remove_from_security(e: Envelope, local: str) -> Envelope:
    sec = _security(e)
    if sec is None:
        return e
    return _with_security(e, replace(sec, children=tuple(c for c in sec.children if c.local != local)))


def _single_body_child(e: Envelope) -> Element:
    if len(e.body_children) != 1:
        raise ScopeError(f"body must have exactly one child, has {len(e.body_children)}")
    return e.body_children[0]


# -- encryption -------------------------------------------------------------

def apply_encryption(
    e: Envelope,
    policy: SecurityPolicy,
    recipient_pub: AsymmetricKeyPair,
    rng: random.Random | None = None,
    random_ids: bool = False,
) -> Envelope:
    if not policy.mode.encrypts:
        raise InvalidArgument(f"policy mode {policy.mode.value} does not encrypt")
    sec = _security(e)
    if sec is not None and sec.find("EncryptedKey") is not None:
        raise InvalidArgument("message already carries an EncryptedKey")
    if recipient_pub.bits != policy.key_transport.modulus_bits:
        raise InvalidKey(f"recipient key is {recipient_pub.bits} bits, policy wants {policy.key_transport.label}")
    root = _single_body_child(e)
    if policy.scope is None:
        path = []
    else:
        path = _find_path(root, lambda x: x.local == policy.scope)
        if path is None:
            raise ScopeError(f"no element named {policy.scope!r} in the body")
    target = _at(root, path)
    scope = _scope_at(root, path[:-1], e.namespaces) if path else e.namespaces
    plaintext = serialize_element(target, scope)

    alg = policy.cipher
    key = crypto.gen_symmetric_key(alg, rng)
    iv = crypto.gen_iv(alg, rng)
    ciphertext = crypto.encrypt_cbc(alg, key, iv, plaintext)
    wrapped = crypto.wrap_key(recipient_pub, key)

    data_id = next_id(e, rng if random_ids else None)
    enc_data = Element(
        "xenc:EncryptedData",
        (("xmlns:xenc", XENC_NS), ("Id", data_id), ("Type", XENC_ELEMENT_TYPE)),
        (
            Element("xenc:EncryptionMethod", (("Algorithm", alg.uri),)),
            Element("xenc:CipherData", (), (Element("xenc:CipherValue", (), (), _b64(iv + ciphertext)),)),
        ),
    )
    enc_key = Element(
        "xenc:EncryptedKey",
        (("xmlns:xenc", XENC_NS),),
        (
            Element("xenc:EncryptedMethod", (("Algorithm", RSA15_URI),)),
            Element("xenc:CipherData", (), (Element("xenc:CipherValue", (), (), _b64(wrapped)),)),
            Element("xenc:ReferenceList", (), (Element("xenc:DataReference", (("URI", "#" + data_id),)),)),
        ),
    )
    out = replace(e, body_children=(_replace_at(root, path, enc_data),))
    return _append_to_security(out, enc_key)


def _encrypted_key(e: Envelope) -> EncryptedKeyBlock:
    sec = _security(e)
    blocks = [c for c in sec.children if c.local == "EncryptedKey"] if sec is not None else []
    if len(blocks) != 1:
        raise DataReferenceError(f"expected one EncryptedKey, found {len(blocks)}")
    try:
        return EncryptedKeyBlock.from_element(blocks[0])
    except ProtocolError as exc:
        raise DataReferenceError(str(exc)) from None


def decrypt_envelope(e: Envelope, recipient_priv: AsymmetricKeyPair) -> Envelope:
    ek = _encrypted_key(e)
    if ek.transport_alg != RSA15_URI:
        raise UnsupportedAlgorithm(f"key transport {ek.transport_alg!r}")
    if not ek.data_reference_uri.startswith("#"):
        raise DataReferenceError(f"unsupported DataReference {ek.data_reference_uri!r}")
    ref = ek.data_reference_uri[1:]
    root = _single_body_child(e)
    path = _find_path(root, lambda x: x.local == "EncryptedData" and x.get("Id") == ref)
    matches = sum(1 for x in root.iter() if x.local == "EncryptedData" and x.get("Id") == ref)
    if path is None or matches != 1:
        raise DataReferenceError(f"DataReference #{ref} does not resolve to exactly one EncryptedData")
    try:
        ed = EncryptedDataBlock.from_element(_at(root, path))
    except ProtocolError as exc:
        raise DataReferenceError(str(exc)) from None
    alg = crypto.cipher_by_uri(ed.cipher_alg)

    key = crypto.unwrap_key(recipient_priv, _unb64(ek.cipher_value, DecryptionFailure), alg)
    data = _unb64(ed.cipher_value, DecryptionFailure)
    if len(data) < 2 * alg.block_size:
        raise MalformedCiphertext("encrypted data shorter than IV plus one block")
    iv, ciphertext = data[: alg.block_size], data[alg.block_size:]
    plaintext = crypto.decrypt_cbc(alg, key, iv, ciphertext)
    try:
        restored = parse_element(plaintext)
    except (ParseError, ProtocolError) as exc:
        raise MalformedPlaintext(str(exc)) from None
    out = replace(e, body_children=(_replace_at(root, path, restored),))
    out = _remove_from_security(out, "EncryptedKey")
    try:
        serialize(out)
    except SerializationError as exc:
        raise MalformedPlaintext(str(exc)) from None
    return out


# -- signatures -------------------------------------------------------------

def _signed_info_octets(si: Element) -> bytes:
    return serialize_element(si, {"ds": DSIG_NS})


def _digest_input(child: Element, scope: dict[str, str]) -> bytes:
    """``child`` serialized with all inherited namespace bindings declared on it."""
    own = {k for k, _ in child.attrs}
    inherited = tuple(
        ("xmlns" if p == "" else f"xmlns:{p}", uri)
        for p, uri in sorted(scope.items())
        if ("xmlns" if p == "" else f"xmlns:{p}") not in own
    )
    return serialize_element(replace(child, attrs=inherited + child.attrs))


def _reference_target(e: Envelope) -> tuple[Element, str | None]:
    """The body child and the Id attribute name it is referenced by."""
    child = _single_body_child(e)
    if child.get("Id") is not None:
        return child, "Id"
    if child.get("wsu:Id") is not None:
        return child, "wsu:Id"
    return child, None


def apply_signature(
    e: Envelope,
    policy: SecurityPolicy,
    signer: AsymmetricKeyPair,
    rng: random.Random | None = None,
    random_ids: bool = False,
) -> Envelope:
    alg = policy.signature
    if alg is None or not policy.mode.signs:
        raise InvalidArgument(f"policy mode {policy.mode.value} does not sign")
    if alg not in SignatureAlg:
        raise UnsupportedAlgorithm(str(alg))
    sec = _security(e)
    if sec is not None and sec.find("Signature") is not None:
        raise InvalidArgument("message already carries a Signature")
    child, id_attr = _reference_target(e)
    if id_attr == "wsu:Id":
        raise InvalidArgument("body child already carries wsu:Id")
    if id_attr is None:
        ref_id = next_id(e, rng if random_ids else None)
        child = child.with_attr("xmlns:wsu", WSU_NS).with_attr("wsu:Id", ref_id)
        e = replace(e, body_children=(child,))
    else:
        ref_id = child.get("Id")

    digest = crypto.sha1(_digest_input(child, e.namespaces))
    signed_info = Element("ds:SignedInfo", (), (
        Element("ds:SignatureMethod", (("Algorithm", alg.uri),)),
        Element("ds:Reference", (("URI", "#" + ref_id),), (
            Element("ds:DigestMethod", (("Algorithm", SHA1_URI),)),
            Element("ds:DigestValue", (), (), _b64(digest)),
        )),
    ))
    sig_value = crypto.sign(alg, signer, _signed_info_octets(signed_info))
    signature = Element("ds:Signature", (("xmlns:ds", DSIG_NS),), (
        signed_info,
        Element("ds:SignatureValue", (), (), _b64(sig_value)),
        Element("ds:KeyInfo", (), (
            Element("ds:KeyValue", (), (key_value_element(signer, "ds"),)),
        )),
    ))
    return _append_to_security(e, signature)


def signature_block(e: Envelope) -> SignatureBlock:
    sec = _security(e)
    blocks = [c for c in sec.children if c.local == "Signature"] if sec is not None else []
    if not blocks:
        raise NoSignature("message carries no Signature")
    if len(blocks) > 1:
        raise MalformedSignature("more than one Signature")
    return SignatureBlock.from_element(blocks[0])


def verify_envelope(
    e: Envelope, pinned: list[AsymmetricKeyPair] | None = None
) -> tuple[bool, SignatureBlock]:
    """Check digest and signature against the embedded KeyInfo.

    With ``pinned``, the embedded key must also equal one of the given keys.
    """
    block = signature_block(e)
    try:
        child, id_attr = _reference_target(e)
    except ScopeError:
        return False, block
    if id_attr is None or block.reference_uri != "#" + child.get(id_attr):
        return False, block
    if block.digest_method != SHA1_URI:
        return False, block
    try:
        digest = crypto.sha1(_digest_input(child, e.namespaces))
        alg = SignatureAlg.for_key(block.signature_method, block.key.kind, block.key.bits)
    except (SerializationError, UnsupportedAlgorithm):
        return False, block
    if not hmac.compare_digest(digest, block.digest_value):
        return False, block
    if pinned is not None and not any(block.key.same_public(k) for k in pinned):
        return False, block
    return crypto.verify(alg, block.key, _signed_info_octets(block.signed_info), block.signature_value), block


def strip_signature(e: Envelope) -> Envelope:
    out = _remove_from_security(e, "Signature")
    child, id_attr = _reference_target(out)
    if id_attr == "wsu:Id":
        out = replace(out, body_children=(child.without_attrs("wsu:Id", "xmlns:wsu"),))
    return out


# -- composition ------------------------------------------------------------

def secure(
    e: Envelope,
    policy: SecurityPolicy,
    keys: KeyRing,
    rng: random.Random | None = None,
    random_ids: bool = False,
) -> Envelope:
    """Apply ``policy``: encryption first, then a signature over the result."""
    out = e
    if policy.mode.encrypts:
        out = apply_encryption(out, policy, keys.peer_transport_key(policy.key_transport), rng, random_ids)
    if policy.mode.signs:
        signer = keys.signer(policy.signature, policy.reuse_transport_key_for_signing)
        out = apply_signature(out, policy, signer, rng, random_ids)
    return out


def detect_mode(e: Envelope) -> Mode:
    sec = _security(e)
    enc = sec is not None and sec.find("EncryptedKey") is not None
    sig = sec is not None and sec.find("Signature") is not None
    if enc and sig:
        return Mode.ENC_SIGN
    return Mode.ENC if enc else Mode.SIGN if sig else Mode.PLAIN


def _detected_policy(mode, cipher, wrapped_bits, sig_alg, scope, reuse) -> SecurityPolicy | None:
    try:
        return SecurityPolicy(
            mode=mode,
            cipher=cipher,
            key_transport=crypto.transport_by_bits(wrapped_bits) if wrapped_bits else None,
            signature=sig_alg,
            scope=scope,
            reuse_transport_key_for_signing=reuse,
        )
    except (InvalidArgument, UnsupportedAlgorithm):
        return None


_DECRYPT_FAILURE_CLASS = (
    (DataReferenceError, "reference"),
    (ScopeError, "reference"),
    (MalformedPlaintext, "plaintext"),
    (DecryptionFailure, "decryption"),
    (MalformedCiphertext, "decryption"),
    (UnsupportedAlgorithm, "decryption"),
    (NotFound, "decryption"),
    (InvalidKey, "decryption"),
)
_DECRYPT_FAILURES = tuple(k for k, _ in _DECRYPT_FAILURE_CLASS)


def _us(t0: int) -> int:
    return (time.perf_counter_ns() - t0) // 1000


def unsecure(
    e: Envelope, keys: KeyRing, pinned: list[AsymmetricKeyPair] | None = None
) -> UnsecureReport:
    """Verify (if signed), then decrypt (if encrypted). Never raises for bad input."""
    mode = detect_mode(e)
    report = UnsecureReport(detected_mode=mode)
    sig_alg, reuse = None, False
    try:
        check_security_header(e)
    except ProtocolError:
        report.failure = "header"
        return report

    if mode.signs:
        t0 = time.perf_counter_ns()
        try:
            valid, block = verify_envelope(e, pinned)
        except (MalformedSignature, NoSignature):
            valid, block = False, None
        report.verify_us = _us(t0)
        report.signature_valid = valid
        if not valid:
            report.failure = "signature"
            return report
        report.signer_key = block.key
        sig_alg = SignatureAlg.for_key(block.signature_method, block.key.kind, block.key.bits)
        reuse = any(block.key.same_public(k) for k in keys.peer_transport.values())
        e = strip_signature(e)

    cipher, wrapped_bits, scope = None, None, None
    if mode.encrypts:
        t0 = time.perf_counter_ns()
        try:
            ek = _encrypted_key(e)
            wrapped = _unb64(ek.cipher_value, DecryptionFailure)
            priv = keys.decryption_key_for(len(wrapped))
            body_child = _single_body_child(e)
            whole = body_child.local == "EncryptedData"
            e = decrypt_envelope(e, priv)
            wrapped_bits = priv.bits
            enc_ref = ek.data_reference_uri[1:]
            cipher = crypto.cipher_by_uri(next(
                x for x in body_child.iter() if x.local == "EncryptedData" and x.get("Id") == enc_ref
            ).find("EncryptionMethod").get("Algorithm"))
            if not whole:
                scope = _changed_element(body_child, e.body_children[0])
            report.decryption_ok = True
        except _DECRYPT_FAILURES as exc:
            report.decryption_ok = False
            report.failure = next(v for k, v in _DECRYPT_FAILURE_CLASS if isinstance(exc, k))
            report.decrypt_us = _us(t0)
            return report
        report.decrypt_us = _us(t0)

    if reuse and wrapped_bits is None and sig_alg is not None and sig_alg.kind == "RSA":
        wrapped_bits = sig_alg.bits
    report.policy = _detected_policy(
        mode, cipher, wrapped_bits, sig_alg, scope, reuse and sig_alg is not None and sig_alg.kind == "RSA"
    )
    report.envelope = _with_security(e, _security(e))
    return report


def _changed_element(before: Element, after: Element) -> str | None:
    """Local name of the element that replaced an EncryptedData node."""
    if before.local == "EncryptedData":
        return after.local
    for b, a in zip(before.children, after.children):
        if b != a:
            return _changed_element(b, a)
    return None
