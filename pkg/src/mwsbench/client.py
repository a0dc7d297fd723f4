"""Web-service requestor: one secured GPS invocation with a phase-level timing breakdown."""

from __future__ import annotations

import logging
import random
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from urllib.parse import quote

from .crypto import AsymmetricKeyPair, SignatureAlg
from .envelope import GpsFix, build_gps_request, parse, read_fault, read_gps_response, serialize
from .errors import (
    MwsError,
    NetworkError,
    NotFound,
    ParseError,
    ProtocolError,
    RemoteFault,
    SecurityError,
)
from .idp import issue_request_document
from .keys import KeyRecord, KeyRing, parse_key_document, signing_label, suite_owner, transport_label
from .wssec import SecurityPolicy, apply_encryption, apply_signature, unsecure

log = logging.getLogger(__name__)

PHASES = ("build", "encrypt_req", "sign_req", "transport", "verify_resp", "decrypt_resp", "total")
HOST_PHASES = ("unsecure_us", "process_us", "secure_us")


@dataclass
class InvocationResult:
    """One completed invocation. Durations are microseconds.

    ``processing_us`` is the full-cycle processing latency: client work
    (``total`` minus ``transport``) plus the host's reported phases. The
    loopback transport time is left out, like the radio delays it stands for.
    """

    fix: GpsFix
    request_id: int
    request_bytes: int
    response_bytes: int
    phases: dict[str, int]
    host_phases: dict[str, int] = field(default_factory=dict)

    @property
    def processing_us(self) -> int:
        client = self.phases["total"] - self.phases["transport"]
        return client + sum(self.host_phases.get(k, 0) for k in HOST_PHASES)


def _us(t0: int) -> int:
    return (time.perf_counter_ns() - t0) // 1000


def _parse_host_phases(header: str | None) -> dict[str, int]:
    out = {}
    for part in (header or "").split(","):
        k, sep, v = part.partition("=")
        if sep and v.strip().isdigit():
            out[k.strip()] = int(v)
    return out


def post(url: str, body: bytes, timeout: float = 30.0) -> tuple[int, bytes, dict[str, str]]:
    req = urllib.request.Request(url, data=body, method="POST", headers={"Content-Type": "text/xml; charset=utf-8"})
    try:
        with urllib.request.urlopen(req, timeout=timeout) as resp:
            return resp.status, resp.read(), dict(resp.headers)
    except urllib.error.HTTPError as exc:
        with exc:
            return exc.code, exc.read(), dict(exc.headers)
    except (urllib.error.URLError, OSError) as exc:
        raise NetworkError(f"POST {url} failed: {exc}") from None


def get(url: str, timeout: float = 30.0) -> tuple[int, bytes]:
    try:
        with urllib.request.urlopen(url, timeout=timeout) as resp:
            return resp.status, resp.read()
    except urllib.error.HTTPError as exc:
        with exc:
            return exc.code, exc.read()
    except (urllib.error.URLError, OSError) as exc:
        raise NetworkError(f"GET {url} failed: {exc}") from None


class Client:
    def __init__(
        self,
        keys: KeyRing,
        rng: random.Random | None = None,
        random_ids: bool = False,
        pin_host_keys: bool = False,
        timeout: float = 30.0,
    ):
        self.keys = keys
        self.rng = rng
        self.random_ids = random_ids
        self.pin_host_keys = pin_host_keys
        self.timeout = timeout

    def invoke(self, endpoint: str, policy: SecurityPolicy, size_kb: int) -> InvocationResult:
        phases = dict.fromkeys(PHASES, 0)
        start = time.perf_counter_ns()

        t0 = time.perf_counter_ns()
        envelope = build_gps_request(size_kb)
        phases["build"] = _us(t0)
        if policy.mode.encrypts:
            t0 = time.perf_counter_ns()
            envelope = apply_encryption(
                envelope, policy, self.keys.peer_transport_key(policy.key_transport), self.rng, self.random_ids
            )
            phases["encrypt_req"] = _us(t0)
        if policy.mode.signs:
            t0 = time.perf_counter_ns()
            signer = self.keys.signer(policy.signature, policy.reuse_transport_key_for_signing)
            envelope = apply_signature(envelope, policy, signer, self.rng, self.random_ids)
            phases["sign_req"] = _us(t0)
        t0 = time.perf_counter_ns()
        octets = serialize(envelope)
        phases["build"] += _us(t0)

        t0 = time.perf_counter_ns()
        status, body, headers = post(endpoint, octets, self.timeout)
        phases["transport"] = _us(t0)
        host_phases = _parse_host_phases(headers.get("X-Host-Phases"))

        try:
            response = parse(body)
        except (ParseError, ProtocolError) as exc:
            raise NetworkError(f"host returned HTTP {status} with a non-SOAP body: {exc}") from None
        fault = read_fault(response)
        if fault is not None or status != 200:
            code, string = fault or ("", f"HTTP {status}")
            raise RemoteFault(code, string)
        if serialize(response) != body:
            raise SecurityError("response is not in canonical serialized form")

        pinned = self.keys.known_peer_keys() if self.pin_host_keys else None
        report = unsecure(response, self.keys, pinned)
        phases["verify_resp"] = report.verify_us
        phases["decrypt_resp"] = report.decrypt_us
        if not report.ok:
            raise SecurityError(f"response failed the {report.failure} check")
        got = report.policy
        if got is None or (got.mode, got.cipher, got.key_transport, got.signature) != (
            policy.mode, policy.cipher, policy.key_transport, policy.signature
        ):
            raise SecurityError(
                f"response security {got.describe() if got else '?'} does not mirror request {policy.describe()}"
            )
        try:
            gps = read_gps_response(report.envelope)
        except ProtocolError as exc:
            raise SecurityError(f"unexpected response payload: {exc}") from None
        phases["total"] = _us(start)
        return InvocationResult(gps.fix, gps.request_id, len(octets), len(body), phases, host_phases)


def invoke(
    endpoint: str,
    policy: SecurityPolicy,
    size_kb: int,
    keys: KeyRing,
    rng: random.Random | None = None,
) -> InvocationResult:
    return Client(keys, rng).invoke(endpoint, policy, size_kb)


# -- identity provider access -----------------------------------------------

class IdpClient:
    def __init__(self, url: str, timeout: float = 60.0):
        self.url = url.rstrip("/")
        self.timeout = timeout

    def issue(self, kind: str, bits: int, owner: str) -> KeyRecord:
        status, body, _ = post(self.url + "/keys", issue_request_document(kind, bits, owner), self.timeout)
        if status != 201:
            raise MwsError(f"IdP refused to issue {kind}-{bits} for {owner!r}: HTTP {status} {body[:200]!r}")
        return parse_key_document(body)

    def public_key(self, owner: str) -> AsymmetricKeyPair:
        status, body = get(f"{self.url}/keys/public/{quote(owner, safe='')}", self.timeout)
        if status == 404:
            raise NotFound(f"IdP has no key for {owner!r}")
        if status != 200:
            raise MwsError(f"IdP lookup for {owner!r} failed: HTTP {status}")
        return parse_key_document(body).pair

    def healthy(self) -> bool:
        try:
            return get(self.url + "/healthz", 5)[0] == 200
        except NetworkError:
            return False


def provision_ring(
    idp_url: str,
    owner: str,
    transport_bits=(1024, 2048),
    signatures=tuple(SignatureAlg),
) -> KeyRing:
    """Have the IdP issue every key ``owner`` needs; private halves come back once."""
    idp = IdpClient(idp_url)
    ring = KeyRing(owner)
    for bits in transport_bits:
        ring.transport[bits] = idp.issue("RSA", bits, suite_owner(owner, transport_label(bits))).pair
    for alg in signatures:
        ring.signing[alg] = idp.issue(alg.kind, alg.bits, suite_owner(owner, signing_label(alg))).pair
    return ring


def fetch_peer_keys(idp_url: str, ring: KeyRing, peer: str) -> KeyRing:
    """Fill ``ring``'s peer tables with whatever public keys ``peer`` has registered."""
    idp = IdpClient(idp_url)
    found = 0
    for bits in (1024, 2048):
        try:
            ring.peer_transport[bits] = idp.public_key(suite_owner(peer, transport_label(bits)))
            found += 1
        except NotFound:
            pass
    for alg in SignatureAlg:
        try:
            ring.peer_signing[alg] = idp.public_key(suite_owner(peer, signing_label(alg)))
            found += 1
        except NotFound:
            pass
    if not found:
        raise NotFound(f"IdP has no keys registered for {peer!r}")
    return ring


def fetch_keys(idp_url: str, owner: str, peer: str, **provision) -> KeyRing:
    """Own key pairs issued by the IdP plus the peer's public keys."""
    return fetch_peer_keys(idp_url, provision_ring(idp_url, owner, **provision), peer)
