"""Stand-alone identity provider: generates key pairs and publishes public halves.

HTTP interface (all payloads UTF-8 XML)::

    POST /keys                  <IssueKey><Kind>RSA</Kind><Bits>1024</Bits><Owner>host</Owner></IssueKey>
                                -> 201 KeyRecord document (includes private half)
    GET  /keys/public/{owner}   -> 200 PublicKey document of the owner's latest key, 404 if unknown
    GET  /healthz               -> 200

The store is an append-only file holding one KeyRecord document per line.
"""

from __future__ import annotations

import logging
import threading
import uuid
from pathlib import Path
from urllib.parse import unquote

from .crypto import AsymmetricKeyPair, generate_keypair
from .envelope import Element, parse_element, serialize_element
from .errors import InvalidArgument, MwsError, NotFound, ParseError, ProtocolError, UnsupportedAlgorithm
from .keys import KEYS_NS, KeyRecord, key_record_document, parse_key_document, public_key_document
from .service import QuietHandler, RunningService, start_server

log = logging.getLogger(__name__)


class KeyStore:
    """Key records by id and by owner, optionally persisted to an append-only file.

    Writes are serialized by a lock; readers take a snapshot under the same
    lock, which is only held for dictionary operations.
    """

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path else None
        self._lock = threading.Lock()
        self._by_id: dict[str, KeyRecord] = {}
        self._by_owner: dict[str, list[KeyRecord]] = {}
        if self.path is not None and self.path.exists():
            for n, line in enumerate(self.path.read_bytes().splitlines(), 1):
                if line.strip():
                    try:
                        self._index(parse_key_document(line))
                    except MwsError as exc:
                        log.warning("skipping unreadable record on line %d of %s: %s", n, self.path, exc)

    def _index(self, rec: KeyRecord) -> None:
        if rec.key_id in self._by_id:
            raise InvalidArgument(f"duplicate key id {rec.key_id}")
        self._by_id[rec.key_id] = rec
        self._by_owner.setdefault(rec.owner, []).append(rec)

    def add(self, rec: KeyRecord) -> None:
        line = key_record_document(rec) + b"\n"
        with self._lock:
            self._index(rec)
            if self.path is not None:
                with self.path.open("ab") as f:
                    f.write(line)
                    f.flush()

    def latest(self, owner: str) -> KeyRecord:
        with self._lock:
            recs = self._by_owner.get(owner)
            if not recs:
                raise NotFound(f"no key registered for {owner!r}")
            return recs[-1]

    def get(self, key_id: str) -> KeyRecord:
        with self._lock:
            try:
                return self._by_id[key_id]
            except KeyError:
                raise NotFound(f"no key with id {key_id!r}") from None

    def __len__(self):
        with self._lock:
            return len(self._by_id)


class IdentityProvider:
    def __init__(self, store: KeyStore | None = None):
        self.store = store if store is not None else KeyStore()

    def issue_keypair(self, kind: str, bits: int, owner: str) -> KeyRecord:
        if not owner:
            raise InvalidArgument("owner must be non-empty")
        if kind == "DSA" and bits != 1024:
            raise UnsupportedAlgorithm("DSA keys are limited to 1024 bits")
        key_id = uuid.uuid4().hex
        pair = generate_keypair(kind, bits, owner, key_id)
        rec = KeyRecord(key_id, owner, pair)
        self.store.add(rec)
        log.info("issued %s-%d key %s to %s", kind, bits, key_id, owner)
        return rec

    def get_public_key(self, owner: str) -> AsymmetricKeyPair:
        return self.store.latest(owner).pair.public_only()


def issue_request_document(kind: str, bits: int, owner: str) -> bytes:
    return serialize_element(Element("IssueKey", (("xmlns", KEYS_NS),), (
        Element("Kind", (), (), kind),
        Element("Bits", (), (), str(bits)),
        Element("Owner", (), (), owner),
    )))


def _parse_issue_request(body: bytes) -> tuple[str, int, str]:
    root = parse_element(body)
    if root.local != "IssueKey":
        raise ProtocolError("expected an IssueKey document")
    fields = {c.local: c.text.strip() for c in root.children}
    try:
        return fields["Kind"].upper(), int(fields["Bits"]), fields["Owner"]
    except (KeyError, ValueError):
        raise ProtocolError("IssueKey needs Kind, integer Bits and Owner") from None


def _error_doc(message: str) -> bytes:
    return serialize_element(Element("Error", (("xmlns", KEYS_NS),), (), message))


class IdpHandler(QuietHandler):
    server_version = "mwsbench-idp"

    def do_GET(self):
        idp: IdentityProvider = self.server.idp
        if self.path == "/healthz":
            self.reply(200, b"<ok></ok>")
        elif self.path.startswith("/keys/public/"):
            owner = unquote(self.path[len("/keys/public/"):])
            try:
                self.reply(200, public_key_document(idp.get_public_key(owner)))
            except NotFound as exc:
                self.reply(404, _error_doc(str(exc)))
        else:
            self.reply(404, _error_doc("no such resource"))

    def do_POST(self):
        idp: IdentityProvider = self.server.idp
        if self.path != "/keys":
            self.reply(404, _error_doc("no such resource"))
            return
        try:
            kind, bits, owner = _parse_issue_request(self.read_body())
            rec = idp.issue_keypair(kind, bits, owner)
        except (ParseError, ProtocolError, InvalidArgument) as exc:
            self.reply(400, _error_doc(str(exc)))
            return
        except UnsupportedAlgorithm as exc:
            self.reply(422, _error_doc(str(exc)))
            return
        self.reply(201, key_record_document(rec))


def serve(bind: str, store: KeyStore | None = None) -> RunningService:
    return start_server(bind, IdpHandler, "idp", idp=IdentityProvider(store))
