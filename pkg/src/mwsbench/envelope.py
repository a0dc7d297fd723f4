"""SOAP envelope model, deterministic codec, and the GPS location service payloads.

The wire form is XML 1.0 in UTF-8 with no XML declaration and no
insignificant whitespace. Namespace declarations are written before the
other attributes of an element; everything else keeps definition order, so
``serialize(parse(serialize(e))) == serialize(e)`` holds byte for byte.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field, replace
from typing import Iterator
from xml.parsers import expat

from .errors import InvalidArgument, ParseError, ProtocolError, SerializationError

log = logging.getLogger(__name__)

SOAP_ENV_NS = "http://schemas.xmlsoap.org/soap/envelope/"
SOAP_ENC_NS = "http://schemas.xmlsoap.org/soap/encoding/"
XSD_NS = "http://www.w3.org/2001/XMLSchema"
XSI_NS = "http://www.w3.org/2001/XMLSchema-instance"
GPS_SERVICE_NS = "ssn:SSNServer"
XML_NS = "http://www.w3.org/XML/1998/namespace"

SOAP_PREFIX = "soapenv"
DEFAULT_BINDINGS = (("soapenv", SOAP_ENV_NS), ("xsd", XSD_NS), ("xsi", XSI_NS))

PADDING_CHAR = "x"
KB = 1024

_INVALID_XML_CHARS = re.compile("[\x00-\x08\x0b\x0c\x0e-\x1f\ufffe\uffff\ud800-\udfff]")


@dataclass(frozen=True)
class Element:
    """An XML element with either text content or child elements, never both."""

    tag: str
    attrs: tuple[tuple[str, str], ...] = ()
    children: tuple[Element, ...] = ()
    text: str = ""

    @property
    def local(self) -> str:
        return self.tag.rpartition(":")[2]

    @property
    def prefix(self) -> str | None:
        p, sep, _ = self.tag.rpartition(":")
        return p if sep else None

    def get(self, name: str, default: str | None = None) -> str | None:
        for k, v in self.attrs:
            if k == name:
                return v
        return default

    def with_attr(self, name: str, value: str) -> Element:
        attrs = [(k, v) for k, v in self.attrs if k != name]
        attrs.append((name, value))
        return replace(self, attrs=tuple(attrs))

    def without_attrs(self, *names: str) -> Element:
        return replace(self, attrs=tuple((k, v) for k, v in self.attrs if k not in names))

    def find(self, local: str) -> Element | None:
        """First direct child with the given local name."""
        for c in self.children:
            if c.local == local:
                return c
        return None

    def iter(self) -> Iterator[Element]:
        yield self
        for c in self.children:
            yield from c.iter()


def el(tag: str, *children: Element, text: str = "", **attrs: str) -> Element:
    """Shorthand constructor; keyword attributes use ``__`` for ``:``."""
    return Element(
        tag,
        tuple((k.replace("__", ":"), v) for k, v in attrs.items()),
        tuple(children),
        text,
    )


@dataclass(frozen=True)
class Envelope:
    header_blocks: tuple[Element, ...] = ()
    body_children: tuple[Element, ...] = ()
    namespace_bindings: tuple[tuple[str, str], ...] = DEFAULT_BINDINGS
    prefix: str = SOAP_PREFIX

    @property
    def namespaces(self) -> dict[str, str]:
        return dict(self.namespace_bindings)

    def header(self, local: str) -> Element | None:
        for h in self.header_blocks:
            if h.local == local:
                return h
        return None

    def elements(self) -> Iterator[Element]:
        for h in self.header_blocks:
            yield from h.iter()
        for b in self.body_children:
            yield from b.iter()


# -- serialization ----------------------------------------------------------

def _check_chars(s: str) -> None:
    if _INVALID_XML_CHARS.search(s):
        raise SerializationError("character not allowed in XML 1.0")


def _escape_text(s: str) -> str:
    _check_chars(s)
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;").replace("\r", "&#13;")


def _escape_attr(s: str) -> str:
    _check_chars(s)
    return (
        s.replace("&", "&amp;").replace("<", "&lt;").replace('"', "&quot;")
        .replace("\t", "&#9;").replace("\n", "&#10;").replace("\r", "&#13;")
    )


def _is_nsdecl(name: str) -> bool:
    return name == "xmlns" or name.startswith("xmlns:")


def _ordered_attrs(attrs):
    return [a for a in attrs if _is_nsdecl(a[0])] + [a for a in attrs if not _is_nsdecl(a[0])]


def _scope_with(scope: dict[str, str], attrs) -> dict[str, str]:
    decls = [(k, v) for k, v in attrs if _is_nsdecl(k)]
    if not decls:
        return scope
    scope = dict(scope)
    for k, v in decls:
        scope[k[6:] if k != "xmlns" else ""] = v
    return scope


def _check_name(name: str, scope: dict[str, str]) -> None:
    p, sep, _ = name.rpartition(":")
    if sep and p != "xml" and p != "xmlns" and p not in scope:
        raise SerializationError(f"unbound namespace prefix {p!r} in {name!r}")


def _write(e: Element, scope: dict[str, str], out: list[str]) -> None:
    if e.text and e.children:
        raise SerializationError(f"element {e.tag!r} has both text and children")
    scope = _scope_with(scope, e.attrs)
    _check_name(e.tag, scope)
    out.append("<" + e.tag)
    for k, v in _ordered_attrs(e.attrs):
        if not _is_nsdecl(k):
            _check_name(k, scope)
        out.append(f' {k}="{_escape_attr(v)}"')
    out.append(">")
    if e.children:
        for c in e.children:
            _write(c, scope, out)
    elif e.text:
        out.append(_escape_text(e.text))
    out.append(f"</{e.tag}>")


def serialize_element(e: Element, scope: dict[str, str] | None = None) -> bytes:
    """Serialize a standalone element; ``scope`` supplies inherited prefix bindings."""
    out: list[str] = []
    _write(e, dict(scope or {}), out)
    return "".join(out).encode("utf-8")


def serialize(e: Envelope) -> bytes:
    p = e.prefix
    scope = dict(e.namespace_bindings)
    if scope.get(p) != SOAP_ENV_NS:
        raise SerializationError(f"envelope prefix {p!r} is not bound to the SOAP namespace")
    out = [f"<{p}:Envelope"]
    for prefix, uri in e.namespace_bindings:
        out.append(f' xmlns:{prefix}="{_escape_attr(uri)}"')
    out.append(">")
    if e.header_blocks:
        out.append(f"<{p}:Header>")
        for h in e.header_blocks:
            _write(h, scope, out)
        out.append(f"</{p}:Header>")
    out.append(f"<{p}:Body>")
    for b in e.body_children:
        _write(b, scope, out)
    out.append(f"</{p}:Body></{p}:Envelope>")
    return "".join(out).encode("utf-8")


def measure(e: Envelope) -> int:
    return len(serialize(e))


# -- parsing ----------------------------------------------------------------

class _Builder:
    __slots__ = ("tag", "attrs", "children", "text")

    def __init__(self, tag, attrs):
        self.tag = tag
        self.attrs = attrs
        self.children = []
        self.text = []

    def freeze(self) -> Element:
        text = "".join(self.text)
        if self.children:
            if text.strip():
                raise ProtocolError(f"mixed content in {self.tag!r} is not supported")
            text = ""
        return Element(self.tag, tuple(self.attrs), tuple(self.children), text)


def _no_doctype(*_):
    raise ProtocolError("DOCTYPE declarations are not accepted")


def parse_element(octets: bytes) -> Element:
    """Parse a single XML element (no SOAP checks)."""
    stack: list[_Builder] = []
    root: list[Element] = []

    def start(name, attrs):
        stack.append(_Builder(name, list(zip(attrs[::2], attrs[1::2]))))

    def end(name):
        done = stack.pop().freeze()
        if stack:
            stack[-1].children.append(done)
        else:
            root.append(done)

    def chars(data):
        if stack:
            stack[-1].text.append(data)

    p = expat.ParserCreate("UTF-8")
    p.ordered_attributes = True
    p.buffer_text = True
    p.StartElementHandler = start
    p.EndElementHandler = end
    p.CharacterDataHandler = chars
    p.StartDoctypeDeclHandler = _no_doctype
    try:
        p.Parse(octets, True)
    except expat.ExpatError as exc:
        raise ParseError(str(exc)) from None
    if not root:
        raise ParseError("no root element")
    return root[0]


def _check_bound(e: Element, scope: dict[str, str]) -> None:
    scope = _scope_with(scope, e.attrs)
    try:
        _check_name(e.tag, scope)
        for k, _ in e.attrs:
            if not _is_nsdecl(k):
                _check_name(k, scope)
    except SerializationError as exc:
        raise ParseError(str(exc)) from None
    for c in e.children:
        _check_bound(c, scope)


def parse(octets: bytes, strict: bool = False) -> Envelope:
    """Parse a SOAP envelope.

    With ``strict`` the input must also be byte-identical to its own
    re-serialization, so two different octet strings never parse to the
    same message.
    """
    root = parse_element(octets)
    _check_bound(root, {})
    bindings = tuple((k[6:], v) for k, v in root.attrs if k.startswith("xmlns:"))
    scope = dict(bindings)
    p = root.prefix
    if root.local != "Envelope" or p is None or scope.get(p) != SOAP_ENV_NS:
        raise ProtocolError(f"root element {root.tag!r} is not a SOAP envelope")
    header, body = None, None
    for c in root.children:
        if c.prefix != p:
            raise ProtocolError(f"unexpected envelope child {c.tag!r}")
        if c.local == "Header" and header is None and body is None:
            header = c
        elif c.local == "Body" and body is None:
            body = c
        else:
            raise ProtocolError(f"unexpected envelope child {c.tag!r}")
    if body is None:
        raise ProtocolError("envelope has no Body")
    env = Envelope(
        header_blocks=header.children if header is not None else (),
        body_children=body.children,
        namespace_bindings=bindings,
        prefix=p,
    )
    if strict:
        try:
            canonical = serialize(env) == octets
        except SerializationError:
            canonical = False
        if not canonical:
            raise ProtocolError("message is not in canonical serialized form")
    return env


# -- faults -----------------------------------------------------------------

def build_fault(faultcode: str, faultstring: str) -> Envelope:
    return Envelope(body_children=(
        el(f"{SOAP_PREFIX}:Fault", el("faultcode", text=faultcode), el("faultstring", text=faultstring)),
    ))


def read_fault(e: Envelope) -> tuple[str, str] | None:
    if len(e.body_children) != 1 or e.body_children[0].local != "Fault":
        return None
    f = e.body_children[0]
    code, string = f.find("faultcode"), f.find("faultstring")
    return (code.text if code is not None else "", string.text if string is not None else "")


# -- GPS location service ---------------------------------------------------

@dataclass(frozen=True)
class GpsFix:
    longitude: int
    latitude: int
    altitude: int
    speed: int
    status: int
    comment: str = ""


DEFAULT_FIX = GpsFix(longitude=606428, latitude=5079068, altitude=22, speed=444, status=1)


@dataclass(frozen=True)
class GpsRequest:
    response_size_kb: int

    def __post_init__(self):
        if isinstance(self.response_size_kb, bool) or self.response_size_kb < 1:
            raise InvalidArgument(f"responseSize must be >= 1, got {self.response_size_kb!r}")


@dataclass(frozen=True)
class GpsResponse:
    fix: GpsFix
    request_id: int
    body_padding: str = ""
    oversize: bool = field(default=False, compare=False)


def _typed(tag: str, value, xsd_type: str) -> Element:
    return Element(tag, (("xsi:type", f"xsd:{xsd_type}"),), (), str(value))


def build_gps_request(size_kb: int) -> Envelope:
    req = GpsRequest(size_kb)
    body = Element(
        "GPSProvider",
        (("xmlns", GPS_SERVICE_NS), (f"{SOAP_PREFIX}:encodingStyle", SOAP_ENC_NS)),
        (_typed("responseSize", req.response_size_kb, "int"),),
    )
    return Envelope(body_children=(body,))


def _int_text(e: Element | None, what: str) -> int:
    if e is None:
        raise ProtocolError(f"missing {what}")
    try:
        return int(e.text.strip())
    except ValueError:
        raise ProtocolError(f"{what} is not an integer") from None


def read_gps_request(e: Envelope) -> GpsRequest:
    if len(e.body_children) != 1 or e.body_children[0].local != "GPSProvider":
        raise ProtocolError("body is not a GPSProvider request")
    size = _int_text(e.body_children[0].find("responseSize"), "responseSize")
    try:
        return GpsRequest(size)
    except InvalidArgument as exc:
        raise ProtocolError(str(exc)) from None


def gps_response_envelope(resp: GpsResponse) -> Envelope:
    f = resp.fix
    result = Element("result", (), (
        _typed("Longitude", f.longitude, "int"),
        _typed("Latitude", f.latitude, "int"),
        _typed("Altitude", f.altitude, "int"),
        _typed("Speed", f.speed, "int"),
        _typed("Status", f.status, "int"),
        _typed("Comment", f.comment, "string"),
    ))
    body = Element(
        "GPSProvider",
        (("xmlns", GPS_SERVICE_NS), ("id", "o0")),
        (result, _typed("Request-ID", resp.request_id, "int"), _typed("bodyPadding", resp.body_padding, "string")),
    )
    return Envelope(body_children=(body,))


def pad_gps_response(fix: GpsFix, request_id: int, target_kb: int) -> GpsResponse:
    """Size the padding so the unsecured envelope is exactly ``target_kb`` KB."""
    if isinstance(target_kb, bool) or target_kb < 1:
        raise InvalidArgument(f"target size must be >= 1 KB, got {target_kb!r}")
    bare = GpsResponse(fix, request_id)
    missing = target_kb * KB - measure(gps_response_envelope(bare))
    if missing < 0:
        log.warning("fixed response content exceeds %d KB by %d bytes", target_kb, -missing)
        return GpsResponse(fix, request_id, "", oversize=True)
    return GpsResponse(fix, request_id, PADDING_CHAR * missing)


def build_gps_response(fix: GpsFix, request_id: int, target_kb: int) -> Envelope:
    return gps_response_envelope(pad_gps_response(fix, request_id, target_kb))


def read_gps_response(e: Envelope) -> GpsResponse:
    if len(e.body_children) != 1 or e.body_children[0].local != "GPSProvider":
        raise ProtocolError("body is not a GPSProvider response")
    g = e.body_children[0]
    result = g.find("result")
    if result is None:
        raise ProtocolError("response has no result element")
    comment = result.find("Comment")
    fix = GpsFix(
        longitude=_int_text(result.find("Longitude"), "Longitude"),
        latitude=_int_text(result.find("Latitude"), "Latitude"),
        altitude=_int_text(result.find("Altitude"), "Altitude"),
        speed=_int_text(result.find("Speed"), "Speed"),
        status=_int_text(result.find("Status"), "Status"),
        comment=comment.text if comment is not None else "",
    )
    padding = g.find("bodyPadding")
    return GpsResponse(fix, _int_text(g.find("Request-ID"), "Request-ID"), padding.text if padding is not None else "")
