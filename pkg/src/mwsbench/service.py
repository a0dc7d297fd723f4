"""Background HTTP servers on top of ``http.server``."""

from __future__ import annotations

import logging
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .errors import InvalidArgument, StartupError

log = logging.getLogger(__name__)


def parse_bind(bind: str) -> tuple[str, int]:
    host, sep, port = bind.rpartition(":")
    if not sep or not port.isdigit():
        raise InvalidArgument(f"bind address must look like HOST:PORT, got {bind!r}")
    return host or "127.0.0.1", int(port)


class QuietHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"

    def log_message(self, fmt, *args):
        log.debug("%s %s", self.address_string(), fmt % args)

    def read_body(self) -> bytes:
        n = int(self.headers.get("Content-Length") or 0)
        return self.rfile.read(n) if n else b""

    def reply(self, status: int, body: bytes, content_type="text/xml; charset=utf-8", headers=None):
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        for k, v in (headers or {}).items():
            self.send_header(k, v)
        self.end_headers()
        self.wfile.write(body)


class RunningService:
    """A ``ThreadingHTTPServer`` serving from a daemon thread until ``shutdown()``."""

    def __init__(self, server: ThreadingHTTPServer, name: str):
        self.server = server
        self.name = name
        self._thread = threading.Thread(target=server.serve_forever, name=name, daemon=True)
        self._thread.start()

    @property
    def address(self) -> tuple[str, int]:
        return self.server.server_address[:2]

    @property
    def url(self) -> str:
        host, port = self.address
        return f"http://{host}:{port}"

    def shutdown(self) -> None:
        self.server.shutdown()
        self.server.server_close()
        self._thread.join(timeout=5)

    def wait(self) -> None:
        self._thread.join()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.shutdown()


def start_server(bind: str, handler_cls, name: str, **attrs) -> RunningService:
    """Bind and start serving; extra keyword arguments become server attributes."""
    try:
        server = ThreadingHTTPServer(parse_bind(bind), handler_cls)
    except OSError as exc:
        raise StartupError(f"cannot bind {bind}: {exc}") from None
    server.daemon_threads = True
    for k, v in attrs.items():
        setattr(server, k, v)
    svc = RunningService(server, name)
    log.info("%s listening on %s", name, svc.url)
    return svc
