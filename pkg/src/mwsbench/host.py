"""The Mobile Host analog: a GPS location service behind WS-Security.

Requests are POSTed as SOAP envelopes (``text/xml``); dispatch is on the
body child element name and any SOAPAction header is ignored. The response
is secured with the same mode and algorithm suite the request used.

Successful responses carry the host-side phase timings in a header::

    X-Host-Phases: unsecure_us=812,process_us=95,secure_us=604

Each request also produces one log line on the ``mwsbench.host.requests``
logger (and in ``HostConfig.log_path`` if set), tab-separated ``key=value``
fields in this fixed order::

    seq  status  fault  mode  suite  req_bytes  resp_bytes  unsecure_us  process_us  secure_us
"""

from __future__ import annotations

import itertools
import logging
import random
import threading
import time
from collections import deque
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

from .envelope import (
    DEFAULT_FIX,
    GpsFix,
    build_fault,
    build_gps_response,
    parse,
    read_gps_request,
    serialize,
)
from .errors import MwsError, ParseError, ProtocolError
from .keys import KeyRing
from .service import QuietHandler, RunningService, start_server
from .wssec import Mode, SecurityPolicy, secure, unsecure

log = logging.getLogger(__name__)
request_log = logging.getLogger("mwsbench.host.requests")

FAULT_CLIENT = "soapenv:Client"
FAULT_SECURITY = "soapenv:Client.Security"
FAULT_UNKNOWN_SERVICE = "soapenv:Client.UnknownService"
FAULT_SERVER = "soapenv:Server"

# fault strings are fixed so faults never echo request content
_FAULT_TEXT = {
    FAULT_CLIENT: "malformed request",
    FAULT_SECURITY: "security check failed",
    FAULT_UNKNOWN_SERVICE: "unknown service",
    FAULT_SERVER: "internal error",
}

LOG_FIELDS = ("seq", "status", "fault", "mode", "suite", "req_bytes", "resp_bytes",
              "unsecure_us", "process_us", "secure_us")


@dataclass
class HostConfig:
    keys: KeyRing
    bind_address: str = "127.0.0.1:0"
    fix_source: GpsFix | Callable[[], GpsFix] = DEFAULT_FIX
    pin_client_keys: bool = False
    benchmark_mode: bool = True
    # element encrypted in responses to partially encrypted requests
    partial_response_scope: str = "result"
    log_path: str | Path | None = None
    rng: random.Random | None = None

    def current_fix(self) -> GpsFix:
        return self.fix_source() if callable(self.fix_source) else self.fix_source


@dataclass
class HandleResult:
    status: int
    body: bytes
    phases: dict[str, int] = field(default_factory=dict)
    fault: str | None = None
    mode: Mode | None = None
    policy: SecurityPolicy | None = None


class MobileHost:
    def __init__(self, config: HostConfig):
        self.config = config
        self._ids = itertools.count(1)
        self._seq = itertools.count(1)
        self._id_lock = threading.Lock()
        self._work_lock = threading.Lock()
        self._stats_lock = threading.Lock()
        self.in_flight = 0
        self.max_in_flight = 0
        self.records: deque[dict] = deque(maxlen=10_000)

    def _next_request_id(self) -> int:
        with self._id_lock:
            return next(self._ids)

    def _fault(self, code: str, phases, mode=None) -> HandleResult:
        body = serialize(build_fault(code, _FAULT_TEXT[code]))
        return HandleResult(500, body, phases, code, mode)

    def handle_request(self, octets: bytes) -> HandleResult:
        with self._stats_lock:
            self.in_flight += 1
            self.max_in_flight = max(self.max_in_flight, self.in_flight)
        try:
            if self.config.benchmark_mode:
                with self._work_lock:
                    result = self._handle(octets)
            else:
                result = self._handle(octets)
        finally:
            with self._stats_lock:
                self.in_flight -= 1
        return result

    def _handle(self, octets: bytes) -> HandleResult:
        phases = {"unsecure_us": 0, "process_us": 0, "secure_us": 0}
        cfg = self.config
        t0 = time.perf_counter_ns()
        try:
            request = parse(octets, strict=True)
        except (ParseError, ProtocolError):
            phases["unsecure_us"] = _us(t0)
            return self._log(self._fault(FAULT_CLIENT, phases), len(octets))
        pinned = cfg.keys.known_peer_keys() if cfg.pin_client_keys else None
        report = unsecure(request, cfg.keys, pinned)
        phases["unsecure_us"] = _us(t0)
        if not report.ok or report.policy is None:
            return self._log(self._fault(FAULT_SECURITY, phases, report.detected_mode), len(octets))
        plain = report.envelope

        t0 = time.perf_counter_ns()
        if len(plain.body_children) != 1 or plain.body_children[0].local != "GPSProvider":
            phases["process_us"] = _us(t0)
            return self._log(self._fault(FAULT_UNKNOWN_SERVICE, phases, report.detected_mode), len(octets))
        try:
            size_kb = read_gps_request(plain).response_size_kb
        except ProtocolError:
            phases["process_us"] = _us(t0)
            return self._log(self._fault(FAULT_CLIENT, phases, report.detected_mode), len(octets))
        response = build_gps_response(cfg.current_fix(), self._next_request_id(), size_kb)
        phases["process_us"] = _us(t0)

        policy = report.policy
        if policy.scope is not None:
            policy = replace(policy, scope=cfg.partial_response_scope)
        t0 = time.perf_counter_ns()
        try:
            body = serialize(secure(response, policy, cfg.keys, cfg.rng))
        except MwsError as exc:
            log.error("cannot secure response under %s: %s", policy.describe(), exc)
            phases["secure_us"] = _us(t0)
            return self._log(self._fault(FAULT_SERVER, phases, report.detected_mode), len(octets))
        phases["secure_us"] = _us(t0)
        return self._log(HandleResult(200, body, phases, None, policy.mode, policy), len(octets))

    def _log(self, res: HandleResult, req_bytes: int) -> HandleResult:
        with self._stats_lock:
            seq = next(self._seq)
        rec = {
            "seq": seq,
            "status": res.status,
            "fault": res.fault or "-",
            "mode": res.mode.value if res.mode else "-",
            "suite": res.policy.describe() if res.policy else "-",
            "req_bytes": req_bytes,
            "resp_bytes": len(res.body),
            **res.phases,
        }
        self.records.append(rec)
        line = "\t".join(f"{k}={rec[k]}" for k in LOG_FIELDS)
        request_log.info(line)
        if self.config.log_path:
            with open(self.config.log_path, "a", encoding="utf-8") as f:
                f.write(line + "\n")
        return res


def parse_log_line(line: str) -> dict[str, str]:
    return dict(part.split("=", 1) for part in line.rstrip("\n").split("\t"))


def _us(t0: int) -> int:
    return (time.perf_counter_ns() - t0) // 1000


def format_phases(phases: dict[str, int]) -> str:
    return ",".join(f"{k}={v}" for k, v in phases.items())


class HostHandler(QuietHandler):
    server_version = "mwsbench-host"

    def do_POST(self):
        host: MobileHost = self.server.host
        res = host.handle_request(self.read_body())
        self.reply(res.status, res.body, headers={"X-Host-Phases": format_phases(res.phases)})

    def do_GET(self):
        if self.path == "/healthz":
            self.reply(200, b"<ok></ok>")
        else:
            self.reply(404, b"")


def serve(config: HostConfig) -> tuple[RunningService, MobileHost]:
    host = MobileHost(config)
    return start_server(config.bind_address, HostHandler, "host", host=host), host
