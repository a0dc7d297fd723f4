"""Command line entry point: ``python -m mwsbench <command> [flags]``.

Commands::

    idp     run the identity provider
    keygen  issue a party's key pairs (via an IdP, or locally) into a key directory
    host    run the Mobile Host GPS service
    invoke  perform one secured invocation and print the fix and phase timings
    bench   run the benchmark matrix and export CSV and text tables

``invoke`` and ``bench`` without ``--host`` start a private IdP and host on
loopback for the duration of the command.

Flags may also come from ``--config FILE``, a flat text file with one
``name = value`` per line (flag names without the leading dashes, ``#``
starts a comment, booleans are true/false). Flags given on the command
line win over the file, which wins over built-in defaults.

Exit codes: 0 success, 1 other failure, 2 usage error, 3 network error,
4 security error (including security Faults from the host), 5 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import random
import shutil
import sys
import threading
from pathlib import Path

from . import bench
from .client import Client, fetch_peer_keys, provision_ring
from .crypto import cipher_by_name, signature_by_name, transport_by_name
from .errors import InvalidArgument, MwsError, NetworkError, RemoteFault, SecurityError, StartupError
from .host import HostConfig
from .host import serve as serve_host
from .idp import KeyStore
from .idp import serve as serve_idp
from .keys import (
    KeyRing,
    generate_ring,
    load_peer_keys,
    load_ring,
    save_peer_keys,
    save_ring,
)
from .topology import CLIENT_OWNER, HOST_OWNER, LocalTopology, TopologyConfig
from .wssec import Mode, SecurityPolicy

log = logging.getLogger("mwsbench")

EXIT_OK = 0
EXIT_OTHER = 1
EXIT_USAGE = 2
EXIT_NETWORK = 3
EXIT_SECURITY = 4
EXIT_IO = 5

DEFAULT_CIPHER = "aes256"
DEFAULT_TRANSPORT = "rsa1024"
DEFAULT_SIGNATURE = "rsa-sha1-1024"
DEFAULT_SEED = 0

MODES = [m.value for m in Mode]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _name_list(text: str) -> tuple[str, ...]:
    return tuple(x.strip() for x in text.split(",") if x.strip())


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat name = value file supplying flag defaults")
    p.add_argument("-v", "--verbose", action="store_true", help="log at debug level")


def _add_security(p: argparse.ArgumentParser) -> None:
    p.add_argument("--security", choices=MODES, default="plain", help="security mode")
    p.add_argument("--cipher", help=f"symmetric cipher (default {DEFAULT_CIPHER} when encrypting)")
    p.add_argument("--transport", help=f"RSA key transport (default {DEFAULT_TRANSPORT} when encrypting)")
    p.add_argument("--sig", help=f"signature algorithm (default {DEFAULT_SIGNATURE} when signing)")
    p.add_argument("--scope", help="encrypt only the first element with this local name")
    p.add_argument("--reuse-transport-key", action="store_true", help="sign with the RSA transport key pair")


def _add_endpoints(p: argparse.ArgumentParser) -> None:
    p.add_argument("--host", help="host endpoint URL; omitted = private loopback topology")
    p.add_argument("--idp", help="IdP URL used to issue client keys and fetch host keys")
    p.add_argument("--keys", help="key directory holding the client's key files")
    p.add_argument("--owner", default=CLIENT_OWNER, help="client key owner name")
    p.add_argument("--peer", default=HOST_OWNER, help="host key owner name")
    p.add_argument("--deterministic", action="store_true", help="seed the RNG for reproducible output")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED, help="seed used with --deterministic")
    p.add_argument("--timeout", type=float, default=30.0, help="per-request timeout in seconds")


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = _Parser(prog="mwsbench", description="WS-Security mobile web service toolkit and benchmark")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    subs = {}

    p = subs["idp"] = sub.add_parser("idp", help="run the identity provider")
    _add_common(p)
    p.add_argument("--bind", default="127.0.0.1:8400", help="host:port to listen on")
    p.add_argument("--store", default="idp-keys.db", help="append-only key store file")

    p = subs["keygen"] = sub.add_parser("keygen", help="issue a party's key pairs into a directory")
    _add_common(p)
    p.add_argument("--owner", required=False, help="party name, e.g. host or client")
    p.add_argument("--out", required=False, help="key directory to write")
    p.add_argument("--idp", help="IdP URL; omitted = generate locally")
    p.add_argument("--peer", help="also fetch this party's public keys from the IdP")
    p.add_argument("--transport-bits", type=_int_list, default=(1024, 2048), help="RSA transport sizes")

    p = subs["host"] = sub.add_parser("host", help="run the Mobile Host GPS service")
    _add_common(p)
    p.add_argument("--bind", default="127.0.0.1:8401", help="host:port to listen on")
    p.add_argument("--keys", help="key directory with the host's key files")
    p.add_argument("--idp", help="IdP URL to issue host keys from and fetch client keys")
    p.add_argument("--owner", default=HOST_OWNER, help="host key owner name")
    p.add_argument("--peer", default=CLIENT_OWNER, help="client key owner name")
    p.add_argument("--pin-client-keys", action="store_true", help="only accept signatures by known client keys")
    p.add_argument("--concurrent", action="store_true", help="do not serialize request handling")
    p.add_argument("--log", help="append per-request log lines to this file")
    p.add_argument("--deterministic", action="store_true", help="seed the RNG for reproducible output")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED, help="seed used with --deterministic")

    p = subs["invoke"] = sub.add_parser("invoke", help="perform one secured invocation")
    _add_common(p)
    _add_security(p)
    _add_endpoints(p)
    p.add_argument("--size", type=int, default=1, help="response size in KB")

    p = subs["bench"] = sub.add_parser("bench", help="run the benchmark matrix")
    _add_common(p)
    _add_endpoints(p)
    p.add_argument("--mode", default="all", help="comma-separated modes, or all")
    p.add_argument("--sizes", type=_int_list, default=bench.DEFAULT_SIZES, help="comma-separated KB sizes")
    p.add_argument("--reps", type=int, default=bench.MIN_REPS, help=f"timed repetitions (>= {bench.MIN_REPS})")
    p.add_argument("--warmup", type=int, default=2, help="discarded invocations per coordinate")
    p.add_argument("--ciphers", type=_name_list, default=(DEFAULT_CIPHER,), help="comma-separated ciphers")
    p.add_argument("--transports", type=_name_list, default=(DEFAULT_TRANSPORT,), help="comma-separated")
    p.add_argument("--sigs", type=_name_list, default=(DEFAULT_SIGNATURE,), help="comma-separated signatures")
    p.add_argument("--full-matrix", action="store_true", help="cross encrypted+signed with every transport")
    p.add_argument("--reuse-transport-key", action="store_true", help="sign with the RSA transport key pair")
    p.add_argument("--out", default="bench-out", help="output directory")
    p.add_argument("--fresh", action="store_true", help="discard records from an earlier run in --out")
    return parser, subs


# -- config files -------------------------------------------------------------

def read_config(path: str) -> dict[str, str]:
    out = {}
    for n, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        name, sep, value = line.partition("=")
        if not sep:
            raise UsageError(f"{path}:{n}: expected name = value")
        out[name.strip().lstrip("-").replace("-", "_")] = value.strip()
    return out


def _apply_config(p: argparse.ArgumentParser, values: dict[str, str], path: str) -> None:
    actions = {a.dest: a for a in p._actions if a.dest not in ("help", "config")}
    defaults = {}
    for name, value in values.items():
        action = actions.get(name)
        if action is None:
            raise UsageError(f"{path}: unknown setting {name!r}")
        if isinstance(action, argparse._StoreTrueAction):
            if value.lower() not in ("true", "false", "yes", "no", "1", "0"):
                raise UsageError(f"{path}: {name} must be true or false")
            defaults[name] = value.lower() in ("true", "yes", "1")
            continue
        if action.type is not None:
            try:
                value = action.type(value)
            except (argparse.ArgumentTypeError, ValueError) as exc:
                raise UsageError(f"{path}: bad value for {name}: {exc}") from None
        if action.choices is not None and value not in action.choices:
            raise UsageError(f"{path}: {name} must be one of {', '.join(action.choices)}")
        defaults[name] = value
        action.required = False
    p.set_defaults(**defaults)


def parse_args(argv: list[str]) -> argparse.Namespace:
    parser, subs = build_parser()
    if not argv:
        parser.print_help(sys.stderr)
        raise UsageError("mwsbench: a command is required")
    args = parser.parse_args(argv)
    if args.command is None:
        raise UsageError("mwsbench: a command is required")
    if getattr(args, "config", None):
        try:
            values = read_config(args.config)
        except OSError as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        _apply_config(subs[args.command], values, args.config)
        args = parser.parse_args(argv)
    return args


# -- policy -------------------------------------------------------------------

def policy_from_args(args) -> SecurityPolicy:
    """Map --security and the algorithm flags to a policy, naming any conflicting flags."""
    mode = Mode(args.security)
    flag = f"--security {mode.value}"
    if not mode.encrypts:
        for name, value in (("--cipher", args.cipher), ("--scope", args.scope)):
            if value is not None:
                raise UsageError(f"{name} conflicts with {flag}: nothing is encrypted")
        if args.transport is not None and not args.reuse_transport_key:
            raise UsageError(f"--transport conflicts with {flag}: nothing is encrypted")
    if not mode.signs:
        if args.sig is not None:
            raise UsageError(f"--sig conflicts with {flag}: nothing is signed")
        if args.reuse_transport_key:
            raise UsageError(f"--reuse-transport-key conflicts with {flag}: nothing is signed")
    try:
        cipher = cipher_by_name(args.cipher or DEFAULT_CIPHER) if mode.encrypts else None
        sig = signature_by_name(args.sig or DEFAULT_SIGNATURE) if mode.signs else None
        transport = None
        if mode.encrypts or args.reuse_transport_key:
            default_bits = sig.bits if args.reuse_transport_key and sig else 1024
            transport = transport_by_name(args.transport or f"rsa{default_bits}")
    except MwsError as exc:
        raise UsageError(f"--cipher/--transport/--sig: {exc}") from None
    if args.reuse_transport_key:
        if sig.kind != "RSA":
            raise UsageError(f"--reuse-transport-key conflicts with --sig {sig.label}: needs an RSA signature")
        if transport.modulus_bits != sig.bits:
            raise UsageError(
                f"--reuse-transport-key conflicts with --transport {transport.label} and --sig {sig.label}: "
                "key sizes differ"
            )
    try:
        return SecurityPolicy(mode, cipher, transport, sig, args.scope, args.reuse_transport_key)
    except InvalidArgument as exc:
        raise UsageError(f"{flag}: {exc}") from None


def plan_from_args(args) -> bench.BenchPlan:
    try:
        if args.mode == "all":
            modes = tuple(Mode)
        else:
            modes = tuple(Mode(m) for m in _name_list(args.mode))
    except ValueError:
        raise UsageError(f"--mode must be all or a comma list of {', '.join(MODES)}") from None
    try:
        ciphers = tuple(cipher_by_name(c) for c in args.ciphers)
        transports = tuple(transport_by_name(t) for t in args.transports)
        sigs = tuple(signature_by_name(s) for s in args.sigs)
    except MwsError as exc:
        raise UsageError(f"--ciphers/--transports/--sigs: {exc}") from None
    out = Path(args.out)
    try:
        return bench.BenchPlan(
            modes, ciphers, transports, sigs, tuple(args.sizes), args.reps, args.warmup,
            args.full_matrix, args.reuse_transport_key, out / "records.jsonl", out,
        )
    except InvalidArgument as exc:
        flag = "--reps" if "reps" in str(exc) else "--sizes" if "size" in str(exc) else "--warmup"
        raise UsageError(f"{flag}: {exc}") from None


# -- commands -----------------------------------------------------------------

def _wait_forever(services) -> int:
    try:
        threading.Event().wait()
    except KeyboardInterrupt:
        pass
    finally:
        for svc in services:
            svc.shutdown()
    return EXIT_OK


def cmd_idp(args) -> int:
    svc = serve_idp(args.bind, KeyStore(args.store))
    print(f"idp listening on {svc.url} (store {args.store})", flush=True)
    return _wait_forever([svc])


def cmd_keygen(args) -> int:
    if not args.owner or not args.out:
        raise UsageError("keygen needs --owner and --out")
    if args.peer and not args.idp:
        raise UsageError("--peer needs --idp to fetch the peer's public keys from")
    if args.idp:
        ring = provision_ring(args.idp, args.owner, transport_bits=args.transport_bits)
        if args.peer:
            fetch_peer_keys(args.idp, ring, args.peer)
    else:
        ring = generate_ring(args.owner, args.transport_bits)
    save_ring(args.out, ring)
    save_peer_keys(args.out, ring)
    n = len(ring.transport) + len(ring.signing)
    print(f"wrote {n} key pairs for {args.owner} to {args.out}")
    return EXIT_OK


def _party_ring(args) -> KeyRing:
    """Own ring from --keys or --idp, peer keys from the IdP or the same directory."""
    if args.keys:
        ring = load_ring(args.keys, args.owner)
    elif args.idp:
        ring = provision_ring(args.idp, args.owner)
    else:
        raise UsageError("--keys or --idp is needed to obtain key material")
    if args.idp:
        fetch_peer_keys(args.idp, ring, args.peer)
    else:
        load_peer_keys(args.keys, ring, args.peer)
    return ring


def _rng(args) -> random.Random | None:
    return random.Random(args.seed) if args.deterministic else None


def cmd_host(args) -> int:
    keys = _party_ring(args)
    rng = random.Random(args.seed + 1) if args.deterministic else None
    svc, _ = serve_host(HostConfig(
        keys, bind_address=args.bind, pin_client_keys=args.pin_client_keys,
        benchmark_mode=not args.concurrent, log_path=args.log, rng=rng,
    ))
    print(f"host listening on {svc.url}", flush=True)
    return _wait_forever([svc])


class _Session:
    """Client plus endpoint, either remote or backed by a private loopback topology."""

    def __init__(self, args):
        self.args = args
        self.topology = None

    def __enter__(self) -> tuple[Client, str, object]:
        a = self.args
        if a.host:
            if a.keys is None and a.idp is None:
                raise UsageError("--host needs --keys or --idp for the client's key material")
            return Client(_party_ring(a), _rng(a), timeout=a.timeout), a.host, None
        if a.keys or a.idp:
            raise UsageError("--keys/--idp only apply together with --host")
        seed = a.seed if a.deterministic else None
        self.topology = LocalTopology(TopologyConfig(seed=seed)).__enter__()
        client = self.topology.client()
        client.timeout = a.timeout
        return client, self.topology.endpoint, self.topology.host

    def __exit__(self, *exc):
        if self.topology is not None:
            self.topology.close()


def cmd_invoke(args) -> int:
    policy = policy_from_args(args)
    if args.size < 1:
        raise UsageError("--size must be at least 1")
    with _Session(args) as (client, endpoint, _):
        res = client.invoke(endpoint, policy, args.size)
    print(json.dumps({
        "policy": policy.describe(),
        "fix": vars(res.fix),
        "request_id": res.request_id,
        "request_bytes": res.request_bytes,
        "response_bytes": res.response_bytes,
        "phases_us": res.phases,
        "host_phases_us": res.host_phases,
        "processing_us": res.processing_us,
    }, indent=2))
    return EXIT_OK


def cmd_bench(args) -> int:
    plan = plan_from_args(args)
    if args.fresh and Path(args.out).exists():
        shutil.rmtree(args.out)
    with _Session(args) as (client, endpoint, host):
        records = bench.run(plan, endpoint, client)
        if host is not None and host.max_in_flight > 1:
            log.error("host saw %d concurrent requests during the run", host.max_in_flight)
    if not records:
        print("no records collected", file=sys.stderr)
        return EXIT_OTHER
    paths = bench.export(records, plan.out_dir)
    print(bench.size_table(records).render())
    print()
    print(bench.latency_report(records).render())
    for kind, path in paths.items():
        print(f"{kind}: {path}")
    if records.failed_cells:
        print(f"{len(records.failed_cells)} cells failed", file=sys.stderr)
        return EXIT_OTHER
    return EXIT_OK


COMMANDS = {"idp": cmd_idp, "keygen": cmd_keygen, "host": cmd_host, "invoke": cmd_invoke, "bench": cmd_bench}


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:
        # --help exits 0 through argparse
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except RemoteFault as exc:
        print(f"host fault: {exc}", file=sys.stderr)
        return EXIT_SECURITY if "Security" in exc.faultcode else EXIT_OTHER
    except SecurityError as exc:
        print(f"security error: {exc}", file=sys.stderr)
        return EXIT_SECURITY
    except (NetworkError, StartupError) as exc:
        print(f"network error: {exc}", file=sys.stderr)
        return EXIT_NETWORK
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except MwsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_OTHER
