"""Benchmark driver: runs the mode x algorithm x size matrix and reports sizes and latencies.

Records are appended to a JSONL file as they complete, so an interrupted run
can be resumed; coordinates that already have their repetitions are skipped.

CSV export columns (one row per record, sorted by coordinate then rep)::

    mode,cipher,transport,signature,size_kb,rep,request_bytes,response_bytes,
    t_build_us,t_encrypt_us,t_sign_us,t_transport_us,t_verify_us,t_decrypt_us,t_total_us

Algorithms that a mode does not use are written as ``-``.
"""

from __future__ import annotations

import csv
import json
import logging
import statistics
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

from .client import Client, InvocationResult
from .crypto import (
    CipherAlg,
    KeyTransportAlg,
    SignatureAlg,
    cipher_by_name,
    signature_by_name,
    transport_by_name,
)
from .errors import InvalidArgument, MwsError
from .wssec import Mode, SecurityPolicy

log = logging.getLogger(__name__)

MIN_REPS = 5
DEFAULT_SIZES = (1, 2, 5, 10)
NONE = "-"

CSV_HEADER = (
    "mode", "cipher", "transport", "signature", "size_kb", "rep", "request_bytes", "response_bytes",
    "t_build_us", "t_encrypt_us", "t_sign_us", "t_transport_us", "t_verify_us", "t_decrypt_us", "t_total_us",
)
# CSV timing column -> client phase
CSV_PHASES = {
    "t_build_us": "build",
    "t_encrypt_us": "encrypt_req",
    "t_sign_us": "sign_req",
    "t_transport_us": "transport",
    "t_verify_us": "verify_resp",
    "t_decrypt_us": "decrypt_resp",
    "t_total_us": "total",
}

ROW_LABELS = {
    Mode.PLAIN: "Original message size",
    Mode.SIGN: "Message size with Signature",
    Mode.ENC: "Encrypted message size",
    Mode.ENC_SIGN: "Secured message size",
}
ROW_ORDER = (Mode.PLAIN, Mode.SIGN, Mode.ENC, Mode.ENC_SIGN)

# published reference sizes (bytes) for 1, 2, 5 and 10 KB messages
REFERENCE_SIZES = {
    Mode.PLAIN: {1: 1024, 2: 2048, 5: 5120, 10: 10240},
    Mode.SIGN: {1: 1726, 2: 2750, 5: 5822, 10: 10942},
    Mode.ENC: {1: 1804, 2: 3168, 5: 7264, 10: 14092},
    Mode.ENC_SIGN: {1: 2611, 2: 3975, 5: 8071, 10: 14899},
}

NOT_COMPARABLE_NOTE = (
    "Note: timings are desk-scale loopback measurements. Absolute values are not "
    "comparable with handset-era figures; only orderings and ratios carry over."
)

_MODE_RANK = {m: i for i, m in enumerate(ROW_ORDER)}


def _label(alg) -> str:
    return alg.label if alg is not None else NONE


@dataclass(frozen=True, order=False)
class Coordinate:
    mode: Mode
    cipher: CipherAlg | None
    transport: KeyTransportAlg | None
    signature: SignatureAlg | None
    size_kb: int
    reuse: bool = False

    def policy(self) -> SecurityPolicy:
        return SecurityPolicy(
            self.mode, self.cipher, self.transport, self.signature,
            reuse_transport_key_for_signing=self.reuse,
        )

    def labels(self) -> tuple[str, str, str, str]:
        return self.mode.value, _label(self.cipher), _label(self.transport), _label(self.signature)

    def sort_key(self):
        return (_MODE_RANK[self.mode], *self.labels()[1:], self.size_kb, self.reuse)

    def suite(self) -> tuple[str, str, str, str]:
        return self.labels()


@dataclass
class BenchPlan:
    """Which coordinates to run and how often.

    The default matrix follows the reported combinations: unsecured, each
    cipher x transport encrypted, each signature signed, and each cipher x
    signature encrypted+signed with the first transport. ``full_matrix``
    crosses encrypted+signed with every transport as well.
    """

    modes: tuple[Mode, ...] = ROW_ORDER
    ciphers: tuple[CipherAlg, ...] = (CipherAlg.AES_256,)
    transports: tuple[KeyTransportAlg, ...] = (KeyTransportAlg.RSA15_1024,)
    signatures: tuple[SignatureAlg, ...] = (SignatureAlg.RSA_SHA1_1024,)
    sizes_kb: tuple[int, ...] = DEFAULT_SIZES
    reps: int = MIN_REPS
    warmup: int = 2
    full_matrix: bool = False
    reuse_transport_key: bool = False
    records_path: str | Path | None = None
    out_dir: str | Path | None = None

    def __post_init__(self):
        if self.reps < MIN_REPS:
            raise InvalidArgument(f"reps must be at least {MIN_REPS}, got {self.reps}")
        if self.warmup < 0:
            raise InvalidArgument("warmup must be non-negative")
        if not self.sizes_kb or any(s < 1 for s in self.sizes_kb):
            raise InvalidArgument("sizes must be positive kilobyte counts")
        if not self.modes:
            raise InvalidArgument("at least one mode is needed")
        if any(m.encrypts for m in self.modes) and not (self.ciphers and self.transports):
            raise InvalidArgument("encrypting modes need at least one cipher and one transport")
        if any(m.signs for m in self.modes) and not self.signatures:
            raise InvalidArgument("signing modes need at least one signature algorithm")

    def coordinates(self) -> list[Coordinate]:
        out = []
        for size in self.sizes_kb:
            for mode in ROW_ORDER:
                if mode not in self.modes:
                    continue
                if mode is Mode.PLAIN:
                    out.append(Coordinate(mode, None, None, None, size))
                elif mode is Mode.ENC:
                    out += [Coordinate(mode, c, t, None, size) for c in self.ciphers for t in self.transports]
                elif mode is Mode.SIGN:
                    out += [self._signed(mode, None, None, s, size) for s in self.signatures]
                else:
                    transports = self.transports if self.full_matrix else self.transports[:1]
                    out += [self._signed(mode, c, t, s, size)
                            for c in self.ciphers for t in transports for s in self.signatures]
        return out

    def _signed(self, mode, cipher, transport, sig, size) -> Coordinate:
        # reuse applies where an RSA transport key of the signature's size exists
        if self.reuse_transport_key and sig.kind == "RSA":
            if mode is Mode.SIGN:
                transport = next((t for t in self.transports if t.modulus_bits == sig.bits), None)
            if transport is not None and transport.modulus_bits == sig.bits:
                return Coordinate(mode, cipher, transport, sig, size, True)
        return Coordinate(mode, cipher, transport if mode.encrypts else None, sig, size)


@dataclass
class BenchRecord:
    coord: Coordinate
    rep: int
    request_bytes: int
    response_bytes: int
    phases: dict[str, int]
    host_phases: dict[str, int] = field(default_factory=dict)

    @property
    def processing_us(self) -> int:
        client = self.phases["total"] - self.phases["transport"]
        return client + sum(self.host_phases.values())

    @classmethod
    def from_result(cls, coord: Coordinate, rep: int, res: InvocationResult) -> BenchRecord:
        return cls(coord, rep, res.request_bytes, res.response_bytes, dict(res.phases), dict(res.host_phases))

    def to_json(self) -> dict:
        mode, cipher, transport, sig = self.coord.labels()
        return {
            "mode": mode, "cipher": cipher, "transport": transport, "signature": sig,
            "size_kb": self.coord.size_kb, "reuse": self.coord.reuse, "rep": self.rep,
            "request_bytes": self.request_bytes, "response_bytes": self.response_bytes,
            "phases": self.phases, "host_phases": self.host_phases,
        }

    @classmethod
    def from_json(cls, d: dict) -> BenchRecord:
        return cls(coordinate_from_labels(d), d["rep"], d["request_bytes"], d["response_bytes"],
                   d["phases"], d.get("host_phases", {}))


def coordinate_from_labels(d: dict) -> Coordinate:
    def opt(name, lookup):
        v = d.get(name, NONE)
        return None if v in (NONE, "", None) else lookup(v)

    return Coordinate(Mode(d["mode"]), opt("cipher", cipher_by_name), opt("transport", transport_by_name),
                      opt("signature", signature_by_name), int(d["size_kb"]), bool(d.get("reuse", False)))


class BenchRun(list):
    """The records of a run, plus the coordinates that failed too often."""

    def __init__(self, records=(), failed_cells=()):
        super().__init__(records)
        self.failed_cells: list[Coordinate] = list(failed_cells)


def load_records(path: str | Path) -> BenchRun:
    run = BenchRun()
    p = Path(path)
    if not p.exists():
        return run
    for n, line in enumerate(p.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            d = json.loads(line)
            if d.get("failed"):
                run.failed_cells.append(coordinate_from_labels(d))
            else:
                run.append(BenchRecord.from_json(d))
        except (ValueError, KeyError, MwsError) as exc:
            # a run killed mid-write leaves a truncated last line
            log.warning("ignoring unreadable line %d of %s: %s", n, p, exc)
    return run


def run(plan: BenchPlan, endpoint: str, client: Client) -> BenchRun:
    """Execute the plan strictly sequentially, one invocation at a time."""
    persist = None
    done = BenchRun()
    if plan.records_path is not None:
        done = load_records(plan.records_path)
        Path(plan.records_path).parent.mkdir(parents=True, exist_ok=True)
        persist = open(plan.records_path, "a", encoding="utf-8")
    have: dict[Coordinate, set[int]] = defaultdict(set)
    for rec in done:
        have[rec.coord].add(rec.rep)
    result = BenchRun(done)
    failed_before = set(done.failed_cells)

    def write(obj: dict) -> None:
        if persist is not None:
            persist.write(json.dumps(obj, sort_keys=True) + "\n")
            persist.flush()

    try:
        for coord in plan.coordinates():
            missing = [r for r in range(plan.reps) if r not in have[coord]]
            if coord in failed_before:
                result.failed_cells.append(coord)
                continue
            if not missing:
                continue
            policy = coord.policy()
            failures = 0
            for _ in range(plan.warmup):
                try:
                    client.invoke(endpoint, policy, coord.size_kb)
                except MwsError as exc:
                    failures += 1
                    log.warning("warmup for %s failed: %s", policy.describe(), exc)
            while missing and failures <= plan.reps:
                try:
                    res = client.invoke(endpoint, policy, coord.size_kb)
                except MwsError as exc:
                    failures += 1
                    log.warning("%s @ %d KB failed (%d): %s", policy.describe(), coord.size_kb, failures, exc)
                    continue
                rec = BenchRecord.from_result(coord, missing.pop(0), res)
                result.append(rec)
                write(rec.to_json())
            if missing:
                log.error("giving up on %s @ %d KB after %d failures", policy.describe(), coord.size_kb, failures)
                result.failed_cells.append(coord)
                write({**BenchRecord(coord, -1, 0, 0, {}).to_json(), "failed": True})
    finally:
        if persist is not None:
            persist.close()
    return result


# -- sizes ------------------------------------------------------------------

@dataclass
class SizeTable:
    """Measured response sizes; ``rows[mode][size]`` is None where nothing was measured."""

    sizes: tuple[int, ...]
    rows: dict[Mode, dict[int, float | None]]

    def row(self, mode: Mode) -> list[float | None]:
        return [self.rows[mode][s] for s in self.sizes]

    def render(self, reference: bool = True) -> str:
        head = ["Size (bytes)"] + [f"{s} KB" for s in self.sizes]
        lines = [head]
        for mode in ROW_ORDER:
            lines.append([ROW_LABELS[mode]] + [_fmt_size(v) for v in self.row(mode)])
        if reference:
            for mode in ROW_ORDER:
                ref = REFERENCE_SIZES[mode]
                lines.append([f"reference: {ROW_LABELS[mode]}"] + [_fmt_size(ref.get(s)) for s in self.sizes])
        return _grid(lines)


def _fmt_size(v) -> str:
    if v is None:
        return NONE
    return str(int(v)) if float(v).is_integer() else f"{v:.1f}"


def size_table(
    records,
    cipher: CipherAlg = CipherAlg.AES_256,
    transport: KeyTransportAlg = KeyTransportAlg.RSA15_1024,
    signature: SignatureAlg = SignatureAlg.RSA_SHA1_1024,
) -> SizeTable:
    """Mean response size per mode and size for one algorithm suite."""
    wanted = {
        Mode.PLAIN: (None, None, None),
        Mode.SIGN: (None, None, signature),
        Mode.ENC: (cipher, transport, None),
        Mode.ENC_SIGN: (cipher, transport, signature),
    }
    cells: dict[tuple[Mode, int], list[int]] = defaultdict(list)
    for rec in records:
        c = rec.coord
        if c.reuse or (c.cipher, c.transport if c.mode.encrypts else None, c.signature) != wanted[c.mode]:
            continue
        cells[c.mode, c.size_kb].append(rec.response_bytes)
    sizes = tuple(sorted({s for _, s in cells}))
    rows = {m: {s: (statistics.fmean(cells[m, s]) if cells.get((m, s)) else None) for s in sizes}
            for m in ROW_ORDER}
    return SizeTable(sizes, rows)


# -- latency ----------------------------------------------------------------

LATENCY_FIELDS = ("build", "encrypt_req", "sign_req", "transport", "verify_resp", "decrypt_resp", "total",
                  "processing")


@dataclass
class CellStats:
    coord: Coordinate
    n: int
    mean: dict[str, float]
    std: dict[str, float]

    @property
    def low_confidence(self) -> bool:
        return self.n < MIN_REPS


@dataclass
class LatencyReport:
    cells: list[CellStats]
    # (mode, size_kb, transport label) -> cipher labels, fastest first
    cipher_ranking: dict[tuple[str, int, str], list[str]]
    # (mode, size_kb, cipher label) -> signature labels, fastest first
    signature_ranking: dict[tuple[str, int, str], list[str]]
    note: str = NOT_COMPARABLE_NOTE

    def cell(self, coord: Coordinate) -> CellStats:
        for c in self.cells:
            if c.coord == coord:
                return c
        raise KeyError(coord)

    def render(self) -> str:
        head = ["mode", "cipher", "transport", "signature", "KB", "n",
                "processing_us", "sd", "total_us", "encrypt_us", "sign_us", "verify_us", "decrypt_us", ""]
        lines = [head]
        for c in self.cells:
            m, s = c.mean, c.std
            lines.append([*c.coord.labels(), str(c.coord.size_kb), str(c.n),
                          f"{m['processing']:.0f}", f"{s['processing']:.0f}", f"{m['total']:.0f}",
                          f"{m['encrypt_req']:.0f}", f"{m['sign_req']:.0f}", f"{m['verify_resp']:.0f}",
                          f"{m['decrypt_resp']:.0f}", "low-confidence" if c.low_confidence else ""])
        out = [_grid(lines), ""]
        for title, ranking in (("Cipher ranking", self.cipher_ranking),
                               ("Signature ranking", self.signature_ranking)):
            if ranking:
                out.append(f"{title} (mean processing latency, fastest first):")
                for (mode, size, fixed), order in sorted(ranking.items()):
                    out.append(f"  {mode} {size} KB [{fixed}]: " + " < ".join(order))
                out.append("")
        out.append(self.note)
        return "\n".join(out) + "\n"


def _value(rec: BenchRecord, name: str) -> int:
    return rec.processing_us if name == "processing" else rec.phases.get(name, 0)


def latency_report(records) -> LatencyReport:
    groups: dict[Coordinate, list[BenchRecord]] = defaultdict(list)
    for rec in records:
        groups[rec.coord].append(rec)
    cells = []
    for coord in sorted(groups, key=Coordinate.sort_key):
        recs = groups[coord]
        mean, std = {}, {}
        for name in LATENCY_FIELDS:
            xs = [_value(r, name) for r in recs]
            mean[name] = statistics.fmean(xs)
            std[name] = statistics.stdev(xs) if len(xs) > 1 else 0.0
        cells.append(CellStats(coord, len(recs), mean, std))

    by_cipher: dict[tuple, list[CellStats]] = defaultdict(list)
    by_sig: dict[tuple, list[CellStats]] = defaultdict(list)
    for c in cells:
        k = c.coord
        if k.reuse:
            continue
        if k.mode is Mode.ENC:
            by_cipher[k.mode.value, k.size_kb, _label(k.transport)].append(c)
        elif k.mode is Mode.SIGN:
            by_sig[k.mode.value, k.size_kb, NONE].append(c)
        elif k.mode is Mode.ENC_SIGN:
            by_cipher[k.mode.value, k.size_kb, f"{_label(k.transport)}/{_label(k.signature)}"].append(c)
            by_sig[k.mode.value, k.size_kb, f"{_label(k.cipher)}/{_label(k.transport)}"].append(c)

    def rank(groups, attr):
        return {key: [_label(getattr(c.coord, attr)) for c in sorted(cs, key=lambda c: c.mean["processing"])]
                for key, cs in groups.items() if len(cs) > 1}

    return LatencyReport(cells, rank(by_cipher, "cipher"), rank(by_sig, "signature"))


# -- export -----------------------------------------------------------------

def csv_rows(records) -> list[list[str]]:
    rows = []
    for rec in sorted(records, key=lambda r: (r.coord.sort_key(), r.rep)):
        rows.append([*rec.coord.labels(), str(rec.coord.size_kb), str(rec.rep),
                     str(rec.request_bytes), str(rec.response_bytes)]
                    + [str(rec.phases.get(p, 0)) for p in CSV_PHASES.values()])
    return rows


def export(records, out_dir: str | Path) -> dict[str, Path]:
    """Write ``records.csv``, ``sizes.txt`` and ``latency.txt``; identical records give identical files."""
    records = list(records)
    if not records:
        raise InvalidArgument("nothing to export")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"csv": out / "records.csv", "sizes": out / "sizes.txt", "latency": out / "latency.txt"}
    with paths["csv"].open("w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(CSV_HEADER)
        w.writerows(csv_rows(records))
    paths["sizes"].write_text(size_table(records).render() + "\n", encoding="utf-8")
    paths["latency"].write_text(latency_report(records).render(), encoding="utf-8")
    return paths


def read_csv(path: str | Path) -> list[BenchRecord]:
    with open(path, encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        if tuple(reader.fieldnames or ()) != CSV_HEADER:
            raise InvalidArgument(f"{path} does not have the expected header")
        return [BenchRecord(coordinate_from_labels(row), int(row["rep"]), int(row["request_bytes"]),
                            int(row["response_bytes"]), {p: int(row[c]) for c, p in CSV_PHASES.items()})
                for row in reader]


def _grid(lines: list[list[str]]) -> str:
    widths = [max(len(row[i]) for row in lines) for i in range(len(lines[0]))]
    fmt = []
    for row in lines:
        cells = [row[0].ljust(widths[0])] + [v.rjust(w) for v, w in zip(row[1:], widths[1:])]
        fmt.append("  ".join(cells).rstrip())
    return "\n".join(fmt)
