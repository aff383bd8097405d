"""Trace parsing, the flow/DHCP/WLAN join, top-k domain filtering and per-second binning."""

from __future__ import annotations

import bisect
import csv
import ipaddress
import json
import logging
import math
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Iterator, Mapping, Sequence

import numpy as np

from .errors import EmptyInputError, InvalidConfigError

log = logging.getLogger(__name__)

UNKNOWN = "UNKNOWN"

FLOW_FIELDS = ("start_ts", "end_ts", "src_ip", "dst_ip", "src_port", "dst_port", "protocol", "bytes", "packets")
DHCP_FIELDS = ("ts", "ip", "mac")
WLAN_FIELDS = ("start_ts", "end_ts", "mac", "ap_id", "building_id")
DOMAIN_FIELDS = ("prefix", "domain")


@dataclass(frozen=True, slots=True)
class FlowRecord:
    start_ts: float
    end_ts: float
    src_ip: str
    dst_ip: str
    src_port: int
    dst_port: int
    protocol: int
    bytes: int
    packets: int

    def __post_init__(self):
        if self.end_ts < self.start_ts:
            raise ValueError(f"flow ends before it starts: {self.start_ts} > {self.end_ts}")
        if self.bytes < 0 or self.packets < 0:
            raise ValueError("negative byte or packet count")


@dataclass(frozen=True, slots=True)
class DhcpLease:
    ts: float
    ip: str
    mac: str

    def __post_init__(self):
        if not math.isfinite(self.ts):
            raise ValueError("lease timestamp must be finite")


@dataclass(frozen=True, slots=True)
class WlanSession:
    start_ts: float
    end_ts: float
    mac: str
    ap_id: str
    building_id: str

    def __post_init__(self):
        if self.end_ts < self.start_ts:
            raise ValueError(f"session ends before it starts: {self.start_ts} > {self.end_ts}")


@dataclass(frozen=True, slots=True)
class EnrichedFlow:
    ts: float
    user: str
    domain: str
    building: str
    bytes: int

    def to_dict(self) -> dict:
        return {"ts": self.ts, "user": self.user, "domain": self.domain, "building": self.building, "bytes": self.bytes}


@dataclass
class TrafficSeries:
    entity_key: str
    t0: float
    counts: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.ndim != 1 or np.any(self.counts < 0):
            raise ValueError("counts must be a 1-D non-negative sequence")

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __len__(self):
        return int(self.counts.size)

    def to_dict(self) -> dict:
        return {"entity": self.entity_key, "t0": self.t0, "counts": self.counts.tolist()}

    @classmethod
    def from_dict(cls, d: Mapping) -> "TrafficSeries":
        return cls(d["entity"], float(d["t0"]), d["counts"])

    def __eq__(self, other):
        if not isinstance(other, TrafficSeries):
            return NotImplemented
        return (
            self.entity_key == other.entity_key
            and self.t0 == other.t0
            and np.array_equal(self.counts, other.counts)
        )


class DomainTable(dict):
    """Mapping from /24 network (``a.b.c``) to domain name."""

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[str, str]]) -> "DomainTable":
        table = cls()
        for prefix, domain in pairs:
            key = _network_key(prefix)
            if key in table and table[key] != domain:
                raise InvalidConfigError(f"prefix {prefix} mapped to both {table[key]!r} and {domain!r}")
            table[key] = domain
        return table

    def networks(self) -> list[tuple[str, str]]:
        return [(f"{k}.0", v) for k, v in self.items()]


def _network_key(prefix: str) -> str:
    """'104.16.45.0' or '104.16.45.0/24' -> '104.16.45'."""
    text = prefix.strip()
    if "/" in text:
        text, bits = text.split("/", 1)
        if bits != "24":
            raise InvalidConfigError(f"only /24 prefixes are supported: {prefix}")
    try:
        addr = ipaddress.IPv4Address(text)
    except ValueError as exc:
        raise InvalidConfigError(f"bad IPv4 prefix {prefix!r}") from exc
    if int(addr) & 0xFF:
        raise InvalidConfigError(f"{prefix} is not a /24 network address")
    return text.rsplit(".", 1)[0]


def prefix24(ip: str) -> str:
    return ip.rsplit(".", 1)[0]


# ------------------------------------------------------------------ resolving


def resolve_domain(ip: str, table: Mapping[str, str]) -> str | None:
    return table.get(prefix24(ip))


class LeaseIndex:
    """Per-IP lease timelines, sorted by (ts, mac) so lookups ignore input order."""

    def __init__(self, leases: Iterable[DhcpLease]):
        by_ip: dict[str, list[tuple[float, str]]] = defaultdict(list)
        for lease in leases:
            by_ip[lease.ip].append((lease.ts, lease.mac))
        self._ts: dict[str, list[float]] = {}
        self._mac: dict[str, list[str]] = {}
        for ip, events in by_ip.items():
            events.sort()
            self._ts[ip] = [t for t, _ in events]
            self._mac[ip] = [m for _, m in events]

    def __contains__(self, ip: str) -> bool:
        return ip in self._ts

    def lookup(self, ip: str, ts: float) -> str | None:
        times = self._ts.get(ip)
        if times is None:
            return None
        i = bisect.bisect_right(times, ts)
        return self._mac[ip][i - 1] if i else None


def _lease_index(leases) -> LeaseIndex:
    return leases if isinstance(leases, LeaseIndex) else LeaseIndex(leases)


def campus_side(flow: FlowRecord, leases) -> tuple[str, str] | None:
    """(campus ip, remote ip), deciding by which endpoint ever held a lease."""
    idx = _lease_index(leases)
    if flow.src_ip in idx:
        return flow.src_ip, flow.dst_ip
    if flow.dst_ip in idx:
        return flow.dst_ip, flow.src_ip
    return None


def resolve_user(flow: FlowRecord, leases) -> str | None:
    """MAC of the latest lease on the flow's campus-side IP with lease.ts <= flow start."""
    idx = _lease_index(leases)
    sides = campus_side(flow, idx)
    if sides is None:
        return None
    return idx.lookup(sides[0], flow.start_ts)


class SessionIndex:
    def __init__(self, sessions: Iterable[WlanSession]):
        by_mac: dict[str, list[WlanSession]] = defaultdict(list)
        for s in sessions:
            by_mac[s.mac].append(s)
        self._sessions: dict[str, list[WlanSession]] = {}
        self._starts: dict[str, list[float]] = {}
        for mac, items in by_mac.items():
            items.sort(key=lambda s: (s.start_ts, s.end_ts, s.building_id, s.ap_id))
            self._sessions[mac] = items
            self._starts[mac] = [s.start_ts for s in items]

    def lookup(self, mac: str, ts: float) -> str:
        starts = self._starts.get(mac)
        if not starts:
            return UNKNOWN
        sessions = self._sessions[mac]
        # walk back from the latest-starting candidate
        for i in range(bisect.bisect_right(starts, ts) - 1, -1, -1):
            if sessions[i].end_ts >= ts:
                return sessions[i].building_id
        return UNKNOWN


def resolve_location(mac: str, ts: float, sessions) -> str:
    idx = sessions if isinstance(sessions, SessionIndex) else SessionIndex(sessions)
    return idx.lookup(mac, ts)


@dataclass
class DropStats:
    total: int = 0
    kept: int = 0
    no_user: int = 0
    no_domain: int = 0
    unknown_location: int = 0
    outside_top_k: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def enrich(
    flows: Iterable[FlowRecord],
    leases,
    sessions,
    table: Mapping[str, str],
) -> tuple[list[EnrichedFlow], DropStats]:
    """Join flows to users, domains and buildings. Unresolvable flows are dropped and counted."""
    lidx = _lease_index(leases)
    sidx = sessions if isinstance(sessions, SessionIndex) else SessionIndex(sessions)
    stats = DropStats()
    out: list[EnrichedFlow] = []
    for f in flows:
        stats.total += 1
        sides = campus_side(f, lidx)
        mac = lidx.lookup(sides[0], f.start_ts) if sides else None
        if mac is None:
            stats.no_user += 1
            continue
        domain = table.get(prefix24(sides[1]))
        if domain is None:
            stats.no_domain += 1
            continue
        building = sidx.lookup(mac, f.start_ts)
        if building == UNKNOWN:
            stats.unknown_location += 1
        out.append(EnrichedFlow(f.start_ts, mac, domain, building, f.bytes))
    stats.kept = len(out)
    return out, stats


def top_k_domains(flows: Iterable[EnrichedFlow], k: int, metric: str = "flows") -> set[str]:
    """The k most active domains; ties go to the lexicographically smaller name."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if metric not in ("flows", "bytes"):
        raise ValueError(f"unknown activity metric {metric!r}")
    activity: Counter = Counter()
    for f in flows:
        activity[f.domain] += 1 if metric == "flows" else f.bytes
    ranked = sorted(activity.items(), key=lambda kv: (-kv[1], kv[0]))
    return {d for d, _ in ranked[:k]}


def filter_top_k(
    flows: Sequence[EnrichedFlow], k: int, metric: str = "flows", stats: DropStats | None = None
) -> list[EnrichedFlow]:
    keep = top_k_domains(flows, k, metric)
    out = [f for f in flows if f.domain in keep]
    if stats is not None:
        stats.outside_top_k += len(flows) - len(out)
        stats.kept = len(out)
        stats.unknown_location = sum(1 for f in out if f.building == UNKNOWN)
    return out


# ------------------------------------------------------------------- binning

KEY_FUNCS: dict[str, Callable[[EnrichedFlow], str | None]] = {
    "domain": lambda f: f.domain,
    "building": lambda f: None if f.building == UNKNOWN else f.building,
    "user": lambda f: f.user,
}


def series_frame(flows: Sequence[EnrichedFlow], bin_width: float = 1.0) -> tuple[float, int]:
    """Shared (t0, length) spanning every flow in the corpus."""
    if not flows:
        raise EmptyInputError("no flows to bin")
    if bin_width <= 0:
        raise ValueError("bin width must be positive")
    lo = min(f.ts for f in flows)
    hi = max(f.ts for f in flows)
    t0 = float(math.floor(lo))
    return t0, int(math.floor((hi - t0) / bin_width)) + 1


def build_series(
    flows: Sequence[EnrichedFlow],
    key_fn: Callable[[EnrichedFlow], str | None] | str,
    bin_width: float = 1.0,
    frame: tuple[float, int] | None = None,
) -> dict[str, TrafficSeries]:
    """Per-entity flow counts in ``bin_width`` bins, all on one shared clock.

    Flows count in the bin of their start timestamp. ``key_fn`` returning None
    excludes the flow from every series (it still anchors the clock).
    """
    if isinstance(key_fn, str):
        key_fn = KEY_FUNCS[key_fn]
    t0, length = frame if frame is not None else series_frame(flows, bin_width)
    if not flows:
        raise EmptyInputError("no flows to bin")
    index: dict[str, list[int]] = defaultdict(list)
    for f in flows:
        key = key_fn(f)
        if key is None:
            continue
        i = int((f.ts - t0) // bin_width)
        if not 0 <= i < length:
            raise ValueError(f"flow at {f.ts} falls outside the series frame")
        index[key].append(i)
    return {
        key: TrafficSeries(key, t0, np.bincount(np.asarray(bins, dtype=np.int64), minlength=length))
        for key, bins in sorted(index.items())
    }


# --------------------------------------------------------------------- files


def _fmt(v) -> str:
    return repr(v) if isinstance(v, float) else str(v)


def _open_csv(path: Path, fields: Sequence[str]) -> Iterator[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(fields) - set(reader.fieldnames or ())
        if missing:
            raise InvalidConfigError(f"{path}: missing columns {sorted(missing)}")
        yield from reader


def read_flows(path) -> list[FlowRecord]:
    out = []
    for row in _open_csv(Path(path), FLOW_FIELDS):
        out.append(
            FlowRecord(
                float(row["start_ts"]), float(row["end_ts"]), row["src_ip"], row["dst_ip"],
                int(row["src_port"]), int(row["dst_port"]), int(row["protocol"]),
                int(row["bytes"]), int(row["packets"]),
            )
        )
    return out


def read_leases(path) -> list[DhcpLease]:
    out = []
    for row in _open_csv(Path(path), DHCP_FIELDS):
        ipaddress.IPv4Address(row["ip"])
        out.append(DhcpLease(float(row["ts"]), row["ip"], row["mac"]))
    return out


def read_sessions(path) -> list[WlanSession]:
    return [
        WlanSession(float(r["start_ts"]), float(r["end_ts"]), r["mac"], r["ap_id"], r["building_id"])
        for r in _open_csv(Path(path), WLAN_FIELDS)
    ]


def read_domain_table(path) -> DomainTable:
    return DomainTable.from_pairs((r["prefix"], r["domain"]) for r in _open_csv(Path(path), DOMAIN_FIELDS))


def _write_rows(path, fields: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fields)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_flows(path, flows: Iterable[FlowRecord]) -> None:
    _write_rows(path, FLOW_FIELDS, ((getattr(f, k) for k in FLOW_FIELDS) for f in flows))


def write_leases(path, leases: Iterable[DhcpLease]) -> None:
    _write_rows(path, DHCP_FIELDS, ((l.ts, l.ip, l.mac) for l in leases))


def write_sessions(path, sessions: Iterable[WlanSession]) -> None:
    _write_rows(path, WLAN_FIELDS, ((getattr(s, k) for k in WLAN_FIELDS) for s in sessions))


def write_domain_table(path, table: DomainTable) -> None:
    _write_rows(path, DOMAIN_FIELDS, sorted(table.networks(), key=lambda r: tuple(int(p) for p in r[0].split("."))))


def write_enriched(path, flows: Iterable[EnrichedFlow]) -> None:
    with open(path, "w") as fh:
        for f in flows:
            fh.write(json.dumps(f.to_dict(), separators=(",", ":")) + "\n")


def read_enriched(path) -> list[EnrichedFlow]:
    out = []
    with open(path) as fh:
        for line in fh:
            if line.strip():
                d = json.loads(line)
                out.append(EnrichedFlow(float(d["ts"]), d["user"], d["domain"], d["building"], int(d["bytes"])))
    return out


def write_series(path, series: Mapping[str, TrafficSeries]) -> None:
    with open(path, "w") as fh:
        for key in sorted(series):
            fh.write(json.dumps(series[key].to_dict(), separators=(",", ":")) + "\n")


def read_series(path) -> dict[str, TrafficSeries]:
    out = {}
    with open(path) as fh:
        for line in fh:
            if line.strip():
                s = TrafficSeries.from_dict(json.loads(line))
                out[s.entity_key] = s
    return out


@dataclass
class IngestResult:
    flows: list[EnrichedFlow]
    stats: DropStats
    series: dict[str, dict[str, TrafficSeries]] = field(default_factory=dict)
    frame: tuple[float, int] = (0.0, 0)


def ingest(
    flows_path, dhcp_path, wlan_path, domains_path,
    top_k: int = 100, metric: str = "flows", bin_width: float = 1.0,
) -> IngestResult:
    """Parse the four inputs, join, keep the top-k domains and bin per domain/building/user."""
    leases = LeaseIndex(read_leases(dhcp_path))
    sessions = SessionIndex(read_sessions(wlan_path))
    table = read_domain_table(domains_path)
    raw = read_flows(flows_path)
    enriched, stats = enrich(raw, leases, sessions, table)
    if not enriched:
        raise EmptyInputError("no flow survived the join")
    enriched = filter_top_k(enriched, top_k, metric, stats)
    log.info(
        "ingest: %d flows read, %d kept (%d without user, %d without domain, %d outside top-%d)",
        stats.total, stats.kept, stats.no_user, stats.no_domain, stats.outside_top_k, top_k,
    )
    frame = series_frame(enriched, bin_width)
    series = {kind: build_series(enriched, kind, bin_width, frame) for kind in ("domain", "building", "user")}
    return IngestResult(enriched, stats, series, frame)
