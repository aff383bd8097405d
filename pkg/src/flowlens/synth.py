"""Deterministic flow/DHCP/WLAN trace generator with planted group structure.

Every cell owns a distribution family. For each 1-second bin the cell's flow
count is one draw from that family (continuous draws rounded, clamped at 0).

With ``cell_axis="domain"`` cells are (user group, domain group) pairs and each
flow goes to a uniformly chosen user and domain of the cell. With
``cell_axis="location"`` cells are (user group, location group) pairs: each
flow goes to a uniformly chosen building of the cell, then to a user of the
group currently in that building, and its domain is drawn from the group's
domain interests.

Users of a group rotate through the group's building list every ``dwell``
seconds, staggered so that the same share of the group sits in each building
at any instant.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .errors import FlowlensError, InvalidConfigError
from .statdist import Family, Params

log = logging.getLogger(__name__)

DEFAULT_START = 1_600_000_000
_US = 1_000_000


@dataclass
class CellModel:
    user_group: int
    # domain group or location group, depending on the config's cell axis
    entity_group: int
    family: str
    params: dict[str, float]

    @classmethod
    def from_dict(cls, c: dict[str, Any]) -> "CellModel":
        for key in ("entity_group", "domain_group", "location_group"):
            if key in c:
                return cls(int(c["user_group"]), int(c[key]), c["family"], dict(c["params"]))
        raise KeyError("entity_group")

    def to_params(self) -> Params:
        return Params(Family(self.family), self.params)


@dataclass
class PlantedConfig:
    n_users: int
    n_domains: int
    n_buildings: int
    user_groups: list[list[int]]
    domain_groups: list[list[int]]
    location_groups: list[list[int]]
    cell_models: list[CellModel]
    duration: int
    seed: int = 0
    # user group -> buildings its users rotate through; default: the location
    # group with the same index (modulo the number of location groups)
    user_locations: dict[int, list[int]] = field(default_factory=dict)
    dwell: int = 300
    churn: bool = False
    start_ts: int = DEFAULT_START
    cell_axis: str = "domain"
    # location axis only: user group -> {domain group: weight}; default is
    # the domain group with the same index (modulo the number of groups)
    interests: dict[int, dict[int, float]] = field(default_factory=dict)
    # location axis only: if > 0, each group's interest weights shift by one
    # domain group every ``interest_period`` seconds
    interest_period: int = 0
    # location axis only: relative flow share of a cell's buildings, rolled
    # by one building every ``occupancy_period`` seconds (default: dwell);
    # empty means equal shares. A period that is a multiple of dwell times
    # the building-list length keeps every user's long-run profile equal.
    occupancy: list[float] = field(default_factory=list)
    occupancy_period: int = 0

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "PlantedConfig":
        try:
            cells = [CellModel.from_dict(c) for c in d["cell_models"]]
            cfg = cls(
                n_users=int(d["n_users"]),
                n_domains=int(d["n_domains"]),
                n_buildings=int(d["n_buildings"]),
                user_groups=[list(map(int, g)) for g in d["user_groups"]],
                domain_groups=[list(map(int, g)) for g in d["domain_groups"]],
                location_groups=[list(map(int, g)) for g in d["location_groups"]],
                cell_models=cells,
                duration=int(d["duration"]),
                seed=int(d.get("seed", 0)),
                user_locations={int(k): list(map(int, v)) for k, v in d.get("user_locations", {}).items()},
                dwell=int(d.get("dwell", 300)),
                churn=bool(d.get("churn", False)),
                start_ts=int(d.get("start_ts", DEFAULT_START)),
                cell_axis=str(d.get("cell_axis", "domain")),
                interests={int(g): {int(k): float(v) for k, v in w.items()}
                           for g, w in d.get("interests", {}).items()},
                interest_period=int(d.get("interest_period", 0)),
                occupancy=[float(v) for v in d.get("occupancy", [])],
                occupancy_period=int(d.get("occupancy_period", 0)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidConfigError(f"malformed planted config: {exc}") from exc
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "PlantedConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["user_locations"] = {str(k): v for k, v in sorted(self.user_locations.items())}
        d["interests"] = {str(g): {str(k): v for k, v in sorted(w.items())} for g, w in sorted(self.interests.items())}
        return d

    def validate(self) -> None:
        if self.duration < 60:
            raise InvalidConfigError("duration must be at least 60 seconds")
        if self.dwell < 1:
            raise InvalidConfigError("dwell must be positive")
        if self.cell_axis not in ("domain", "location"):
            raise InvalidConfigError(f"cell_axis must be 'domain' or 'location', got {self.cell_axis!r}")
        if self.interest_period < 0:
            raise InvalidConfigError("interest_period must be >= 0")
        if self.occupancy_period < 0:
            raise InvalidConfigError("occupancy_period must be >= 0")
        if any(w <= 0 for w in self.occupancy):
            raise InvalidConfigError("occupancy weights must be positive")
        entity_groups = self.domain_groups if self.cell_axis == "domain" else self.location_groups
        for name, groups, n in (
            ("user_groups", self.user_groups, self.n_users),
            ("domain_groups", self.domain_groups, self.n_domains),
            ("location_groups", self.location_groups, self.n_buildings),
        ):
            flat = [i for g in groups for i in g]
            if any(not g for g in groups):
                raise InvalidConfigError(f"{name} contains an empty group")
            if sorted(flat) != list(range(n)):
                raise InvalidConfigError(f"{name} must partition 0..{n - 1} disjointly")
        seen = set()
        for c in self.cell_models:
            if not 0 <= c.user_group < len(self.user_groups):
                raise InvalidConfigError(f"cell references unknown user group {c.user_group}")
            if not 0 <= c.entity_group < len(entity_groups):
                raise InvalidConfigError(f"cell references unknown {self.cell_axis} group {c.entity_group}")
            if (c.user_group, c.entity_group) in seen:
                raise InvalidConfigError(f"duplicate cell ({c.user_group}, {c.entity_group})")
            seen.add((c.user_group, c.entity_group))
            try:
                c.to_params()
            except (ValueError, FlowlensError) as exc:
                raise InvalidConfigError(f"cell ({c.user_group}, {c.entity_group}): {exc}") from exc
        for g, blds in self.user_locations.items():
            if not 0 <= g < len(self.user_groups):
                raise InvalidConfigError(f"user_locations references unknown user group {g}")
            if not blds or any(not 0 <= b < self.n_buildings for b in blds):
                raise InvalidConfigError(f"user_locations[{g}] must list valid building indices")

        for g, weights in self.interests.items():
            if not 0 <= g < len(self.user_groups):
                raise InvalidConfigError(f"interests references unknown user group {g}")
            if not weights or any(not 0 <= dg < len(self.domain_groups) for dg in weights):
                raise InvalidConfigError(f"interests[{g}] must name valid domain groups")
            if any(w < 0 for w in weights.values()) or sum(weights.values()) <= 0:
                raise InvalidConfigError(f"interests[{g}] needs non-negative weights with a positive sum")
        if self.cell_axis == "location":
            for c in self.cell_models:
                blds = self.buildings_of(c.user_group)
                if not set(blds) & set(self.location_groups[c.entity_group]):
                    raise InvalidConfigError(
                        f"user group {c.user_group} never visits location group {c.entity_group}")
                if len(self.user_groups[c.user_group]) < len(blds):
                    raise InvalidConfigError(
                        f"user group {c.user_group} is smaller than its building list")

    def buildings_of(self, group: int) -> list[int]:
        if group in self.user_locations:
            return self.user_locations[group]
        if self.cell_axis == "location":
            visited = sorted({b for c in self.cell_models if c.user_group == group
                              for b in self.location_groups[c.entity_group]})
            if visited:
                return visited
        return self.location_groups[group % len(self.location_groups)]

    def interests_of(self, group: int) -> dict[int, float]:
        if group in self.interests:
            return self.interests[group]
        return {group % len(self.domain_groups): 1.0}


def mac_of(u: int) -> str:
    return "02:00:00:%02x:%02x:%02x" % ((u >> 16) & 255, (u >> 8) & 255, u & 255)


def ip_of(slot: int) -> str:
    j = slot + 1
    return f"10.{(j // 62500) % 250}.{(j // 250) % 250}.{j % 250 + 1}"


def domain_name(d: int) -> str:
    return f"dom{d:03d}"


def domain_network(d: int) -> str:
    return f"100.{64 + d // 256}.{d % 256}"


def building_name(b: int) -> str:
    return f"bldg{b:02d}"


def _fmt_ts(us: int) -> str:
    return repr(us / _US)


@dataclass
class GeneratedTraces:
    flows: Path
    dhcp: Path
    wlan: Path
    domains: Path
    truth: Path
    n_flows: int


def _cell_seed(seed: int, cell: CellModel, stream: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, cell.user_group, cell.entity_group, stream])


def _cell_flows(cfg: PlantedConfig, cell: CellModel) -> dict[str, np.ndarray]:
    params = cell.to_params()
    draw_seed = int(_cell_seed(cfg.seed, cell, 0).generate_state(1, np.uint64)[0])
    draws = params.sample(cfg.duration, draw_seed)
    counts = np.clip(np.rint(draws), 0, None).astype(np.int64)
    rng = np.random.default_rng(_cell_seed(cfg.seed, cell, 1))
    total = int(counts.sum())
    bins = np.repeat(np.arange(cfg.duration, dtype=np.int64), counts)
    users = np.asarray(cfg.user_groups[cell.user_group])
    if cfg.cell_axis == "domain":
        doms = np.asarray(cfg.domain_groups[cell.entity_group])
        user = users[rng.integers(0, users.size, total)]
        domain = doms[rng.integers(0, doms.size, total)]
    else:
        user = _users_at(cfg, cell, bins, rng)
        domain = _interest_domains(cfg, cell.user_group, bins, rng)
    return {
        "bin": bins,
        "offset_us": rng.integers(0, _US, total),
        "user": user,
        "domain": domain,
        "host": rng.integers(1, 255, total),
        "reverse": rng.random(total) < 0.5,
        "sport": rng.integers(1024, 65536, total),
        "dport": rng.choice(np.array([443, 80, 8080, 53]), total, p=[0.7, 0.2, 0.05, 0.05]),
        "bytes": np.maximum(40, np.rint(rng.lognormal(7.5, 1.2, total))).astype(np.int64),
        "dur_us": rng.integers(1_000, 5 * _US, total),
    }


def _users_at(cfg: PlantedConfig, cell: CellModel, bins: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """A building of the cell (by occupancy share), then a uniform user of the group standing in it."""
    users = np.asarray(cfg.user_groups[cell.user_group])
    blds = cfg.buildings_of(cell.user_group)
    m = len(blds)
    here = set(cfg.location_groups[cell.entity_group])
    slots = np.array([j for j, b in enumerate(blds) if b in here])
    blk = bins // cfg.dwell
    if cfg.occupancy:
        occ = np.asarray(cfg.occupancy, dtype=float)
        period = bins // (cfg.occupancy_period or cfg.dwell)
        # share of slot s in period t: occ[(s + t) % len(occ)], renormalised over the slots
        shares = occ[(np.arange(slots.size)[None, :] + np.arange(int(period.max(initial=0)) + 1)[:, None]) % occ.size]
        cum = np.cumsum(shares / shares.sum(axis=1, keepdims=True), axis=1)
        u = rng.random(bins.size)
        pick = np.minimum((u[:, None] >= cum[period]).sum(axis=1), slots.size - 1)
        j = slots[pick]
    else:
        j = slots[rng.integers(0, slots.size, bins.size)]
    # user at position i sits in blds[(i + blk) % m]; positions r, r+m, ... share a slot
    r = (j - blk) % m
    n_here = (users.size - r + m - 1) // m
    pos = r + m * (rng.random(bins.size) * n_here).astype(np.int64)
    return users[pos]


def _interest_domains(cfg: PlantedConfig, group: int, bins: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    interests = cfg.interests_of(group)
    dgroups = np.array(sorted(interests))
    weights = np.array([interests[g] for g in dgroups], dtype=float)
    weights /= weights.sum()
    if cfg.interest_period > 0:
        shift = (bins // cfg.interest_period) % dgroups.size
    else:
        shift = np.zeros(bins.size, dtype=np.int64)
    # inverse-CDF draw against the weights rolled by ``shift``
    cum = np.cumsum(weights)
    pick = np.minimum(np.searchsorted(cum, rng.random(bins.size), side="right"), dgroups.size - 1)
    dg = dgroups[(pick + shift) % dgroups.size]
    sizes = np.array([len(g) for g in cfg.domain_groups])
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    flat = np.array([d for g in cfg.domain_groups for d in g])
    return flat[offsets[dg] + (rng.random(bins.size) * sizes[dg]).astype(np.int64)]


def _ip_slot(cfg: PlantedConfig, users: np.ndarray, blocks: np.ndarray) -> np.ndarray:
    """IP pool slot held by each user in each churn block."""
    if not cfg.churn:
        return users
    n_blocks = int(blocks.max()) + 1 if blocks.size else 1
    perms = _churn_perms(cfg, n_blocks)
    return perms[blocks, users]


def _churn_perms(cfg: PlantedConfig, n_blocks: int) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed & 0xFFFFFFFFFFFFFFFF, 0xC4, 0x52]))
    return np.stack([rng.permutation(cfg.n_users) for _ in range(n_blocks)])


def generate(cfg: PlantedConfig, out_dir, seed: int | None = None) -> GeneratedTraces:
    """Write flows.csv, dhcp.csv, wlan.csv, domains.csv and truth.json into ``out_dir``."""
    if seed is not None:
        cfg = PlantedConfig.from_dict({**cfg.to_dict(), "seed": seed})
    cfg.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    user_group = np.empty(cfg.n_users, dtype=np.int64)
    pos_in_group = np.empty(cfg.n_users, dtype=np.int64)
    for g, members in enumerate(cfg.user_groups):
        for i, u in enumerate(members):
            user_group[u] = g
            pos_in_group[u] = i

    parts = [_cell_flows(cfg, c) for c in cfg.cell_models]
    flows = {k: np.concatenate([p[k] for p in parts]) if parts else np.empty(0, np.int64) for k in
             ("bin", "offset_us", "user", "domain", "host", "reverse", "sport", "dport", "bytes", "dur_us")}
    start_us = (cfg.start_ts + flows["bin"]) * _US + flows["offset_us"]
    order = np.argsort(start_us, kind="stable")
    n_blocks = (cfg.duration + cfg.dwell - 1) // cfg.dwell
    blocks = flows["bin"] // cfg.dwell
    slots = _ip_slot(cfg, flows["user"], blocks)

    with open(out / "flows.csv", "w") as fh:
        fh.write("start_ts,end_ts,src_ip,dst_ip,src_port,dst_port,protocol,bytes,packets\n")
        for i in order:
            user_ip = ip_of(int(slots[i]))
            remote = f"{domain_network(int(flows['domain'][i]))}.{int(flows['host'][i])}"
            dport = int(flows["dport"][i])
            sport = int(flows["sport"][i])
            src, dst = (user_ip, remote) if not flows["reverse"][i] else (remote, user_ip)
            if flows["reverse"][i]:
                sport, dport = dport, sport
            nbytes = int(flows["bytes"][i])
            s_us = int(start_us[i])
            fh.write(
                f"{_fmt_ts(s_us)},{_fmt_ts(s_us + int(flows['dur_us'][i]))},{src},{dst},{sport},{dport},"
                f"{17 if 53 in (sport, dport) else 6},{nbytes},{max(1, nbytes // 1200)}\n"
            )

    # DHCP: one lease per user at the start, or a fresh IP shuffle every dwell block under churn
    with open(out / "dhcp.csv", "w") as fh:
        fh.write("ts,ip,mac\n")
        if cfg.churn:
            perms = _churn_perms(cfg, n_blocks)
            for b in range(n_blocks):
                ts = (cfg.start_ts + b * cfg.dwell) * _US
                for u in range(cfg.n_users):
                    fh.write(f"{_fmt_ts(ts)},{ip_of(int(perms[b, u]))},{mac_of(u)}\n")
        else:
            for u in range(cfg.n_users):
                fh.write(f"{_fmt_ts(cfg.start_ts * _US)},{ip_of(u)},{mac_of(u)}\n")

    with open(out / "wlan.csv", "w") as fh:
        fh.write("start_ts,end_ts,mac,ap_id,building_id\n")
        end_all = (cfg.start_ts + cfg.duration) * _US
        for u in range(cfg.n_users):
            blds = cfg.buildings_of(int(user_group[u]))
            i = int(pos_in_group[u])
            if len(blds) == 1 and not cfg.churn:
                b = blds[0]
                fh.write(f"{_fmt_ts(cfg.start_ts * _US)},{_fmt_ts(end_all)},{mac_of(u)},ap-{b:02d}-0,{building_name(b)}\n")
                continue
            for blk in range(n_blocks):
                b = blds[(i + blk) % len(blds)]
                s = (cfg.start_ts + blk * cfg.dwell) * _US
                e = min((cfg.start_ts + (blk + 1) * cfg.dwell) * _US, end_all)
                fh.write(f"{_fmt_ts(s)},{_fmt_ts(e)},{mac_of(u)},ap-{b:02d}-{blk % 2},{building_name(b)}\n")

    with open(out / "domains.csv", "w") as fh:
        fh.write("prefix,domain\n")
        for d in range(cfg.n_domains):
            fh.write(f"{domain_network(d)}.0,{domain_name(d)}\n")

    cell_totals = {f"{c.user_group},{c.entity_group}": int(p["bin"].size) for c, p in zip(cfg.cell_models, parts)}
    truth = {
        "config": cfg.to_dict(),
        "users": {mac_of(u): int(user_group[u]) for u in range(cfg.n_users)},
        "domains": {domain_name(d): g for g, members in enumerate(cfg.domain_groups) for d in members},
        "buildings": {building_name(b): g for g, members in enumerate(cfg.location_groups) for b in members},
        "user_buildings": {mac_of(u): [building_name(b) for b in cfg.buildings_of(int(user_group[u]))]
                           for u in range(cfg.n_users)},
        "cell_flows": cell_totals,
        "n_flows": int(flows["bin"].size),
    }
    with open(out / "truth.json", "w") as fh:
        json.dump(truth, fh, indent=1, sort_keys=True)
        fh.write("\n")
    log.info("generate: %d flows over %d s into %s", truth["n_flows"], cfg.duration, out)
    return GeneratedTraces(out / "flows.csv", out / "dhcp.csv", out / "wlan.csv", out / "domains.csv",
                           out / "truth.json", truth["n_flows"])
