"""Information-theoretic co-clustering of user x entity traffic matrices.

Rows (users) and columns (domains or buildings) are clustered jointly so
that the clustered joint distribution keeps as much mutual information as
possible. Given row clusters x^ and column clusters y^, the approximation is

    q(x, y) = p(x^, y^) p(x | x^) p(y | y^)

and the loss I(X;Y) - I(X^;Y^) equals KL(p || q). Rows are reassigned by
KL distance of p(Y|x) to the prototypes q(Y|x^), then columns symmetrically.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import AllZeroError, EmptyClusterError, FlowlensError, InvalidKLError, UnassignedEntityError
from .ingest import EnrichedFlow, TrafficSeries, UNKNOWN, build_series, series_frame
from .kstest import DEFAULT_ALPHA, FittedModel, select_best_fit

log = logging.getLogger(__name__)

DEFAULT_K = 10
DEFAULT_L = 10
DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITER = 100
DEFAULT_N_INIT = 10


@dataclass
class JointDistribution:
    p: np.ndarray
    row_labels: list[str] = field(default_factory=list)
    col_labels: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float)
        if self.p.ndim != 2:
            raise ValueError("joint distribution must be a matrix")
        if np.any(self.p < 0) or abs(self.p.sum() - 1.0) > 1e-12:
            raise ValueError("joint distribution must be non-negative and sum to 1")
        if not self.row_labels:
            self.row_labels = [str(i) for i in range(self.p.shape[0])]
        if not self.col_labels:
            self.col_labels = [str(j) for j in range(self.p.shape[1])]

    @property
    def px(self) -> np.ndarray:
        return self.p.sum(axis=1)

    @property
    def py(self) -> np.ndarray:
        return self.p.sum(axis=0)

    @property
    def shape(self) -> tuple[int, int]:
        return self.p.shape

    @property
    def nnz(self) -> int:
        return int(np.count_nonzero(self.p))

    def transpose(self) -> "JointDistribution":
        return JointDistribution(self.p.T.copy(), list(self.col_labels), list(self.row_labels))


def normalize_joint(counts, row_labels=None, col_labels=None) -> JointDistribution:
    c = np.asarray(counts, dtype=float)
    if c.ndim != 2 or c.size == 0:
        raise ValueError("counts must be a non-empty matrix")
    if np.any(c < 0):
        raise ValueError("counts must be non-negative")
    total = c.sum()
    if total <= 0:
        raise AllZeroError("count matrix has no mass")
    p = c / total
    # absorb rounding so the total is 1 to machine precision
    p[np.unravel_index(np.argmax(p), p.shape)] += 1.0 - p.sum()
    return JointDistribution(p, list(row_labels or []), list(col_labels or []))


def _mi(p: np.ndarray) -> float:
    px = p.sum(axis=1, keepdims=True)
    py = p.sum(axis=0, keepdims=True)
    nz = p > 0
    ratio = p[nz] / (px @ py)[nz]
    return float(np.sum(p[nz] * np.log2(ratio)))


def mutual_information(p) -> float:
    """I(X;Y) in bits; 0 log 0 terms vanish."""
    arr = p.p if isinstance(p, JointDistribution) else np.asarray(p, dtype=float)
    return max(_mi(arr), 0.0)


def _onehot(assign: np.ndarray, n: int) -> np.ndarray:
    m = np.zeros((assign.size, n))
    m[np.arange(assign.size), assign] = 1.0
    return m


def compressed(p: np.ndarray, rows: np.ndarray, cols: np.ndarray, k: int, l: int) -> np.ndarray:
    """p(x^, y^): block sums of p."""
    return _onehot(rows, k).T @ p @ _onehot(cols, l)


def approximation(p: np.ndarray, rows: np.ndarray, cols: np.ndarray, k: int, l: int) -> np.ndarray:
    """q(x, y) = p(x^, y^) p(x|x^) p(y|y^)."""
    ph = compressed(p, rows, cols, k, l)
    px, py = p.sum(axis=1), p.sum(axis=0)
    pxh, pyh = ph.sum(axis=1), ph.sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        rx = np.where(pxh[rows] > 0, px / pxh[rows], 0.0)
        ry = np.where(pyh[cols] > 0, py / pyh[cols], 0.0)
    return ph[np.ix_(rows, cols)] * rx[:, None] * ry[None, :]


def _loss(p: np.ndarray, rows, cols, k, l, mi: float) -> float:
    return max(mi - _mi(compressed(p, rows, cols, k, l)), 0.0)


@dataclass
class CoClustering:
    row_assign: np.ndarray
    col_assign: np.ndarray
    k: int
    l: int
    q: np.ndarray = field(repr=False)
    loss_trace: list[float]
    iterations: int
    row_labels: list[str] = field(default_factory=list)
    col_labels: list[str] = field(default_factory=list)
    mutual_information: float = 0.0

    @property
    def loss(self) -> float:
        return self.loss_trace[-1]

    def row_cluster_of(self) -> dict[str, int]:
        return dict(zip(self.row_labels, self.row_assign.tolist()))

    def col_cluster_of(self) -> dict[str, int]:
        return dict(zip(self.col_labels, self.col_assign.tolist()))

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "l": self.l,
            "rows": self.row_cluster_of(),
            "cols": self.col_cluster_of(),
            "loss_trace": list(self.loss_trace),
            "iterations": self.iterations,
            "mutual_information": self.mutual_information,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CoClustering":
        rows, cols = d["rows"], d["cols"]
        return cls(
            row_assign=np.array(list(rows.values()), dtype=int),
            col_assign=np.array(list(cols.values()), dtype=int),
            k=int(d["k"]),
            l=int(d["l"]),
            q=np.zeros((0, 0)),
            loss_trace=[float(v) for v in d["loss_trace"]],
            iterations=int(d["iterations"]),
            row_labels=list(rows),
            col_labels=list(cols),
            mutual_information=float(d.get("mutual_information", 0.0)),
        )


def _initial(mass: np.ndarray, n_clusters: int, rng: np.random.Generator, what: str) -> np.ndarray:
    """Round-robin over a seeded shuffle of the non-empty items; empty items go to cluster 0."""
    live = np.flatnonzero(mass > 0)
    if live.size < n_clusters:
        raise EmptyClusterError(f"only {live.size} non-empty {what} for {n_clusters} clusters")
    assign = np.zeros(mass.size, dtype=int)
    assign[rng.permutation(live)] = np.arange(live.size) % n_clusters
    return assign


def _reassign(p: np.ndarray, rows: np.ndarray, cols: np.ndarray, k: int, l: int) -> np.ndarray:
    """Best row cluster for every row, against prototypes frozen before the step.

    KL(p(Y|x) || q(Y|x^)) differs from -sum_y^ p(y^|x) log p(y^|x^) by a term
    that does not depend on x^, so the latter is minimised.
    """
    a = p @ _onehot(cols, l)  # p(x, y^)
    px = a.sum(axis=1)
    ph = _onehot(rows, k).T @ a  # p(x^, y^)
    pxh = ph.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        proto = np.where(pxh[:, None] > 0, ph / pxh[:, None], 0.0)
        cond = np.where(px[:, None] > 0, a / px[:, None], 0.0)
        logp = np.where(proto > 0, np.log(proto), 0.0)
    cost = -(cond @ logp.T)
    # support violation: the row puts mass where the prototype has none
    cost[(cond > 0).astype(float) @ (proto <= 0).T.astype(float) > 0] = np.inf
    cost[:, pxh <= 0] = np.inf
    new = np.argmin(cost, axis=1)  # first index wins ties
    new[px <= 0] = 0
    return new


def _row_kl(p: np.ndarray, rows, cols, k, l) -> np.ndarray:
    """p(x) KL(p(Y|x) || q(Y|x^)) for every row."""
    q = approximation(p, rows, cols, k, l)
    nz = p > 0
    if np.any(nz & (q <= 0)):
        raise InvalidKLError("approximation misses support of p")
    terms = np.zeros_like(p)
    terms[nz] = p[nz] * np.log(p[nz] / q[nz])
    return terms.sum(axis=1)


def _repair(p: np.ndarray, rows: np.ndarray, cols: np.ndarray, k: int, l: int) -> np.ndarray:
    """Refill empty row clusters by splitting off the worst-fitting row.

    A split never lowers I(X^;Y^), so the loss cannot go up.
    """
    px = p.sum(axis=1)
    while True:
        live = np.bincount(rows[px > 0], minlength=k)
        empty = np.flatnonzero(live == 0)
        if empty.size == 0:
            return rows
        donors = live[rows] >= 2
        candidates = np.flatnonzero(donors & (px > 0))
        if candidates.size == 0:
            raise EmptyClusterError("cannot refill an empty cluster")
        kl = _row_kl(p, rows, cols, k, l)
        x = candidates[np.argmax(kl[candidates])]
        rows = rows.copy()
        rows[x] = empty[0]


def _half_step(p, rows, cols, k, l):
    new = _reassign(p, rows, cols, k, l)
    return _repair(p, new, cols, k, l)


def _js_to(cond: np.ndarray, centre: np.ndarray) -> np.ndarray:
    """Jensen-Shannon divergence of every row of ``cond`` to one distribution."""
    m = 0.5 * (cond + centre)
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(cond > 0, cond * np.log(cond / m), 0.0).sum(axis=1)
        b = np.where(centre > 0, centre * np.log(centre / m), 0.0).sum(axis=1)
    return np.maximum(0.5 * (a + b), 0.0)


def _seeded(mass: np.ndarray, p: np.ndarray, n_clusters: int, rng: np.random.Generator, what: str) -> np.ndarray:
    """Spread-out seeding: pick rows one by one with probability proportional to
    mass times divergence from the closest pick, then attach every row to its
    closest pick."""
    live = np.flatnonzero(mass > 0)
    if live.size < n_clusters:
        raise EmptyClusterError(f"only {live.size} non-empty {what} for {n_clusters} clusters")
    cond = p[live] / mass[live, None]
    w = mass[live]
    picks = [int(rng.choice(live.size, p=w / w.sum()))]
    dist = _js_to(cond, cond[picks[0]])
    for _ in range(1, n_clusters):
        score = w * dist
        if score.sum() <= 0:
            # fewer distinct rows than clusters: any unpicked row will do
            free = np.setdiff1d(np.arange(live.size), picks)
            nxt = int(rng.choice(free))
        else:
            nxt = int(rng.choice(live.size, p=score / score.sum()))
        picks.append(nxt)
        dist = np.minimum(dist, _js_to(cond, cond[nxt]))
    d = np.stack([_js_to(cond, cond[i]) for i in picks], axis=1)
    d[picks, np.arange(n_clusters)] = -1.0  # every pick anchors its own cluster
    assign = np.zeros(mass.size, dtype=int)
    assign[live] = np.argmin(d, axis=1)
    return assign


INITS = ("spread", "random")


def _single_run(arr, k, l, rng, max_iter, tol, init, mi):
    if init == "random":
        rows = _initial(arr.sum(axis=1), k, rng, "rows")
        cols = _initial(arr.sum(axis=0), l, rng, "columns")
    else:
        rows = _seeded(arr.sum(axis=1), arr, k, rng, "rows")
        cols = _seeded(arr.sum(axis=0), arr.T, l, rng, "columns")
        rows = _repair(arr, rows, cols, k, l)
        cols = _repair(arr.T, cols, rows, l, k)
    trace = [_loss(arr, rows, cols, k, l, mi)]
    it = 0
    for it in range(1, max_iter + 1):
        rows = _half_step(arr, rows, cols, k, l)
        cols = _half_step(arr.T, cols, rows, l, k)
        trace.append(_loss(arr, rows, cols, k, l, mi))
        if trace[-2] - trace[-1] < tol:
            break
    return rows, cols, trace, it


def itcc(
    p: JointDistribution | np.ndarray,
    k: int = DEFAULT_K,
    l: int = DEFAULT_L,
    seed: int = 0,
    max_iter: int = DEFAULT_MAX_ITER,
    tol: float = DEFAULT_TOL,
    n_init: int = 1,
    init: str = "spread",
) -> CoClustering:
    """Co-cluster rows into ``k`` and columns into ``l`` groups.

    One iteration is a row half-step then a column half-step, each against
    prototypes recomputed from the previous half-step. ``loss_trace[0]`` is
    the loss of the initial assignment; iteration stops once an iteration
    improves by less than ``tol``. With ``n_init > 1`` independent starts are
    drawn from the same seeded stream and the lowest final loss is kept
    (earliest start on ties).

    ``init="spread"`` seeds clusters from mutually distant rows/columns;
    ``init="random"`` deals a seeded shuffle round-robin into the clusters.
    """
    jd = p if isinstance(p, JointDistribution) else JointDistribution(p)
    arr = jd.p
    nx, ny = arr.shape
    if not (1 <= k <= nx and 1 <= l <= ny):
        raise InvalidKLError(f"k={k}, l={l} invalid for a {nx}x{ny} matrix")
    if max_iter < 1 or n_init < 1:
        raise ValueError("max_iter and n_init must be >= 1")
    if init not in INITS:
        raise ValueError(f"init must be one of {INITS}")
    rng = np.random.default_rng(seed)
    mi = _mi(arr)
    best = None
    for _ in range(n_init):
        run = _single_run(arr, k, l, rng, max_iter, tol, init, mi)
        if best is None or run[2][-1] < best[2][-1]:
            best = run
    rows, cols, trace, it = best
    log.debug("itcc k=%d l=%d: %d iterations, loss %.6g of %.6g bits", k, l, it, trace[-1], mi)
    return CoClustering(
        row_assign=rows,
        col_assign=cols,
        k=k,
        l=l,
        q=approximation(arr, rows, cols, k, l),
        loss_trace=trace,
        iterations=it,
        row_labels=list(jd.row_labels),
        col_labels=list(jd.col_labels),
        mutual_information=max(mi, 0.0),
    )


# ----------------------------------------------------------- traffic matrices

MODES = {"domain": "domain", "location": "building"}


def _entity(flow: EnrichedFlow, mode: str) -> str | None:
    if mode == "domain":
        return flow.domain
    return None if flow.building == UNKNOWN else flow.building


def _check_mode(mode: str) -> str:
    mode = str(mode).lower()
    if mode not in MODES:
        raise ValueError(f"mode must be one of {sorted(MODES)}, got {mode!r}")
    return mode


def traffic_matrix(flows: Sequence[EnrichedFlow], mode: str = "domain", weight: str = "flows") -> JointDistribution:
    """Joint user x entity distribution from flow counts (or bytes)."""
    mode = _check_mode(mode)
    if weight not in ("flows", "bytes"):
        raise ValueError("weight must be 'flows' or 'bytes'")
    pairs = [(f.user, e, f.bytes if weight == "bytes" else 1) for f in flows if (e := _entity(f, mode)) is not None]
    if not pairs:
        raise AllZeroError(f"no flows with a known {MODES[mode]}")
    users = sorted({u for u, _, _ in pairs})
    ents = sorted({e for _, e, _ in pairs})
    ui = {u: i for i, u in enumerate(users)}
    ei = {e: j for j, e in enumerate(ents)}
    counts = np.zeros((len(users), len(ents)))
    for u, e, w in pairs:
        counts[ui[u], ei[e]] += w
    return normalize_joint(counts, users, ents)


@dataclass
class GroupCellSeries:
    """Pooled per-second series of each (row cluster, column cluster) cell."""

    k: int
    l: int
    cells: dict[tuple[int, int], TrafficSeries]
    flow_counts: dict[tuple[int, int], int]

    def is_empty(self, r: int, c: int) -> bool:
        return self.flow_counts.get((r, c), 0) == 0

    def non_empty(self) -> list[tuple[int, int]]:
        return sorted(cell for cell, n in self.flow_counts.items() if n > 0)

    def series(self) -> dict[str, TrafficSeries]:
        """Non-empty cells keyed ``"r,c"``."""
        return {cell_key(r, c): self.cells[(r, c)] for r, c in self.non_empty()}


def cell_key(r: int, c: int) -> str:
    return f"{r},{c}"


def extract_cell_series(
    flows: Sequence[EnrichedFlow],
    cc: CoClustering,
    mode: str = "domain",
    bin_width: float = 1.0,
    frame: tuple[float, int] | None = None,
) -> GroupCellSeries:
    mode = _check_mode(mode)
    rows = cc.row_cluster_of()
    cols = cc.col_cluster_of()

    def key(f: EnrichedFlow):
        e = _entity(f, mode)
        if e is None:
            return None
        if f.user not in rows:
            raise UnassignedEntityError(f"user {f.user!r} has no row cluster")
        if e not in cols:
            raise UnassignedEntityError(f"{MODES[mode]} {e!r} has no column cluster")
        return cell_key(rows[f.user], cols[e])

    frame = frame or series_frame(flows, bin_width)
    pooled = build_series(flows, key, bin_width, frame)
    cells, counts = {}, {}
    t0, length = frame
    for r in range(cc.k):
        for c in range(cc.l):
            s = pooled.get(cell_key(r, c))
            if s is None:
                s = TrafficSeries(cell_key(r, c), t0, np.zeros(length, dtype=np.int64))
            cells[(r, c)] = s
            counts[(r, c)] = s.total
    return GroupCellSeries(cc.k, cc.l, cells, counts)


def fit_cells(cells: GroupCellSeries, alpha: float = DEFAULT_ALPHA) -> dict[str, FittedModel]:
    """Best fit for every non-empty cell; cells no family can describe are left out."""
    out = {}
    for r, c in cells.non_empty():
        key = cell_key(r, c)
        try:
            out[key] = select_best_fit(cells.cells[(r, c)].counts, alpha, entity_key=key)
        except FlowlensError as exc:
            log.warning("cell %s not fitted: %s", key, exc)
    return out


def best_fit_grid(cells: GroupCellSeries, models: dict[str, FittedModel]) -> list[list[str]]:
    """k x l letter grid of best-fit families; '' marks an empty cell, '?' one without a fit."""
    grid = []
    for r in range(cells.k):
        row = []
        for c in range(cells.l):
            if cells.is_empty(r, c):
                row.append("")
            else:
                m = models.get(cell_key(r, c))
                row.append(m.family.letter if m else "?")
        grid.append(row)
    return grid


def cocluster_flows(
    flows: Sequence[EnrichedFlow],
    mode: str = "domain",
    k: int = DEFAULT_K,
    l: int = DEFAULT_L,
    seed: int = 0,
    max_iter: int = DEFAULT_MAX_ITER,
    tol: float = DEFAULT_TOL,
    weight: str = "flows",
    n_init: int = DEFAULT_N_INIT,
) -> CoClustering:
    jd = traffic_matrix(flows, mode, weight)
    nx, ny = jd.shape
    if k > nx or l > ny:
        raise InvalidKLError(f"k={k}, l={l} exceed the {nx} users x {ny} {MODES[_check_mode(mode)]}s available")
    return itcc(jd, k, l, seed=seed, max_iter=max_iter, tol=tol, n_init=n_init)


def adjusted_rand_index(a, b) -> float:
    """Adjusted Rand index between two labelings (1 for identical up to relabeling)."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError("labelings must have equal length")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1))
    np.add.at(table, (ai, bi), 1)
    comb = lambda v: v * (v - 1) / 2.0  # noqa: E731
    s_ij = comb(table).sum()
    s_a = comb(table.sum(axis=1)).sum()
    s_b = comb(table.sum(axis=0)).sum()
    expected = s_a * s_b / comb(a.size) if a.size > 1 else 0.0
    top = 0.5 * (s_a + s_b)
    if math.isclose(top, expected):
        return 1.0
    return float((s_ij - expected) / (top - expected))
