"""Louvain modularity optimisation (local moves + aggregation, repeated).

The first pass visits nodes in ascending id order. Its partition is then
polished with a Kernighan-Lin style vertex mover followed by further
aggregation rounds, and a fixed number of extra passes over seeded visit
orders is tried the same way; the highest modularity wins, the ascending pass
on ties. Everything is deterministic for a given ``seed``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import SimilarityGraph

_EPS = 1e-12
DEFAULT_RESTARTS = 30


def modularity(adjacency: np.ndarray, labels, resolution: float = 1.0) -> float:
    """Newman modularity of a partition of a (weighted, symmetric) graph."""
    a = np.asarray(adjacency, dtype=float)
    two_m = a.sum()
    if two_m == 0:
        return 0.0
    _, labels = np.unique(np.asarray(labels), return_inverse=True)
    inside = a[labels[:, None] == labels[None, :]].sum()
    tot = np.bincount(labels, weights=a.sum(axis=1))
    return float(inside / two_m - resolution * np.sum((tot / two_m) ** 2))


@dataclass
class LouvainResult:
    communities: list[int]
    modularity: float
    q_trace: list[float]
    levels: int


def _move_nodes(w: np.ndarray, comm: np.ndarray, resolution: float) -> bool:
    """One local-moving phase in ascending node order. Returns True if any node moved."""
    n = w.shape[0]
    k = w.sum(axis=1)
    two_m = k.sum()
    m = two_m / 2.0
    tot = np.bincount(comm, weights=k, minlength=n)
    moved_any = False
    while True:
        moved = False
        for i in range(n):
            ci = comm[i]
            tot[ci] -= k[i]
            nbrs = np.nonzero(w[i])[0]
            nbrs = nbrs[nbrs != i]
            links = {}
            for j in nbrs:
                links[comm[j]] = links.get(comm[j], 0.0) + w[i, j]
            # gain of inserting the isolated node i into community c
            best_c = ci
            best_gain = links.get(ci, 0.0) / m - resolution * tot[ci] * k[i] / (2 * m * m)
            for c in sorted(links):
                gain = links[c] / m - resolution * tot[c] * k[i] / (2 * m * m)
                if gain > best_gain + _EPS:
                    best_c, best_gain = c, gain
            tot[best_c] += k[i]
            if best_c != ci:
                comm[i] = best_c
                moved = True
                moved_any = True
        if not moved:
            return moved_any


def _relabel(comm: np.ndarray) -> np.ndarray:
    """Renumber communities 0, 1, ... in order of first appearance."""
    seen: dict[int, int] = {}
    return np.array([seen.setdefault(c, len(seen)) for c in comm.tolist()], dtype=int)


def _aggregate(w: np.ndarray, comm: np.ndarray) -> np.ndarray:
    s = np.zeros((w.shape[0], comm.max() + 1))
    s[np.arange(w.shape[0]), comm] = 1.0
    return s.T @ w @ s


def _unfold(w: np.ndarray, membership: np.ndarray, resolution: float, trace: list[float] | None = None) -> tuple[np.ndarray, int]:
    """Louvain levels starting from ``membership``; returns (membership, levels run)."""
    membership = _relabel(membership)
    levels = 0
    while True:
        current = _aggregate(w, membership)
        comm = np.arange(current.shape[0])
        if current.shape[0] == 1 or not _move_nodes(current, comm, resolution):
            return membership, levels
        membership = _relabel(_relabel(comm)[membership])
        levels += 1
        if trace is not None:
            trace.append(modularity(w, membership, resolution))


def _vertex_mover(w: np.ndarray, membership: np.ndarray, resolution: float) -> np.ndarray:
    """Kernighan-Lin refinement: move every node once, best move first (even if it
    lowers Q), keep the best prefix, repeat while that helps."""
    n = w.shape[0]
    k = w.sum(axis=1)
    m = k.sum() / 2.0
    scale = resolution / (2 * m * m)
    mem = _relabel(membership)
    q = modularity(w, mem, resolution)
    while True:
        cur = mem.copy()
        onehot = np.zeros((n, n))
        onehot[np.arange(n), cur] = 1.0
        links = w @ onehot
        tot = onehot.T @ k
        locked = np.zeros(n, dtype=bool)
        run_q, best_q, best = q, q, cur.copy()
        for _ in range(n):
            rows = np.flatnonzero(~locked)
            own = cur[rows]
            leave = -(links[rows, own] - np.diag(w)[rows]) / m + k[rows] * (tot[own] - k[rows]) * scale
            gain = leave[:, None] + links[rows] / m - np.outer(k[rows], tot) * scale
            gain[np.arange(rows.size), own] = -np.inf
            empty = np.flatnonzero(tot <= 0)
            # a single empty community stands for "start a new one"
            if empty.size > 1:
                gain[:, empty[1:]] = -np.inf
            flat = int(np.argmax(gain))
            r, c = divmod(flat, n)
            if not np.isfinite(gain[r, c]):
                break
            i, old = rows[r], cur[rows[r]]
            cur[i] = c
            locked[i] = True
            tot[old] -= k[i]
            tot[c] += k[i]
            links[:, old] -= w[:, i]
            links[:, c] += w[:, i]
            run_q += gain[r, c]
            if run_q > best_q + _EPS:
                best_q, best = run_q, cur.copy()
        if best_q <= q + _EPS:
            return mem
        mem, q = _relabel(best), best_q


def _polish(w: np.ndarray, membership: np.ndarray, resolution: float, trace: list[float] | None = None) -> np.ndarray:
    q = modularity(w, membership, resolution)
    while True:
        cand, _ = _unfold(w, _vertex_mover(w, membership, resolution), resolution)
        cq = modularity(w, cand, resolution)
        if cq <= q + _EPS:
            return membership
        membership, q = cand, cq
        if trace is not None:
            trace.append(q)


def louvain_partition(adjacency, resolution: float = 1.0, restarts: int = DEFAULT_RESTARTS, seed: int = 0) -> LouvainResult:
    w = np.asarray(adjacency, dtype=float)
    n = w.shape[0]
    membership = np.arange(n)
    if n == 0:
        return LouvainResult([], 0.0, [0.0], 0)
    trace = [modularity(w, membership, resolution)]
    if w.sum() == 0:
        return LouvainResult(membership.tolist(), trace[0], trace, 0)
    membership, levels = _unfold(w, membership, resolution, trace)
    tried = {tuple(membership.tolist())}
    membership = _polish(w, membership, resolution, trace)
    best_q = trace[-1]
    rng = np.random.default_rng(seed)
    for _ in range(restarts):
        order = rng.permutation(n)
        back = np.argsort(order)
        comm, _ = _unfold(w[np.ix_(order, order)], np.arange(n), resolution)
        comm = _relabel(comm[back])
        if tuple(comm.tolist()) in tried:
            continue
        tried.add(tuple(comm.tolist()))
        comm = _polish(w, comm, resolution)
        q = modularity(w, comm, resolution)
        if q > best_q + _EPS:
            membership, best_q = comm, q
            trace.append(q)
    membership = _relabel(membership)
    return LouvainResult(membership.tolist(), trace[-1], trace, levels)


def louvain(graph: SimilarityGraph, resolution: float = 1.0, restarts: int = DEFAULT_RESTARTS, seed: int = 0) -> list[int]:
    """Community id per node, contiguous from 0. Also stored on ``graph.communities``."""
    res = louvain_partition(graph.adjacency, resolution, restarts, seed)
    graph.communities = res.communities
    return res.communities
