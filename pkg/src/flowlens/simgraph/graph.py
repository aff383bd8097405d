"""Traffic-similarity graph built from pairwise two-sample KS decisions."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from ..errors import TooFewEntitiesError
from ..ingest import TrafficSeries
from ..kstest import DEFAULT_ALPHA, critical_value, ks_statistic_sorted

log = logging.getLogger(__name__)

MIN_BINS = 8


@dataclass
class SimilarityGraph:
    labels: list[str]
    adjacency: np.ndarray
    communities: list[int] | None = None
    layout: np.ndarray | None = None
    statistics: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.adjacency = np.asarray(self.adjacency, dtype=bool)
        n = len(self.labels)
        if self.adjacency.shape != (n, n):
            raise ValueError(f"adjacency must be {n}x{n}")
        if not np.array_equal(self.adjacency, self.adjacency.T):
            raise ValueError("adjacency must be symmetric")
        if self.adjacency.diagonal().any():
            raise ValueError("self-loops are not allowed")
        if self.layout is not None:
            self.layout = np.asarray(self.layout, dtype=float).reshape(n, 2)
        if self.communities is not None:
            self.communities = [int(c) for c in self.communities]
            if len(self.communities) != n:
                raise ValueError("one community id per node expected")
            if n and sorted(set(self.communities)) != list(range(max(self.communities) + 1)):
                raise ValueError("community ids must be contiguous from 0")

    @property
    def n(self) -> int:
        return len(self.labels)

    @property
    def node_degree(self) -> np.ndarray:
        return self.adjacency.sum(axis=1).astype(int)

    def edges(self) -> list[tuple[int, int]]:
        i, j = np.nonzero(np.triu(self.adjacency, 1))
        return list(zip(i.tolist(), j.tolist()))

    def isolated(self) -> list[str]:
        """Nodes with degree 0 -- entities whose traffic resembles no other's."""
        return [lab for lab, d in zip(self.labels, self.node_degree) if d == 0]

    @classmethod
    def from_edges(cls, labels: Sequence[str], edges) -> "SimilarityGraph":
        n = len(labels)
        adj = np.zeros((n, n), dtype=bool)
        for i, j in edges:
            if i != j:
                adj[i, j] = adj[j, i] = True
        return cls(list(labels), adj)

    def __eq__(self, other):
        if not isinstance(other, SimilarityGraph):
            return NotImplemented
        same_layout = (self.layout is None and other.layout is None) or (
            self.layout is not None and other.layout is not None and np.array_equal(self.layout, other.layout)
        )
        return (
            self.labels == other.labels
            and np.array_equal(self.adjacency, other.adjacency)
            and self.communities == other.communities
            and same_layout
        )


def _samples(s) -> np.ndarray:
    arr = s.counts if isinstance(s, TrafficSeries) else s
    return np.sort(np.asarray(arr, dtype=float).ravel())


def build_similarity_graph(
    series: Mapping[str, TrafficSeries | Sequence[float]],
    alpha: float = DEFAULT_ALPHA,
    threads: int = 1,
) -> SimilarityGraph:
    """Edge (i, j) whenever the two-sample KS test fails to reject at ``alpha``.

    Pairs are independent, so they may be spread over ``threads`` workers;
    results do not depend on evaluation order.
    """
    labels = sorted(series)
    if len(labels) < 2:
        raise TooFewEntitiesError(f"need at least 2 entities, got {len(labels)}")
    data = [_samples(series[k]) for k in labels]
    for k, d in zip(labels, data):
        if d.size < MIN_BINS:
            raise TooFewEntitiesError(f"{k} has {d.size} bins (< {MIN_BINS})")
    n = len(labels)
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            stats = list(ex.map(lambda p: ks_statistic_sorted(data[p[0]], data[p[1]]), pairs, chunksize=64))
    else:
        stats = [ks_statistic_sorted(data[i], data[j]) for i, j in pairs]
    crit = critical_value(alpha)
    dmat = np.zeros((n, n))
    adj = np.zeros((n, n), dtype=bool)
    for (i, j), d in zip(pairs, stats):
        n1, n2 = data[i].size, data[j].size
        dmat[i, j] = dmat[j, i] = d
        if not math.sqrt(n1 * n2 / (n1 + n2)) * d > crit:
            adj[i, j] = adj[j, i] = True
    g = SimilarityGraph(labels, adj, statistics=dmat)
    log.info("similarity graph: %d nodes, %d edges, %d isolated", n, len(g.edges()), len(g.isolated()))
    return g
