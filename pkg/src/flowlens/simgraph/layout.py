"""Fruchterman-Reingold force-directed placement in the unit square."""

from __future__ import annotations

import numpy as np

from .graph import SimilarityGraph

INITIAL_TEMPERATURE = 0.1


def fr_layout(graph: SimilarityGraph, iterations: int = 200, seed: int = 0) -> np.ndarray:
    """Node positions in [0, 1]^2; also stored on ``graph.layout``.

    Attraction d^2/k along edges, repulsion k^2/d between all pairs,
    k = sqrt(area / |V|), displacement capped by a temperature that cools
    linearly to zero.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    n = graph.n
    if n == 0:
        pos = np.zeros((0, 2))
    elif n == 1:
        pos = np.array([[0.5, 0.5]])
    else:
        pos = _run(graph.adjacency, iterations, np.random.default_rng(seed))
    graph.layout = pos
    return pos


def _run(adj: np.ndarray, iterations: int, rng: np.random.Generator) -> np.ndarray:
    n = adj.shape[0]
    pos = rng.uniform(0.0, 1.0, size=(n, 2))
    k = np.sqrt(1.0 / n)
    a = adj.astype(float)
    for it in range(iterations):
        temp = INITIAL_TEMPERATURE * (1.0 - it / iterations)
        delta = pos[:, None, :] - pos[None, :, :]
        dist = np.sqrt((delta**2).sum(axis=-1))
        np.fill_diagonal(dist, 1.0)
        dist = np.maximum(dist, 1e-9)
        # per-pair scalar force along the unit vector delta/dist
        force = k * k / dist - a * dist * dist / k
        np.fill_diagonal(force, 0.0)
        disp = (delta / dist[..., None] * force[..., None]).sum(axis=1)
        length = np.sqrt((disp**2).sum(axis=1))
        step = np.where(length > 0, np.minimum(length, temp) / np.where(length > 0, length, 1.0), 0.0)
        pos = np.clip(pos + disp * step[:, None], 0.0, 1.0)
    return pos
