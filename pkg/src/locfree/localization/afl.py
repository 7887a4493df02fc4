"""Anchor-free bootstrap: two roughly perpendicular hop axes."""
from __future__ import annotations

import numpy as np

from ..netgen import CommGraph, RangingTable
from .distances import hop_counts
from .types import Placement

# mean edge length in a uniform unit disk is 2/3 of the radius while a
# shortest-path hop covers close to a full radius
HOP_PER_MEAN_EDGE = 1.5


def _farthest(h: np.ndarray, among: np.ndarray | None = None) -> int:
    h = np.where(np.isfinite(h), h, -1)
    if among is not None:
        h = np.where(among, h, -1)
    return int(np.argmax(h))  # ties -> lowest id


def reference_nodes(graph: CommGraph, start: int = 0) -> tuple[int, int, int, int]:
    """Pick the two axis pairs ``(n1, n2)`` and ``(n3, n4)``.

    n1 is farthest (hops) from ``start``, n2 farthest from n1.  The second
    axis is a double sweep restricted to nodes whose hop distances to n1 and
    n2 differ by at most one.
    """
    n1 = _farthest(hop_counts(graph, [start])[0])
    h1 = hop_counts(graph, [n1])[0]
    n2 = _farthest(h1)
    h2 = hop_counts(graph, [n2])[0]
    mid = np.isfinite(h1) & np.isfinite(h2) & (np.abs(h1 - h2) <= 1)
    mids = np.flatnonzero(mid)
    if len(mids) == 0:
        mid = np.isfinite(h1)
        mids = np.flatnonzero(mid)
    n3 = _farthest(hop_counts(graph, [mids[0]])[0], mid)
    n4 = _farthest(hop_counts(graph, [n3])[0], mid)
    return n1, n2, n3, n4


def hop_length(ranging: RangingTable | None) -> float:
    if ranging is None or len(ranging.measured) == 0:
        return 1.0
    return HOP_PER_MEAN_EDGE * float(np.mean(ranging.measured))


def afl_bootstrap(graph: CommGraph, ranging: RangingTable | None = None, start: int = 0) -> Placement:
    """Virtual coordinates ``((h1 - h2)/2, (h3 - h4)/2)`` scaled to metres."""
    if graph.n < 4:
        raise ValueError("anchor-free bootstrap needs at least four nodes")
    refs = reference_nodes(graph, start)
    h = hop_counts(graph, list(refs))
    if not np.all(np.isfinite(h)):
        raise ValueError("anchor-free bootstrap needs a connected graph")
    scale = hop_length(ranging)
    coords = np.column_stack([(h[0] - h[1]) / 2.0, (h[2] - h[3]) / 2.0]) * scale
    return Placement(coords, "virtual", {"reference_nodes": [int(r) for r in refs], "hop_length": scale})
