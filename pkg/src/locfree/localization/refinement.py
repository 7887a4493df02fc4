"""Phase three: local refinement heuristics."""
from __future__ import annotations

import numpy as np

from ..metrics import stress
from ..netgen import CommGraph, RangingTable
from .positioning import COND_LIMIT, solve_normal_2x2
from .types import Placement

# starting trust of a non-anchor neighbour relative to an anchor
INITIAL_CONFIDENCE = 0.1


def neighbor_lateration_step(coords: np.ndarray, graph: CommGraph, ranging: RangingTable,
                             movable: np.ndarray, min_neighbors: int = 3,
                             cond_limit: float = COND_LIMIT,
                             confidence: np.ndarray | None = None):
    """One synchronous round of every movable node laterating against its neighbours.

    Uses positioned neighbours as anchors and measured edge lengths as ranges,
    each equation weighted by the neighbour's confidence.  All nodes move at
    once, so a node adopts its new fix only when, against its neighbours' new
    positions, the fix has no larger weighted range residual than staying
    put.  Returns ``(coords, confidence)``; an updated node takes the mean
    confidence of the neighbours it used.
    """
    n = graph.n
    conf = np.ones(n) if confidence is None else confidence
    src, dst = graph.directed_edges()
    placed = np.all(np.isfinite(coords), axis=1)
    use = placed[dst]
    s, t, d = src[use], dst[use], ranging.directed[use]
    w = conf[t]
    count = np.bincount(s, minlength=n)
    wsum = np.bincount(s, w, n)
    ws = np.where(wsum > 0, wsum, 1.0)
    # linearize around the neighbours' weighted centroid: subtracting the mean
    # circle equation is far less sensitive to one badly placed neighbour than
    # subtracting a single reference equation
    centroid = np.column_stack([np.bincount(s, w * coords[t, 0], n), np.bincount(s, w * coords[t, 1], n)]) / ws[:, None]
    q = coords[t] - centroid[s]
    q2 = (q ** 2).sum(axis=1)
    rhs = q2 - (np.bincount(s, w * q2, n) / ws)[s] - d ** 2 + (np.bincount(s, w * d ** 2, n) / ws)[s]
    ata = np.column_stack([
        np.bincount(s, 4 * w * q[:, 0] ** 2, n),
        np.bincount(s, 4 * w * q[:, 0] * q[:, 1], n),
        np.bincount(s, 4 * w * q[:, 1] ** 2, n),
    ])
    atb = np.column_stack([np.bincount(s, 2 * w * q[:, 0] * rhs, n), np.bincount(s, 2 * w * q[:, 1] * rhs, n)])
    sel = np.flatnonzero(movable & (count >= min_neighbors) & (wsum > 0))
    new = coords.copy()
    new_conf = conf.copy()
    if len(sel):
        x, ok = solve_normal_2x2(ata[sel], atb[sel], cond_limit)
        x = x + centroid[sel]
        cand = coords.copy()
        cand[sel[ok]] = x[ok]
        # best response: keep the fix only if it fits the neighbours' new
        # positions no worse than staying put (or, for a first fix, than
        # sitting on the neighbours' centroid)
        after = _local_residual(cand, cand, s, t, d, w, n)
        stay = coords.copy()
        stay[sel] = np.where(placed[sel, None], coords[sel], centroid[sel])
        before = _local_residual(stay, cand, s, t, d, w, n)
        better = ok & (after[sel] <= before[sel])
        moved = sel[better]
        new[moved] = x[better]
        new_conf[moved] = wsum[moved] / count[moved]
    return new, new_conf


def _local_residual(own, other, s, t, d, w, n):
    r = np.linalg.norm(own[s] - other[t], axis=1) - d
    return np.bincount(s, w * np.nan_to_num(r * r, nan=np.inf), n)


def iterative_lateration_refine(start: Placement, graph: CommGraph, ranging: RangingTable,
                                anchors, rounds: int = 50, tol: float = 1e-2,
                                min_neighbors: int = 3,
                                initial_confidence: float = INITIAL_CONFIDENCE) -> Placement:
    """Repeated multilateration against direct neighbours; anchors never move.

    Anchors carry confidence 1 and every other node starts at
    ``initial_confidence``, so fixes lean on anchors first and the trust
    spreads outward as nodes settle.  Returns the iterate of lowest
    :func:`locfree.metrics.stress`, so the result is never worse than
    ``start`` by that measure.
    """
    coords = start.coords.copy()
    movable = np.ones(graph.n, dtype=bool)
    movable[np.asarray(list(anchors), dtype=np.int64)] = False
    conf = np.where(movable, initial_confidence, 1.0)
    best, best_stress = coords.copy(), stress(start, ranging)
    history = [best_stress]
    done_rounds = 0
    for _ in range(rounds):
        new, conf = neighbor_lateration_step(coords, graph, ranging, movable, min_neighbors, confidence=conf)
        both = np.all(np.isfinite(coords), axis=1) & np.all(np.isfinite(new), axis=1)
        moved = np.linalg.norm(new[both] - coords[both], axis=1)
        coords = new
        done_rounds += 1
        s = stress(Placement(coords, start.frame), ranging)
        history.append(s)
        if s <= best_stress:
            best, best_stress = coords.copy(), s
        if len(moved) == 0 or moved.max() < tol:
            break
    out = Placement(best, start.frame, dict(start.diagnostics))
    out.diagnostics.update(refine_rounds=done_rounds, refine_stress=history)
    return out


def _hash_directions(ids: np.ndarray) -> np.ndarray:
    # splitmix64-style mix of the node id -> angle; stable across platforms
    z = (ids.astype(np.uint64) + np.uint64(0x9E3779B97F4A7C15))
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        z = z ^ (z >> np.uint64(31))
    ang = (z >> np.uint64(11)).astype(np.float64) / float(1 << 53) * 2 * np.pi
    return np.column_stack([np.cos(ang), np.sin(ang)])


def spring_forces(coords: np.ndarray, graph: CommGraph, ranging: RangingTable) -> np.ndarray:
    """Mean spring force per node: residual (measured - placed) along each edge."""
    src, dst = graph.directed_edges()
    diff = coords[src] - coords[dst]
    dist = np.linalg.norm(diff, axis=1)
    unit = np.empty_like(diff)
    nz = dist > 0
    unit[nz] = diff[nz] / dist[nz, None]
    if not nz.all():
        # coincident pair: push apart along a direction fixed by the edge's ids
        z = ~nz
        h = _hash_directions(np.minimum(src[z], dst[z]) * graph.n + np.maximum(src[z], dst[z]))
        sign = np.where(src[z] < dst[z], 1.0, -1.0)
        unit[z] = h * sign[:, None]
    f = (ranging.directed - dist)[:, None] * unit
    deg = np.maximum(graph.degree(), 1)
    force = np.column_stack([np.bincount(src, f[:, 0], graph.n), np.bincount(src, f[:, 1], graph.n)])
    return force / deg[:, None]


def spring_embedder(start: Placement, graph: CommGraph, ranging: RangingTable,
                    step: float = 0.25, decay: float = 0.995, rounds: int = 400,
                    pinned=(), tol: float = 0.0) -> Placement:
    if not start.positioned.all():
        raise ValueError("spring embedder needs every node positioned")
    coords = start.coords.copy()
    free = np.ones(graph.n, dtype=bool)
    free[np.asarray(list(pinned), dtype=np.int64)] = False
    best, best_stress = coords.copy(), stress(start, ranging)
    for _ in range(rounds):
        move = step * spring_forces(coords, graph, ranging)
        move[~free] = 0.0
        coords = coords + move
        step *= decay
        s = stress(Placement(coords, start.frame), ranging)
        if s <= best_stress:
            best, best_stress = coords.copy(), s
        if np.abs(move).max() <= tol:
            break
    out = Placement(best, start.frame, dict(start.diagnostics))
    out.diagnostics["spring_stress"] = best_stress
    return out
