"""Phase one: distance from each node to each anchor.

The vectorized routines here compute exactly what a per-anchor flood
would converge to.  ``locfree.driver`` carries message-passing
versions of the floods that are audited for locality and checked against
these in the test suite.
"""
from __future__ import annotations

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import dijkstra, shortest_path

from ..netgen import CommGraph, RangingTable
from .types import DistanceEstimates


def _anchor_array(anchors) -> np.ndarray:
    return np.array(sorted(int(a) for a in anchors), dtype=np.int64)


def hop_counts(graph: CommGraph, sources) -> np.ndarray:
    """BFS hop distances, shape ``(len(sources), n)``; ``inf`` if unreachable."""
    sources = np.asarray(sources, dtype=np.int64)
    if len(sources) == 0:
        return np.empty((0, graph.n))
    return shortest_path(graph.csr(), method="D", unweighted=True, indices=sources)


def dv_hop(graph: CommGraph, anchors, anchor_positions) -> DistanceEstimates:
    """Hop counts scaled by an anchor-derived average hop length.

    ``anchor_positions`` maps anchor id to its coordinates (dict or an array
    aligned with ``sorted(anchors)``).
    """
    ids = _anchor_array(anchors)
    pos = _positions_for(ids, anchor_positions)
    if len(ids) < 2:
        raise ValueError("dv_hop needs at least two anchors")
    hops = hop_counts(graph, ids)  # (k, n)
    k = len(ids)

    # per-anchor correction from all other reachable anchors
    ah = hops[:, ids]
    ad = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=2)
    ok = np.isfinite(ah) & ~np.eye(k, dtype=bool)
    hop_sum = np.where(ok, ah, 0.0).sum(axis=1)
    dist_sum = np.where(ok, ad, 0.0).sum(axis=1)
    correction = np.full(k, np.nan)
    defined = hop_sum > 0
    correction[defined] = dist_sum[defined] / hop_sum[defined]
    fallback = float(np.mean(correction[defined])) if defined.any() else np.nan

    # each node adopts the correction of its nearest anchor (ties: lowest id)
    reach = np.isfinite(hops)
    nearest = np.argmin(np.where(reach, hops, np.inf), axis=0)
    node_corr = correction[nearest]
    node_corr = np.where(np.isnan(node_corr), fallback, node_corr)
    node_corr[~reach.any(axis=0)] = np.nan

    est = (hops * node_corr[None, :]).T
    est[~reach.T] = np.nan
    est[ids, np.arange(k)] = 0.0
    return DistanceEstimates(ids, est)


def anchor_corrections(graph: CommGraph, anchors, anchor_positions) -> dict[int, float | None]:
    """The per-anchor average hop length used by :func:`dv_hop` (None if undefined)."""
    ids = _anchor_array(anchors)
    pos = _positions_for(ids, anchor_positions)
    hops = hop_counts(graph, ids)[:, ids]
    out = {}
    for i, a in enumerate(ids):
        ok = np.isfinite(hops[i]) & (np.arange(len(ids)) != i)
        h = hops[i, ok].sum()
        out[int(a)] = float(np.linalg.norm(pos[ok] - pos[i], axis=1).sum() / h) if h > 0 else None
    return out


def sum_dist(graph: CommGraph, ranging: RangingTable, anchors) -> DistanceEstimates:
    """Cheapest measured-length path from each anchor."""
    ids = _anchor_array(anchors)
    if len(ids) == 0:
        return DistanceEstimates(ids, np.empty((graph.n, 0)))
    d = dijkstra(graph.csr(ranging.directed), directed=False, indices=ids).T
    d[~np.isfinite(d)] = np.nan
    return DistanceEstimates(ids, d)


def _positions_for(ids: np.ndarray, anchor_positions) -> np.ndarray:
    if isinstance(anchor_positions, dict):
        return np.array([anchor_positions[int(a)] for a in ids], dtype=float).reshape(-1, 2)
    pos = np.asarray(anchor_positions, dtype=float).reshape(-1, 2)
    if len(pos) != len(ids):
        raise ValueError("anchor_positions must align with sorted anchors")
    return pos


# -- Euclidean propagation ---------------------------------------------------

def _apex(d_b, d_c, d_bc):
    """Coordinates of a point at distances ``d_b``/``d_c`` from b=(0,0), c=(d_bc,0).

    Returns ``(x, y)`` with ``y >= 0`` and ``NaN`` where the three lengths
    violate the triangle inequality beyond rounding slack.
    """
    x = (d_b * d_b - d_c * d_c + d_bc * d_bc) / (2.0 * d_bc)
    y2 = d_b * d_b - x * x
    slack = 1e-9 * np.maximum(d_b * d_b, d_bc * d_bc)
    y = np.sqrt(np.where(y2 < 0, np.where(y2 > -slack, 0.0, np.nan), y2))
    return x, y


def quadrilateral_candidates(d_vb, d_vc, d_bc, e_b, e_c):
    """Both possible ``|va|`` given ranges v-b, v-c, b-c and estimates b-a, c-a.

    First value: v and a on the same side of line bc; second: opposite sides.
    """
    xv, yv = _apex(d_vb, d_vc, d_bc)
    xa, ya = _apex(e_b, e_c, d_bc)
    same = np.hypot(xv - xa, yv - ya)
    opposite = np.hypot(xv - xa, yv + ya)
    return same, opposite


def _candidate_pairs(graph: CommGraph, ranging: RangingTable, max_pairs: int, max_third: int):
    """Fixed per-node slots of mutually adjacent neighbor pairs plus witnesses.

    Pairs favour wide, well-shaped triangles: ranked by the smaller of the
    two angle-ish quantities ``d_bc`` and the v-height over bc.
    """
    n = graph.n
    B = np.full((n, max_pairs), -1, dtype=np.int64)
    C = np.full((n, max_pairs), -1, dtype=np.int64)
    W = np.full((n, max_pairs, max_third), -1, dtype=np.int64)
    nb_sets = [set(graph.neighbors(v).tolist()) for v in range(n)]
    for v in range(n):
        nb = graph.neighbors(v)
        if len(nb) < 2:
            continue
        iu, ju = np.triu_indices(len(nb), 1)
        b, c = nb[iu], nb[ju]
        d_bc = ranging.lookup(b, c)
        adj = np.isfinite(d_bc)
        b, c, d_bc = b[adj], c[adj], d_bc[adj]
        if len(b) == 0:
            continue
        d_vb = ranging.lookup(np.full(len(b), v), b)
        d_vc = ranging.lookup(np.full(len(c), v), c)
        xv, yv = _apex(d_vb, d_vc, d_bc)
        score = np.minimum(d_bc, np.nan_to_num(yv, nan=0.0))
        order = np.lexsort((c, b, -score))[:max_pairs]
        for slot, idx in enumerate(order):
            bb, cc = int(b[idx]), int(c[idx])
            B[v, slot], C[v, slot] = bb, cc
            common = sorted(nb_sets[v] & nb_sets[bb] & nb_sets[cc])
            for t, e in enumerate(common[:max_third]):
                W[v, slot, t] = e
    return B, C, W


def euclidean_propagation(graph: CommGraph, ranging: RangingTable, anchors,
                          max_pairs: int = 12, max_third: int = 4,
                          ambiguity_tol: float = 1e-6, max_rounds: int | None = None) -> DistanceEstimates:
    """Two-neighbour triangulation of anchor distances, iterated to a fixpoint.

    A node learns ``|va|`` from neighbours b, c (adjacent to each other) that
    already hold estimates to ``a``.  The two mirror-image solutions are told
    apart by a witness e adjacent to v, b and c that also holds an estimate;
    quadruples without a decisive witness are dropped.
    """
    ids = _anchor_array(anchors)
    n, k = graph.n, len(ids)
    est = np.full((n, k), np.nan)
    if k == 0:
        return DistanceEstimates(ids, est)
    est[ids, np.arange(k)] = 0.0
    # one hop: measured range
    for i, a in enumerate(ids):
        nb = graph.neighbors(a)
        est[nb, i] = ranging.lookup(nb, np.full(len(nb), a))
        est[a, i] = 0.0

    B, C, W = _candidate_pairs(graph, ranging, max_pairs, max_third)
    is_anchor = np.zeros(n, dtype=bool)
    is_anchor[ids] = True
    rows = np.arange(n)
    dvb = ranging.lookup(rows[:, None], B)
    dvc = ranging.lookup(rows[:, None], C)
    dbc = ranging.lookup(B, C)
    xv, yv = _apex(dvb, dvc, dbc)
    # witness frame positions with sign chosen to match the measured v-e range
    dve = ranging.lookup(rows[:, None, None], W)
    deb = ranging.lookup(W, B[:, :, None])
    dec = ranging.lookup(W, C[:, :, None])
    xe, ye = _apex(deb, dec, dbc[:, :, None])
    up = np.hypot(xe - xv[:, :, None], ye - yv[:, :, None])
    down = np.hypot(xe - xv[:, :, None], -ye - yv[:, :, None])
    r_up, r_down = np.abs(up - dve), np.abs(down - dve)
    sign_e = np.where(r_up <= r_down, 1.0, -1.0)
    # witness is only usable when its own mirror ambiguity is clearly resolved
    w_ok = (W >= 0) & np.isfinite(ye) & (np.abs(r_up - r_down) > 0.5 * np.minimum(r_up, r_down) + 1e-12)
    ye = ye * sign_e

    adj = graph.csr()
    rounds = max_rounds if max_rounds is not None else 4 * n
    # a pair can only change once a neighbour learned the same anchor last round
    frontier = None
    for _ in range(rounds):
        known = np.isfinite(est)
        open_pairs = ~known & ~is_anchor[:, None]
        if frontier is not None:
            open_pairs &= frontier
        todo_v, todo_a = np.nonzero(open_pairs)
        if len(todo_v) == 0:
            break
        new_val = np.full(len(todo_v), np.nan)
        for slot in range(B.shape[1]):
            open_ = np.isnan(new_val)
            bv, cv = B[todo_v, slot], C[todo_v, slot]
            ready = open_ & (bv >= 0)
            ready[ready] &= known[bv[ready], todo_a[ready]] & known[cv[ready], todo_a[ready]]
            if not ready.any():
                continue
            sel = np.flatnonzero(ready)
            v, a = todo_v[sel], todo_a[sel]
            b, c = bv[sel], cv[sel]
            d_bc = dbc[v, slot]
            xa, ya = _apex(est[b, a], est[c, a], d_bc)
            x0, y0 = xv[v, slot], yv[v, slot]
            same = np.hypot(x0 - xa, y0 - ya)
            opp = np.hypot(x0 - xa, y0 + ya)
            value = np.full(len(sel), np.nan)
            clear = np.abs(same - opp) <= ambiguity_tol * np.maximum(same, 1.0)
            value[clear] = same[clear]
            pending = np.isfinite(same) & np.isfinite(opp) & ~clear
            for t in range(W.shape[2]):
                if not pending.any():
                    break
                p = np.flatnonzero(pending)
                e = W[v[p], slot, t]
                usable = w_ok[v[p], slot, t]
                usable[usable] &= known[e[usable], a[p][usable]]
                if not usable.any():
                    continue
                p, e = p[usable], e[usable]
                ex, ey = xe[v[p], slot, t], ye[v[p], slot, t]
                e_est = est[e, a[p]]
                r_same = np.abs(np.hypot(ex - xa[p], ey - ya[p]) - e_est)
                r_opp = np.abs(np.hypot(ex - xa[p], ey + ya[p]) - e_est)
                decisive = np.abs(r_same - r_opp) > 0.5 * np.minimum(r_same, r_opp) + 1e-12
                pick = np.where(r_same <= r_opp, same[p], opp[p])
                value[p[decisive]] = pick[decisive]
                pending[p[decisive]] = False
            new_val[sel] = value
        got = np.isfinite(new_val)
        if not got.any():
            break
        # synchronous round: values become visible to neighbours next round
        est[todo_v[got], todo_a[got]] = new_val[got]
        learned = sparse.csr_matrix((np.ones(int(got.sum())), (todo_v[got], todo_a[got])), shape=(n, k))
        frontier = (adj @ learned).toarray() > 0
    return DistanceEstimates(ids, est)
