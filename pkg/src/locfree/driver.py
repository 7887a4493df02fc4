"""Sequential round-based driver with a locality audit.

Each node keeps a small state dict.  In a round every node sees a snapshot
of the previous round and may read its own state and its direct
neighbours' state, nothing else; every read is logged.  The message-passing
versions of the floods and local rules below run on this driver and are
checked against the vectorized implementations in the test suite.
"""
from __future__ import annotations

from typing import Callable

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from .netgen import CommGraph, RangingTable


class LocalityError(RuntimeError):
    """A node read state of a node that is neither itself nor a neighbour."""


class AccessLog:
    def __init__(self) -> None:
        self.reads: set[tuple[int, int]] = set()

    def record(self, reader: int, owner: int) -> None:
        self.reads.add((reader, owner))

    def foreign(self, graph: CommGraph) -> list[tuple[int, int]]:
        """Logged reads that cross more than one hop."""
        return sorted((r, o) for r, o in self.reads if r != o and not graph.has_edge(r, o))


class NodeView:
    """What node ``v`` may touch during one round."""

    def __init__(self, v: int, snapshot: list[dict], driver: "RoundDriver") -> None:
        self.v = v
        self._snap = snapshot
        self._driver = driver

    @property
    def neighbors(self) -> np.ndarray:
        return self._driver.graph.neighbors(self.v)

    def get(self, key: str, default=None):
        return self.peek(self.v, key, default)

    def peek(self, u: int, key: str, default=None):
        d = self._driver
        u = int(u)
        d.log.record(self.v, u)
        if d.strict and u != self.v and not d.graph.has_edge(self.v, u):
            raise LocalityError(f"node {self.v} read state of non-neighbour {u}")
        return self._snap[u].get(key, default)

    def range_to(self, u: int) -> float:
        if self._driver.ranging is None:
            raise LocalityError("no ranging table attached")
        if not self._driver.graph.has_edge(self.v, int(u)):
            raise LocalityError(f"node {self.v} has no range to non-neighbour {u}")
        return self._driver.ranging.get(self.v, int(u))


def _same(a, b) -> bool:
    if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
        a, b = np.asarray(a), np.asarray(b)
        return a.shape == b.shape and np.array_equal(a, b, equal_nan=a.dtype.kind == "f")
    return a == b


class RoundDriver:
    """Synchronous rounds: all nodes update from the same snapshot, results swap in together."""

    def __init__(self, graph: CommGraph, states: list[dict] | None = None,
                 ranging: RangingTable | None = None, strict: bool = True) -> None:
        self.graph = graph
        self.states = states if states is not None else [{} for _ in range(graph.n)]
        self.ranging = ranging
        self.strict = strict
        self.log = AccessLog()
        self.rounds = 0

    def run(self, update: Callable[[NodeView], dict | None], max_rounds: int,
            until_stable: bool = True) -> int:
        """Run ``update`` on every node per round; returns the rounds executed."""
        done = 0
        for _ in range(max_rounds):
            snap = self.states
            new, changed = [], False
            for v in range(self.graph.n):
                out = update(NodeView(v, snap, self))
                st = dict(snap[v])
                if out:
                    changed |= any(not _same(snap[v].get(k), val) for k, val in out.items())
                    st.update(out)
                new.append(st)
            self.states = new
            self.rounds += 1
            done += 1
            if until_stable and not changed:
                break
        return done

    def collect(self, key: str) -> list:
        return [s.get(key) for s in self.states]


# -- floods ----------------------------------------------------------------------

def _relax(view: NodeView, key: str, edge_cost: Callable[[int], float]) -> dict:
    best = view.get(key).copy()
    for u in view.neighbors:
        best = np.fmin(best, view.peek(u, key) + edge_cost(u))
    return {key: best}


def flood_hops(graph: CommGraph, sources, driver: RoundDriver | None = None) -> tuple[np.ndarray, RoundDriver]:
    """Hop distance to each source by repeated neighbour minimum; shape ``(len(sources), n)``."""
    sources = np.asarray(sources, dtype=np.int64)
    drv = driver if driver is not None else RoundDriver(graph)
    for v in range(graph.n):
        h = np.full(len(sources), np.inf)
        h[sources == v] = 0.0
        drv.states[v]["hops"] = h
    drv.run(lambda view: _relax(view, "hops", lambda u: 1.0), graph.n + 1)
    return np.array(drv.collect("hops")).reshape(graph.n, len(sources)).T, drv


def flood_sum_dist(graph: CommGraph, ranging: RangingTable, anchors) -> tuple[np.ndarray, RoundDriver]:
    """Cheapest measured path to each anchor, as monotone improvements; shape ``(n, k)``."""
    ids = np.array(sorted(int(a) for a in anchors), dtype=np.int64)
    drv = RoundDriver(graph, ranging=ranging)
    for v in range(graph.n):
        d = np.full(len(ids), np.inf)
        d[ids == v] = 0.0
        drv.states[v]["sd"] = d
    drv.run(lambda view: _relax(view, "sd", view.range_to), graph.n * len(ids) + 1)
    out = np.array(drv.collect("sd")).reshape(graph.n, len(ids))
    out[~np.isfinite(out)] = np.nan
    return out, drv


def distributed_dv_hop(graph: CommGraph, anchors, anchor_positions) -> tuple[np.ndarray, RoundDriver]:
    """DV-Hop as three floods: hops with anchor positions, per-anchor corrections, estimates.

    Returns the ``(n, k)`` estimate matrix (NaN where unreachable).
    """
    ids = np.array(sorted(int(a) for a in anchors), dtype=np.int64)
    pos = np.asarray([anchor_positions[int(a)] for a in ids] if isinstance(anchor_positions, dict)
                     else anchor_positions, dtype=float).reshape(-1, 2)
    k = len(ids)
    drv = RoundDriver(graph)
    for v in range(graph.n):
        mine = ids == v
        p = np.full((k, 2), np.nan)
        p[mine] = pos[mine]
        drv.states[v].update(apos=p, corr=np.full(k, np.nan))

    def spread_positions(view):
        p = view.get("apos").copy()
        for u in view.neighbors:
            q = view.peek(u, "apos")
            gap = np.isnan(p[:, 0]) & ~np.isnan(q[:, 0])
            p[gap] = q[gap]
        return {"apos": p}

    hops, _ = flood_hops(graph, ids, drv)
    drv.run(spread_positions, graph.n + 1)

    def own_correction(view):
        i = np.flatnonzero(ids == view.v)
        if len(i) == 0:
            return None
        i = int(i[0])
        h, p = view.get("hops"), view.get("apos")
        ok = np.isfinite(h) & (np.arange(k) != i)
        c = view.get("corr").copy()
        if h[ok].sum() > 0:
            c[i] = np.linalg.norm(p[ok] - p[i], axis=1).sum() / h[ok].sum()
        return {"corr": c}

    drv.run(own_correction, 1, until_stable=False)

    def spread_corrections(view):
        c = view.get("corr").copy()
        for u in view.neighbors:
            q = view.peek(u, "corr")
            gap = np.isnan(c) & ~np.isnan(q)
            c[gap] = q[gap]
        return {"corr": c}

    drv.run(spread_corrections, graph.n + 1)

    def estimate(view):
        h, c = view.get("hops"), view.get("corr")
        reach = np.isfinite(h)
        if not reach.any():
            return {"est": np.full(k, np.nan)}
        near = int(np.argmin(np.where(reach, h, np.inf)))
        corr = c[near]
        if np.isnan(corr):
            # every anchor reachable from here has flooded its value by now
            known = c[reach & ~np.isnan(c)]
            corr = float(np.mean(known)) if len(known) else np.nan
        e = np.where(reach, h * corr, np.nan)
        e[ids == view.v] = 0.0
        return {"est": e}

    drv.run(estimate, 1, until_stable=False)
    return np.array(drv.collect("est")).reshape(graph.n, k), drv


# -- refinement ------------------------------------------------------------------

def _seq_sum(x: np.ndarray) -> float:
    # left-to-right, as np.bincount accumulates
    return float(np.cumsum(x)[-1]) if len(x) else 0.0


def distributed_refinement_round(graph: CommGraph, ranging: RangingTable, coords: np.ndarray,
                                 confidence: np.ndarray, movable: np.ndarray,
                                 min_neighbors: int = 3, cond_limit: float = 1e8):
    """One round of :func:`~locfree.localization.refinement.neighbor_lateration_step`.

    Two sub-rounds: every node proposes a fix from its neighbours' positions,
    then keeps it only if it beats staying put against the neighbours'
    proposals.
    Returns ``(coords, confidence, driver)``.
    """
    from .localization.positioning import solve_normal_2x2

    drv = RoundDriver(graph, ranging=ranging)
    for v in range(graph.n):
        drv.states[v].update(xy=coords[v].copy(), conf=float(confidence[v]), movable=bool(movable[v]))

    def neighbourhood(view, key):
        nb = [int(u) for u in view.neighbors if np.all(np.isfinite(view.peek(u, "xy")))]
        p = np.array([view.peek(u, key) for u in nb], dtype=float).reshape(-1, 2)
        w = np.array([view.peek(u, "conf") for u in nb], dtype=float)
        d = np.array([view.range_to(u) for u in nb], dtype=float)
        return nb, p, w, d

    def propose(view):
        nb, p, w, d = neighbourhood(view, "xy")
        wsum = _seq_sum(w)
        out = {"cand": view.get("xy"), "cen": view.get("xy"), "proposes": False, "wsum": wsum, "count": len(nb)}
        if not view.get("movable") or len(nb) < min_neighbors or wsum <= 0:
            return out
        cen = np.array([_seq_sum(w * p[:, 0]), _seq_sum(w * p[:, 1])]) / wsum
        q = p - cen
        q2 = (q ** 2).sum(axis=1)
        rhs = q2 - _seq_sum(w * q2) / wsum - d ** 2 + _seq_sum(w * d ** 2) / wsum
        ata = np.array([[_seq_sum(4 * w * q[:, 0] ** 2), _seq_sum(4 * w * q[:, 0] * q[:, 1]),
                         _seq_sum(4 * w * q[:, 1] ** 2)]])
        atb = np.array([[_seq_sum(2 * w * q[:, 0] * rhs), _seq_sum(2 * w * q[:, 1] * rhs)]])
        x, ok = solve_normal_2x2(ata, atb, cond_limit)
        out["cen"] = cen
        if ok[0]:
            out.update(cand=x[0] + cen, proposes=True)
        return out

    def residual(own, p, w, d):
        r = np.linalg.norm(own - p, axis=1) - d
        return _seq_sum(w * np.nan_to_num(r * r, nan=np.inf))

    def accept(view):
        if not view.get("proposes"):
            return None
        nb, _, w, d = neighbourhood(view, "xy")
        p_new = np.array([view.peek(u, "cand") for u in nb], dtype=float).reshape(-1, 2)
        xy = view.get("xy")
        stay = xy if np.all(np.isfinite(xy)) else view.get("cen")
        if residual(view.get("cand"), p_new, w, d) > residual(stay, p_new, w, d):
            return None
        return {"xy": view.get("cand"), "conf": view.get("wsum") / view.get("count")}

    drv.run(propose, 1, until_stable=False)
    drv.run(accept, 1, until_stable=False)
    xy = np.array(drv.collect("xy"), dtype=float).reshape(graph.n, 2)
    return xy, np.array(drv.collect("conf"), dtype=float), drv


# -- clustering ------------------------------------------------------------------

def distributed_boundary(graph: CommGraph, hop_horizon: int = 2, percentile: float = 0.6):
    """Rim flags by an h-round max flood, strips by a min-id flood among rim nodes.

    Returns ``(is_boundary, strip_root, driver)``; ``strip_root`` is the
    smallest node id of the node's strip, -1 off the rim.
    """
    drv = RoundDriver(graph)
    for v in range(graph.n):
        drv.states[v].update(deg=float(len(graph.neighbors(v))), mx=float(len(graph.neighbors(v))))

    def grow(view):
        return {"mx": max([view.get("mx")] + [view.peek(u, "mx") for u in view.neighbors])}

    drv.run(grow, hop_horizon, until_stable=False)
    drv.run(lambda view: {"rim": view.get("deg") < percentile * view.get("mx"), "root": view.v}, 1,
            until_stable=False)

    def join(view):
        if not view.get("rim"):
            return {"root": -1}
        r = min([view.get("root")] + [view.peek(u, "root") for u in view.neighbors if view.peek(u, "rim")])
        return {"root": r}

    drv.run(join, graph.n + 1)
    return np.array(drv.collect("rim"), dtype=bool), np.array(drv.collect("root"), dtype=np.int64), drv


def distributed_branch_counts(graph: CommGraph, ring_hops: int = 3, min_branch_size: int = 3):
    """Each node learns its ``ring_hops`` ball with adjacency lists, then counts ring pieces."""
    drv = RoundDriver(graph)
    for v in range(graph.n):
        drv.states[v]["ball"] = {v: (0, tuple(int(u) for u in graph.neighbors(v)))}

    def widen(view):
        ball = dict(view.get("ball"))
        for u in view.neighbors:
            for w, (h, adj) in view.peek(u, "ball").items():
                if h + 1 <= ring_hops and (w not in ball or ball[w][0] > h + 1):
                    ball[w] = (h + 1, adj)
        return {"ball": ball}

    drv.run(widen, ring_hops, until_stable=False)

    def count(view):
        ball = view.get("ball")
        ring = sorted(w for w, (h, _) in ball.items() if h == ring_hops)
        if not ring:
            return {"branches": 0}
        index = {w: i for i, w in enumerate(ring)}
        rows, cols = [], []
        for w in ring:
            for x in ball[w][1]:
                if x in index:
                    rows.append(index[w])
                    cols.append(index[x])
        m = sparse.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(len(ring), len(ring)))
        _, lab = connected_components(m, directed=False)
        return {"branches": int((np.bincount(lab) >= min_branch_size).sum())}

    drv.run(count, 1, until_stable=False)
    return np.array(drv.collect("branches"), dtype=np.int64), drv


def distributed_label_components(graph: CommGraph, labels: np.ndarray):
    """Min-id flood over edges joining equal labels; returns each node's component root."""
    drv = RoundDriver(graph)
    for v in range(graph.n):
        drv.states[v].update(label=int(labels[v]), root=v)

    def join(view):
        lab = view.get("label")
        return {"root": min([view.get("root")] + [view.peek(u, "root") for u in view.neighbors
                                                  if view.peek(u, "label") == lab])}

    drv.run(join, graph.n + 1)
    return np.array(drv.collect("root"), dtype=np.int64), drv
