"""Greedy geographic routing versus routing over the cluster graph."""
from __future__ import annotations

import heapq
import json
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Literal

import numpy as np

from .clustergraph import ClusterGraph, Clustering
from .netgen import CommGraph

Outcome = Literal["delivered", "local_minimum", "no_route"]
Weight = Literal["hops", "energy", "bandwidth_bottleneck"]


@dataclass
class RouteResult:
    path: list[int]
    outcome: str
    stuck_node: int | None = None
    # ground-truth audit: delivered in placement space, but far from the real target
    wrong_location: bool | None = None
    failed_leg: int | None = None

    @property
    def hop_count(self) -> int:
        return max(len(self.path) - 1, 0)

    @property
    def truly_delivered(self) -> bool:
        return self.outcome == "delivered" and not self.wrong_location

    def to_json(self) -> dict:
        return {
            "outcome": self.outcome,
            "hops": self.hop_count,
            "path": [int(v) for v in self.path],
            "stuck_node": self.stuck_node,
            "wrong_location": self.wrong_location,
            "failed_leg": self.failed_leg,
        }


@dataclass
class ClusterRoute:
    cluster_path: list[int]
    total_weight: float
    weight: str = "hops"
    expanded: RouteResult | None = None

    @property
    def found(self) -> bool:
        return len(self.cluster_path) > 0

    def edges(self) -> list[tuple[int, int]]:
        p = self.cluster_path
        return [(min(a, b), max(a, b)) for a, b in zip(p, p[1:])]


# -- greedy -------------------------------------------------------------------

def greedy_geo_route(coords: np.ndarray, graph: CommGraph, src: int, target,
                     delivery_radius: float, truth: np.ndarray | None = None,
                     true_target=None) -> RouteResult:
    """Forward to the neighbour placed strictly closest to ``target`` until within ``delivery_radius``.

    ``coords`` are the placed coordinates (NaN rows are unpositioned).  With
    ``truth`` and ``true_target`` the result also says whether the final
    node is really within ``delivery_radius`` of the real target.
    """
    coords = np.asarray(coords, dtype=float)
    target = np.asarray(target, dtype=float)
    if not np.all(np.isfinite(coords[src])):
        return RouteResult([src], "no_route", stuck_node=src)
    cur, path, visited = int(src), [int(src)], {int(src)}
    for _ in range(graph.n):
        here = float(np.linalg.norm(coords[cur] - target))
        if here <= delivery_radius:
            res = RouteResult(path, "delivered")
            if truth is not None and true_target is not None:
                res.wrong_location = bool(np.linalg.norm(truth[cur] - np.asarray(true_target)) > delivery_radius)
            return res
        nb = graph.neighbors(cur)
        nb = nb[np.all(np.isfinite(coords[nb]), axis=1)]
        if len(nb) == 0:
            return RouteResult(path, "no_route", stuck_node=cur)
        d = np.linalg.norm(coords[nb] - target, axis=1)
        best = d.min()
        if best >= here:
            return RouteResult(path, "local_minimum", stuck_node=cur)
        nxt = int(nb[d == best].min())
        if nxt in visited:
            return RouteResult(path, "local_minimum", stuck_node=cur)
        visited.add(nxt)
        path.append(nxt)
        cur = nxt
    return RouteResult(path, "local_minimum", stuck_node=cur)


def greedy_to_node(coords: np.ndarray, graph: CommGraph, src: int, dst: int, delivery_radius: float,
                   truth: np.ndarray | None = None) -> RouteResult:
    """Greedy routing towards the placed position of node ``dst``."""
    if not np.all(np.isfinite(coords[dst])):
        return RouteResult([src], "no_route", stuck_node=src)
    return greedy_geo_route(coords, graph, src, coords[dst], delivery_radius, truth,
                            None if truth is None else truth[dst])


# -- cluster graph routing ----------------------------------------------------------

def _edge_cost(attrs: dict, weight: str) -> float:
    if weight == "hops":
        return 1.0
    if weight == "energy":
        e = attrs.get("residual_energy", 1.0)
        return 1.0 / e if e > 0 else np.inf
    raise ValueError(f"unknown weight {weight!r}")


def _adjacency(cg: ClusterGraph, banned: set) -> dict[int, list[tuple[int, dict]]]:
    adj: dict[int, list] = {c: [] for c in cg.vertices}
    for (a, b), attrs in cg.edges.items():
        if (a, b) in banned:
            continue
        adj[a].append((b, attrs))
        adj[b].append((a, attrs))
    for c in adj:
        adj[c].sort(key=lambda t: t[0])
    return adj


def _cheapest(adj, src: int, dst: int, cost_of) -> tuple[list[int], float]:
    """Label-setting search on ``(cost, path)``: least cost, then lexicographically smallest path."""
    heap = [(0.0, [src])]
    done = set()
    while heap:
        cost, path = heapq.heappop(heap)
        u = path[-1]
        if u in done:
            continue
        done.add(u)
        if u == dst:
            return path, cost
        for w, attrs in adj[u]:
            c = cost_of(attrs)
            if w not in done and np.isfinite(c):
                heapq.heappush(heap, (cost + c, path + [w]))
    return [], np.inf


def _widest(adj, src: int, dst: int) -> float:
    best = {src: np.inf}
    heap = [(-np.inf, src)]
    while heap:
        neg, u = heapq.heappop(heap)
        if -neg < best.get(u, -np.inf):
            continue
        for w, attrs in adj[u]:
            b = min(-neg, attrs.get("bandwidth", 1.0))
            if b > best.get(w, -np.inf):
                best[w] = b
                heapq.heappush(heap, (-b, w))
    return best.get(dst, -np.inf)


def cluster_route(cg: ClusterGraph, src: int, dst: int, weight: Weight = "hops",
                  banned: Iterable[tuple[int, int]] = ()) -> ClusterRoute:
    """Optimal cluster path; an empty path means no route.

    ``hops`` and ``energy`` (edge cost 1/mean energy) minimise a sum.
    ``bandwidth_bottleneck`` maximises the smallest edge bandwidth, then
    takes the fewest hops among the widest paths.  Remaining ties go to the
    lexicographically smallest cluster sequence.
    """
    if src not in cg.vertices or dst not in cg.vertices:
        raise KeyError("src and dst must be cluster-graph vertices")
    banned = {(min(a, b), max(a, b)) for a, b in banned}
    adj = _adjacency(cg, banned)
    if weight == "bandwidth_bottleneck":
        if src == dst:
            return ClusterRoute([src], np.inf, weight)
        width = _widest(adj, src, dst)
        if width == -np.inf:
            return ClusterRoute([], -np.inf, weight)
        path, _ = _cheapest(adj, src, dst, lambda a: 1.0 if a.get("bandwidth", 1.0) >= width else np.inf)
        return ClusterRoute(path, float(width), weight)
    path, cost = _cheapest(adj, src, dst, lambda a: _edge_cost(a, weight))
    return ClusterRoute(path, float(cost), weight)


def path_weight(cg: ClusterGraph, path: list[int], weight: Weight) -> float:
    """Weight of a given cluster path under ``weight`` (reference for tests and reports)."""
    attrs = [cg.edge(a, b) for a, b in zip(path, path[1:])]
    if weight == "bandwidth_bottleneck":
        return float(min((a.get("bandwidth", 1.0) for a in attrs), default=np.inf))
    return float(sum(_edge_cost(a, weight) for a in attrs))


def disjoint_cluster_paths(cg: ClusterGraph, src: int, dst: int, k: int,
                           weight: Weight = "hops") -> list[ClusterRoute]:
    """Up to ``k`` edge-disjoint cluster paths by successive shortest paths with edge removal."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if src == dst:
        return [ClusterRoute([src], 0.0, weight)]
    out, banned = [], set()
    for _ in range(k):
        r = cluster_route(cg, src, dst, weight, banned)
        if not r.found:
            break
        out.append(r)
        banned.update(r.edges())
    return out


def _bfs_path(graph: CommGraph, start: int, allowed: np.ndarray, goal: np.ndarray) -> list[int] | None:
    """Shortest path inside ``allowed`` from ``start`` to any goal node; ties to lower ids."""
    if goal[start]:
        return [start]
    parent = {start: -1}
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for w in graph.neighbors(u):  # sorted, so the lowest-id parent wins
            w = int(w)
            if allowed[w] and w not in parent:
                parent[w] = u
                if goal[w]:
                    path = [w]
                    while parent[path[-1]] != -1:
                        path.append(parent[path[-1]])
                    return path[::-1]
                queue.append(w)
    return None


def node_cluster_path(cg: ClusterGraph, vertex_path: list[int]) -> list[int]:
    """Node-cluster sequence for a vertex path, re-inserting contracted streets."""
    out = list(vertex_path[:1])
    for a, b in zip(vertex_path, vertex_path[1:]):
        via = cg.edge(a, b).get("via")
        if via is not None:
            out.append(int(via))
        out.append(b)
    return out


def expand_cluster_path(route: ClusterRoute, clustering: Clustering, graph: CommGraph,
                        src: int, dst: int, cg: ClusterGraph | None = None) -> RouteResult:
    """Node-level path, one BFS leg per consecutive cluster pair.

    Leg i runs inside clusters i and i+1 and ends at a node of cluster i+1
    that touches cluster i+2 (or at ``dst`` on the last leg).
    """
    cp = route.cluster_path
    if cg is not None and cg.variant == "street_as_edge":
        cp = node_cluster_path(cg, cp)
    a = clustering.assignment
    if not cp:
        return RouteResult([src], "no_route", stuck_node=src)
    if a[src] != cp[0] or a[dst] != cp[-1]:
        raise ValueError("src must lie in the first cluster and dst in the last")
    path, cur = [int(src)], int(src)
    legs = [(cp[0], cp[0])] if len(cp) == 1 else list(zip(cp, cp[1:]))
    for i, (here, nxt) in enumerate(legs):
        allowed = (a == here) | (a == nxt)
        if i == len(legs) - 1:
            goal = np.zeros(graph.n, dtype=bool)
            goal[dst] = True
        else:
            after = cp[i + 2]
            goal = np.zeros(graph.n, dtype=bool)
            src_e, dst_e = graph.directed_edges()
            touch = src_e[(a[src_e] == nxt) & (a[dst_e] == after)]
            goal[touch] = True
        leg = _bfs_path(graph, cur, allowed, goal)
        if leg is None:
            return RouteResult(path, "no_route", stuck_node=cur, failed_leg=i)
        path.extend(leg[1:])
        cur = path[-1]
    route.expanded = RouteResult(path, "delivered" if cur == dst else "no_route")
    return route.expanded


def route_between_nodes(cg: ClusterGraph, clustering: Clustering, graph: CommGraph, src: int, dst: int,
                        weight: Weight = "hops") -> tuple[ClusterRoute, RouteResult]:
    a = clustering.assignment
    r = cluster_route(cg, int(a[src]), int(a[dst]), weight)
    return r, expand_cluster_path(r, clustering, graph, src, dst, cg)


# -- studies ------------------------------------------------------------------

def sample_pairs(n: int, count: int, seed: int) -> np.ndarray:
    """``count`` ordered (src, dst) pairs with src != dst, reproducible from ``seed``."""
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(7,)))
    src = rng.integers(0, n, count)
    dst = (src + rng.integers(1, n, count)) % n
    return np.column_stack([src, dst])


@dataclass
class RoutingStudy:
    greedy: list[RouteResult]
    cluster: list[RouteResult]
    pairs: np.ndarray
    extra: dict = field(default_factory=dict)

    @staticmethod
    def _rate(results: list[RouteResult]) -> float:
        return float(np.mean([r.truly_delivered for r in results])) if results else 0.0

    @property
    def greedy_rate(self) -> float:
        return self._rate(self.greedy)

    @property
    def cluster_rate(self) -> float:
        return self._rate(self.cluster)

    def outcome_counts(self) -> dict[str, int]:
        out = {"delivered": 0, "local_minimum": 0, "no_route": 0, "wrong_location": 0}
        for r in self.greedy:
            out[r.outcome] += 1
            out["wrong_location"] += bool(r.wrong_location)
        return out

    def summary(self) -> dict:
        return {
            "pairs": int(len(self.pairs)),
            "greedy_delivery_rate": round(self.greedy_rate, 6),
            "cluster_delivery_rate": round(self.cluster_rate, 6),
            "greedy_outcomes": self.outcome_counts(),
        }

    def jsonl(self) -> str:
        lines = []
        for (s, d), g, c in zip(self.pairs, self.greedy, self.cluster):
            for method, r in (("greedy", g), ("cluster", c)):
                rec = {"src": int(s), "dst": int(d), "method": method, **r.to_json()}
                lines.append(json.dumps(rec, separators=(",", ":")))
        return "\n".join(lines) + ("\n" if lines else "")


def routing_study(coords: np.ndarray, truth: np.ndarray, graph: CommGraph, clustering: Clustering,
                  cg: ClusterGraph, pairs: np.ndarray, delivery_radius: float,
                  weight: Weight = "hops") -> RoutingStudy:
    """Greedy routing on ``coords`` and cluster routing on the same src/dst pairs."""
    greedy, cluster = [], []
    for s, d in pairs:
        greedy.append(greedy_to_node(coords, graph, int(s), int(d), delivery_radius, truth))
        cluster.append(route_between_nodes(cg, clustering, graph, int(s), int(d), weight)[1])
    return RoutingStudy(greedy, cluster, np.asarray(pairs))


def write_jsonl(path, study: RoutingStudy) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(study.jsonl())
