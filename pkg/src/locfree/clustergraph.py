"""Coordinate-free location: rim detection, street/intersection clusters, cluster graph.

Every decision a node makes here depends only on its hop neighbourhood
(``locfree.driver`` replays the local parts as audited message rounds).
The cluster graph that results is small enough to hand to every node.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Literal, Mapping, Sequence

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components, dijkstra, shortest_path

from .netgen import CommGraph

Kind = Literal["street", "intersection", "other"]
Variant = Literal["cluster_per_vertex", "street_as_edge"]
CLUSTER_GRAPH_FORMAT = "locfree.clustergraph/1"


# -- rim detection ------------------------------------------------------------

def hop_ball_max(graph: CommGraph, values: np.ndarray, hops: int) -> np.ndarray:
    """Max of ``values`` over each node's ``hops``-hop neighbourhood (itself included)."""
    out = np.asarray(values, dtype=float).copy()
    src, dst = graph.directed_edges()
    for _ in range(hops):
        nxt = out.copy()
        if len(src):
            np.maximum.at(nxt, src, out[dst])
        out = nxt
    return out


BoundaryCriterion = Callable[[CommGraph, int], np.ndarray]


def degree_criterion(percentile: float = 0.6) -> BoundaryCriterion:
    """Rim rule: degree below ``percentile`` times the largest degree within h hops."""
    if not 0 < percentile < 1:
        raise ValueError("percentile must lie in (0, 1)")

    def rule(graph: CommGraph, hop_horizon: int) -> np.ndarray:
        deg = graph.degree().astype(float)
        return deg < percentile * hop_ball_max(graph, deg, hop_horizon)

    return rule


@dataclass
class BoundaryInfo:
    is_boundary: np.ndarray
    strips: list[np.ndarray]

    @property
    def strip_of(self) -> np.ndarray:
        out = np.full(len(self.is_boundary), -1, dtype=np.int64)
        for i, s in enumerate(self.strips):
            out[s] = i
        return out


def detect_boundary(graph: CommGraph, hop_horizon: int = 2, percentile: float = 0.6,
                    criterion: BoundaryCriterion | None = None) -> BoundaryInfo:
    """Flag rim nodes by a local rule and group them into connected strips.

    ``criterion`` replaces the default degree rule; it receives the graph and
    ``hop_horizon`` and returns a boolean flag per node.
    """
    if hop_horizon < 1:
        raise ValueError("hop_horizon must be >= 1")
    rule = criterion if criterion is not None else degree_criterion(percentile)
    flags = np.asarray(rule(graph, hop_horizon), dtype=bool)
    labels = graph.subgraph_components(flags)
    k = int(labels.max()) + 1 if flags.any() else 0
    order = np.argsort(labels, kind="stable")
    counts = np.bincount(labels[flags], minlength=k)
    members = order[len(labels) - flags.sum():]
    strips = np.split(members, np.cumsum(counts)[:-1]) if k else []
    return BoundaryInfo(flags, [np.sort(s) for s in strips])


# -- clustering -----------------------------------------------------------------

@dataclass(frozen=True)
class ClusterParams:
    ring_hops: int = 3
    min_branch_size: int = 3
    min_cluster_size: int = 5


@dataclass
class Clustering:
    """``assignment[v]`` is the cluster id of node v; ids are dense, ordered by smallest member."""

    assignment: np.ndarray
    kind: dict[int, str]
    labels: dict[int, str] = field(default_factory=dict)

    @property
    def n_clusters(self) -> int:
        return len(self.kind)

    def members(self, c: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == c)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.n_clusters)

    def counts_by_kind(self) -> dict[str, int]:
        out = {"street": 0, "intersection": 0, "other": 0}
        for k in self.kind.values():
            out[k] += 1
        return out

    def to_json(self) -> dict:
        return {
            "assignment": self.assignment.tolist(),
            "kind": {str(c): k for c, k in sorted(self.kind.items())},
            "labels": {str(c): s for c, s in sorted(self.labels.items())},
        }


def k_hop_distances(graph: CommGraph, hops: int) -> sparse.csr_matrix:
    """Sparse hop distances up to ``hops`` for all pairs (self distance stored as 0 is implicit)."""
    d = dijkstra(graph.csr(), unweighted=True, limit=hops + 0.5)
    d[~np.isfinite(d)] = 0
    return sparse.csr_matrix(d)


def branch_counts(graph: CommGraph, ring_hops: int = 3, min_branch_size: int = 3) -> np.ndarray:
    """Number of streets leaving each node.

    The nodes exactly ``ring_hops`` hops away form a ring around v; each
    connected piece of that ring with at least ``min_branch_size`` nodes is
    one branch.  Street
    interiors see two branches, dead-end tips one, crossings three or more.
    """
    n = graph.n
    adj = graph.csr()
    dist = k_hop_distances(graph, ring_hops)
    out = np.zeros(n, dtype=np.int64)
    for v in range(n):
        row = dist.indices[dist.indptr[v]:dist.indptr[v + 1]]
        ring = row[dist.data[dist.indptr[v]:dist.indptr[v + 1]] == ring_hops]
        if len(ring) == 0:
            continue
        ring = np.sort(ring)
        _, lab = connected_components(adj[ring][:, ring], directed=False)
        out[v] = int((np.bincount(lab) >= min_branch_size).sum())
    return out


def _label_components(graph: CommGraph, labels: np.ndarray) -> np.ndarray:
    """Components of edges joining equal labels; -1 labels stay unassigned."""
    src, dst = graph.directed_edges()
    keep = (labels[src] == labels[dst]) & (labels[src] >= 0)
    m = sparse.csr_matrix((np.ones(keep.sum()), (src[keep], dst[keep])), shape=(graph.n, graph.n))
    _, comp = connected_components(m, directed=False)
    comp = comp.astype(np.int64)
    comp[labels < 0] = -1
    return _dense_by_min_member(comp)


def _dense_by_min_member(labels: np.ndarray) -> np.ndarray:
    out = np.full(len(labels), -1, dtype=np.int64)
    idx = np.flatnonzero(labels >= 0)
    if len(idx) == 0:
        return out
    uniq, first, inv = np.unique(labels[idx], return_index=True, return_inverse=True)
    rank = np.empty(len(uniq), dtype=np.int64)
    rank[np.argsort(first)] = np.arange(len(uniq))
    out[idx] = rank[inv]
    return out


def _crossing_counts(graph: CommGraph, assignment: np.ndarray) -> dict[tuple[int, int], int]:
    e = graph.edges
    if len(e) == 0:
        return {}
    a, b = assignment[e[:, 0]], assignment[e[:, 1]]
    cross = a != b
    lo, hi = np.minimum(a[cross], b[cross]), np.maximum(a[cross], b[cross])
    pairs, counts = np.unique(np.column_stack([lo, hi]), axis=0, return_counts=True)
    return {(int(p), int(q)): int(c) for (p, q), c in zip(pairs, counts)}


def _merge_leftovers(graph: CommGraph, assignment: np.ndarray) -> np.ndarray:
    """Unassigned nodes join the nearest cluster by hops; ties go to the lowest cluster id."""
    left = np.flatnonzero(assignment < 0)
    if len(left) == 0:
        return assignment
    out = assignment.copy()
    assigned = np.flatnonzero(assignment >= 0)
    if len(assigned):
        d = shortest_path(graph.csr(), method="D", unweighted=True, indices=left)[:, assigned]
        for i, v in enumerate(left):
            row = d[i]
            if np.isfinite(row).any():
                best = row.min()
                out[v] = int(assignment[assigned[row == best]].min())
    # whatever is still unassigned lives in a component without clusters
    rest = out < 0
    if rest.any():
        comp = graph.subgraph_components(rest)
        out[rest] = comp[rest] + (out.max() + 1 if (~rest).any() else 0)
    return out


def _merge_small(graph: CommGraph, assignment: np.ndarray, kinds: dict[int, str],
                 min_size: int) -> tuple[np.ndarray, dict[int, str]]:
    """Fold clusters below ``min_size`` into the neighbour sharing most edges (ties: lowest id)."""
    assignment = assignment.copy()
    while True:
        sizes = np.bincount(assignment)
        small = [c for c in np.argsort(sizes, kind="stable") if 0 < sizes[c] < min_size]
        cross = _crossing_counts(graph, assignment)
        target = None
        for c in small:
            cand = {}
            for (p, q), cnt in cross.items():
                if p == c:
                    cand[q] = cnt
                elif q == c:
                    cand[p] = cnt
            if cand:
                best = max(cand.values())
                target = (int(c), min(o for o, cnt in cand.items() if cnt == best))
                break
        if target is None:
            break
        c, into = target
        assignment[assignment == c] = into
    dense = _dense_by_min_member(assignment)
    new_kinds = {}
    for old, new in zip(assignment, dense):
        new_kinds.setdefault(int(new), kinds.get(int(old), "other"))
    return dense, new_kinds


def intersection_cores(graph: CommGraph, branches: np.ndarray, min_size: int) -> np.ndarray:
    """Nodes with three or more branches, minus specks smaller than ``min_size``."""
    core = branches >= 3
    if not core.any():
        return core
    comp = graph.subgraph_components(core)
    sizes = np.bincount(comp[core])
    return core & (sizes[np.maximum(comp, 0)] >= min_size)


def build_clusters(graph: CommGraph, params: ClusterParams = ClusterParams()) -> Clustering:
    """Streets and intersections from local branch counts.

    Nodes with three or more branches mark a crossing; the crossing area is
    that core grown by ``ring_hops - 1`` hops, since the ring only splits
    once it reaches past the junction.  Each connected piece of the other
    nodes is a street.  Nodes that see no ring at all merge into the nearest
    cluster by hops, and clusters below ``min_cluster_size`` fold into a
    neighbour.
    """
    n = graph.n
    if n == 0:
        return Clustering(np.zeros(0, dtype=np.int64), {})
    br = branch_counts(graph, params.ring_hops, params.min_branch_size)
    core = intersection_cores(graph, br, params.min_cluster_size)
    crossing = hop_ball_max(graph, core.astype(float), params.ring_hops - 1) > 0
    cls = np.where(crossing, 1, np.where(br >= 1, 0, -1))
    comp = _label_components(graph, cls)
    kinds = {}
    for v in range(n):
        c = comp[v]
        if c >= 0 and c not in kinds:
            kinds[int(c)] = "intersection" if cls[v] == 1 else "street"
    if not kinds:
        # nothing but tiny pieces: one "other" cluster per component
        comp = graph.subgraph_components(np.ones(n, dtype=bool))
        kinds = {int(c): "other" for c in np.unique(comp)}
    merged = _merge_leftovers(graph, comp)
    for c in np.unique(merged):
        kinds.setdefault(int(c), "other")
    assignment, kinds = _merge_small(graph, merged, kinds, params.min_cluster_size)
    return Clustering(assignment, kinds)


def cluster_by_labels(graph: CommGraph, labels: Sequence, min_cluster_size: int = 5) -> Clustering:
    """Second strategy: clusters are connected regions of equal sensor reading.

    ``labels`` holds one discrete reading per node (e.g. "water", "field").
    """
    raw = np.asarray(labels, dtype=object)
    if len(raw) != graph.n:
        raise ValueError("need one label per node")
    names, codes = np.unique(raw.astype(str), return_inverse=True)
    comp = _label_components(graph, codes.astype(np.int64))
    kinds = {int(c): "other" for c in np.unique(comp)}
    assignment, kinds = _merge_small(graph, comp, kinds, min_cluster_size)
    text = {}
    for v in range(graph.n):
        text.setdefault(int(assignment[v]), str(names[codes[v]]))
    return Clustering(assignment, kinds, text)


def clustering_is_valid(clustering: Clustering, graph: CommGraph) -> bool:
    """Totality and per-cluster connectivity."""
    a = clustering.assignment
    if len(a) != graph.n or (a < 0).any():
        return False
    return bool(np.array_equal(np.sort(np.unique(_label_components(graph, a))), np.arange(clustering.n_clusters)))


# -- cluster graph ----------------------------------------------------------------

@dataclass
class ClusterGraph:
    """Vertices are clusters; an edge joins clusters whose nodes talk directly.

    ``vertices[c]`` holds ``kind`` and ``node_count``; ``edges[(a, b)]`` with
    ``a < b`` holds ``residual_energy``, ``bandwidth`` and ``node_count``,
    plus ``via`` (the contracted street) in the street_as_edge variant.
    """

    vertices: dict[int, dict]
    edges: dict[tuple[int, int], dict]
    variant: str = "cluster_per_vertex"
    # node-cluster id -> graph vertex (a contracted street maps to None)
    vertex_of: dict[int, int | None] = field(default_factory=dict)

    def neighbors(self, c: int) -> list[int]:
        out = [b if a == c else a for (a, b) in self.edges if c in (a, b)]
        return sorted(out)

    def has_edge(self, a: int, b: int) -> bool:
        return (min(a, b), max(a, b)) in self.edges

    def edge(self, a: int, b: int) -> dict:
        return self.edges[(min(a, b), max(a, b))]

    def is_connected(self) -> bool:
        if not self.vertices:
            return True
        ids = sorted(self.vertices)
        seen, todo = {ids[0]}, [ids[0]]
        while todo:
            for w in self.neighbors(todo.pop()):
                if w not in seen:
                    seen.add(w)
                    todo.append(w)
        return len(seen) == len(ids)

    def to_json(self) -> dict:
        return {
            "format": CLUSTER_GRAPH_FORMAT,
            "variant": self.variant,
            "vertices": [{"id": c, **_rounded(v)} for c, v in sorted(self.vertices.items())],
            "edges": [{"a": a, "b": b, **_rounded(v)} for (a, b), v in sorted(self.edges.items())],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), separators=(",", ":"))

    def to_dot(self) -> str:
        lines = ["graph clusters {"]
        for c, v in sorted(self.vertices.items()):
            shape = "box" if v["kind"] == "intersection" else "ellipse"
            lines.append(f'  c{c} [label="{c} {v["kind"]} ({v["node_count"]})", shape={shape}];')
        for (a, b), v in sorted(self.edges.items()):
            extra = f' label="via {v["via"]}"' if v.get("via") is not None else ""
            lines.append(f"  c{a} -- c{b} [weight={v['node_count']}{extra}];")
        lines.append("}")
        return "\n".join(lines) + "\n"


def _rounded(d: dict) -> dict:
    return {k: (round(v, 6) if isinstance(v, float) else v) for k, v in d.items()}


def _border_zones(graph: CommGraph, assignment: np.ndarray) -> dict[tuple[int, int], np.ndarray]:
    """Nodes of either cluster that have a neighbour in the other one."""
    e = graph.edges
    zones: dict[tuple[int, int], set] = {}
    if len(e) == 0:
        return {}
    a, b = assignment[e[:, 0]], assignment[e[:, 1]]
    for (u, v), ca, cb in zip(e[a != b], a[a != b], b[a != b]):
        key = (int(min(ca, cb)), int(max(ca, cb)))
        zones.setdefault(key, set()).update((int(u), int(v)))
    return {k: np.array(sorted(s), dtype=np.int64) for k, s in zones.items()}


def _attr_arrays(n: int, node_attrs) -> tuple[np.ndarray, np.ndarray]:
    if node_attrs is None:
        return np.ones(n), np.ones(n)
    if isinstance(node_attrs, Mapping):
        energy = np.array([float(node_attrs[v]["energy"]) for v in range(n)])
        bw = np.array([float(node_attrs[v]["bandwidth"]) for v in range(n)])
        return energy, bw
    energy, bw = node_attrs
    return np.asarray(energy, dtype=float), np.asarray(bw, dtype=float)


def build_cluster_graph(clustering: Clustering, graph: CommGraph,
                        variant: Variant = "cluster_per_vertex", node_attrs=None) -> ClusterGraph:
    """Cluster adjacency graph; edge attributes come from :func:`annotate_edges`.

    Without ``node_attrs`` every node counts as energy 1 and bandwidth 1.
    ``street_as_edge`` turns each street touching exactly two intersections
    into an edge between them; every other cluster keeps its own vertex.
    """
    a = clustering.assignment
    sizes = clustering.sizes()
    cross = _crossing_counts(graph, a)
    base = ClusterGraph(
        vertices={c: {"kind": clustering.kind[c], "node_count": int(sizes[c])} for c in range(clustering.n_clusters)},
        edges={k: {"residual_energy": 1.0, "bandwidth": 1.0, "node_count": 0} for k in cross},
        variant="cluster_per_vertex",
        vertex_of={c: c for c in range(clustering.n_clusters)},
    )
    base = annotate_edges(base, clustering, graph, node_attrs)
    if variant == "cluster_per_vertex":
        return base
    if variant != "street_as_edge":
        raise ValueError(f"unknown variant {variant!r}")

    contracted = {}
    for c, v in base.vertices.items():
        if v["kind"] != "street":
            continue
        ends = [o for o in base.neighbors(c) if base.vertices[o]["kind"] == "intersection"]
        if len(ends) == 2 and len(base.neighbors(c)) == 2:
            contracted[c] = tuple(sorted(ends))
    energy, bw = _attr_arrays(graph.n, node_attrs)
    vertices = {c: v for c, v in base.vertices.items() if c not in contracted}
    edges = {k: v for k, v in base.edges.items() if k[0] not in contracted and k[1] not in contracted}
    for s, (p, q) in sorted(contracted.items()):
        if (p, q) in edges and edges[(p, q)].get("via") is not None:
            continue  # parallel street already represents this pair; keep the lower id
        nodes = clustering.members(s)
        edges[(p, q)] = {
            "residual_energy": float(energy[nodes].mean()),
            "bandwidth": float(bw[nodes].min()),
            "node_count": int(len(nodes)),
            "via": int(s),
        }
    vertex_of = {c: (None if c in contracted else c) for c in range(clustering.n_clusters)}
    return ClusterGraph(vertices, edges, "street_as_edge", vertex_of)


def annotate_edges(cg: ClusterGraph, clustering: Clustering, graph: CommGraph, node_attrs=None) -> ClusterGraph:
    """Energy (mean) and bandwidth (min) over each edge's border zone.

    ``node_attrs`` is a mapping ``node -> {"energy", "bandwidth"}`` or a pair
    of arrays; ``None`` means uniform 1.
    """
    energy, bw = _attr_arrays(graph.n, node_attrs)
    zones = _border_zones(graph, clustering.assignment)
    edges = {}
    for key, attrs in cg.edges.items():
        new = dict(attrs)
        if attrs.get("via") is not None:
            nodes = clustering.members(attrs["via"])
        else:
            nodes = zones.get(key, np.zeros(0, dtype=np.int64))
        if len(nodes):
            new.update(residual_energy=float(energy[nodes].mean()), bandwidth=float(bw[nodes].min()),
                       node_count=int(len(nodes)))
        edges[key] = new
    return ClusterGraph(dict(cg.vertices), edges, cg.variant, dict(cg.vertex_of))


def brute_force_cluster_edges(clustering: Clustering, graph: CommGraph) -> set[tuple[int, int]]:
    """Reference scan: every communication edge whose ends sit in different clusters."""
    out = set()
    a = clustering.assignment
    for u in range(graph.n):
        for v in graph.neighbors(u):
            if a[u] != a[v]:
                out.add((int(min(a[u], a[v])), int(max(a[u], a[v]))))
    return out


def node_location(clustering: Clustering, cg: ClusterGraph, v: int) -> dict:
    """What a node knows about where it is: its cluster, the kind, the adjacent clusters."""
    if not 0 <= v < len(clustering.assignment):
        raise KeyError(f"unknown node {v}")
    c = int(clustering.assignment[v])
    vertex = cg.vertex_of.get(c, c)
    if vertex is None:
        # a contracted street: its neighbours are the intersections it joins
        nbrs = [list(k) for k, e in cg.edges.items() if e.get("via") == c]
        neighbors = sorted(nbrs[0]) if nbrs else []
    else:
        neighbors = cg.neighbors(vertex)
    return {"cluster": c, "kind": clustering.kind[c], "neighbors": neighbors}
