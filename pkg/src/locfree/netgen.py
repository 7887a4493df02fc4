"""Street-scenario deployments, unit-disk graphs and noisy ranging.

All randomness in the package flows from here.  Generators are numpy's
PCG64 seeded through ``SeedSequence`` so an instance is a pure function of
``(spec, seed)`` on every platform numpy supports.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy import sparse
from scipy.spatial import cKDTree
from shapely.geometry import LineString
from shapely.ops import unary_union
from shapely import contains_xy

DEPLOYMENT_FORMAT = "locfree.deployment/1"
INSTANCE_FORMAT = "locfree.instance/1"

# noisy distances are clipped at this fraction of the true distance
EPS_FLOOR = 0.01

# substream tags for SeedSequence.spawn-style derivation
_STREAM_POSITIONS = 0
_STREAM_ANCHORS = 1
_STREAM_RANGING = 2


class Point2D(NamedTuple):
    x: float
    y: float


@dataclass(frozen=True)
class Segment:
    polyline: tuple[Point2D, ...]
    width: float
    node_density: float


@dataclass(frozen=True)
class AnchorRegion:
    # (xmin, ymin, xmax, ymax)
    rect: tuple[float, float, float, float]
    anchor_count: int


@dataclass(frozen=True)
class DeploymentSpec:
    segments: tuple[Segment, ...]
    anchor_regions: tuple[AnchorRegion, ...]
    comm_radius: float
    seed: int = 0
    name: str = ""

    def with_seed(self, seed: int) -> "DeploymentSpec":
        return replace(self, seed=int(seed))

    def validate(self) -> None:
        if not self.segments:
            raise ValueError("deployment has no segments")
        if not self.comm_radius > 0:
            raise ValueError("comm_radius must be positive")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        for i, seg in enumerate(self.segments):
            if len(seg.polyline) < 2:
                raise ValueError(f"segment {i}: polyline needs at least two points")
            if not seg.width > 0:
                raise ValueError(f"segment {i}: width must be positive")
            if seg.node_density < 0:
                raise ValueError(f"segment {i}: negative node density")
            if not np.all(np.isfinite(np.asarray(seg.polyline, dtype=float))):
                raise ValueError(f"segment {i}: non-finite coordinates")
        for i, reg in enumerate(self.anchor_regions):
            x0, y0, x1, y1 = reg.rect
            if not (x1 >= x0 and y1 >= y0):
                raise ValueError(f"anchor region {i}: malformed rectangle")
            if reg.anchor_count < 0:
                raise ValueError(f"anchor region {i}: negative anchor count")


class CommGraph:
    """Undirected communication graph on dense node ids ``0..n-1``.

    ``edges`` holds each undirected edge once as ``(u, v)`` with ``u < v``,
    sorted lexicographically.  ``adjacency[v]`` is the sorted neighbor array.
    """

    def __init__(self, n: int, edges: np.ndarray):
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if len(edges):
            edges = np.sort(edges, axis=1)
            if np.any(edges[:, 0] == edges[:, 1]):
                raise ValueError("self loops are not allowed")
            edges = np.unique(edges, axis=0)
        self.n = int(n)
        self.edges = edges
        sym = np.concatenate([edges, edges[:, ::-1]]) if len(edges) else edges
        order = np.lexsort((sym[:, 1], sym[:, 0])) if len(sym) else np.array([], dtype=np.int64)
        sym = sym[order]
        self._src = sym[:, 0] if len(sym) else np.array([], dtype=np.int64)
        self._dst = sym[:, 1] if len(sym) else np.array([], dtype=np.int64)
        self.indptr = np.zeros(self.n + 1, dtype=np.int64)
        np.add.at(self.indptr, self._src + 1, 1)
        self.indptr = np.cumsum(self.indptr)
        self.indices = self._dst

    @property
    def adjacency(self) -> list[np.ndarray]:
        return [self.neighbors(v) for v in range(self.n)]

    def neighbors(self, v: int) -> np.ndarray:
        return self.indices[self.indptr[v]:self.indptr[v + 1]]

    def degree(self) -> np.ndarray:
        return np.diff(self.indptr)

    def directed_edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Both orientations of every edge, grouped by source node."""
        return self._src, self._dst

    def has_edge(self, u: int, v: int) -> bool:
        nb = self.neighbors(u)
        i = np.searchsorted(nb, v)
        return bool(i < len(nb) and nb[i] == v)

    def csr(self, weights: np.ndarray | None = None) -> sparse.csr_matrix:
        data = np.ones(len(self.indices)) if weights is None else weights
        return sparse.csr_matrix((data, self.indices, self.indptr), shape=(self.n, self.n))

    def subgraph_components(self, mask: np.ndarray) -> np.ndarray:
        """Component label per node of the subgraph induced by ``mask``; -1 outside."""
        from scipy.sparse.csgraph import connected_components

        mask = np.asarray(mask, dtype=bool)
        keep = mask[self._src] & mask[self._dst]
        m = sparse.csr_matrix(
            (np.ones(keep.sum()), (self._src[keep], self._dst[keep])), shape=(self.n, self.n)
        )
        _, labels = connected_components(m, directed=False)
        out = np.full(self.n, -1, dtype=np.int64)
        idx = np.flatnonzero(mask)
        if len(idx) == 0:
            return out
        # relabel to 0..k-1 in order of smallest member id
        uniq, first, inv = np.unique(labels[idx], return_index=True, return_inverse=True)
        rank = np.empty(len(uniq), dtype=np.int64)
        rank[np.argsort(first)] = np.arange(len(uniq))
        out[idx] = rank[inv]
        return out

    def is_connected(self) -> bool:
        if self.n == 0:
            return True
        return bool(np.all(self.subgraph_components(np.ones(self.n, bool)) == 0))

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, CommGraph)
            and self.n == other.n
            and np.array_equal(self.edges, other.edges)
        )


@dataclass
class NetworkInstance:
    positions: np.ndarray  # (n, 2) ground truth
    anchors: np.ndarray  # sorted node ids
    comm_radius: float
    graph: CommGraph
    seed: int = 0
    name: str = ""

    @property
    def n(self) -> int:
        return len(self.positions)

    @property
    def anchor_positions(self) -> np.ndarray:
        return self.positions[self.anchors]

    def is_anchor(self) -> np.ndarray:
        mask = np.zeros(self.n, dtype=bool)
        mask[self.anchors] = True
        return mask

    def to_json(self) -> dict:
        return {
            "format": INSTANCE_FORMAT,
            "name": self.name,
            "seed": int(self.seed),
            "comm_radius": float(self.comm_radius),
            "positions": [[float(x), float(y)] for x, y in self.positions],
            "anchors": [int(a) for a in self.anchors],
        }

    @classmethod
    def from_json(cls, data: dict) -> "NetworkInstance":
        if data.get("format") != INSTANCE_FORMAT:
            raise ValueError(f"unsupported instance format {data.get('format')!r}")
        pos = np.asarray(data["positions"], dtype=float).reshape(-1, 2)
        r = float(data["comm_radius"])
        return cls(
            positions=pos,
            anchors=np.array(sorted(data["anchors"]), dtype=np.int64),
            comm_radius=r,
            graph=build_unit_disk_graph(pos, r),
            seed=int(data.get("seed", 0)),
            name=data.get("name", ""),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_json(), separators=(",", ":"))


class RangingTable:
    """One measured length per communication edge, aligned with ``graph.edges``."""

    def __init__(self, graph: CommGraph, measured: np.ndarray, noise_stddev_fraction: float):
        measured = np.asarray(measured, dtype=float)
        if measured.shape != (len(graph.edges),):
            raise ValueError("one measurement per edge expected")
        self.graph = graph
        self.edges = graph.edges
        self.measured = measured
        self.noise_stddev_fraction = float(noise_stddev_fraction)
        # per directed edge, same order as graph.directed_edges()
        src, dst = graph.directed_edges()
        lo, hi = np.minimum(src, dst), np.maximum(src, dst)
        idx = _edge_index(graph.edges, graph.n, lo, hi)
        self.directed = measured[idx]
        self._matrix = graph.csr(self.directed)

    def get(self, u: int, v: int) -> float:
        if u == v or not self.graph.has_edge(u, v):
            raise KeyError((u, v))
        return float(self._matrix[u, v])

    def lookup(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Vectorized lookup; NaN where ``{u, v}`` is not an edge."""
        u = np.asarray(u)
        v = np.asarray(v)
        lo, hi = np.minimum(u, v), np.maximum(u, v)
        keys = self.edges[:, 0] * self.graph.n + self.edges[:, 1]
        q = lo * self.graph.n + hi
        pos = np.searchsorted(keys, q)
        pos = np.clip(pos, 0, max(len(keys) - 1, 0))
        out = np.full(q.shape, np.nan)
        if len(keys):
            hit = keys[pos] == q
            out[hit] = self.measured[pos[hit]]
        return out

    def as_dict(self) -> dict[tuple[int, int], float]:
        return {(int(u), int(v)): float(d) for (u, v), d in zip(self.edges, self.measured)}


def _edge_index(edges: np.ndarray, n: int, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    keys = edges[:, 0] * n + edges[:, 1]
    return np.searchsorted(keys, lo * n + hi)


def _streams(seed: int, which: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(which,))))


def _segment_region(seg: Segment):
    line = LineString([tuple(p) for p in seg.polyline])
    # flat caps, mitred joins: the street is exactly its rectangle pieces
    return line.buffer(seg.width / 2.0, cap_style="flat", join_style="mitre")


def _sample_polygon(poly, count: int, rng: np.random.Generator) -> np.ndarray:
    if count == 0 or poly.is_empty:
        return np.empty((0, 2))
    x0, y0, x1, y1 = poly.bounds
    out = []
    need = count
    while need > 0:
        batch = max(64, int(need * (x1 - x0) * (y1 - y0) / poly.area * 1.2) + 16)
        pts = np.column_stack([rng.uniform(x0, x1, batch), rng.uniform(y0, y1, batch)])
        pts = pts[contains_xy(poly, pts[:, 0], pts[:, 1])]
        out.append(pts[:need])
        need -= len(out[-1])
    return np.concatenate(out)


def generate_network(spec: DeploymentSpec) -> NetworkInstance:
    """Sample node positions and anchors for ``spec`` and wire the unit-disk graph.

    Each segment owns the part of its street polygon not already covered by an
    earlier segment, so overlaps at junctions are not double-populated.  The
    node count per segment is Poisson with mean ``density * owned_area``.
    """
    spec.validate()
    rng = _streams(spec.seed, _STREAM_POSITIONS)
    covered = None
    chunks = []
    for seg in spec.segments:
        region = _segment_region(seg)
        owned = region if covered is None else region.difference(covered)
        covered = region if covered is None else unary_union([covered, region])
        count = int(rng.poisson(seg.node_density * owned.area)) if owned.area > 0 else 0
        chunks.append(_sample_polygon(owned, count, rng))
    positions = np.concatenate(chunks) if chunks else np.empty((0, 2))
    if len(positions) == 0:
        raise ValueError("deployment produced no nodes")

    arng = _streams(spec.seed, _STREAM_ANCHORS)
    taken = np.zeros(len(positions), dtype=bool)
    anchors = []
    for i, reg in enumerate(spec.anchor_regions):
        x0, y0, x1, y1 = reg.rect
        inside = (
            (positions[:, 0] >= x0) & (positions[:, 0] <= x1)
            & (positions[:, 1] >= y0) & (positions[:, 1] <= y1) & ~taken
        )
        cand = np.flatnonzero(inside)
        if reg.anchor_count > len(cand):
            raise ValueError(
                f"anchor region {i} asks for {reg.anchor_count} anchors but holds {len(cand)} nodes"
            )
        pick = arng.choice(cand, size=reg.anchor_count, replace=False) if reg.anchor_count else []
        taken[pick] = True
        anchors.extend(int(p) for p in pick)

    graph = build_unit_disk_graph(positions, spec.comm_radius)
    return NetworkInstance(
        positions=positions,
        anchors=np.array(sorted(anchors), dtype=np.int64),
        comm_radius=float(spec.comm_radius),
        graph=graph,
        seed=spec.seed,
        name=spec.name,
    )


def build_unit_disk_graph(positions, radius: float) -> CommGraph:
    """Edge ``{u, v}`` iff ``|p_u - p_v| <= radius`` (closed disk)."""
    if isinstance(positions, dict):
        n = max(positions) + 1 if positions else 0
        if sorted(positions) != list(range(n)):
            raise ValueError("node ids must be dense integers 0..n-1")
        positions = np.array([positions[i] for i in range(n)], dtype=float).reshape(-1, 2)
    pos = np.asarray(positions, dtype=float).reshape(-1, 2)
    if not radius > 0:
        raise ValueError("radius must be positive")
    if len(pos) < 2:
        return CommGraph(len(pos), np.empty((0, 2), dtype=np.int64))
    pairs = cKDTree(pos).query_pairs(radius, output_type="ndarray")
    return CommGraph(len(pos), pairs)


def measure_distances(instance: NetworkInstance, noise_stddev_fraction: float, seed: int) -> RangingTable:
    """Multiplicative Gaussian ranging noise, truncated at ``EPS_FLOOR``."""
    if noise_stddev_fraction < 0:
        raise ValueError("noise fraction must be non-negative")
    e = instance.graph.edges
    true = np.linalg.norm(instance.positions[e[:, 0]] - instance.positions[e[:, 1]], axis=1)
    if noise_stddev_fraction == 0:
        return RangingTable(instance.graph, true.copy(), 0.0)
    rng = _streams(seed, _STREAM_RANGING)
    factor = np.maximum(EPS_FLOOR, 1.0 + rng.normal(0.0, noise_stddev_fraction, len(true)))
    measured = true * factor
    # coincident nodes would measure zero; keep values strictly positive
    measured = np.where(measured > 0, measured, np.finfo(float).tiny)
    return RangingTable(instance.graph, measured, noise_stddev_fraction)


def true_distances(instance: NetworkInstance) -> RangingTable:
    return measure_distances(instance, 0.0, 0)


# -- deployment spec files --------------------------------------------------

def spec_to_json(spec: DeploymentSpec) -> dict:
    return {
        "format": DEPLOYMENT_FORMAT,
        "name": spec.name,
        "comm_radius": spec.comm_radius,
        "seed": spec.seed,
        "segments": [
            {"polyline": [list(p) for p in s.polyline], "width": s.width, "node_density": s.node_density}
            for s in spec.segments
        ],
        "anchor_regions": [
            {"rect": list(r.rect), "anchor_count": r.anchor_count} for r in spec.anchor_regions
        ],
    }


def spec_from_json(data: dict) -> DeploymentSpec:
    from .schema import DeploymentModel

    model = DeploymentModel.model_validate(data)
    return DeploymentSpec(
        segments=tuple(
            Segment(tuple(Point2D(*p) for p in s.polyline), s.width, s.node_density)
            for s in model.segments
        ),
        anchor_regions=tuple(AnchorRegion(tuple(r.rect), r.anchor_count) for r in model.anchor_regions),
        comm_radius=model.comm_radius,
        seed=model.seed,
        name=model.name,
    )


def load_spec(path: str | Path) -> DeploymentSpec:
    from .schema import DeploymentModel, validate_file

    return spec_from_json(validate_file(path, DeploymentModel).model_dump())


def bundled_spec_path(name: str) -> Path:
    return Path(__file__).parent / "data" / f"{name}.json"


def paper_streets(seed: int = 1) -> DeploymentSpec:
    return load_spec(bundled_spec_path("paper_streets")).with_seed(seed)


def plus_layout(seed: int = 1, arm: float = 60.0, width: float = 20.0,
                density: float = 0.2, comm_radius: float = 10.0) -> DeploymentSpec:
    """Two crossing streets: four arms meeting in one intersection."""
    return DeploymentSpec(
        segments=(
            Segment((Point2D(-arm, 0.0), Point2D(arm, 0.0)), width, density),
            Segment((Point2D(0.0, -arm), Point2D(0.0, arm)), width, density),
        ),
        anchor_regions=(),
        comm_radius=comm_radius,
        seed=seed,
        name="plus",
    )


def corridor_layout(seed: int = 1, length: float = 120.0, width: float = 20.0,
                    density: float = 0.2, comm_radius: float = 10.0) -> DeploymentSpec:
    return DeploymentSpec(
        segments=(Segment((Point2D(0.0, 0.0), Point2D(length, 0.0)), width, density),),
        anchor_regions=(),
        comm_radius=comm_radius,
        seed=seed,
        name="corridor",
    )
