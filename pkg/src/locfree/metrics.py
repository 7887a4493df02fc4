"""Consistency (C1/C2), folding, frame alignment and aggregation checks."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .netgen import CommGraph, NetworkInstance, RangingTable


def _placement_coords(placement) -> np.ndarray:
    return placement.coords if hasattr(placement, "coords") else np.asarray(placement, dtype=float)


def stress(placement, ranging: RangingTable) -> float:
    """Mean squared edge residual ``(|p_u - p_v| - measured_uv)^2``.

    Only edges with both endpoints positioned count; the mean keeps values
    comparable between placements with different coverage.
    """
    coords = _placement_coords(placement)
    e = ranging.edges
    if len(e) == 0:
        return 0.0
    placed = np.linalg.norm(coords[e[:, 0]] - coords[e[:, 1]], axis=1)
    ok = np.isfinite(placed)
    if not ok.any():
        return float("inf")
    return float(np.mean((placed[ok] - ranging.measured[ok]) ** 2))


class ViolationList(list):
    """Plain list of violation tuples plus the number of skipped candidates."""

    skipped: int = 0


def _coords_and_mask(placement):
    coords = _placement_coords(placement)
    return coords, np.all(np.isfinite(coords), axis=1)


def check_c1(placement, graph: CommGraph, max_dist: float) -> ViolationList:
    """Edges placed farther apart than ``max_dist``: ``(u, v, placed_dist)``."""
    if not max_dist > 0:
        raise ValueError("max_dist must be positive")
    coords, ok = _coords_and_mask(placement)
    e = graph.edges
    both = ok[e[:, 0]] & ok[e[:, 1]]
    d = np.linalg.norm(coords[e[:, 0]] - coords[e[:, 1]], axis=1)
    bad = both & (d > max_dist)
    out = ViolationList((int(u), int(v), float(x)) for (u, v), x in zip(e[bad], d[bad]))
    out.skipped = int((~both).sum())
    return out


def close_pairs(coords: np.ndarray, radius: float) -> np.ndarray:
    """Index pairs ``(i, j)``, ``i < j``, of finite points within ``radius`` (inclusive).

    Backed by a k-d tree over the positioned points.
    """
    ok = np.flatnonzero(np.all(np.isfinite(coords), axis=1))
    if len(ok) < 2:
        return np.empty((0, 2), dtype=np.int64)
    pairs = cKDTree(coords[ok]).query_pairs(radius, output_type="ndarray")
    pairs = np.sort(ok[pairs], axis=1) if len(pairs) else np.empty((0, 2), dtype=np.int64)
    if len(pairs):
        pairs = pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))]
    return pairs


def _adjacent(graph: CommGraph, pairs: np.ndarray) -> np.ndarray:
    if len(pairs) == 0 or len(graph.edges) == 0:
        return np.zeros(len(pairs), dtype=bool)
    keys = graph.edges[:, 0] * graph.n + graph.edges[:, 1]
    q = pairs[:, 0] * graph.n + pairs[:, 1]
    pos = np.clip(np.searchsorted(keys, q), 0, len(keys) - 1)
    return keys[pos] == q


def check_c2(placement, graph: CommGraph, min_dist: float) -> ViolationList:
    """Non-adjacent pairs placed closer than ``min_dist``: ``(u, v, placed_dist)``."""
    if not min_dist > 0:
        raise ValueError("min_dist must be positive")
    coords, ok = _coords_and_mask(placement)
    pairs = close_pairs(coords, min_dist)
    if len(pairs):
        d = np.linalg.norm(coords[pairs[:, 0]] - coords[pairs[:, 1]], axis=1)
        keep = (d < min_dist) & ~_adjacent(graph, pairs)
        pairs, d = pairs[keep], d[keep]
    else:
        d = np.empty(0)
    out = ViolationList((int(u), int(v), float(x)) for (u, v), x in zip(pairs, d))
    out.skipped = int((~ok).sum())
    return out


def check_c2_bruteforce(placement, graph: CommGraph, min_dist: float) -> list:
    """O(n^2) reference for :func:`check_c2`."""
    coords, ok = _coords_and_mask(placement)
    out = []
    n = len(coords)
    for u in range(n):
        if not ok[u]:
            continue
        for v in range(u + 1, n):
            if not ok[v] or graph.has_edge(u, v):
                continue
            d = float(np.hypot(*(coords[u] - coords[v])))
            if d < min_dist:
                out.append((u, v, d))
    return out


def detect_folds(placement, instance: NetworkInstance, far_factor: float = 5.0,
                 near_factor: float = 1.0) -> list:
    """Pairs truly farther than ``far_factor * R`` but placed within ``near_factor * R``.

    Entries are ``(u, v, true_dist, placed_dist)`` with ``u < v``.
    """
    if not far_factor > near_factor > 0:
        raise ValueError("need far_factor > near_factor > 0")
    r = instance.comm_radius
    coords, _ = _coords_and_mask(placement)
    pairs = close_pairs(coords, near_factor * r)
    if len(pairs) == 0:
        return []
    placed = np.linalg.norm(coords[pairs[:, 0]] - coords[pairs[:, 1]], axis=1)
    true = np.linalg.norm(instance.positions[pairs[:, 0]] - instance.positions[pairs[:, 1]], axis=1)
    keep = (placed < near_factor * r) & (true > far_factor * r)
    return [
        (int(u), int(v), float(t), float(p))
        for (u, v), t, p in zip(pairs[keep], true[keep], placed[keep])
    ]


def count_folds(placement, instance: NetworkInstance, far_factor: float = 5.0,
                near_factor: float = 1.0) -> int:
    return len(detect_folds(placement, instance, far_factor, near_factor))


# -- alignment -----------------------------------------------------------------

@dataclass
class AlignmentTransform:
    """``y = scale * Rot(angle) @ Refl @ x + translation``; Refl flips y when set."""

    angle: float = 0.0
    reflection: bool = False
    translation: tuple[float, float] = (0.0, 0.0)
    scale: float = 1.0
    low_confidence: bool = False

    def matrix(self) -> np.ndarray:
        c, s = np.cos(self.angle), np.sin(self.angle)
        m = np.array([[c, -s], [s, c]])
        if self.reflection:
            m = m @ np.diag([1.0, -1.0])
        return self.scale * m

    def apply(self, coords: np.ndarray) -> np.ndarray:
        return coords @ self.matrix().T + np.asarray(self.translation)


def align(placement, ground_truth: np.ndarray, allow_reflection: bool = True,
          allow_scale: bool = False):
    """Least-squares rigid (or similarity) fit of ``placement`` onto ``ground_truth``.

    Returns ``(aligned_coords, AlignmentTransform, rms_error)``.  Only nodes
    positioned in the placement take part; unpositioned rows stay NaN.
    """
    coords, ok = _coords_and_mask(placement)
    truth = np.asarray(ground_truth, dtype=float)
    if ok.sum() < 3:
        raise ValueError("alignment needs at least three positioned nodes")
    x, y = coords[ok], truth[ok]
    mx, my = x.mean(axis=0), y.mean(axis=0)
    xc, yc = x - mx, y - my
    u, sv, vt = np.linalg.svd(yc.T @ xc)
    var_x = (xc ** 2).sum()
    best = None
    branches = (False, True) if allow_reflection else (False,)
    base = np.sign(np.linalg.det(u @ vt)) or 1.0
    for refl in branches:
        # d fixes det(R) = -1 on the reflection branch, +1 otherwise
        d = base if not refl else -base
        rot = u @ np.diag([1.0, d]) @ vt
        is_refl = np.linalg.det(rot) < 0
        scale = float((sv * np.array([1.0, d])).sum() / var_x) if allow_scale and var_x > 0 else 1.0
        if allow_scale and scale <= 0:
            scale = 1.0
        t = my - scale * rot @ mx
        resid = ((x @ rot.T * scale + t - y) ** 2).sum(axis=1)
        rms = float(np.sqrt(resid.mean()))
        if best is None or rms < best[0]:
            best = (rms, rot, scale, t, is_refl)
    rms, rot, scale, t, is_refl = best
    pure = rot @ np.diag([1.0, -1.0]) if is_refl else rot
    angle = float(np.arctan2(pure[1, 0], pure[0, 0]))
    low = bool(sv[1] <= 1e-9 * max(sv[0], 1e-300))
    tf = AlignmentTransform(angle, bool(is_refl), (float(t[0]), float(t[1])), scale, low)
    aligned = np.full_like(coords, np.nan)
    aligned[ok] = tf.apply(x)
    return aligned, tf, rms


def position_errors(placement, instance: NetworkInstance) -> np.ndarray:
    """Per-node euclidean error, NaN for unpositioned nodes (no alignment)."""
    coords = _placement_coords(placement)
    return np.linalg.norm(coords - instance.positions, axis=1)


# -- reports ---------------------------------------------------------------------

@dataclass
class ConsistencyReport:
    c1_violations: list
    c2_violations: list
    fold_pairs: list
    rms_error: float
    unpositioned_count: int
    params: dict = field(default_factory=dict)
    aligned_coords: np.ndarray | None = None

    def summary(self) -> dict:
        return {
            "c1_violations": len(self.c1_violations),
            "c2_violations": len(self.c2_violations),
            "fold_pairs": len(self.fold_pairs),
            "rms_error": _round(self.rms_error),
            "unpositioned_count": int(self.unpositioned_count),
            "params": self.params,
        }

    def rows(self, run_id: str, instance: NetworkInstance) -> list[tuple]:
        """One CSV row per violation: run id, kind, node_a, node_b, placed, true."""
        pos = instance.positions
        out = []
        for kind, items in (("c1", self.c1_violations), ("c2", self.c2_violations)):
            for u, v, placed in items:
                out.append((run_id, kind, u, v, _round(placed), _round(float(np.hypot(*(pos[u] - pos[v]))))))
        for u, v, true, placed in self.fold_pairs:
            out.append((run_id, "fold", u, v, _round(placed), _round(true)))
        return out

    def to_csv(self, run_id: str, instance: NetworkInstance) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        w.writerows(self.rows(run_id, instance))
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(self.summary(), sort_keys=True, indent=2)


CSV_HEADER = ("run_id", "kind", "node_a", "node_b", "placed_dist", "true_dist")


def _round(x: float) -> float | None:
    if x is None or not np.isfinite(x):
        return None
    return float(f"{x:.9g}")


def evaluate(placement, instance: NetworkInstance, c1_factor: float = 1.0, c2_factor: float = 1.0,
             far_factor: float = 5.0, near_factor: float = 1.0) -> ConsistencyReport:
    """Score a placement.

    Virtual frames are checked for C1, C2 and folds after a rigid fit with
    reflection, since their ranging-based scale is already metric; the rms
    error uses the best similarity fit.
    """
    r = instance.comm_radius
    coords, ok = _coords_and_mask(placement)
    frame = getattr(placement, "frame", "global")
    if frame == "virtual" and ok.sum() >= 3:
        rms = align(coords, instance.positions, allow_reflection=True, allow_scale=True)[2]
        coords = align(coords, instance.positions, allow_reflection=True)[0]
    else:
        err = np.linalg.norm(coords[ok] - instance.positions[ok], axis=1)
        rms = float(np.sqrt(np.mean(err ** 2))) if ok.any() else float("nan")
    return ConsistencyReport(
        c1_violations=list(check_c1(coords, instance.graph, c1_factor * r)),
        c2_violations=list(check_c2(coords, instance.graph, c2_factor * r)),
        fold_pairs=detect_folds(coords, instance, far_factor, near_factor),
        rms_error=rms,
        unpositioned_count=int((~ok).sum()),
        params={"c1_factor": c1_factor, "c2_factor": c2_factor,
                "far_factor": far_factor, "near_factor": near_factor, "frame": frame},
        aligned_coords=coords,
    )


# -- aggregation under folding --------------------------------------------------

def region_aggregate(placement, instance: NetworkInstance, region, node_values, threshold: float) -> dict:
    """Mean reading over a rectangle, selecting members by placed vs. true position.

    ``region`` is ``(xmin, ymin, xmax, ymax)``; an alarm fires when the mean
    reaches ``threshold``.  A region without members reports ``None`` means
    and sets the ``*_empty`` flag.
    """
    x0, y0, x1, y1 = region
    if not (x1 > x0 and y1 > y0):
        raise ValueError("region must be a non-empty rectangle")
    coords = _placement_coords(placement)
    if isinstance(node_values, dict):
        vals = np.array([node_values[i] for i in range(instance.n)], dtype=float)
    else:
        vals = np.asarray(node_values, dtype=float)

    def inside(p):
        with np.errstate(invalid="ignore"):
            return (p[:, 0] >= x0) & (p[:, 0] <= x1) & (p[:, 1] >= y0) & (p[:, 1] <= y1)

    out = {}
    for key, pts in (("placement", coords), ("truth", instance.positions)):
        m = inside(pts)
        mean = float(vals[m].mean()) if m.any() else None
        out[f"mean_by_{key}"] = mean
        out[f"alarm_by_{key}"] = bool(mean is not None and mean >= threshold)
        out[f"members_by_{key}"] = int(m.sum())
        out[f"{key}_empty"] = not m.any()
    return out
