"""SVG figures: deployments, placements with their defects, cluster graphs."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.collections import LineCollection  # noqa: E402
from matplotlib.patches import PathPatch  # noqa: E402
from matplotlib.path import Path as MplPath  # noqa: E402
from scipy import sparse  # noqa: E402
from scipy.sparse.csgraph import breadth_first_order  # noqa: E402

from .netgen import CommGraph, NetworkInstance  # noqa: E402

EXTRA_EDGE_FRACTION = 0.10
FOLD_GID = "fold-pairs"
C2_GID = "c2-pairs"

_RC = {"svg.hashsalt": "locfree", "path.simplify": False, "svg.fonttype": "none"}


def thinned_edges(graph: CommGraph, seed: int, extra_fraction: float = EXTRA_EDGE_FRACTION) -> np.ndarray:
    """Spanning forest (BFS from the lowest id of each component) plus a seeded sample of other edges."""
    e = graph.edges
    if len(e) == 0:
        return e
    adj = graph.csr()
    seen = np.zeros(graph.n, dtype=bool)
    tree = []
    for root in range(graph.n):
        if seen[root]:
            continue
        order, pred = breadth_first_order(adj, root, directed=False)
        seen[order] = True
        child = order[1:]
        tree.append(np.column_stack([np.minimum(child, pred[child]), np.maximum(child, pred[child])]))
    tree = np.concatenate(tree) if tree else np.zeros((0, 2), dtype=np.int64)
    in_tree = sparse.csr_matrix((np.ones(len(tree)), (tree[:, 0], tree[:, 1])), shape=(graph.n, graph.n))
    rest = e[np.asarray(in_tree[e[:, 0], e[:, 1]]).ravel() == 0]
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(11,)))
    k = int(round(extra_fraction * len(rest)))
    extra = rest[np.sort(rng.choice(len(rest), k, replace=False))] if k else rest[:0]
    return np.concatenate([tree, extra])


def _pairs_patch(coords: np.ndarray, pairs, color: str, gid: str, width: float) -> PathPatch | None:
    pairs = [(int(p[0]), int(p[1])) for p in pairs]
    if not pairs:
        return None
    idx = np.array(pairs, dtype=np.int64)
    verts = np.stack([coords[idx[:, 0]], coords[idx[:, 1]]], axis=1).reshape(-1, 2)
    codes = np.tile([MplPath.MOVETO, MplPath.LINETO], len(pairs))
    patch = PathPatch(MplPath(verts, codes), edgecolor=color, facecolor="none", lw=width, alpha=0.5)
    patch.set_gid(gid)
    return patch


def _save(fig, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _draw_network(ax, coords, graph, anchors, seed, node_colors=None) -> None:
    ok = np.all(np.isfinite(coords), axis=1)
    e = thinned_edges(graph, seed)
    e = e[ok[e[:, 0]] & ok[e[:, 1]]]
    if len(e):
        ax.add_collection(LineCollection(coords[e], colors="0.75", linewidths=0.3, zorder=1))
    is_anchor = np.zeros(len(coords), dtype=bool)
    is_anchor[np.asarray(anchors, dtype=np.int64)] = True
    plain = ok & ~is_anchor
    c = "0.35" if node_colors is None else node_colors[plain]
    ax.scatter(coords[plain, 0], coords[plain, 1], s=2, c=c, linewidths=0, zorder=2)
    if (ok & is_anchor).any():
        ax.scatter(coords[ok & is_anchor, 0], coords[ok & is_anchor, 1], s=10, c="black",
                   marker="o", zorder=3, label="anchor")


def render_instance_svg(instance: NetworkInstance, path, title: str = "") -> None:
    """Ground-truth deployment with anchors as filled circles."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(8, 4))
        _draw_network(ax, instance.positions, instance.graph, instance.anchors, instance.seed)
        ax.set_aspect("equal")
        ax.autoscale_view()
        ax.set_title(title or f"{instance.name} (n={instance.n}, seed {instance.seed})", fontsize=9)
        _save(fig, path)


def render_placement_svg(instance: NetworkInstance, placement, report, path, title: str = "") -> dict:
    """Placed nodes over a thinned edge set, with C2 and fold pairs highlighted.

    Virtual-frame placements are drawn as aligned in ``report``.  Returns
    what was drawn, for the manifest.
    """
    coords = np.asarray(placement.coords, dtype=float)
    if report is not None and getattr(placement, "frame", "global") == "virtual" and report.aligned_coords is not None:
        coords = report.aligned_coords
    ok = np.all(np.isfinite(coords), axis=1)
    folds = [(u, v) for u, v, *_ in report.fold_pairs] if report is not None else []
    c2 = [(u, v) for u, v, _ in report.c2_violations] if report is not None else []
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(8, 4))
        if not ok.any():
            ax.text(0.5, 0.5, "warning: no positioned nodes", ha="center", va="center",
                    transform=ax.transAxes, color="red", gid="empty-warning")
            ax.set_axis_off()
            _save(fig, path)
            return {"positioned": 0, "fold_pairs": 0, "c2_pairs": 0, "empty": True}
        _draw_network(ax, coords, instance.graph, instance.anchors, instance.seed)
        for pairs, color, gid, w in ((c2, "tab:orange", C2_GID, 0.2), (folds, "red", FOLD_GID, 0.4)):
            patch = _pairs_patch(coords, pairs, color, gid, w)
            if patch is not None:
                ax.add_patch(patch)
        ax.set_aspect("equal")
        ax.autoscale_view()
        ax.set_title(f"{title}  folds={len(folds)}  C2={len(c2)}", fontsize=9)
        if getattr(placement, "frame", "global") == "global":
            inset = ax.inset_axes([0.74, 0.02, 0.25, 0.25])
            inset.scatter(instance.positions[:, 0], instance.positions[:, 1], s=0.3, c="0.4", linewidths=0)
            inset.set_aspect("equal")
            inset.set_xticks([])
            inset.set_yticks([])
            inset.set_title("ground truth", fontsize=6)
        _save(fig, path)
    return {"positioned": int(ok.sum()), "fold_pairs": len(folds), "c2_pairs": len(c2), "empty": False}


def render_cluster_graph_svg(instance: NetworkInstance, clustering, cg, path, title: str = "") -> None:
    """Nodes coloured by cluster on the true layout, cluster graph drawn over cluster centroids."""
    a = clustering.assignment
    k = max(clustering.n_clusters, 1)
    cmap = plt.get_cmap("tab20")
    colors = np.array([cmap(i % 20) for i in range(k)])
    pos = instance.positions
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(8, 4))
        _draw_network(ax, pos, instance.graph, instance.anchors, instance.seed, node_colors=colors[a])
        cen = {c: pos[a == c].mean(axis=0) for c in range(clustering.n_clusters)}
        for (p, q), attrs in sorted(cg.edges.items()):
            pts = [cen[p], cen[attrs["via"]], cen[q]] if attrs.get("via") is not None else [cen[p], cen[q]]
            pts = np.array(pts)
            ax.plot(pts[:, 0], pts[:, 1], "-", color="black", lw=1.2, zorder=4)
        for c, v in sorted(cg.vertices.items()):
            marker = "s" if v["kind"] == "intersection" else "o"
            ax.plot(*cen[c], marker=marker, ms=9, mfc=colors[c], mec="black", zorder=5)
            ax.annotate(str(c), cen[c], fontsize=7, ha="center", va="center", zorder=6)
        ax.set_aspect("equal")
        ax.autoscale_view()
        ax.set_title(title or f"cluster graph: {len(cg.vertices)} vertices, {len(cg.edges)} edges", fontsize=9)
        _save(fig, path)


def count_svg_pairs(svg_text: str, gid: str) -> int:
    """Number of line pieces in the highlighted-pairs path with id ``gid`` (0 when absent)."""
    start = svg_text.find(f'id="{gid}"')
    if start < 0:
        return 0
    seg = svg_text[start:]
    d0 = seg.find(' d="')
    d1 = seg.find('"', d0 + 4)
    return seg[d0 + 4:d1].count("M")
