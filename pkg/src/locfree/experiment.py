"""Config-driven experiment: scenario, pipelines, scores, clusters, routes, files."""
from __future__ import annotations

import csv
import io
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import plotting
from .clustergraph import ClusterParams, build_cluster_graph, build_clusters, detect_boundary
from .georouting import routing_study, sample_pairs
from .localization import run_pipeline
from .metrics import evaluate
from .netgen import (DeploymentSpec, bundled_spec_path, generate_network, load_spec,
                     measure_distances, spec_from_json)
from .schema import ConfigError, ExperimentModel, validate_file

log = logging.getLogger(__name__)

SUMMARY_COLUMNS = (
    "seed", "pipeline", "n", "anchors", "c1_violations", "c2_violations", "fold_pairs",
    "rms_error", "unpositioned", "clusters", "greedy_delivery_rate", "cluster_delivery_rate",
    "greedy_local_minima", "greedy_wrong_location",
)
CLUSTER_COLUMNS = ("seed", "clusters", "streets", "intersections", "other", "cg_vertices",
                   "cg_edges", "cg_bytes", "boundary_nodes", "strips")


@dataclass
class RunSummary:
    rows: list[dict] = field(default_factory=list)
    cluster_rows: list[dict] = field(default_factory=list)
    wall_time: dict[str, float] = field(default_factory=dict)
    files: list[dict] = field(default_factory=list)

    def row(self, pipeline: str, seed: int) -> dict:
        for r in self.rows:
            if r["pipeline"] == pipeline and r["seed"] == seed:
                return r
        raise KeyError((pipeline, seed))


def load_config(path: str | Path) -> tuple[ExperimentModel, Path]:
    """Validated config plus the directory relative paths resolve against."""
    path = Path(path)
    if not path.exists() and bundled_spec_path(path.stem if path.suffix else str(path)).exists():
        path = bundled_spec_path(path.stem if path.suffix else str(path))
    return validate_file(path, ExperimentModel), path.parent


def resolve_deployment(cfg: ExperimentModel, base: Path) -> DeploymentSpec:
    dep = cfg.deployment
    if not isinstance(dep, str):
        return spec_from_json(dep.model_dump())
    candidate = (base / dep) if not Path(dep).is_absolute() else Path(dep)
    if candidate.exists():
        return load_spec(candidate)
    if bundled_spec_path(dep).exists():
        return load_spec(bundled_spec_path(dep))
    raise ConfigError(f"deployment {dep!r} is neither a file nor a bundled scenario")


def _csv(rows: list[dict], columns) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: r.get(k, "") for k in columns})
    return buf.getvalue()


def _num(x):
    if x is None:
        return ""
    if isinstance(x, float):
        return "" if not np.isfinite(x) else f"{x:.9g}"
    return x


class _Writer:
    def __init__(self, root: Path, summary: RunSummary):
        self.root = root
        self.summary = summary

    def text(self, rel: str, text: str, kind: str) -> Path:
        p = self.root / rel
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(text, encoding="utf-8")
        self.summary.files.append({"path": rel, "kind": kind})
        return p

    def figure(self, rel: str, kind: str = "figure") -> Path:
        p = self.root / rel
        p.parent.mkdir(parents=True, exist_ok=True)
        self.summary.files.append({"path": rel, "kind": kind})
        return p


def run_experiment(cfg: ExperimentModel, base: Path = Path("."), out_dir: str | Path | None = None) -> RunSummary:
    """Run every seed end to end and write the outputs under ``out_dir``.

    Each seed writes into its own ``seed_<s>`` directory; the summary CSVs
    and the manifest are merged at the top.  Wall times go to
    ``timings.txt`` so the CSV and JSON outputs stay byte-identical between
    runs of the same config.
    """
    spec = resolve_deployment(cfg, base)
    root = Path(out_dir if out_dir is not None else base / cfg.output_dir)
    try:
        root.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {root}: {exc.strerror}") from exc
    summary = RunSummary()
    out = _Writer(root, summary)
    cp = cfg.clustering
    mp = cfg.metrics.model_dump()

    for seed in cfg.seeds:
        t0 = time.perf_counter()
        sd = f"seed_{seed}"
        inst = generate_network(spec.with_seed(seed))
        ranging = measure_distances(inst, cfg.noise_fraction, seed)
        log.info("seed %d: n=%d anchors=%d", seed, inst.n, len(inst.anchors))
        out.text(f"{sd}/instance.json", inst.dumps(), "instance")
        if cfg.plots:
            plotting.render_instance_svg(inst, out.figure(f"{sd}/ground_truth.svg"), f"ground truth, seed {seed}")

        clustering = cg = None
        if cp.enabled:
            t = time.perf_counter()
            boundary = detect_boundary(inst.graph, cp.hop_horizon, cp.percentile)
            clustering = build_clusters(inst.graph, ClusterParams(cp.ring_hops, cp.min_branch_size,
                                                                  cp.min_cluster_size))
            cg = build_cluster_graph(clustering, inst.graph, cp.variant)
            counts = clustering.counts_by_kind()
            summary.cluster_rows.append({
                "seed": seed, "clusters": clustering.n_clusters, "streets": counts["street"],
                "intersections": counts["intersection"], "other": counts["other"],
                "cg_vertices": len(cg.vertices), "cg_edges": len(cg.edges), "cg_bytes": len(cg.dumps()),
                "boundary_nodes": int(boundary.is_boundary.sum()), "strips": len(boundary.strips),
            })
            out.text(f"{sd}/clustering.json", json.dumps(clustering.to_json(), separators=(",", ":")), "clustering")
            out.text(f"{sd}/cluster_graph.json", cg.dumps(), "cluster_graph")
            out.text(f"{sd}/cluster_graph.dot", cg.to_dot(), "cluster_graph")
            if cfg.plots:
                plotting.render_cluster_graph_svg(inst, clustering, cg, out.figure(f"{sd}/cluster_graph.svg"))
            summary.wall_time[f"{sd}/clustering"] = time.perf_counter() - t

        pairs = sample_pairs(inst.n, cfg.routing.pairs, seed) if cg is not None else None
        for name in cfg.pipelines:
            t = time.perf_counter()
            placement = run_pipeline(name, inst, ranging)
            report = evaluate(placement, inst, **mp)
            run_id = f"{name}/{seed}"
            out.text(f"{sd}/{name}/placement.json", placement.dumps(), "placement")
            out.text(f"{sd}/{name}/report.json", report.to_json(), "report")
            out.text(f"{sd}/{name}/violations.csv", report.to_csv(run_id, inst), "violations")
            if cfg.plots:
                plotting.render_placement_svg(inst, placement, report, out.figure(f"{sd}/{name}/placement.svg"),
                                              f"{name}, seed {seed}")
            s = report.summary()
            row = {"seed": seed, "pipeline": name, "n": inst.n, "anchors": len(inst.anchors),
                   "c1_violations": s["c1_violations"], "c2_violations": s["c2_violations"],
                   "fold_pairs": s["fold_pairs"], "rms_error": _num(report.rms_error),
                   "unpositioned": s["unpositioned_count"]}
            if cg is not None:
                study = routing_study(placement.coords, inst.positions, inst.graph, clustering, cg,
                                      pairs, inst.comm_radius, cfg.routing.weight)
                out.text(f"{sd}/{name}/routes.jsonl", study.jsonl(), "routes")
                oc = study.outcome_counts()
                row.update(clusters=clustering.n_clusters, greedy_delivery_rate=_num(study.greedy_rate),
                           cluster_delivery_rate=_num(study.cluster_rate),
                           greedy_local_minima=oc["local_minimum"], greedy_wrong_location=oc["wrong_location"])
            summary.rows.append(row)
            summary.wall_time[f"{sd}/{name}"] = time.perf_counter() - t
            log.info("seed %d %s: folds=%d c1=%d c2=%d", seed, name, s["fold_pairs"],
                     s["c1_violations"], s["c2_violations"])
        summary.wall_time[sd] = time.perf_counter() - t0

    if cfg.pipelines:
        out.text("summary.csv", _csv(summary.rows, SUMMARY_COLUMNS), "summary")
    if cp.enabled:
        out.text("clustering.csv", _csv(summary.cluster_rows, CLUSTER_COLUMNS), "summary")
    (root / "timings.txt").write_text(
        "".join(f"{k}\t{v:.3f}\n" for k, v in summary.wall_time.items()), encoding="utf-8")
    manifest = {
        "format": "locfree.manifest/1",
        "config": cfg.model_dump(mode="json"),
        "files": sorted(summary.files, key=lambda f: f["path"]),
        "figures": sorted(f["path"] for f in summary.files if f["path"].endswith(".svg")),
    }
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return summary
