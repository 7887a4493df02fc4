"""Command line: ``locfree run | generate | plot | route``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .schema import PIPELINE_NAMES, ConfigError


def _pipelines(text: str) -> list[str]:
    names = [p.strip() for p in text.split(",") if p.strip()]
    bad = [p for p in names if p not in PIPELINE_NAMES]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown pipeline(s): {', '.join(bad)}")
    return names


def _cmd_run(args) -> int:
    from .experiment import load_config, run_experiment

    cfg, base = load_config(args.config)
    updates = {}
    if args.seed:
        updates["seeds"] = args.seed
    if args.pipelines is not None:
        updates["pipelines"] = args.pipelines
    if args.no_plots:
        updates["plots"] = False
    if updates:
        cfg = cfg.model_validate({**cfg.model_dump(), **updates})
    summary = run_experiment(cfg, base, args.out)
    for r in summary.rows:
        print(f"seed {r['seed']:>3}  {r['pipeline']:<22} folds={r['fold_pairs']:<7} "
              f"c1={r['c1_violations']:<7} c2={r['c2_violations']:<7} rms={r['rms_error']}")
    for r in summary.cluster_rows:
        print(f"seed {r['seed']:>3}  clusters={r['clusters']} cluster-graph {r['cg_vertices']} vertices, "
              f"{r['cg_bytes']} bytes")
    return 0


def _cmd_generate(args) -> int:
    from .netgen import bundled_spec_path, generate_network, load_spec

    src = Path(args.spec)
    spec = load_spec(src if src.exists() else bundled_spec_path(args.spec))
    inst = generate_network(spec.with_seed(args.seed) if args.seed is not None else spec)
    Path(args.out).write_text(inst.dumps(), encoding="utf-8")
    print(f"{inst.n} nodes, {len(inst.anchors)} anchors -> {args.out}")
    return 0


def _load_instance(path):
    from .netgen import NetworkInstance
    from .schema import load_json

    try:
        return NetworkInstance.from_json(load_json(path))
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _cmd_plot(args) -> int:
    from .localization.types import Placement
    from .metrics import evaluate
    from .plotting import render_placement_svg
    from .schema import load_json

    inst = _load_instance(args.instance)
    try:
        placement = Placement.from_json(load_json(args.placement))
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"{args.placement}: {exc}") from exc
    if placement.n != inst.n:
        raise ConfigError("placement and instance disagree on the node count")
    report = evaluate(placement, inst) if placement.positioned.any() else None
    out = args.out or str(Path(args.placement).with_suffix(".svg"))
    info = render_placement_svg(inst, placement, report, out, Path(args.placement).stem)
    print(json.dumps({"svg": out, **info}))
    return 0


def _cmd_route(args) -> int:
    from .clustergraph import build_cluster_graph, build_clusters
    from .georouting import routing_study, sample_pairs
    from .localization.types import Placement
    from .schema import load_json

    inst = _load_instance(args.instance)
    coords = inst.positions
    if args.placement:
        coords = Placement.from_json(load_json(args.placement)).coords
    clustering = build_clusters(inst.graph)
    cg = build_cluster_graph(clustering, inst.graph)
    pairs = sample_pairs(inst.n, args.pairs, args.seed if args.seed is not None else inst.seed)
    study = routing_study(coords, inst.positions, inst.graph, clustering, cg, pairs, inst.comm_radius)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "routes.jsonl").write_text(study.jsonl(), encoding="utf-8")
    print(json.dumps(study.summary(), sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="locfree", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("config", help="experiment JSON, or the name of a bundled one")
    r.add_argument("--seed", type=int, action="append", help="override seeds (repeatable)")
    r.add_argument("--out", help="output directory (default: config's output_dir)")
    r.add_argument("--pipelines", type=_pipelines, help="comma-separated subset, empty for none")
    r.add_argument("--no-plots", action="store_true")
    r.set_defaults(func=_cmd_run)

    g = sub.add_parser("generate", help="write a network instance from a deployment spec")
    g.add_argument("spec", help="deployment JSON, or a bundled name such as paper_streets")
    g.add_argument("--seed", type=int)
    g.add_argument("--out", default="instance.json")
    g.set_defaults(func=_cmd_generate)

    pl = sub.add_parser("plot", help="render a placement as SVG")
    pl.add_argument("placement")
    pl.add_argument("instance")
    pl.add_argument("--out")
    pl.set_defaults(func=_cmd_plot)

    ro = sub.add_parser("route", help="greedy vs cluster-graph routing on sampled pairs")
    ro.add_argument("instance")
    ro.add_argument("--pairs", type=int, default=200)
    ro.add_argument("--placement", help="placement JSON for greedy routing (default: ground truth)")
    ro.add_argument("--seed", type=int)
    ro.add_argument("--out")
    ro.set_defaults(func=_cmd_route)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    np.seterr(all="ignore")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
