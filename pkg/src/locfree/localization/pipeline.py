"""The four published algorithms as compositions of interchangeable phases."""
from __future__ import annotations

from dataclasses import replace

import numpy as np

from ..netgen import NetworkInstance, RangingTable
from .afl import afl_bootstrap
from .distances import dv_hop, euclidean_propagation, sum_dist
from .positioning import lateration, min_max_box
from .refinement import iterative_lateration_refine, spring_embedder
from .types import PipelineConfig, Placement

PIPELINES: dict[str, PipelineConfig] = {
    "adhoc_positioning": PipelineConfig("euclidean", "lateration", "none"),
    "robust_positioning": PipelineConfig("dv_hop", "lateration", "iterative_lateration"),
    "nhop_multilateration": PipelineConfig("sum_dist", "min_max", "iterative_lateration"),
    "afl": PipelineConfig("dv_hop", "lateration", "spring"),  # phases 1/2 unused
}


def default_config(name: str, **overrides) -> PipelineConfig:
    if name not in PIPELINES:
        raise KeyError(f"unknown pipeline {name!r}")
    return replace(PIPELINES[name], **overrides)


def estimate_distances(instance: NetworkInstance, ranging: RangingTable, phase1: str):
    g, anchors = instance.graph, instance.anchors
    if phase1 == "dv_hop":
        return dv_hop(g, anchors, instance.anchor_positions)
    if phase1 == "sum_dist":
        return sum_dist(g, ranging, anchors)
    if phase1 == "euclidean":
        return euclidean_propagation(g, ranging, anchors)
    raise ValueError(f"unknown phase 1 {phase1!r}")


def run_phases(instance: NetworkInstance, ranging: RangingTable, config: PipelineConfig) -> Placement:
    """Run an anchor-based three-phase composition."""
    if len(instance.anchors) == 0:
        raise ValueError("anchor-based pipelines need anchors")
    est = estimate_distances(instance, ranging, config.phase1)
    if config.phase2 == "lateration":
        placement = lateration(est, instance.anchor_positions, config.min_anchors_for_fix)
    elif config.phase2 == "min_max":
        placement = min_max_box(est, instance.anchor_positions, config.min_anchors_for_fix)
    else:
        raise ValueError(f"unknown phase 2 {config.phase2!r}")
    tol = config.convergence_tol if config.convergence_tol is not None else 1e-3 * instance.comm_radius
    if config.phase3 == "iterative_lateration":
        placement = iterative_lateration_refine(
            placement, instance.graph, ranging, instance.anchors, config.refinement_rounds, tol
        )
    elif config.phase3 == "spring":
        placement = spring_embedder(
            _fill_unpositioned(placement, instance), instance.graph, ranging,
            config.spring_step, config.spring_decay, config.spring_rounds, pinned=instance.anchors,
        )
    elif config.phase3 != "none":
        raise ValueError(f"unknown phase 3 {config.phase3!r}")
    return placement


def _fill_unpositioned(placement: Placement, instance: NetworkInstance) -> Placement:
    # the spring phase needs every node placed: use the mean of placed neighbours
    out = placement.copy()
    for _ in range(instance.n):
        missing = np.flatnonzero(~out.positioned)
        if len(missing) == 0:
            break
        progress = False
        for v in missing:
            nb = instance.graph.neighbors(v)
            nb = nb[out.positioned[nb]]
            if len(nb):
                out.coords[v] = out.coords[nb].mean(axis=0)
                progress = True
        if not progress:
            out.coords[missing] = 0.0
    return out


def run_pipeline(name: str, instance: NetworkInstance, ranging: RangingTable,
                 config: PipelineConfig | None = None) -> Placement:
    config = config if config is not None else default_config(name)
    if name == "afl":
        start = afl_bootstrap(instance.graph, ranging)
        out = spring_embedder(start, instance.graph, ranging, config.spring_step,
                              config.spring_decay, config.spring_rounds, pinned=())
        out.frame = "virtual"
        return out
    if name not in PIPELINES:
        raise KeyError(f"unknown pipeline {name!r}")
    return run_phases(instance, ranging, config)
