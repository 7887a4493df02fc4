"""Coordinate assignment: phase one/two/three building blocks and pipelines."""
from .afl import afl_bootstrap, reference_nodes
from .distances import dv_hop, euclidean_propagation, hop_counts, sum_dist
from .pipeline import PIPELINES, default_config, run_phases, run_pipeline
from .positioning import lateration, min_max_box
from .refinement import iterative_lateration_refine, spring_embedder
from .types import DistanceEstimates, PipelineConfig, Placement

__all__ = [
    "DistanceEstimates", "PIPELINES", "PipelineConfig", "Placement",
    "afl_bootstrap", "default_config", "dv_hop", "euclidean_propagation", "hop_counts",
    "iterative_lateration_refine", "lateration", "min_max_box", "reference_nodes",
    "run_phases", "run_pipeline", "spring_embedder", "sum_dist",
]
