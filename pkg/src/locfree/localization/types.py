from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

PLACEMENT_FORMAT = "locfree.placement/1"

Frame = Literal["global", "virtual"]


@dataclass
class Placement:
    """Coordinates per node; rows of NaN mark unpositioned nodes."""

    coords: np.ndarray
    frame: Frame = "global"
    diagnostics: dict = field(default_factory=dict)

    @classmethod
    def empty(cls, n: int, frame: Frame = "global") -> "Placement":
        return cls(np.full((n, 2), np.nan), frame)

    @property
    def n(self) -> int:
        return len(self.coords)

    @property
    def positioned(self) -> np.ndarray:
        return np.all(np.isfinite(self.coords), axis=1)

    def get(self, v: int):
        if not self.positioned[v]:
            return None
        return float(self.coords[v, 0]), float(self.coords[v, 1])

    def copy(self) -> "Placement":
        return Placement(self.coords.copy(), self.frame, dict(self.diagnostics))

    def to_json(self) -> dict:
        return {
            "format": PLACEMENT_FORMAT,
            "frame": self.frame,
            "coords": [
                [float(x), float(y)] if ok else None
                for (x, y), ok in zip(self.coords, self.positioned)
            ],
        }

    @classmethod
    def from_json(cls, data: dict) -> "Placement":
        if data.get("format") != PLACEMENT_FORMAT:
            raise ValueError(f"unsupported placement format {data.get('format')!r}")
        coords = np.array(
            [c if c is not None else [np.nan, np.nan] for c in data["coords"]], dtype=float
        ).reshape(-1, 2)
        return cls(coords, data.get("frame", "global"))

    def dumps(self) -> str:
        return json.dumps(self.to_json(), separators=(",", ":"))


@dataclass
class DistanceEstimates:
    """Estimated distance from every node to every anchor.

    ``est[v, i]`` is the estimate from node ``v`` to anchor ``anchors[i]``,
    NaN when ``v`` has none.
    """

    anchors: np.ndarray
    est: np.ndarray

    def get(self, v: int, a: int) -> float | None:
        i = np.searchsorted(self.anchors, a)
        if i >= len(self.anchors) or self.anchors[i] != a:
            raise KeyError(a)
        val = self.est[v, i]
        return None if np.isnan(val) else float(val)

    def known(self) -> np.ndarray:
        return np.isfinite(self.est)


@dataclass(frozen=True)
class PipelineConfig:
    phase1: Literal["dv_hop", "sum_dist", "euclidean"] = "dv_hop"
    phase2: Literal["lateration", "min_max"] = "lateration"
    phase3: Literal["none", "iterative_lateration", "spring"] = "none"
    refinement_rounds: int = 50
    min_anchors_for_fix: int = 3
    convergence_tol: float | None = None  # None: 1e-3 * comm_radius
    spring_step: float = 0.25
    spring_decay: float = 0.995
    spring_rounds: int = 400

    def __post_init__(self):
        if self.refinement_rounds < 0:
            raise ValueError("refinement_rounds must be >= 0")
        if self.min_anchors_for_fix < 3:
            raise ValueError("min_anchors_for_fix must be >= 3")
