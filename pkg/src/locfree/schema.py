"""File schemas for deployment specs and experiment configs."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

PIPELINE_NAMES = ("adhoc_positioning", "robust_positioning", "nhop_multilateration", "afl")


class ConfigError(ValueError):
    """A config or spec file could not be parsed or failed validation."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SegmentModel(_Strict):
    polyline: list[tuple[float, float]] = Field(min_length=2)
    width: float = Field(gt=0)
    node_density: float = Field(ge=0)


class AnchorRegionModel(_Strict):
    rect: tuple[float, float, float, float]
    anchor_count: int = Field(ge=0)

    @field_validator("rect")
    @classmethod
    def _ordered(cls, v):
        if v[2] < v[0] or v[3] < v[1]:
            raise ValueError("rect must be [xmin, ymin, xmax, ymax]")
        return v


class DeploymentModel(_Strict):
    format: Literal["locfree.deployment/1"]
    name: str = ""
    comm_radius: float = Field(gt=0)
    seed: int = Field(default=0, ge=0, lt=2**64)
    segments: list[SegmentModel] = Field(min_length=1)
    anchor_regions: list[AnchorRegionModel] = []
    note: str = ""


class MetricsParams(_Strict):
    c1_factor: float = Field(default=1.0, gt=0)
    c2_factor: float = Field(default=1.0, gt=0)
    far_factor: float = Field(default=5.0, gt=0)
    near_factor: float = Field(default=1.0, gt=0)

    @model_validator(mode="after")
    def _fold_order(self):
        if not self.far_factor > self.near_factor:
            raise ValueError("far_factor must exceed near_factor")
        return self


class ClusteringParams(_Strict):
    enabled: bool = True
    hop_horizon: int = Field(default=2, ge=1)
    percentile: float = Field(default=0.6, gt=0, lt=1)
    ring_hops: int = Field(default=3, ge=2)
    min_branch_size: int = Field(default=3, ge=1)
    min_cluster_size: int = Field(default=5, ge=1)
    variant: Literal["cluster_per_vertex", "street_as_edge"] = "cluster_per_vertex"


class RoutingParams(_Strict):
    pairs: int = Field(default=200, ge=0)
    weight: Literal["hops", "energy", "bandwidth_bottleneck"] = "hops"


class ExperimentModel(_Strict):
    format: Literal["locfree.experiment/1"]
    deployment: Union[str, DeploymentModel]
    noise_fraction: float = Field(default=0.01, ge=0)
    pipelines: list[Literal[PIPELINE_NAMES]] = list(PIPELINE_NAMES)
    seeds: list[int] = Field(default=[1], min_length=1)
    metrics: MetricsParams = MetricsParams()
    clustering: ClusteringParams = ClusteringParams()
    routing: RoutingParams = RoutingParams()
    output_dir: str = "out"
    plots: bool = True

    @model_validator(mode="after")
    def _something_to_do(self):
        if not self.pipelines and not self.clustering.enabled:
            raise ValueError("enable at least one pipeline or clustering")
        return self


def load_json(path: str | Path) -> dict:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc


def _locate(text: str, loc: tuple) -> int | None:
    """Best-effort line number of the first key in ``loc`` found in ``text``."""
    for key in reversed(loc):
        if isinstance(key, str):
            needle = f'"{key}"'
            for lineno, line in enumerate(text.splitlines(), 1):
                if needle in line:
                    return lineno
    return None


def validate_file(path: str | Path, model: type[BaseModel]) -> BaseModel:
    path = Path(path)
    data = load_json(path)
    try:
        return model.model_validate(data)
    except ValidationError as exc:
        text = path.read_text(encoding="utf-8")
        msgs = []
        for err in exc.errors():
            where = ".".join(str(p) for p in err["loc"]) or "<root>"
            line = _locate(text, err["loc"])
            prefix = f"{path}:{line}" if line else str(path)
            msgs.append(f"{prefix}: {where}: {err['msg']}")
        raise ConfigError("\n".join(msgs)) from exc
