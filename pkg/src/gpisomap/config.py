"""Run configuration: a JSON file plus flat command-line overrides."""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from typing import List, Optional

from .manifold import BatchParams, GridSpec

OUTPUT_ENV = "GPISOMAP_OUTPUT_DIR"
DEFAULT_OUTPUT = "gpisomap_out"


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    # batch phase
    eps: float = 1.0
    k_graph: int = 8
    d: int = 2
    k: int = 16
    l: int = 1
    ridge: float = 0.005
    min_cluster_size: int = 10
    max_clusters: int = 10
    # GP grid, ell relative to the median geodesic of each cluster
    ell_range: List[float] = field(default_factory=lambda: [0.05, 0.5])
    noise_range: List[float] = field(default_factory=lambda: [1e-4, 0.1])
    n_ell: int = 16
    n_noise: int = 8
    # streaming
    sigma_t: Optional[float] = None  # None -> calibrate on a held-out validation split
    calibration_percentile: float = 99.0
    validation_size: int = 300
    n_s: int = 1000
    window: int = 100
    # synthetic data
    seed: int = 0
    n_modes: int = 4
    n_per_mode: int = 2000
    mode_sigma: float = 2.0
    known_modes: List[int] = field(default_factory=lambda: [0, 1, 2])
    schedule: list = field(default_factory=lambda: [[[0, 1, 2], 3000], [[3], 1000]])
    # real data (CSV); labels replace synthetic modes
    input_csv: Optional[str] = None
    feature_columns: Optional[list] = None
    label_column: Optional[object] = None
    header: bool = False
    normalize: str = "mean"
    test_fraction: float = 0.5
    # paths
    data_dir: Optional[str] = None
    output_dir: Optional[str] = None
    plots: bool = True

    def batch_params(self) -> BatchParams:
        grid = GridSpec(tuple(self.ell_range), tuple(self.noise_range), self.n_ell, self.n_noise)
        return BatchParams(eps=self.eps, d=self.d, k_graph=self.k_graph, k=self.k, l=self.l, ridge=self.ridge,
                           grid=grid, min_cluster_size=self.min_cluster_size, max_clusters=self.max_clusters)

    def resolved_output(self) -> str:
        return self.output_dir or os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT

    def validate(self) -> "RunConfig":
        if self.eps <= 0:
            raise ConfigError("eps must be positive")
        if self.d < 1 or self.k_graph < 1:
            raise ConfigError("d and k_graph must be at least 1")
        if self.k < 0 or self.l < 0 or self.ridge < 0:
            raise ConfigError("k, l and ridge must be non-negative")
        if self.n_s < 1:
            raise ConfigError("n_s must be a positive integer")
        if self.window < 1:
            raise ConfigError("window must be at least 1")
        if self.n_modes < 1:
            raise ConfigError("at least one mode is required")
        if self.n_per_mode < 1:
            raise ConfigError("n_per_mode must be positive")
        if self.sigma_t is not None and self.sigma_t < 0:
            raise ConfigError("sigma_t must be non-negative")
        if not 0 < self.calibration_percentile <= 100:
            raise ConfigError("calibration_percentile must lie in (0, 100]")
        if self.normalize not in ("mean", "none"):
            raise ConfigError("normalize must be 'mean' or 'none'")
        if len(self.ell_range) != 2 or len(self.noise_range) != 2:
            raise ConfigError("ell_range and noise_range take two values")
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def load_config(path: Optional[str] = None, overrides: Optional[dict] = None) -> RunConfig:
    """Defaults, then the JSON file, then non-None ``overrides`` (flags win)."""
    values = {}
    if path:
        try:
            with open(path) as fh:
                values = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}")
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})")
        if not isinstance(values, dict):
            raise ConfigError(f"{path}: top level must be an object")
    for key, val in (overrides or {}).items():
        if val is not None:
            values[key] = val
    unknown = sorted(set(values) - set(FIELDS))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    try:
        cfg = RunConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc))
    return cfg.validate()
