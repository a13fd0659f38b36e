"""Experiment configuration: a single JSON document driving the CLI.

The schema rejects unknown keys so a config file is a complete, replayable
record of a run.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Any

import jsonschema
import numpy as np

from .models.cmp import make_cmp_model
from .models.randomwalk import Lattice, make_randomwalk_model
from .core import LossModel
from .optim import OptimizerConfig
from .calibrate import CalibrationConfig
from .space import InterestPartition, ProfileGrid

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "InterestSpec",
    "config_hash",
    "load_config",
]


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


_GRID_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["lower", "upper", "points"],
    "properties": {
        "lower": {"type": "number"},
        "upper": {"type": "number"},
        "points": {"type": "integer", "minimum": 2},
    },
}

_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["model", "true_params", "interest", "seed", "out_dir"],
    "properties": {
        "model": {"enum": ["cmp", "randomwalk"]},
        "true_params": {
            "type": "array",
            "items": {"type": "number"},
            "minItems": 2,
            "maxItems": 2,
        },
        "sample_sizes": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n": {"type": "integer", "minimum": 1},
                "m": {"type": "integer", "minimum": 1},
            },
        },
        "model_options": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "p_m": {"type": "number", "exclusiveMinimum": 0},
                "lattice_sites": {"type": "integer", "minimum": 3},
                "positions": {
                    "type": "array",
                    "items": {"type": "integer", "minimum": 1},
                    "minItems": 1,
                },
                "order": {"type": "integer", "minimum": 1},
                "variance_resamples": {"type": "integer", "minimum": 2},
                "variance_seed": {"type": "integer", "minimum": 0},
                "max_steps": {"type": "integer", "minimum": 1},
            },
        },
        "interest": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["name", "index", "grid"],
                "properties": {
                    "name": {"type": "string", "minLength": 1},
                    "index": {"type": "integer", "minimum": 0, "maximum": 1},
                    "grid": _GRID_SCHEMA,
                },
            },
        },
        "calibration": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "K": {"type": "integer", "minimum": 1},
                "alpha": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "delta_step": {"type": "number", "exclusiveMinimum": 0},
                "delta_grid_size": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0},
            },
        },
        "coverage": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "B": {"type": "integer", "minimum": 1},
                "alphas": {
                    "type": "array",
                    "minItems": 1,
                    "items": {
                        "type": "number",
                        "exclusiveMinimum": 0,
                        "exclusiveMaximum": 1,
                    },
                },
                "seed": {"type": "integer", "minimum": 0},
                "true_params": {
                    "type": "array",
                    "minItems": 1,
                    "items": {
                        "type": "array",
                        "items": {"type": "number"},
                        "minItems": 2,
                        "maxItems": 2,
                    },
                },
                "delta_star": {
                    "type": "object",
                    "additionalProperties": {"type": "number", "exclusiveMinimum": 0},
                },
            },
        },
        "optimizer": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "max_evals": {"type": "integer", "minimum": 1},
                "f_tol": {"type": "number", "exclusiveMinimum": 0},
                "x_tol": {"type": "number", "exclusiveMinimum": 0},
                "restarts": {"type": "integer", "minimum": 0},
                "initial_simplex_scale": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "seed": {"type": "integer", "minimum": 0},
        "out_dir": {"type": "string", "minLength": 1},
    },
}


@dataclass(frozen=True)
class InterestSpec:
    """One interest parameter: its label, coordinate, and profile grid."""

    name: str
    index: int
    grid: ProfileGrid

    def partition(self, dim: int) -> InterestPartition:
        nuisance = tuple(i for i in range(dim) if i != self.index)
        return InterestPartition((self.index,), nuisance)


@dataclass(frozen=True)
class ExperimentConfig:
    model_name: str
    true_params: np.ndarray
    interest: tuple[InterestSpec, ...]
    seed: int
    out_dir: str
    sample_sizes: dict[str, int] = field(default_factory=dict)
    model_options: dict[str, Any] = field(default_factory=dict)
    calibration: CalibrationConfig = CalibrationConfig()
    coverage_B: int = 200
    coverage_alphas: tuple[float, ...] = (0.05,)
    coverage_seed: int = 0
    coverage_true_params: tuple[tuple[float, ...], ...] = ()
    coverage_delta_star: dict[str, float] = field(default_factory=dict)
    optimizer: OptimizerConfig = OptimizerConfig()
    raw: dict = field(default_factory=dict, repr=False)

    def build_model(self) -> LossModel:
        opts = dict(self.model_options)
        if self.model_name == "cmp":
            if opts:
                raise ConfigError("model_options are not accepted for the cmp model")
            if "m" in self.sample_sizes:
                raise ConfigError("cmp uses sample_sizes.n, not m")
            n = self.sample_sizes.get("n")
            if n is None:
                raise ConfigError("cmp requires sample_sizes.n")
            return make_cmp_model(n=n)
        if "n" in self.sample_sizes:
            raise ConfigError("randomwalk uses sample_sizes.m, not n")
        lattice = Lattice(opts.pop("lattice_sites", 101))
        positions = opts.pop("positions", None)
        if positions is not None:
            bad = [p for p in positions if not 1 <= p <= lattice.N]
            if bad:
                raise ConfigError(f"release positions outside the lattice: {bad}")
        model = make_randomwalk_model(
            p_m=opts.pop("p_m", 1.0),
            lattice=lattice,
            positions=positions,
            m=self.sample_sizes.get("m", 1000),
            order=opts.pop("order", 2),
            variance_resamples=opts.pop("variance_resamples", 200),
            variance_seed=opts.pop("variance_seed", 0),
            max_steps=opts.pop("max_steps", 10**8),
        )
        return model

    def dataset_filename(self) -> str:
        return "counts.txt" if self.model_name == "cmp" else "lifetimes.csv"


def _validate_consistency(cfg: ExperimentConfig) -> None:
    model = cfg.build_model()  # also applies the per-model option rules
    space = model.space
    if not space.contains(cfg.true_params):
        raise ConfigError("true_params lie outside the model parameter space")
    names = [spec.name for spec in cfg.interest]
    if len(set(names)) != len(names):
        raise ConfigError("interest parameter names must be unique")
    for spec in cfg.interest:
        lo, hi = space.lower[spec.index], space.upper[spec.index]
        g = spec.grid
        if g.values[0] < lo - 1e-12 or g.values[-1] > hi + 1e-12:
            raise ConfigError(
                f"grid for {spec.name!r} exceeds the parameter bounds [{lo}, {hi}]"
            )
    for theta in cfg.coverage_true_params:
        if not space.contains(np.asarray(theta, dtype=float)):
            raise ConfigError("coverage true_params lie outside the parameter space")
    for name in cfg.coverage_delta_star:
        if name not in names:
            raise ConfigError(f"coverage.delta_star names unknown parameter {name!r}")


def parse_config(doc: dict) -> ExperimentConfig:
    """Validate a config document and resolve it into an ExperimentConfig."""
    try:
        jsonschema.validate(doc, _SCHEMA)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config field {path}: {exc.message}") from exc

    interest = tuple(
        InterestSpec(
            name=item["name"],
            index=item["index"],
            grid=ProfileGrid.regular(
                item["grid"]["lower"], item["grid"]["upper"], item["grid"]["points"]
            ),
        )
        for item in doc["interest"]
    )
    cal = doc.get("calibration", {})
    cov = doc.get("coverage", {})
    cfg = ExperimentConfig(
        model_name=doc["model"],
        true_params=np.asarray(doc["true_params"], dtype=float),
        interest=interest,
        seed=doc["seed"],
        out_dir=doc["out_dir"],
        sample_sizes=dict(doc.get("sample_sizes", {})),
        model_options=dict(doc.get("model_options", {})),
        calibration=CalibrationConfig(
            K=cal.get("K", 100),
            alpha=cal.get("alpha", 0.05),
            delta_step=cal.get("delta_step", 0.01),
            delta_grid_size=cal.get("delta_grid_size"),
            seed=cal.get("seed", 0),
        ),
        coverage_B=cov.get("B", 200),
        coverage_alphas=tuple(cov.get("alphas", [0.05])),
        coverage_seed=cov.get("seed", 0),
        coverage_true_params=tuple(
            tuple(float(v) for v in t)
            for t in cov.get("true_params", [doc["true_params"]])
        ),
        coverage_delta_star=dict(cov.get("delta_star", {})),
        optimizer=OptimizerConfig(
            max_evals=doc.get("optimizer", {}).get("max_evals"),
            f_tol=doc.get("optimizer", {}).get("f_tol", 1e-8),
            x_tol=doc.get("optimizer", {}).get("x_tol", 1e-8),
            restarts=doc.get("optimizer", {}).get("restarts", 2),
            initial_simplex_scale=doc.get("optimizer", {}).get(
                "initial_simplex_scale", 0.05
            ),
        ),
        raw=doc,
    )
    _validate_consistency(cfg)
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")
    return parse_config(doc)


def config_hash(doc: dict) -> str:
    """Stable fingerprint of a config document (order-insensitive)."""
    canon = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()
