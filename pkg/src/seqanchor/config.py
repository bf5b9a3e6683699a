"""Experiment configuration: a versioned JSON document validated up front."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass

from .anchor_chain import ChainConfig
from .datasets import GENERATORS
from .ensembling import TrainConfig, ae_member_count, allocate_budget
from .errors import ConfigError
from .nn_core import MlpArchitecture

SCHEMA_VERSION = 1
METHODS = ("ae", "sae")
METRICS = {"classification": ("agreement", "total_variation"), "regression": ("w2",)}
ORACLES = ("auto", "linear", "grid", "none")

DEFAULTS = {
    "schema_version": SCHEMA_VERSION,
    "dataset": {"generator": "twoclass2d", "n": 40, "noise": 1.0, "params": {}, "seed": None,
                "path": None, "task": None},
    "architecture": {"layer_sizes": [2, 2], "activation": "tanh", "task": "classification",
                     "noise_sigma": 1.0, "bias": False},
    "prior": {"std": 1.0, "layer_std": None},
    "method": "sae",
    "budget": 200,
    "chains": 1,
    "initial_epochs": 100,
    "sequential_epochs": 2,
    "train": {"batch_size": None, "learning_rate": 0.05, "sequential_learning_rate": None,
              "optimizer": "adam", "adam_betas": [0.9, 0.999], "carry_optimizer_state": False},
    "chain": {"step_sigma": 0.1, "relative": True},
    "metrics": None,
    "evaluation": {"grid_points": None, "margin": 0.2, "samples": 100},
    "oracle": {"kind": "auto", "points_per_axis": None, "samples": 1000},
    "output_dir": "runs/default",
    "seed": 0,
}


def _merge(base, override, path=""):
    out = copy.deepcopy(base)
    for key, value in override.items():
        if key not in base:
            raise ConfigError(f"unknown config key {path + key!r}")
        if isinstance(base[key], dict) and key not in ("params",):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {path + key!r} must be an object")
            out[key] = _merge(base[key], value, path + key + ".")
        else:
            out[key] = copy.deepcopy(value)
    return out


@dataclass
class ExperimentConfig:
    """Resolved experiment settings; build with :meth:`from_dict` or :func:`load_config`."""

    raw: dict
    arch: MlpArchitecture
    method: str
    budget: int
    chains: int
    initial_epochs: int
    sequential_epochs: int
    init_train: TrainConfig
    seq_train: TrainConfig | None
    chain: ChainConfig | None
    metrics: tuple[str, ...]
    output_dir: str
    seed: int

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        version = d.get("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {version}; this build reads {SCHEMA_VERSION}")
        raw = _merge(DEFAULTS, d)
        method = raw["method"]
        if method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {method!r}")
        if method == "sae":
            for key in ("chains", "sequential_epochs"):
                if raw[key] is None:
                    raise ConfigError(f"method 'sae' requires {key!r}")
        seed = _int(raw, "seed", minimum=0)
        ds = raw["dataset"]
        if ds.get("path") is None and ds.get("generator") not in GENERATORS:
            raise ConfigError(f"dataset needs a path or a generator in {GENERATORS}")
        try:
            arch = MlpArchitecture.from_dict(raw["architecture"])
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"bad architecture block: {exc}") from exc
        metrics = raw["metrics"]
        if metrics is None:
            metrics = list(METRICS[arch.task])
            raw["metrics"] = metrics
        bad = [m for m in metrics if m not in METRICS[arch.task]]
        if bad:
            raise ConfigError(f"metrics {bad} do not apply to {arch.task}; choose from {METRICS[arch.task]}")
        if raw["oracle"]["kind"] not in ORACLES:
            raise ConfigError(f"oracle.kind must be one of {ORACLES}")
        t = raw["train"]
        try:
            init_train = TrainConfig(
                epochs=_int(raw, "initial_epochs", 1),
                batch_size=t["batch_size"],
                learning_rate=float(t["learning_rate"]),
                optimizer=t["optimizer"],
                adam_betas=tuple(t["adam_betas"]),
                seed=seed,
                carry_optimizer_state=bool(t["carry_optimizer_state"]),
            )
            seq_train = chain = None
            if method == "sae":
                seq_lr = t["sequential_learning_rate"]
                seq_train = TrainConfig(
                    epochs=_int(raw, "sequential_epochs", 1),
                    batch_size=t["batch_size"],
                    learning_rate=float(seq_lr if seq_lr is not None else t["learning_rate"]),
                    optimizer=t["optimizer"],
                    adam_betas=tuple(t["adam_betas"]),
                    seed=seed,
                    carry_optimizer_state=bool(t["carry_optimizer_state"]),
                )
                chain = ChainConfig(float(raw["chain"]["step_sigma"]), seed, bool(raw["chain"]["relative"]))
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"bad training settings: {exc}") from exc
        budget = _int(raw, "budget", 1)
        cfg = cls(
            raw=raw,
            arch=arch,
            method=method,
            budget=budget,
            chains=_int(raw, "chains", 1) if method == "sae" else 1,
            initial_epochs=init_train.epochs,
            sequential_epochs=seq_train.epochs if seq_train else 0,
            init_train=init_train,
            seq_train=seq_train,
            chain=chain,
            metrics=tuple(metrics),
            output_dir=str(raw["output_dir"]),
            seed=seed,
        )
        cfg.plan()  # budget feasibility is part of validation
        return cfg

    def plan(self):
        if self.method == "sae":
            return allocate_budget(self.budget, self.chains, self.initial_epochs, self.sequential_epochs)
        return ae_member_count(self.budget, self.initial_epochs)

    def with_overrides(self, **overrides) -> "ExperimentConfig":
        raw = copy.deepcopy(self.raw)
        for key, value in overrides.items():
            if value is not None:
                raw[key] = value
        return ExperimentConfig.from_dict(raw)

    def provenance_dict(self) -> dict:
        """Resolved config minus the output location, which does not affect results."""
        d = copy.deepcopy(self.raw)
        d.pop("output_dir", None)
        return d


def _int(raw, key, minimum):
    value = raw[key]
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise ConfigError(f"{key!r} must be an integer >= {minimum}, got {value!r}")
    return value


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            d = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return ExperimentConfig.from_dict(d)
