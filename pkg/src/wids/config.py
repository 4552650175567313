"""Run configuration: one JSON-serializable record drives every experiment.

Defaults follow the reference operating point: 100k rows per class after
undersampling, 70/30 stratified split, sigma 0.05 noise, 90% PCA variance,
5 folds, 5 runs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Optional

from .dataset import SynthSpec
from .errors import ConfigError
from .learners import BASE_LEARNER_ORDER, LearnerSpec

CONFIG_VERSION = 1

DEFAULT_META_SPEC = LearnerSpec(
    "gradient_boosted_trees",
    {"n_rounds": 50, "max_depth": 3, "learning_rate": 0.1},
)


def default_learner_specs() -> dict:
    return {kind: LearnerSpec(kind) for kind in BASE_LEARNER_ORDER}


@dataclass
class RunConfig:
    # data source: directory-of-CSVs parts and/or a synthetic spec
    csv_parts: list = field(default_factory=list)  # [{"path":..., "label":...}]
    synth: Optional[SynthSpec] = None

    # feature engineering
    drop_threshold: float = 0.5
    timestamp_columns: list = field(default_factory=list)
    iqr_factor: float = 1.5
    iqr_columns: list = field(default_factory=lambda: ["radiotap.dbm_antsignal"])
    onehot_max: int = 8
    vif_threshold: float = 10.0
    importance_k: int = 10
    selection_order: list = field(default_factory=lambda: ["vif", "importance"])

    # sampling
    per_class: int = 100_000
    smote_k: int = 5
    train_fraction: float = 0.7

    # transforms
    sigma: float = 0.05
    noise_phase: str = "train_only"
    pca_threshold: float = 0.90

    # learners
    learners: dict = field(default_factory=default_learner_specs)
    meta: LearnerSpec = field(default_factory=lambda: DEFAULT_META_SPEC)
    ablation_base: str = "gradient_boosted_trees"

    # evaluation protocol
    folds: int = 5
    runs: int = 5
    seed: int = 0

    def __post_init__(self):
        missing = set(BASE_LEARNER_ORDER) - set(self.learners)
        if missing:
            raise ConfigError(f"missing learner specs for {sorted(missing)}")
        if self.noise_phase not in ("train_only", "train_and_test"):
            raise ConfigError(f"bad noise_phase {self.noise_phase!r}")
        if not 0 < self.train_fraction < 1:
            raise ConfigError("train_fraction must be in (0,1)")
        if not 0 < self.pca_threshold <= 1:
            raise ConfigError("pca_threshold must be in (0,1]")
        if self.folds < 2:
            raise ConfigError("folds must be >= 2")
        if self.runs < 1:
            raise ConfigError("runs must be >= 1")
        if self.ablation_base not in self.learners:
            raise ConfigError(f"ablation_base {self.ablation_base!r} has no learner spec")
        for step in self.selection_order:
            if step not in ("vif", "importance"):
                raise ConfigError(f"bad selection step {step!r}")

    def with_seed(self, seed: int) -> "RunConfig":
        return replace(self, seed=seed)

    def base_specs(self) -> list:
        """The five base-learner specs in meta-feature block order."""
        return [self.learners[kind] for kind in BASE_LEARNER_ORDER]

    def to_dict(self) -> dict:
        return {
            "config_version": CONFIG_VERSION,
            "csv_parts": self.csv_parts,
            "synth": self.synth.to_dict() if self.synth else None,
            "drop_threshold": self.drop_threshold,
            "timestamp_columns": list(self.timestamp_columns),
            "iqr_factor": self.iqr_factor,
            "iqr_columns": list(self.iqr_columns),
            "onehot_max": self.onehot_max,
            "vif_threshold": self.vif_threshold,
            "importance_k": self.importance_k,
            "selection_order": list(self.selection_order),
            "per_class": self.per_class,
            "smote_k": self.smote_k,
            "train_fraction": self.train_fraction,
            "sigma": self.sigma,
            "noise_phase": self.noise_phase,
            "pca_threshold": self.pca_threshold,
            "learners": {k: s.to_dict() for k, s in self.learners.items()},
            "meta": self.meta.to_dict(),
            "ablation_base": self.ablation_base,
            "folds": self.folds,
            "runs": self.runs,
            "seed": self.seed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        data = dict(data)
        version = data.pop("config_version", CONFIG_VERSION)
        if version != CONFIG_VERSION:
            raise ConfigError(f"unsupported config_version {version}")
        if data.get("synth"):
            data["synth"] = SynthSpec.from_dict(data["synth"])
        if "learners" in data:
            data["learners"] = {k: LearnerSpec.from_dict(s)
                                for k, s in data["learners"].items()}
        if "meta" in data:
            data["meta"] = LearnerSpec.from_dict(data["meta"])
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config fields {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as e:
            raise ConfigError(f"config is not valid JSON: {e}") from None

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(fh.read())
