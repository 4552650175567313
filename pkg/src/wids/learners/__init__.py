"""The five base classifiers plus the linear meta alternative.

Every learner trains from a labelled FeatureTable and returns per-row
probability triples over (Normal, Kr00k, Krack); classes absent from the
training data get probability zero. Training is a pure function of
(spec, table): fitted parameters are byte-for-byte reproducible.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from typing import Union

import numpy as np

from ..errors import PredictError, SpecError, TrainError
from ..table import N_CLASSES, FeatureTable

#: Meta-feature block order (learner-major) used by the stacking layer.
BASE_LEARNER_ORDER = (
    "knn",
    "random_forest",
    "gradient_boosted_trees",
    "linear_svm",
    "mlp",
)

DEFAULT_HYPERPARAMETERS = {
    "knn": {"k": 5},
    "random_forest": {
        "n_trees": 100,
        "max_depth": 16,
        "min_samples_leaf": 1,
        "bootstrap": True,
        "feature_subset": "sqrt",  # sqrt | all
    },
    "gradient_boosted_trees": {
        "n_rounds": 100,
        "max_depth": 6,
        "learning_rate": 0.1,
        "l2": 1.0,
        "min_samples_leaf": 1,
    },
    "linear_svm": {"epochs": 50, "l2": 1e-4},
    "mlp": {"hidden": 64, "epochs": 50, "batch": 128, "lr": 0.01},
    "logistic": {"epochs": 200, "lr": 0.1, "l2": 1e-4},
}


@dataclass(frozen=True)
class LearnerSpec:
    """Learner kind, hyperparameter overrides, and training seed."""

    kind: str
    hyperparameters: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in DEFAULT_HYPERPARAMETERS:
            raise SpecError(f"unknown learner kind {self.kind!r}")
        unknown = set(self.hyperparameters) - set(DEFAULT_HYPERPARAMETERS[self.kind])
        if unknown:
            raise SpecError(f"{self.kind}: unknown hyperparameters {sorted(unknown)}")

    def resolved(self) -> dict:
        return {**DEFAULT_HYPERPARAMETERS[self.kind], **self.hyperparameters}

    def with_seed(self, seed: int) -> "LearnerSpec":
        return replace(self, seed=seed)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "hyperparameters": dict(self.hyperparameters),
                "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict) -> "LearnerSpec":
        return cls(d["kind"], dict(d.get("hyperparameters", {})), int(d.get("seed", 0)))


def train_fingerprint(x: np.ndarray, y: np.ndarray) -> str:
    digest = hashlib.sha256()
    digest.update(np.ascontiguousarray(x).tobytes())
    digest.update(np.ascontiguousarray(y).tobytes())
    return digest.hexdigest()[:16]


class TrainedLearner:
    """Uniform fitted-model interface: predict_proba over the three classes."""

    kind: str

    def __init__(self, spec: LearnerSpec, n_features: int, fingerprint: str):
        self.spec = spec
        self.n_features = n_features
        self.fingerprint = fingerprint

    # -- kind-specific ------------------------------------------------------

    def _predict_proba(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def state_arrays(self) -> dict:
        raise NotImplementedError

    def state_meta(self) -> dict:
        return {}

    # -- shared -------------------------------------------------------------

    def predict_proba(self, t: Union[FeatureTable, np.ndarray]) -> np.ndarray:
        x = t.values if isinstance(t, FeatureTable) else np.asarray(t, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.n_features:
            raise PredictError(
                f"{self.kind}: expected {self.n_features} features, got shape {x.shape}"
            )
        p = self._predict_proba(x)
        return np.ascontiguousarray(p, dtype=np.float64)

    def predict(self, t) -> np.ndarray:
        """Class labels; probability ties break toward the lowest class index."""
        return np.argmax(self.predict_proba(t), axis=1)


def _training_matrix(t: FeatureTable):
    y = t.require_labels()
    t.assert_clean()
    if np.unique(y).size < 2:
        raise TrainError("training table contains a single class")
    return t.values, y


def train(spec: LearnerSpec, t: FeatureTable) -> TrainedLearner:
    """Fit one learner; deterministic for a fixed (spec, table)."""
    from . import forest, gbt, knn, linear, mlp

    x, y = _training_matrix(t)
    trainers = {
        "knn": knn.train_knn,
        "random_forest": forest.train_random_forest,
        "gradient_boosted_trees": gbt.train_gbt,
        "linear_svm": linear.train_linear_svm,
        "mlp": mlp.train_mlp,
        "logistic": linear.train_logistic,
    }
    return trainers[spec.kind](spec, x, y)


def predict_proba(learner: TrainedLearner, t: FeatureTable) -> np.ndarray:
    return learner.predict_proba(t)


def load_trained(kind: str, spec: LearnerSpec, meta: dict, arrays: dict) -> TrainedLearner:
    """Rebuild a fitted learner from its serialized state."""
    from . import forest, gbt, knn, linear, mlp

    loaders = {
        "knn": knn.KnnModel.from_state,
        "random_forest": forest.RandomForestModel.from_state,
        "gradient_boosted_trees": gbt.GbtModel.from_state,
        "linear_svm": linear.LinearSvmModel.from_state,
        "mlp": mlp.MlpModel.from_state,
        "logistic": linear.LogisticModel.from_state,
    }
    if kind not in loaders:
        raise SpecError(f"unknown learner kind {kind!r}")
    return loaders[kind](spec, meta, arrays)


def scatter_to_classes(p_present: np.ndarray, present: np.ndarray) -> np.ndarray:
    """Expand probabilities over present classes to full 3-class rows."""
    out = np.zeros((p_present.shape[0], N_CLASSES))
    out[:, present] = p_present
    return out
