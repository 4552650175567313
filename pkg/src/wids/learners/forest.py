"""Bagged random forest with per-node feature subsampling and Gini importance."""

from __future__ import annotations

import numpy as np

from ..errors import SpecError
from ..rng import rng_for
from ..table import N_CLASSES
from . import LearnerSpec, TrainedLearner, train_fingerprint
from ._tree import Tree, grow_classification_tree, pack_forest, packed_apply


class RandomForestModel(TrainedLearner):
    kind = "random_forest"

    def __init__(self, spec, trees, importances, n_features, fingerprint):
        super().__init__(spec, n_features, fingerprint)
        self.trees = trees
        self.importances = importances  # mean raw Gini decrease per feature
        self._packed = None

    def _predict_proba(self, x: np.ndarray) -> np.ndarray:
        if self._packed is None:
            self._packed = pack_forest(self.trees)
        return packed_apply(self._packed, x).mean(axis=1)

    def feature_importances(self) -> np.ndarray:
        total = self.importances.sum()
        if total <= 0:
            return np.full_like(self.importances, 1.0 / self.importances.size)
        return self.importances / total

    def state_arrays(self) -> dict:
        arrays = {"importances": self.importances}
        for i, tree in enumerate(self.trees):
            arrays.update(_tree_arrays(f"tree{i:04d}", tree))
        return arrays

    def state_meta(self) -> dict:
        return {"n_trees": len(self.trees), "n_features": self.n_features,
                "fingerprint": self.fingerprint}

    @classmethod
    def from_state(cls, spec, meta, arrays):
        trees = [_tree_from_arrays(f"tree{i:04d}", arrays)
                 for i in range(int(meta["n_trees"]))]
        return cls(spec, trees, arrays["importances"], int(meta["n_features"]),
                   meta["fingerprint"])


def _tree_arrays(prefix: str, tree: Tree) -> dict:
    return {
        f"{prefix}.feature": tree.feature.astype(np.float64),
        f"{prefix}.threshold": tree.threshold,
        f"{prefix}.left": tree.left.astype(np.float64),
        f"{prefix}.right": tree.right.astype(np.float64),
        f"{prefix}.value": tree.value,
    }


def _tree_from_arrays(prefix: str, arrays: dict) -> Tree:
    return Tree(
        arrays[f"{prefix}.feature"].astype(np.int64),
        arrays[f"{prefix}.threshold"],
        arrays[f"{prefix}.left"].astype(np.int64),
        arrays[f"{prefix}.right"].astype(np.int64),
        arrays[f"{prefix}.value"],
    )


def _subset_size(mode: str, d: int) -> int:
    if mode == "all":
        return d
    if mode == "sqrt":
        return max(1, int(np.sqrt(d)))
    raise SpecError(f"bad feature_subset {mode!r}")


def train_random_forest(spec: LearnerSpec, x: np.ndarray, y: np.ndarray) -> RandomForestModel:
    params = spec.resolved()
    n, d = x.shape
    onehot = np.zeros((n, N_CLASSES))
    onehot[np.arange(n), y] = 1.0
    n_candidates = _subset_size(params["feature_subset"], d)

    trees = []
    importance_sum = np.zeros(d)
    for i in range(int(params["n_trees"])):
        rng = rng_for(spec.seed, "rf-tree", i)
        if params["bootstrap"]:
            rows = np.sort(rng.integers(0, n, size=n))
        else:
            rows = np.arange(n)
        tree_importance = np.zeros(d)
        tree = grow_classification_tree(
            x, onehot, rows,
            max_depth=int(params["max_depth"]),
            min_samples_leaf=int(params["min_samples_leaf"]),
            n_candidate_features=n_candidates if n_candidates < d else None,
            rng=rng,
            importance_out=tree_importance,
        )
        trees.append(tree)
        importance_sum += tree_importance
    importances = importance_sum / len(trees)
    return RandomForestModel(spec, trees, importances, d, train_fingerprint(x, y))
