"""Gradient-boosted trees with a multiclass softmax objective.

Scores start at the log class priors, one second-order regression tree per
present class per round fits the softmax gradients, and leaves carry
L2-regularized Newton weights scaled by the learning rate. Training is fully
deterministic: no subsampling anywhere.
"""

from __future__ import annotations

import numpy as np

from . import LearnerSpec, TrainedLearner, scatter_to_classes, train_fingerprint
from ._tree import grow_regression_tree, pack_forest, packed_apply, tree_apply
from .forest import _tree_arrays, _tree_from_arrays

HESS_FLOOR = 1e-16


def _softmax(scores: np.ndarray) -> np.ndarray:
    z = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


class GbtModel(TrainedLearner):
    kind = "gradient_boosted_trees"

    def __init__(self, spec, priors, trees, present, learning_rate,
                 n_features, fingerprint, train_loss_curve=None):
        super().__init__(spec, n_features, fingerprint)
        self.priors = priors  # log priors over present classes
        self.trees = trees  # trees[round][class_slot]
        self.present = present
        self.learning_rate = learning_rate
        self.train_loss_curve = train_loss_curve
        self._packed = None

    def _raw_scores(self, x: np.ndarray) -> np.ndarray:
        if self._packed is None:
            self._packed = [
                pack_forest([round_trees[slot] for round_trees in self.trees])
                for slot in range(len(self.present))
            ] if self.trees else []
        scores = np.tile(self.priors, (x.shape[0], 1))
        for slot, packed in enumerate(self._packed):
            scores[:, slot] += self.learning_rate * packed_apply(packed, x)[:, :, 0].sum(axis=1)
        return scores

    def _predict_proba(self, x: np.ndarray) -> np.ndarray:
        return scatter_to_classes(_softmax(self._raw_scores(x)), self.present)

    def state_arrays(self) -> dict:
        arrays = {"priors": self.priors, "present": self.present.astype(np.float64)}
        for r, round_trees in enumerate(self.trees):
            for slot, tree in enumerate(round_trees):
                arrays.update(_tree_arrays(f"r{r:04d}c{slot}", tree))
        return arrays

    def state_meta(self) -> dict:
        return {"n_rounds": len(self.trees), "n_slots": len(self.present),
                "learning_rate": self.learning_rate, "n_features": self.n_features,
                "fingerprint": self.fingerprint}

    @classmethod
    def from_state(cls, spec, meta, arrays):
        trees = [
            [_tree_from_arrays(f"r{r:04d}c{slot}", arrays)
             for slot in range(int(meta["n_slots"]))]
            for r in range(int(meta["n_rounds"]))
        ]
        return cls(spec, arrays["priors"], trees, arrays["present"].astype(np.int64),
                   float(meta["learning_rate"]), int(meta["n_features"]),
                   meta["fingerprint"])


def train_gbt(spec: LearnerSpec, x: np.ndarray, y: np.ndarray) -> GbtModel:
    params = spec.resolved()
    n, d = x.shape
    present = np.unique(y)
    slot_of = {c: s for s, c in enumerate(present)}
    y_slot = np.array([slot_of[c] for c in y])
    n_slots = present.size

    onehot = np.zeros((n, n_slots))
    onehot[np.arange(n), y_slot] = 1.0
    priors = np.log(onehot.mean(axis=0))
    scores = np.tile(priors, (n, 1))

    eta = float(params["learning_rate"])
    l2 = float(params["l2"])
    depth = int(params["max_depth"])
    min_leaf = int(params["min_samples_leaf"])
    all_rows = np.arange(n)

    def log_loss():
        p = _softmax(scores)
        return float(-np.log(np.maximum(p[np.arange(n), y_slot], 1e-300)).mean())

    loss_curve = [log_loss()]
    trees = []
    for _ in range(int(params["n_rounds"])):
        p = _softmax(scores)
        round_trees = []
        for slot in range(n_slots):
            g = p[:, slot] - onehot[:, slot]
            h = np.maximum(p[:, slot] * (1.0 - p[:, slot]), HESS_FLOOR)
            tree = grow_regression_tree(
                x, g, h, all_rows, max_depth=depth, l2=l2, min_samples_leaf=min_leaf
            )
            scores[:, slot] += eta * tree_apply(tree, x)
            round_trees.append(tree)
        trees.append(round_trees)
        loss_curve.append(log_loss())

    return GbtModel(spec, priors, trees, present, eta, d,
                    train_fingerprint(x, y), train_loss_curve=loss_curve)
