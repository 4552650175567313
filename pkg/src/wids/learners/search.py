"""Hyperparameter search by k-fold cross-validation (grid or randomized)."""

from __future__ import annotations

import itertools
from dataclasses import replace
from typing import Optional

import numpy as np

from ..errors import SearchError
from ..metrics import evaluate
from ..rng import rng_for
from ..sampling import FoldPlan
from ..table import FeatureTable
from . import LearnerSpec, train

METRICS = ("accuracy", "macro_f1")


def _enumerate_grid(space: dict) -> list:
    """Cartesian product in the insertion order of keys and candidate lists."""
    if not space:
        raise SearchError("empty search space")
    keys = list(space)
    for key in keys:
        if not space[key]:
            raise SearchError(f"empty candidate list for {key!r}")
    return [dict(zip(keys, combo)) for combo in itertools.product(*(space[k] for k in keys))]


def cross_val_score(spec: LearnerSpec, t: FeatureTable, folds: FoldPlan, metric: str) -> float:
    scores = []
    for fold in range(folds.k):
        model = train(spec, t.select_rows(folds.out_of_fold_rows(fold)))
        held = t.select_rows(folds.fold_rows(fold))
        report = evaluate(held.labels, model.predict(held))
        scores.append(report.scalar(metric))
    return float(np.mean(scores))


def hyper_search(
    base_spec: LearnerSpec,
    space: dict,
    mode: str,
    t: FeatureTable,
    folds: FoldPlan,
    metric: str = "accuracy",
    seed: int = 0,
    n_draws: Optional[int] = None,
) -> LearnerSpec:
    """Pick the candidate with the best mean CV metric.

    Ties keep the earliest candidate in deterministic enumeration order;
    randomized mode draws n_draws grid points without replacement.
    """
    if metric not in METRICS:
        raise SearchError(f"metric must be one of {METRICS}, got {metric!r}")
    candidates = _enumerate_grid(space)
    if mode == "randomized":
        if not n_draws or n_draws < 1:
            raise SearchError("randomized mode needs n_draws >= 1")
        rng = rng_for(seed, "hyper-search")
        order = rng.permutation(len(candidates))[: min(n_draws, len(candidates))]
        candidates = [candidates[i] for i in sorted(order.tolist())]
    elif mode != "grid":
        raise SearchError(f"mode must be 'grid' or 'randomized', got {mode!r}")

    best_spec = None
    best_score = -np.inf
    for overrides in candidates:
        spec = replace(base_spec, hyperparameters={**base_spec.hyperparameters, **overrides})
        score = cross_val_score(spec, t, folds, metric)
        if score > best_score:
            best_score = score
            best_spec = spec
    return best_spec
