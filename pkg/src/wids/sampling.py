"""Class rebalancing (undersampling + SMOTE) and stratified partitioning."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FoldError, SmoteError, SplitError
from .rng import rng_for
from .table import FeatureTable

_NEIGHBOR_BLOCK = 512


@dataclass(frozen=True)
class FoldPlan:
    """Per-row fold assignment; folds partition the rows and every fold's
    class mix matches the table within one row per class."""

    k: int
    assignments: np.ndarray

    def fold_rows(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == fold)

    def out_of_fold_rows(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments != fold)


def undersample(t: FeatureTable, per_class: int, seed: int) -> FeatureTable:
    """Keep at most per_class uniformly chosen rows per class (no replacement).

    Output rows are in canonical (original-index) order.
    """
    labels = t.require_labels()
    chosen = []
    for c in sorted(set(labels.tolist())):
        rows = np.flatnonzero(labels == c)
        if rows.size > per_class:
            rng = rng_for(seed, "undersample", c)
            rows = rows[rng.choice(rows.size, size=per_class, replace=False)]
        chosen.append(rows)
    return t.select_rows(np.sort(np.concatenate(chosen)))


def _neighbor_lists(x: np.ndarray, k: int) -> np.ndarray:
    """k nearest same-class neighbours per row (self excluded); distance ties
    resolve to the lower row index via stable sort."""
    m = x.shape[0]
    sq = (x ** 2).sum(axis=1)
    out = np.empty((m, k), dtype=np.int64)
    for start in range(0, m, _NEIGHBOR_BLOCK):
        block = slice(start, min(start + _NEIGHBOR_BLOCK, m))
        d2 = sq[block, None] - 2.0 * x[block] @ x.T + sq[None, :]
        d2[np.arange(block.start, block.stop) - start, np.arange(block.start, block.stop)] = np.inf
        order = np.argsort(d2, axis=1, kind="stable")
        out[block] = order[:, :k]
    return out


def smote(t: FeatureTable, k_neighbors: int = 5, seed: int = 0):
    """Oversample every minority class up to the majority count.

    Each synthetic row is x + lambda * (x_nn - x) for a random class member x,
    one of its k nearest same-class neighbours x_nn, and lambda ~ U[0,1].
    Returns (balanced table, provenance records); one record
    (class, source_row, neighbor_row, lambda) per synthetic row, with row
    numbers referring to the input table.
    """
    labels = t.require_labels()
    t.assert_clean()
    if k_neighbors < 1:
        raise SmoteError("k_neighbors must be >= 1")
    counts = {c: int((labels == c).sum()) for c in sorted(set(labels.tolist()))}
    majority = max(counts.values())
    if all(n == majority for n in counts.values()):
        return t, []

    new_rows, new_labels, records = [], [], []
    for c, n_c in counts.items():
        need = majority - n_c
        if need == 0:
            continue
        if n_c < 2:
            raise SmoteError(f"class {c} has {n_c} sample(s); SMOTE needs at least 2")
        rows = np.flatnonzero(labels == c)
        x_c = t.values[rows]
        k = min(k_neighbors, n_c - 1)
        neighbors = _neighbor_lists(x_c, k)
        rng = rng_for(seed, "smote", c)
        src = rng.integers(0, n_c, size=need)
        pick = rng.integers(0, k, size=need)
        lam = rng.random(size=need)
        nn = neighbors[src, pick]
        synth = x_c[src] + lam[:, None] * (x_c[nn] - x_c[src])
        new_rows.append(synth)
        new_labels.append(np.full(need, c, dtype=np.int64))
        records.extend(
            (int(c), int(rows[s]), int(rows[nb]), float(lv))
            for s, nb, lv in zip(src, nn, lam)
        )

    values = np.vstack([t.values] + new_rows)
    labels_out = np.concatenate([labels] + new_labels)
    return FeatureTable(t.columns, values, labels_out), records


def stratified_split(t: FeatureTable, train_fraction: float, seed: int):
    """Per-class split at train_fraction (banker's rounding); returns
    (train, test) whose union is the input and intersection empty."""
    if not 0.0 < train_fraction < 1.0:
        raise SplitError(f"train_fraction must be in (0,1), got {train_fraction}")
    labels = t.require_labels()
    train_idx, test_idx = [], []
    for c in sorted(set(labels.tolist())):
        rows = np.flatnonzero(labels == c)
        if rows.size < 2:
            raise SplitError(f"class {c} has fewer than 2 rows")
        rng = rng_for(seed, "split", c)
        shuffled = rows[rng.permutation(rows.size)]
        n_train = round(rows.size * train_fraction)
        train_idx.append(shuffled[:n_train])
        test_idx.append(shuffled[n_train:])
    train = t.select_rows(np.sort(np.concatenate(train_idx)))
    test = t.select_rows(np.sort(np.concatenate(test_idx)))
    return train, test


def stratified_kfold(t: FeatureTable, k: int, seed: int) -> FoldPlan:
    """Seeded per-class round-robin assignment into k folds."""
    if k < 2:
        raise FoldError("k must be >= 2")
    labels = t.require_labels()
    assignments = np.full(t.n_rows, -1, dtype=np.int64)
    for c in sorted(set(labels.tolist())):
        rows = np.flatnonzero(labels == c)
        if rows.size < k:
            raise FoldError(f"class {c} has {rows.size} rows, fewer than k={k}")
        rng = rng_for(seed, "kfold", c)
        shuffled = rows[rng.permutation(rows.size)]
        assignments[shuffled] = np.arange(shuffled.size) % k
    return FoldPlan(k, assignments)
