"""Statistical feature engineering: outlier clipping, correlation, VIF, RF importance."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .errors import SelectionError
from .learners import LearnerSpec, train
from .table import FeatureTable

EXACT_COLLINEARITY_TOL = 1e-12


def iqr_clip(t: FeatureTable, cols: Optional[Sequence[str]] = None,
             factor: float = 1.5, bounds: Optional[dict] = None):
    """Winsorize columns to [Q1 - factor*IQR, Q3 + factor*IQR].

    Quartiles use linear interpolation. Returns (table, bounds) where bounds
    maps column name -> (lo, hi); pass stored bounds back in to clip
    apply-time data with fit-time limits.
    """
    if factor <= 0:
        raise ValueError("factor must be positive")
    names = list(cols) if cols is not None else t.column_names
    values = t.values.copy()
    fitted = {}
    for name in names:
        j = t.column_index(name)
        if bounds is not None:
            lo, hi = bounds[name]
        else:
            q1, q3 = np.quantile(t.values[:, j], [0.25, 0.75])
            iqr = q3 - q1
            lo, hi = q1 - factor * iqr, q3 + factor * iqr
        fitted[name] = (float(lo), float(hi))
        values[:, j] = np.clip(values[:, j], lo, hi)
    return t.replace(values=values), fitted


def pearson_correlation(t: FeatureTable) -> np.ndarray:
    """Correlation matrix; constant columns contribute 0 off-diagonal."""
    x = t.values
    if x.shape[0] < 2:
        raise ValueError("need at least 2 rows")
    centered = x - x.mean(axis=0)
    std = x.std(axis=0)
    constant = std == 0
    denom = np.where(constant, 1.0, std)
    normed = centered / denom
    corr = normed.T @ normed / x.shape[0]
    corr[constant, :] = 0.0
    corr[:, constant] = 0.0
    np.fill_diagonal(corr, 1.0)
    return np.clip(corr, -1.0, 1.0)


@dataclass
class VifReport:
    """Final per-survivor VIF values plus the greedy removal sequence."""

    vif: dict  # feature name -> VIF of the surviving set
    removal_order: list  # (feature name, VIF at removal time)

    def to_dict(self) -> dict:
        return {
            "vif": {k: _json_float(v) for k, v in self.vif.items()},
            "removal_order": [(n, _json_float(v)) for n, v in self.removal_order],
        }

    def to_csv_rows(self) -> list:
        rows = [["feature", "score"]]
        rows += [[name, value] for name, value in sorted(self.vif.items())]
        return rows


def _json_float(v: float):
    return "inf" if np.isinf(v) else float(v)


def _vif_of_column(x: np.ndarray, j: int) -> float:
    """1/(1-R^2) from regressing column j on the others plus an intercept."""
    target = x[:, j]
    ss_tot = ((target - target.mean()) ** 2).sum()
    if ss_tot <= EXACT_COLLINEARITY_TOL:
        return 1.0  # constant column: explains and inflates nothing
    design = np.column_stack([np.delete(x, j, axis=1), np.ones(x.shape[0])])
    beta, _, _, _ = np.linalg.lstsq(design, target, rcond=None)
    residual = target - design @ beta
    r2 = 1.0 - (residual ** 2).sum() / ss_tot
    if r2 >= 1.0 - EXACT_COLLINEARITY_TOL:
        return np.inf
    return float(1.0 / (1.0 - r2))


def vif_filter(t: FeatureTable, threshold: float = 10.0):
    """Greedy multicollinearity elimination.

    Repeatedly removes the feature with the largest VIF above the threshold
    (ties break to the lexicographically smallest name) and recomputes until
    every survivor is at or below the threshold. Exact collinearity counts
    as infinite VIF. Returns (filtered table, VifReport).
    """
    if threshold <= 1:
        raise ValueError("threshold must be > 1")
    names = list(t.column_names)
    if len(names) < 2:
        return t, VifReport({n: 1.0 for n in names}, [])

    keep = names[:]
    removal_order = []
    while len(keep) >= 2:
        x = t.select_columns(keep).values
        vifs = np.array([_vif_of_column(x, j) for j in range(len(keep))])
        worst = vifs.max()
        if not worst > threshold:
            break
        ties = [keep[j] for j in range(len(keep)) if vifs[j] == worst]
        victim = min(ties)
        removal_order.append((victim, float(worst)))
        keep.remove(victim)

    final = t.select_columns(keep)
    x = final.values
    survivors = {
        name: (_vif_of_column(x, j) if len(keep) >= 2 else 1.0)
        for j, name in enumerate(keep)
    }
    return final, VifReport(survivors, removal_order)


@dataclass
class ImportanceRanking:
    """Normalized impurity-decrease scores and the selected top-k names."""

    scores: dict  # feature name -> score, sums to 1
    selected: list  # top-k names, best first

    def to_dict(self) -> dict:
        return {"scores": self.scores, "selected": list(self.selected)}

    def to_csv_rows(self) -> list:
        rows = [["feature", "score"]]
        order = sorted(self.scores.items(), key=lambda kv: (-kv[1], kv[0]))
        rows += [[name, score] for name, score in order]
        return rows


def importance_rank_select(
    t: FeatureTable,
    k: int,
    forest_spec: Optional[LearnerSpec] = None,
    seed: int = 0,
) -> ImportanceRanking:
    """Random-forest Gini importance ranking; ties order lexicographically."""
    if k > t.n_cols:
        raise SelectionError(f"k={k} exceeds {t.n_cols} columns")
    t.require_labels()
    spec = forest_spec or LearnerSpec("random_forest")
    model = train(replace(spec, seed=seed), t)
    raw = model.feature_importances()
    scores = {name: float(s) for name, s in zip(t.column_names, raw)}
    ranked = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
    return ImportanceRanking(scores, [name for name, _ in ranked[:k]])
