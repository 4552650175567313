"""Fitted feature-space transforms: z-scoring, Gaussian noise, variance-thresholded PCA."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import PcaError, TransformError
from .table import ColumnMeta, FeatureTable

RANK_EPS = 1e-12


# ---------------------------------------------------------------------------
# Standardization

@dataclass(frozen=True)
class ScalerParams:
    """Per-column mean and population standard deviation (divide-by-n).

    Constant columns are flagged and always map to 0.
    """

    column_names: tuple
    mean: np.ndarray
    scale: np.ndarray
    constant: np.ndarray

    def to_arrays(self) -> dict:
        return {"mean": self.mean, "scale": self.scale,
                "constant": self.constant.astype(np.float64)}


def fit_standardizer(t: FeatureTable) -> ScalerParams:
    t.assert_clean()
    mean = t.values.mean(axis=0)
    scale = t.values.std(axis=0)  # population std
    constant = scale == 0.0
    safe = np.where(constant, 1.0, scale)
    return ScalerParams(tuple(t.column_names), mean, safe, constant)


def apply_standardizer(p: ScalerParams, t: FeatureTable) -> FeatureTable:
    if tuple(t.column_names) != p.column_names:
        raise TransformError(
            f"column mismatch: scaler fitted on {list(p.column_names)[:5]}..., "
            f"got {t.column_names[:5]}..."
        )
    z = (t.values - p.mean) / p.scale
    if p.constant.any():
        z[:, p.constant] = 0.0
    return t.replace(values=z)


# ---------------------------------------------------------------------------
# Noise injection

@dataclass(frozen=True)
class NoiseSpec:
    """Zero-mean Gaussian perturbation in standardized-feature units."""

    sigma: float = 0.05
    seed: int = 0
    apply_phase: str = "train_only"  # train_only | train_and_test

    def __post_init__(self):
        if self.sigma < 0:
            raise TransformError("sigma must be >= 0")
        if self.apply_phase not in ("train_only", "train_and_test"):
            raise TransformError(f"bad apply_phase {self.apply_phase!r}")


def _row_noise(seed: int, row_index: int, n_cols: int) -> np.ndarray:
    # Counter-keyed stream: the draw for cell (i, j) depends only on
    # (seed, i, j), so blockwise application matches one-shot application.
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, 0], dtype=np.uint64)
    counter = np.array([0, 0, 0, row_index], dtype=np.uint64)
    gen = np.random.Generator(np.random.Philox(counter=counter, key=key))
    return gen.standard_normal(n_cols)


def inject_noise(t: FeatureTable, spec: NoiseSpec, row_offset: int = 0) -> FeatureTable:
    """Add i.i.d. N(0, sigma^2) to every cell.

    ``row_offset`` shifts the per-row stream index so a block of rows gets
    the same perturbation it would in a single full-table pass.
    """
    if spec.sigma == 0.0:
        return t
    noisy = t.values.copy()
    for i in range(t.n_rows):
        noisy[i] += spec.sigma * _row_noise(spec.seed, row_offset + i, t.n_cols)
    return t.replace(values=noisy)


# ---------------------------------------------------------------------------
# PCA

@dataclass(frozen=True)
class PcaModel:
    """Principal axes of the sample covariance (divide by n-1).

    components rows are orthonormal; eigenvalues are padded with zeros to the
    full input dimension so explained-variance ratios sum to 1. Sign
    convention: the largest-magnitude entry of every component is positive.
    """

    components: np.ndarray  # (k, d)
    eigenvalues: np.ndarray  # (d,) descending
    mean: np.ndarray  # (d,) fit-time column means
    threshold: float
    column_names: tuple

    @property
    def k(self) -> int:
        return self.components.shape[0]

    @property
    def explained_ratio(self) -> np.ndarray:
        return self.eigenvalues / self.eigenvalues.sum()

    @property
    def cumulative_ratio(self) -> np.ndarray:
        return np.cumsum(self.explained_ratio)


def retained_components(eigenvalues: np.ndarray, threshold: float) -> int:
    """Smallest k whose cumulative eigenvalue share reaches the threshold."""
    total = eigenvalues.sum()
    if total <= 0:
        raise PcaError("total variance is zero")
    cum = np.cumsum(eigenvalues) / total
    return int(np.searchsorted(cum, threshold - RANK_EPS, side="left")) + 1


def _fix_signs(components: np.ndarray) -> np.ndarray:
    out = components.copy()
    for i, row in enumerate(out):
        j = int(np.argmax(np.abs(row)))
        if row[j] < 0:
            out[i] = -row
    return out


def fit_pca(t: FeatureTable, threshold: float) -> PcaModel:
    if not 0 < threshold <= 1:
        raise PcaError(f"threshold must be in (0,1], got {threshold}")
    if t.n_rows < 2:
        raise PcaError("need at least 2 rows to fit PCA")
    t.assert_clean()
    x = t.values
    mean = x.mean(axis=0)
    centered = x - mean
    # SVD route; the covariance eigendecomposition serves as the test oracle.
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    eigenvalues = np.zeros(x.shape[1])
    eigenvalues[: s.size] = s ** 2 / (x.shape[0] - 1)
    k = retained_components(eigenvalues, threshold)
    components = _fix_signs(vt[:k])
    return PcaModel(components, eigenvalues, mean, threshold, tuple(t.column_names))


def project(m: PcaModel, t: FeatureTable) -> FeatureTable:
    if tuple(t.column_names) != m.column_names:
        raise TransformError("column mismatch between PCA model and table")
    z = (t.values - m.mean) @ m.components.T
    cols = tuple(ColumnMeta(f"pc{i:02d}") for i in range(m.k))
    return FeatureTable(cols, z, t.labels)


def reconstruction_error(m: PcaModel, t: FeatureTable) -> float:
    centered = t.values - m.mean
    z = centered @ m.components.T
    return float(np.linalg.norm(centered - z @ m.components, "fro"))


def scree_rows(m: PcaModel) -> list:
    """(component index, eigenvalue, cumulative explained ratio) rows."""
    cum = m.cumulative_ratio
    return [(i + 1, float(m.eigenvalues[i]), float(cum[i]))
            for i in range(m.eigenvalues.size)]


def pca_threshold_sweep(
    t_train: FeatureTable,
    t_test: FeatureTable,
    thresholds: Sequence[float],
    evaluate_fn: Callable[[FeatureTable, FeatureTable], float],
) -> list:
    """Fit PCA per threshold and score a caller-supplied downstream model.

    Returns (threshold, retained k, accuracy) rows; k is non-decreasing in
    the threshold.
    """
    rows = []
    for threshold in thresholds:
        model = fit_pca(t_train, threshold)
        accuracy = evaluate_fn(project(model, t_train), project(model, t_test))
        rows.append((float(threshold), model.k, float(accuracy)))
    return rows


# ---------------------------------------------------------------------------
# The fitted stack of Pipeline 2 (scale -> noise -> project)

@dataclass
class TransformStack:
    scaler: ScalerParams
    noise: NoiseSpec
    pca: Optional[PcaModel]

    def apply(self, t: FeatureTable, phase: str, row_offset: int = 0) -> FeatureTable:
        if phase not in ("train", "test"):
            raise TransformError(f"bad phase {phase!r}")
        out = apply_standardizer(self.scaler, t)
        if phase == "train" or self.noise.apply_phase == "train_and_test":
            out = inject_noise(out, self.noise, row_offset)
        if self.pca is not None:
            out = project(self.pca, out)
        return out


def fit_transform_stack(
    t_train: FeatureTable,
    noise: NoiseSpec,
    pca_threshold: Optional[float],
) -> tuple:
    """Fit scaler on the training table, perturb it, fit PCA on the result.

    Returns (stack, transformed training table).
    """
    scaler = fit_standardizer(t_train)
    z = apply_standardizer(scaler, t_train)
    z = inject_noise(z, noise)
    pca = None
    if pca_threshold is not None:
        pca = fit_pca(z, pca_threshold)
        z = project(pca, z)
    return TransformStack(scaler, noise, pca), z
