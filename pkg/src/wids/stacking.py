"""Pipeline orchestration: independent baselines (tier 1) and the
out-of-fold stacked ensemble with a boosted meta-classifier (tier 2)."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .config import RunConfig
from .errors import PredictError
from .learners import BASE_LEARNER_ORDER, LearnerSpec, TrainedLearner, train
from .metrics import EvalReport, aggregate_folds, evaluate
from .rng import derive_seed
from .sampling import FoldPlan, stratified_kfold
from .table import N_CLASSES, ColumnMeta, FeatureTable
from .transform import (
    NoiseSpec,
    TransformStack,
    fit_transform_stack,
    pca_threshold_sweep,
)

META_FEATURE_WIDTH = len(BASE_LEARNER_ORDER) * N_CLASSES

#: Meta-feature column names, learner-major: knn.p0..mlp.p2.
META_COLUMNS = tuple(
    f"{kind}.p{c}" for kind in BASE_LEARNER_ORDER for c in range(N_CLASSES)
)

ABLATION_STAGES = ("base_only", "with_noise", "with_noise_pca", "full_ensemble")


def meta_table(matrix: np.ndarray, labels=None) -> FeatureTable:
    cols = tuple(ColumnMeta(name) for name in META_COLUMNS)
    return FeatureTable(cols, matrix, labels)


def stack_probabilities(probs_by_learner: dict) -> np.ndarray:
    """Concatenate per-learner probability blocks in the canonical order."""
    return np.hstack([probs_by_learner[kind] for kind in BASE_LEARNER_ORDER])


@dataclass
class OofResult:
    """Out-of-fold meta-features plus the full-data refits of every learner."""

    matrix: np.ndarray  # (n_rows, 15)
    learners: dict  # kind -> TrainedLearner refit on all rows
    fold_fingerprints: list  # per fold: {kind: training-set fingerprint}
    folds: FoldPlan


def build_oof_meta_features(
    t: FeatureTable, specs: Sequence[LearnerSpec], folds: FoldPlan
) -> OofResult:
    """Leakage-free meta-feature construction.

    Fold f rows are filled only by models trained on the other folds; each
    learner is then refit on the whole table for inference-time use.
    """
    t.require_labels()
    matrix = np.full((t.n_rows, META_FEATURE_WIDTH), np.nan)
    fold_fingerprints = []
    for fold in range(folds.k):
        train_rows = folds.out_of_fold_rows(fold)
        fill_rows = folds.fold_rows(fold)
        t_fit = t.select_rows(train_rows)
        t_fill = t.select_rows(fill_rows)
        prints = {}
        for block, spec in enumerate(specs):
            fold_spec = spec.with_seed(derive_seed(spec.seed, "oof-fold", fold))
            model = train(fold_spec, t_fit)
            prints[spec.kind] = model.fingerprint
            matrix[fill_rows, block * N_CLASSES:(block + 1) * N_CLASSES] = (
                model.predict_proba(t_fill)
            )
        fold_fingerprints.append(prints)
    assert not np.isnan(matrix).any(), "folds must cover every row"

    refit = {spec.kind: train(spec, t) for spec in specs}
    return OofResult(matrix, refit, fold_fingerprints, folds)


@dataclass
class StackedModel:
    """Everything needed to classify raw feature rows end to end."""

    stack: TransformStack
    base_learners: dict  # kind -> TrainedLearner
    meta: TrainedLearner
    config: RunConfig
    feature_plan: Optional[dict] = None
    fold_fingerprints: list = field(default_factory=list)

    def base_probabilities(self, z: FeatureTable) -> dict:
        return {kind: self.base_learners[kind].predict_proba(z)
                for kind in BASE_LEARNER_ORDER}


def predict(model: StackedModel, t: FeatureTable):
    """(label, probability-triple) per row for post-engineering feature rows."""
    if tuple(t.column_names) != model.stack.scaler.column_names:
        raise PredictError(
            "input schema does not match the model's training schema"
        )
    z = model.stack.apply(t, "test")
    meta_in = meta_table(stack_probabilities(model.base_probabilities(z)))
    probs = model.meta.predict_proba(meta_in)
    return np.argmax(probs, axis=1), probs


def _derived_spec(spec: LearnerSpec, config_seed: int, *tags) -> LearnerSpec:
    return spec.with_seed(derive_seed(config_seed, *tags, spec.seed))


def train_pipeline1(
    t_train: FeatureTable,
    t_test: FeatureTable,
    specs: Sequence[LearnerSpec],
    config: RunConfig,
) -> dict:
    """Tier 1: standardize, then train and evaluate each learner on its own."""
    stack, z_train = fit_transform_stack(t_train, NoiseSpec(0.0, 0), None)
    z_test = stack.apply(t_test, "test")
    reports = {}
    for spec in specs:
        model = train(_derived_spec(spec, config.seed, "pipeline1"), z_train)
        probs = model.predict_proba(z_test)
        reports[spec.kind] = evaluate(t_test.labels, np.argmax(probs, axis=1), probs)
    return reports


def train_pipeline2(
    t_train: FeatureTable, t_test: FeatureTable, config: RunConfig
):
    """Tier 2: scale -> perturb -> project -> OOF stack -> boosted meta.

    Returns (StackedModel, end-to-end EvalReport on the test partition).
    """
    noise = NoiseSpec(config.sigma, derive_seed(config.seed, "noise"), config.noise_phase)
    stack, z_train = fit_transform_stack(t_train, noise, config.pca_threshold)
    folds = stratified_kfold(z_train, config.folds, derive_seed(config.seed, "folds"))
    specs = [
        _derived_spec(config.learners[kind], config.seed, "base", kind)
        for kind in BASE_LEARNER_ORDER
    ]
    oof = build_oof_meta_features(z_train, specs, folds)

    meta_spec = _derived_spec(config.meta, config.seed, "meta")
    meta_model = train(meta_spec, meta_table(oof.matrix, z_train.labels))

    model = StackedModel(
        stack=stack,
        base_learners=oof.learners,
        meta=meta_model,
        config=config,
        fold_fingerprints=oof.fold_fingerprints,
    )
    preds, probs = predict(model, t_test)
    return model, evaluate(t_test.labels, preds, probs)


def _single_learner_report(
    t_train: FeatureTable,
    t_test: FeatureTable,
    spec: LearnerSpec,
    sigma: float,
    noise_seed: int,
    pca_threshold: Optional[float],
    noise_phase: str = "train_only",
) -> EvalReport:
    stack, z_train = fit_transform_stack(
        t_train, NoiseSpec(sigma, noise_seed, noise_phase), pca_threshold
    )
    z_test = stack.apply(t_test, "test")
    model = train(spec, z_train)
    probs = model.predict_proba(z_test)
    return evaluate(t_test.labels, np.argmax(probs, axis=1), probs)


def run_ablation(t_train: FeatureTable, t_test: FeatureTable, config: RunConfig) -> list:
    """Four progressively enhanced configurations, averaged over config.runs.

    Stages: best single learner on standardized features; plus noise
    injection; plus PCA; the full stacked ensemble. Returns
    [(stage name, aggregated EvalReport), ...].
    """
    per_stage = {stage: [] for stage in ABLATION_STAGES}
    for run in range(config.runs):
        run_seed = derive_seed(config.seed, "ablation-run", run)
        run_config = config.with_seed(run_seed)
        base = _derived_spec(
            config.learners[config.ablation_base], run_seed, "ablation-base"
        )
        noise_seed = derive_seed(run_seed, "noise")
        per_stage["base_only"].append(
            _single_learner_report(t_train, t_test, base, 0.0, noise_seed, None)
        )
        per_stage["with_noise"].append(
            _single_learner_report(t_train, t_test, base, config.sigma, noise_seed, None)
        )
        per_stage["with_noise_pca"].append(
            _single_learner_report(
                t_train, t_test, base, config.sigma, noise_seed, config.pca_threshold
            )
        )
        _, full_report = train_pipeline2(t_train, t_test, run_config)
        per_stage["full_ensemble"].append(full_report)

    rows = []
    for stage in ABLATION_STAGES:
        reports = per_stage[stage]
        merged = aggregate_folds(reports) if len(reports) >= 2 else reports[0]
        rows.append((stage, merged))
    return rows


def reference_accuracy_fn(config: RunConfig):
    """Downstream scorer for the PCA sweep: the ablation-base learner's
    held-out accuracy on already-projected tables."""
    spec = _derived_spec(config.learners[config.ablation_base], config.seed, "sweep")

    def evaluate_fn(z_train: FeatureTable, z_test: FeatureTable) -> float:
        model = train(spec, z_train)
        return evaluate(z_test.labels, model.predict(z_test)).accuracy

    return evaluate_fn


def pca_sweep(
    t_train: FeatureTable,
    t_test: FeatureTable,
    config: RunConfig,
    thresholds: Sequence[float],
) -> list:
    """(threshold, retained components, downstream accuracy) rows."""
    noise = NoiseSpec(config.sigma, derive_seed(config.seed, "noise"), config.noise_phase)
    stack, z_train = fit_transform_stack(t_train, noise, None)
    z_test = stack.apply(t_test, "test")
    return pca_threshold_sweep(z_train, z_test, thresholds, reference_accuracy_fn(config))


def noise_sweep(
    t_train: FeatureTable,
    t_test: FeatureTable,
    config: RunConfig,
    sigmas: Sequence[float],
) -> list:
    """Full tier-2 ensemble per noise level; rows of
    (sigma, accuracy, macro_f1, macro_fpr)."""
    rows = []
    for sigma in sigmas:
        _, report = train_pipeline2(t_train, t_test, replace(config, sigma=float(sigma)))
        rows.append((float(sigma), report.accuracy, report.macro_f1, report.macro_fpr))
    return rows
