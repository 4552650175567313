"""End-to-end orchestration: raw table -> engineered features -> sampling ->
tier-2 training; plus the stored plan that replays the same engineering on
apply-time rows.
"""

from __future__ import annotations

import numpy as np

from .config import RunConfig
from .dataset import (
    clean_missing,
    decompose_timestamps,
    encode_categoricals,
    load_csv_dir,
    merge_tables,
    synthesize_dataset,
)
from .errors import ConfigError
from .features import importance_rank_select, iqr_clip, vif_filter
from .rng import derive_seed
from .sampling import smote, stratified_split, undersample
from .stacking import StackedModel, train_pipeline1, train_pipeline2
from .table import FeatureTable
from .transform import apply_standardizer, fit_standardizer


def load_config_data(config: RunConfig, provenance=None) -> FeatureTable:
    """Materialize the configured data source (CSV parts and/or synthetic)."""
    parts = []
    for part in config.csv_parts:
        parts.append(load_csv_dir(part["path"], part.get("label"), provenance=provenance))
    if config.synth is not None:
        parts.append(synthesize_dataset(config.synth, derive_seed(config.seed, "synth-data")))
    if not parts:
        raise ConfigError("config names no data source (csv_parts or synth)")
    return parts[0] if len(parts) == 1 else merge_tables(parts)


def prepare_features(t: FeatureTable, config: RunConfig):
    """Fit-time feature engineering.

    clean -> timestamp decomposition -> categorical encoding -> IQR clipping
    -> multicollinearity filter -> importance-ranked selection (order per
    config.selection_order). Returns (table, plan, reports); the plan replays
    the exact transformations on apply-time rows, reports carries the VIF and
    importance artifacts for export.
    """
    reports = {}
    t = clean_missing(t, config.drop_threshold)
    ts_cols = [c for c in config.timestamp_columns if c in t.column_names]
    for col in ts_cols:
        t = decompose_timestamps(t, col)
    t, encoding_plan = encode_categoricals(t, config.onehot_max)
    iqr_cols = [c for c in config.iqr_columns if c in t.column_names]
    t, iqr_bounds = iqr_clip(t, iqr_cols, config.iqr_factor)

    for step in config.selection_order:
        if step == "vif":
            t, vif_report = vif_filter(t, config.vif_threshold)
            reports["vif"] = vif_report
        elif step == "importance" and t.labels is not None:
            k = min(config.importance_k, t.n_cols)
            ranking = importance_rank_select(
                t, k, seed=derive_seed(config.seed, "importance")
            )
            reports["importance"] = ranking
            t = t.select_columns(sorted(ranking.selected, key=t.column_names.index))

    plan = {
        "drop_threshold": config.drop_threshold,
        "timestamp_columns": ts_cols,
        "onehot_max": config.onehot_max,
        "encoding_plan": encoding_plan,
        "iqr_factor": config.iqr_factor,
        "iqr_bounds": iqr_bounds,
        "columns": t.column_names,
    }
    return t, plan, reports


def apply_feature_plan(t: FeatureTable, plan: dict) -> FeatureTable:
    """Replay fit-time engineering on raw apply-time rows (no refitting)."""
    t = clean_missing(t, 1.0)  # impute only; never drop columns at apply time
    for col in plan["timestamp_columns"]:
        t = decompose_timestamps(t, col)
    t, _ = encode_categoricals(t, plan["onehot_max"], plan=plan["encoding_plan"])
    iqr_cols = [c for c in plan["iqr_bounds"] if c in t.column_names]
    bounds = {c: tuple(plan["iqr_bounds"][c]) for c in iqr_cols}
    t, _ = iqr_clip(t, iqr_cols, plan["iqr_factor"], bounds=bounds)
    return t.select_columns(plan["columns"])


def rebalance_train(t_train: FeatureTable, config: RunConfig) -> FeatureTable:
    """SMOTE on the training partition only, in standardized space.

    Neighbour distances are scale-sensitive, so interpolation happens on
    z-scored rows and synthetic rows are mapped back to feature units.
    """
    counts = t_train.class_counts()
    present = {c: n for c, n in counts.items() if n > 0}
    if len(set(present.values())) <= 1:
        return t_train
    scaler = fit_standardizer(t_train)
    z = apply_standardizer(scaler, t_train)
    balanced, _ = smote(z, config.smote_k, derive_seed(config.seed, "smote"))
    synth = balanced.values[t_train.n_rows:]
    restored = synth * scaler.scale + scaler.mean
    values = np.vstack([t_train.values, restored])
    return FeatureTable(t_train.columns, values, balanced.labels)


def prepare_training_data(config: RunConfig, provenance=None):
    """Data source -> engineering -> undersample -> split -> SMOTE(train)."""
    raw = load_config_data(config, provenance=provenance)
    engineered, plan, reports = prepare_features(raw, config)
    sampled = undersample(engineered, config.per_class, derive_seed(config.seed, "undersample"))
    t_train, t_test = stratified_split(
        sampled, config.train_fraction, derive_seed(config.seed, "split")
    )
    t_train = rebalance_train(t_train, config)
    return t_train, t_test, plan, reports


def run_training(config: RunConfig, provenance=None):
    """The full tier-2 flow; returns (model-with-plan, report, reports)."""
    t_train, t_test, plan, reports = prepare_training_data(config, provenance)
    model, report = train_pipeline2(t_train, t_test, config)
    model.feature_plan = plan
    return model, report, reports


def run_baseline(config: RunConfig):
    """Tier-1 flow: per-learner independent reports, one per run seed."""
    t_train, t_test, _, _ = prepare_training_data(config)
    per_run = []
    for run in range(config.runs):
        run_config = config.with_seed(derive_seed(config.seed, "baseline-run", run))
        per_run.append(
            train_pipeline1(t_train, t_test, run_config.base_specs(), run_config)
        )
    return per_run


def predict_rows(model: StackedModel, t_raw: FeatureTable):
    """Raw rows -> engineered features -> stacked prediction."""
    from .stacking import predict

    if model.feature_plan is not None:
        t_raw = apply_feature_plan(t_raw, model.feature_plan)
    return predict(model, t_raw)
