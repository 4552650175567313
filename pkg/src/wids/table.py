"""Core data container: a named-column numeric matrix with optional class labels."""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, replace as _dc_replace
from typing import Optional, Sequence

import numpy as np

from .errors import WidsError


class ClassLabel(enum.IntEnum):
    """Three-class traffic label."""

    NORMAL = 0
    KR00K = 1
    KRACK = 2

    @property
    def display_name(self) -> str:
        return _LABEL_NAMES[int(self)]

    @classmethod
    def from_name(cls, name: str) -> "ClassLabel":
        key = name.strip().lower()
        for value, text in _LABEL_NAMES.items():
            if text.lower() == key:
                return cls(value)
        raise WidsError(f"unknown class label {name!r}")


_LABEL_NAMES = {0: "Normal", 1: "Kr00k", 2: "Krack"}

N_CLASSES = 3


@dataclass(frozen=True)
class ColumnMeta:
    """Per-column metadata carried alongside the numeric matrix.

    kind 'categorical' columns hold integer codes; encoding_map records the
    category-text -> code assignment so apply-time data can be encoded
    identically. Codes are dense 0..V-1; the reserved code for apply-time
    categories never seen at fit time is V.
    """

    name: str
    kind: str = "numeric"  # numeric | categorical | timestamp | dropped
    missing_fraction: float = 0.0
    encoding_map: Optional[dict] = None

    def __post_init__(self):
        if self.kind not in ("numeric", "categorical", "timestamp", "dropped"):
            raise WidsError(f"bad column kind {self.kind!r}")
        if not 0.0 <= self.missing_fraction <= 1.0:
            raise WidsError(f"missing_fraction out of range: {self.missing_fraction}")
        if (self.encoding_map is not None) != (self.kind == "categorical"):
            raise WidsError(f"column {self.name!r}: encoding_map present iff categorical")
        if self.encoding_map is not None:
            codes = sorted(self.encoding_map.values())
            if codes != list(range(len(codes))):
                raise WidsError(f"column {self.name!r}: codes must be dense 0..V-1")

    @property
    def reserved_code(self) -> int:
        if self.encoding_map is None:
            raise WidsError(f"column {self.name!r} is not categorical")
        return len(self.encoding_map)


@dataclass(frozen=True)
class FeatureTable:
    """Immutable row-major float64 matrix with named columns and optional labels.

    NaN cells may exist between ingest and cleaning; every later stage
    requires a finite matrix (``assert_clean``).
    """

    columns: tuple
    values: np.ndarray
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        values = np.ascontiguousarray(np.asarray(self.values, dtype=np.float64))
        if values.ndim != 2:
            raise WidsError(f"values must be 2-D, got shape {values.shape}")
        if values.shape[1] != len(self.columns):
            raise WidsError(
                f"{len(self.columns)} column metas but {values.shape[1]} value columns"
            )
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise WidsError("duplicate column names")
        values.flags.writeable = False
        object.__setattr__(self, "columns", tuple(self.columns))
        object.__setattr__(self, "values", values)
        if self.labels is not None:
            labels = np.ascontiguousarray(np.asarray(self.labels, dtype=np.int64))
            if labels.shape != (values.shape[0],):
                raise WidsError("labels length must equal row count")
            if labels.size and not np.isin(labels, (0, 1, 2)).all():
                raise WidsError("labels must take values in {0,1,2}")
            labels.flags.writeable = False
            object.__setattr__(self, "labels", labels)

    # -- shape helpers ------------------------------------------------------

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_cols(self) -> int:
        return self.values.shape[1]

    @property
    def column_names(self) -> list:
        return [c.name for c in self.columns]

    def column_index(self, name: str) -> int:
        try:
            return self.column_names.index(name)
        except ValueError:
            raise WidsError(f"no column named {name!r}") from None

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.column_index(name)]

    def meta(self, name: str) -> ColumnMeta:
        return self.columns[self.column_index(name)]

    # -- derivation helpers (all return new tables) -------------------------

    def replace(self, **kwargs) -> "FeatureTable":
        return _dc_replace(self, **kwargs)

    def with_labels(self, labels) -> "FeatureTable":
        return self.replace(labels=labels)

    def select_rows(self, idx) -> "FeatureTable":
        idx = np.asarray(idx)
        labels = self.labels[idx] if self.labels is not None else None
        return FeatureTable(self.columns, self.values[idx], labels)

    def select_columns(self, names: Sequence[str]) -> "FeatureTable":
        idx = [self.column_index(n) for n in names]
        cols = tuple(self.columns[i] for i in idx)
        return FeatureTable(cols, self.values[:, idx], self.labels)

    def assert_clean(self) -> "FeatureTable":
        if not np.isfinite(self.values).all():
            raise WidsError("table contains NaN/Inf after cleaning")
        return self

    def class_counts(self) -> dict:
        self.require_labels()
        counts = np.bincount(self.labels, minlength=N_CLASSES)
        return {int(c): int(counts[c]) for c in range(N_CLASSES)}

    def require_labels(self) -> np.ndarray:
        if self.labels is None:
            raise WidsError("operation requires a labelled table")
        return self.labels

    # -- CSV export (RFC-4180, header row) -----------------------------------

    def to_csv(self, path, label_column: str = "label") -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            header = self.column_names + ([label_column] if self.labels is not None else [])
            writer.writerow(header)
            for i in range(self.n_rows):
                row = [repr(v) for v in self.values[i].tolist()]
                if self.labels is not None:
                    row.append(str(int(self.labels[i])))
                writer.writerow(row)


def table_from_arrays(names: Sequence[str], values, labels=None, kinds=None) -> FeatureTable:
    """Convenience constructor for numeric tables."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 1:
        values = values.reshape(-1, 1)
    kinds = kinds or ["numeric"] * len(names)
    cols = tuple(ColumnMeta(name=n, kind=k) for n, k in zip(names, kinds))
    return FeatureTable(cols, values, labels)
