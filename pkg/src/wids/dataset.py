"""CSV ingestion, cleaning, encoding, and synthetic dataset generation."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import CleanError, IngestError, SpecError, TimestampError
from .rng import rng_for
from .table import ClassLabel, ColumnMeta, FeatureTable

MISSING_TOKENS = {"", "na", "n/a", "nan", "null", "none", "?", "-"}

MALFORMED_ROW_TOLERANCE = 0.01

#: Sentinel used for missing numeric cells (matches the imputation rule).
MISSING_SENTINEL = -1.0


def _is_missing(text: str) -> bool:
    return text.strip().lower() in MISSING_TOKENS


def _try_float(text: str) -> Optional[float]:
    try:
        return float(text)
    except ValueError:
        return None


def _resolve_label(value, column_names):
    """Normalize the label argument of load_csv_dir.

    Returns (fixed_label or None, label_column_index or None).
    """
    if value is None:
        return None, None
    if isinstance(value, ClassLabel):
        return int(value), None
    if isinstance(value, int):
        return int(ClassLabel(value)), None
    if isinstance(value, str):
        if value.startswith("from-column"):
            _, _, name = value.partition(":")
            name = name or "label"
            lowered = [c.lower() for c in column_names]
            if name.lower() not in lowered:
                raise IngestError(f"label column {name!r} not found")
            return None, lowered.index(name.lower())
        return int(ClassLabel.from_name(value)), None
    raise IngestError(f"bad label argument {value!r}")


_LABEL_ALIASES = {
    "normal": 0, "0": 0,
    "kr00k": 1, "krook": 1, "kr00k attack": 1, "1": 1,
    "krack": 2, "krack attack": 2, "2": 2,
}


def _parse_label_cell(text: str, file: str, line: int) -> int:
    key = text.strip().lower()
    if key in _LABEL_ALIASES:
        return _LABEL_ALIASES[key]
    raise IngestError(f"{file}:{line}: unknown label value {text!r}")


def load_csv_dir(
    path,
    label=None,
    encoding_maps: Optional[dict] = None,
    provenance: Optional[list] = None,
) -> FeatureTable:
    """Merge every CSV file under ``path`` into one table.

    The merged schema is the intersection of column names across files;
    dropped columns are logged to ``provenance`` as "DROP <file> <column>
    <reason>" lines. Column types are inferred over the merged data: a column
    is numeric when every non-missing cell parses as a float, categorical
    otherwise. Categorical cells are coded by sorted category text (so the
    result does not depend on file order); pass ``encoding_maps`` to reuse
    fit-time codes instead (unseen text maps to the reserved code).
    """
    directory = Path(path)
    files = sorted(p for p in directory.glob("*.csv") if p.is_file())
    if not files:
        raise IngestError(f"no CSV files in {directory}")
    return _load_csv_files(files, label, encoding_maps, provenance)


def load_csv_file(
    path,
    label=None,
    encoding_maps: Optional[dict] = None,
    provenance: Optional[list] = None,
) -> FeatureTable:
    """Load a single CSV file (same rules as load_csv_dir)."""
    return _load_csv_files([Path(path)], label, encoding_maps, provenance)


def _load_csv_files(files, label, encoding_maps, provenance) -> FeatureTable:
    log = provenance if provenance is not None else []

    headers = {}
    for f in files:
        with open(f, newline="", encoding="utf-8-sig") as fh:
            try:
                header = next(csv.reader(fh))
            except StopIteration:
                raise IngestError(f"{f}: empty file") from None
        headers[f] = [h.strip() for h in header]

    shared = set(headers[files[0]])
    for f in files[1:]:
        shared &= set(headers[f])
    if not shared:
        raise IngestError("no column names shared across all files")
    for f in files:
        for col in headers[f]:
            if col not in shared:
                log.append(f"DROP {f.name} {col} not-shared-across-files")
    # stable merged order: first file's header order restricted to the intersection
    ordered = [c for c in headers[files[0]] if c in shared]

    fixed_label, _ = _resolve_label(label, ordered)
    label_col_name = None
    if isinstance(label, str) and label.startswith("from-column"):
        _, label_idx = _resolve_label(label, ordered)
        label_col_name = ordered[label_idx]
        ordered = [c for c in ordered if c != label_col_name]

    raw_columns = {c: [] for c in ordered}
    labels: list = []
    for f in files:
        pick = [headers[f].index(c) for c in ordered]
        label_pick = headers[f].index(label_col_name) if label_col_name else None
        n_rows = n_bad = 0
        first_bad = None
        with open(f, newline="", encoding="utf-8-sig") as fh:
            reader = csv.reader(fh)
            next(reader)
            for line_no, row in enumerate(reader, start=2):
                if not row:
                    continue
                n_rows += 1
                if len(row) != len(headers[f]):
                    n_bad += 1
                    log.append(f"SKIP {f.name}:{line_no} field-count {len(row)}")
                    first_bad = first_bad or f"{f}:{line_no}"
                    continue
                for c, j in zip(ordered, pick):
                    raw_columns[c].append(row[j])
                if label_pick is not None:
                    labels.append(_parse_label_cell(row[label_pick], f.name, line_no))
                elif fixed_label is not None:
                    labels.append(fixed_label)
        if n_rows and n_bad / n_rows > MALFORMED_ROW_TOLERANCE:
            raise IngestError(
                f"{f}: {n_bad}/{n_rows} malformed rows exceeds "
                f"{MALFORMED_ROW_TOLERANCE:.0%} tolerance (first at {first_bad})"
            )

    n = len(raw_columns[ordered[0]]) if ordered else 0
    if n == 0:
        raise IngestError("no data rows after parsing")

    values = np.empty((n, len(ordered)), dtype=np.float64)
    metas = []
    for j, name in enumerate(ordered):
        cells = raw_columns[name]
        missing = np.fromiter((_is_missing(c) for c in cells), dtype=bool, count=n)
        stored = (encoding_maps or {}).get(name)
        parsed = [None if m else _try_float(c) for c, m in zip(cells, missing)]
        numeric = all(p is not None for p, m in zip(parsed, missing) if not m)
        if stored is None and numeric and not missing.all():
            col = np.array([np.nan if m else p for p, m in zip(parsed, missing)])
            metas.append(ColumnMeta(name, "numeric", float(missing.mean())))
        else:
            if stored is not None:
                mapping = dict(stored)
            else:
                cats = sorted({c for c, m in zip(cells, missing) if not m})
                mapping = {c: i for i, c in enumerate(cats)}
            reserved = len(mapping)
            col = np.array(
                [np.nan if m else float(mapping.get(c, reserved))
                 for c, m in zip(cells, missing)]
            )
            metas.append(ColumnMeta(name, "categorical", float(missing.mean()), mapping))
        values[:, j] = col

    return FeatureTable(tuple(metas), values, np.array(labels) if labels else None)


def merge_tables(parts: Sequence[FeatureTable]) -> FeatureTable:
    """Concatenate tables on the intersection of their column names."""
    if not parts:
        raise IngestError("nothing to merge")
    shared = set(parts[0].column_names)
    for t in parts[1:]:
        shared &= set(t.column_names)
    if not shared:
        raise IngestError("no column names shared across tables")
    ordered = [c for c in parts[0].column_names if c in shared]
    aligned = [t.select_columns(ordered) for t in parts]
    values = np.vstack([t.values for t in aligned])
    if all(t.labels is not None for t in parts):
        labels = np.concatenate([t.labels for t in aligned])
    else:
        labels = None
    return FeatureTable(aligned[0].columns, values, labels)


def clean_missing(t: FeatureTable, drop_threshold: float = 0.5) -> FeatureTable:
    """Drop heavily-missing columns, then impute the rest.

    Numeric gaps become the -1 sentinel; categorical gaps become the
    column's reserved code. Idempotent: a table with no missing cells
    passes through unchanged.
    """
    if not 0.0 < drop_threshold <= 1.0:
        raise CleanError(f"drop_threshold must be in (0,1], got {drop_threshold}")
    observed = np.isnan(t.values).mean(axis=0)
    keep = [j for j in range(t.n_cols) if observed[j] <= drop_threshold]
    if not keep:
        raise CleanError("all columns exceed the missing-value drop threshold")

    values = t.values[:, keep].copy()
    metas = []
    for out_j, j in enumerate(keep):
        meta = t.columns[j]
        frac = float(observed[j])
        col = values[:, out_j]
        nan_mask = np.isnan(col)
        if nan_mask.any():
            if meta.kind == "categorical":
                col[nan_mask] = float(meta.reserved_code)
            else:
                col[nan_mask] = MISSING_SENTINEL
        if frac > 0:
            meta = ColumnMeta(meta.name, meta.kind, frac, meta.encoding_map)
        metas.append(meta)
    return FeatureTable(tuple(metas), values, t.labels)


_EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)


def _parse_timestamp_text(text: str) -> Optional[datetime]:
    """Accepted forms: ISO-8601 ('YYYY-MM-DD HH:MM:SS[.ffffff][+HH:MM]',
    'T' separator also fine) and numeric epoch seconds."""
    value = _try_float(text)
    if value is not None:
        return datetime.fromtimestamp(value, tz=timezone.utc)
    try:
        dt = datetime.fromisoformat(text.strip())
    except ValueError:
        return None
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt


def decompose_timestamps(t: FeatureTable, col: str) -> FeatureTable:
    """Replace a timestamp column with numeric hour/minute/second columns.

    Numeric columns are read as epoch seconds (UTC); categorical columns are
    decoded through their encoding map and parsed. More than 1% unparseable
    rows aborts; isolated failures get the -1 sentinel in all three fields.
    """
    j = t.column_index(col)
    meta = t.columns[j]
    raw = t.values[:, j]
    n = t.n_rows
    hms = np.full((n, 3), MISSING_SENTINEL)
    bad = 0

    if meta.kind == "categorical":
        decoded = {}
        for text, code in meta.encoding_map.items():
            dt = _parse_timestamp_text(text)
            decoded[code] = None if dt is None else (dt.hour, dt.minute, dt.second)
        for i in range(n):
            code = raw[i]
            fields = decoded.get(int(code)) if math.isfinite(code) else None
            if fields is None:
                bad += 1
            else:
                hms[i] = fields
    else:
        finite = np.isfinite(raw)
        bad = int((~finite).sum())
        secs = np.floor(raw[finite]).astype(np.int64)
        day = np.mod(secs, 86400)
        hms[finite, 0] = day // 3600
        hms[finite, 1] = (day % 3600) // 60
        hms[finite, 2] = day % 60

    if bad > MALFORMED_ROW_TOLERANCE * n:
        raise TimestampError(
            f"column {col!r}: {bad}/{n} rows failed to parse as timestamps"
        )

    metas = list(t.columns)
    new = [ColumnMeta(f"{col}.hour"), ColumnMeta(f"{col}.minute"), ColumnMeta(f"{col}.second")]
    metas[j:j + 1] = new
    values = np.concatenate([t.values[:, :j], hms, t.values[:, j + 1:]], axis=1)
    return FeatureTable(tuple(metas), values, t.labels)


def encode_categoricals(t: FeatureTable, onehot_max: int = 8, plan: Optional[dict] = None):
    """Turn categorical columns into model-ready numbers.

    Cardinality <= onehot_max expands into one indicator column per category
    (code order); higher cardinality keeps a single integer column whose codes
    are reassigned by first appearance in the table. Returns the encoded table
    plus a plan dict that replays the exact same encoding at apply time
    (unseen/reserved codes produce all-zero indicators or pass through).
    """
    t.assert_clean()
    fitted = plan is None
    plan = {} if fitted else plan
    out_cols: list = []
    out_vals: list = []
    for j, meta in enumerate(t.columns):
        col = t.values[:, j]
        if meta.kind != "categorical":
            out_cols.append(meta)
            out_vals.append(col)
            continue
        if fitted:
            mode = "onehot" if len(meta.encoding_map) <= onehot_max else "label"
            mapping = meta.encoding_map
            if mode == "label":
                mapping = _first_appearance_recode(col, meta.encoding_map)
            plan[meta.name] = {"mode": mode, "map": mapping}
        entry = plan.get(meta.name)
        if entry is None:
            out_cols.append(meta)
            out_vals.append(col)
            continue
        mapping = entry["map"]
        recode = _code_translation(meta.encoding_map, mapping)
        codes = recode[np.clip(col.astype(np.int64), 0, len(recode) - 1)]
        if entry["mode"] == "onehot":
            by_code = sorted(mapping, key=mapping.get)
            for cat in by_code:
                out_cols.append(ColumnMeta(f"{meta.name}={cat}"))
                out_vals.append((codes == mapping[cat]).astype(np.float64))
        else:
            out_cols.append(ColumnMeta(meta.name, "categorical", meta.missing_fraction, dict(mapping)))
            out_vals.append(codes.astype(np.float64))
    table = FeatureTable(tuple(out_cols), np.column_stack(out_vals), t.labels)
    return table, plan


def _first_appearance_recode(col: np.ndarray, mapping: dict) -> dict:
    """Reassign codes so categories are numbered by first appearance."""
    inverse = {code: text for text, code in mapping.items()}
    seen: dict = {}
    for code in col:
        if math.isfinite(code) and int(code) in inverse and int(code) not in seen:
            seen[int(code)] = len(seen)
    # categories absent from the data keep deterministic tail positions
    for code in sorted(inverse):
        if code not in seen:
            seen[code] = len(seen)
    return {inverse[code]: new for code, new in seen.items()}


def _code_translation(old_map: dict, new_map: dict) -> np.ndarray:
    """Vector mapping old codes -> new codes; reserved stays reserved."""
    reserved = len(new_map)
    trans = np.full(len(old_map) + 1, reserved, dtype=np.int64)
    for text, old in old_map.items():
        trans[old] = new_map.get(text, reserved)
    return trans


# ---------------------------------------------------------------------------
# Synthetic data

@dataclass(frozen=True)
class SynthSpec:
    """Three-class Gaussian-cluster generator parameters.

    Class means are fixed sign patterns of equal norm ``separation`` spread
    over all informative dimensions, so no single raw axis carries the class
    signal. ``collinear_fraction`` appends exact sums of informative column
    pairs; ``label_noise`` flips that fraction of labels to a random other
    class.
    """

    n_per_class: int = 2000
    dim: int = 20
    separation: float = 2.0
    variance: float = 1.0
    correlation: float = 0.0
    collinear_fraction: float = 0.0
    label_noise: float = 0.0

    def validate(self) -> "SynthSpec":
        if self.dim < 2:
            raise SpecError("dim must be >= 2")
        if self.n_per_class < 10:
            raise SpecError("n_per_class must be >= 10")
        if not 0 <= self.label_noise < 1:
            raise SpecError("label_noise must be in [0,1)")
        if not 0 <= self.correlation < 1:
            raise SpecError("correlation must be in [0,1)")
        if self.variance <= 0:
            raise SpecError("variance must be positive")
        if self.collinear_fraction < 0:
            raise SpecError("collinear_fraction must be >= 0")
        return self

    @property
    def n_collinear(self) -> int:
        return int(round(self.collinear_fraction * self.dim))

    def to_dict(self) -> dict:
        return {
            "n_per_class": self.n_per_class, "dim": self.dim,
            "separation": self.separation, "variance": self.variance,
            "correlation": self.correlation,
            "collinear_fraction": self.collinear_fraction,
            "label_noise": self.label_noise,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        return cls(**d).validate()


def _class_directions(dim: int) -> np.ndarray:
    """Unit-norm sign patterns, pairwise near-orthogonal: all-plus,
    alternating, and paired signs."""
    j = np.arange(dim)
    patterns = np.stack([
        np.ones(dim),
        np.where(j % 2 == 0, 1.0, -1.0),
        np.where((j // 2) % 2 == 0, 1.0, -1.0),
    ])
    return patterns / math.sqrt(dim)


def synthesize_dataset(spec: SynthSpec, seed: int) -> FeatureTable:
    """Deterministic three-class Gaussian benchmark table."""
    spec.validate()
    d, n = spec.dim, spec.n_per_class
    means = spec.separation * _class_directions(d)
    rng = rng_for(seed, "synth")

    blocks = []
    for c in range(3):
        z = rng.standard_normal((n, d))
        if spec.correlation > 0:
            shared = rng.standard_normal((n, 1))
            z = math.sqrt(1 - spec.correlation) * z + math.sqrt(spec.correlation) * shared
        blocks.append(means[c] + math.sqrt(spec.variance) * z)
    x = np.vstack(blocks)
    y = np.repeat(np.arange(3), n)

    names = [f"f{j:02d}" for j in range(d)]
    if spec.n_collinear:
        lin = np.empty((x.shape[0], spec.n_collinear))
        for i in range(spec.n_collinear):
            a, b = (2 * i) % d, (2 * i + 1) % d
            lin[:, i] = x[:, a] + x[:, b]
            names.append(f"lin{i:02d}")
        x = np.hstack([x, lin])

    if spec.label_noise > 0:
        flip = rng.random(y.size) < spec.label_noise
        y = np.where(flip, (y + rng.integers(1, 3, y.size)) % 3, y)

    perm = rng.permutation(x.shape[0])
    cols = tuple(ColumnMeta(name) for name in names)
    return FeatureTable(cols, x[perm], y[perm])


def benchmark_spec() -> SynthSpec:
    """The bundled synthetic benchmark: 3 overlapping Gaussian classes,
    20 informative + 6 collinear dims, 10% label noise, 2000 rows/class."""
    return SynthSpec(
        n_per_class=2000,
        dim=20,
        separation=2.0,
        variance=1.0,
        correlation=0.3,
        collinear_fraction=0.3,
        label_noise=0.10,
    )
