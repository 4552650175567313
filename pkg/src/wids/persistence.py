"""Deterministic binary bundles for models and table caches.

Layout: magic ``WIDS`` | format version u32 LE | manifest length u64 LE |
manifest JSON (UTF-8, sorted keys) | concatenated little-endian float64
sections | CRC-32 of all prior bytes (u32 LE). The manifest's section
directory maps each array name to its offset (relative to the sections
area), byte length, and shape. Writes go to a temp file renamed into place,
so a bundle is either complete or absent.
"""

from __future__ import annotations

import json
import os
import struct
import zlib
from typing import Optional

import numpy as np

from .config import RunConfig
from .errors import CorruptBundle, VersionError
from .learners import LearnerSpec, load_trained
from .stacking import StackedModel
from .table import ColumnMeta, FeatureTable
from .transform import NoiseSpec, PcaModel, ScalerParams, TransformStack

MAGIC = b"WIDS"
FORMAT_MAJOR = 1
FORMAT_MINOR = 0
_HEADER = struct.Struct("<4sIQ")


def _format_version() -> int:
    return (FORMAT_MAJOR << 16) | FORMAT_MINOR


def _write_bundle(path, manifest: dict, arrays: dict) -> None:
    names = sorted(arrays)
    sections = {}
    offset = 0
    blobs = []
    for name in names:
        arr = np.ascontiguousarray(arrays[name], dtype="<f8")
        blob = arr.tobytes()
        sections[name] = {"offset": offset, "nbytes": len(blob),
                          "shape": list(arr.shape)}
        offset += len(blob)
        blobs.append(blob)
    manifest = dict(manifest)
    manifest["sections"] = sections
    encoded = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")

    payload = bytearray()
    payload += _HEADER.pack(MAGIC, _format_version(), len(encoded))
    payload += encoded
    for blob in blobs:
        payload += blob
    payload += struct.pack("<I", zlib.crc32(bytes(payload)) & 0xFFFFFFFF)

    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(payload)
    os.replace(tmp, path)


def _read_bundle(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size + 4:
        raise CorruptBundle(f"{path}: file too small to be a bundle")
    magic, version, manifest_len = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise CorruptBundle(f"{path}: bad magic {magic!r}")
    major = version >> 16
    if major != FORMAT_MAJOR:
        raise VersionError(f"{path}: unsupported format major {major}")
    stored_crc = struct.unpack_from("<I", raw, len(raw) - 4)[0]
    if zlib.crc32(raw[:-4]) & 0xFFFFFFFF != stored_crc:
        raise CorruptBundle(f"{path}: checksum mismatch")
    body = raw[_HEADER.size:len(raw) - 4]
    if manifest_len > len(body):
        raise CorruptBundle(f"{path}: manifest length exceeds file size")
    try:
        manifest = json.loads(body[:manifest_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CorruptBundle(f"{path}: manifest unreadable: {e}") from None

    section_bytes = body[manifest_len:]
    arrays = {}
    for name, entry in manifest.get("sections", {}).items():
        start, nbytes = entry["offset"], entry["nbytes"]
        if start + nbytes > len(section_bytes):
            raise CorruptBundle(f"{path}: section {name} out of range")
        flat = np.frombuffer(section_bytes, dtype="<f8",
                             count=nbytes // 8, offset=start)
        arrays[name] = flat.reshape(entry["shape"]).copy()
    return manifest, arrays


# ---------------------------------------------------------------------------
# Model bundles

def save_model(model: StackedModel, path) -> None:
    arrays = {}
    arrays["scaler.mean"] = model.stack.scaler.mean
    arrays["scaler.scale"] = model.stack.scaler.scale
    arrays["scaler.constant"] = model.stack.scaler.constant.astype(np.float64)
    pca = model.stack.pca
    if pca is not None:
        arrays["pca.components"] = pca.components
        arrays["pca.eigenvalues"] = pca.eigenvalues
        arrays["pca.mean"] = pca.mean

    learner_meta = {}
    for kind, learner in model.base_learners.items():
        for name, arr in learner.state_arrays().items():
            arrays[f"base.{kind}.{name}"] = arr
        learner_meta[kind] = {"spec": learner.spec.to_dict(), "meta": learner.state_meta()}
    for name, arr in model.meta.state_arrays().items():
        arrays[f"meta.{name}"] = arr

    manifest = {
        "bundle_kind": "model",
        "config": model.config.to_dict(),
        "feature_plan": model.feature_plan,
        "fold_fingerprints": model.fold_fingerprints,
        "scaler_columns": list(model.stack.scaler.column_names),
        "noise": {
            "sigma": model.stack.noise.sigma,
            "seed": model.stack.noise.seed,
            "apply_phase": model.stack.noise.apply_phase,
        },
        "pca": None if pca is None else {
            "threshold": pca.threshold,
            "columns": list(pca.column_names),
        },
        "base_learners": learner_meta,
        "meta_learner": {"spec": model.meta.spec.to_dict(),
                         "meta": model.meta.state_meta()},
    }
    _write_bundle(path, manifest, arrays)


def _subset(arrays: dict, prefix: str) -> dict:
    plen = len(prefix)
    return {name[plen:]: arr for name, arr in arrays.items() if name.startswith(prefix)}


def load_model(path) -> StackedModel:
    manifest, arrays = _read_bundle(path)
    if manifest.get("bundle_kind") != "model":
        raise CorruptBundle(f"{path}: not a model bundle")

    scaler = ScalerParams(
        tuple(manifest["scaler_columns"]),
        arrays["scaler.mean"],
        arrays["scaler.scale"],
        arrays["scaler.constant"].astype(bool),
    )
    noise = NoiseSpec(**manifest["noise"])
    pca = None
    if manifest["pca"] is not None:
        pca = PcaModel(
            components=arrays["pca.components"],
            eigenvalues=arrays["pca.eigenvalues"],
            mean=arrays["pca.mean"],
            threshold=manifest["pca"]["threshold"],
            column_names=tuple(manifest["pca"]["columns"]),
        )

    base = {}
    for kind, entry in manifest["base_learners"].items():
        spec = LearnerSpec.from_dict(entry["spec"])
        base[kind] = load_trained(kind, spec, entry["meta"],
                                  _subset(arrays, f"base.{kind}."))
    meta_entry = manifest["meta_learner"]
    meta_spec = LearnerSpec.from_dict(meta_entry["spec"])
    meta = load_trained(meta_spec.kind, meta_spec, meta_entry["meta"],
                        _subset(arrays, "meta."))

    return StackedModel(
        stack=TransformStack(scaler, noise, pca),
        base_learners=base,
        meta=meta,
        config=RunConfig.from_dict(manifest["config"]),
        feature_plan=manifest.get("feature_plan"),
        fold_fingerprints=manifest.get("fold_fingerprints", []),
    )


# ---------------------------------------------------------------------------
# Table caches

def save_table(t: FeatureTable, path) -> None:
    manifest = {
        "bundle_kind": "table",
        "columns": [
            {"name": c.name, "kind": c.kind, "missing_fraction": c.missing_fraction,
             "encoding_map": c.encoding_map}
            for c in t.columns
        ],
        "has_labels": t.labels is not None,
    }
    arrays = {"values": t.values}
    if t.labels is not None:
        arrays["labels"] = t.labels.astype(np.float64)
    _write_bundle(path, manifest, arrays)


def load_table(path) -> FeatureTable:
    manifest, arrays = _read_bundle(path)
    if manifest.get("bundle_kind") != "table":
        raise CorruptBundle(f"{path}: not a table bundle")
    cols = tuple(
        ColumnMeta(c["name"], c["kind"], c["missing_fraction"], c["encoding_map"])
        for c in manifest["columns"]
    )
    labels = arrays["labels"].astype(np.int64) if manifest["has_labels"] else None
    return FeatureTable(cols, arrays["values"], labels)
