"""Segment archives: a directory holding ``segments.npy`` (2 x P x L),
``labels.npy`` and ``archive.json``."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .dsp import SegmentTensor

ARCHIVE_VERSION = 1


def save_archive(tensor: SegmentTensor, out_dir, meta: dict | None = None) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    np.save(out / "segments.npy", np.ascontiguousarray(tensor.data, dtype="<f8"))
    np.save(out / "labels.npy", tensor.labels.astype("<i8"))
    manifest = {
        "archive_version": ARCHIVE_VERSION,
        "sample_rate_hz": tensor.sample_rate_hz,
        "standardized": tensor.standardized,
        "n_segments": tensor.n_segments,
        "segment_len": tensor.segment_len,
        "class_counts": np.bincount(tensor.labels, minlength=4).tolist(),
        **(meta or {}),
    }
    with open(out / "archive.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return out


def read_manifest(archive_dir) -> dict:
    with open(Path(archive_dir) / "archive.json") as fh:
        return json.load(fh)


def load_archive(archive_dir, indices=None, mmap: bool = False) -> SegmentTensor:
    """Load an archive, optionally only the segments at ``indices``."""
    path = Path(archive_dir)
    meta = read_manifest(path)
    if meta.get("archive_version") != ARCHIVE_VERSION:
        raise ValueError(f"{path}: unsupported archive version {meta.get('archive_version')}")
    data = np.load(path / "segments.npy", mmap_mode="r" if mmap or indices is not None else None)
    labels = np.load(path / "labels.npy")
    if indices is not None:
        indices = np.asarray(indices)
        data, labels = np.asarray(data[:, indices]), labels[indices]
    return SegmentTensor(np.asarray(data), meta["sample_rate_hz"], labels, meta["standardized"])
