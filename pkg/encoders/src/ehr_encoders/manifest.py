"""Embedding-manifest writer.

Layout shared with the pipeline side:

    manifest.json  {modality, encoder_name, dimension, count, dtype: "f32le",
                    checksum: "sha256:<hex of vectors.bin>"}
    ids.csv        header ``stay_id``, one row per vector
    vectors.bin    row-major little-endian float32

Reimplemented here on purpose; the file format is the contract, not any
particular library.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np


class ManifestWriteError(ValueError):
    pass


def write_manifest(
    out_dir: str | Path,
    modality: str,
    encoder_name: str,
    ids: list[int],
    vectors: np.ndarray,
) -> dict:
    """Write the three manifest files; returns the header dict."""
    vec = np.ascontiguousarray(np.asarray(vectors), dtype="<f4")
    if vec.ndim != 2:
        raise ManifestWriteError(f"vectors must be 2-D, got shape {vec.shape}")
    if vec.shape[0] != len(ids):
        raise ManifestWriteError(f"{len(ids)} ids for {vec.shape[0]} vector rows")
    if len(set(ids)) != len(ids):
        raise ManifestWriteError("duplicate stay ids")
    if not np.isfinite(vec).all():
        raise ManifestWriteError("non-finite values in embedding matrix")

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    blob = vec.tobytes()
    (out / "vectors.bin").write_bytes(blob)
    with (out / "ids.csv").open("w", newline="", encoding="utf-8") as fh:
        fh.write("stay_id\n")
        for stay_id in ids:
            fh.write(f"{int(stay_id)}\n")
    header = {
        "modality": modality,
        "encoder_name": encoder_name,
        "dimension": int(vec.shape[1]),
        "count": int(vec.shape[0]),
        "dtype": "f32le",
        "checksum": "sha256:" + hashlib.sha256(blob).hexdigest(),
    }
    (out / "manifest.json").write_text(
        json.dumps(header, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return header
