"""Per-modality embedding interchange: manifests, aggregation, encoders.

A manifest directory is the unit of exchange between encoders and the
fusion stage:

    manifest.json  {modality, encoder_name, dimension, count, dtype, checksum}
    ids.csv        ordered stay ids, one per row
    vectors.bin    row-major little-endian float32, count x dimension

The layout is language-neutral and byte-exact: writing and re-reading a
manifest reproduces the vectors bitwise. External encoders are invoked
through a subprocess contract and their output validated on the way in.
"""

from __future__ import annotations

import hashlib
import json
import subprocess
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, ExternalFailure
from .ingest import StayRecord
from .tables import write_csv, read_csv

MODALITIES = ("timeseries", "image", "text")


class ManifestError(DataError):
    pass


class DimensionMismatch(ManifestError):
    pass


class NonFiniteValue(ManifestError):
    pass


class ChecksumMismatch(ManifestError):
    pass


class EmptyInput(DataError):
    pass


class AdapterFailure(ExternalFailure):
    pass


class CoverageGap(UserWarning):
    """An encoder produced no vector for some expected stays."""


@dataclass
class EmbeddingManifest:
    modality: str
    encoder_name: str
    dimension: int
    ids: list[int]
    vectors: np.ndarray  # [N, dimension] float32

    def validate(self) -> None:
        if self.modality not in MODALITIES:
            raise ManifestError(f"unknown modality: {self.modality}")
        if self.dimension <= 0:
            raise DimensionMismatch(f"dimension must be positive, got {self.dimension}")
        if self.vectors.ndim != 2 or self.vectors.shape != (len(self.ids), self.dimension):
            raise DimensionMismatch(
                f"vectors shape {self.vectors.shape} does not match "
                f"{len(self.ids)} ids x dimension {self.dimension}"
            )
        if self.vectors.dtype != np.float32:
            raise ManifestError(f"vectors must be float32, got {self.vectors.dtype}")
        if len(set(self.ids)) != len(self.ids):
            raise ManifestError("duplicate stay ids in manifest")
        if not np.isfinite(self.vectors).all():
            raise NonFiniteValue("manifest contains non-finite vector entries")

    def row(self, stay_id: int) -> np.ndarray | None:
        try:
            return self.vectors[self.ids.index(stay_id)]
        except ValueError:
            return None


def _sha256(data: bytes) -> str:
    return "sha256:" + hashlib.sha256(data).hexdigest()


def write_manifest(manifest: EmbeddingManifest, out_dir: str | Path) -> None:
    manifest.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    blob = np.ascontiguousarray(manifest.vectors, dtype="<f4").tobytes()
    (out / "vectors.bin").write_bytes(blob)
    write_csv(out / "ids.csv", ["stay_id"], [[i] for i in manifest.ids])
    header = {
        "modality": manifest.modality,
        "encoder_name": manifest.encoder_name,
        "dimension": manifest.dimension,
        "count": len(manifest.ids),
        "dtype": "f32le",
        "checksum": _sha256(blob),
    }
    (out / "manifest.json").write_text(
        json.dumps(header, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def read_manifest(in_dir: str | Path) -> EmbeddingManifest:
    src = Path(in_dir)
    header = json.loads((src / "manifest.json").read_text(encoding="utf-8"))
    if header.get("dtype") != "f32le":
        raise ManifestError(f"unsupported dtype: {header.get('dtype')}")
    blob = (src / "vectors.bin").read_bytes()
    if _sha256(blob) != header["checksum"]:
        raise ChecksumMismatch("vectors.bin does not match the recorded checksum")
    _, id_rows = read_csv(src / "ids.csv")
    ids = [int(r[0]) for r in id_rows]
    count, dim = int(header["count"]), int(header["dimension"])
    if len(ids) != count:
        raise DimensionMismatch(f"ids.csv has {len(ids)} rows, header says {count}")
    if len(blob) != count * dim * 4:
        raise DimensionMismatch(
            f"vectors.bin holds {len(blob)} bytes, expected {count * dim * 4}"
        )
    vectors = np.frombuffer(blob, dtype="<f4").reshape(count, dim).copy()
    manifest = EmbeddingManifest(
        modality=header["modality"],
        encoder_name=header["encoder_name"],
        dimension=dim,
        ids=ids,
        vectors=vectors,
    )
    manifest.validate()
    return manifest


def aggregate_image_embeddings(vectors: np.ndarray | list) -> np.ndarray:
    """Element-wise mean of the per-image vectors for one stay."""
    arr = np.asarray(vectors, dtype=np.float64)
    if arr.size == 0:
        raise EmptyInput("no image vectors to aggregate")
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    return arr.mean(axis=0)


def concat_notes(notes) -> str:
    """Chronological concatenation with a timestamp header per note.

    Notes are ordered by offset (ties by sequence number); each is
    prefixed with a `[t=+H.HHh]` line and separated by a blank line.
    Returns the empty string when the stay has no notes.
    """
    ordered = sorted(notes, key=lambda n: (n.offset_hours, n.seq))
    return "\n\n".join(f"[t=+{n.offset_hours:.2f}h]\n{n.text}" for n in ordered)


def _hash_seed(*parts) -> int:
    joined = "\x1f".join(str(p) for p in parts).encode("utf-8")
    return int.from_bytes(hashlib.sha256(joined).digest()[:8], "little")


_token_cache: dict[tuple, np.ndarray] = {}


def _token_vector(token: str, dimension: int, seed: int) -> np.ndarray:
    key = (token, dimension, seed)
    vec = _token_cache.get(key)
    if vec is None:
        rng = np.random.default_rng(_hash_seed("token", token, dimension, seed))
        vec = rng.standard_normal(dimension)
        _token_cache[key] = vec
    return vec


def reference_encode(
    stay: StayRecord | int, modality: str, dimension: int, seed: int
) -> np.ndarray:
    """Deterministic stand-in encoder: platform-stable pseudo-random vectors.

    The base vector is a seeded hash of (stay_id, modality, seed), per
    coordinate approximately standard normal. For the text modality the
    note content dominates: token vectors are summed with 1/sqrt(n)
    scaling and mixed in at 9x the energy of the id hash (total variance
    stays near 1), so stays sharing vocabulary land near each other and
    injected label tokens are recoverable by a linear model.
    """
    if dimension <= 0:
        raise ValueError("dimension must be positive")
    stay_id = stay if isinstance(stay, int) else stay.stay_id
    rng = np.random.default_rng(_hash_seed("stay", stay_id, modality, seed))
    base = rng.standard_normal(dimension)
    if modality == "text" and not isinstance(stay, int) and stay.notes:
        tokens = concat_notes(stay.notes).split()
        if tokens:
            content = np.zeros(dimension)
            for tok in tokens:
                content += _token_vector(tok, dimension, seed)
            content /= np.sqrt(len(tokens))
            base = (base + 3.0 * content) / np.sqrt(10.0)
    return base.astype(np.float32)


def encode_reference_manifest(
    stays: list[StayRecord],
    modality: str,
    dimension: int,
    seed: int,
    encoder_name: str | None = None,
) -> EmbeddingManifest:
    """Build a full manifest with the reference encoder, skipping stays
    that lack the modality entirely (downstream missing policy applies)."""
    ids = []
    rows = []
    for stay in stays:
        if modality == "image" and not stay.images:
            continue
        if modality == "text" and not stay.notes:
            continue
        if modality == "timeseries" and not stay.vitals:
            continue
        ids.append(stay.stay_id)
        rows.append(reference_encode(stay, modality, dimension, seed))
    vectors = (
        np.stack(rows).astype(np.float32)
        if rows
        else np.zeros((0, dimension), dtype=np.float32)
    )
    manifest = EmbeddingManifest(
        modality=modality,
        encoder_name=encoder_name or f"reference-{modality}",
        dimension=dimension,
        ids=ids,
        vectors=vectors,
    )
    manifest.validate()
    return manifest


@dataclass(frozen=True)
class EncoderSpec:
    name: str
    modality: str
    dimension: int
    kind: str = "native"  # native | external
    command: tuple[str, ...] = ()
    seed: int = 0

    def __post_init__(self):
        if self.dimension <= 0:
            raise ValueError("dimension must be positive")
        if self.kind not in ("native", "external"):
            raise ValueError(f"unknown encoder kind: {self.kind}")
        if self.kind == "external" and not self.command:
            raise ValueError("external encoder needs a command")


@dataclass
class ExternalEncodeResult:
    manifest: EmbeddingManifest
    missing_ids: list[int]


def run_external_encoder(
    spec: EncoderSpec,
    master_dir: str | Path,
    out_dir: str | Path,
    window_hours: float,
    expected_ids: list[int] | None = None,
    timeout: float = 600.0,
) -> ExternalEncodeResult:
    """Invoke an adapter subprocess and validate what it wrote.

    Contract: `<command> --input <master_dir> --output <manifest_dir>
    --window-hours <H>`, exit 0, manifest layout in out_dir. Wrong
    dimension or malformed output is an AdapterFailure; stays it skipped
    are reported as a coverage gap, not an error.
    """
    if spec.kind != "external":
        raise ValueError(f"encoder {spec.name} is not external")
    cmd = list(spec.command) + [
        "--input",
        str(master_dir),
        "--output",
        str(out_dir),
        "--window-hours",
        repr(float(window_hours)),
    ]
    try:
        proc = subprocess.run(cmd, capture_output=True, text=True, timeout=timeout)
    except (OSError, subprocess.TimeoutExpired) as exc:
        raise AdapterFailure(f"adapter {spec.name} failed to run: {exc}") from exc
    if proc.returncode != 0:
        raise AdapterFailure(
            f"adapter {spec.name} exited {proc.returncode}: {proc.stderr.strip()[:500]}"
        )
    try:
        manifest = read_manifest(out_dir)
    except (ManifestError, OSError, KeyError, json.JSONDecodeError) as exc:
        raise AdapterFailure(f"adapter {spec.name} wrote a malformed manifest: {exc}") from exc
    if manifest.dimension != spec.dimension:
        raise AdapterFailure(
            f"adapter {spec.name} declared dimension {spec.dimension} "
            f"but wrote {manifest.dimension}"
        )
    missing = []
    if expected_ids is not None:
        have = set(manifest.ids)
        missing = [i for i in expected_ids if i not in have]
        if missing:
            warnings.warn(
                f"encoder {spec.name} covered {len(have)} of {len(expected_ids)} stays; "
                f"{len(missing)} missing",
                CoverageGap,
                stacklevel=2,
            )
    return ExternalEncodeResult(manifest=manifest, missing_ids=missing)
