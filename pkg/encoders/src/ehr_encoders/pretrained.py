"""Stand-in wrappers for pretrained embedding models.

No model weights ship with this package. Each wrapper produces a
deterministic pseudo-embedding from a hash of its input, at the output
dimension the real model would have, so the downstream pipeline can be
exercised end to end without checkpoints or a GPU.

Aggregation policy mirrors the interchange contract: note texts are
concatenated per stay before encoding, image embeddings are computed per
image and averaged per stay.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np


class UnknownModel(KeyError):
    """The requested model id is not in the wrapper registry."""


@dataclass(frozen=True)
class PretrainedSpec:
    model_id: str
    modality: str
    dimension: int
    constant: bool = False


REGISTRY = {
    "radbert": PretrainedSpec("radbert", "text", 768),
    "cxr-foundation": PretrainedSpec("cxr-foundation", "image", 1376),
    # fixed-output smoke-test model: every stay gets the same row
    "constant": PretrainedSpec("constant", "text", 8, constant=True),
}

NOTE_SEPARATOR = "\n\n"


def get_spec(model_id: str) -> PretrainedSpec:
    try:
        return REGISTRY[model_id]
    except KeyError:
        raise UnknownModel(f"no wrapper for model id {model_id!r}") from None


def _hash_vector(model_id: str, content: str, dimension: int) -> np.ndarray:
    digest = hashlib.sha256(f"{model_id}\x1f{content}".encode("utf-8")).digest()
    rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
    return rng.standard_normal(dimension)


def _mean_rows(rows: list[np.ndarray]) -> np.ndarray:
    # sort rows before summing so the mean is exactly permutation-invariant
    stacked = np.stack(rows).astype(np.float64)
    order = np.lexsort(stacked.T[::-1])
    return stacked[order].sum(axis=0) / len(rows)


def encode_pretrained(
    modality: str,
    model_id: str,
    inputs: dict[int, list[str]],
) -> tuple[list[int], np.ndarray]:
    """Embed per-stay inputs with the named wrapper.

    ``inputs`` maps stay_id to its items in chronological order: note texts
    for a text model, image references for an image model. Stays with no
    items are omitted from the result. Returns (stay_ids ascending,
    float32 [N, dimension]).
    """
    spec = get_spec(model_id)
    if not spec.constant and modality != spec.modality:
        raise UnknownModel(f"model {model_id!r} embeds {spec.modality}, not {modality}")
    ids: list[int] = []
    rows: list[np.ndarray] = []
    for sid in sorted(inputs):
        items = inputs[sid]
        if not items:
            continue
        if spec.constant:
            row = _hash_vector(spec.model_id, "", spec.dimension)
        elif spec.modality == "text":
            row = _hash_vector(spec.model_id, NOTE_SEPARATOR.join(items), spec.dimension)
        else:
            row = _mean_rows([_hash_vector(spec.model_id, item, spec.dimension) for item in items])
        ids.append(sid)
        rows.append(row.astype("<f4"))
    if not rows:
        return [], np.zeros((0, spec.dimension), dtype="<f4")
    return ids, np.stack(rows)
