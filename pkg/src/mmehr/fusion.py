"""Late fusion: block-concatenated design matrix and a logistic head.

Each stay's row is [structured block | one block per selected manifest in
config order | presence flags]. A stay absent from a manifest gets a zero
block and a 0 presence flag, so missingness is explicit and learnable.
The classifier is trained by damped Newton steps with an Armijo line
search on mean log-loss plus an L2 penalty (intercept unpenalized), which
is deterministic and accurate to tight tolerances.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError
from .cohort import LabeledStay, GroupLabels
from .manifests import EmbeddingManifest


class DimensionDrift(DataError):
    """A manifest dimension changed relative to what was configured."""


class SingleClassTrainingSet(DataError):
    pass


class DimensionMismatch(DataError):
    pass


@dataclass
class FusedDataset:
    X: np.ndarray  # [N, D] float64
    y: np.ndarray  # [N] int
    feature_map: list[tuple[str, int, int]]  # (block name, start, stop)
    presence: np.ndarray  # [N, M] uint8
    groups: list[GroupLabels]
    stay_ids: list[int]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def block(self, name: str) -> np.ndarray:
        for block_name, start, stop in self.feature_map:
            if block_name == name:
                return self.X[:, start:stop]
        raise KeyError(name)

    def subset(self, indices: np.ndarray) -> "FusedDataset":
        idx = np.asarray(indices)
        return FusedDataset(
            X=self.X[idx],
            y=self.y[idx],
            feature_map=list(self.feature_map),
            presence=self.presence[idx],
            groups=[self.groups[i] for i in idx],
            stay_ids=[self.stay_ids[i] for i in idx],
        )


def assemble_fused(
    labeled: list[LabeledStay],
    structured_vecs: dict[int, np.ndarray],
    manifests: list[EmbeddingManifest],
    task: str = "mortality",
    expected_dims: dict[str, int] | None = None,
) -> FusedDataset:
    """Build the fused matrix in a fixed block order.

    Manifest blocks follow the structured block in the order given (the
    config order). Presence flags, one per block including structured,
    come last. Block names are the modality, disambiguated by encoder
    name when a modality appears twice.
    """
    if task not in ("mortality", "los"):
        raise ValueError(f"unknown task: {task}")
    names = []
    for m in manifests:
        m.validate()
        name = m.modality
        if sum(1 for other in manifests if other.modality == m.modality) > 1:
            name = f"{m.modality}:{m.encoder_name}"
        if name in names:
            raise DataError(f"duplicate fused block name: {name}")
        names.append(name)
        if expected_dims and name in expected_dims and expected_dims[name] != m.dimension:
            raise DimensionDrift(
                f"{name}: manifest dimension {m.dimension} != configured {expected_dims[name]}"
            )

    n = len(labeled)
    if n == 0:
        raise DataError("empty cohort")
    struct_dim = None
    for stay in labeled:
        vec = structured_vecs.get(stay.stay_id)
        if vec is None:
            raise DataError(f"stay {stay.stay_id} has no structured vector")
        if struct_dim is None:
            struct_dim = len(vec)
        elif len(vec) != struct_dim:
            raise DimensionDrift("structured vectors have inconsistent dimensions")
    if expected_dims and "structured" in expected_dims and expected_dims["structured"] != struct_dim:
        raise DimensionDrift(
            f"structured: dimension {struct_dim} != configured {expected_dims['structured']}"
        )

    n_blocks = 1 + len(manifests)
    dim = struct_dim + sum(m.dimension for m in manifests) + n_blocks
    X = np.zeros((n, dim), dtype=np.float64)
    presence = np.zeros((n, n_blocks), dtype=np.uint8)

    feature_map: list[tuple[str, int, int]] = [("structured", 0, struct_dim)]
    offset = struct_dim
    for name, m in zip(names, manifests):
        feature_map.append((name, offset, offset + m.dimension))
        offset += m.dimension
    flag_start = offset
    feature_map.append(("presence", flag_start, flag_start + n_blocks))

    row_lookup = [{sid: i for i, sid in enumerate(m.ids)} for m in manifests]
    for i, stay in enumerate(labeled):
        X[i, 0:struct_dim] = structured_vecs[stay.stay_id]
        presence[i, 0] = 1
        for bi, m in enumerate(manifests):
            ri = row_lookup[bi].get(stay.stay_id)
            if ri is not None:
                _, start, stop = feature_map[1 + bi]
                X[i, start:stop] = m.vectors[ri]
                presence[i, 1 + bi] = 1
        X[i, flag_start : flag_start + n_blocks] = presence[i]

    y = np.array(
        [s.mortality_label if task == "mortality" else s.los_label for s in labeled],
        dtype=np.int64,
    )
    return FusedDataset(
        X=X,
        y=y,
        feature_map=feature_map,
        presence=presence,
        groups=[s.groups for s in labeled],
        stay_ids=[s.stay_id for s in labeled],
    )


def split_80_20(
    stay_ids: list[int], seed: int, train_fraction: float = 0.8
) -> tuple[list[int], list[int]]:
    """Deterministic shuffled split over stay ids; train gets floor(0.8 N)."""
    if len(stay_ids) < 5:
        raise DataError("need at least 5 stays to split")
    ordered = sorted(stay_ids)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(ordered))
    n_train = int(np.floor(train_fraction * len(ordered)))
    train = sorted(ordered[i] for i in perm[:n_train])
    test = sorted(ordered[i] for i in perm[n_train:])
    return train, test


def split_by_patient(
    stay_ids: list[int], subject_ids: dict[int, int], seed: int, train_fraction: float = 0.8
) -> tuple[list[int], list[int]]:
    """Patient-level split: all stays of a subject land on the same side."""
    if len(stay_ids) < 5:
        raise DataError("need at least 5 stays to split")
    by_subject: dict[int, list[int]] = {}
    for sid in sorted(stay_ids):
        by_subject.setdefault(subject_ids[sid], []).append(sid)
    subjects = sorted(by_subject)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(subjects))
    target = int(np.floor(train_fraction * len(stay_ids)))
    train: list[int] = []
    test: list[int] = []
    for i in perm:
        bucket = train if len(train) < target else test
        bucket.extend(by_subject[subjects[i]])
    return sorted(train), sorted(test)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def logreg_objective(
    w: np.ndarray, b: float, X: np.ndarray, y: np.ndarray, l2: float
) -> float:
    """Mean log-loss plus (l2/2)||w||^2; the intercept is not penalized."""
    z = X @ w + b
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z))
    return loss + 0.5 * l2 * float(w @ w)


def logreg_gradient(
    w: np.ndarray, b: float, X: np.ndarray, y: np.ndarray, l2: float
) -> tuple[np.ndarray, float]:
    z = X @ w + b
    r = _sigmoid(z) - y
    grad_w = X.T @ r / len(y) + l2 * w
    grad_b = float(np.mean(r))
    return grad_w, grad_b


@dataclass
class LogRegModel:
    weights: np.ndarray
    intercept: float
    metadata: dict = field(default_factory=dict)

    def save(self, path: str | Path) -> None:
        payload = {
            "weights_b64": base64.b64encode(
                np.ascontiguousarray(self.weights, dtype="<f8").tobytes()
            ).decode("ascii"),
            "intercept": self.intercept,
            "metadata": self.metadata,
        }
        Path(path).write_text(
            json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )

    @classmethod
    def load(cls, path: str | Path) -> "LogRegModel":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        weights = np.frombuffer(
            base64.b64decode(payload["weights_b64"]), dtype="<f8"
        ).copy()
        return cls(
            weights=weights,
            intercept=float(payload["intercept"]),
            metadata=dict(payload.get("metadata", {})),
        )


def train_logreg(
    X: np.ndarray,
    y: np.ndarray,
    l2: float | None = None,
    max_iter: int = 1000,
    tol: float = 1e-6,
    init: np.ndarray | None = None,
    seed: int | None = None,
) -> LogRegModel:
    """Damped Newton with backtracking on the penalized log-loss.

    Converged when the gradient infinity-norm (over weights and
    intercept) drops below tol. The default penalty is 1/N, which keeps
    the objective strictly convex so the optimum is unique.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if not np.isfinite(X).all():
        raise DataError("design matrix contains non-finite values")
    classes = np.unique(y)
    if len(classes) < 2:
        raise SingleClassTrainingSet("training labels contain a single class")
    if not set(classes) <= {0.0, 1.0}:
        raise DataError(f"labels must be 0/1, got {classes}")
    n, d = X.shape
    if l2 is None:
        l2 = 1.0 / n
    if l2 <= 0:
        raise ValueError("l2 must be positive")
    if init is not None:
        theta = np.asarray(init, dtype=np.float64).copy()
        if theta.shape != (d + 1,):
            raise DimensionMismatch(f"init must have length {d + 1}")
    else:
        theta = np.zeros(d + 1)

    def objective(t):
        return logreg_objective(t[:d], t[d], X, y, l2)

    converged = False
    iters = 0
    grad_norm = np.inf
    for iters in range(1, max_iter + 1):
        w, b = theta[:d], theta[d]
        gw, gb = logreg_gradient(w, b, X, y, l2)
        grad = np.concatenate([gw, [gb]])
        grad_norm = float(np.max(np.abs(grad)))
        if grad_norm < tol:
            converged = True
            iters -= 1
            break
        z = X @ w + b
        p = _sigmoid(z)
        s = p * (1.0 - p)
        Xb = np.hstack([X, np.ones((n, 1))])
        H = (Xb * s[:, None]).T @ Xb / n
        H[:d, :d] += l2 * np.eye(d)
        # Levenberg-style damping: grow the ridge until the solve succeeds
        # and the direction is a descent direction.
        damping = 0.0
        while True:
            try:
                step = np.linalg.solve(H + damping * np.eye(d + 1), -grad)
            except np.linalg.LinAlgError:
                step = None
            if step is not None and grad @ step < 0:
                break
            damping = max(2.0 * damping, 1e-10)
            if damping > 1e6:
                step = -grad
                break
        f0 = objective(theta)
        t_step = 1.0
        armijo = 1e-4 * (grad @ step)
        while t_step > 1e-12:
            cand = theta + t_step * step
            if objective(cand) <= f0 + t_step * armijo:
                break
            t_step *= 0.5
        theta = theta + t_step * step
    else:
        iters = max_iter

    w, b = theta[:d], float(theta[d])
    model = LogRegModel(
        weights=w,
        intercept=b,
        metadata={
            "l2": l2,
            "n_train": n,
            "dim": d,
            "iterations": iters,
            "final_grad_inf_norm": grad_norm,
            "converged": converged,
            "objective": objective(theta),
            "tol": tol,
            "seed": seed,
        },
    )
    return model


def predict_proba(model: LogRegModel, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != len(model.weights):
        raise DimensionMismatch(
            f"X has {X.shape[1] if X.ndim == 2 else 'bad'} columns, "
            f"model expects {len(model.weights)}"
        )
    return _sigmoid(X @ model.weights + model.intercept)


def save_feature_map(feature_map: list[tuple[str, int, int]], path: str | Path) -> None:
    payload = [{"block": n, "start": s, "stop": e} for n, s, e in feature_map]
    Path(path).write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_feature_map(path: str | Path) -> list[tuple[str, int, int]]:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    return [(e["block"], e["start"], e["stop"]) for e in payload]
