"""Brute-force reference implementations used as test oracles.

Everything here trades speed for obviousness: quadratic pair counting
for ranking metrics, a literal threshold sweep for average precision,
central finite differences for gradients, and per-index backward scans
for imputation. The real implementations must agree with these on
random inputs; the oracles themselves are kept too simple to be wrong
in the same way twice.
"""

from __future__ import annotations

import numpy as np


def auroc_pairs(y, scores) -> float:
    """Count concordant positive/negative pairs, half credit for ties."""
    y = np.asarray(y)
    s = np.asarray(scores, dtype=float)
    pos = s[y == 1]
    neg = s[y == 0]
    if len(pos) == 0 or len(neg) == 0:
        raise ValueError("need at least one positive and one negative")
    wins = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                wins += 1.0
            elif p == q:
                wins += 0.5
    return wins / (len(pos) * len(neg))


def auprc_sweep(y, scores) -> float:
    """Average precision by sweeping distinct thresholds descending.

    Tied scores enter together, so each distinct score value is one
    operating point and contributes (recall step) * (precision there).
    """
    y = np.asarray(y)
    s = np.asarray(scores, dtype=float)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise ValueError("need at least one positive")
    ap = 0.0
    prev_recall = 0.0
    for t in sorted(set(s.tolist()), reverse=True):
        picked = s >= t
        tp = int(y[picked].sum())
        precision = tp / int(picked.sum())
        recall = tp / n_pos
        ap += (recall - prev_recall) * precision
        prev_recall = recall
    return ap


def confusion_table(y, y_hat) -> dict:
    """Tally the four confusion cells one row at a time."""
    cells = {"tn": 0, "fp": 0, "fn": 0, "tp": 0}
    for truth, pred in zip(y, y_hat):
        if truth == 1:
            cells["tp" if pred == 1 else "fn"] += 1
        else:
            cells["fp" if pred == 1 else "tn"] += 1
    return cells


def numeric_gradient(f, w: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Central finite differences, one coordinate at a time."""
    g = np.zeros_like(w, dtype=float)
    for i in range(len(w)):
        hi = w.copy()
        lo = w.copy()
        hi[i] += eps
        lo[i] -= eps
        g[i] = (f(hi) - f(lo)) / (2.0 * eps)
    return g


def forward_fill_scan(values: list) -> list:
    """For each slot, scan backwards for the most recent non-None value."""
    out = []
    for i in range(len(values)):
        filled = values[i]
        if filled is None:
            for j in range(i - 1, -1, -1):
                if values[j] is not None:
                    filled = values[j]
                    break
        out.append(filled)
    return out


def bin_mean_table(
    entries: list[tuple[float, float, bool]],
    bin_hours: float,
    horizon_hours: float,
) -> list[float | None]:
    """Mean of observed values per bin; None when a bin saw nothing.

    Entries are (offset_hours, value, observed). Unobserved values never
    count toward a mean even when imputation gave them a number.
    """
    n_bins = int(round(horizon_hours / bin_hours))
    sums = [0.0] * n_bins
    counts = [0] * n_bins
    for offset, value, observed in entries:
        if not observed or value is None:
            continue
        if offset < 0 or offset >= horizon_hours:
            continue
        b = int(offset // bin_hours)
        sums[b] += value
        counts[b] += 1
    return [sums[b] / counts[b] if counts[b] else None for b in range(n_bins)]


def shap_sum_check(weights, X, mu) -> np.ndarray:
    """Per-row target that attribution columns must add up to."""
    X = np.asarray(X, dtype=float)
    return X @ np.asarray(weights, dtype=float) - float(np.dot(weights, mu))
