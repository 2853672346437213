"""Ranking metrics, bootstrap intervals, fairness ratios, linear SHAP.

Everything here is a pure function of its inputs. AUROC uses the
rank-sum (Mann-Whitney) form with midranks for ties; AUPRC is average
precision with tied scores handled as one group. Bootstrap intervals use
the percentile method with per-resample seeds so results are independent
of execution order. Undefined metrics are reported as None, never
silently coerced to 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError


class UndefinedMetric(DataError):
    pass


class TooFewValidResamples(DataError):
    pass


def _check_binary(y: np.ndarray) -> np.ndarray:
    y = np.asarray(y)
    if not set(np.unique(y)) <= {0, 1}:
        raise ValueError("labels must be 0/1")
    return y.astype(np.int64)


def auroc(y, p) -> float:
    """Probability a positive outranks a negative, ties counted half.

    Computed from midranks in O(N log N); equals the all-pairs count.
    """
    y = _check_binary(y)
    p = np.asarray(p, dtype=np.float64)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetric("auroc needs both classes")
    order = np.argsort(p, kind="mergesort")
    sorted_p = p[order]
    ranks = np.empty(len(p), dtype=np.float64)
    i = 0
    while i < len(p):
        j = i
        while j + 1 < len(p) and sorted_p[j + 1] == sorted_p[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0  # midrank, 1-based
        i = j + 1
    rank_sum = float(ranks[y == 1].sum())
    u = rank_sum - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def auprc(y, p) -> float:
    """Average precision by step integration, descending scores, ties grouped."""
    y = _check_binary(y)
    p = np.asarray(p, dtype=np.float64)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise UndefinedMetric("auprc needs at least one positive")
    order = np.argsort(-p, kind="mergesort")
    y_sorted = y[order]
    p_sorted = p[order]
    ap = 0.0
    tp = 0
    fp = 0
    prev_recall = 0.0
    i = 0
    while i < len(y_sorted):
        j = i
        while j + 1 < len(y_sorted) and p_sorted[j + 1] == p_sorted[i]:
            j += 1
        tp += int(y_sorted[i : j + 1].sum())
        fp += (j - i + 1) - int(y_sorted[i : j + 1].sum())
        recall = tp / n_pos
        precision = tp / (tp + fp)
        ap += (recall - prev_recall) * precision
        prev_recall = recall
        i = j + 1
    return ap


def confusion_counts(y, y_hat) -> tuple[int, int, int, int]:
    y = _check_binary(y)
    y_hat = _check_binary(y_hat)
    tp = int(((y == 1) & (y_hat == 1)).sum())
    fp = int(((y == 0) & (y_hat == 1)).sum())
    fn = int(((y == 1) & (y_hat == 0)).sum())
    tn = int(((y == 0) & (y_hat == 0)).sum())
    return tp, fp, fn, tn


def _ratio(num: int, den: int) -> float | None:
    return num / den if den else None


def classification_metrics(y, y_hat) -> dict[str, float | None]:
    """Confusion-matrix metrics; 0/0 cases are None (undefined), not 0."""
    tp, fp, fn, tn = confusion_counts(y, y_hat)
    precision = _ratio(tp, tp + fp)
    recall = _ratio(tp, tp + fn)
    if precision is None or recall is None or precision + recall == 0:
        f1 = None
    else:
        f1 = 2 * precision * recall / (precision + recall)
    return {
        "accuracy": _ratio(tp + tn, tp + fp + fn + tn),
        "precision": precision,
        "recall": recall,
        "specificity": _ratio(tn, tn + fp),
        "f1": f1,
    }


@dataclass
class MetricResult:
    name: str
    point: float
    ci_low: float
    ci_high: float
    n_boot: int
    seed: int
    n_skipped: int = 0

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "point": self.point,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "n_boot": self.n_boot,
            "seed": self.seed,
            "n_skipped": self.n_skipped,
        }


def bootstrap_ci(
    metric_fn,
    y,
    p,
    n_boot: int = 1000,
    level: float = 0.95,
    seed: int = 0,
    name: str = "metric",
) -> MetricResult:
    """Percentile bootstrap over row resamples.

    Resample i draws indices with its own generator seeded seed+i, so the
    result does not depend on evaluation order. Resamples on which the
    metric is undefined are skipped and counted; more than half skipped
    is an error.
    """
    y = np.asarray(y)
    p = np.asarray(p)
    if len(y) < 2:
        raise DataError("bootstrap needs at least 2 rows")
    point = metric_fn(y, p)
    values = []
    skipped = 0
    for i in range(n_boot):
        rng = np.random.default_rng(seed + i)
        idx = rng.integers(0, len(y), len(y))
        try:
            val = metric_fn(y[idx], p[idx])
        except UndefinedMetric:
            skipped += 1
            continue
        if val is None:
            skipped += 1
            continue
        values.append(val)
    if skipped > n_boot / 2:
        raise TooFewValidResamples(f"{skipped} of {n_boot} resamples were undefined")
    alpha = (1.0 - level) / 2.0
    ci_low, ci_high = np.quantile(np.asarray(values), [alpha, 1.0 - alpha], method="linear")
    result = MetricResult(
        name=name,
        point=float(point),
        ci_low=float(ci_low),
        ci_high=float(ci_high),
        n_boot=n_boot,
        seed=seed,
        n_skipped=skipped,
    )
    assert result.ci_low <= result.point <= result.ci_high, (
        "percentile CI excludes the point estimate; pathological tie structure"
    )
    return result


def subgroup_performance(y, p, y_hat, group_labels: list[str]) -> dict[str, dict]:
    """Per-group AUROC/accuracy/selection and confusion rates.

    Groups with a single class get AUROC None plus a note; empty groups
    cannot occur since labels are taken from the rows themselves.
    """
    y = np.asarray(y)
    p = np.asarray(p)
    y_hat = np.asarray(y_hat)
    labels = np.asarray(group_labels)
    table: dict[str, dict] = {}
    for g in sorted(set(group_labels)):
        sel = labels == g
        yg, pg, hg = y[sel], p[sel], y_hat[sel]
        try:
            auc = auroc(yg, pg)
            note = None
        except UndefinedMetric:
            auc = None
            note = "auroc undefined: single class in group"
        tp, fp, fn, tn = confusion_counts(yg, hg)
        entry = {
            "n": int(sel.sum()),
            "auroc": auc,
            "accuracy": _ratio(tp + tn, len(yg)),
            "selection_rate": float(hg.mean()),
            "tpr": _ratio(tp, tp + fn),
            "fpr": _ratio(fp, fp + tn),
        }
        if note:
            entry["note"] = note
        table[g] = entry
    return table


def demographic_parity(y_hat, group_labels: list[str]) -> float:
    """Lowest group selection rate divided by the highest."""
    y_hat = np.asarray(y_hat)
    labels = np.asarray(group_labels)
    groups = sorted(set(group_labels))
    if len(groups) < 2:
        raise UndefinedMetric("demographic parity needs >= 2 groups")
    rates = [float(y_hat[labels == g].mean()) for g in groups]
    if max(rates) == 0:
        raise UndefinedMetric("no group selects any positives")
    return min(rates) / max(rates)


def _equalized_odds_detail(y, y_hat, group_labels: list[str]):
    y = np.asarray(y)
    y_hat = np.asarray(y_hat)
    labels = np.asarray(group_labels)
    groups = sorted(set(group_labels))
    if len(groups) < 2:
        raise UndefinedMetric("equalized odds needs >= 2 groups")
    tprs, fprs = [], []
    notes = []
    for g in groups:
        sel = labels == g
        tp, fp, fn, tn = confusion_counts(y[sel], y_hat[sel])
        tprs.append(_ratio(tp, tp + fn))
        fprs.append(_ratio(fp, fp + tn))

    def rate_ratio(rates, kind):
        if any(r is None for r in rates):
            bad = [g for g, r in zip(groups, rates) if r is None]
            notes.append(f"{kind} undefined for groups {bad}; {kind} ratio excluded")
            return None
        if max(rates) == 0:
            notes.append(f"all {kind}s are 0; {kind} ratio excluded")
            return None
        return min(rates) / max(rates)

    tpr_ratio = rate_ratio(tprs, "tpr")
    fpr_ratio = rate_ratio(fprs, "fpr")
    defined = [r for r in (tpr_ratio, fpr_ratio) if r is not None]
    if not defined:
        raise UndefinedMetric("both rate ratios are undefined")
    return min(defined), tpr_ratio, fpr_ratio, notes


def equalized_odds(y, y_hat, group_labels: list[str]) -> float:
    """Smaller of the min/max TPR ratio and the min/max FPR ratio."""
    value, _, _, _ = _equalized_odds_detail(y, y_hat, group_labels)
    return value


@dataclass
class FairnessReport:
    attribute: str
    per_group: dict[str, dict]
    demographic_parity: float | None
    equalized_odds: float | None
    tpr_ratio: float | None
    fpr_ratio: float | None
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "attribute": self.attribute,
            "per_group": self.per_group,
            "demographic_parity": self.demographic_parity,
            "equalized_odds": self.equalized_odds,
            "tpr_ratio": self.tpr_ratio,
            "fpr_ratio": self.fpr_ratio,
            "notes": self.notes,
        }


def fairness_report(y, p, y_hat, group_labels: list[str], attribute: str) -> FairnessReport:
    per_group = subgroup_performance(y, p, y_hat, group_labels)
    notes: list[str] = []
    try:
        dp = demographic_parity(y_hat, group_labels)
    except UndefinedMetric as exc:
        dp = None
        notes.append(f"demographic_parity undefined: {exc}")
    try:
        eo, tpr_ratio, fpr_ratio, eo_notes = _equalized_odds_detail(y, y_hat, group_labels)
        notes.extend(eo_notes)
    except UndefinedMetric as exc:
        eo = tpr_ratio = fpr_ratio = None
        notes.append(f"equalized_odds undefined: {exc}")
    return FairnessReport(
        attribute=attribute,
        per_group=per_group,
        demographic_parity=dp,
        equalized_odds=eo,
        tpr_ratio=tpr_ratio,
        fpr_ratio=fpr_ratio,
        notes=notes,
    )


def linear_shap(weights: np.ndarray, X: np.ndarray, background_mean: np.ndarray) -> np.ndarray:
    """Exact per-feature contributions for a linear score.

    Phi[n, d] = w_d * (X[n, d] - mu_d); rows sum to the score deviation
    from the background score exactly.
    """
    w = np.asarray(weights, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    mu = np.asarray(background_mean, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != len(w) or len(mu) != len(w):
        raise DataError("weights, X columns, and background mean must align")
    return (X - mu) * w


def modality_importance(
    feature_map: list[tuple[str, int, int]],
    phi: np.ndarray | None = None,
    weights: np.ndarray | None = None,
) -> dict[str, float]:
    """Per-block importance shares, normalized to sum to 1.

    SHAP variant (phi given): mean over rows of the within-block sum of
    |Phi|. Coefficient variant (weights given): within-block sum of |w|.
    """
    if (phi is None) == (weights is None):
        raise ValueError("provide exactly one of phi or weights")
    raw = {}
    for name, start, stop in feature_map:
        if phi is not None:
            raw[name] = float(np.abs(phi[:, start:stop]).sum(axis=1).mean())
        else:
            raw[name] = float(np.abs(np.asarray(weights)[start:stop]).sum())
    total = sum(raw.values())
    if total == 0:
        return {name: 0.0 for name in raw}
    return {name: val / total for name, val in raw.items()}


def roc_points(y, p) -> list[tuple[float, float, float]]:
    """(fpr, tpr, threshold) at every distinct score, descending."""
    y = _check_binary(y)
    p = np.asarray(p, dtype=np.float64)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetric("roc needs both classes")
    order = np.argsort(-p, kind="mergesort")
    points = [(0.0, 0.0, float("inf"))]
    tp = fp = 0
    i = 0
    y_sorted, p_sorted = y[order], p[order]
    while i < len(y):
        j = i
        while j + 1 < len(y) and p_sorted[j + 1] == p_sorted[i]:
            j += 1
        tp += int(y_sorted[i : j + 1].sum())
        fp += (j - i + 1) - int(y_sorted[i : j + 1].sum())
        points.append((fp / n_neg, tp / n_pos, float(p_sorted[i])))
        i = j + 1
    return points


def pr_points(y, p) -> list[tuple[float, float, float]]:
    """(recall, precision, threshold) at every distinct score, descending."""
    y = _check_binary(y)
    p = np.asarray(p, dtype=np.float64)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise UndefinedMetric("precision-recall needs a positive")
    order = np.argsort(-p, kind="mergesort")
    y_sorted, p_sorted = y[order], p[order]
    points = []
    tp = fp = 0
    i = 0
    while i < len(y):
        j = i
        while j + 1 < len(y) and p_sorted[j + 1] == p_sorted[i]:
            j += 1
        tp += int(y_sorted[i : j + 1].sum())
        fp += (j - i + 1) - int(y_sorted[i : j + 1].sum())
        points.append((tp / n_pos, tp / (tp + fp), float(p_sorted[i])))
        i = j + 1
    return points
