"""ROC/AUC, threshold metrics, fold aggregation, and matched-response tests.

The AUC is the Mann-Whitney concordance P(score+ > score-) + 0.5 P(tie),
computed exactly through midranks. Cochran's Q compares correct-classification
proportions across matched responders and reduces to McNemar's statistic at
k = 2; its p-value comes from an in-package chi-square survival function
built on the regularized upper incomplete gamma.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, NumericError

_GAMMA_EPS = 1e-15
_GAMMA_MAX_ITER = 10000
_FPMIN = 1e-300


# ---------------------------------------------------------------------------
# chi-square survival function

def _lower_gamma_series(a: float, z: float) -> float:
    """Regularized lower incomplete gamma P(a, z) by power series."""
    if z == 0.0:
        return 0.0
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(_GAMMA_MAX_ITER):
        ap += 1.0
        term *= z / ap
        total += term
        if abs(term) < abs(total) * _GAMMA_EPS:
            break
    return total * math.exp(-z + a * math.log(z) - math.lgamma(a))

def _upper_gamma_cf(a: float, z: float) -> float:
    """Regularized upper incomplete gamma Q(a, z) by Lentz continued fraction."""
    b = z + 1.0 - a
    c = 1.0 / _FPMIN
    d = 1.0 / b if b != 0.0 else 1.0 / _FPMIN
    h = d
    for i in range(1, _GAMMA_MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = b + an / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _GAMMA_EPS:
            break
    return math.exp(-z + a * math.log(z) - math.lgamma(a)) * h


def chi2_sf(x: float, df: int) -> float:
    """Upper-tail chi-square probability, absolute error below 1e-10.

    Series expansion below the x = df + 1 switchover, Lentz continued
    fraction above it.
    """
    if df < 1:
        raise ConfigError(f"degrees of freedom must be >= 1, got {df}")
    if x < 0 or not math.isfinite(x):
        raise ConfigError(f"chi-square statistic must be finite and >= 0, got {x}")
    if x == 0.0:
        return 1.0
    a = df / 2.0
    z = x / 2.0
    if x < df + 1.0:
        return 1.0 - _lower_gamma_series(a, z)
    return _upper_gamma_cf(a, z)


# ---------------------------------------------------------------------------
# ROC / AUC

def _check_binary(labels) -> np.ndarray:
    labels = np.asarray(labels)
    if not np.isin(labels, (0, 1)).all():
        raise DataError("labels must be binary 0/1")
    if labels.min() == labels.max():
        raise DataError("both classes must be present")
    return labels


def _midranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(values.size, dtype=np.float64)
    sorted_vals = values[order]
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def roc_auc(scores, labels) -> float:
    """Mann-Whitney AUC with ties half-credited."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = _check_binary(labels)
    if scores.shape != labels.shape:
        raise ConfigError("scores and labels differ in length")
    ranks = _midranks(scores)
    n_pos = int((labels == 1).sum())
    n_neg = labels.size - n_pos
    return float((ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


@dataclass
class RocCurve:
    """Monotone (fpr, tpr) staircase from (0,0) to (1,1) plus its AUC."""

    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray
    auc: float


def roc_curve(scores, labels) -> RocCurve:
    scores = np.asarray(scores, dtype=np.float64)
    labels = _check_binary(labels)
    order = np.argsort(-scores, kind="mergesort")
    s = scores[order]
    y = labels[order]
    distinct = np.flatnonzero(np.diff(s)) if s.size > 1 else np.array([], dtype=int)
    cut = np.concatenate([distinct, [s.size - 1]])
    tp = np.cumsum(y)[cut]
    fp = np.cumsum(1 - y)[cut]
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    fpr = np.concatenate([[0.0], fp / n_neg])
    tpr = np.concatenate([[0.0], tp / n_pos])
    thresholds = np.concatenate([[np.inf], s[cut]])
    return RocCurve(fpr=fpr, tpr=tpr, thresholds=thresholds, auc=roc_auc(scores, labels))


def confusion_at(scores, labels, threshold: float = 0.5) -> dict:
    """Accuracy, sensitivity and specificity at prediction = score >= threshold."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = _check_binary(labels)
    pred = scores >= threshold
    pos = labels == 1
    neg = ~pos
    tp = int((pred & pos).sum())
    tn = int((~pred & neg).sum())
    return {
        "accuracy": (tp + tn) / labels.size,
        "sensitivity": tp / pos.sum(),
        "specificity": tn / neg.sum(),
        "threshold": threshold,
    }


# ---------------------------------------------------------------------------
# matched binary-response tests

def _check_matrix(matrix) -> np.ndarray:
    m = np.asarray(matrix)
    if m.ndim != 2 or m.shape[1] < 2:
        raise ConfigError("correctness matrix must be N cases x k >= 2 responders")
    if not np.isin(m, (0, 1)).all():
        raise DataError("correctness matrix entries must be 0 or 1")
    return m.astype(np.int64)


def cochran_q(matrix) -> tuple[float, float]:
    """Cochran's Q over an N x k correctness matrix and its chi-square p-value.

    Q = (k-1) [k sum(G_j^2) - (sum G_j)^2] / (k sum(L_i) - sum(L_i^2)) with
    G_j the column sums and L_i the row sums; all-constant rows carry no
    information and the statistic is undefined when every row is constant.
    """
    m = _check_matrix(matrix)
    k = m.shape[1]
    g = m.sum(axis=0)
    l = m.sum(axis=1)
    denom = k * l.sum() - (l ** 2).sum()
    if denom == 0:
        raise NumericError("Cochran's Q undefined: every case row is constant")
    q = (k - 1) * (k * (g.astype(np.float64) ** 2).sum() - float(g.sum()) ** 2) / denom
    return float(q), chi2_sf(float(q), k - 1)


def pairwise_posthoc(matrix) -> list[dict]:
    """Pairwise McNemar tests (2-column Cochran's Q) with Bonferroni adjustment.

    A pair with no discordant cases carries no evidence of a difference and
    reports raw p = 1. Adjusted p = min(1, raw * k(k-1)/2).
    """
    m = _check_matrix(matrix)
    k = m.shape[1]
    n_pairs = k * (k - 1) // 2
    out = []
    for i in range(k):
        for j in range(i + 1, k):
            b = int(((m[:, i] == 1) & (m[:, j] == 0)).sum())
            c = int(((m[:, i] == 0) & (m[:, j] == 1)).sum())
            if b + c == 0:
                q, raw = 0.0, 1.0
            else:
                q = (b - c) ** 2 / (b + c)
                raw = chi2_sf(q, 1)
            out.append({
                "pair": (i, j),
                "q": float(q),
                "raw_p": raw,
                "adjusted_p": min(1.0, raw * n_pairs),
            })
    return out


def summarize_folds(aucs) -> tuple[float, float]:
    """Mean and sample standard deviation (n-1 denominator) of fold AUCs.

    Values are sorted before accumulation, so the summary is exactly
    order-invariant; identical values report exactly zero deviation.
    """
    aucs = np.sort(np.asarray(aucs, dtype=np.float64))
    if aucs.size < 2:
        raise ConfigError("need at least 2 folds to summarize")
    if aucs[0] == aucs[-1]:
        return float(aucs[0]), 0.0
    return float(aucs.mean()), float(aucs.std(ddof=1))
