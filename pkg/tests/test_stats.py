import math

import numpy as np
import pytest
import scipy.stats
from hypothesis import given, strategies as st

from prognoscope.errors import ConfigError, DataError, NumericError
from prognoscope.stats import (
    chi2_sf, cochran_q, confusion_at, pairwise_posthoc, roc_auc, roc_curve,
    summarize_folds,
)

# ---------------------------------------------------------------------------
# AUC


def test_auc_perfect_separation():
    assert roc_auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0


def test_auc_four_point_example():
    assert roc_auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == pytest.approx(0.75, abs=1e-12)


def test_auc_all_ties_half():
    assert roc_auc([0.5] * 10, [0, 1] * 5) == pytest.approx(0.5, abs=1e-12)


def test_auc_single_class_rejected():
    with pytest.raises(DataError):
        roc_auc([0.1, 0.9], [1, 1])


def _auc_pair_count(scores, labels):
    scores = np.asarray(scores)
    labels = np.asarray(labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    wins = sum((p > n) + 0.5 * (p == n) for p in pos for n in neg)
    return wins / (len(pos) * len(neg))


def test_auc_matches_exhaustive_pair_counting(rng):
    for _ in range(30):
        n = int(rng.integers(6, 40))
        labels = np.concatenate([[0, 1], rng.integers(0, 2, n)])
        scores = np.round(rng.random(n + 2), 2)   # force ties
        assert roc_auc(scores, labels) == pytest.approx(
            _auc_pair_count(scores, labels), abs=1e-12)


@given(st.lists(st.floats(0, 1, width=32), min_size=4, max_size=40))
def test_auc_monotone_transform_invariant(raw):
    rng = np.random.default_rng(len(raw))
    labels = np.array([0, 1] + list(rng.integers(0, 2, len(raw) - 2)))
    # quantize so the nonlinear map cannot merge distinct scores in float64
    scores = np.round(np.asarray(raw, dtype=np.float64), 2)
    a1 = roc_auc(scores, labels)
    a2 = roc_auc(np.exp(3.0 * scores) + 5.0, labels)   # strictly monotone map
    assert a1 == pytest.approx(a2, abs=1e-12)


def test_auc_complement_identity(rng):
    labels = np.array([0, 1] * 20)
    scores = rng.random(40)
    assert roc_auc(scores, labels) + roc_auc(-scores, labels) == pytest.approx(1.0, abs=1e-12)


def test_roc_curve_monotone_and_trapezoid_equals_auc(rng):
    for _ in range(20):
        labels = np.concatenate([[0, 1], rng.integers(0, 2, 30)])
        scores = np.round(rng.random(32), 2)
        curve = roc_curve(scores, labels)
        assert curve.fpr[0] == 0.0 and curve.tpr[0] == 0.0
        assert curve.fpr[-1] == 1.0 and curve.tpr[-1] == 1.0
        assert np.all(np.diff(curve.fpr) >= 0) and np.all(np.diff(curve.tpr) >= 0)
        trap = np.trapezoid(curve.tpr, curve.fpr)
        assert trap == pytest.approx(curve.auc, abs=1e-12)


# ---------------------------------------------------------------------------
# threshold metrics


def test_confusion_reader_study_anchor_rates():
    # 300/300 with sensitivity 0.16 and specificity 0.97 -> accuracy 0.565
    labels = np.array([1] * 300 + [0] * 300)
    scores = np.concatenate([
        np.full(48, 0.9), np.full(252, 0.1),      # positives: 48 hit
        np.full(9, 0.9), np.full(291, 0.1),       # negatives: 291 correct
    ])
    m = confusion_at(scores, labels, 0.5)
    assert m["sensitivity"] == pytest.approx(0.16)
    assert m["specificity"] == pytest.approx(0.97)
    assert m["accuracy"] == pytest.approx(0.565)


def test_confusion_balanced_rates_mean_accuracy():
    labels = np.array([1] * 4 + [0] * 4)
    scores = np.array([0.9, 0.9, 0.9, 0.1, 0.1, 0.1, 0.1, 0.9])
    m = confusion_at(scores, labels, 0.5)
    assert m["sensitivity"] == pytest.approx(0.75)
    assert m["specificity"] == pytest.approx(0.75)
    assert m["accuracy"] == pytest.approx(0.75)


def test_confusion_all_correct():
    m = confusion_at([0.9, 0.1], [1, 0], 0.5)
    assert (m["accuracy"], m["sensitivity"], m["specificity"]) == (1.0, 1.0, 1.0)


# ---------------------------------------------------------------------------
# chi-square survival function


def test_chi2_sf_at_zero():
    assert chi2_sf(0.0, 1) == 1.0
    assert chi2_sf(0.0, 7) == 1.0


def test_chi2_sf_df2_closed_form():
    x = 2.0 * math.log(2.0)
    assert chi2_sf(x, 2) == pytest.approx(0.5, abs=1e-10)
    for x in (0.5, 1.0, 3.0, 10.0):
        assert chi2_sf(x, 2) == pytest.approx(math.exp(-x / 2.0), abs=1e-10)


def test_chi2_sf_standard_quantile():
    assert chi2_sf(3.841459, 1) == pytest.approx(0.05, abs=1e-6)


@given(st.floats(1e-6, 80.0), st.integers(1, 30))
def test_chi2_sf_matches_scipy(x, df):
    assert chi2_sf(x, df) == pytest.approx(scipy.stats.chi2.sf(x, df), abs=1e-10)


def test_chi2_sf_domain():
    with pytest.raises(ConfigError):
        chi2_sf(-1.0, 2)
    with pytest.raises(ConfigError):
        chi2_sf(1.0, 0)


# ---------------------------------------------------------------------------
# Cochran's Q


def test_q_statistically_identical_columns():
    # equal column sums with discordant rows: zero numerator, Q = 0, p = 1
    m = np.array([
        [1, 0, 1],
        [0, 1, 0],
        [1, 1, 0],
        [0, 0, 1],
    ])
    assert (m.sum(axis=0) == m.sum(axis=0)[0]).all()
    q, p = cochran_q(m)
    assert q == 0.0 and p == 1.0


def test_q_matches_mcnemar_at_k2(rng):
    for _ in range(100):
        m = rng.integers(0, 2, size=(int(rng.integers(6, 60)), 2))
        b = int(((m[:, 0] == 1) & (m[:, 1] == 0)).sum())
        c = int(((m[:, 0] == 0) & (m[:, 1] == 1)).sum())
        if b + c == 0:
            continue
        q, _ = cochran_q(m)
        assert q == pytest.approx((b - c) ** 2 / (b + c), abs=1e-10)


def test_q_fixed_matrix_formula_oracle():
    m = np.array([
        [1, 0, 0],
        [1, 1, 0],
        [1, 1, 1],
        [0, 1, 0],
        [1, 0, 1],
        [1, 1, 0],
    ])
    k = 3
    g = m.sum(axis=0)
    l = m.sum(axis=1)
    want = (k - 1) * (k * (g ** 2).sum() - g.sum() ** 2) / (k * l.sum() - (l ** 2).sum())
    q, p = cochran_q(m)
    assert q == pytest.approx(want, abs=1e-10)
    assert p == pytest.approx(chi2_sf(want, 2), abs=1e-12)


def test_q_permutation_invariances(rng):
    m = rng.integers(0, 2, size=(30, 4))
    m[0] = [1, 0, 1, 0]
    q0, _ = cochran_q(m)
    q_rows, _ = cochran_q(m[rng.permutation(30)])
    q_cols, _ = cochran_q(m[:, rng.permutation(4)])
    assert q_rows == pytest.approx(q0, abs=1e-12)
    assert q_cols == pytest.approx(q0, abs=1e-12)


def test_q_all_correct_case_is_inert(rng):
    m = rng.integers(0, 2, size=(25, 3))
    m[0] = [1, 0, 1]
    q0, _ = cochran_q(m)
    q1, _ = cochran_q(np.vstack([m, np.ones((1, 3), dtype=int)]))
    assert q1 == pytest.approx(q0, abs=1e-12)


def test_q_undefined_when_rows_constant():
    with pytest.raises(NumericError):
        cochran_q(np.ones((5, 3), dtype=int))


# ---------------------------------------------------------------------------
# pairwise post-hoc


def test_posthoc_count_and_bonferroni(rng):
    m = rng.integers(0, 2, size=(40, 3))
    out = pairwise_posthoc(m)
    assert len(out) == 3
    for rec in out:
        assert rec["adjusted_p"] == pytest.approx(min(1.0, rec["raw_p"] * 3), abs=1e-12)


def test_posthoc_identical_pair():
    col = np.random.default_rng(0).integers(0, 2, 20)
    m = np.column_stack([col, col, 1 - col])
    out = pairwise_posthoc(m)
    first = [r for r in out if r["pair"] == (0, 1)][0]
    assert first["adjusted_p"] == 1.0 and first["raw_p"] == 1.0


def _mcnemar_permutation_midp(col_a, col_b, n_perm=100_000, seed=0):
    """Monte-Carlo McNemar: flip each discordant pair fairly; ties between
    the permuted and observed statistic count half (mid-p), matching the
    continuous chi-square reference."""
    b = int(((col_a == 1) & (col_b == 0)).sum())
    c = int(((col_a == 0) & (col_b == 1)).sum())
    nd = b + c
    t_obs = abs(b - c)
    rng = np.random.default_rng(seed)
    b_star = rng.binomial(nd, 0.5, size=n_perm)
    t_star = np.abs(2 * b_star - nd)
    return float((t_star > t_obs).mean() + 0.5 * (t_star == t_obs).mean())


def test_posthoc_raw_p_matches_permutation_oracle():
    rng = np.random.default_rng(42)
    m = rng.integers(0, 2, size=(50, 3))
    out = pairwise_posthoc(m)
    for rec in out:
        i, j = rec["pair"]
        oracle = _mcnemar_permutation_midp(m[:, i], m[:, j], seed=7)
        assert abs(rec["raw_p"] - oracle) < 0.02


# ---------------------------------------------------------------------------
# fold summaries


def test_summarize_identical():
    mean, sd = summarize_folds([0.8, 0.8, 0.8])
    assert mean == 0.8 and sd == 0.0


def test_summarize_two_folds():
    mean, sd = summarize_folds([0.7, 0.8])
    assert mean == pytest.approx(0.75)
    assert sd == pytest.approx(np.std([0.7, 0.8], ddof=1), abs=1e-12)
    assert sd == pytest.approx(0.0707, abs=5e-4)


def test_summarize_order_invariant(rng):
    aucs = rng.random(6)
    assert summarize_folds(aucs) == summarize_folds(aucs[::-1])


def test_summarize_needs_two():
    with pytest.raises(ConfigError):
        summarize_folds([0.9])
