"""Tabular preprocessing: outlier cleaning, temporal interpolation,
missingness filtering, chained-equations imputation, diastolic-grade
handling, external-measurement joins, outcome labels, and cohort pruning.

Stage order is fixed: clean -> time-interpolate -> missingness filter ->
chained impute -> diastolic impute -> join externals -> label. Observed
values pass through unmodified unless the cleaning stage removes them.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from datetime import date, datetime

import numpy as np

from ..errors import ConfigError, DataError
from . import schema

MISSINGNESS_THRESHOLD = 0.10     # keep columns with MORE than this observed
MICE_CYCLES = 10
MICE_RIDGE = 1e-6
JOIN_WINDOW_DAYS = 183           # six months
HORIZONS_DAYS = {"3m": 91, "6m": 182, "9m": 274, "12m": 365}

EXCLUDED = -1                    # label sentinel for insufficient follow-up


def _as_date(value) -> date:
    if isinstance(value, date):
        return value
    return datetime.strptime(str(value), "%Y-%m-%d").date()


# ---------------------------------------------------------------------------
# cleaning

def clean_outliers(values, variable: schema.Variable):
    """Physiologic-limit cleaning, with a double-rule fence fallback.

    Values outside the variable's limits become missing. Without limits, a
    value is removed only when it violates BOTH the mean +- 3 SD rule and
    the quartile +- 3 IQR fence. Returns (cleaned, n_removed).
    """
    if variable.kind != schema.KIND_CONTINUOUS:
        raise ConfigError(f"{variable.name}: outlier cleaning applies to continuous variables")
    vals = np.array(values, dtype=np.float64)
    observed = ~np.isnan(vals)
    if not observed.any():
        return vals, 0
    removed = np.zeros_like(observed)
    if variable.limits is not None:
        lo, hi = variable.limits
        removed = observed & ((vals < lo) | (vals > hi))
    else:
        obs = vals[observed]
        mean = obs.mean()
        sd = obs.std(ddof=1) if obs.size > 1 else 0.0
        q1, q3 = np.percentile(obs, [25.0, 75.0])
        iqr = q3 - q1
        beyond_sd = (vals < mean - 3.0 * sd) | (vals > mean + 3.0 * sd)
        beyond_iqr = (vals < q1 - 3.0 * iqr) | (vals > q3 + 3.0 * iqr)
        removed = observed & beyond_sd & beyond_iqr
    vals[removed] = np.nan
    return vals, int(removed.sum())


def time_interpolate(days, values):
    """Linear-in-time fill of interior gaps along one patient's timeline.

    `days` are study times in ascending order; leading/trailing missing
    values stay missing (no extrapolation).
    """
    days = np.asarray(days, dtype=np.float64)
    vals = np.array(values, dtype=np.float64)
    if days.size != vals.size:
        raise ConfigError("timeline and values differ in length")
    if np.any(np.diff(days) < 0):
        raise DataError("studies must be sorted by date")
    obs = ~np.isnan(vals)
    if obs.sum() < 2:
        return vals
    obs_idx = np.flatnonzero(obs)
    first, last = obs_idx[0], obs_idx[-1]
    inner = np.arange(first, last + 1)
    vals[inner] = np.interp(days[inner], days[obs_idx], vals[obs_idx])
    return vals


def filter_missingness(matrix, names, threshold: float = MISSINGNESS_THRESHOLD):
    """Column names whose non-missing fraction strictly exceeds `threshold`."""
    matrix = np.asarray(matrix, dtype=np.float64)
    keep = []
    for j, name in enumerate(names):
        frac = float((~np.isnan(matrix[:, j])).mean())
        if frac > threshold:
            keep.append(name)
    return keep


# ---------------------------------------------------------------------------
# chained-equations imputation

def chained_impute(matrix, cycles: int = MICE_CYCLES, ridge: float = MICE_RIDGE):
    """Single-dataset chained-equations completion of a continuous matrix.

    Missing cells start at column means; each cycle regresses every
    incomplete column on all the others (ridge-stabilized least squares
    over originally-observed rows) and rewrites only the originally
    missing cells. Observed cells are never modified.
    """
    x = np.array(matrix, dtype=np.float64)
    missing = np.isnan(x)
    if not missing.any():
        return x
    n, p = x.shape
    observed_counts = (~missing).sum(axis=0)
    if (observed_counts < 2).any():
        bad = int(np.argmin(observed_counts))
        raise DataError(f"column {bad} has fewer than 2 observed values")
    col_means = np.nanmean(x, axis=0)
    x[missing] = np.take(col_means, np.where(missing)[1])
    incomplete = np.flatnonzero(missing.any(axis=0))
    for _ in range(cycles):
        for j in incomplete:
            rows = ~missing[:, j]
            others = np.delete(np.arange(p), j)
            a = np.column_stack([np.ones(int(rows.sum())), x[np.ix_(rows, others)]])
            b = x[rows, j]
            ata = a.T @ a
            ata[np.diag_indices_from(ata)] += ridge
            coef = np.linalg.solve(ata, a.T @ b)
            fill_rows = missing[:, j]
            af = np.column_stack([np.ones(int(fill_rows.sum())), x[np.ix_(fill_rows, others)]])
            x[fill_rows, j] = af @ coef
    return x


# ---------------------------------------------------------------------------
# diastolic function

_GRADE_WORDS = {"i": 1, "ii": 2, "iii": 3, "1": 1, "2": 2, "3": 3}


def encode_diastolic(report) -> int | None:
    """Ordinal code: -1 normal, 0 ungraded dysfunction, 1..3 graded."""
    if report is None:
        return None
    if isinstance(report, (int, float)) and not isinstance(report, bool):
        if isinstance(report, float) and math.isnan(report):
            return None
        code = int(report)
        return code if code in (-1, 0, 1, 2, 3) else None
    text = str(report).strip().lower()
    if not text:
        return None
    if "normal" in text and "abnormal" not in text:
        return -1
    m = re.search(r"grade\s+(i{1,3}|[123])\b", text)
    if m:
        return _GRADE_WORDS[m.group(1)]
    if "dysfunction" in text or "abnormal" in text:
        return 0
    return None


class _LogisticOvA:
    """One-vs-all logistic regressors fitted by ridge-stabilized IRLS."""

    def __init__(self, classes, l2: float = 1e-4, iterations: int = 30):
        self.classes = list(classes)
        self.l2 = l2
        self.iterations = iterations
        self.coefs = {}
        self._mu = None
        self._sd = None

    def _design(self, x):
        z = (x - self._mu) / self._sd
        return np.column_stack([np.ones(len(z)), z])

    def fit(self, x, y):
        x = np.asarray(x, dtype=np.float64)
        self._mu = x.mean(axis=0)
        self._sd = np.where(x.std(axis=0) > 0, x.std(axis=0), 1.0)
        a = self._design(x)
        for cls in self.classes:
            target = (np.asarray(y) == cls).astype(np.float64)
            if target.min() == target.max():
                raise DataError(f"diastolic class {cls} absent from training rows")
            w = np.zeros(a.shape[1])
            for _ in range(self.iterations):
                z = a @ w
                p = 1.0 / (1.0 + np.exp(-np.clip(z, -30, 30)))
                r = np.maximum(p * (1.0 - p), 1e-6)
                h = (a * r[:, None]).T @ a
                h[np.diag_indices_from(h)] += self.l2
                g = a.T @ (target - p) - self.l2 * w
                step = np.linalg.solve(h, g)
                w = w + step
                if np.max(np.abs(step)) < 1e-10:
                    break
            self.coefs[cls] = w
        return self

    def scores(self, x):
        a = self._design(np.asarray(x, dtype=np.float64))
        return np.column_stack([a @ self.coefs[c] for c in self.classes])

    def predict(self, x):
        s = self.scores(x)
        return np.array([self.classes[i] for i in np.argmax(s, axis=1)])


def impute_diastolic(features, grades, l2: float = 1e-4):
    """Fill missing diastolic grades by one-vs-all logistic regression.

    Training rows are those with a known grade in {-1, 1, 2, 3}; ungraded
    dysfunction (0) is a real observation and is neither used for training
    nor ever predicted. Returns the completed grade vector.
    """
    features = np.asarray(features, dtype=np.float64)
    grades = np.array([np.nan if g is None else float(g) for g in grades])
    out = grades.copy()
    missing = np.isnan(grades)
    if not missing.any():
        return out
    train = ~missing & np.isin(grades, (-1.0, 1.0, 2.0, 3.0))
    model = _LogisticOvA(classes=(-1, 1, 2, 3), l2=l2).fit(features[train], grades[train])
    out[missing] = model.predict(features[missing])
    return out


# ---------------------------------------------------------------------------
# joins, labels, pruning

def nearest_join(series, study_date, window_days: int = JOIN_WINDOW_DAYS):
    """Closest external measurement by absolute day distance within the
    window (inclusive); ties break toward the earlier measurement."""
    study = _as_date(study_date)
    best = None
    for when, value in series:
        delta = (_as_date(when) - study).days
        if abs(delta) > window_days:
            continue
        key = (abs(delta), delta)   # ties: earlier (negative delta) wins
        if best is None or key < best[0]:
            best = (key, value)
    return None if best is None else best[1]


def derive_label(study_date, death_date, last_encounter_date, horizon_days: int) -> int:
    """1 = dead within horizon, 0 = alive with enough follow-up,
    EXCLUDED = alive but lost before the horizon."""
    study = _as_date(study_date)
    if death_date is not None:
        survival = (_as_date(death_date) - study).days
        if survival < 0:
            raise DataError("death date precedes study date")
        return 1 if survival <= horizon_days else 0
    if last_encounter_date is None:
        raise DataError("need a death date or a last-encounter date")
    follow_up = (_as_date(last_encounter_date) - study).days
    if follow_up < 0:
        raise DataError("last encounter precedes study date")
    return 0 if follow_up >= horizon_days else EXCLUDED


def horizon_days(horizon) -> int:
    if isinstance(horizon, int):
        return horizon
    try:
        return HORIZONS_DAYS[str(horizon).lower()]
    except KeyError:
        raise ConfigError(
            f"unknown horizon {horizon!r}; use one of {sorted(HORIZONS_DAYS)}") from None


@dataclass
class PrunedCohort:
    working: list            # records available for cross-validation
    holdout: list            # the frozen comparison set, balanced
    labels_working: np.ndarray
    labels_holdout: np.ndarray


def prune_and_holdout(records, labels, patient_ids, seed: int,
                      holdout_per_class: int = 300) -> PrunedCohort:
    """One study per patient (seeded uniform draw), then a balanced holdout.

    `records` is any sequence; `labels` must already be horizon labels with
    EXCLUDED entries allowed (they are dropped). No patient appears in both
    the working and holdout sets.
    """
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    by_patient: dict = {}
    for i, pid in enumerate(patient_ids):
        if labels[i] == EXCLUDED:
            continue
        by_patient.setdefault(pid, []).append(i)
    chosen = []
    for pid in sorted(by_patient):
        studies = by_patient[pid]
        chosen.append(studies[int(rng.integers(len(studies)))])
    chosen = np.array(sorted(chosen), dtype=np.int64)
    chosen_labels = labels[chosen]
    pos = chosen[chosen_labels == 1]
    neg = chosen[chosen_labels == 0]
    if pos.size < holdout_per_class or neg.size < holdout_per_class:
        raise DataError(
            f"need {holdout_per_class} per class for the holdout, have "
            f"{pos.size} dead / {neg.size} alive")
    hold = np.sort(np.concatenate([
        rng.permutation(pos)[:holdout_per_class],
        rng.permutation(neg)[:holdout_per_class]]))
    work = np.setdiff1d(chosen, hold)
    return PrunedCohort(
        working=[records[i] for i in work],
        holdout=[records[i] for i in hold],
        labels_working=labels[work],
        labels_holdout=labels[hold],
    )
