"""EHR table I/O and the fixed-order completion pipeline.

CSV contract: three bookkeeping columns (patient_id, study_id, study_date)
followed by the 158 schema columns, lower-snake-cased, missing cells empty.
The completion pipeline runs clean -> time-interpolate -> missingness
filter -> chained impute -> diastolic impute -> join externals -> label and
emits the completed table plus a sidecar JSON of per-column statistics.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import DataError
from . import pipeline, schema

ID_COLUMNS = ("patient_id", "study_id", "study_date")


@dataclass
class EhrTable:
    patient_ids: list
    study_ids: list
    study_dates: list
    matrix: np.ndarray              # (n, 158) float64 with NaN for missing
    names: tuple = schema.FULL_NAMES
    stats: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        return self.matrix[:, self.names.index(name)]

    def __len__(self):
        return len(self.study_ids)


def read_ehr_csv(path) -> EhrTable:
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty file")
        expected = list(ID_COLUMNS) + list(schema.FULL_NAMES)
        if header != expected:
            missing = [c for c in expected if c not in header]
            extra = [c for c in header if c not in expected]
            raise DataError(
                f"{path}: header does not match the schema "
                f"(missing {missing[:5]}, unexpected {extra[:5]}, order must match)")
        pids, sids, dates, rows = [], [], [], []
        for line_no, row in enumerate(reader, start=2):
            if len(row) != len(expected):
                raise DataError(f"{path}:{line_no}: expected {len(expected)} cells, got {len(row)}")
            pids.append(row[0])
            sids.append(row[1])
            dates.append(row[2])
            rows.append([float(c) if c.strip() != "" else np.nan for c in row[3:]])
    return EhrTable(patient_ids=pids, study_ids=sids, study_dates=dates,
                    matrix=np.array(rows, dtype=np.float64) if rows else
                    np.empty((0, len(schema.FULL_NAMES))))


def write_ehr_csv(path, table: EhrTable) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(ID_COLUMNS) + list(table.names))
        for i in range(len(table)):
            cells = [table.patient_ids[i], table.study_ids[i], table.study_dates[i]]
            for v in table.matrix[i]:
                cells.append("" if np.isnan(v) else format(float(v), ".10g"))
            writer.writerow(cells)


def _study_day(date_str: str) -> float:
    return float(pipeline._as_date(date_str).toordinal())


def complete_table(table: EhrTable, externals=None,
                   mice_cycles: int = pipeline.MICE_CYCLES) -> EhrTable:
    """Run the full completion pipeline; the result has no missing cells.

    `externals` maps (patient_id, variable) -> [(date, value), ...] series
    joined by nearest date within the six-month window, filling only cells
    the earlier stages left missing.
    """
    x = table.matrix.copy()
    names = table.names
    stats = {name: {} for name in names}
    cont = [i for i, n in enumerate(names) if schema.get_variable(n).kind == schema.KIND_CONTINUOUS]

    # 1. physiologic / double-rule cleaning
    for j in cont:
        cleaned, removed = pipeline.clean_outliers(x[:, j], schema.get_variable(names[j]))
        x[:, j] = cleaned
        stats[names[j]]["removed_by_cleaning"] = removed

    # 2. per-patient temporal interpolation
    order = np.lexsort((np.array([_study_day(d) for d in table.study_dates]),
                        np.array(table.patient_ids, dtype=object)))
    days = np.array([_study_day(d) for d in table.study_dates])
    interpolated = 0
    by_patient: dict = {}
    for idx in order:
        by_patient.setdefault(table.patient_ids[idx], []).append(idx)
    for j in cont:
        before = np.isnan(x[:, j]).sum()
        for rows in by_patient.values():
            rows = np.asarray(rows)
            x[rows, j] = pipeline.time_interpolate(days[rows], x[rows, j])
        filled = before - np.isnan(x[:, j]).sum()
        stats[names[j]]["interpolated"] = int(filled)
        interpolated += filled

    # 3. missingness filter over continuous columns
    retained = set(pipeline.filter_missingness(x[:, cont], [names[j] for j in cont]))
    for j in cont:
        stats[names[j]]["retained"] = names[j] in retained

    # 4. chained-equations completion of the retained continuous block
    ret_idx = [j for j in cont if names[j] in retained]
    if ret_idx:
        block = x[:, ret_idx]
        n_missing = int(np.isnan(block).sum())
        x[:, ret_idx] = pipeline.chained_impute(block, cycles=mice_cycles)
        for j in ret_idx:
            stats[names[j]]["imputed"] = int(np.isnan(table.matrix[:, j]).sum())
        stats["_mice"] = {"cells_filled": n_missing, "cycles": mice_cycles}
    # non-retained continuous columns: mean fill (flagged), zero if never seen
    for j in cont:
        if names[j] in retained:
            continue
        col = x[:, j]
        fill = np.nanmean(col) if (~np.isnan(col)).any() else 0.0
        col[np.isnan(col)] = fill
        stats[names[j]]["fill"] = "column_mean_after_filter"

    # 5. diastolic-grade imputation from the completed continuous features
    dia = names.index("diastolic_function")
    grades = [None if np.isnan(v) else int(v) for v in x[:, dia]]
    if any(g is None for g in grades):
        x[:, dia] = pipeline.impute_diastolic(x[:, ret_idx], grades)
        stats["diastolic_function"]["imputed"] = int(sum(g is None for g in grades))

    # severity scores and diagnosis flags: absence of a report means absent
    for j, name in enumerate(names):
        kind = schema.get_variable(name).kind
        if kind in (schema.KIND_SEVERITY, schema.KIND_BINARY):
            col = x[:, j]
            n_missing = int(np.isnan(col).sum())
            col[np.isnan(col)] = 0.0
            if n_missing:
                stats[name]["defaulted_absent"] = n_missing

    # 6. external series joined into any cell still missing
    if externals:
        joined = 0
        for i in range(len(table)):
            for j, name in enumerate(names):
                if not np.isnan(x[i, j]):
                    continue
                series = externals.get((table.patient_ids[i], name))
                if not series:
                    continue
                value = pipeline.nearest_join(series, table.study_dates[i])
                if value is not None:
                    x[i, j] = value
                    joined += 1
        stats["_externals"] = {"cells_joined": joined}

    nan_left = int(np.isnan(x).sum())
    if nan_left:
        raise DataError(f"completion left {nan_left} missing cells")
    return EhrTable(patient_ids=list(table.patient_ids), study_ids=list(table.study_ids),
                    study_dates=list(table.study_dates), matrix=x, names=names, stats=stats)


def write_sidecar(path, table: EhrTable) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(table.stats, fh, indent=2, sort_keys=True)


def limited_matrix(table: EhrTable) -> np.ndarray:
    """The 10-variable limited set, in its canonical order."""
    cols = [table.names.index(n) for n in schema.LIMITED_SET]
    return table.matrix[:, cols]
