"""Synthetic corpus directories: phantom videos, study manifest, EHR table.

Layout written by build_corpus:
    DIR/videos/<study_id>.evid      one phantom per study and view
    DIR/studies.jsonl               study manifest
    DIR/ehr.csv                     full 158-column table with missingness
    DIR/truth.json                  generator ground truth per study
        {study_id: {probability, contraction, age, label}}

The limited-set columns carry the phantom's informative values (a noisy
ejection-fraction analogue and the exact age) plus uninformative
distractors; the remaining columns are plausible noise with injected
missingness and a few physiologic-limit violations so the cleaning and
imputation stages have real work to do.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import date, timedelta
from pathlib import Path

import numpy as np

from .ehr import schema
from .ehr.dataset import EhrTable, write_ehr_csv
from .video.evid import StudyRecord, write_evid, write_manifest
from .video.phantom import (
    AGE_RANGE, CONTRACTION_RANGE, PhantomParams, death_probability, lvef_like,
    synth_phantom,
)

BASE_DATE = date(2016, 1, 6)


@dataclass
class SynthConfig:
    n: int = 100
    seed: int = 0
    height: int = 54
    width: int = 74
    duration: float = 1.5
    fps: float = 30.0
    noise: float = 0.08
    contraction_jitter: float = 0.05   # beat-to-beat readout noise in the videos
    views: tuple = ("pl deep",)
    censor_frac: float = 0.0        # alive patients lost before 12 months
    multi_study_frac: float = 0.0   # patients contributing a second study
    missing_frac: float = 0.15      # missingness among non-core columns


def _noise_columns(rng, n, var: schema.Variable):
    """Plausible values inside the physiologic range with a few violations."""
    if var.limits is None:
        return rng.standard_normal(n)
    lo, hi = var.limits
    mid = 0.5 * (lo + hi)
    spread = (hi - lo) / 8.0
    vals = np.clip(rng.normal(mid, spread, n), lo, hi)
    bad = rng.random(n) < 0.01
    vals[bad] = hi + (hi - lo) * rng.uniform(0.5, 2.0, int(bad.sum()))
    return vals


def build_corpus(out_dir, config: SynthConfig) -> Path:
    out_dir = Path(out_dir)
    videos_dir = out_dir / "videos"
    videos_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng([config.seed, 0xC0])
    draws = np.random.default_rng([config.seed, 1])
    records = []
    truth = {}
    ehr_rows = []
    pids, sids, dates = [], [], []
    video_seed = np.random.SeedSequence([config.seed, 2]).generate_state(
        config.n * (len(config.views) + 1) * 2, dtype=np.uint32)
    seed_i = 0

    names = schema.FULL_NAMES
    col_idx = {n: j for j, n in enumerate(names)}
    n_studies = 0
    limited_distractors = [n for n in schema.LIMITED_SET
                           if n not in ("age", "lvef", "diastolic_function")]

    for i in range(config.n):
        contraction = float(draws.uniform(*CONTRACTION_RANGE))
        age = float(draws.uniform(*AGE_RANGE))
        p = death_probability(contraction, age)
        label = int(draws.random() < p)
        pid = f"p{i:05d}"
        study_date = BASE_DATE + timedelta(days=int(draws.integers(0, 365)))
        if label:
            death = study_date + timedelta(days=int(draws.integers(10, 361)))
            last_enc = death
        else:
            death = None
            if draws.random() < config.censor_frac:
                last_enc = study_date + timedelta(days=int(draws.integers(30, 300)))
            else:
                last_enc = study_date + timedelta(days=int(draws.integers(370, 900)))

        n_visits = 2 if draws.random() < config.multi_study_frac else 1
        for visit in range(n_visits):
            sid = f"s{n_studies:05d}"
            n_studies += 1
            vdate = study_date + timedelta(days=30 * visit)
            videos = []
            sample = None
            for view in config.views:
                params = PhantomParams(
                    contraction=contraction, age=age, noise=config.noise,
                    fps=config.fps, duration=config.duration,
                    height=config.height, width=config.width,
                    contraction_jitter=config.contraction_jitter)
                sample = synth_phantom(params, int(video_seed[seed_i]))
                seed_i += 1
                path = f"videos/{sid}_{view.replace(' ', '-')}.evid"
                sample.video.view_tag = view
                write_evid(out_dir / path, sample.video)
                videos.append({"view_tag": view, "path": path})
            records.append(StudyRecord(
                patient_id=pid, study_id=sid, study_date=vdate.isoformat(),
                videos=videos, death_date=None if death is None else death.isoformat(),
                last_encounter_date=last_enc.isoformat()))
            truth[sid] = {"probability": sample.probability,
                          "contraction": contraction, "age": age,
                          "label": label}

            row = np.full(len(names), np.nan)
            row[col_idx["age"]] = age
            row[col_idx["lvef"]] = float(np.clip(
                lvef_like(contraction) + 4.0 * rng.standard_normal(), 1.0, 100.0))
            for name in limited_distractors:
                var = schema.get_variable(name)
                lo, hi = var.limits
                row[col_idx[name]] = float(np.clip(
                    rng.normal(0.5 * (lo + hi), (hi - lo) / 8.0), lo, hi))
            row[col_idx["sex"]] = float(rng.integers(0, 2))
            row[col_idx["smoking_status"]] = float(rng.integers(0, 2))
            dia_pool = (-1, -1, -1, 0, 1, 2, 3)
            if rng.random() < 0.25:
                pass  # leave diastolic missing for the imputer
            else:
                row[col_idx["diastolic_function"]] = float(
                    dia_pool[int(rng.integers(len(dia_pool)))])
            for name in names:
                var = schema.get_variable(name)
                j = col_idx[name]
                if not np.isnan(row[j]):
                    continue
                if var.kind == schema.KIND_BINARY:
                    if var.var_class == schema.CLASS_DIAGNOSIS:
                        row[j] = float(rng.random() < 0.08)
                    else:
                        row[j] = float(rng.integers(0, 2))
                elif var.kind == schema.KIND_SEVERITY:
                    if rng.random() >= 0.20:
                        row[j] = float(rng.choice([0, 0, 0, 1, 2, 3]))
                elif var.kind == schema.KIND_CONTINUOUS:
                    if rng.random() >= config.missing_frac:
                        row[j] = float(_noise_columns(rng, 1, var)[0])
            ehr_rows.append(row)
            pids.append(pid)
            sids.append(sid)
            dates.append(vdate.isoformat())

    write_manifest(out_dir / "studies.jsonl", records)
    matrix = np.array(ehr_rows)
    # the grade imputer trains one classifier per class in {-1, 1, 2, 3};
    # guarantee every class is observed even in tiny corpora
    dia = col_idx["diastolic_function"]
    observed_grades = set(matrix[~np.isnan(matrix[:, dia]), dia].astype(int))
    needed = [g for g in (-1, 1, 2, 3) if g not in observed_grades]
    for k, grade in enumerate(needed):
        if k < matrix.shape[0]:
            matrix[k, dia] = grade
    table = EhrTable(patient_ids=pids, study_ids=sids, study_dates=dates,
                     matrix=matrix)
    write_ehr_csv(out_dir / "ehr.csv", table)
    with open(out_dir / "truth.json", "w", encoding="utf-8") as fh:
        json.dump(truth, fh, sort_keys=True, indent=2)
    return out_dir
