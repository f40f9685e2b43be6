"""Builds a balanced 10-case reader-study fixture for the frontend e2e test.

Writes into the directory given as argv[1]:
    cases.json, tokens.json, videos/*.evid, scores.csv (for the offline
    comparison), truth.json (test-side bookkeeping; never served).
"""
import csv
import json
import sys
from pathlib import Path

import numpy as np

from prognoscope.video.evid import RawVideo, write_evid
from prognoscope.video.phantom import PhantomParams, synth_phantom
from prognoscope.ehr import schema

N_CASES = 10


def main(out_dir: str) -> None:
    base = Path(out_dir)
    (base / "videos").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(99)
    cases = []
    score_rows = []
    truth = {}
    for i in range(N_CASES):
        label = i % 2
        contraction = 0.12 if label else 0.5
        sample = synth_phantom(
            PhantomParams(contraction=contraction, age=55.0 + i, duration=1.1,
                          height=40, width=56), seed=500 + i)
        case_id = f"c{i:03d}"
        path = f"videos/{case_id}.evid"
        write_evid(base / path, sample.video)
        machine_right = rng.random() < 0.8
        machine_score = (0.75 if label else 0.25) if machine_right else \
                        (0.25 if label else 0.75)
        ehr = {}
        for j, name in enumerate(schema.LIMITED_SET):
            ehr[name] = round(float(sample.ehr[j % len(sample.ehr)]), 2)
        ehr["age"] = 55.0 + i
        cases.append({
            "case_id": case_id,
            "video": path,
            "ehr": ehr,
            "truth": label,
            "machine_score": machine_score,
        })
        score_rows.append((case_id, machine_score, label))
        truth[case_id] = label

    (base / "cases.json").write_text(json.dumps(
        {"case_set_id": "e2e", "cases": cases}, indent=2))
    (base / "tokens.json").write_text(json.dumps({
        "tokens": {
            "tok-reviewer": {"reviewer_id": "r1", "role": "reviewer"},
            "tok-admin": {"reviewer_id": "admin", "role": "admin"},
        }
    }))
    with open(base / "scores.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["case_id", "score", "label"])
        for row in score_rows:
            w.writerow(row)
    (base / "truth.json").write_text(json.dumps(truth))
    print(str(base))


if __name__ == "__main__":
    main(sys.argv[1])
