"""Reader-study state: case sets, reviewer tokens, sessions, responses.

Responses append to a JSON-lines file and are fsynced before the caller is
acknowledged, so an acknowledged response survives a crash or restart.
Session order is a deterministic per-reviewer shuffle; the cursor is simply
how many responses that reviewer has stored.
"""
from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ConfigError, DataError
from ..ehr import schema

CHOICES = ("Alive", "Dead")


@dataclass
class SurveyCase:
    case_id: str
    video_path: str
    annotated_path: str | None
    ehr: dict                      # limited-set variable name -> value
    truth: int                     # hidden until the report
    machine_score: float           # hidden until the report

    def blinded_payload(self) -> dict:
        """Everything a reviewer may see; truth and machine score excluded."""
        rows = []
        for name in schema.LIMITED_SET:
            var = schema.get_variable(name)
            rows.append({"name": name, "value": self.ehr.get(name),
                         "units": var.units})
        return {"case_id": self.case_id, "ehr": rows}


@dataclass
class CaseSet:
    case_set_id: str
    cases: list[SurveyCase]
    base_dir: Path

    def __post_init__(self):
        ids = [c.case_id for c in self.cases]
        if len(set(ids)) != len(ids):
            raise DataError("duplicate case ids in case set")

    def by_id(self, case_id: str) -> SurveyCase:
        for c in self.cases:
            if c.case_id == case_id:
                return c
        raise DataError(f"unknown case {case_id!r}")


def load_case_set(path, allow_unbalanced: bool = False) -> CaseSet:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    cases = []
    for raw in obj.get("cases", []):
        cases.append(SurveyCase(
            case_id=str(raw["case_id"]),
            video_path=raw["video"],
            annotated_path=raw.get("annotated"),
            ehr=raw["ehr"],
            truth=int(raw["truth"]),
            machine_score=float(raw["machine_score"]),
        ))
    if not cases:
        raise DataError(f"{path}: case set is empty")
    n_dead = sum(c.truth == 1 for c in cases)
    if not allow_unbalanced and n_dead * 2 != len(cases):
        raise DataError(
            f"{path}: case set is unbalanced ({n_dead} dead of {len(cases)}); "
            "pass allow_unbalanced to override")
    return CaseSet(case_set_id=str(obj.get("case_set_id", path.stem)),
                   cases=cases, base_dir=path.parent)


@dataclass
class TokenTable:
    tokens: dict                   # token -> {"reviewer_id", "role"}

    def authenticate(self, token: str | None) -> dict:
        if not token or token not in self.tokens:
            raise PermissionError("unknown or missing bearer token")
        return self.tokens[token]

    def reviewer_ids(self) -> list[str]:
        return sorted({v["reviewer_id"] for v in self.tokens.values()
                       if v.get("role", "reviewer") == "reviewer"})


def load_tokens(path) -> TokenTable:
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    tokens = obj.get("tokens")
    if not tokens:
        raise DataError(f"{path}: no tokens defined")
    return TokenTable(tokens=tokens)


def session_order(case_set_id: str, reviewer_id: str, n_cases: int) -> np.ndarray:
    """Deterministic per-reviewer case order (stable across restarts)."""
    digest = hashlib.sha256(f"{case_set_id}\x00{reviewer_id}".encode()).digest()
    seed = int.from_bytes(digest[:8], "little")
    return np.random.default_rng(seed).permutation(n_cases)


class ResponseStore:
    """Append-only JSONL response log with at-most-one (reviewer, case) row."""

    def __init__(self, path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._by_reviewer: dict[str, list[dict]] = {}
        self._seen: set[tuple[str, str]] = set()
        if self.path.exists():
            with open(self.path, encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    rec = json.loads(line)
                    self._remember(rec)

    def _remember(self, rec: dict) -> None:
        key = (rec["reviewer_id"], rec["case_id"])
        if key in self._seen:
            raise DataError(f"duplicate response on disk for {key}")
        self._seen.add(key)
        self._by_reviewer.setdefault(rec["reviewer_id"], []).append(rec)

    def count(self, reviewer_id: str) -> int:
        return len(self._by_reviewer.get(reviewer_id, []))

    def responses(self, reviewer_id: str) -> list[dict]:
        return list(self._by_reviewer.get(reviewer_id, []))

    def has(self, reviewer_id: str, case_id: str) -> bool:
        return (reviewer_id, case_id) in self._seen

    def append(self, reviewer_id: str, case_id: str, choice: str) -> dict:
        if choice not in CHOICES:
            raise ConfigError(f"choice must be one of {CHOICES}")
        rec = {"reviewer_id": reviewer_id, "case_id": case_id,
               "choice": choice, "timestamp": time.time()}
        with self._lock:
            if (reviewer_id, case_id) in self._seen:
                raise DataError(f"duplicate response for case {case_id}")
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
                fh.flush()
                os.fsync(fh.fileno())
            self._remember(rec)
        return rec


@dataclass
class Session:
    """A reviewer's fixed case order plus a monotone cursor."""

    reviewer_id: str
    case_set: CaseSet
    store: ResponseStore
    order: np.ndarray = field(init=False)

    def __post_init__(self):
        self.order = session_order(self.case_set.case_set_id, self.reviewer_id,
                                   len(self.case_set.cases))

    @property
    def total(self) -> int:
        return len(self.case_set.cases)

    @property
    def cursor(self) -> int:
        return self.store.count(self.reviewer_id)

    @property
    def complete(self) -> bool:
        return self.cursor >= self.total

    def current_case(self) -> SurveyCase:
        if self.complete:
            raise StopIteration("session complete")
        return self.case_set.cases[int(self.order[self.cursor])]

    def record(self, case_id: str, choice: str) -> dict:
        if self.complete:
            raise StopIteration("session complete")
        current = self.current_case()
        if self.store.has(self.reviewer_id, case_id):
            raise DataError(f"duplicate response for case {case_id}")
        if case_id != current.case_id:
            raise ConfigError(
                f"out-of-order response: expected case {current.case_id}, got {case_id}")
        return self.store.append(self.reviewer_id, case_id, choice)
