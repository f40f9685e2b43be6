"""EVID grayscale/color video container and the study manifest format.

EVID layout (bit-exact): magic b"EVID", u8 version=1, u16le height,
u16le width, u16le frame count, f32le fps, u8 channels, then
frames*height*width*channels raw bytes.

Study manifests are JSON lines, one study per line:
{patient_id, study_id, study_date, videos: [{view_tag, path}],
 death_date|null, last_encounter_date}.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import DataError

EVID_MAGIC = b"EVID"
EVID_VERSION = 1
_HEADER = struct.Struct("<4sBHHHfB")


@dataclass
class RawVideo:
    """Unsigned 8-bit frame stack with frame rate, view tag, and provenance."""

    frames: np.ndarray            # (T, H, W) or (T, H, W, C) uint8
    fps: float
    view_tag: str = ""
    acquisition_id: str = ""
    provenance: tuple = field(default_factory=tuple)

    def __post_init__(self):
        self.frames = np.asarray(self.frames)
        if self.frames.dtype != np.uint8:
            raise DataError("video frames must be uint8")
        if self.frames.ndim not in (3, 4):
            raise DataError(f"video frames must be (T,H,W[,C]), got {self.frames.shape}")
        if self.frames.shape[0] < 1:
            raise DataError("video needs at least one frame")
        if self.fps <= 0:
            raise DataError(f"fps must be positive, got {self.fps}")

    @property
    def channels(self) -> int:
        return 1 if self.frames.ndim == 3 else self.frames.shape[3]

    @property
    def duration(self) -> float:
        """Seconds spanned by the frame timestamps: (T - 1) / fps."""
        return (self.frames.shape[0] - 1) / self.fps

    def derive(self, frames: np.ndarray, step: str, fps: float | None = None) -> "RawVideo":
        return RawVideo(
            frames=frames,
            fps=self.fps if fps is None else fps,
            view_tag=self.view_tag,
            acquisition_id=self.acquisition_id,
            provenance=self.provenance + (step,),
        )


def write_evid(path, video: RawVideo) -> None:
    frames = video.frames
    t, h, w = frames.shape[:3]
    c = video.channels
    if max(t, h, w) > 0xFFFF:
        raise DataError("dimension exceeds the u16 container limit")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(EVID_MAGIC, EVID_VERSION, h, w, t, float(video.fps), c))
        fh.write(np.ascontiguousarray(frames).tobytes())


def read_evid_header(path) -> dict:
    """Container metadata without the payload."""
    with open(path, "rb") as fh:
        raw = fh.read(_HEADER.size)
    if len(raw) < _HEADER.size:
        raise DataError(f"{path}: truncated EVID header")
    magic, version, h, w, t, fps, c = _HEADER.unpack(raw)
    if magic != EVID_MAGIC or version != EVID_VERSION:
        raise DataError(f"{path}: not a readable EVID file")
    return {"height": h, "width": w, "frames": t, "fps": fps, "channels": c}


def read_evid(path, view_tag: str = "", acquisition_id: str = "") -> RawVideo:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise DataError(f"{path}: truncated EVID header")
    magic, version, h, w, t, fps, c = _HEADER.unpack_from(raw)
    if magic != EVID_MAGIC:
        raise DataError(f"{path}: bad magic {magic!r}")
    if version != EVID_VERSION:
        raise DataError(f"{path}: unsupported EVID version {version}")
    body = raw[_HEADER.size:]
    expect = t * h * w * c
    if len(body) != expect:
        raise DataError(f"{path}: payload is {len(body)} bytes, header implies {expect}")
    frames = np.frombuffer(body, dtype=np.uint8)
    shape = (t, h, w) if c == 1 else (t, h, w, c)
    return RawVideo(frames=frames.reshape(shape).copy(), fps=fps,
                    view_tag=view_tag, acquisition_id=acquisition_id or path.stem,
                    provenance=(f"read:{path.name}",))


@dataclass
class StudyRecord:
    """One study: identity, dates, per-view video references, outcome."""

    patient_id: str
    study_id: str
    study_date: str               # ISO yyyy-mm-dd
    videos: list                  # [{"view_tag": ..., "path": ...}]
    death_date: str | None = None
    last_encounter_date: str | None = None

    def to_json(self) -> dict:
        return {
            "patient_id": self.patient_id,
            "study_id": self.study_id,
            "study_date": self.study_date,
            "videos": self.videos,
            "death_date": self.death_date,
            "last_encounter_date": self.last_encounter_date,
        }


def write_manifest(path, records: list[StudyRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_json(), sort_keys=True) + "\n")


def read_manifest(path) -> list[StudyRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{line_no}: bad manifest line: {exc}") from exc
            try:
                records.append(StudyRecord(
                    patient_id=str(obj["patient_id"]),
                    study_id=str(obj["study_id"]),
                    study_date=obj["study_date"],
                    videos=obj["videos"],
                    death_date=obj.get("death_date"),
                    last_encounter_date=obj.get("last_encounter_date"),
                ))
            except KeyError as exc:
                raise DataError(f"{path}:{line_no}: manifest line missing {exc}") from exc
    return records
