"""HTTP service for the blinded reader study.

Endpoints (bearer-token authenticated):
  GET  /api/session                  session state for the caller's reviewer
  GET  /api/cases/next               blinded payload for the current case
  GET  /api/cases/{id}/video         motion-JPEG frame sequence (?variant=raw|annotated)
  POST /api/responses                {case_id, choice} -> durable acknowledgment
  GET  /api/report                   admin-only; refused until all reviewers finish

No payload served before completion ever contains the hidden truth label or
machine score; the report is byte-identical across repeated calls.
"""
from __future__ import annotations

import io
import json
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Header, Request, Response
from fastapi.responses import JSONResponse, StreamingResponse
from fastapi.staticfiles import StaticFiles
from PIL import Image

from ..errors import ConfigError, DataError, NumericError
from ..stats import cochran_q, confusion_at, pairwise_posthoc, roc_curve
from ..video.evid import RawVideo, read_evid, read_evid_header
from .store import (
    CHOICES, CaseSet, ResponseStore, Session, load_case_set, load_tokens,
)

MACHINE_THRESHOLD = 0.5
JPEG_QUALITY = 85
MAX_LOOPS = 100


def annotate_video(video: RawVideo) -> RawVideo:
    """Synthetic measurement-overlay variant: calibration ruler along the
    top, depth ticks down the right edge, and a frame-synced sweep marker."""
    frames = video.frames.copy()
    t, h, w = frames.shape[:3]
    band = min(10, h // 6)
    for i in range(t):
        fr = frames[i]
        fr[:band, :] = np.minimum(fr[:band, :], 40)
        fr[band - 2:band, :] = 220
        for x in range(0, w, max(4, w // 16)):
            fr[:band - 2, x] = 180
        sweep = int(round((i / max(t - 1, 1)) * (w - 1)))
        fr[:band, sweep] = 255
        for y in range(0, h, max(4, h // 12)):
            fr[y, w - 2:] = 200
    return video.derive(frames, "annotate:overlay")


def _encode_jpeg(frame: np.ndarray) -> bytes:
    img = Image.fromarray(frame, mode="L" if frame.ndim == 2 else "RGB")
    buf = io.BytesIO()
    img.save(buf, format="JPEG", quality=JPEG_QUALITY)
    return buf.getvalue()


def mjpeg_parts(video: RawVideo, loops: int):
    for _ in range(loops):
        for i in range(video.frames.shape[0]):
            payload = _encode_jpeg(video.frames[i])
            yield (b"--frame\r\nContent-Type: image/jpeg\r\n"
                   + f"Content-Length: {len(payload)}\r\n\r\n".encode()
                   + payload + b"\r\n")
    yield b"--frame--\r\n"


def build_report(case_set: CaseSet, store: ResponseStore, reviewer_ids) -> dict:
    """Machine-vs-reader comparison over the completed case set."""
    cases = sorted(case_set.cases, key=lambda c: c.case_id)
    truth = np.array([c.truth for c in cases])
    scores = np.array([c.machine_score for c in cases])
    columns = []
    responders = []
    for rid in reviewer_ids:
        by_case = {r["case_id"]: r["choice"] for r in store.responses(rid)}
        missing = [c.case_id for c in cases if c.case_id not in by_case]
        if missing:
            raise DataError(f"reviewer {rid} has {len(missing)} unanswered cases")
        pred = np.array([1 if by_case[c.case_id] == "Dead" else 0 for c in cases])
        columns.append((pred == truth).astype(int))
        pos = truth == 1
        responders.append({
            "id": rid,
            "kind": "reviewer",
            "accuracy": float((pred == truth).mean()),
            "sensitivity": float((pred[pos] == 1).mean()),
            "specificity": float((pred[~pos] == 0).mean()),
        })
    machine_pred = (scores >= MACHINE_THRESHOLD).astype(int)
    columns.append((machine_pred == truth).astype(int))
    machine_metrics = confusion_at(scores, truth, MACHINE_THRESHOLD)
    responders.append({
        "id": "machine",
        "kind": "machine",
        "accuracy": machine_metrics["accuracy"],
        "sensitivity": machine_metrics["sensitivity"],
        "specificity": machine_metrics["specificity"],
    })
    matrix = np.stack(columns, axis=1)
    names = list(reviewer_ids) + ["machine"]
    q, p = cochran_q(matrix)
    pairwise = []
    for rec in pairwise_posthoc(matrix):
        i, j = rec["pair"]
        pairwise.append({
            "pair": [names[i], names[j]],
            "q": rec["q"],
            "raw_p": rec["raw_p"],
            "adjusted_p": rec["adjusted_p"],
        })
    roc = roc_curve(scores, truth)
    return {
        "case_set_id": case_set.case_set_id,
        "n_cases": len(cases),
        "responders": responders,
        "cochran_q": {"q": q, "p": p},
        "pairwise": pairwise,
        "machine_roc": {
            "fpr": roc.fpr.tolist(),
            "tpr": roc.tpr.tolist(),
            "auc": roc.auc,
        },
        "machine_operating_point": {
            "fpr": 1.0 - machine_metrics["specificity"],
            "tpr": machine_metrics["sensitivity"],
        },
    }


def create_app(cases_path, tokens_path, store_path, static_dir=None,
               allow_unbalanced: bool = False) -> FastAPI:
    case_set = load_case_set(cases_path, allow_unbalanced=allow_unbalanced)
    tokens = load_tokens(tokens_path)
    store = ResponseStore(store_path)
    app = FastAPI(title="reader study", docs_url=None, redoc_url=None)

    def _auth(authorization: str | None) -> dict:
        if authorization and authorization.lower().startswith("bearer "):
            token = authorization[7:].strip()
        else:
            token = None
        try:
            return tokens.authenticate(token)
        except PermissionError:
            raise _HttpError(401, "invalid or missing bearer token") from None

    class _HttpError(Exception):
        def __init__(self, status: int, message: str):
            self.status = status
            self.message = message

    @app.exception_handler(_HttpError)
    async def _handle(request: Request, exc: _HttpError):
        return JSONResponse(status_code=exc.status, content={"error": exc.message})

    def _session(identity: dict) -> Session:
        return Session(reviewer_id=identity["reviewer_id"], case_set=case_set, store=store)

    @app.get("/api/session")
    def get_session(authorization: str | None = Header(default=None)):
        identity = _auth(authorization)
        session = _session(identity)
        return {
            "reviewer_id": session.reviewer_id,
            "case_set_id": case_set.case_set_id,
            "total": session.total,
            "completed": session.cursor,
            "done": session.complete,
        }

    @app.get("/api/cases/next")
    def next_case(authorization: str | None = Header(default=None)):
        identity = _auth(authorization)
        session = _session(identity)
        if session.complete:
            return {"done": True, "total": session.total, "completed": session.cursor}
        case = session.current_case()
        meta = read_evid_header(case_set.base_dir / case.video_path)
        payload = case.blinded_payload()
        payload.update({
            "done": False,
            "progress": {"index": session.cursor + 1, "total": session.total},
            "video_url": f"/api/cases/{case.case_id}/video?variant=raw",
            "annotated_url": f"/api/cases/{case.case_id}/video?variant=annotated",
            "fps": meta["fps"],
            "frame_count": meta["frames"],
        })
        return payload

    @app.get("/api/cases/{case_id}/video")
    def case_video(case_id: str, variant: str = "raw", loops: int = 1,
                   authorization: str | None = Header(default=None)):
        _auth(authorization)
        if variant not in ("raw", "annotated"):
            raise _HttpError(422, f"variant must be raw or annotated, got {variant!r}")
        loops = max(1, min(int(loops), MAX_LOOPS))
        try:
            case = case_set.by_id(case_id)
        except DataError:
            raise _HttpError(404, f"unknown case {case_id}") from None
        if variant == "annotated" and case.annotated_path:
            video = read_evid(case_set.base_dir / case.annotated_path)
        else:
            video = read_evid(case_set.base_dir / case.video_path)
            if variant == "annotated":
                video = annotate_video(video)
        return StreamingResponse(
            mjpeg_parts(video, loops),
            media_type="multipart/x-mixed-replace; boundary=frame",
            headers={
                "X-Frame-Rate": format(video.fps, "g"),
                "X-Frame-Count": str(video.frames.shape[0]),
                "Cache-Control": "no-store",
            })

    @app.post("/api/responses")
    async def post_response(request: Request,
                            authorization: str | None = Header(default=None)):
        identity = _auth(authorization)
        session = _session(identity)
        body = await request.json()
        case_id = body.get("case_id")
        choice = body.get("choice")
        if choice not in CHOICES:
            raise _HttpError(422, f"choice must be one of {CHOICES}")
        try:
            session.record(case_id, choice)
        except StopIteration:
            raise _HttpError(409, "session already complete") from None
        except DataError as exc:
            raise _HttpError(409, str(exc)) from None
        except ConfigError as exc:
            raise _HttpError(409, str(exc)) from None
        return {"recorded": True, "case_id": case_id,
                "completed": session.cursor, "total": session.total,
                "done": session.complete}

    @app.get("/api/report")
    def report(authorization: str | None = Header(default=None)):
        identity = _auth(authorization)
        if identity.get("role") != "admin":
            raise _HttpError(403, "report requires an admin token")
        reviewer_ids = tokens.reviewer_ids()
        incomplete = [rid for rid in reviewer_ids
                      if store.count(rid) < len(case_set.cases)]
        if incomplete:
            raise _HttpError(409, f"reviewers not complete: {incomplete}")
        try:
            payload = build_report(case_set, store, reviewer_ids)
        except NumericError as exc:
            raise _HttpError(422, f"statistic undefined: {exc}") from None
        return Response(content=json.dumps(payload, sort_keys=True),
                        media_type="application/json")

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")
    return app
