"""HTTP inference and review service.

Endpoints serve JSON; images travel as base64-encoded PNG fields (the
single convention for all binary payloads). Predictions are persisted
per study under ``data_dir/studies/<id>/`` and clinician decisions go to
an append-only log, so a restart reconstructs the same review queue.
"""

from __future__ import annotations

import base64
import json
import logging
import os
import threading
import time
import uuid
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from . import imaging
from .checkpoint import load_checkpoint
from .data import DataError
from .training import predict

log = logging.getLogger("pneumoseg.service")

VERDICTS = ("accept", "override_positive", "override_negative")
DEFAULT_THETA = 0.5
DEFAULT_MIN_AREA = 32


@dataclass
class DecisionRecord:
    study_id: str
    verdict: str
    theta_used: float
    note: str
    timestamp: int

    def to_line(self) -> str:
        return (f"{self.timestamp} {self.study_id} {self.verdict} "
                f"{self.theta_used:.6f} {json.dumps(self.note)}")

    @classmethod
    def from_line(cls, line: str) -> "DecisionRecord":
        ts, sid, verdict, theta, note = line.split(maxsplit=4)
        if verdict not in VERDICTS:
            raise ValueError(f"unknown verdict {verdict!r}")
        return cls(study_id=sid, verdict=verdict, theta_used=float(theta),
                   note=json.loads(note), timestamp=int(ts))


@dataclass
class StudyEntry:
    study_id: str
    created_at: float
    rle: str
    theta: float
    min_area: int
    width: int
    height: int
    review_status: str = "pending"
    decision: DecisionRecord | None = None

    def summary(self) -> dict:
        return {
            "study_id": self.study_id,
            "created_at": self.created_at,
            "rle": self.rle,
            "theta": self.theta,
            "min_area": self.min_area,
            "width": self.width,
            "height": self.height,
            "review_status": self.review_status,
        }


class StudyStore:
    """Disk-backed study registry with an append-only decision log.

    All mutation goes through one lock; appends to the decision log are
    flushed and fsynced before the in-memory status flips.
    """

    def __init__(self, data_dir):
        self.data_dir = Path(data_dir)
        self.studies_dir = self.data_dir / "studies"
        self.studies_dir.mkdir(parents=True, exist_ok=True)
        self.log_path = self.data_dir / "decisions.log"
        self._lock = threading.Lock()
        self._studies: dict[str, StudyEntry] = {}
        self._load()

    def _load(self):
        for meta_path in sorted(self.studies_dir.glob("*/meta.json")):
            meta = json.loads(meta_path.read_text())
            entry = StudyEntry(**meta)
            self._studies[entry.study_id] = entry
        if self.log_path.exists():
            lines = self.log_path.read_text(encoding="utf-8").split("\n")
            if lines and lines[-1] == "":
                lines.pop()
            for i, line in enumerate(lines):
                try:
                    record = DecisionRecord.from_line(line)
                except (ValueError, json.JSONDecodeError) as exc:
                    if i == len(lines) - 1:
                        log.warning("dropping torn final decision-log line: %s", exc)
                        break
                    raise DataError(f"corrupt decision log at line {i + 1}: {exc}") from exc
                entry = self._studies.get(record.study_id)
                if entry is not None:
                    entry.review_status = "reviewed"
                    entry.decision = record

    def study_dir(self, study_id: str) -> Path:
        return self.studies_dir / study_id

    def add_study(self, rle_text: str, theta: float, min_area: int, size: int,
                  image_png: bytes, prob_png: bytes, overlay_png: bytes) -> StudyEntry:
        with self._lock:
            entry = StudyEntry(
                study_id=uuid.uuid4().hex[:12],
                created_at=time.time(),
                rle=rle_text, theta=theta, min_area=min_area,
                width=size, height=size,
            )
            sdir = self.study_dir(entry.study_id)
            sdir.mkdir(parents=True)
            (sdir / "image.png").write_bytes(image_png)
            (sdir / "prob_map.png").write_bytes(prob_png)
            (sdir / "overlay.png").write_bytes(overlay_png)
            meta = entry.summary()
            meta.pop("review_status")  # derived from the decision log
            (sdir / "meta.json").write_text(json.dumps(meta, sort_keys=True))
            self._studies[entry.study_id] = entry
            return entry

    def get(self, study_id: str) -> StudyEntry | None:
        with self._lock:
            return self._studies.get(study_id)

    def list_studies(self) -> list[StudyEntry]:
        with self._lock:
            return sorted(self._studies.values(),
                          key=lambda e: (e.created_at, e.study_id))

    def record_decision(self, study_id: str, verdict: str, theta_used: float,
                        note: str) -> DecisionRecord:
        """Append one decision; a study accepts exactly one."""
        with self._lock:
            entry = self._studies.get(study_id)
            if entry is None:
                raise KeyError(study_id)
            if entry.review_status != "pending":
                raise AlreadyReviewed(study_id)
            record = DecisionRecord(study_id=study_id, verdict=verdict,
                                    theta_used=theta_used, note=note,
                                    timestamp=int(time.time()))
            with open(self.log_path, "a", encoding="utf-8") as fh:
                fh.write(record.to_line() + "\n")
                fh.flush()
                os.fsync(fh.fileno())
            entry.review_status = "reviewed"
            entry.decision = record
            return record


class AlreadyReviewed(Exception):
    pass


def _b64(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


def prob_map_to_png(prob: np.ndarray) -> bytes:
    """Quantize a probability map to an 8-bit grayscale PNG (round-half-even)."""
    return imaging.encode_gray_png(np.rint(prob * 255.0).astype(np.uint8))


def create_app(checkpoint_path, data_dir, ui_dir=None) -> FastAPI:
    ckpt_bytes = Path(checkpoint_path).read_bytes()
    model, meta = load_checkpoint(ckpt_bytes)
    image_size = int(meta.get("image_size", 256))
    store = StudyStore(data_dir)
    predict_lock = threading.Lock()  # forward passes share one model

    app = FastAPI(title="pneumoseg", docs_url=None, redoc_url=None)
    app.add_middleware(CORSMiddleware, allow_origins=["*"], allow_methods=["*"],
                       allow_headers=["*"])
    app.state.store = store

    def error(status: int, message: str) -> JSONResponse:
        return JSONResponse(status_code=status, content={"error": message})

    @app.exception_handler(Exception)
    async def internal_error(request: Request, exc: Exception):
        incident = uuid.uuid4().hex[:8]
        log.exception("incident %s on %s %s", incident, request.method, request.url.path)
        return JSONResponse(status_code=500,
                            content={"error": "internal error", "incident": incident})

    @app.get("/health")
    def health():
        return {
            "status": "ok",
            "model_config": model.config.to_lines(),
            "checkpoint_meta": meta,
            "image_size": image_size,
        }

    @app.post("/predict")
    async def predict_endpoint(request: Request,
                               theta: float = DEFAULT_THETA,
                               min_area: int = DEFAULT_MIN_AREA):
        if not (0.0 < theta < 1.0):
            return error(400, f"theta must be in (0, 1), got {theta}")
        if min_area < 0:
            return error(400, f"min_area must be >= 0, got {min_area}")
        body = await request.body()
        if not body:
            return error(400, "empty request body; upload raw image bytes")
        try:
            with predict_lock:
                result = predict(model, body, theta=theta, min_area=min_area,
                                 size=image_size)
        except DataError as exc:
            return error(400, str(exc))
        image_png = imaging.encode_gray_png(np.rint(result.image * 255.0).astype(np.uint8))
        prob_png = prob_map_to_png(result.prob_map)
        overlay_png = imaging.encode_rgb_png(result.overlay)
        entry = store.add_study(result.rle, theta, min_area, image_size,
                                image_png, prob_png, overlay_png)
        return {
            "study_id": entry.study_id,
            "rle": entry.rle,
            "theta": theta,
            "min_area": min_area,
            "width": image_size,
            "height": image_size,
            "prob_map": _b64(prob_png),
            "overlay": _b64(overlay_png),
        }

    @app.get("/studies")
    def studies():
        return {"studies": [e.summary() for e in store.list_studies()]}

    @app.get("/studies/{study_id}")
    def study_detail(study_id: str):
        entry = store.get(study_id)
        if entry is None:
            return error(404, f"unknown study {study_id}")
        sdir = store.study_dir(study_id)
        payload = entry.summary()
        payload["image"] = _b64((sdir / "image.png").read_bytes())
        payload["prob_map"] = _b64((sdir / "prob_map.png").read_bytes())
        payload["overlay"] = _b64((sdir / "overlay.png").read_bytes())
        if entry.decision is not None:
            payload["decision"] = {
                "verdict": entry.decision.verdict,
                "theta_used": entry.decision.theta_used,
                "note": entry.decision.note,
                "timestamp": entry.decision.timestamp,
            }
        return payload

    @app.post("/studies/{study_id}/decision")
    async def post_decision(study_id: str, request: Request):
        try:
            body = json.loads(await request.body())
        except json.JSONDecodeError:
            return error(400, "decision body must be JSON")
        if not isinstance(body, dict):
            return error(400, "decision body must be a JSON object")
        verdict = body.get("verdict")
        if verdict not in VERDICTS:
            return error(400, f"verdict must be one of {VERDICTS}, got {verdict!r}")
        note = body.get("note", "")
        if not isinstance(note, str):
            return error(400, "note must be a string")
        entry = store.get(study_id)
        if entry is None:
            return error(404, f"unknown study {study_id}")
        theta_used = body.get("theta_used", entry.theta)
        try:
            theta_used = float(theta_used)
        except (TypeError, ValueError):
            return error(400, f"theta_used must be a number, got {theta_used!r}")
        if not (0.0 < theta_used < 1.0):
            return error(400, f"theta_used must be in (0, 1), got {theta_used}")
        try:
            record = store.record_decision(study_id, verdict, theta_used, note)
        except KeyError:
            return error(404, f"unknown study {study_id}")
        except AlreadyReviewed:
            return error(409, f"study {study_id} is already reviewed")
        return {
            "study_id": record.study_id,
            "verdict": record.verdict,
            "theta_used": record.theta_used,
            "note": record.note,
            "timestamp": record.timestamp,
        }

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
