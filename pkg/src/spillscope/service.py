"""Live classification service: capture sessions, single inference
worker with a bounded queue, and the JSON/HTTP API the operator console
consumes.
"""

# no `from __future__ import annotations` here: FastAPI must see real
# class objects on the endpoint signatures, not strings

import logging
import queue
import threading
import time
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from .frames import Frame, FramePair, SessionMeta
from .geometry import Calibration, align_rgb, fuse_side_by_side
from .sources import DEFAULT_MAX_SKEW_MS, capture_pair, save_pair
from .training import LoadedModel

logger = logging.getLogger(__name__)

QUEUE_DEPTH = 4
DECISION_THRESHOLD = 0.5


@dataclass(frozen=True)
class ClassVerdict:
    label: str
    confidence: float
    latency_ms: float
    frame_ref: int
    timestamp: str

    def __post_init__(self):
        if (self.label == "spill") != (self.confidence >= DECISION_THRESHOLD):
            raise ValueError("label must agree with thresholded confidence")


@dataclass(frozen=True)
class ServiceConfig:
    model_dir: str
    modality: str
    session_root: str
    calib_path: str | None = None
    listen_address: str = "127.0.0.1:8750"
    max_skew_ms: float = DEFAULT_MAX_SKEW_MS


def classify(model: LoadedModel, item, modality: str,
             calib: Calibration | None = None, frame_ref: int = 0) -> ClassVerdict:
    """Classify a frame or pair under the given modality contract.

    combined requires a FramePair plus calibration (the fused 512x192
    frame is built here); thermal/rgb accept a matching Frame or take
    that half of a pair. Latency covers fuse + preprocess + forward +
    threshold.
    """
    t0 = time.perf_counter()
    if modality == "combined":
        if not isinstance(item, FramePair):
            raise ValueError("combined classification needs a FramePair")
        if calib is None:
            raise ValueError("combined classification needs a calibration")
        frame = fuse_side_by_side(item.thermal, align_rgb(item.rgb, calib))
    elif modality in ("thermal", "rgb"):
        frame = getattr(item, modality) if isinstance(item, FramePair) else item
        if not isinstance(frame, Frame) or frame.modality != modality:
            raise ValueError(
                f"expected a {modality} frame, got "
                f"{frame.modality if isinstance(frame, Frame) else type(item).__name__}"
            )
    else:
        raise ValueError(f"unknown modality {modality!r}")

    confidence = model.score_frame(frame)
    label = "spill" if confidence >= DECISION_THRESHOLD else "no_spill"
    latency_ms = (time.perf_counter() - t0) * 1000.0
    return ClassVerdict(
        label=label,
        confidence=confidence,
        latency_ms=latency_ms,
        frame_ref=frame_ref,
        timestamp=datetime.now(timezone.utc).isoformat(),
    )


@dataclass
class SessionState:
    meta: SessionMeta
    captured_counts: dict = field(default_factory=lambda: {"spill": 0, "no_spill": 0})
    verdict_log: list = field(default_factory=list)   # append-only

    def demo_accuracy(self) -> float | None:
        labeled = [e for e in self.verdict_log if e["ground_truth"] is not None]
        if not labeled:
            return None
        correct = sum(1 for e in labeled if e["verdict"]["label"] == e["ground_truth"])
        return correct / len(labeled)


class InferenceService:
    """One model, one inference worker, one active capture session."""

    def __init__(self, config: ServiceConfig, thermal_src=None, rgb_src=None,
                 model_loader=None):
        self.config = config
        self.thermal_src = thermal_src
        self.rgb_src = rgb_src
        self._model_loader = model_loader or (lambda: LoadedModel.load(config.model_dir))
        self.model: LoadedModel | None = None
        self.calib: Calibration | None = None
        self._load_error: str | None = None
        self._ready = threading.Event()
        self._lock = threading.Lock()
        self._session: SessionState | None = None
        self._session_counter = 0
        self._latest_verdict: ClassVerdict | None = None
        self._started_at = time.monotonic()
        self._jobs: queue.Queue = queue.Queue(maxsize=QUEUE_DEPTH)
        self._worker = threading.Thread(target=self._work, daemon=True)
        self._stop = threading.Event()

    # -- lifecycle ---------------------------------------------------------

    def start(self, block: bool = False) -> "InferenceService":
        threading.Thread(target=self._load, daemon=True).start()
        self._worker.start()
        if block:
            self._ready.wait()
            if self._load_error:
                raise RuntimeError(self._load_error)
        return self

    def _load(self) -> None:
        try:
            model = self._model_loader()
            if model.modality != self.config.modality:
                raise ValueError(
                    f"model was trained on {model.modality!r} but the service is "
                    f"configured for {self.config.modality!r}"
                )
            if self.config.calib_path:
                self.calib = Calibration.load(self.config.calib_path)
            elif self.config.modality == "combined":
                raise ValueError("combined modality requires --calib")
            self.model = model
        except Exception as exc:
            self._load_error = str(exc)
            logger.exception("model load failed")
        finally:
            self._ready.set()

    def shutdown(self) -> None:
        self._stop.set()
        try:
            self._jobs.put_nowait(None)   # wake the worker if it is idle
        except queue.Full:
            pass

    @property
    def ready(self) -> bool:
        return self._ready.is_set() and self._load_error is None

    def health(self) -> dict:
        return {
            "model": self.model.backbone_name,
            "modality": self.config.modality,
            "uptime_s": time.monotonic() - self._started_at,
        }

    # -- single-worker inference -------------------------------------------

    def _work(self) -> None:
        while not self._stop.is_set():
            try:
                job = self._jobs.get(timeout=0.1)
            except queue.Empty:
                continue
            if job is None:
                continue
            self._run_job(job)
        # fail whatever is still queued so no submitter waits forever
        while True:
            try:
                job = self._jobs.get_nowait()
            except queue.Empty:
                break
            if job is not None:
                _, box, done = job
                box["error"] = RuntimeError("service shut down")
                done.set()

    @staticmethod
    def _run_job(job) -> None:
        fn, box, done = job
        try:
            box["result"] = fn()
        except Exception as exc:
            box["error"] = exc
        finally:
            done.set()

    def _submit(self, fn):
        box: dict = {}
        done = threading.Event()
        self._jobs.put_nowait((fn, box, done))   # queue.Full propagates
        done.wait()
        if "error" in box:
            raise box["error"]
        return box["result"]

    # -- session operations --------------------------------------------------

    def start_session(self, room: str, liquid: str) -> SessionState:
        with self._lock:
            self._session_counter += 1
            meta = SessionMeta(
                session_id=f"session-{self._session_counter:04d}",
                room=room, liquid=liquid, class_label="no_spill",
            )
            self._session = SessionState(meta=meta)
            return self._session

    def set_label(self, class_label: str) -> None:
        with self._lock:
            if self._session is None:
                raise NoActiveSession()
            self._session.meta = SessionMeta(
                session_id=self._session.meta.session_id,
                room=self._session.meta.room,
                liquid=self._session.meta.liquid,
                class_label=class_label,
            )

    @property
    def session(self) -> SessionState | None:
        return self._session

    def capture(self) -> dict:
        """Capture a pair, persist it under the session, classify it."""
        if not self.ready:
            raise ServiceNotReady()
        with self._lock:
            if self._session is None:
                raise NoActiveSession()
            session = self._session
            meta = session.meta
        if self.thermal_src is None or self.rgb_src is None:
            raise RuntimeError("service has no frame sources configured")

        pair = capture_pair(self.thermal_src, self.rgb_src,
                            self.config.max_skew_ms, session_id=meta.session_id)
        root = Path(self.config.session_root) / meta.session_id
        thermal_path, rgb_path = save_pair(pair, meta, root)
        index = int(thermal_path.name.split("_")[1])

        verdict = self._submit(
            lambda: classify(self.model, pair, self.config.modality,
                             self.calib, frame_ref=index)
        )
        with self._lock:
            session.captured_counts[meta.class_label] += 1
            session.verdict_log.append(
                {"frame_ref": index, "verdict": asdict(verdict), "ground_truth": None}
            )
            self._latest_verdict = verdict
        return {
            "pair_index": index,
            "thermal_path": str(thermal_path),
            "rgb_path": str(rgb_path),
            "verdict": asdict(verdict),
        }

    def latest_verdict(self) -> ClassVerdict | None:
        return self._latest_verdict

    def record_demo_outcome(self, frame_ref: int, ground_truth: str) -> float:
        """Attach operator ground truth; returns demo accuracy over
        labeled verdicts. Double labeling: last label wins (logged)."""
        if ground_truth not in ("spill", "no_spill"):
            raise ValueError(f"ground_truth must be spill|no_spill, got {ground_truth!r}")
        with self._lock:
            if self._session is None:
                raise NoActiveSession()
            entry = next((e for e in self._session.verdict_log
                          if e["frame_ref"] == frame_ref), None)
            if entry is None:
                raise UnknownFrameRef(f"frame_ref {frame_ref} not in verdict log")
            if entry["ground_truth"] is not None:
                logger.warning("frame_ref %d relabeled %s -> %s",
                               frame_ref, entry["ground_truth"], ground_truth)
            entry["ground_truth"] = ground_truth
            acc = self._session.demo_accuracy()
        return acc

    def session_state(self) -> dict:
        with self._lock:
            if self._session is None:
                raise NoActiveSession()
            s = self._session
            return {
                "session_id": s.meta.session_id,
                "room": s.meta.room,
                "liquid": s.meta.liquid,
                "class_label": s.meta.class_label,
                "counts": dict(s.captured_counts),
                "demo_accuracy": s.demo_accuracy(),
                "n_labeled": sum(1 for e in s.verdict_log if e["ground_truth"] is not None),
            }


class NoActiveSession(Exception):
    pass


class ServiceNotReady(Exception):
    pass


class UnknownFrameRef(KeyError):
    pass


def create_app(service: InferenceService):
    """FastAPI app over an InferenceService."""
    from fastapi import FastAPI, HTTPException, Request
    from fastapi.exceptions import RequestValidationError
    from fastapi.middleware.cors import CORSMiddleware
    from fastapi.responses import JSONResponse
    from pydantic import BaseModel

    class SessionStart(BaseModel):
        room: str = "unknown"
        liquid: str = "unknown"

    class LabelBody(BaseModel):
        class_label: str

    class OutcomeBody(BaseModel):
        frame_ref: int
        ground_truth: str

    app = FastAPI(title="spillscope inference service")
    # the operator console is served as a static page from another
    # origin; the service carries no credentials, so open CORS is fine
    app.add_middleware(CORSMiddleware, allow_origins=["*"],
                       allow_methods=["*"], allow_headers=["*"])

    @app.exception_handler(RequestValidationError)
    async def malformed_body(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"detail": exc.errors()})

    def require_ready():
        if not service.ready:
            detail = service._load_error or "model is still loading"
            raise HTTPException(status_code=503, detail=detail)

    @app.get("/health")
    def health():
        require_ready()
        return service.health()

    @app.post("/session/start")
    def session_start(body: SessionStart):
        state = service.start_session(body.room, body.liquid)
        return {"session_id": state.meta.session_id}

    @app.post("/session/label")
    def session_label(body: LabelBody):
        if body.class_label not in ("spill", "no_spill"):
            raise HTTPException(status_code=400,
                                detail="class_label must be spill or no_spill")
        try:
            service.set_label(body.class_label)
        except NoActiveSession:
            raise HTTPException(status_code=409, detail="no active session")
        return {"class_label": body.class_label}

    @app.get("/session/state")
    def session_state():
        try:
            return service.session_state()
        except NoActiveSession:
            raise HTTPException(status_code=409, detail="no active session")

    @app.post("/capture")
    def capture():
        require_ready()
        try:
            return service.capture()
        except NoActiveSession:
            raise HTTPException(status_code=409, detail="no active session")
        except queue.Full:
            raise HTTPException(status_code=429, detail="inference queue is full")

    @app.get("/verdict/latest")
    def verdict_latest():
        verdict = service.latest_verdict()
        if verdict is None:
            raise HTTPException(status_code=404, detail="no verdicts yet")
        return asdict(verdict)

    @app.post("/demo/outcome")
    def demo_outcome(body: OutcomeBody):
        try:
            acc = service.record_demo_outcome(body.frame_ref, body.ground_truth)
        except NoActiveSession:
            raise HTTPException(status_code=409, detail="no active session")
        except UnknownFrameRef as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return {"demo_accuracy": acc}

    return app
