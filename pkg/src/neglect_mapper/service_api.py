"""JSON HTTP facade over the assessment engine and treatment scheduler.

All routes live under /api/v1.  Sessions are held in memory behind a per-
session lock and written to the data directory after every mutation, so a
restarted server picks existing sessions back up from disk.  The data
directory comes from the NEGLECT_MAPPER_DATA_DIR environment variable
unless given explicitly.
"""

import json
import os
import threading
import uuid
from pathlib import Path

from fastapi import Body, FastAPI, Response
from fastapi.responses import JSONResponse

from . import assessment_engine, gp_core, heatmap, treatment
from .domain import Mode, SessionConfig, canonical_json, make_spawn_points
from .errors import (
    NeglectMapperError,
    NoBorderError,
    NoCueAvailableError,
    NumericalError,
    SessionFinishedError,
    ValidationError,
)

DATA_DIR_ENV = "NEGLECT_MAPPER_DATA_DIR"
API_PREFIX = "/api/v1"


class _ApiError(Exception):
    def __init__(self, status: int, detail):
        self.status = status
        self.detail = detail


def _bad_request(exc: ValidationError) -> _ApiError:
    return _ApiError(
        400, [{"field": exc.field or "", "message": str(exc)}]
    )


class _LiveSession:
    """One registered session: engine or treatment object plus its lock."""

    def __init__(self, kind: str, obj):
        self.kind = kind  # "assessment" | "treatment"
        self.obj = obj
        self.lock = threading.Lock()
        self.last_response = None  # (spawn_id, reply dict)


class SessionRegistry:
    def __init__(self, data_dir: Path):
        self.data_dir = data_dir
        self.sessions_dir = data_dir / "sessions"
        self.events_dir = data_dir / "events"
        self.sessions_dir.mkdir(parents=True, exist_ok=True)
        self.events_dir.mkdir(parents=True, exist_ok=True)
        self._live: dict[str, _LiveSession] = {}
        self._lock = threading.Lock()

    def register(self, session_id: str, live: _LiveSession):
        with self._lock:
            self._live[session_id] = live

    def get(self, session_id: str) -> _LiveSession:
        with self._lock:
            live = self._live.get(session_id)
        if live is not None:
            return live
        live = self._load(session_id)
        if live is None:
            raise _ApiError(404, f"unknown session {session_id}")
        self.register(session_id, live)
        return live

    def _load(self, session_id: str) -> "_LiveSession | None":
        path = self.sessions_dir / f"{session_id}.json"
        if not path.exists():
            return None
        with open(path) as fh:
            payload = json.load(fh)
        if payload.get("kind") == "treatment":
            return _LiveSession("treatment", _treatment_from_dict(payload))
        state = assessment_engine.session_from_dict(payload)
        return _LiveSession(
            "assessment",
            assessment_engine.AssessmentSession(
                state, event_sink=self.event_sink(session_id)
            ),
        )

    def event_sink(self, session_id: str):
        path = self.events_dir / f"{session_id}.jsonl"

        def sink(event: dict):
            with open(path, "a") as fh:
                fh.write(json.dumps(event) + "\n")

        return sink

    def persist(self, session_id: str, live: _LiveSession):
        path = self.sessions_dir / f"{session_id}.json"
        if live.kind == "assessment":
            payload = assessment_engine.to_session_dict(live.obj.state)
        else:
            payload = _treatment_to_dict(live.obj)
        with open(path, "w") as fh:
            fh.write(canonical_json(payload))
            fh.write("\n")


def _treatment_to_dict(sess: treatment.TreatmentSession) -> dict:
    return {
        "format_version": assessment_engine.SESSION_FORMAT_VERSION,
        "kind": "treatment",
        "session_id": sess.session_id,
        "config": sess.config.to_dict(),
        "measurements": [m.to_dict() for m in sess.responses],
        "cue_history": list(sess.cue_history),
        "pending_cue_id": sess.pending_cue_id,
        "band_deg": sess.band_deg,
        "threshold": sess.border.threshold,
        "model": gp_core.model_to_dict(sess.model),
        "spawns": [s.to_dict() for s in sess.spawns],
    }


def _treatment_from_dict(d: dict) -> treatment.TreatmentSession:
    from .domain import Measurement, SpawnPoint

    sess = treatment.TreatmentSession(
        config=SessionConfig.from_dict(d["config"]),
        model=gp_core.model_from_dict(d["model"]),
        spawns=[SpawnPoint.from_dict(s) for s in d["spawns"]],
        threshold=float(d.get("threshold", treatment.DEFAULT_BORDER_THRESHOLD)),
        band_deg=float(d.get("band_deg", treatment.DEFAULT_CUE_BAND_DEG)),
        session_id=d["session_id"],
    )
    sess.cue_history = list(d.get("cue_history", []))
    sess.responses = [Measurement.from_dict(m) for m in d.get("measurements", [])]
    sess.pending_cue_id = d.get("pending_cue_id")
    return sess


def _spawn_dict(spawn) -> dict | None:
    return None if spawn is None else spawn.to_dict()


def _session_summary(session_id: str, live: _LiveSession) -> dict:
    base = f"{API_PREFIX}/sessions/{session_id}"
    if live.kind == "assessment":
        state = live.obj.state
        phase = state.phase.kind
        n_measured = state.n_measured
        budget = state.config.n_stimuli
        mode = state.config.mode.value
        scene = state.config.scene.value
    else:
        sess = live.obj
        phase = "finished" if sess.finished else (
            "awaiting_response" if sess.pending_cue_id is not None else "idle"
        )
        n_measured = len(sess.responses)
        budget = sess.config.n_stimuli
        mode = sess.config.mode.value
        scene = sess.config.scene.value
    return {
        "session_id": session_id,
        "mode": mode,
        "scene": scene,
        "phase": phase,
        "n_measured": n_measured,
        "budget": budget,
        "links": {
            "stimulus": f"{base}/stimulus",
            "heatmap": f"{base}/heatmap",
            "border": f"{base}/border",
            "model": f"{base}/model",
        },
    }


def _current_model(live: _LiveSession):
    if live.kind == "assessment":
        return live.obj.state.model
    return live.obj.model


def create_app(data_dir: str | os.PathLike | None = None) -> FastAPI:
    if data_dir is None:
        data_dir = os.environ.get(DATA_DIR_ENV, "neglect-mapper-data")
    registry = SessionRegistry(Path(data_dir))
    app = FastAPI(title="neglect-mapper", openapi_url=f"{API_PREFIX}/openapi.json")
    app.state.registry = registry

    @app.exception_handler(_ApiError)
    async def handle_api_error(request, exc: _ApiError):
        return JSONResponse(status_code=exc.status, content={"detail": exc.detail})

    @app.exception_handler(NeglectMapperError)
    async def handle_package_error(request, exc: NeglectMapperError):
        if isinstance(exc, ValidationError):
            return JSONResponse(
                status_code=400,
                content={"detail": [{"field": exc.field or "", "message": str(exc)}]},
            )
        if isinstance(exc, NumericalError):
            return JSONResponse(status_code=500, content={"detail": str(exc)})
        return JSONResponse(status_code=409, content={"detail": str(exc)})

    @app.post(f"{API_PREFIX}/sessions", status_code=201)
    def create_session(payload: dict = Body(...)):
        if "config" not in payload:
            raise _ApiError(400, [{"field": "config", "message": "missing config"}])
        try:
            config = SessionConfig.from_dict(payload["config"])
        except ValidationError as exc:
            raise _bad_request(exc) from None
        session_id = payload.get("session_id") or f"s-{uuid.uuid4().hex[:12]}"
        if config.mode is Mode.TREATMENT:
            model = _resolve_treatment_model(registry, payload)
            live = _LiveSession(
                "treatment",
                treatment.TreatmentSession(
                    config=config,
                    model=model,
                    spawns=make_spawn_points(config.scene),
                    session_id=session_id,
                ),
            )
            first = None
        else:
            sess = assessment_engine.AssessmentSession.new(
                config,
                session_id=session_id,
                n_warmup=int(payload.get("n_warmup", 0)),
                event_sink=registry.event_sink(session_id),
            )
            live = _LiveSession("assessment", sess)
            first = _spawn_dict(sess.current_stimulus())
        registry.register(session_id, live)
        registry.persist(session_id, live)
        return {"session_id": session_id, "first_stimulus": first}

    @app.get(f"{API_PREFIX}/sessions/{{session_id}}")
    def get_session(session_id: str):
        live = registry.get(session_id)
        with live.lock:
            return _session_summary(session_id, live)

    @app.get(f"{API_PREFIX}/sessions/{{session_id}}/stimulus")
    def get_stimulus(session_id: str):
        live = registry.get(session_id)
        with live.lock:
            if live.kind == "assessment":
                spawn = live.obj.current_stimulus()
                if spawn is None:
                    raise _ApiError(404, "no pending stimulus")
            else:
                spawn = live.obj.current_spawn()
                if spawn is None:
                    raise _ApiError(404, "no pending cue")
            return {"spawn": spawn.to_dict()}

    @app.post(f"{API_PREFIX}/sessions/{{session_id}}/response")
    def post_response(session_id: str, payload: dict = Body(...)):
        for key in ("spawn_id", "raw_time_s", "found"):
            if key not in payload:
                raise _ApiError(400, [{"field": key, "message": f"missing {key}"}])
        try:
            spawn_id = int(payload["spawn_id"])
            raw_time_s = float(payload["raw_time_s"])
            found = bool(payload["found"])
        except (TypeError, ValueError):
            raise _ApiError(
                400, [{"field": "spawn_id", "message": "malformed response body"}]
            ) from None
        live = registry.get(session_id)
        with live.lock:
            if live.last_response is not None and live.last_response[0] == spawn_id:
                return live.last_response[1]
            if live.kind == "assessment":
                current = live.obj.current_stimulus()
                if current is None:
                    raise SessionFinishedError("session already finished")
                if current.id != spawn_id:
                    raise _ApiError(
                        409,
                        f"spawn {spawn_id} is not the current stimulus ({current.id})",
                    )
                next_spawn = live.obj.submit(raw_time_s, found)
                reply = {
                    "finished": next_spawn is None,
                    "next_stimulus": _spawn_dict(next_spawn),
                    "n_measured": live.obj.state.n_measured,
                }
            else:
                if live.obj.pending_cue_id != spawn_id:
                    raise _ApiError(
                        409,
                        f"spawn {spawn_id} is not the current cue",
                    )
                live.obj.submit(raw_time_s, found)
                reply = {
                    "finished": live.obj.finished,
                    "next_stimulus": None,
                    "n_measured": len(live.obj.responses),
                }
            live.last_response = (spawn_id, reply)
            registry.persist(session_id, live)
            return reply

    @app.get(f"{API_PREFIX}/sessions/{{session_id}}/heatmap")
    def get_heatmap(
        session_id: str,
        which: str = "mean",
        format: str = "json",
        nx: int = heatmap.DEFAULT_NX,
        ny: int = heatmap.DEFAULT_NY,
    ):
        if which not in ("mean", "two_sigma"):
            raise _ApiError(
                400, [{"field": "which", "message": "which must be mean or two_sigma"}]
            )
        live = registry.get(session_id)
        with live.lock:
            model = _current_model(live)
            if model is None:
                raise _ApiError(404, "no model fitted yet")
            h = heatmap.evaluate_grid(model, nx=nx, ny=ny)
        if format == "json":
            return h.to_dict()
        if format == "csv":
            return Response(content=heatmap.to_csv(h), media_type="text/csv")
        if format == "ppm":
            return Response(
                content=heatmap.render(h, which),
                media_type="image/x-portable-pixmap",
            )
        raise _ApiError(
            400, [{"field": "format", "message": "format must be json, csv or ppm"}]
        )

    @app.get(f"{API_PREFIX}/sessions/{{session_id}}/border")
    def get_border(session_id: str, threshold: float = treatment.DEFAULT_BORDER_THRESHOLD):
        live = registry.get(session_id)
        with live.lock:
            model = _current_model(live)
            if model is None:
                raise _ApiError(404, "no model fitted yet")
            border = treatment.extract_border(
                model, threshold=threshold, session_ref=session_id
            )
            return border.to_dict()

    @app.post(f"{API_PREFIX}/sessions/{{session_id}}/cue")
    def post_cue(session_id: str):
        live = registry.get(session_id)
        with live.lock:
            if live.kind != "treatment":
                raise _ApiError(409, "cues are only served in treatment mode")
            try:
                spawn = live.obj.issue_cue()
            except (NoCueAvailableError, NoBorderError, SessionFinishedError) as exc:
                raise _ApiError(409, str(exc)) from None
            registry.persist(session_id, live)
            return {"spawn": spawn.to_dict()}

    @app.get(f"{API_PREFIX}/sessions/{{session_id}}/model")
    def get_model(session_id: str):
        live = registry.get(session_id)
        with live.lock:
            model = _current_model(live)
            if model is None:
                raise _ApiError(404, "no model fitted yet")
            return gp_core.model_to_dict(model)

    return app


def _resolve_treatment_model(registry: SessionRegistry, payload: dict):
    if "model" in payload:
        return gp_core.model_from_dict(payload["model"])
    ref = payload.get("model_session_id")
    if not ref:
        raise _ApiError(
            400,
            [
                {
                    "field": "model",
                    "message": "treatment sessions need model or model_session_id",
                }
            ],
        )
    live = registry.get(ref)
    model = _current_model(live)
    if model is None:
        raise _ApiError(400, [{"field": "model_session_id", "message": "referenced session has no model"}])
    return model
