"""Session orchestration: initial design, measure, refit, acquire, stop.

The engine is a step machine.  A session is always in one of three phases:
awaiting a response to a presented stimulus, idle (nothing presented, e.g.
after an interruption), or finished.  submit() absorbs one response and
immediately presents the next stimulus or finishes, so callers never see a
half-advanced session.

Everything that influences stimulus choice is derived from the config seed
and the measurement count, which is what makes interrupted sessions
resumable: replaying the same responses yields the same session, byte for
byte once wall-clock timestamps are set aside.
"""

import json
import time
from dataclasses import dataclass, field

import numpy as np

from . import active_learning, gp_core, heatmap
from .domain import (
    Acquisition,
    Measurement,
    Mode,
    SessionConfig,
    SpawnPoint,
    StopKind,
    canonical_json,
    make_spawn_points,
)
from .errors import (
    ConfigMismatchError,
    PreconditionError,
    SessionFinishedError,
    SessionInterruptedError,
)

SESSION_FORMAT_VERSION = 1

# Hyperparameters are re-optimized after every measurement early on, then
# every third; in between the posterior is re-conditioned on the new data
# with the previous hyperparameters.
REFIT_DENSE_UNTIL = 15
REFIT_INTERVAL = 3
FIRST_FIT_RESTARTS = 5
REFIT_RESTARTS = 3

SNAPSHOT_NX = heatmap.DEFAULT_NX
SNAPSHOT_NY = heatmap.DEFAULT_NY

_SEED_PURPOSE_FIT = 1
_SEED_PURPOSE_WARMUP = 3


def refit_due(n_measured: int) -> bool:
    return n_measured <= REFIT_DENSE_UNTIL or n_measured % REFIT_INTERVAL == 0


def _derived_seed(base_seed: int, purpose: int, k: int = 0) -> int:
    seq = np.random.SeedSequence(base_seed, spawn_key=(purpose, k))
    return int(seq.generate_state(1, np.uint64)[0])


@dataclass
class Phase:
    kind: str  # "awaiting_response" | "idle" | "finished"
    spawn_id: int | None = None
    onset: float | None = None
    warmup: bool = False

    def to_dict(self, deterministic: bool = False) -> dict:
        d = {"kind": self.kind, "spawn_id": self.spawn_id, "warmup": self.warmup}
        if not deterministic:
            d["onset"] = self.onset
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Phase":
        return cls(
            kind=d["kind"],
            spawn_id=d.get("spawn_id"),
            onset=d.get("onset"),
            warmup=bool(d.get("warmup", False)),
        )


@dataclass
class SessionState:
    session_id: str
    config: SessionConfig
    config_digest: str
    spawns: list[SpawnPoint]
    measurements: list[Measurement] = field(default_factory=list)
    model: gp_core.GpModel | None = None
    phase: Phase = field(default_factory=lambda: Phase("idle"))
    events: list[dict] = field(default_factory=list)
    snapshots: list[np.ndarray] = field(default_factory=list)
    warmup_pending: list[int] = field(default_factory=list)

    @property
    def n_measured(self) -> int:
        return len(self.measurements)

    def measured_ids(self) -> set[int]:
        return {m.spawn_id for m in self.measurements}


def to_session_dict(state: SessionState, deterministic: bool = False) -> dict:
    events = state.events
    if deterministic:
        events = [{k: v for k, v in e.items() if k != "t_wall"} for e in events]
    return {
        "format_version": SESSION_FORMAT_VERSION,
        "session_id": state.session_id,
        "config": state.config.to_dict(),
        "config_digest": state.config_digest,
        "spawns": [s.to_dict() for s in state.spawns],
        "measurements": [m.to_dict() for m in state.measurements],
        "events": events,
        "model": None if state.model is None else gp_core.model_to_dict(state.model),
        "phase": state.phase.to_dict(deterministic=deterministic),
        "snapshots": [[float(v) for v in snap.ravel()] for snap in state.snapshots],
        "warmup_pending": list(state.warmup_pending),
    }


def session_from_dict(d: dict) -> SessionState:
    if d.get("format_version") != SESSION_FORMAT_VERSION:
        raise PreconditionError(
            f"unsupported session format version {d.get('format_version')!r}"
        )
    config = SessionConfig.from_dict(d["config"])
    digest = d["config_digest"]
    if config.digest() != digest:
        raise ConfigMismatchError("session config does not match its stored digest")
    return SessionState(
        session_id=d["session_id"],
        config=config,
        config_digest=digest,
        spawns=[SpawnPoint.from_dict(s) for s in d["spawns"]],
        measurements=[Measurement.from_dict(m) for m in d["measurements"]],
        model=None if d.get("model") is None else gp_core.model_from_dict(d["model"]),
        phase=Phase.from_dict(d["phase"]),
        events=list(d.get("events", [])),
        snapshots=[
            np.asarray(s, dtype=float).reshape(SNAPSHOT_NY, SNAPSHOT_NX)
            for s in d.get("snapshots", [])
        ],
        warmup_pending=list(d.get("warmup_pending", [])),
    )


def save_session(state: SessionState, path, deterministic: bool = False):
    with open(path, "w") as fh:
        fh.write(canonical_json(to_session_dict(state, deterministic=deterministic)))
        fh.write("\n")


def load_session(path) -> SessionState:
    with open(path) as fh:
        return session_from_dict(json.load(fh))


class AssessmentSession:
    """Stepwise driver for one assessment session.

    Use new() to start (the first stimulus is presented immediately), then
    alternate current_stimulus() and submit() until the phase is finished.
    The underlying SessionState can be serialized at any point and picked
    back up with resume_session().
    """

    def __init__(self, state: SessionState, event_sink=None):
        if state.config.mode is not Mode.ASSESSMENT:
            raise PreconditionError("assessment engine only runs assessment configs")
        self.state = state
        self.event_sink = event_sink
        self._spawns_by_id = {s.id: s for s in state.spawns}
        self._init_ids = active_learning.init_design(
            state.spawns,
            state.config.n_init,
            state.config.init_strategy,
            state.config.seed,
        )
        self._last_wall = 0.0

    @classmethod
    def new(
        cls,
        config: SessionConfig,
        spawns: list[SpawnPoint] | None = None,
        session_id: str | None = None,
        n_warmup: int = 0,
        event_sink=None,
    ) -> "AssessmentSession":
        config.validate()
        if spawns is None:
            spawns = make_spawn_points(config.scene)
        if config.n_init > len(spawns):
            raise PreconditionError(
                f"n_init={config.n_init} exceeds the {len(spawns)} spawn points"
            )
        if session_id is None:
            session_id = f"session-{config.digest()[:12]}"
        state = SessionState(
            session_id=session_id,
            config=config,
            config_digest=config.digest(),
            spawns=list(spawns),
        )
        sess = cls(state, event_sink=event_sink)
        if n_warmup:
            if n_warmup > len(spawns):
                raise PreconditionError("n_warmup exceeds the number of spawn points")
            rng = np.random.default_rng(
                _derived_seed(config.seed, _SEED_PURPOSE_WARMUP)
            )
            ids = sorted(s.id for s in spawns)
            state.warmup_pending = [
                int(i) for i in rng.choice(ids, size=n_warmup, replace=False)
            ]
        sess._record({"event": "session_start", "config_digest": state.config_digest})
        sess._present_next()
        return sess

    # -- event plumbing ---------------------------------------------------

    def _now(self) -> float:
        t = time.time()
        if t < self._last_wall:
            t = self._last_wall
        self._last_wall = t
        return t

    def _record(self, event: dict):
        event = dict(event)
        event["t_wall"] = self._now()
        self.state.events.append(event)
        if self.event_sink is not None:
            self.event_sink(event)

    # -- stepping ---------------------------------------------------------

    def current_stimulus(self) -> SpawnPoint | None:
        if self.state.phase.kind != "awaiting_response":
            return None
        return self._spawns_by_id[self.state.phase.spawn_id]

    def _present(self, spawn_id: int, warmup: bool = False):
        self.state.phase = Phase(
            "awaiting_response", spawn_id=int(spawn_id), onset=self._now(), warmup=warmup
        )
        self._record(
            {
                "event": "stimulus_shown",
                "spawn_id": int(spawn_id),
                "n": self.state.n_measured,
                "warmup": warmup,
            }
        )

    def _finish(self, reason: str):
        self.state.phase = Phase("finished")
        self._record({"event": "stop", "reason": reason, "n": self.state.n_measured})

    def _next_main_stimulus(self):
        """Present the next stimulus, or finish if a stop condition holds."""
        state = self.state
        n = state.n_measured
        if n < state.config.n_init:
            self._present(self._init_ids[n])
            return
        if n >= state.config.n_stimuli:
            self._finish("budget")
            return
        if active_learning.should_stop(state.snapshots, state.config.stop, n):
            reason = (
                "budget"
                if state.config.stop.kind is StopKind.FIXED_BUDGET
                else "converged"
            )
            self._finish(reason)
            return
        measured = state.measured_ids()
        candidates = [s for s in state.spawns if s.id not in measured]
        if not candidates:
            self._finish("exhausted")
            return
        if state.config.acquisition is Acquisition.US:
            result = active_learning.acquire_us(state.model, candidates)
        else:
            result = active_learning.acquire_ivr(state.model, candidates, state.spawns)
        self._record(
            {
                "event": "acquisition",
                "method": state.config.acquisition.value,
                "n": n,
                **result.to_dict(),
            }
        )
        self._present(result.chosen_id)

    def _present_next(self):
        if self.state.warmup_pending:
            self._present(self.state.warmup_pending[0], warmup=True)
        else:
            self._next_main_stimulus()

    def _update_model(self):
        state = self.state
        n = state.n_measured
        if n < state.config.n_init:
            return
        X = np.array(
            [
                [
                    self._spawns_by_id[m.spawn_id].pos.azimuth_deg,
                    self._spawns_by_id[m.spawn_id].pos.elevation_deg,
                ]
                for m in state.measurements
            ]
        )
        y = np.array([m.y for m in state.measurements])
        if state.model is None or refit_due(n):
            if state.model is None:
                opts = gp_core.FitOptions(
                    n_restarts=FIRST_FIT_RESTARTS,
                    seed=_derived_seed(state.config.seed, _SEED_PURPOSE_FIT, n),
                )
            else:
                opts = gp_core.FitOptions(
                    n_restarts=REFIT_RESTARTS,
                    seed=_derived_seed(state.config.seed, _SEED_PURPOSE_FIT, n),
                    theta0=state.model.theta,
                )
            state.model = gp_core.fit(X, y, opts)
            self._record(
                {"event": "refit", "n": n, "theta": state.model.theta.to_dict()}
            )
        else:
            state.model = gp_core.condition(X, y, state.model.theta)
        if state.config.stop.kind is StopKind.POSTERIOR_CONVERGENCE:
            snap = heatmap.mean_grid(state.model, nx=SNAPSHOT_NX, ny=SNAPSHOT_NY)
            state.snapshots.append(snap)
            keep = state.config.stop.patience + 1
            del state.snapshots[:-keep]

    def submit(self, raw_time_s: float, found: bool) -> SpawnPoint | None:
        """Record the response to the pending stimulus and advance.

        Returns the next stimulus, or None when the session finished.
        """
        state = self.state
        if state.phase.kind == "finished":
            raise SessionFinishedError("session already finished")
        if state.phase.kind != "awaiting_response":
            raise PreconditionError("no stimulus is awaiting a response")
        spawn_id = state.phase.spawn_id
        warmup = state.phase.warmup
        m = Measurement.from_response(spawn_id, raw_time_s, found, state.config.t_max_s)
        self._record(
            {
                "event": "response",
                "spawn_id": m.spawn_id,
                "raw_time_s": m.raw_time_s,
                "found": m.found,
                "y": m.y,
                "warmup": warmup,
                "n": state.n_measured + (0 if warmup else 1),
            }
        )
        if warmup:
            state.warmup_pending.remove(spawn_id)
        else:
            state.measurements.append(m)
            self._update_model()
        self._present_next()
        return self.current_stimulus()

    def mark_idle(self):
        """Abandon any pending presentation, leaving a resumable state."""
        if self.state.phase.kind == "awaiting_response":
            self.state.phase = Phase("idle")


def run_assessment(
    config: SessionConfig,
    responder,
    spawns: list[SpawnPoint] | None = None,
    session_id: str | None = None,
    n_warmup: int = 0,
    event_sink=None,
) -> SessionState:
    """Run a whole session against a responder callable.

    The responder maps a SpawnPoint to (raw_time_s, found).  If it raises,
    the session is parked idle and re-raised as SessionInterruptedError with
    the state attached, ready for resume_session().
    """
    sess = AssessmentSession.new(
        config,
        spawns=spawns,
        session_id=session_id,
        n_warmup=n_warmup,
        event_sink=event_sink,
    )
    return _drive(sess, responder)


def _drive(sess: AssessmentSession, responder) -> SessionState:
    while True:
        spawn = sess.current_stimulus()
        if spawn is None:
            return sess.state
        try:
            raw_time_s, found = responder(spawn)
        except Exception as exc:
            sess.mark_idle()
            sess._record({"event": "interrupted"})
            raise SessionInterruptedError(
                f"responder failed at spawn {spawn.id}: {exc}", state=sess.state
            ) from exc
        sess.submit(raw_time_s, found)


def resume_session(state: SessionState, responder, event_sink=None) -> SessionState:
    """Continue an interrupted session to completion.

    The stop condition is evaluated before anything is presented, so a
    state that already satisfies it finishes without consulting the
    responder at all.
    """
    if state.phase.kind == "finished":
        raise SessionFinishedError("cannot resume a finished session")
    if state.config.digest() != state.config_digest:
        raise ConfigMismatchError("session config does not match its stored digest")
    sess = AssessmentSession(state, event_sink=event_sink)
    sess._record({"event": "resumed", "n": state.n_measured})
    if state.phase.kind == "idle":
        if state.model is None and state.n_measured >= state.config.n_init:
            sess._update_model()
        sess._present_next()
    return _drive(sess, responder)
