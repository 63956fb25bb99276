"""Shared vocabulary: field-of-view geometry, scenes, configs, measurements.

Angles are decimal degrees, times decimal seconds, everywhere.  All types
serialize to plain dicts (and back) so sessions can be written as JSON; the
canonical form sorts keys and uses compact separators, which makes repeated
serializations byte-comparable.
"""

import hashlib
import json
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import InvalidMeasurementError, OutOfDomainError, ValidationError

AZIMUTH_MIN_DEG = -50.5
AZIMUTH_MAX_DEG = 50.5
ELEVATION_MIN_DEG = -30.0
ELEVATION_MAX_DEG = 30.0

DEFAULT_T_MAX_S = 30.0
DEFAULT_DWELL_S = 1.0
DEFAULT_MIN_GAZE_DISTANCE_DEG = 2.0
DEFAULT_N_INIT = 5

MIN_NORMALIZED_TARGET = 0.001

SPAWN_GRID_NX = 15
SPAWN_GRID_NY = 9


def canonical_json(obj) -> str:
    """Serialize a plain structure to its canonical JSON string."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


@dataclass(frozen=True)
class FovPoint:
    """A direction in the head-fixed field of view."""

    azimuth_deg: float
    elevation_deg: float

    def __post_init__(self):
        az, el = self.azimuth_deg, self.elevation_deg
        if not (math.isfinite(az) and math.isfinite(el)):
            raise OutOfDomainError("FovPoint coordinates must be finite")
        if not (AZIMUTH_MIN_DEG <= az <= AZIMUTH_MAX_DEG):
            raise OutOfDomainError(
                f"azimuth {az} outside [{AZIMUTH_MIN_DEG}, {AZIMUTH_MAX_DEG}]",
                field="azimuth_deg",
            )
        if not (ELEVATION_MIN_DEG <= el <= ELEVATION_MAX_DEG):
            raise OutOfDomainError(
                f"elevation {el} outside [{ELEVATION_MIN_DEG}, {ELEVATION_MAX_DEG}]",
                field="elevation_deg",
            )

    def distance_to(self, other: "FovPoint") -> float:
        return math.hypot(
            self.azimuth_deg - other.azimuth_deg,
            self.elevation_deg - other.elevation_deg,
        )

    def to_dict(self) -> dict:
        return {
            "azimuth_deg": float(self.azimuth_deg),
            "elevation_deg": float(self.elevation_deg),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FovPoint":
        return cls(float(d["azimuth_deg"]), float(d["elevation_deg"]))


@dataclass(frozen=True)
class FovBounds:
    """An axis-aligned rectangle of view directions."""

    az_min_deg: float = AZIMUTH_MIN_DEG
    az_max_deg: float = AZIMUTH_MAX_DEG
    el_min_deg: float = ELEVATION_MIN_DEG
    el_max_deg: float = ELEVATION_MAX_DEG

    def validate(self):
        if not (self.az_min_deg < self.az_max_deg and self.el_min_deg < self.el_max_deg):
            raise ValidationError("degenerate bounds: min must be below max")

    @property
    def az_span(self) -> float:
        return self.az_max_deg - self.az_min_deg

    @property
    def el_span(self) -> float:
        return self.el_max_deg - self.el_min_deg

    def contains(self, az_deg: float, el_deg: float) -> bool:
        return (
            self.az_min_deg <= az_deg <= self.az_max_deg
            and self.el_min_deg <= el_deg <= self.el_max_deg
        )

    def to_dict(self) -> dict:
        return {
            "az_min_deg": float(self.az_min_deg),
            "az_max_deg": float(self.az_max_deg),
            "el_min_deg": float(self.el_min_deg),
            "el_max_deg": float(self.el_max_deg),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FovBounds":
        return cls(
            float(d["az_min_deg"]),
            float(d["az_max_deg"]),
            float(d["el_min_deg"]),
            float(d["el_max_deg"]),
        )


DEFAULT_BOUNDS = FovBounds()


class Region(Enum):
    NEAR_PERIPERSONAL = "near_peripersonal"
    FAR_PERIPERSONAL = "far_peripersonal"
    EXTRAPERSONAL = "extrapersonal"


class SceneId(Enum):
    """The three virtual scenes, each tied to a depth region."""

    TABLE = "table"
    KITCHEN = "kitchen"
    PLAYGROUND = "playground"

    @property
    def region(self) -> Region:
        return _SCENE_REGION[self]


_SCENE_REGION = {
    SceneId.TABLE: Region.NEAR_PERIPERSONAL,
    SceneId.KITCHEN: Region.FAR_PERIPERSONAL,
    SceneId.PLAYGROUND: Region.EXTRAPERSONAL,
}

# Fixed layout seeds so every session in a scene shares spawn geometry.
_SCENE_LAYOUT_SEED = {
    SceneId.TABLE: 11,
    SceneId.KITCHEN: 12,
    SceneId.PLAYGROUND: 13,
}


class Mode(Enum):
    ASSESSMENT = "assessment"
    TREATMENT = "treatment"


class InitStrategy(Enum):
    RANDOM = "random"
    GRID = "grid"
    LATIN_HYPERCUBE = "latin_hypercube"
    SOBOL = "sobol"


class Acquisition(Enum):
    US = "us"
    IVR = "ivr"


class StopKind(Enum):
    FIXED_BUDGET = "fixed_budget"
    POSTERIOR_CONVERGENCE = "posterior_convergence"


@dataclass(frozen=True)
class StopRule:
    """When the adaptive loop stops asking for more stimuli.

    FixedBudget stops after ``budget`` measurements.  PosteriorConvergence
    stops once the posterior mean, snapshotted on a fixed grid after each
    measurement, moves less than ``epsilon`` (max-abs) between consecutive
    snapshots for ``patience`` pairs in a row.
    """

    kind: StopKind
    budget: int = 0
    epsilon: float = 0.02
    patience: int = 2

    @classmethod
    def fixed_budget(cls, budget: int) -> "StopRule":
        return cls(kind=StopKind.FIXED_BUDGET, budget=int(budget))

    @classmethod
    def posterior_convergence(cls, epsilon: float = 0.02, patience: int = 2) -> "StopRule":
        return cls(kind=StopKind.POSTERIOR_CONVERGENCE, epsilon=float(epsilon), patience=int(patience))

    def validate(self):
        if self.kind is StopKind.FIXED_BUDGET:
            if self.budget < 1:
                raise ValidationError("budget must be positive", field="stop.budget")
        else:
            if not (math.isfinite(self.epsilon) and self.epsilon > 0):
                raise ValidationError("epsilon must be positive", field="stop.epsilon")
            if self.patience < 1:
                raise ValidationError("patience must be at least 1", field="stop.patience")

    def to_dict(self) -> dict:
        if self.kind is StopKind.FIXED_BUDGET:
            return {"kind": self.kind.value, "budget": int(self.budget)}
        return {
            "kind": self.kind.value,
            "epsilon": float(self.epsilon),
            "patience": int(self.patience),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StopRule":
        kind = StopKind(d["kind"])
        if kind is StopKind.FIXED_BUDGET:
            return cls.fixed_budget(d["budget"])
        return cls.posterior_convergence(d.get("epsilon", 0.02), d.get("patience", 2))


@dataclass(frozen=True)
class SpawnPoint:
    """A discrete location where a stimulus may appear."""

    id: int
    pos: FovPoint
    scene: SceneId

    def to_dict(self) -> dict:
        return {"id": int(self.id), "pos": self.pos.to_dict(), "scene": self.scene.value}

    @classmethod
    def from_dict(cls, d: dict) -> "SpawnPoint":
        return cls(int(d["id"]), FovPoint.from_dict(d["pos"]), SceneId(d["scene"]))


@dataclass(frozen=True)
class SessionConfig:
    """Everything the therapist chooses before a session starts."""

    mode: Mode
    scene: SceneId
    n_stimuli: int
    t_max_s: float = DEFAULT_T_MAX_S
    min_gaze_distance_deg: float = DEFAULT_MIN_GAZE_DISTANCE_DEG
    difficulty: int = 0
    dwell_s: float = DEFAULT_DWELL_S
    n_init: int = DEFAULT_N_INIT
    init_strategy: InitStrategy = InitStrategy.RANDOM
    acquisition: Acquisition = Acquisition.US
    stop: StopRule = field(default_factory=lambda: StopRule.fixed_budget(40))
    seed: int = 0

    def validate(self):
        if self.n_stimuli < 1:
            raise ValidationError("n_stimuli must be positive", field="n_stimuli")
        if not (math.isfinite(self.t_max_s) and self.t_max_s > 0):
            raise ValidationError("t_max_s must be positive", field="t_max_s")
        if not (math.isfinite(self.min_gaze_distance_deg) and self.min_gaze_distance_deg > 0):
            raise ValidationError(
                "min_gaze_distance_deg must be positive", field="min_gaze_distance_deg"
            )
        if self.difficulty < 0:
            raise ValidationError("difficulty must be non-negative", field="difficulty")
        if not (math.isfinite(self.dwell_s) and 0 < self.dwell_s < self.t_max_s):
            raise ValidationError(
                "dwell_s must be positive and below t_max_s", field="dwell_s"
            )
        if self.n_init < 2:
            raise ValidationError("n_init must be at least 2", field="n_init")
        if self.n_init > self.n_stimuli:
            raise ValidationError("n_init cannot exceed n_stimuli", field="n_init")
        if not (0 <= self.seed < 2**64):
            raise ValidationError("seed must fit in 64 bits", field="seed")
        self.stop.validate()
        if self.stop.kind is StopKind.FIXED_BUDGET and self.stop.budget < self.n_init:
            raise ValidationError(
                "stop budget cannot be below n_init", field="stop.budget"
            )

    def to_dict(self) -> dict:
        return {
            "mode": self.mode.value,
            "scene": self.scene.value,
            "n_stimuli": int(self.n_stimuli),
            "t_max_s": float(self.t_max_s),
            "min_gaze_distance_deg": float(self.min_gaze_distance_deg),
            "difficulty": int(self.difficulty),
            "dwell_s": float(self.dwell_s),
            "n_init": int(self.n_init),
            "init_strategy": self.init_strategy.value,
            "acquisition": self.acquisition.value,
            "stop": self.stop.to_dict(),
            "seed": int(self.seed),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SessionConfig":
        def parse_enum(enum_cls, key, default=None):
            raw = d.get(key, default)
            if raw is None:
                raise ValidationError(f"missing required field {key}", field=key)
            try:
                return enum_cls(raw)
            except ValueError:
                allowed = ", ".join(m.value for m in enum_cls)
                raise ValidationError(
                    f"{key} must be one of: {allowed}", field=key
                ) from None

        def parse_num(key, cast, default=None):
            raw = d.get(key, default)
            if raw is None:
                raise ValidationError(f"missing required field {key}", field=key)
            try:
                return cast(raw)
            except (TypeError, ValueError):
                raise ValidationError(f"{key} is not a valid number", field=key) from None

        defaults = {
            "t_max_s": DEFAULT_T_MAX_S,
            "min_gaze_distance_deg": DEFAULT_MIN_GAZE_DISTANCE_DEG,
            "difficulty": 0,
            "dwell_s": DEFAULT_DWELL_S,
            "n_init": DEFAULT_N_INIT,
            "seed": 0,
        }
        stop_raw = d.get("stop")
        if stop_raw is None:
            stop = StopRule.fixed_budget(parse_num("n_stimuli", int))
        else:
            try:
                stop = StopRule.from_dict(stop_raw)
            except (KeyError, TypeError, ValueError):
                raise ValidationError("malformed stop rule", field="stop") from None
        cfg = cls(
            mode=parse_enum(Mode, "mode"),
            scene=parse_enum(SceneId, "scene"),
            n_stimuli=parse_num("n_stimuli", int),
            t_max_s=parse_num("t_max_s", float, defaults["t_max_s"]),
            min_gaze_distance_deg=parse_num(
                "min_gaze_distance_deg", float, defaults["min_gaze_distance_deg"]
            ),
            difficulty=parse_num("difficulty", int, defaults["difficulty"]),
            dwell_s=parse_num("dwell_s", float, defaults["dwell_s"]),
            n_init=parse_num("n_init", int, defaults["n_init"]),
            init_strategy=parse_enum(InitStrategy, "init_strategy", InitStrategy.RANDOM.value),
            acquisition=parse_enum(Acquisition, "acquisition", Acquisition.US.value),
            stop=stop,
            seed=parse_num("seed", int, defaults["seed"]),
        )
        cfg.validate()
        return cfg

    def digest(self) -> str:
        """Stable hash of the canonical config JSON."""
        return hashlib.sha256(canonical_json(self.to_dict()).encode()).hexdigest()


def normalize_target(raw_time_s: float, found: bool, t_max_s: float = DEFAULT_T_MAX_S) -> float:
    """Map a raw search time onto the (0, 1] target scale.

    A miss always maps to 1.0.  A hit maps to its fraction of the timeout,
    clamped above t_max from the measurement side and floored at
    MIN_NORMALIZED_TARGET so instant finds stay strictly positive.
    """
    if not found:
        return 1.0
    if not math.isfinite(raw_time_s) or raw_time_s < 0:
        raise InvalidMeasurementError(f"raw_time_s must be finite and non-negative, got {raw_time_s}")
    if not (math.isfinite(t_max_s) and t_max_s > 0):
        raise InvalidMeasurementError(f"t_max_s must be positive, got {t_max_s}")
    y = min(raw_time_s, t_max_s) / t_max_s
    return max(y, MIN_NORMALIZED_TARGET)


@dataclass(frozen=True)
class Measurement:
    """One completed stimulus presentation."""

    spawn_id: int
    raw_time_s: float
    found: bool
    y: float

    @classmethod
    def from_response(
        cls, spawn_id: int, raw_time_s: float, found: bool, t_max_s: float
    ) -> "Measurement":
        if not found:
            raw_time_s = t_max_s
        y = normalize_target(raw_time_s, found, t_max_s)
        return cls(int(spawn_id), float(raw_time_s), bool(found), float(y))

    def to_dict(self) -> dict:
        return {
            "spawn_id": int(self.spawn_id),
            "raw_time_s": float(self.raw_time_s),
            "found": bool(self.found),
            "y": float(self.y),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Measurement":
        return cls(int(d["spawn_id"]), float(d["raw_time_s"]), bool(d["found"]), float(d["y"]))


def make_spawn_points(
    scene: SceneId,
    nx: int = SPAWN_GRID_NX,
    ny: int = SPAWN_GRID_NY,
    jitter: float = 0.35,
    seed: int | None = None,
    bounds: FovBounds = DEFAULT_BOUNDS,
) -> list[SpawnPoint]:
    """Default spawn layout: a uniform grid with seeded per-point jitter.

    ``jitter`` is the fraction of a half-cell each point may move per axis,
    so points never leave their cell and stay inside the bounds.  With
    seed=None the layout seed is a fixed per-scene constant, making the
    layout a property of the scene rather than of any one session.
    """
    if nx < 1 or ny < 1:
        raise ValidationError("spawn grid needs at least one cell per axis")
    if not (0 <= jitter < 1):
        raise ValidationError("jitter fraction must lie in [0, 1)")
    if seed is None:
        seed = _SCENE_LAYOUT_SEED[scene]
    rng = np.random.default_rng(seed)
    cell_w = bounds.az_span / nx
    cell_h = bounds.el_span / ny
    points = []
    for i in range(ny):
        el = bounds.el_min_deg + (i + 0.5) * cell_h
        for j in range(nx):
            az = bounds.az_min_deg + (j + 0.5) * cell_w
            daz = rng.uniform(-jitter, jitter) * cell_w / 2
            del_ = rng.uniform(-jitter, jitter) * cell_h / 2
            idx = i * nx + j
            points.append(
                SpawnPoint(idx, FovPoint(az + daz, el + del_), scene)
            )
    return points


def spawn_positions(spawns: list[SpawnPoint]) -> np.ndarray:
    """Stack spawn positions into an (n, 2) array of [azimuth, elevation]."""
    return np.array(
        [[s.pos.azimuth_deg, s.pos.elevation_deg] for s in spawns], dtype=float
    ).reshape(len(spawns), 2)
