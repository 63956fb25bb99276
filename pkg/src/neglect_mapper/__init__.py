"""Gaze-driven mapping of visuospatial neglect in a head-mounted display.

The package estimates a subject's search-time field over the binocular
field of view with a Gaussian process, picks the next stimulus location by
active learning, and derives treatment cues and gaze metrics from the
fitted map. An HTTP service exposes the same flow to external clients.
"""

from .domain import (
    DEFAULT_BOUNDS,
    Acquisition,
    FovBounds,
    FovPoint,
    InitStrategy,
    Measurement,
    Mode,
    Region,
    SceneId,
    SessionConfig,
    SpawnPoint,
    StopKind,
    StopRule,
    make_spawn_points,
    normalize_target,
)
from .errors import (
    ConfigMismatchError,
    IncompleteTraceError,
    InsufficientDataError,
    InvalidMeasurementError,
    NeglectMapperError,
    NoBorderError,
    NoCandidatesError,
    NoCueAvailableError,
    NumericalError,
    OutOfDomainError,
    PreconditionError,
    SessionFinishedError,
    SessionInterruptedError,
    UndefinedRocError,
    ValidationError,
)
from .gp_core import (
    FitOptions,
    GpModel,
    Hyperparams,
    PosteriorPrediction,
    condition,
    fit,
    load_model,
    log_marginal_likelihood,
    predict,
    save_model,
)
from .active_learning import acquire_ivr, acquire_us, init_design, should_stop
from .assessment_engine import (
    AssessmentSession,
    load_session,
    resume_session,
    run_assessment,
    save_session,
)

__version__ = "0.1.0"

__all__ = [
    "Acquisition",
    "AssessmentSession",
    "ConfigMismatchError",
    "DEFAULT_BOUNDS",
    "FitOptions",
    "FovBounds",
    "FovPoint",
    "GpModel",
    "Hyperparams",
    "IncompleteTraceError",
    "InitStrategy",
    "InsufficientDataError",
    "InvalidMeasurementError",
    "Measurement",
    "Mode",
    "NeglectMapperError",
    "NoBorderError",
    "NoCandidatesError",
    "NoCueAvailableError",
    "NumericalError",
    "OutOfDomainError",
    "PosteriorPrediction",
    "PreconditionError",
    "Region",
    "SceneId",
    "SessionConfig",
    "SessionFinishedError",
    "SessionInterruptedError",
    "SpawnPoint",
    "StopKind",
    "StopRule",
    "UndefinedRocError",
    "ValidationError",
    "acquire_ivr",
    "acquire_us",
    "condition",
    "fit",
    "init_design",
    "load_model",
    "load_session",
    "log_marginal_likelihood",
    "make_spawn_points",
    "normalize_target",
    "predict",
    "resume_session",
    "run_assessment",
    "save_model",
    "save_session",
    "should_stop",
]
