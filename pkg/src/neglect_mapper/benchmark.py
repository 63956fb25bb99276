"""Strategy comparisons against simulated subjects.

Accuracy is scored as RMSE between the posterior mean and the subject's
noise-free expected field, both on the standard evaluation grid and in
normalized units.  Active strategies run the full engine loop; static
designs measure an up-front batch and fit once, which is the baseline the
adaptive loop has to beat.
"""

import time

import numpy as np

from . import gp_core, heatmap, subject_sim
from .domain import (
    DEFAULT_BOUNDS,
    Acquisition,
    InitStrategy,
    Mode,
    SceneId,
    SessionConfig,
    SpawnPoint,
    StopRule,
    make_spawn_points,
    normalize_target,
)
from .assessment_engine import AssessmentSession
from .active_learning import init_design
from .errors import PreconditionError

ACTIVE_STRATEGIES = ("us", "ivr")
STATIC_STRATEGIES = ("random", "grid")


def evaluation_points(bounds=DEFAULT_BOUNDS, nx=heatmap.DEFAULT_NX, ny=heatmap.DEFAULT_NY):
    az, el = heatmap.grid_centers(bounds, nx, ny)
    aa, ee = np.meshgrid(az, el)
    return np.column_stack([aa.ravel(), ee.ravel()])


def model_rmse(
    model: gp_core.GpModel,
    field_: subject_sim.NeglectField,
    t_max_s: float,
    points: np.ndarray | None = None,
) -> float:
    """RMSE of the posterior mean against the subject's expected field."""
    if points is None:
        points = evaluation_points()
    truth = subject_sim.true_normalized_field(field_, points, t_max_s)
    mean, _ = gp_core.predict_arrays(model, points)
    return float(np.sqrt(np.mean((mean - truth) ** 2)))


def _active_config(strategy: str, budget: int, seed: int, scene=SceneId.TABLE) -> SessionConfig:
    return SessionConfig(
        mode=Mode.ASSESSMENT,
        scene=scene,
        n_stimuli=budget,
        acquisition=Acquisition(strategy),
        stop=StopRule.fixed_budget(budget),
        seed=seed,
    )


def rmse_trajectory(
    field_: subject_sim.NeglectField,
    strategy: str,
    budget: int,
    seed: int,
    spawns: list[SpawnPoint] | None = None,
    t_max_s: float = 30.0,
    points: np.ndarray | None = None,
) -> dict[int, float]:
    """Run an active session and score the model after every measurement.

    Returns {n_measured: rmse}, starting at the first fitted model.  The
    trajectory at n is identical to a run with budget n, so one long run
    covers every smaller budget.
    """
    if strategy not in ACTIVE_STRATEGIES:
        raise PreconditionError(f"not an active strategy: {strategy}")
    if points is None:
        points = evaluation_points()
    config = _active_config(strategy, budget, seed)
    sess = AssessmentSession.new(config, spawns=spawns)
    responder = subject_sim.SimulatedResponder(field_, t_max_s=t_max_s, seed=seed)
    out = {}
    spawn = sess.current_stimulus()
    while spawn is not None:
        raw, found = responder(spawn)
        spawn = sess.submit(raw, found)
        if sess.state.model is not None:
            out[sess.state.n_measured] = model_rmse(
                sess.state.model, field_, t_max_s, points
            )
    return out


def run_arm(
    field_: subject_sim.NeglectField,
    strategy: str,
    budget: int,
    seed: int,
    spawns: list[SpawnPoint] | None = None,
    t_max_s: float = 30.0,
    points: np.ndarray | None = None,
) -> tuple[float, float]:
    """One (strategy, budget, seed) run.  Returns (rmse, wall_ms)."""
    if spawns is None:
        spawns = make_spawn_points(SceneId.TABLE)
    if points is None:
        points = evaluation_points()
    start = time.perf_counter()
    if strategy in ACTIVE_STRATEGIES:
        config = _active_config(strategy, budget, seed)
        sess = AssessmentSession.new(config, spawns=spawns)
        responder = subject_sim.SimulatedResponder(field_, t_max_s=t_max_s, seed=seed)
        spawn = sess.current_stimulus()
        while spawn is not None:
            raw, found = responder(spawn)
            spawn = sess.submit(raw, found)
        model = sess.state.model
    elif strategy in STATIC_STRATEGIES:
        ids = init_design(spawns, budget, InitStrategy(strategy), seed)
        by_id = {s.id: s for s in spawns}
        responder = subject_sim.SimulatedResponder(field_, t_max_s=t_max_s, seed=seed)
        X, y = [], []
        for sid in ids:
            raw, found = responder(by_id[sid])
            X.append([by_id[sid].pos.azimuth_deg, by_id[sid].pos.elevation_deg])
            y.append(normalize_target(raw, found, t_max_s))
        model = gp_core.fit(
            np.asarray(X), np.asarray(y), gp_core.FitOptions(seed=seed)
        )
    else:
        raise PreconditionError(f"unknown strategy {strategy!r}")
    wall_ms = (time.perf_counter() - start) * 1000.0
    return model_rmse(model, field_, t_max_s, points), wall_ms
