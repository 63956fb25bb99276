"""Initial designs, acquisition functions and stopping rules.

The continuous design generators (grid, Latin hypercube, Sobol) place points
in the field-of-view rectangle and snap each one to the nearest spawn point
not already taken; the random design draws spawn ids directly.  Acquisition
scores every unmeasured candidate and breaks ties toward the lowest id so
runs replay exactly.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

from . import gp_core
from .domain import (
    DEFAULT_BOUNDS,
    FovBounds,
    InitStrategy,
    SpawnPoint,
    StopKind,
    StopRule,
    spawn_positions,
)
from .errors import NoCandidatesError, PreconditionError

__all__ = [
    "AcquisitionResult",
    "StopRule",
    "StopKind",
    "acquire_ivr",
    "acquire_us",
    "init_design",
    "should_stop",
]


@dataclass(frozen=True)
class AcquisitionResult:
    """The chosen spawn id plus the score of every candidate."""

    chosen_id: int
    scores: dict[int, float]

    def to_dict(self) -> dict:
        return {
            "chosen_id": int(self.chosen_id),
            "scores": {str(k): float(v) for k, v in self.scores.items()},
        }


def _grid_shape(n: int, aspect: float) -> tuple[int, int]:
    """Factor n into (rows, cols) closest to the target aspect ratio."""
    best = None
    for rows in range(1, n + 1):
        if n % rows:
            continue
        cols = n // rows
        score = abs(math.log((cols / rows) / aspect))
        if best is None or score < best[0]:
            best = (score, rows, cols)
    return best[1], best[2]


def _continuous_design(
    strategy: InitStrategy, n0: int, seed: int, bounds: FovBounds
) -> np.ndarray:
    if strategy is InitStrategy.GRID:
        rows, cols = _grid_shape(n0, bounds.az_span / bounds.el_span)
        pts = []
        for i in range(rows):
            el = bounds.el_min_deg + (i + 0.5) * bounds.el_span / rows
            for j in range(cols):
                az = bounds.az_min_deg + (j + 0.5) * bounds.az_span / cols
                pts.append((az, el))
        return np.array(pts)
    if strategy is InitStrategy.LATIN_HYPERCUBE:
        unit = qmc.LatinHypercube(d=2, seed=seed).random(n0)
    elif strategy is InitStrategy.SOBOL:
        m = 1 << max(0, (n0 - 1).bit_length())
        unit = qmc.Sobol(d=2, scramble=True, seed=seed).random(m)[:n0]
    else:
        raise PreconditionError(f"no continuous design for {strategy}")
    lo = [bounds.az_min_deg, bounds.el_min_deg]
    hi = [bounds.az_max_deg, bounds.el_max_deg]
    return qmc.scale(unit, lo, hi)


def _snap_to_spawns(design: np.ndarray, spawns: list[SpawnPoint]) -> list[int]:
    pos = spawn_positions(spawns)
    ids = np.array([s.id for s in spawns])
    order = np.argsort(ids, kind="stable")
    pos, ids = pos[order], ids[order]
    taken = np.zeros(len(spawns), dtype=bool)
    chosen = []
    for p in design:
        d2 = (pos[:, 0] - p[0]) ** 2 + (pos[:, 1] - p[1]) ** 2
        d2 = np.where(taken, np.inf, d2)
        k = int(np.argmin(d2))
        taken[k] = True
        chosen.append(int(ids[k]))
    return chosen


def init_design(
    spawns: list[SpawnPoint],
    n0: int,
    strategy: InitStrategy,
    seed: int,
    bounds: FovBounds = DEFAULT_BOUNDS,
) -> list[int]:
    """Pick the first n0 spawn ids to present, before any model exists."""
    if not spawns:
        raise PreconditionError("no spawn points to choose from")
    if not (1 <= n0 <= len(spawns)):
        raise PreconditionError(
            f"n0 must lie in [1, {len(spawns)}], got {n0}"
        )
    ids = sorted(s.id for s in spawns)
    if len(set(ids)) != len(ids):
        raise PreconditionError("spawn ids must be unique")
    if strategy is InitStrategy.RANDOM:
        rng = np.random.default_rng(seed)
        return [int(i) for i in rng.choice(ids, size=n0, replace=False)]
    design = _continuous_design(strategy, n0, seed, bounds)
    return _snap_to_spawns(design, spawns)


def _ordered_candidates(candidates: list[SpawnPoint]):
    if not candidates:
        raise NoCandidatesError("no unmeasured candidates remain")
    ordered = sorted(candidates, key=lambda s: s.id)
    return ordered, spawn_positions(ordered)


def _pick_best(ordered: list[SpawnPoint], scores: np.ndarray) -> AcquisitionResult:
    # Candidates are id-sorted, so argmax lands on the lowest tied id.
    best = int(np.argmax(scores))
    return AcquisitionResult(
        chosen_id=int(ordered[best].id),
        scores={int(s.id): float(v) for s, v in zip(ordered, scores)},
    )


def acquire_us(model: gp_core.GpModel, candidates: list[SpawnPoint]) -> AcquisitionResult:
    """Uncertainty sampling: the candidate with the largest posterior variance."""
    ordered, pos = _ordered_candidates(candidates)
    _, var = gp_core.predict_arrays(model, pos)
    return _pick_best(ordered, var)


def acquire_ivr(
    model: gp_core.GpModel,
    candidates: list[SpawnPoint],
    evaluation_set: list[SpawnPoint],
) -> AcquisitionResult:
    """Integrated variance reduction over the evaluation set.

    For each candidate x, the summed posterior-variance drop across the
    evaluation points equals

        sum_j cov(x_j, x)^2 / (var(x) + sigma_eps2)

    with all quantities posterior to the current data, so one covariance
    solve scores every candidate without refitting.
    """
    ordered, pos = _ordered_candidates(candidates)
    if not evaluation_set:
        raise PreconditionError("evaluation set is empty")
    eval_pos = spawn_positions(evaluation_set)
    cov_ce = gp_core.posterior_cov(model, pos, eval_pos)
    _, var_c = gp_core.predict_arrays(model, pos)
    denom = var_c + model.theta.sigma_eps2
    scores = np.sum(cov_ce**2, axis=1) / denom
    return _pick_best(ordered, scores)


def should_stop(history: list[np.ndarray], rule: StopRule, n_measured: int) -> bool:
    """Decide whether the adaptive loop is done.

    history holds posterior-mean snapshots on a fixed grid, oldest first;
    only the convergence rule reads it.
    """
    rule.validate()
    if rule.kind is StopKind.FIXED_BUDGET:
        return n_measured >= rule.budget
    if len(history) < rule.patience + 1:
        return False
    recent = history[-(rule.patience + 1):]
    for prev, cur in zip(recent, recent[1:]):
        if float(np.max(np.abs(np.asarray(cur) - np.asarray(prev)))) >= rule.epsilon:
            return False
    return True
