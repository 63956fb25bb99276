"""Border extraction and cue scheduling for treatment sessions.

The neglect border is the level set of the posterior mean at a chosen
threshold, pulled out of the heatmap grid marching-squares style: every
grid edge whose endpoints straddle the threshold contributes one linearly
interpolated crossing point.  Cells still hidden by the uncertainty mask
take no part, so the border never extends into unexplored territory.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import gp_core, heatmap
from .domain import FovBounds, FovPoint, Measurement, SessionConfig, SpawnPoint
from .errors import (
    NoBorderError,
    NoCueAvailableError,
    PreconditionError,
    SessionFinishedError,
)

DEFAULT_BORDER_THRESHOLD = 0.5
DEFAULT_CUE_BAND_DEG = 5.0
CUE_HISTORY_WINDOW = 3
_CUE_BAND_WIDENINGS = 3


@dataclass(frozen=True)
class BorderSet:
    """Crossing points of the posterior mean through a threshold."""

    points: tuple[FovPoint, ...]
    threshold: float
    session_ref: str = ""

    @property
    def mean_azimuth_deg(self) -> float:
        if not self.points:
            raise NoBorderError("border is empty")
        return float(np.mean([p.azimuth_deg for p in self.points]))

    def to_dict(self) -> dict:
        return {
            "points": [p.to_dict() for p in self.points],
            "threshold": float(self.threshold),
            "session_ref": self.session_ref,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BorderSet":
        return cls(
            tuple(FovPoint.from_dict(p) for p in d["points"]),
            float(d["threshold"]),
            d.get("session_ref", ""),
        )


def _edge_crossing(pa, va, pb, vb, threshold):
    t = (threshold - va) / (vb - va)
    return (pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1]))


def extract_border(
    model: gp_core.GpModel,
    threshold: float = DEFAULT_BORDER_THRESHOLD,
    bounds: FovBounds | None = None,
    nx: int = heatmap.DEFAULT_NX,
    ny: int = heatmap.DEFAULT_NY,
    mask_threshold: float | None = None,
    session_ref: str = "",
) -> BorderSet:
    """Extract the threshold level set of the posterior mean."""
    if not math.isfinite(threshold):
        raise PreconditionError("threshold must be finite")
    h = heatmap.evaluate_grid(model, bounds, nx, ny, mask_threshold)
    az, el = heatmap.grid_centers(h.bounds, nx, ny)
    inside = h.mean > threshold
    crossings = set()

    def consider(i0, j0, i1, j1):
        if h.mask[i0, j0] or h.mask[i1, j1]:
            return
        if inside[i0, j0] == inside[i1, j1]:
            return
        p = _edge_crossing(
            (az[j0], el[i0]), h.mean[i0, j0], (az[j1], el[i1]), h.mean[i1, j1], threshold
        )
        crossings.add((round(p[0], 9), round(p[1], 9)))

    for i in range(ny):
        for j in range(nx - 1):
            consider(i, j, i, j + 1)
    for i in range(ny - 1):
        for j in range(nx):
            consider(i, j, i + 1, j)

    points = tuple(FovPoint(a, e) for a, e in sorted(crossings))
    return BorderSet(points=points, threshold=float(threshold), session_ref=session_ref)


def next_cue(
    border: BorderSet,
    spawns: list[SpawnPoint],
    band_deg: float = DEFAULT_CUE_BAND_DEG,
    history: list[int] | None = None,
    seed: int = 0,
) -> SpawnPoint:
    """Draw a cue spawn uniformly from the band around the border.

    history lists recently cued spawn ids to keep out of the draw; pass the
    last few cues so the same spot is not hammered twice in a row.
    """
    if not border.points:
        raise NoBorderError("cannot cue without a border")
    if not (math.isfinite(band_deg) and band_deg > 0):
        raise PreconditionError("band_deg must be positive")
    blocked = set(history or [])
    border_pos = np.array(
        [[p.azimuth_deg, p.elevation_deg] for p in border.points]
    )
    eligible = []
    for s in sorted(spawns, key=lambda s: s.id):
        if s.id in blocked:
            continue
        d = np.hypot(
            border_pos[:, 0] - s.pos.azimuth_deg, border_pos[:, 1] - s.pos.elevation_deg
        )
        if float(np.min(d)) <= band_deg:
            eligible.append(s)
    if not eligible:
        raise NoCueAvailableError(
            f"no spawn within {band_deg} deg of the border (after exclusions)"
        )
    rng = np.random.default_rng(seed)
    return eligible[int(rng.integers(len(eligible)))]


@dataclass(frozen=True)
class BorderShiftRow:
    session_ref: str
    mean_border_az_deg: float
    delta_deg: float | None

    def to_dict(self) -> dict:
        return {
            "session_ref": self.session_ref,
            "mean_border_az_deg": float(self.mean_border_az_deg),
            "delta_deg": None if self.delta_deg is None else float(self.delta_deg),
        }


@dataclass(frozen=True)
class BorderShiftReport:
    """Session-over-session movement of the mean border azimuth.

    Positive deltas mean the border moved rightward.  Sessions whose border
    came back empty are left out rather than poisoning the differences.
    """

    rows: tuple[BorderShiftRow, ...]

    def to_dict(self) -> dict:
        return {"rows": [r.to_dict() for r in self.rows]}

    def to_csv(self) -> str:
        lines = ["session_id,mean_border_az_deg,delta_deg"]
        for r in self.rows:
            delta = "" if r.delta_deg is None else f"{r.delta_deg:.6f}"
            lines.append(f"{r.session_ref},{r.mean_border_az_deg:.6f},{delta}")
        return "\n".join(lines) + "\n"


def border_shift(borders: list[BorderSet]) -> BorderShiftReport:
    """Track mean border azimuth across sessions, in the order given."""
    usable = [b for b in borders if b.points]
    if not usable:
        raise NoBorderError("no session produced a border")
    rows = []
    prev = None
    for b in usable:
        m = b.mean_azimuth_deg
        rows.append(
            BorderShiftRow(
                session_ref=b.session_ref,
                mean_border_az_deg=m,
                delta_deg=None if prev is None else m - prev,
            )
        )
        prev = m
    return BorderShiftReport(rows=tuple(rows))


class TreatmentSession:
    """Serves cue stimuli near a previously assessed border.

    Works from a saved model: the border is extracted once up front, each
    cue is a seeded uniform draw from the band around it (with the band
    doubling a few times when no spawn fits), and responses are recorded
    without touching the model.
    """

    def __init__(
        self,
        config: SessionConfig,
        model: gp_core.GpModel,
        spawns: list[SpawnPoint],
        threshold: float = DEFAULT_BORDER_THRESHOLD,
        band_deg: float = DEFAULT_CUE_BAND_DEG,
        session_id: str = "",
    ):
        config.validate()
        self.config = config
        self.model = model
        self.spawns = list(spawns)
        self.band_deg = float(band_deg)
        self.session_id = session_id
        self.border = extract_border(model, threshold, session_ref=session_id)
        self.cue_history: list[int] = []
        self.responses = []
        self.pending_cue_id: int | None = None

    @property
    def finished(self) -> bool:
        return len(self.responses) >= self.config.n_stimuli

    def current_spawn(self) -> SpawnPoint | None:
        if self.pending_cue_id is None:
            return None
        return next(s for s in self.spawns if s.id == self.pending_cue_id)

    def issue_cue(self) -> SpawnPoint:
        if self.finished:
            raise SessionFinishedError("treatment session already finished")
        if self.pending_cue_id is not None:
            return self.current_spawn()
        seq = np.random.SeedSequence(self.config.seed, spawn_key=(4, len(self.cue_history)))
        seed = int(seq.generate_state(1, np.uint64)[0])
        band = self.band_deg
        recent = self.cue_history[-CUE_HISTORY_WINDOW:]
        for _ in range(_CUE_BAND_WIDENINGS + 1):
            try:
                spawn = next_cue(self.border, self.spawns, band, recent, seed)
                break
            except NoCueAvailableError:
                band *= 2.0
        else:
            raise NoCueAvailableError(
                f"no spawn within {band / 2.0} deg of the border"
            )
        self.pending_cue_id = spawn.id
        self.cue_history.append(spawn.id)
        return spawn

    def submit(self, raw_time_s: float, found: bool):
        if self.finished:
            raise SessionFinishedError("treatment session already finished")
        if self.pending_cue_id is None:
            raise PreconditionError("no cue outstanding")
        m = Measurement.from_response(
            self.pending_cue_id, raw_time_s, found, self.config.t_max_s
        )
        self.responses.append(m)
        self.pending_cue_id = None
        return m
