"""Gaze-trace metrics: active movement ranges and ROC analysis.

Traces are sampled nominally at 10 Hz with gaze = head + eye per axis.  The
spontaneous-activity measure (SAM) of a yaw channel is its leftmost plus its
rightmost excursion; for a subject who explores both sides evenly the two
cancel out and the measure sits near zero, while one-sided exploration
pushes it toward that side.
"""

import csv
import io
import json
import math
import os
from dataclasses import dataclass, replace

import numpy as np

from .errors import (
    IncompleteTraceError,
    PreconditionError,
    UndefinedRocError,
    ValidationError,
)

NOMINAL_SAMPLE_DT_S = 0.1

TRACE_CSV_FIELDS = (
    "t_s",
    "head_yaw_deg",
    "head_pitch_deg",
    "eye_yaw_deg",
    "eye_pitch_deg",
    "gaze_yaw_deg",
    "gaze_pitch_deg",
)

# Published screening cut-offs for the SAM, by (channel, depth region,
# difficulty level).  Recorded for reference; nothing in the package
# applies them automatically.
REFERENCE_SAM_CUTOFFS = {
    ("GR", "extrapersonal", 2): 0.00585,
    ("GR", "extrapersonal", 3): 0.0218,
    ("HR", "extrapersonal", 3): 7.4,
    ("ER", "near_peripersonal", 2): 3.96,
}


@dataclass(frozen=True)
class TraceSample:
    t_s: float
    head_yaw_deg: float
    head_pitch_deg: float
    eye_yaw_deg: float
    eye_pitch_deg: float
    gaze_yaw_deg: float
    gaze_pitch_deg: float

    def to_dict(self) -> dict:
        return {f: float(getattr(self, f)) for f in TRACE_CSV_FIELDS}

    @classmethod
    def from_dict(cls, d: dict) -> "TraceSample":
        return cls(**{f: float(d[f]) for f in TRACE_CSV_FIELDS})


@dataclass(frozen=True)
class ChannelRange:
    """Extreme yaw excursions of one channel over a trace."""

    max_left_deg: float
    max_right_deg: float

    @property
    def sam_deg(self) -> float:
        return self.max_left_deg + self.max_right_deg

    def to_dict(self) -> dict:
        return {
            "max_left_deg": float(self.max_left_deg),
            "max_right_deg": float(self.max_right_deg),
            "sam_deg": float(self.sam_deg),
        }


@dataclass(frozen=True)
class SamReport:
    """SAM per channel: GR is gaze yaw, HR head yaw, ER eye-in-head yaw."""

    gr: ChannelRange
    hr: ChannelRange
    er: ChannelRange

    def to_dict(self) -> dict:
        return {"GR": self.gr.to_dict(), "HR": self.hr.to_dict(), "ER": self.er.to_dict()}


def _require_finite(samples, fields):
    for i, s in enumerate(samples):
        for f in fields:
            if not math.isfinite(getattr(s, f)):
                raise IncompleteTraceError(f"sample {i} is missing {f}")


def decompose_gaze(samples: list[TraceSample]) -> list[TraceSample]:
    """Fill the eye channel from gaze minus head, per axis."""
    if not samples:
        raise PreconditionError("empty trace")
    _require_finite(
        samples, ("gaze_yaw_deg", "gaze_pitch_deg", "head_yaw_deg", "head_pitch_deg")
    )
    return [
        replace(
            s,
            eye_yaw_deg=s.gaze_yaw_deg - s.head_yaw_deg,
            eye_pitch_deg=s.gaze_pitch_deg - s.head_pitch_deg,
        )
        for s in samples
    ]


def compose_gaze(samples: list[TraceSample]) -> list[TraceSample]:
    """Fill the gaze channel from head plus eye, per axis."""
    if not samples:
        raise PreconditionError("empty trace")
    _require_finite(
        samples, ("head_yaw_deg", "head_pitch_deg", "eye_yaw_deg", "eye_pitch_deg")
    )
    return [
        replace(
            s,
            gaze_yaw_deg=s.head_yaw_deg + s.eye_yaw_deg,
            gaze_pitch_deg=s.head_pitch_deg + s.eye_pitch_deg,
        )
        for s in samples
    ]


def compute_sam(samples: list[TraceSample]) -> SamReport:
    """Extreme left/right excursions of each yaw channel."""
    if not samples:
        raise PreconditionError("empty trace")
    _require_finite(samples, ("gaze_yaw_deg", "head_yaw_deg", "eye_yaw_deg"))

    def channel(attr):
        vals = [getattr(s, attr) for s in samples]
        return ChannelRange(max_left_deg=min(vals), max_right_deg=max(vals))

    return SamReport(
        gr=channel("gaze_yaw_deg"),
        hr=channel("head_yaw_deg"),
        er=channel("eye_yaw_deg"),
    )


def find_gaps(samples: list[TraceSample], nominal_dt_s: float = NOMINAL_SAMPLE_DT_S,
              rel_tol: float = 0.5) -> list[int]:
    """Indices i where the step from sample i-1 to i exceeds the nominal rate."""
    gaps = []
    for i in range(1, len(samples)):
        if samples[i].t_s - samples[i - 1].t_s > nominal_dt_s * (1.0 + rel_tol):
            gaps.append(i)
    return gaps


@dataclass(frozen=True)
class RocCurve:
    """ROC over score thresholds, highest threshold first.

    cutoff is the Youden-optimal threshold (ties resolved to the lower
    threshold value); auc is the trapezoidal area under the curve.
    """

    thresholds: tuple[float, ...]
    tpr: tuple[float, ...]
    fpr: tuple[float, ...]
    auc: float
    cutoff: float

    def to_dict(self) -> dict:
        return {
            "thresholds": [float(t) for t in self.thresholds],
            "tpr": [float(v) for v in self.tpr],
            "fpr": [float(v) for v in self.fpr],
            "auc": float(self.auc),
            "cutoff": float(self.cutoff),
        }


def roc_curve(scores, labels) -> RocCurve:
    """ROC curve for binary labels where larger scores mean more positive.

    Thresholds sit halfway between consecutive distinct scores, padded with
    +/- infinity, and a sample counts as predicted-positive when its score
    is at or above the threshold.
    """
    s = np.asarray(scores, dtype=float).ravel()
    lab = np.asarray(labels).ravel()
    if s.shape[0] != lab.shape[0]:
        raise PreconditionError("scores and labels length mismatch")
    if s.shape[0] == 0:
        raise UndefinedRocError("empty inputs")
    if not np.all(np.isfinite(s)):
        raise ValidationError("scores must be finite")
    pos = lab.astype(bool)
    n_pos = int(np.sum(pos))
    n_neg = int(lab.shape[0] - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise UndefinedRocError("need at least one positive and one negative label")

    uniq = np.unique(s)
    mids = (uniq[:-1] + uniq[1:]) / 2.0
    thresholds = np.concatenate(([np.inf], mids[::-1], [-np.inf]))

    tpr, fpr = [], []
    for th in thresholds:
        pred = s >= th
        tpr.append(float(np.sum(pred & pos)) / n_pos)
        fpr.append(float(np.sum(pred & ~pos)) / n_neg)
    auc = float(np.trapezoid(tpr, fpr))

    best_j = -np.inf
    cutoff = thresholds[0]
    for th, t, f in zip(thresholds, tpr, fpr):
        j = t - f
        if j > best_j or (j == best_j and th < cutoff):
            best_j, cutoff = j, th
    return RocCurve(
        thresholds=tuple(float(t) for t in thresholds),
        tpr=tuple(tpr),
        fpr=tuple(fpr),
        auc=auc,
        cutoff=float(cutoff),
    )


def trace_to_csv(samples: list[TraceSample]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=TRACE_CSV_FIELDS)
    writer.writeheader()
    for s in samples:
        writer.writerow(s.to_dict())
    return buf.getvalue()


def save_trace(samples: list[TraceSample], path: str | os.PathLike):
    path = str(path)
    if path.endswith(".jsonl"):
        with open(path, "w") as fh:
            for s in samples:
                fh.write(json.dumps(s.to_dict()) + "\n")
    else:
        with open(path, "w", newline="") as fh:
            fh.write(trace_to_csv(samples))


def load_trace(path: str | os.PathLike) -> list[TraceSample]:
    """Read a trace from CSV (with header) or JSON-lines, by extension."""
    path = str(path)
    samples = []
    if path.endswith(".jsonl"):
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if line:
                    samples.append(TraceSample.from_dict(json.loads(line)))
        return samples
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(TRACE_CSV_FIELDS) - set(reader.fieldnames or ())
        if missing:
            raise ValidationError(f"trace file is missing columns: {sorted(missing)}")
        for row in reader:
            samples.append(TraceSample.from_dict(row))
    return samples
