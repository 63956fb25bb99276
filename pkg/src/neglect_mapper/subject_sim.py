"""Synthetic subjects with configurable attention deficits.

A NeglectField maps view directions to an expected search time between
base_time_s and the session timeout.  respond() draws one noisy search and
truncates it at the timeout, which is exactly what a subject who never finds
the stimulus looks like from the outside.
"""

import json
import math
import os
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .domain import (
    AZIMUTH_MAX_DEG,
    AZIMUTH_MIN_DEG,
    FovPoint,
    Measurement,
    SpawnPoint,
)
from .errors import ValidationError


class Profile(Enum):
    NONE = "none"
    HEMIFIELD_SIGMOID = "hemifield_sigmoid"
    LINEAR_GRADIENT = "linear_gradient"
    PATCHY_BLOB = "patchy_blob"


@dataclass(frozen=True)
class Blob:
    center: FovPoint
    radius_deg: float
    severity: float

    def to_dict(self) -> dict:
        return {
            "center": self.center.to_dict(),
            "radius_deg": float(self.radius_deg),
            "severity": float(self.severity),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Blob":
        return cls(FovPoint.from_dict(d["center"]), float(d["radius_deg"]), float(d["severity"]))


@dataclass(frozen=True)
class NeglectField:
    """Ground-truth deficit shape for a simulated subject."""

    profile: Profile
    base_time_s: float = 2.0
    border_azimuth_deg: float = 0.0
    steepness_deg: float = 5.0
    severity: float = 0.9
    blobs: tuple[Blob, ...] = ()
    noise_cv: float = 0.25

    def validate(self):
        if not (math.isfinite(self.base_time_s) and self.base_time_s > 0):
            raise ValidationError("base_time_s must be positive", field="base_time_s")
        if not (math.isfinite(self.steepness_deg) and self.steepness_deg > 0):
            raise ValidationError("steepness_deg must be positive", field="steepness_deg")
        if not (0.0 <= self.severity <= 1.0):
            raise ValidationError("severity must lie in [0, 1]", field="severity")
        if not (math.isfinite(self.noise_cv) and self.noise_cv >= 0):
            raise ValidationError("noise_cv must be non-negative", field="noise_cv")
        if self.profile is Profile.PATCHY_BLOB and not self.blobs:
            raise ValidationError("patchy_blob profile needs at least one blob", field="blobs")
        for b in self.blobs:
            if not (math.isfinite(b.radius_deg) and b.radius_deg > 0):
                raise ValidationError("blob radius must be positive", field="blobs")
            if not (0.0 <= b.severity <= 1.0):
                raise ValidationError("blob severity must lie in [0, 1]", field="blobs")

    def to_dict(self) -> dict:
        return {
            "profile": self.profile.value,
            "base_time_s": float(self.base_time_s),
            "border_azimuth_deg": float(self.border_azimuth_deg),
            "steepness_deg": float(self.steepness_deg),
            "severity": float(self.severity),
            "blobs": [b.to_dict() for b in self.blobs],
            "noise_cv": float(self.noise_cv),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NeglectField":
        try:
            profile = Profile(d["profile"])
        except (KeyError, ValueError):
            allowed = ", ".join(p.value for p in Profile)
            raise ValidationError(f"profile must be one of: {allowed}", field="profile") from None
        f = cls(
            profile=profile,
            base_time_s=float(d.get("base_time_s", 2.0)),
            border_azimuth_deg=float(d.get("border_azimuth_deg", 0.0)),
            steepness_deg=float(d.get("steepness_deg", 5.0)),
            severity=float(d.get("severity", 0.9)),
            blobs=tuple(Blob.from_dict(b) for b in d.get("blobs", [])),
            noise_cv=float(d.get("noise_cv", 0.25)),
        )
        f.validate()
        return f


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def expected_time(
    field_: NeglectField, p: FovPoint, t_max_s: float, difficulty: int = 0
) -> float:
    """Noise-free expected search time at p, clamped to [base, t_max]."""
    field_.validate()
    if not (math.isfinite(t_max_s) and t_max_s > field_.base_time_s):
        raise ValidationError("t_max_s must exceed base_time_s")
    base = field_.base_time_s
    span = t_max_s - base
    if field_.profile is Profile.NONE:
        t = base
    elif field_.profile is Profile.HEMIFIELD_SIGMOID:
        z = (field_.border_azimuth_deg - p.azimuth_deg) / field_.steepness_deg
        t = base + field_.severity * span * _sigmoid(z)
    elif field_.profile is Profile.LINEAR_GRADIENT:
        frac = (AZIMUTH_MAX_DEG - p.azimuth_deg) / (AZIMUTH_MAX_DEG - AZIMUTH_MIN_DEG)
        t = base + field_.severity * span * frac
    else:
        influence = 0.0
        for b in field_.blobs:
            d = p.distance_to(b.center)
            half = b.radius_deg / 2.0
            influence = max(influence, b.severity * math.exp(-0.5 * (d / half) ** 2))
        t = base + min(influence, 1.0) * span
    t *= 1.0 + 0.1 * difficulty
    return min(max(t, base), t_max_s)


def respond(
    field_: NeglectField,
    spawn: SpawnPoint,
    t_max_s: float,
    rng_seed,
    difficulty: int = 0,
) -> Measurement:
    """One noisy simulated search at the spawn point.

    The multiplicative noise is lognormal with mean 1 and coefficient of
    variation noise_cv.  Draws at or beyond the timeout come back as a miss.
    """
    mu = expected_time(field_, spawn.pos, t_max_s, difficulty)
    rng = np.random.default_rng(rng_seed)
    if field_.noise_cv > 0:
        s2 = math.log(1.0 + field_.noise_cv**2)
        noise = rng.lognormal(mean=-0.5 * s2, sigma=math.sqrt(s2))
    else:
        noise = 1.0
    t = mu * noise
    if t >= t_max_s:
        return Measurement.from_response(spawn.id, t_max_s, False, t_max_s)
    return Measurement.from_response(spawn.id, t, True, t_max_s)


class SimulatedResponder:
    """Adapter that answers engine stimuli from a NeglectField.

    Each spawn id gets its own deterministic noise stream, so replaying any
    subset of stimuli in any order reproduces the same measurements.
    """

    def __init__(self, field_: NeglectField, t_max_s: float, difficulty: int = 0, seed: int = 0):
        field_.validate()
        self.field = field_
        self.t_max_s = float(t_max_s)
        self.difficulty = int(difficulty)
        self.seed = int(seed)

    def __call__(self, spawn: SpawnPoint) -> tuple[float, bool]:
        seq = np.random.SeedSequence(self.seed, spawn_key=(int(spawn.id),))
        m = respond(self.field, spawn, self.t_max_s, seq, self.difficulty)
        return m.raw_time_s, m.found


def true_normalized_field(field_: NeglectField, points, t_max_s: float, difficulty: int = 0):
    """Ground-truth expected targets on the normalized scale, for scoring."""
    out = []
    for p in points:
        if not isinstance(p, FovPoint):
            p = FovPoint(float(p[0]), float(p[1]))
        out.append(expected_time(field_, p, t_max_s, difficulty) / t_max_s)
    return np.asarray(out)


def save_field(field_: NeglectField, path: str | os.PathLike):
    with open(path, "w") as fh:
        json.dump(field_.to_dict(), fh, indent=2)
        fh.write("\n")


def load_field(path: str | os.PathLike) -> NeglectField:
    with open(path) as fh:
        return NeglectField.from_dict(json.load(fh))
