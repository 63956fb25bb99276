import math

import numpy as np
import pytest

from neglect_mapper.domain import FovPoint, SceneId, SpawnPoint
from neglect_mapper.errors import ValidationError
from neglect_mapper.subject_sim import (
    Blob,
    NeglectField,
    Profile,
    SimulatedResponder,
    expected_time,
    load_field,
    respond,
    save_field,
    true_normalized_field,
)

T_MAX = 30.0


def _spawn(az, el=0.0, sid=0):
    return SpawnPoint(sid, FovPoint(az, el), SceneId.TABLE)


class TestExpectedTime:
    def test_none_profile_is_flat_base(self):
        f = NeglectField(profile=Profile.NONE, base_time_s=2.0)
        for az in (-50.0, 0.0, 50.0):
            assert expected_time(f, FovPoint(az, 0.0), T_MAX) == 2.0

    def test_sigmoid_saturates_deep_in_neglected_hemifield(self):
        f = NeglectField(
            profile=Profile.HEMIFIELD_SIGMOID,
            severity=1.0,
            border_azimuth_deg=0.0,
            steepness_deg=5.0,
        )
        # Ten steepness units into the slow side: sigmoid(10) ~ 1.
        t = expected_time(f, FovPoint(-50.0, 0.0), T_MAX)
        assert t == pytest.approx(T_MAX, rel=1e-4)

    def test_sigmoid_midpoint_at_border(self):
        f = NeglectField(profile=Profile.HEMIFIELD_SIGMOID, severity=0.9, base_time_s=2.0)
        t = expected_time(f, FovPoint(0.0, 0.0), T_MAX)
        assert t == pytest.approx(2.0 + 0.5 * 0.9 * (T_MAX - 2.0))

    def test_sigmoid_fast_side_approaches_base(self):
        f = NeglectField(profile=Profile.HEMIFIELD_SIGMOID, severity=1.0, base_time_s=2.0)
        t = expected_time(f, FovPoint(50.0, 0.0), T_MAX)
        assert t == pytest.approx(2.0, abs=0.01)

    def test_linear_gradient_slowest_on_left(self):
        f = NeglectField(profile=Profile.LINEAR_GRADIENT, severity=1.0, base_time_s=2.0)
        left = expected_time(f, FovPoint(-50.5, 0.0), T_MAX)
        mid = expected_time(f, FovPoint(0.0, 0.0), T_MAX)
        right = expected_time(f, FovPoint(50.5, 0.0), T_MAX)
        assert left == pytest.approx(T_MAX)
        assert right == pytest.approx(2.0)
        assert left > mid > right

    def test_blob_peaks_at_centre_and_decays(self):
        blob = Blob(center=FovPoint(-20.0, 5.0), radius_deg=10.0, severity=1.0)
        f = NeglectField(profile=Profile.PATCHY_BLOB, blobs=(blob,), base_time_s=2.0)
        centre = expected_time(f, FovPoint(-20.0, 5.0), T_MAX)
        near = expected_time(f, FovPoint(-15.0, 5.0), T_MAX)
        far = expected_time(f, FovPoint(30.0, 5.0), T_MAX)
        assert centre == pytest.approx(T_MAX)
        assert centre > near > far
        assert far == pytest.approx(2.0, abs=1e-3)

    def test_overlapping_blobs_take_max_not_sum(self):
        a = Blob(center=FovPoint(0.0, 0.0), radius_deg=10.0, severity=0.6)
        b = Blob(center=FovPoint(1.0, 0.0), radius_deg=10.0, severity=0.6)
        f = NeglectField(profile=Profile.PATCHY_BLOB, blobs=(a, b), base_time_s=2.0)
        t = expected_time(f, FovPoint(0.5, 0.0), T_MAX)
        # Were influences summed, this would be far above a single blob's cap.
        assert t <= 2.0 + 0.6 * (T_MAX - 2.0) + 1e-9

    def test_difficulty_scales_time_ten_percent_per_level(self):
        f = NeglectField(profile=Profile.NONE, base_time_s=4.0)
        base = expected_time(f, FovPoint(0, 0), T_MAX, difficulty=0)
        harder = expected_time(f, FovPoint(0, 0), T_MAX, difficulty=3)
        assert harder == pytest.approx(base * 1.3)

    def test_clamped_to_timeout(self):
        f = NeglectField(profile=Profile.HEMIFIELD_SIGMOID, severity=1.0)
        t = expected_time(f, FovPoint(-50.0, 0.0), T_MAX, difficulty=10)
        assert t == T_MAX

    def test_timeout_must_exceed_base(self):
        f = NeglectField(profile=Profile.NONE, base_time_s=5.0)
        with pytest.raises(ValidationError):
            expected_time(f, FovPoint(0, 0), t_max_s=5.0)


class TestFieldValidation:
    def test_severity_out_of_range(self):
        with pytest.raises(ValidationError):
            NeglectField(profile=Profile.NONE, severity=1.5).validate()

    def test_patchy_blob_needs_blobs(self):
        with pytest.raises(ValidationError):
            NeglectField(profile=Profile.PATCHY_BLOB).validate()

    def test_negative_noise_cv_rejected(self):
        with pytest.raises(ValidationError):
            NeglectField(profile=Profile.NONE, noise_cv=-0.1).validate()

    def test_roundtrip_with_blobs(self):
        f = NeglectField(
            profile=Profile.PATCHY_BLOB,
            blobs=(Blob(FovPoint(-10, 5), 8.0, 0.7),),
            noise_cv=0.1,
        )
        assert NeglectField.from_dict(f.to_dict()) == f

    def test_unknown_profile_reports_field(self):
        with pytest.raises(ValidationError) as exc:
            NeglectField.from_dict({"profile": "swirl"})
        assert exc.value.field == "profile"


class TestRespond:
    def test_deterministic_for_seed(self):
        f = NeglectField(profile=Profile.HEMIFIELD_SIGMOID)
        s = _spawn(-10.0)
        a = respond(f, s, T_MAX, rng_seed=123)
        b = respond(f, s, T_MAX, rng_seed=123)
        assert a == b

    def test_saturated_neglect_always_misses(self):
        # 50 steepness units past the border the sigmoid saturates to 1.0
        # even in floats, so the expected time equals the timeout exactly
        # and every noise-free draw is truncated into a miss.
        f = NeglectField(
            profile=Profile.HEMIFIELD_SIGMOID, severity=1.0, steepness_deg=1.0, noise_cv=0.0
        )
        s = _spawn(-50.0)
        assert expected_time(f, s.pos, T_MAX) == T_MAX
        for seed in range(20):
            m = respond(f, s, T_MAX, rng_seed=seed)
            assert not m.found
            assert m.y == 1.0
            assert m.raw_time_s == T_MAX

    def test_zero_noise_returns_expected_time(self):
        f = NeglectField(profile=Profile.NONE, base_time_s=3.0, noise_cv=0.0)
        m = respond(f, _spawn(10.0), T_MAX, rng_seed=0)
        assert m.found
        assert m.raw_time_s == pytest.approx(3.0)

    def test_monte_carlo_mean_matches_base_time(self):
        # Multiplicative noise with mean 1: averaging many draws has to give
        # back the noise-free time within Monte-Carlo error.
        f = NeglectField(profile=Profile.NONE, base_time_s=2.0, noise_cv=0.2)
        s = _spawn(0.0)
        draws = [respond(f, s, T_MAX, rng_seed=i).raw_time_s for i in range(10_000)]
        assert np.mean(draws) == pytest.approx(2.0, rel=0.03)

    def test_found_time_strictly_below_timeout(self):
        f = NeglectField(profile=Profile.HEMIFIELD_SIGMOID, severity=0.9)
        for seed in range(50):
            m = respond(f, _spawn(-5.0), T_MAX, rng_seed=seed)
            if m.found:
                assert m.raw_time_s < T_MAX
            else:
                assert m.raw_time_s == T_MAX


class TestSimulatedResponder:
    def test_same_spawn_same_answer_regardless_of_order(self):
        f = NeglectField(profile=Profile.HEMIFIELD_SIGMOID)
        r = SimulatedResponder(f, t_max_s=T_MAX, seed=9)
        s3, s7 = _spawn(-10.0, sid=3), _spawn(15.0, sid=7)
        first = (r(s3), r(s7))
        second = (r(s7), r(s3))
        assert first[0] == second[1]
        assert first[1] == second[0]

    def test_distinct_spawns_get_distinct_noise(self):
        f = NeglectField(profile=Profile.NONE, base_time_s=5.0, noise_cv=0.3)
        r = SimulatedResponder(f, t_max_s=T_MAX, seed=9)
        a = r(_spawn(0.0, sid=1))
        b = r(_spawn(0.0, sid=2))
        assert a[0] != b[0]

    def test_seed_changes_answers(self):
        f = NeglectField(profile=Profile.NONE, base_time_s=5.0, noise_cv=0.3)
        a = SimulatedResponder(f, t_max_s=T_MAX, seed=1)(_spawn(0.0, sid=4))
        b = SimulatedResponder(f, t_max_s=T_MAX, seed=2)(_spawn(0.0, sid=4))
        assert a != b


class TestTrueNormalizedField:
    def test_values_on_unit_scale(self):
        f = NeglectField(profile=Profile.HEMIFIELD_SIGMOID, severity=0.9)
        pts = [FovPoint(a, 0.0) for a in np.linspace(-50, 50, 21)]
        vals = true_normalized_field(f, pts, T_MAX)
        assert np.all(vals > 0)
        assert np.all(vals <= 1.0)
        # Slow on the left, fast on the right.
        assert vals[0] > vals[-1]

    def test_accepts_raw_pairs(self):
        f = NeglectField(profile=Profile.NONE, base_time_s=3.0)
        vals = true_normalized_field(f, [(0.0, 0.0), (10.0, 5.0)], T_MAX)
        assert np.allclose(vals, 0.1)


class TestFieldPersistence:
    def test_save_load_roundtrip(self, tmp_path):
        f = NeglectField(
            profile=Profile.LINEAR_GRADIENT, severity=0.8, base_time_s=1.5, noise_cv=0.15
        )
        p = tmp_path / "field.json"
        save_field(f, p)
        assert load_field(p) == f
