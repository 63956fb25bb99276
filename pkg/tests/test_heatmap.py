import io

import numpy as np
import pytest

from neglect_mapper.domain import DEFAULT_BOUNDS, FovPoint
from neglect_mapper.errors import PreconditionError, ValidationError
from neglect_mapper.gp_core import Hyperparams, condition, predict, prior_model
from neglect_mapper.heatmap import (
    DEFAULT_NX,
    DEFAULT_NY,
    Heatmap,
    evaluate_grid,
    grid_centers,
    mean_grid,
    render,
    to_csv,
    write_png,
    write_ppm,
)


def _pixels(ppm: bytes):
    """Parse a P6 body into an (ny, nx, 3) uint8 array."""
    header, _, rest = ppm.partition(b"\n")
    assert header == b"P6"
    dims, _, rest = rest.partition(b"\n")
    nx, ny = (int(v) for v in dims.split())
    maxval, _, body = rest.partition(b"\n")
    assert maxval == b"255"
    return np.frombuffer(body, dtype=np.uint8).reshape(ny, nx, 3)


@pytest.fixture
def trained():
    # Slow (never found) on the left, fast on the right, tight noise.
    theta = Hyperparams(0.25, 9.0, 1e-6)
    x, y = [], []
    for el in (-10.0, 0.0, 10.0):
        for az in (-45.0, -35.0, -25.0):
            x.append(FovPoint(az, el))
            y.append(1.0)
        for az in (25.0, 35.0, 45.0):
            x.append(FovPoint(az, el))
            y.append(0.05)
    return condition(x, y, theta)


class TestGridCenters:
    def test_default_shape_and_counts(self):
        az, el = grid_centers(DEFAULT_BOUNDS, DEFAULT_NX, DEFAULT_NY)
        assert len(az) == 31
        assert len(el) == 19
        assert len(az) * len(el) == 589

    def test_azimuths_ascend_elevations_descend(self):
        az, el = grid_centers(DEFAULT_BOUNDS, 31, 19)
        assert np.all(np.diff(az) > 0)
        assert np.all(np.diff(el) < 0)

    def test_cells_are_centered(self):
        az, el = grid_centers(DEFAULT_BOUNDS, 31, 19)
        step_az = DEFAULT_BOUNDS.az_span / 31
        assert az[0] == pytest.approx(DEFAULT_BOUNDS.az_min_deg + step_az / 2)
        assert az[-1] == pytest.approx(DEFAULT_BOUNDS.az_max_deg - step_az / 2)
        step_el = DEFAULT_BOUNDS.el_span / 19
        assert el[0] == pytest.approx(DEFAULT_BOUNDS.el_max_deg - step_el / 2)

    def test_degenerate_grid_rejected(self):
        with pytest.raises(PreconditionError):
            grid_centers(DEFAULT_BOUNDS, 1, 19)


class TestEvaluateGrid:
    def test_shapes(self, trained):
        h = evaluate_grid(trained)
        assert h.mean.shape == (19, 31)
        assert h.two_sigma.shape == (19, 31)
        assert h.mask.shape == (19, 31)

    def test_mask_is_two_sigma_over_threshold(self, trained):
        h = evaluate_grid(trained)
        assert np.array_equal(h.mask, h.two_sigma > h.mask_threshold)

    def test_default_threshold_tracks_signal_sd(self, trained):
        h = evaluate_grid(trained)
        assert h.mask_threshold == pytest.approx(0.8 * np.sqrt(0.25))

    def test_prior_model_masks_everywhere(self):
        h = evaluate_grid(prior_model(Hyperparams(1.0, 10.0, 0.01)))
        assert np.all(h.mask)
        assert np.all(h.two_sigma == pytest.approx(2.0))

    def test_grid_value_matches_point_prediction(self):
        # Train exactly on a cell center; the grid cell must agree with
        # predict() there and sit within 1e-3 of the noise-free target.
        az, el = grid_centers(DEFAULT_BOUNDS, DEFAULT_NX, DEFAULT_NY)
        target_pos = FovPoint(float(az[7]), float(el[4]))
        anchor = FovPoint(float(az[20]), float(el[12]))
        model = condition([target_pos, anchor], [0.37, 0.8], Hyperparams(0.25, 9.0, 1e-9))
        h = evaluate_grid(model)
        (p,) = predict(model, [target_pos])
        assert h.mean[4, 7] == pytest.approx(p.mean, abs=1e-12)
        assert abs(h.mean[4, 7] - 0.37) < 1e-3

    def test_two_sigma_scale_is_twice_sigma_f(self, trained):
        h = evaluate_grid(trained)
        assert h.two_sigma_scale == pytest.approx(2.0 * 0.5)

    def test_explicit_threshold_respected(self, trained):
        h = evaluate_grid(trained, mask_threshold=1e9)
        assert not np.any(h.mask)

    def test_to_dict_roundtrips_through_lists(self, trained):
        d = evaluate_grid(trained).to_dict()
        assert len(d["mean"]) == 19
        assert len(d["mean"][0]) == 31
        assert isinstance(d["mask"][0][0], bool)


class TestMeanGrid:
    def test_matches_evaluate_grid(self, trained):
        h = evaluate_grid(trained)
        g = mean_grid(trained)
        assert np.allclose(g, h.mean)


class TestRenderPalette:
    def _single_cell_map(self, mean, two_sigma=0.0, masked=False):
        m = np.full((2, 2), mean)
        ts = np.full((2, 2), two_sigma)
        mk = np.full((2, 2), masked)
        return Heatmap(
            bounds=DEFAULT_BOUNDS,
            nx=2,
            ny=2,
            mean=m,
            two_sigma=ts,
            mask=mk,
            mask_threshold=0.4,
            two_sigma_scale=1.0,
        )

    def test_zero_mean_paints_pure_green(self):
        px = _pixels(render(self._single_cell_map(0.0)))
        assert np.all(px == [0, 255, 0])

    def test_not_found_paints_black(self):
        px = _pixels(render(self._single_cell_map(1.0)))
        assert np.all(px == [0, 0, 0])

    def test_black_cutoff_is_098(self):
        below = _pixels(render(self._single_cell_map(0.979)))
        at = _pixels(render(self._single_cell_map(0.98)))
        assert np.all(at == [0, 0, 0])
        assert not np.all(below == [0, 0, 0])

    def test_masked_paints_white_regardless_of_mean(self):
        for mean in (0.0, 0.5, 1.0):
            px = _pixels(render(self._single_cell_map(mean, masked=True)))
            assert np.all(px == [255, 255, 255])

    def test_ramp_saturates_to_red_at_09(self):
        px = _pixels(render(self._single_cell_map(0.9)))
        assert np.all(px == [255, 0, 0])

    def test_ramp_midpoint_is_yellowish(self):
        px = _pixels(render(self._single_cell_map(0.45)))
        assert np.all(px == [128, 128, 0])

    def test_two_sigma_map_ignores_mask(self):
        h = self._single_cell_map(0.5, two_sigma=0.0, masked=True)
        px = _pixels(render(h, "two_sigma"))
        assert np.all(px == [0, 255, 0])

    def test_two_sigma_full_scale_is_red(self):
        h = self._single_cell_map(0.5, two_sigma=1.0)
        px = _pixels(render(h, "two_sigma"))
        assert np.all(px == [255, 0, 0])

    def test_unknown_map_rejected(self):
        with pytest.raises(ValidationError):
            render(self._single_cell_map(0.5), "variance")

    def test_header_dimensions(self, trained):
        ppm = render(evaluate_grid(trained))
        assert ppm.startswith(b"P6\n31 19\n255\n")
        assert len(ppm) == len(b"P6\n31 19\n255\n") + 31 * 19 * 3


class TestImageOrientation:
    def test_left_slow_region_is_dark_or_red_on_the_left(self, trained):
        h = evaluate_grid(trained, mask_threshold=1e9)
        px = _pixels(render(h))
        mid = h.ny // 2
        left = px[mid, 2]
        right = px[mid, -3]
        # Left: near-miss territory (black or deep red); right: green.
        assert left[1] < 80
        assert right[1] > 150

    def test_row_zero_is_top_elevation(self):
        # Slow at high elevation, fast at low: row 0 must carry the slow end.
        theta = Hyperparams(0.25, 6.0, 1e-6)
        model = condition(
            [FovPoint(0.0, 28.0), FovPoint(0.0, -28.0)], [1.0, 0.05], theta
        )
        h = evaluate_grid(model, mask_threshold=1e9)
        col = h.nx // 2
        assert h.mean[0, col] > h.mean[-1, col]


class TestCsv:
    def test_header_and_row_count(self, trained):
        text = to_csv(evaluate_grid(trained))
        lines = text.strip().split("\n")
        assert lines[0] == "az_deg,el_deg,mean,two_sigma,masked"
        assert len(lines) == 1 + 19 * 31

    def test_six_decimal_fixed_format(self, trained):
        line = to_csv(evaluate_grid(trained)).strip().split("\n")[1]
        fields = line.split(",")
        assert len(fields) == 5
        for v in fields[:4]:
            whole, frac = v.split(".")
            assert len(frac) == 6
        assert fields[4] in ("0", "1")

    def test_rows_scan_top_row_first(self, trained):
        h = evaluate_grid(trained)
        lines = to_csv(h).strip().split("\n")[1:]
        az0, el0 = (float(v) for v in lines[0].split(",")[:2])
        azN, elN = (float(v) for v in lines[-1].split(",")[:2])
        assert el0 > elN
        assert az0 < azN
        assert np.isclose(el0, grid_centers(h.bounds, h.nx, h.ny)[1][0])


class TestFileOutputs:
    def test_write_ppm(self, trained, tmp_path):
        p = tmp_path / "m.ppm"
        write_ppm(evaluate_grid(trained), "mean", p)
        assert p.read_bytes().startswith(b"P6\n")

    def test_write_png(self, trained, tmp_path):
        from PIL import Image

        p = tmp_path / "m.png"
        h = evaluate_grid(trained)
        write_png(h, "mean", p)
        img = Image.open(p)
        assert img.size == (31, 19)
        # PNG must encode the same pixels as the PPM.
        ppm_px = _pixels(render(h))
        png_px = np.asarray(img.convert("RGB"))
        assert np.array_equal(ppm_px, png_px)


class TestGoldens:
    """Frozen renders of the committed fixture model.

    Any palette, grid, or masking change shows up here as a byte diff.
    Regenerate deliberately via tests/fixtures/make_fixtures.py.
    """

    @pytest.fixture(scope="class")
    def fixture_heatmap(self):
        from pathlib import Path

        from neglect_mapper.gp_core import load_model

        model = load_model(Path(__file__).parent / "fixtures" / "model.json")
        return evaluate_grid(model)

    def _golden(self, name):
        from pathlib import Path

        return (Path(__file__).parent / "fixtures" / name).read_bytes()

    def test_mean_map_bytes(self, fixture_heatmap):
        assert render(fixture_heatmap, "mean") == self._golden("golden_mean.ppm")

    def test_two_sigma_map_bytes(self, fixture_heatmap):
        assert render(fixture_heatmap, "two_sigma") == self._golden(
            "golden_two_sigma.ppm"
        )

    def test_golden_contains_required_classes(self):
        px = _pixels(self._golden("golden_mean.ppm")).reshape(-1, 3)
        colors = {tuple(p) for p in px}
        assert (255, 255, 255) in colors  # masked cells stay white
        assert (0, 0, 0) in colors  # not-found cells go black
        assert any(c not in {(255, 255, 255), (0, 0, 0)} for c in colors)
