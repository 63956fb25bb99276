"""Gridded posterior maps and their image/CSV renderings.

The grid is cell-centered: row 0 sits at the top of the image (highest
elevation), columns run left to right with increasing azimuth.  Rendering
follows the clinical reading of the map: green is fast search, the ramp
saturates to red at 0.9, cells at or above 0.98 (never found) paint black,
and cells whose two-sigma band exceeds the mask threshold paint white
because the model does not really know them yet.
"""

import io
from dataclasses import dataclass

import numpy as np

from . import gp_core
from .domain import DEFAULT_BOUNDS, FovBounds
from .errors import PreconditionError, ValidationError

DEFAULT_NX = 31
DEFAULT_NY = 19

MEAN_RAMP_TOP = 0.9
MEAN_BLACK_FROM = 0.98
MASK_THRESHOLD_FACTOR = 0.8


@dataclass
class Heatmap:
    """Posterior mean and uncertainty sampled on a fixed grid."""

    bounds: FovBounds
    nx: int
    ny: int
    mean: np.ndarray
    two_sigma: np.ndarray
    mask: np.ndarray
    mask_threshold: float
    two_sigma_scale: float

    def to_dict(self) -> dict:
        return {
            "bounds": self.bounds.to_dict(),
            "nx": int(self.nx),
            "ny": int(self.ny),
            "mean": [[float(v) for v in row] for row in self.mean],
            "two_sigma": [[float(v) for v in row] for row in self.two_sigma],
            "mask": [[bool(v) for v in row] for row in self.mask],
            "mask_threshold": float(self.mask_threshold),
            "two_sigma_scale": float(self.two_sigma_scale),
        }


def grid_centers(bounds: FovBounds, nx: int, ny: int):
    """Cell-center coordinates: azimuths ascending, elevations descending."""
    bounds.validate()
    if nx < 2 or ny < 2:
        raise PreconditionError("grid needs at least 2 cells per axis")
    az = bounds.az_min_deg + (np.arange(nx) + 0.5) * bounds.az_span / nx
    el = bounds.el_max_deg - (np.arange(ny) + 0.5) * bounds.el_span / ny
    return az, el


def evaluate_grid(
    model: gp_core.GpModel,
    bounds: FovBounds | None = None,
    nx: int = DEFAULT_NX,
    ny: int = DEFAULT_NY,
    mask_threshold: float | None = None,
) -> Heatmap:
    """Sample the posterior on the grid and mask poorly-known cells.

    The default mask threshold is 0.8 times sigma_f, so fresh models mask
    everywhere (prior two-sigma is 2 sigma_f) and cells only clear once
    nearby data pins them down.
    """
    bounds = bounds or DEFAULT_BOUNDS
    az, el = grid_centers(bounds, nx, ny)
    sigma_f = float(np.sqrt(model.theta.sigma_f2))
    if mask_threshold is None:
        mask_threshold = MASK_THRESHOLD_FACTOR * sigma_f
    aa, ee = np.meshgrid(az, el)
    queries = np.column_stack([aa.ravel(), ee.ravel()])
    mean, var = gp_core.predict_arrays(model, queries)
    mean = mean.reshape(ny, nx)
    two_sigma = 2.0 * np.sqrt(np.maximum(var, 0.0)).reshape(ny, nx)
    return Heatmap(
        bounds=bounds,
        nx=nx,
        ny=ny,
        mean=mean,
        two_sigma=two_sigma,
        mask=two_sigma > mask_threshold,
        mask_threshold=float(mask_threshold),
        two_sigma_scale=2.0 * sigma_f,
    )


def mean_grid(model: gp_core.GpModel, bounds=None, nx=DEFAULT_NX, ny=DEFAULT_NY) -> np.ndarray:
    """Just the posterior-mean grid, for convergence snapshots."""
    bounds = bounds or DEFAULT_BOUNDS
    az, el = grid_centers(bounds, nx, ny)
    aa, ee = np.meshgrid(az, el)
    mean, _ = gp_core.predict_arrays(model, np.column_stack([aa.ravel(), ee.ravel()]))
    return mean.reshape(ny, nx)


def _ramp_rgb(t: float) -> tuple[int, int, int]:
    t = min(max(t, 0.0), 1.0)
    return int(255 * t + 0.5), int(255 * (1.0 - t) + 0.5), 0


def render(h: Heatmap, which: str = "mean") -> bytes:
    """Render one map as a binary PPM (P6) image, one pixel per cell."""
    buf = io.BytesIO()
    buf.write(f"P6\n{h.nx} {h.ny}\n255\n".encode())
    if which == "mean":
        for i in range(h.ny):
            for j in range(h.nx):
                if h.mask[i, j]:
                    rgb = (255, 255, 255)
                elif h.mean[i, j] >= MEAN_BLACK_FROM:
                    rgb = (0, 0, 0)
                else:
                    rgb = _ramp_rgb(h.mean[i, j] / MEAN_RAMP_TOP)
                buf.write(bytes(rgb))
    elif which == "two_sigma":
        scale = h.two_sigma_scale if h.two_sigma_scale > 0 else 1.0
        for i in range(h.ny):
            for j in range(h.nx):
                buf.write(bytes(_ramp_rgb(h.two_sigma[i, j] / scale)))
    else:
        raise ValidationError(f"unknown map {which!r}, expected mean or two_sigma")
    return buf.getvalue()


def write_ppm(h: Heatmap, which: str, path):
    with open(path, "wb") as fh:
        fh.write(render(h, which))


def write_png(h: Heatmap, which: str, path):
    from PIL import Image

    ppm = render(h, which)
    Image.open(io.BytesIO(ppm)).save(path, format="PNG")


def to_csv(h: Heatmap) -> str:
    """Flatten the grid row-major with fixed six-decimal formatting."""
    az, el = grid_centers(h.bounds, h.nx, h.ny)
    lines = ["az_deg,el_deg,mean,two_sigma,masked"]
    for i in range(h.ny):
        for j in range(h.nx):
            lines.append(
                f"{az[j]:.6f},{el[i]:.6f},{h.mean[i, j]:.6f},"
                f"{h.two_sigma[i, j]:.6f},{int(h.mask[i, j])}"
            )
    return "\n".join(lines) + "\n"


def write_csv(h: Heatmap, path):
    with open(path, "w") as fh:
        fh.write(to_csv(h))
