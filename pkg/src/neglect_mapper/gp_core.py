"""Gaussian-process regression over the field of view.

The model is an exact GP with a squared-exponential kernel

    k(a, b) = sigma_f2 * exp(-|a - b|^2 / (2 * length_scale^2))

and i.i.d. Gaussian observation noise sigma_eps2.  The prior mean is the
training-target mean, so targets are centered once at fit time.  Hyper-
parameters are found by maximizing the log marginal likelihood with a
quasi-Newton optimizer in log space, restarted from several seeded draws.

Factorizations use a lower Cholesky with an escalating diagonal jitter
(relative to sigma_f2) so near-singular covariances still factor; if even
the largest jitter fails, NumericalError reports the last attempt.
"""

import json
import math
import os
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.optimize import minimize

from . import kernels
from .domain import DEFAULT_BOUNDS, FovPoint
from .errors import (
    InsufficientDataError,
    NumericalError,
    OutOfDomainError,
    PreconditionError,
)

JITTER_INIT_FACTOR = 1e-8
JITTER_MAX_FACTOR = 1e-2

DEGENERATE_SIGMA_F2 = 1e-6
DEGENERATE_LENGTH_SCALE = 10.0
DEGENERATE_SIGMA_EPS2 = 1e-6

# Log-uniform sampling boxes for optimizer restarts.
RESTART_SIGMA_F2 = (0.01, 4.0)
RESTART_LENGTH_SCALE = (2.0, 40.0)
RESTART_SIGMA_EPS2 = (1e-4, 0.25)

# Hard optimizer box, generous on both sides of the restart box.
_LOG_BOUNDS = [
    (math.log(1e-8), math.log(1e3)),
    (math.log(1e-2), math.log(1e3)),
    (math.log(1e-10), math.log(1e1)),
]

MODEL_FORMAT_VERSION = 1

_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class Hyperparams:
    """Kernel and noise hyperparameters, all strictly positive when valid."""

    sigma_f2: float
    length_scale: float
    sigma_eps2: float

    def validate(self):
        for name, v in (
            ("sigma_f2", self.sigma_f2),
            ("length_scale", self.length_scale),
            ("sigma_eps2", self.sigma_eps2),
        ):
            if not (math.isfinite(v) and v > 0):
                raise PreconditionError(f"{name} must be finite and positive, got {v}")

    def log_array(self) -> np.ndarray:
        return np.log([self.sigma_f2, self.length_scale, self.sigma_eps2])

    @classmethod
    def from_log_array(cls, x) -> "Hyperparams":
        s = np.exp(np.asarray(x, dtype=float))
        return cls(float(s[0]), float(s[1]), float(s[2]))

    def to_dict(self) -> dict:
        return {
            "sigma_f2": float(self.sigma_f2),
            "length_scale": float(self.length_scale),
            "sigma_eps2": float(self.sigma_eps2),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Hyperparams":
        return cls(float(d["sigma_f2"]), float(d["length_scale"]), float(d["sigma_eps2"]))


@dataclass(frozen=True)
class FitOptions:
    n_restarts: int = 5
    seed: int = 0
    theta0: Hyperparams | None = None
    max_iter: int = 200


@dataclass(frozen=True)
class PosteriorPrediction:
    mean: float
    variance: float

    @property
    def two_sigma(self) -> float:
        return 2.0 * math.sqrt(self.variance)

    def to_dict(self) -> dict:
        return {
            "mean": float(self.mean),
            "variance": float(self.variance),
            "two_sigma": float(self.two_sigma),
        }


@dataclass
class GpModel:
    """A fitted GP: data, hyperparameters, and the cached factorization."""

    X: np.ndarray
    y_centered: np.ndarray
    y_mean: float
    theta: Hyperparams
    chol: np.ndarray
    alpha: np.ndarray
    jitter: float

    @property
    def n(self) -> int:
        return self.X.shape[0]


def _as_points_array(points, arg="points") -> np.ndarray:
    """Coerce FovPoints or raw coordinate pairs to an (n, 2) float array."""
    if isinstance(points, np.ndarray):
        arr = np.asarray(points, dtype=float)
    elif len(points) > 0 and isinstance(points[0], FovPoint):
        arr = np.array([[p.azimuth_deg, p.elevation_deg] for p in points], dtype=float)
    else:
        arr = np.asarray(points, dtype=float)
    arr = arr.reshape(-1, 2) if arr.size else arr.reshape(0, 2)
    if not np.all(np.isfinite(arr)):
        raise PreconditionError(f"{arg} must be finite")
    return arr


def _check_in_domain(arr: np.ndarray, bounds=DEFAULT_BOUNDS):
    if arr.size == 0:
        return
    az, el = arr[:, 0], arr[:, 1]
    bad = (
        (az < bounds.az_min_deg)
        | (az > bounds.az_max_deg)
        | (el < bounds.el_min_deg)
        | (el > bounds.el_max_deg)
    )
    if np.any(bad):
        i = int(np.argmax(bad))
        raise OutOfDomainError(
            f"query ({az[i]}, {el[i]}) lies outside the field of view"
        )


def kernel_se(a: FovPoint, b: FovPoint, theta: Hyperparams) -> float:
    """Squared-exponential covariance between two view directions."""
    theta.validate()
    d2 = (a.azimuth_deg - b.azimuth_deg) ** 2 + (a.elevation_deg - b.elevation_deg) ** 2
    return theta.sigma_f2 * math.exp(-d2 / (2.0 * theta.length_scale**2))


def _chol_with_jitter(k_noisy: np.ndarray, sigma_f2: float):
    """Lower Cholesky of k_noisy + jitter*I, escalating jitter tenfold."""
    jitter = JITTER_INIT_FACTOR * sigma_f2
    max_jitter = JITTER_MAX_FACTOR * sigma_f2
    n = k_noisy.shape[0]
    eye = np.eye(n)
    while True:
        try:
            L = np.linalg.cholesky(k_noisy + jitter * eye)
            return L, jitter
        except np.linalg.LinAlgError:
            if jitter >= max_jitter:
                raise NumericalError(
                    "covariance not factorable at maximum jitter",
                    attempted_jitter=jitter,
                ) from None
            jitter *= 10.0


def _lml_with_grad(d2: np.ndarray, y: np.ndarray, log_theta: np.ndarray):
    """LML, its gradient in log space, and the factorization pieces.

    y must already be centered.  Returns (lml, grad, L, alpha, jitter).
    """
    theta = Hyperparams.from_log_array(log_theta)
    k = kernels.se_from_sqdists(d2, theta.sigma_f2, theta.length_scale)
    n = d2.shape[0]
    k_noisy = k + theta.sigma_eps2 * np.eye(n)
    L, jitter = _chol_with_jitter(k_noisy, theta.sigma_f2)
    alpha = cho_solve((L, True), y, check_finite=False)
    log_det = 2.0 * float(np.sum(np.log(np.diag(L))))
    lml = -0.5 * float(y @ alpha) - 0.5 * log_det - n * _HALF_LOG_2PI
    k_inv = cho_solve((L, True), np.eye(n), check_finite=False)
    w = np.outer(alpha, alpha) - k_inv
    grad = np.array(
        kernels.lml_grad_terms(
            w, k, d2, theta.length_scale, theta.sigma_eps2, jitter
        )
    )
    return lml, grad, L, alpha, jitter


def log_marginal_likelihood(X, y, theta: Hyperparams):
    """Log marginal likelihood of centered targets y and its gradient.

    The gradient is taken with respect to (log sigma_f2, log length_scale,
    log sigma_eps2), matching the space the optimizer works in.
    """
    theta.validate()
    x_arr = _as_points_array(X, "X")
    y_arr = np.asarray(y, dtype=float).ravel()
    if x_arr.shape[0] != y_arr.shape[0]:
        raise PreconditionError("X and y length mismatch")
    if x_arr.shape[0] < 1:
        raise InsufficientDataError("need at least one observation")
    if not np.all(np.isfinite(y_arr)):
        raise PreconditionError("targets must be finite")
    d2 = kernels.sq_dists(x_arr, x_arr)
    lml, grad, _, _, _ = _lml_with_grad(d2, y_arr, theta.log_array())
    return lml, grad


def _build_from_centered(x_arr, yc, y_mean: float, theta: Hyperparams) -> GpModel:
    n = x_arr.shape[0]
    if n == 0:
        return GpModel(
            X=x_arr,
            y_centered=yc,
            y_mean=y_mean,
            theta=theta,
            chol=np.zeros((0, 0)),
            alpha=np.zeros(0),
            jitter=0.0,
        )
    d2 = kernels.sq_dists(x_arr, x_arr)
    k = kernels.se_from_sqdists(d2, theta.sigma_f2, theta.length_scale)
    k_noisy = k + theta.sigma_eps2 * np.eye(n)
    L, jitter = _chol_with_jitter(k_noisy, theta.sigma_f2)
    alpha = cho_solve((L, True), yc, check_finite=False)
    return GpModel(
        X=x_arr, y_centered=yc, y_mean=y_mean, theta=theta, chol=L, alpha=alpha, jitter=jitter
    )


def _build_model(x_arr, y_arr, theta: Hyperparams) -> GpModel:
    y_mean = float(np.mean(y_arr)) if y_arr.size else 0.0
    return _build_from_centered(x_arr, y_arr - y_mean, y_mean, theta)


def condition(X, y, theta: Hyperparams) -> GpModel:
    """Build a model with fixed hyperparameters, no optimization."""
    theta.validate()
    x_arr = _as_points_array(X, "X")
    y_arr = np.asarray(y, dtype=float).ravel()
    if x_arr.shape[0] != y_arr.shape[0]:
        raise PreconditionError("X and y length mismatch")
    if y_arr.size and not np.all(np.isfinite(y_arr)):
        raise PreconditionError("targets must be finite")
    return _build_model(x_arr, y_arr, theta)


def prior_model(theta: Hyperparams, y_mean: float = 0.0) -> GpModel:
    """A model with no observations: mean y_mean, variance sigma_f2."""
    theta.validate()
    m = _build_model(np.zeros((0, 2)), np.zeros(0), theta)
    m.y_mean = float(y_mean)
    return m


def _draw_restarts(rng: np.random.Generator, count: int) -> list[np.ndarray]:
    out = []
    for _ in range(count):
        s = [
            rng.uniform(math.log(RESTART_SIGMA_F2[0]), math.log(RESTART_SIGMA_F2[1])),
            rng.uniform(math.log(RESTART_LENGTH_SCALE[0]), math.log(RESTART_LENGTH_SCALE[1])),
            rng.uniform(math.log(RESTART_SIGMA_EPS2[0]), math.log(RESTART_SIGMA_EPS2[1])),
        ]
        out.append(np.array(s))
    return out


def fit(X, y, opts: FitOptions | None = None) -> GpModel:
    """Fit hyperparameters by maximizing the log marginal likelihood.

    Runs opts.n_restarts quasi-Newton starts (the explicit theta0, when
    given, counts as the first) and keeps the best final likelihood.
    Deterministic for a fixed opts.seed.
    """
    opts = opts or FitOptions()
    x_arr = _as_points_array(X, "X")
    y_arr = np.asarray(y, dtype=float).ravel()
    if x_arr.shape[0] != y_arr.shape[0]:
        raise PreconditionError("X and y length mismatch")
    if x_arr.shape[0] < 2:
        raise InsufficientDataError("fit needs at least two observations")
    if not np.all(np.isfinite(y_arr)):
        raise PreconditionError("targets must be finite")
    if opts.n_restarts < 1:
        raise PreconditionError("n_restarts must be at least 1")
    if opts.theta0 is not None:
        opts.theta0.validate()

    if np.ptp(y_arr) == 0.0:
        # Constant targets carry no structure; return the flat model
        # directly instead of letting the optimizer chase -inf scales.
        theta = Hyperparams(
            DEGENERATE_SIGMA_F2, DEGENERATE_LENGTH_SCALE, DEGENERATE_SIGMA_EPS2
        )
        return _build_model(x_arr, y_arr, theta)

    y_mean = float(np.mean(y_arr))
    yc = y_arr - y_mean
    d2 = kernels.sq_dists(x_arr, x_arr)

    def objective(log_theta):
        try:
            lml, grad, _, _, _ = _lml_with_grad(d2, yc, log_theta)
        except NumericalError:
            return np.inf, np.zeros(3)
        if not math.isfinite(lml):
            return np.inf, np.zeros(3)
        return -lml, -grad

    rng = np.random.default_rng(opts.seed)
    starts = []
    if opts.theta0 is not None:
        starts.append(opts.theta0.log_array())
    starts.extend(_draw_restarts(rng, opts.n_restarts - len(starts)))

    best_x = None
    best_val = np.inf
    for x0 in starts:
        res = minimize(
            objective,
            x0,
            jac=True,
            method="L-BFGS-B",
            bounds=_LOG_BOUNDS,
            options={"maxiter": opts.max_iter},
        )
        if res.fun < best_val:
            best_val = res.fun
            best_x = res.x
    if best_x is None or not math.isfinite(best_val):
        raise NumericalError("no optimizer start produced a finite likelihood")
    return _build_model(x_arr, y_arr, Hyperparams.from_log_array(best_x))


def predict_arrays(model: GpModel, queries: np.ndarray):
    """Posterior mean and variance at query rows, vectorized."""
    m = queries.shape[0]
    if model.n == 0:
        return (
            np.full(m, model.y_mean),
            np.full(m, model.theta.sigma_f2),
        )
    d2 = kernels.sq_dists(queries, model.X)
    k_star = kernels.se_from_sqdists(d2, model.theta.sigma_f2, model.theta.length_scale)
    mean = model.y_mean + k_star @ model.alpha
    v = solve_triangular(model.chol, k_star.T, lower=True, check_finite=False)
    var = model.theta.sigma_f2 - np.einsum("ij,ij->j", v, v)
    return mean, np.maximum(var, 0.0)


def predict(model: GpModel, queries) -> list[PosteriorPrediction]:
    """Posterior predictions at the given view directions."""
    q = _as_points_array(queries, "queries")
    _check_in_domain(q)
    mean, var = predict_arrays(model, q)
    return [PosteriorPrediction(float(m), float(v)) for m, v in zip(mean, var)]


def posterior_cov(model: GpModel, a, b) -> np.ndarray:
    """Posterior covariance matrix between two sets of view directions."""
    a_arr = _as_points_array(a, "a")
    b_arr = _as_points_array(b, "b")
    k_ab = kernels.se_from_sqdists(
        kernels.sq_dists(a_arr, b_arr), model.theta.sigma_f2, model.theta.length_scale
    )
    if model.n == 0:
        return k_ab
    k_xa = kernels.se_from_sqdists(
        kernels.sq_dists(model.X, a_arr), model.theta.sigma_f2, model.theta.length_scale
    )
    k_xb = kernels.se_from_sqdists(
        kernels.sq_dists(model.X, b_arr), model.theta.sigma_f2, model.theta.length_scale
    )
    va = solve_triangular(model.chol, k_xa, lower=True, check_finite=False)
    vb = solve_triangular(model.chol, k_xb, lower=True, check_finite=False)
    return k_ab - va.T @ vb


def model_to_dict(model: GpModel) -> dict:
    return {
        "format_version": MODEL_FORMAT_VERSION,
        "theta": model.theta.to_dict(),
        "y_mean": float(model.y_mean),
        "X": [[float(a), float(b)] for a, b in model.X],
        "y_centered": [float(v) for v in model.y_centered],
    }


def model_from_dict(d: dict) -> GpModel:
    version = d.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise PreconditionError(f"unsupported model format version {version!r}")
    theta = Hyperparams.from_dict(d["theta"])
    theta.validate()
    x_arr = np.asarray(d["X"], dtype=float).reshape(-1, 2)
    yc = np.asarray(d["y_centered"], dtype=float).ravel()
    if x_arr.shape[0] != yc.shape[0]:
        raise PreconditionError("stored X and y_centered length mismatch")
    return _build_from_centered(x_arr, yc, float(d["y_mean"]), theta)


def save_model(model: GpModel, path: str | os.PathLike):
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh, indent=2)
        fh.write("\n")


def load_model(path: str | os.PathLike) -> GpModel:
    with open(path) as fh:
        return model_from_dict(json.load(fh))
