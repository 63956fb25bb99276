"""Hot numeric kernels, compiled with numba when available.

Every kernel has a pure-numpy twin.  The active backend is chosen once at
import time: numba when it imports cleanly, unless the environment variable
NEGLECT_MAPPER_BACKEND is set to "numpy" (or "numba", to insist and fail
loudly if it cannot be loaded).  Tests and benchmarks can switch at runtime
through use_backend().
"""

import math
import os
import warnings

import numpy as np

BACKEND_ENV = "NEGLECT_MAPPER_BACKEND"


def _sq_dists_np(a, b):
    diff = a[:, None, :] - b[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def _se_from_sqdists_np(d, sigma_f2, length_scale):
    return sigma_f2 * np.exp(-d / (2.0 * length_scale * length_scale))


def _lml_grad_terms_np(w, k, d, length_scale, sigma_eps2, jitter):
    wk = w * k
    s_wk = float(np.sum(wk))
    s_wkd = float(np.sum(wk * d))
    tr_w = float(np.trace(w))
    g_log_sf2 = 0.5 * (s_wk + jitter * tr_w)
    g_log_l = 0.5 * s_wkd / (length_scale * length_scale)
    g_log_eps2 = 0.5 * sigma_eps2 * tr_w
    return g_log_sf2, g_log_l, g_log_eps2


_NUMPY_IMPL = {
    "sq_dists": _sq_dists_np,
    "se_from_sqdists": _se_from_sqdists_np,
    "lml_grad_terms": _lml_grad_terms_np,
}

_NUMBA_IMPL = None


def _build_numba_impl():
    from numba import njit

    @njit(cache=True)
    def _sq_dists_nb(a, b):
        m = a.shape[0]
        n = b.shape[0]
        out = np.empty((m, n), dtype=np.float64)
        for i in range(m):
            for j in range(n):
                d0 = a[i, 0] - b[j, 0]
                d1 = a[i, 1] - b[j, 1]
                out[i, j] = d0 * d0 + d1 * d1
        return out

    @njit(cache=True)
    def _se_from_sqdists_nb(d, sigma_f2, length_scale):
        m = d.shape[0]
        n = d.shape[1]
        tl2 = 2.0 * length_scale * length_scale
        out = np.empty((m, n), dtype=np.float64)
        for i in range(m):
            for j in range(n):
                out[i, j] = sigma_f2 * math.exp(-d[i, j] / tl2)
        return out

    @njit(cache=True)
    def _lml_grad_terms_nb(w, k, d, length_scale, sigma_eps2, jitter):
        n = w.shape[0]
        s_wk = 0.0
        s_wkd = 0.0
        tr_w = 0.0
        for i in range(n):
            tr_w += w[i, i]
            for j in range(n):
                wk = w[i, j] * k[i, j]
                s_wk += wk
                s_wkd += wk * d[i, j]
        g_log_sf2 = 0.5 * (s_wk + jitter * tr_w)
        g_log_l = 0.5 * s_wkd / (length_scale * length_scale)
        g_log_eps2 = 0.5 * sigma_eps2 * tr_w
        return g_log_sf2, g_log_l, g_log_eps2

    return {
        "sq_dists": _sq_dists_nb,
        "se_from_sqdists": _se_from_sqdists_nb,
        "lml_grad_terms": _lml_grad_terms_nb,
    }


def _load_numba():
    global _NUMBA_IMPL
    if _NUMBA_IMPL is None:
        _NUMBA_IMPL = _build_numba_impl()
    return _NUMBA_IMPL


def available_backends() -> list[str]:
    names = ["numpy"]
    try:
        import numba  # noqa: F401

        names.append("numba")
    except ImportError:
        pass
    return names


_active_name = "numpy"
_active = _NUMPY_IMPL


def use_backend(name: str):
    """Select the kernel backend by name ("numpy" or "numba")."""
    global _active_name, _active
    if name == "numpy":
        _active_name, _active = "numpy", _NUMPY_IMPL
    elif name == "numba":
        _active_name, _active = "numba", _load_numba()
    else:
        raise ValueError(f"unknown backend {name!r}")


def active_backend() -> str:
    return _active_name


def _select_initial_backend():
    requested = os.environ.get(BACKEND_ENV, "").strip().lower()
    if requested == "numpy":
        return
    try:
        use_backend("numba")
    except ImportError:
        if requested == "numba":
            raise
        warnings.warn("numba unavailable, falling back to numpy kernels")


_select_initial_backend()


def sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise squared Euclidean distances between rows of a and b."""
    return _active["sq_dists"](np.ascontiguousarray(a), np.ascontiguousarray(b))


def se_from_sqdists(d: np.ndarray, sigma_f2: float, length_scale: float) -> np.ndarray:
    """Squared-exponential covariance from precomputed squared distances."""
    return _active["se_from_sqdists"](np.ascontiguousarray(d), sigma_f2, length_scale)


def lml_grad_terms(w, k, d, length_scale, sigma_eps2, jitter):
    """Gradient of the log marginal likelihood in log-hyperparameter space.

    w is alpha alpha^T minus the inverse of the noisy covariance; k and d are
    the noise-free covariance and squared-distance matrices.  Returns the
    three partials (log sigma_f2, log length_scale, log sigma_eps2).  The
    jitter term rides on sigma_f2, so it shows up in the first partial.
    """
    return _active["lml_grad_terms"](
        np.ascontiguousarray(w),
        np.ascontiguousarray(k),
        np.ascontiguousarray(d),
        length_scale,
        sigma_eps2,
        jitter,
    )
