"""Hot numeric loops, compiled with numba when available.

The heavy linear algebra (eigendecompositions, matrix products) stays in
LAPACK/BLAS through numpy; the kernels here cover the memory-bound loops
around it: symmetric lower-triangle packing, the hinge update of penalized
inequality multipliers, and sphere-row normalization.

Set SDPRELAX_DISABLE_NUMBA=1 to force the pure-numpy implementations
(also used automatically when numba is not importable).  The selected
backend is reported by `backend()`.  `benchmarks/bench_kernels.py`
compares both paths.
"""

import os

import numpy as np

_DISABLE = os.environ.get("SDPRELAX_DISABLE_NUMBA", "") == "1"

try:
    if _DISABLE:
        raise ImportError
    from numba import njit

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False

    def njit(*args, **kwargs):  # signature-compatible no-op decorator
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


_TRIL_CACHE = {}


def _tril_idx(n):
    pair = _TRIL_CACHE.get(n)
    if pair is None:
        pair = np.tril_indices(n)
        _TRIL_CACHE[n] = pair
    return pair


# ---------------------------------------------------------------- numpy path


def _pack_tril_np(M):
    i, j = _tril_idx(M.shape[0])
    return np.ascontiguousarray(M[i, j])


def _unpack_tril_half_np(w, n):
    out = np.zeros((n, n))
    i, j = _tril_idx(n)
    out[i, j] = w
    return (out + out.T) * 0.5


def _hinge_combo_np(mu, cy, h, sigma):
    return np.maximum(mu - sigma * (cy - h), 0.0)


def _scale_rows_np(R, rows, radii, col0_center):
    out = R.copy()
    U = 2.0 * out[rows]
    U[:, 0] -= col0_center
    norms = np.sqrt((U * U).sum(axis=1))
    for k in range(rows.shape[0]):
        if norms[k] < 1e-300:
            U[k, :] = 0.0
            U[k, 0] = radii[k]
        else:
            U[k, :] *= radii[k] / norms[k]
    U[:, 0] += col0_center
    out[rows] = 0.5 * U
    return out


# ---------------------------------------------------------------- numba path


@njit(cache=True)
def _pack_tril_nb(M):
    n = M.shape[0]
    out = np.empty(n * (n + 1) // 2)
    k = 0
    for i in range(n):
        for j in range(i + 1):
            out[k] = M[i, j]
            k += 1
    return out


@njit(cache=True)
def _unpack_tril_half_nb(w, n):
    out = np.zeros((n, n))
    k = 0
    for i in range(n):
        for j in range(i + 1):
            if i == j:
                out[i, i] = w[k]
            else:
                half = 0.5 * w[k]
                out[i, j] = half
                out[j, i] = half
            k += 1
    return out


@njit(cache=True)
def _hinge_combo_nb(mu, cy, h, sigma):
    out = np.empty_like(mu)
    for k in range(mu.shape[0]):
        v = mu[k] - sigma * (cy[k] - h[k])
        out[k] = v if v > 0.0 else 0.0
    return out


@njit(cache=True)
def _scale_rows_nb(R, rows, radii, col0_center):
    out = R.copy()
    r = R.shape[1]
    for k in range(rows.shape[0]):
        i = rows[k]
        sq = 0.0
        for c in range(r):
            u = 2.0 * out[i, c] - (col0_center if c == 0 else 0.0)
            sq += u * u
        nrm = np.sqrt(sq)
        if nrm < 1e-300:
            for c in range(r):
                out[i, c] = 0.5 * (col0_center if c == 0 else 0.0)
            out[i, 0] += 0.5 * radii[k]
        else:
            s = radii[k] / nrm
            for c in range(r):
                u = 2.0 * out[i, c] - (col0_center if c == 0 else 0.0)
                out[i, c] = 0.5 * (u * s + (col0_center if c == 0 else 0.0))
    return out


IMPLS = {
    "numpy": {
        "pack_tril": _pack_tril_np,
        "unpack_tril_half": _unpack_tril_half_np,
        "hinge_combo": _hinge_combo_np,
        "scale_rows": _scale_rows_np,
    }
}
if HAVE_NUMBA:
    IMPLS["numba"] = {
        "pack_tril": _pack_tril_nb,
        "unpack_tril_half": _unpack_tril_half_nb,
        "hinge_combo": _hinge_combo_nb,
        "scale_rows": _scale_rows_nb,
    }

_ACTIVE = IMPLS["numba"] if HAVE_NUMBA else IMPLS["numpy"]


def backend():
    return "numba" if HAVE_NUMBA else "numpy"


def pack_tril(M):
    """Lower triangle (including diagonal) of a square matrix, row-major."""
    return _ACTIVE["pack_tril"](np.ascontiguousarray(M, dtype=np.float64))


def unpack_tril_half(w, n):
    """Symmetric matrix whose pairing with any symmetric Y equals w . pack_tril(Y).

    Off-diagonal weights are split in half across the two mirror entries.
    """
    return _ACTIVE["unpack_tril_half"](np.ascontiguousarray(w, dtype=np.float64), n)


def hinge_combo(mu, cy, h, sigma):
    """max(mu - sigma*(cy - h), 0) in one pass."""
    return _ACTIVE["hinge_combo"](
        np.ascontiguousarray(mu, dtype=np.float64),
        np.ascontiguousarray(cy, dtype=np.float64),
        np.ascontiguousarray(h, dtype=np.float64),
        float(sigma),
    )


def scale_sphere_rows(R, rows, radii, col0_center=1.0):
    """Rescale selected rows so that ||2*row - center*e1|| equals the given radius.

    Zero rows are sent to the deterministic point with the radius on the
    first coordinate.
    """
    return _ACTIVE["scale_rows"](
        np.ascontiguousarray(R, dtype=np.float64),
        np.ascontiguousarray(rows, dtype=np.int64),
        np.ascontiguousarray(radii, dtype=np.float64),
        float(col0_center),
    )
