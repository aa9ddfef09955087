"""Dense symmetric-matrix kernel.

Spectral decomposition, projection onto the PSD cone, congruence transforms,
and the corner-anchored PSD factorization that maps a lifted matrix back to
a low-rank factor whose augmented first row is exactly e1.

Symmetric matrices are plain float ndarrays stored canonically
(entries(i,j) == entries(j,i) exactly); `symmetrize` produces that form.
"""

from typing import NamedTuple

import numpy as np

from .errors import CornerMismatch, NonFinite, NotPsd, ShapeMismatch


class EigPair(NamedTuple):
    values: np.ndarray   # sorted descending
    vectors: np.ndarray  # orthonormal columns, matching order


def symmetrize(M):
    """Canonical symmetric storage (exact equality of mirror entries)."""
    M = np.asarray(M, dtype=float)
    return 0.5 * (M + M.T)


def _require_square(M, who):
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ShapeMismatch(f"{who}: expected a square matrix, got shape {M.shape}")


def sym_eig(M):
    """Full spectral decomposition with eigenvalues sorted descending.

    Eigenvector signs are fixed so the largest-magnitude entry of each
    column is positive, which makes downstream factorizations reproducible.
    """
    M = np.asarray(M, dtype=float)
    _require_square(M, "sym_eig")
    if not np.all(np.isfinite(M)):
        raise NonFinite("sym_eig: matrix contains NaN or Inf")
    vals, vecs = np.linalg.eigh(symmetrize(M))
    vals = vals[::-1].copy()
    vecs = vecs[:, ::-1].copy()
    for k in range(vecs.shape[1]):
        col = vecs[:, k]
        pivot = int(np.argmax(np.abs(col)))
        if col[pivot] < 0.0:
            vecs[:, k] = -col
    return EigPair(vals, vecs)


def psd_project(M):
    """Metric projection onto the PSD cone: clip negative eigenvalues."""
    vals, vecs = sym_eig(M)
    clipped = np.maximum(vals, 0.0)
    return symmetrize((vecs * clipped) @ vecs.T)


def congruence(M, T):
    """T @ M @ T.T with a symmetric result.

    Satisfies the trace pairing <congruence(C, K), Y> = <C, K.T @ Y @ K>.
    """
    M = np.asarray(M, dtype=float)
    T = np.asarray(T, dtype=float)
    _require_square(M, "congruence")
    if T.ndim != 2 or T.shape[1] != M.shape[0]:
        raise ShapeMismatch(
            f"congruence: T has shape {T.shape}, incompatible with M of order {M.shape[0]}"
        )
    return symmetrize(T @ M @ T.T)


def psd_factorize_hat(Y, rel_tol=1e-8):
    """Factor a PSD lifted matrix Y (with Y[0,0] = 1) as hat(R) @ hat(R).T.

    hat(R) = [e1.T; R]; the rank r is the number of eigenvalues above
    rel_tol * lambda_max.  The first row of the raw spectral factor has unit
    norm (it reproduces Y[0,0] = 1), so a single Householder reflection
    aligns it with e1; the row is then pinned to e1 exactly.

    Returns R with shape (n, r) for Y of order n + 1.
    """
    Y = np.asarray(Y, dtype=float)
    _require_square(Y, "psd_factorize_hat")
    if not np.all(np.isfinite(Y)):
        raise NonFinite("psd_factorize_hat: matrix contains NaN or Inf")
    if abs(Y[0, 0] - 1.0) > 1e-6:
        raise CornerMismatch(f"psd_factorize_hat: Y[0,0] = {Y[0, 0]!r}, expected 1")
    vals, vecs = sym_eig(Y)
    lam_max = vals[0]
    if lam_max <= 0.0:
        raise NotPsd("psd_factorize_hat: no positive eigenvalue")
    if vals[-1] < -1e-6 * lam_max:
        raise NotPsd(
            f"psd_factorize_hat: lambda_min = {vals[-1]!r} below -1e-6 * lambda_max"
        )
    r = int(np.sum(vals > rel_tol * lam_max))
    r = max(r, 1)
    F = vecs[:, :r] * np.sqrt(np.maximum(vals[:r], 0.0))

    f0 = F[0, :].copy()
    nrm = float(np.linalg.norm(f0))
    if nrm < 0.5:
        raise CornerMismatch(
            "psd_factorize_hat: corner mass lost in truncation; first factor row "
            f"has norm {nrm!r}"
        )
    target = np.zeros(r)
    target[0] = nrm
    v = f0 - target
    if np.linalg.norm(v) > 1e-14 * nrm:
        # Householder on the right maps the first factor row onto nrm * e1.
        v /= np.linalg.norm(v)
        F = F - 2.0 * np.outer(F @ v, v)
    Rhat = F
    Rhat[0, :] = 0.0
    Rhat[0, 0] = 1.0
    return Rhat[1:, :].copy()


def hat(R):
    """Augment a factor with the anchored first row e1."""
    R = np.asarray(R, dtype=float)
    n, r = R.shape
    out = np.zeros((n + 1, r))
    out[0, 0] = 1.0
    out[1:, :] = R
    return out


def gram_hat(R):
    """hat(R) @ hat(R).T, symmetric by construction."""
    H = hat(R)
    return symmetrize(H @ H.T)
