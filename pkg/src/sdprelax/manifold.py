"""Geometry of the low-rank feasibility variety.

The variety is

    { R in R^{n x r} :  affine rows,  ||2 R_i - e1||^2 = 1 + v_i  for i in B }

where the affine rows are either A R = b e1.T (the lifted-row variant used by
the RLT/DNN family) or A (R e1) = b (first-column only, as needed when the
lifted rows are not part of the kept set), and v is an optional sphere
perturbation that restores constraint-gradient independence at degenerate
points.

Operations: feasibility residual, seeded random feasible points, tangent-space
projection (with structure-exploiting multiplier solves), a fixed-point
retraction polished to a local metric projection, and sphere perturbation.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.linalg import lapack

from . import kernels
from .errors import Infeasible, RetractionFailed, SingularSystem

_COND_LIMIT = 1e12


@dataclass(frozen=True)
class ManifoldSpec:
    n: int
    r: int
    A: np.ndarray
    b: np.ndarray
    binary: tuple
    v: np.ndarray = None
    affine_cols: str = "all"  # "all": A R = b e1.T; "first": A (R e1) = b

    def __post_init__(self):
        n = int(self.n)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "r", int(self.r))
        A = np.asarray(self.A, dtype=float).reshape(-1, n)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", np.asarray(self.b, dtype=float).reshape(-1))
        object.__setattr__(self, "binary", tuple(int(i) for i in self.binary))
        v = np.zeros(len(self.binary)) if self.v is None else np.asarray(self.v, dtype=float)
        object.__setattr__(self, "v", v.reshape(-1))
        if self.r < 1:
            raise ValueError("rank must be at least 1")
        if self.affine_cols not in ("all", "first"):
            raise ValueError("affine_cols must be 'all' or 'first'")
        if self.v.shape[0] != len(self.binary):
            raise ValueError("perturbation length must match the binary set")
        m = A.shape[0]
        if m:
            # Cached factorizations for affine projections and multiplier solves.
            AAt = A @ A.T
            cho = sla.cho_factor(AAt + 1e-14 * np.trace(AAt) / max(m, 1) * np.eye(m))
            object.__setattr__(self, "_cho_AAt", cho)
            if self.binary:
                bidx = np.asarray(self.binary, dtype=int)
                AB = A[:, bidx]
                object.__setattr__(self, "_gramM", AB.T @ sla.cho_solve(cho, AB))
            else:
                object.__setattr__(self, "_gramM", None)
        else:
            object.__setattr__(self, "_cho_AAt", None)
            object.__setattr__(self, "_gramM", None)

    @property
    def m(self):
        return self.A.shape[0]

    @property
    def p(self):
        return len(self.binary)

    @property
    def radii(self):
        return np.sqrt(1.0 + self.v)

    def bindex(self):
        return np.asarray(self.binary, dtype=int)


@dataclass(frozen=True)
class ManifoldPoint:
    R: np.ndarray
    residual: float


def residual(spec, R):
    """Feasibility residual combining affine and sphere violations."""
    res_sq = 0.0
    if spec.m:
        if spec.affine_cols == "all":
            E = spec.A @ R
            E[:, 0] -= spec.b
        else:
            E = (spec.A @ R[:, 0] - spec.b)[:, None]
        res_sq += float(np.sum(E * E))
    if spec.p:
        bidx = spec.bindex()
        U = 2.0 * R[bidx]
        U[:, 0] -= 1.0
        g = (U * U).sum(axis=1) - (1.0 + spec.v)
        res_sq += float(g @ g)
    return np.sqrt(res_sq)


def _affine_project(spec, R):
    """Exact metric projection onto the affine rows."""
    if spec.m == 0:
        return R
    if spec.affine_cols == "all":
        E = spec.A @ R
        E[:, 0] -= spec.b
        return R - spec.A.T @ sla.cho_solve(spec._cho_AAt, E)
    out = R.copy()
    e = spec.A @ R[:, 0] - spec.b
    out[:, 0] -= spec.A.T @ sla.cho_solve(spec._cho_AAt, e)
    return out


def _sphere_project(spec, R):
    """Exact row-wise metric projection onto the (perturbed) spheres."""
    if spec.p == 0:
        return R
    return kernels.scale_sphere_rows(R, spec.bindex(), spec.radii, col0_center=1.0)


def _alternating_feasible(spec, R, tol, cap):
    for _ in range(cap):
        R = _sphere_project(spec, _affine_project(spec, R))
        if residual(spec, R) <= tol:
            return R
    return None


def random_feasible(spec, seed=0, attempts=8):
    """Seeded random point on the variety (bitwise deterministic per seed)."""
    rng = np.random.default_rng(seed)
    for _ in range(attempts):
        R = rng.standard_normal((spec.n, spec.r))
        out = _alternating_feasible(spec, R, 1e-12 * (1 + np.sqrt(spec.n)), 500)
        if out is not None:
            return ManifoldPoint(out, residual(spec, out))
    raise Infeasible(
        f"random_feasible: no point found after {attempts} seeded attempts; "
        "the affine rows and sphere constraints may be inconsistent"
    )


def _sphere_dirs(spec, R):
    """Rows u_i = 2 R_i - e1 of the sphere-constraint gradients e_i u_i.T."""
    bidx = spec.bindex()
    U = 2.0 * R[bidx]
    U[:, 0] -= 1.0
    return bidx, U


def _guarded_cho(S, what):
    """Cholesky of the jittered complement with a singularity guard.

    The jitter is 1e-12 * trace; the condition of the unjittered matrix is
    estimated by stripping the jitter back out of the LAPACK rcond estimate,
    so an exactly singular complement is flagged regardless of its trace.
    """
    p = S.shape[0]
    jitter = 1e-12 * max(np.trace(S), 1e-300)
    Sj = S + jitter * np.eye(p)
    try:
        cS = sla.cho_factor(Sj)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(f"{what}: complement not positive definite") from exc
    anorm = np.linalg.norm(Sj, 1)
    rcond, info = lapack.dpocon(cS[0], anorm, uplo=b"L" if cS[1] else b"U")
    if info != 0 or rcond <= 0.0:
        raise SingularSystem(f"{what}: condition estimate unavailable", cond=np.inf)
    lam_min_est = anorm * rcond - jitter
    if lam_min_est <= 0.0:
        raise SingularSystem(f"{what}: singular to working precision", cond=np.inf)
    cond = anorm / lam_min_est
    if cond > _COND_LIMIT:
        raise SingularSystem(f"{what}: condition estimate {cond:.2e}", cond=cond)
    return cS, cond


def _solve_multipliers(spec, R, rhs_s, rhs_a):
    """Multipliers (s, theta) of the constraint-gradient normal system.

    Gradient rows are e_i u_i.T for the spheres and a_j e_k.T for the affine
    block (k over all columns or only the first).  The sphere block of the
    Gram matrix is diagonal, so the system is solved through the sphere
    Schur complement D - M o (U_K U_K.T) with M = A_B.T (A A.T)^{-1} A_B
    cached on the spec.
    """
    m, p = spec.m, spec.p
    if p == 0:
        return np.zeros(0), sla.cho_solve(spec._cho_AAt, rhs_a)
    bidx, U = _sphere_dirs(spec, R)
    D = (U * U).sum(axis=1)
    if m == 0:
        if np.any(D < 1e-300):
            raise SingularSystem("zero sphere-gradient row", cond=np.inf)
        cond = float(D.max() / D.min())
        if cond > _COND_LIMIT:
            raise SingularSystem("ill-conditioned sphere Gram", cond=cond)
        return rhs_s / D, np.zeros((0, 0))
    ncols = rhs_a.shape[1]
    Ucols = U[:, :ncols]
    S = np.diag(D) - spec._gramM * (Ucols @ Ucols.T)
    cS, _ = _guarded_cho(S, "tangent system")
    t = sla.cho_solve(spec._cho_AAt, rhs_a)          # (m, K)
    rhs_red = rhs_s - (Ucols * (spec.A[:, bidx].T @ t)).sum(axis=1)
    s = sla.cho_solve(cS, rhs_red)
    corr = spec.A[:, bidx] @ (Ucols * s[:, None])     # (m, K)
    theta = sla.cho_solve(spec._cho_AAt, rhs_a - corr)
    return s, theta


def _apply_multipliers(spec, R, W, s, theta, ncols):
    out = W.copy()
    if spec.p:
        bidx, U = _sphere_dirs(spec, R)
        out[bidx] -= s[:, None] * U
    if spec.m:
        out[:, :ncols] -= spec.A.T @ theta
    return out


def tangent_project(spec, R, W):
    """Orthogonal projection of an ambient direction onto the tangent space.

    Solves the SPD normal system for the constraint multipliers through the
    sphere Schur complement (the sphere-sphere Gram block is diagonal and the
    affine Gram is cached).  Raises SingularSystem when the condition
    estimate exceeds 1e12 (LICQ failure; callers perturb).
    """
    m, p, r = spec.m, spec.p, spec.r
    W = np.asarray(W, dtype=float)
    if m == 0 and p == 0:
        return W.copy()
    ncols = (r if spec.affine_cols == "all" else 1) if m else 0
    rhs_a = spec.A @ W[:, :ncols] if m else np.zeros((0, 0))
    if p:
        bidx, U = _sphere_dirs(spec, R)
        rhs_s = (U * W[bidx]).sum(axis=1)
    else:
        rhs_s = np.zeros(0)
    s, theta = _solve_multipliers(spec, R, rhs_s, rhs_a)
    return _apply_multipliers(spec, R, W, s, theta, ncols)


def _gauss_newton_feasible(spec, R, tol, cap):
    """Drive the constraint residual to tol by Gauss-Newton steps.

    Quadratically convergent near the variety when the gradients are
    independent; returns None on singular systems or stagnation so callers
    can fall back to plain alternating projections.
    """
    ncols = (spec.r if spec.affine_cols == "all" else 1) if spec.m else 0
    for _ in range(cap):
        res = residual(spec, R)
        if res <= tol:
            return R
        if spec.m:
            if spec.affine_cols == "all":
                rhs_a = spec.A @ R
                rhs_a[:, 0] -= spec.b
            else:
                rhs_a = (spec.A @ R[:, 0] - spec.b)[:, None]
        else:
            rhs_a = np.zeros((0, 0))
        if spec.p:
            bidx, U = _sphere_dirs(spec, R)
            rhs_s = 0.25 * ((U * U).sum(axis=1) - (1.0 + spec.v))
        else:
            rhs_s = np.zeros(0)
        try:
            s, theta = _solve_multipliers(spec, R, rhs_s, rhs_a)
        except SingularSystem:
            return None
        nxt = _apply_multipliers(spec, R, R, s, theta, ncols)
        if residual(spec, nxt) >= 0.9 * res:
            return None
        R = nxt
    return None


def retract(spec, W, tol=1e-10, cap=100):
    """Metric projection of an ambient point onto the variety.

    The binary-only case (no affine rows) is exact row normalization; the
    affine-only case is a single exact projection.  The general case runs the
    alternating fixed point (affine projection / row normalization) and then
    polishes with projected-gradient steps on 0.5 * ||R - W||^2 so the result
    is a local minimizer of the distance, validated against a grid oracle at
    tiny scale in the tests.
    """
    W = np.asarray(W, dtype=float)
    scale = 1.0 + float(np.linalg.norm(W))
    if spec.m == 0:
        R = _sphere_project(spec, W)
        return ManifoldPoint(R, residual(spec, R))
    if spec.p == 0:
        R = _affine_project(spec, W)
        return ManifoldPoint(R, residual(spec, R))
    R = _restore_feasibility(spec, W, tol * scale, cap)
    if R is None:
        # Symmetric starts can trap the fixed point in a lower-dimensional
        # slice; retry from deterministically nudged copies of W.
        for k, mag in enumerate((1e-6, 1e-4, 1e-2, 1e-1)):
            noise = np.random.default_rng(1000 + k).standard_normal(W.shape)
            R = _restore_feasibility(spec, W + mag * scale * noise, tol * scale, cap)
            if R is not None:
                break
    if R is None:
        raise RetractionFailed(
            f"retraction fixed point did not reach {tol:g} within {cap} iterations"
        )
    # polish toward the local metric projection
    for _ in range(cap):
        g = tangent_project(spec, R, R - W)
        gn = float(np.linalg.norm(g))
        if gn <= 1e-10 * scale:
            break
        step = 1.0
        base = float(np.sum((R - W) ** 2))
        improved = False
        for _ in range(20):
            cand = _restore_feasibility(spec, R - step * g, tol * scale, cap)
            if cand is not None and float(np.sum((cand - W) ** 2)) < base:
                R = cand
                improved = True
                break
            step *= 0.5
        if not improved:
            break
    return ManifoldPoint(R, residual(spec, R))


def _restore_feasibility(spec, R, tol, cap):
    """Alternating-projection warmup with Gauss-Newton cleanup attempts."""
    cur = R
    for sweep in range(cap):
        cur = _sphere_project(spec, _affine_project(spec, cur))
        if residual(spec, cur) <= tol:
            return cur
        if sweep % 5 == 4:
            gn = _gauss_newton_feasible(spec, cur, tol, 25)
            if gn is not None:
                return gn
    return None


def perturb(spec, epsilon, seed=0):
    """Resample the sphere perturbation with exact norm epsilon."""
    if epsilon <= 0.0:
        raise ValueError("perturbation magnitude must be positive")
    if spec.p == 0:
        raise ValueError("spec has no sphere constraints to perturb")
    g = np.random.default_rng(seed).standard_normal(spec.p)
    g *= epsilon / np.linalg.norm(g)
    return ManifoldSpec(
        spec.n, spec.r, spec.A, spec.b, spec.binary, v=g, affine_cols=spec.affine_cols
    )


def with_rank(spec, r, reset_perturbation=True):
    """Same variety with a different factor rank (and a fresh zero v)."""
    v = None if reset_perturbation else spec.v
    return ManifoldSpec(spec.n, r, spec.A, spec.b, spec.binary, v=v,
                        affine_cols=spec.affine_cols)
