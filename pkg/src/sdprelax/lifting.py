"""Convex lifting phase: one projected-gradient step on the kept block.

The projection onto {kept equalities} ∩ PSD is computed in preprocessed
coordinates.  With K = [1, e.T/2; 0, I/2] the corner and binary-diagonal
constraints become unit-diagonal constraints D(Yhat) = e, and the linear
rows aggregate into the single pairing <N N.T, Yhat> = 0 with N = K P,
P = [b.T; -A.T].  The pairing is absorbed by the projector J = I - N N^+
(projection onto the PSD face through J . J), leaving a small dual equation

    D( J Pi_psd( J (Ghat + D*(y)) J ) J ) - e = 0

solved by a semismooth Newton method with preconditioned CG, warm-started
from multipliers recovered in the low-rank phase.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from . import lowrank, manifold
from .errors import CGBreakdown, DescentViolated, MaxNewtonIters, ShapeMismatch
from .symmat import psd_factorize_hat, symmetrize

SSN_ARMIJO = 1e-4
SSN_BACKTRACK = 0.5


@dataclass(frozen=True)
class PreprocessContext:
    order: int               # n + 1
    K: np.ndarray
    Kinv: np.ndarray
    P: np.ndarray            # (n+1, m)
    N: np.ndarray            # K @ P, possibly column-trimmed
    Jproj: np.ndarray        # I - N N^+
    binary: tuple            # kept diagonal ties (indices into the variable part)
    q: np.ndarray            # rhs of the untransformed constraints [0_p; 1]
    rank_deficient: bool

    @property
    def diag_idx(self):
        """Matrix positions carrying the unit-diagonal constraints: corner first."""
        return np.concatenate(([0], np.asarray(self.binary, dtype=int) + 1))


def make_K(n):
    K = np.zeros((n + 1, n + 1))
    K[0, 0] = 1.0
    K[0, 1:] = 0.5
    K[1:, 1:] = 0.5 * np.eye(n)
    return K


def make_Kinv(n):
    # closed form: [1, -e.T; 0, 2I]
    Ki = np.zeros((n + 1, n + 1))
    Ki[0, 0] = 1.0
    Ki[0, 1:] = -1.0
    Ki[1:, 1:] = 2.0 * np.eye(n)
    return Ki


def h0_matrix(n):
    H = np.zeros((n + 1, n + 1))
    H[0, 0] = 1.0
    return H


def hk_matrix(n, k):
    H = np.zeros((n + 1, n + 1))
    H[0, k + 1] = -0.5
    H[k + 1, 0] = -0.5
    H[k + 1, k + 1] = 1.0
    return H


def preprocess(sdp):
    """Context for the preprocessed projection; verifies the congruence
    identities K H0 K.T = e1 e1.T and 4 K Hk K.T + K H0 K.T = diag(e_k) on a
    deterministic sample of binary indices."""
    kept = sdp.kept
    if not kept.lift_rows and kept.m > 0:
        raise ShapeMismatch(
            "preprocess: kept block lacks the lifted rows; the pairing "
            "aggregation needs A X = b x.T inside the kept set"
        )
    n = kept.dim
    K = make_K(n)
    Kinv = make_Kinv(n)
    P = kept.homog_P()
    N = K @ P
    rank_deficient = False
    if kept.m:
        Q, Rf, _ = sla.qr(N, mode="economic", pivoting=True)
        diag = np.abs(np.diag(Rf))
        rank = int(np.sum(diag > 1e-12 * max(diag[0], 1e-300))) if diag.size else 0
        rank_deficient = rank < N.shape[1]
        Qn = Q[:, :rank]
        Jproj = np.eye(n + 1) - Qn @ Qn.T
    else:
        Jproj = np.eye(n + 1)
    Jproj = symmetrize(Jproj)
    ctx = PreprocessContext(
        order=n + 1, K=K, Kinv=Kinv, P=P, N=N, Jproj=Jproj,
        binary=kept.binary, q=np.concatenate([np.zeros(kept.p), [1.0]]),
        rank_deficient=rank_deficient,
    )
    _verify_identities(ctx, n)
    return ctx


def _verify_identities(ctx, n, sample_cap=8):
    K = ctx.K
    lhs0 = K @ h0_matrix(n) @ K.T
    e1e1 = h0_matrix(n)
    if np.max(np.abs(lhs0 - e1e1)) > 1e-14:
        raise AssertionError("preprocess identity K H0 K.T = e1 e1.T failed")
    binary = ctx.binary
    sample = binary if len(binary) <= sample_cap else (
        binary[: sample_cap // 2] + binary[-sample_cap // 2:]
    )
    for k in sample:
        lhs = 4.0 * (K @ hk_matrix(n, k) @ K.T) + lhs0
        want = np.zeros((n + 1, n + 1))
        want[k + 1, k + 1] = 1.0
        if np.max(np.abs(lhs - want)) > 1e-14:
            raise AssertionError("preprocess identity 4 K Hk K.T + K H0 K.T failed")


def d_apply(ctx, Y):
    idx = ctx.diag_idx
    return Y[idx, idx]


def d_adjoint(ctx, y):
    out = np.zeros((ctx.order, ctx.order))
    idx = ctx.diag_idx
    out[idx, idx] = y
    return out


@dataclass
class SsnReport:
    newton_iters: int = 0
    cg_iters: int = 0
    residual: float = np.inf
    warm_started: bool = False
    status: str = "running"
    trace: list = field(default_factory=list)


def _eig_proj(ctx, y, Ghat):
    M = ctx.Jproj @ (Ghat + d_adjoint(ctx, y)) @ ctx.Jproj
    M = symmetrize(M)
    vals, vecs = np.linalg.eigh(M)
    pos = vals > 0.0
    Upos = vecs[:, pos]
    lpos = vals[pos]
    Pi = (Upos * lpos) @ Upos.T if lpos.size else np.zeros_like(M)
    return symmetrize(Pi), vals, vecs


def _dual_value(ctx, y, Pi):
    return 0.5 * float(np.sum(Pi * Pi)) - float(np.sum(y))


def _residual(ctx, Pi):
    JPiJ = ctx.Jproj @ Pi @ ctx.Jproj
    return d_apply(ctx, JPiJ) - 1.0


def _omega(vals):
    """Spectral divided-difference weights of the PSD projection."""
    k = vals.shape[0]
    pos = vals > 0.0
    Om = np.zeros((k, k))
    if not np.any(pos):
        return Om, pos
    Om[np.ix_(pos, pos)] = 1.0
    neg = ~pos
    if np.any(neg):
        lp = vals[pos]
        ln = vals[neg]
        t = lp[:, None] / (lp[:, None] - ln[None, :])
        Om[np.ix_(pos, neg)] = t
        Om[np.ix_(neg, pos)] = t.T
    return Om, pos


def ssn_project(ctx, Ghat, y0_init=0.0, y_init=None, tol=1e-9, max_newton=50,
                cg_cap=200):
    """Solve the preprocessed projection through its diagonal dual equation.

    Returns (Yhat1, y, y0, report) where Yhat1 is the projected matrix,
    y the diagonal multipliers and y0 the (pass-through) pairing multiplier.
    """
    Ghat = symmetrize(np.asarray(Ghat, dtype=float))
    pdim = ctx.diag_idx.size
    warm = y_init is not None
    y = np.zeros(pdim) if y_init is None else np.asarray(y_init, dtype=float).copy()
    if y.shape[0] != pdim:
        raise ShapeMismatch(f"ssn_project: y has size {y.shape[0]}, expected {pdim}")
    report = SsnReport(warm_started=warm)
    jitter = 1e-12

    Pi, vals, vecs = _eig_proj(ctx, y, Ghat)
    F = _residual(ctx, Pi)
    fnorm = float(np.linalg.norm(F))
    theta = _dual_value(ctx, y, Pi)
    for it in range(max_newton + 1):
        report.residual = fnorm
        report.trace.append((it, fnorm))
        if fnorm <= tol:
            report.status = "converged"
            report.newton_iters = it
            Yhat1 = symmetrize(ctx.Jproj @ Pi @ ctx.Jproj)
            return Yhat1, y, float(y0_init), report
        if it == max_newton:
            break
        Om, pos = _omega(vals)
        T = ctx.Jproj[:, ctx.diag_idx]          # (order, p+1)
        Wmat = vecs.T @ T                        # eigen-basis images of the picks
        alpha_idx = np.nonzero(pos)[0]
        neg_idx = np.nonzero(~pos)[0]
        Wa = Wmat[alpha_idx, :]
        Wn = Wmat[neg_idx, :]
        tau = Om[np.ix_(alpha_idx, neg_idx)] if neg_idx.size else None

        def jac(h):
            # V h = D(J U (Om o (U.T J D*(h) J U)) U.T J), using the block
            # structure of Om: ones on alpha x alpha, tau on alpha x neg
            if alpha_idx.size == 0:
                return jitter * h
            Ha = (Wa * h) @ Wmat.T               # rows alpha of U.T H U
            term = ((Ha[:, alpha_idx] @ Wa) * Wa).sum(axis=0)
            if neg_idx.size:
                Tan = tau * Ha[:, neg_idx]
                term = term + 2.0 * ((Tan @ Wn) * Wa).sum(axis=0)
            return term + jitter * h

        # exact diagonal preconditioner
        D2a = Wa * Wa
        diag = (Om[np.ix_(alpha_idx, alpha_idx)] @ D2a * D2a).sum(axis=0)
        if Wn.shape[0]:
            D2n = Wn * Wn
            diag = diag + 2.0 * (tau @ D2n * D2a).sum(axis=0)
        diag = np.maximum(diag + jitter, 1e-14)

        d, cg_used, ok = _pcg(jac, -F, diag, cg_cap,
                              rtol=min(0.1, np.sqrt(fnorm)))
        report.cg_iters += cg_used
        if not ok:
            jitter *= 100.0
            if jitter > 1e-4:
                report.status = "cg_breakdown"
                raise CGBreakdown("ssn_project: CG breakdown persists", report)
            continue
        slope = float(F @ d)
        if slope >= 0.0:
            d = -F.copy()
            slope = -float(F @ F)
        step = 1.0
        accepted = False
        for _ in range(30):
            y_try = y + step * d
            Pi_t, vals_t, vecs_t = _eig_proj(ctx, y_try, Ghat)
            theta_t = _dual_value(ctx, y_try, Pi_t)
            if theta_t <= theta + SSN_ARMIJO * step * slope:
                accepted = True
                break
            step *= SSN_BACKTRACK
        if not accepted:
            y_try, Pi_t, vals_t, vecs_t = y + 1e-8 * d, *_eig_proj(ctx, y + 1e-8 * d, Ghat)
            theta_t = _dual_value(ctx, y_try, Pi_t)
        y, Pi, vals, vecs, theta = y_try, Pi_t, vals_t, vecs_t, theta_t
        F = _residual(ctx, Pi)
        fnorm = float(np.linalg.norm(F))
    report.status = "max_newton"
    report.newton_iters = max_newton
    raise MaxNewtonIters(
        f"ssn_project: residual {fnorm:.3e} after {max_newton} Newton steps", report
    )


def _pcg(apply_A, rhs, diag, cap, rtol):
    """Preconditioned conjugate gradient with a Jacobi preconditioner."""
    x = np.zeros_like(rhs)
    r = rhs.copy()
    z = r / diag
    p = z.copy()
    rz = float(r @ z)
    rhs_norm = float(np.linalg.norm(rhs))
    if rhs_norm == 0.0:
        return x, 0, True
    for it in range(1, cap + 1):
        Ap = apply_A(p)
        pAp = float(p @ Ap)
        if pAp <= 0.0:
            return (x, it, False) if it == 1 else (x, it, True)
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        if np.linalg.norm(r) <= rtol * rhs_norm:
            return x, it, True
        z = r / diag
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, cap, True


def warm_start_duals(ctx, alpha, mu, beta, S1, t):
    """Multipliers of the projection problem from subproblem multipliers.

    y0 = t*beta, y = t*[alpha - sum(mu)/4; mu/4], S2 = t * K S1 K.T.
    """
    mu = np.asarray(mu, dtype=float).reshape(-1)
    y0 = float(t) * float(beta)
    y = float(t) * np.concatenate(([float(alpha) - 0.25 * mu.sum()], 0.25 * mu))
    S2 = float(t) * (ctx.K @ np.asarray(S1, dtype=float) @ ctx.K.T) if S1 is not None else None
    return y0, y, S2


@dataclass
class PgResult:
    point: manifold.ManifoldPoint
    spec: "manifold.ManifoldSpec"
    rank: int
    Y1: np.ndarray
    objective_before: float
    objective_after: float
    report: SsnReport
    halvings: int = 0


def pg_step(sdp, ctx, spec, R, params, warm=None, tol=None, rank_tol=1e-8,
            max_halvings=5):
    """One projected-gradient step on the kept-block subproblem.

    Computes Y0 = hat(R) hat(R).T, takes the gradient of the penalized
    objective, projects Y0 - t grad onto the kept set in preprocessed
    coordinates (warm-started SSN), maps back, and refactorizes at the
    automatically detected rank.  The step t = 1/sigma is halved (at most
    max_halvings times) if the penalized objective fails to decrease.
    """
    ev = lowrank.evaluate(sdp, R, params, need_grad=False)
    Y0 = ev.Y
    L0 = ev.value
    grad = ev.W
    if tol is None:
        tol = 1e-9 * (1.0 + float(np.linalg.norm(Y0)))
    Yhat0 = ctx.Kinv.T @ Y0 @ ctx.Kinv
    KgK = ctx.K @ grad @ ctx.K.T
    t = 1.0 / params.sigma
    y_init = None
    y0_init = 0.0
    if warm is not None:
        alpha, mu_b, beta, S1 = warm
        y0_init, y_init, _ = warm_start_duals(ctx, alpha, mu_b, beta, None, t)
    last_report = None
    for halving in range(max_halvings + 1):
        Ghat = symmetrize(Yhat0 - t * KgK)
        Yhat1, y, y0, report = ssn_project(
            ctx, Ghat, y0_init=y0_init, y_init=y_init, tol=tol
        )
        last_report = report
        Y1 = symmetrize(ctx.K.T @ Yhat1 @ ctx.K)
        L1 = lowrank.lagrangian_at(sdp, Y1, params)
        if L1 <= L0 + 1e-10 * (1.0 + abs(L0)):
            R1 = psd_factorize_hat(Y1, rel_tol=rank_tol)
            rank = R1.shape[1]
            new_spec = manifold.with_rank(spec, rank)
            if manifold.residual(new_spec, R1) > 1e-8 * (1.0 + np.linalg.norm(R1)):
                pt = manifold.retract(new_spec, R1)
            else:
                pt = manifold.ManifoldPoint(R1, manifold.residual(new_spec, R1))
            return PgResult(pt, new_spec, rank, Y1, L0, L1, report, halving)
        t *= 0.5
        if warm is not None:
            y0_init, y_init, _ = warm_start_duals(ctx, alpha, mu_b, beta, None, t)
    raise DescentViolated(
        f"pg_step: no penalized-objective decrease after {max_halvings} halvings"
    )
