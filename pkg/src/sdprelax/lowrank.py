"""Low-rank phase: factored augmented Lagrangian and Riemannian descent.

For a factor R with hat(R) = [e1.T; R] and Y = hat(R) hat(R).T the penalized
objective is

    f(R) = <C, Y> + (1/(2 sigma)) (||lam_plus||^2 + ||mu_plus||^2),
    lam_plus = lam - sigma (B(Y) - g),
    mu_plus  = max(mu - sigma (C(Y) - h), 0),

with Euclidean gradient 2 * Ihat (C - B*(lam_plus) - C*(mu_plus)) hat(R).
The descent loop uses alternating Barzilai-Borwein steps with a non-monotone
line search (reference value: max of the last 5 accepted values).
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels, manifold
from .errors import NonFinite
from .symmat import gram_hat, hat

BB_MIN = 1e-10
BB_MAX = 1e10
ARMIJO = 1e-4
BACKTRACK = 0.5
MAX_BACKTRACKS = 25
NONMONOTONE_WINDOW = 5


@dataclass(frozen=True)
class AugLagParams:
    sigma: float
    lam: np.ndarray
    mu: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "sigma", float(self.sigma))
        object.__setattr__(self, "lam", np.asarray(self.lam, dtype=float).reshape(-1))
        object.__setattr__(self, "mu", np.asarray(self.mu, dtype=float).reshape(-1))
        if self.sigma <= 0.0:
            raise ValueError("sigma must be positive")
        if self.mu.size and self.mu.min() < 0.0:
            raise ValueError("mu must be componentwise nonnegative")


@dataclass
class Evaluation:
    value: float
    lam_plus: np.ndarray
    mu_plus: np.ndarray
    W: np.ndarray          # C - B*(lam_plus) - C*(mu_plus)
    Y: np.ndarray
    grad: np.ndarray


def evaluate(sdp, R, params, need_grad=True):
    """Objective, shifted multipliers, dual-slack direction, and gradient."""
    Y = gram_hat(R)
    sig = params.sigma
    if sdp.eq.size:
        lam_plus = params.lam - sig * (sdp.eq.apply(Y) - sdp.eq.rhs)
    else:
        lam_plus = np.zeros(0)
    if sdp.ineq.size:
        mu_plus = kernels.hinge_combo(params.mu, sdp.ineq.apply(Y), sdp.ineq.rhs, sig)
    else:
        mu_plus = np.zeros(0)
    value = float(np.sum(sdp.C * Y))
    value += 0.5 / sig * (float(lam_plus @ lam_plus) + float(mu_plus @ mu_plus))
    if not np.isfinite(value):
        raise NonFinite("augmented Lagrangian value is not finite")
    W = sdp.C.copy()
    if lam_plus.size:
        sdp.eq.adjoint_into(-lam_plus, W)
    if mu_plus.size:
        sdp.ineq.adjoint_into(-mu_plus, W)
    grad = None
    if need_grad:
        grad = 2.0 * (W @ hat(R))[1:, :]
    return Evaluation(value, lam_plus, mu_plus, W, Y, grad)


def f_and_grad(sdp, spec, R, params):
    """Penalized objective and its Euclidean gradient at a factor point."""
    ev = evaluate(sdp, R, params)
    return ev.value, ev.grad


def lagrangian_at(sdp, Y, params):
    """The same penalized objective evaluated at a full matrix variable."""
    sig = params.sigma
    val = float(np.sum(sdp.C * Y))
    if sdp.eq.size:
        lam_plus = params.lam - sig * (sdp.eq.apply(Y) - sdp.eq.rhs)
        val += 0.5 / sig * float(lam_plus @ lam_plus)
    if sdp.ineq.size:
        mu_plus = kernels.hinge_combo(params.mu, sdp.ineq.apply(Y), sdp.ineq.rhs, sig)
        val += 0.5 / sig * float(mu_plus @ mu_plus)
    return val


@dataclass
class RgdReport:
    iterations: int = 0
    grad_norm: float = np.inf
    f_trace: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    status: str = "running"


def rgd_solve(sdp, spec, R0, params, max_iters=50, grad_tol=1e-6):
    """Riemannian gradient descent on the factored subproblem.

    Returns the last iterate (feasible to the manifold tolerance) and a
    report; every accepted step satisfies the non-monotone Armijo bound.
    SingularSystem / RetractionFailed propagate to the caller, which perturbs
    the variety and retries before escalating to the lifting phase.
    """
    R = np.asarray(R0, dtype=float)
    ev = evaluate(sdp, R, params)
    g = manifold.tangent_project(spec, R, ev.grad)
    gnorm = float(np.linalg.norm(g))
    report = RgdReport(f_trace=[ev.value], grad_norm=gnorm)
    if gnorm <= grad_tol:
        report.status = "stationary"
        return manifold.ManifoldPoint(R, manifold.residual(spec, R)), report

    window = [ev.value]
    t = 1.0 / params.sigma
    prev_R = None
    prev_g = None
    for it in range(1, max_iters + 1):
        if prev_R is not None:
            s = (R - prev_R).ravel()
            y = (g - prev_g).ravel()
            sy = float(s @ y)
            if sy > 0.0:
                if it % 2 == 0:
                    t = float(s @ s) / sy
                else:
                    t = sy / float(y @ y)
            t = min(max(t, BB_MIN), BB_MAX)
        f_ref = max(window)
        accepted = False
        step = t
        for _ in range(MAX_BACKTRACKS):
            cand = manifold.retract(spec, R - step * g)
            ev_c = evaluate(sdp, cand.R, params)
            if ev_c.value <= f_ref - ARMIJO * step * gnorm * gnorm:
                accepted = True
                break
            step *= BACKTRACK
        if not accepted:
            report.status = "linesearch_stalled"
            break
        prev_R, prev_g = R, g
        R = cand.R
        if cand.residual > 1e-8 * (1.0 + np.linalg.norm(R)):
            R = manifold.retract(spec, R).R
            ev_c = evaluate(sdp, R, params)
        ev = ev_c
        g = manifold.tangent_project(spec, R, ev.grad)
        gnorm = float(np.linalg.norm(g))
        report.iterations = it
        report.f_trace.append(ev.value)
        report.steps.append(step)
        window.append(ev.value)
        if len(window) > NONMONOTONE_WINDOW:
            window.pop(0)
        if gnorm <= grad_tol:
            report.status = "converged"
            break
    else:
        report.status = "max_iters"
    report.grad_norm = gnorm
    return manifold.ManifoldPoint(R, manifold.residual(spec, R)), report
