"""Independent verification oracles.

Brute-force enumeration of mixed-binary quadratic programs, Dykstra's
alternating projection onto intersections of convex sets, and central
finite-difference gradients.  These are deliberately slow, simple routes
used to cross-check the production solver and its projections.
"""

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import NoConvergence, NonFinite, TooLarge
from .symmat import psd_project


@dataclass(frozen=True)
class OracleResult:
    value: float
    argmin: np.ndarray
    count: int


def _upper_bounds_after_fixing(inst, fixed):
    """Per-variable box bounds for the continuous block once binaries are fixed.

    Understands only rows that touch a single continuous variable (after
    substituting the fixed binaries); anything else fails the guard.
    """
    n = inst.n
    cont = [i for i in range(n) if i not in set(inst.binary)]
    lo = np.zeros(len(cont))
    hi = np.full(len(cont), np.inf)
    pos = {i: k for k, i in enumerate(cont)}
    for j in range(inst.l):
        row = inst.G[j]
        support = np.nonzero(row)[0]
        cont_support = [i for i in support if i in pos]
        rhs = inst.d[j] - sum(row[i] * fixed[i] for i in support if i not in pos)
        if not cont_support:
            if rhs < -1e-9:
                return None, None, False  # infeasible binary choice
            continue
        if len(cont_support) > 1:
            raise TooLarge(
                "oracle: inequality couples several continuous variables"
            )
        i = cont_support[0]
        coef = row[i]
        if coef > 0:
            hi[pos[i]] = min(hi[pos[i]], rhs / coef)
        else:
            lo[pos[i]] = max(lo[pos[i]], rhs / coef)
    return lo, hi, True


def _box_simplex_project(z, lo, hi, a, tau):
    """Projection onto {lo <= x <= hi, a.x = tau} by bisection on the shift."""
    def clipped(theta):
        return np.clip(z - theta * a, lo, hi)

    f_lo, f_hi = -1.0, 1.0
    while a @ clipped(f_lo) < tau:
        f_lo *= 2.0
        if f_lo < -1e12:
            return None
    while a @ clipped(f_hi) > tau:
        f_hi *= 2.0
        if f_hi > 1e12:
            return None
    for _ in range(200):
        mid = 0.5 * (f_lo + f_hi)
        if a @ clipped(mid) > tau:
            f_lo = mid
        else:
            f_hi = mid
    return clipped(0.5 * (f_lo + f_hi))


def _continuous_qp(Q, g, lo, hi, a, tau, tol=1e-9, cap=20000):
    """min x.Q.x + 2 g.x over the box intersected with one equality a.x = tau.

    Projected gradient; requires Q positive semidefinite (guarded upstream).
    """
    nc = lo.shape[0]
    if nc == 0:
        return 0.0, np.zeros(0)
    if a is None:
        x = np.clip(np.zeros(nc), lo, hi)
        proj = lambda z: np.clip(z, lo, hi)
    else:
        x = _box_simplex_project(np.zeros(nc), lo, hi, a, tau)
        if x is None:
            return None, None
        proj = lambda z: _box_simplex_project(z, lo, hi, a, tau)
    lam = np.linalg.eigvalsh(Q)
    if lam[0] < -1e-9 * max(1.0, abs(lam[-1])):
        raise TooLarge("oracle: continuous block is not convex")
    L = 2.0 * max(lam[-1], 1e-12) + 1e-12
    step = 1.0 / L
    for _ in range(cap):
        grad = 2.0 * (Q @ x + g)
        xn = proj(x - step * grad)
        if xn is None:
            return None, None
        if np.linalg.norm(xn - x) <= tol * (1.0 + np.linalg.norm(x)):
            x = xn
            break
        x = xn
    return float(x @ Q @ x + 2.0 * g @ x), x


def brute_force_mbqp(inst, binary_cap=20):
    """Exact minimum by enumerating binary assignments.

    Pure-binary instances are enumerated directly.  Mixed instances are
    supported when the continuous block is box-bounded with at most one
    coupling equality and a convex quadratic (sStQP-style); otherwise
    TooLarge is raised.
    """
    p = inst.p
    if p > binary_cap:
        raise TooLarge(f"oracle: {p} binary variables exceeds cap {binary_cap}")
    n = inst.n
    bset = list(inst.binary)
    cont = [i for i in range(n) if i not in set(bset)]
    best = np.inf
    best_x = None
    count = 0
    pure_binary = not cont

    # split the single continuous-coupling equality row, if any
    cont_eq = None
    if cont:
        for j in range(inst.m):
            row = inst.A[j]
            if np.any(row[cont] != 0.0):
                if cont_eq is not None:
                    raise TooLarge("oracle: several equalities couple continuous variables")
                cont_eq = j

    for bits in itertools.product((0.0, 1.0), repeat=p):
        x = np.zeros(n)
        for i, v in zip(bset, bits):
            x[i] = v
        count += 1
        # equality rows among binaries only
        ok = True
        for j in range(inst.m):
            if cont and j == cont_eq:
                continue
            if abs(inst.A[j] @ x - inst.b[j]) > 1e-9:
                ok = False
                break
        if not ok:
            continue
        if pure_binary:
            if inst.l and np.any(inst.G @ x - inst.d > 1e-9):
                continue
            viol = False
            for qc in inst.quad_cons:
                val = x @ qc.A @ x + qc.b @ x + qc.c
                if qc.sense == "eq" and abs(val) > 1e-9:
                    viol = True
                    break
                if qc.sense == "le" and val > 1e-9:
                    viol = True
                    break
            if viol:
                continue
            val = inst.objective(x)
            if val < best:
                best, best_x = val, x.copy()
            continue
        # mixed: inner box QP over the continuous block
        if inst.quad_cons:
            raise TooLarge("oracle: quadratic constraints on mixed instances")
        lo, hi, feas = _upper_bounds_after_fixing(inst, x)
        if not feas:
            continue
        if np.any(lo > hi + 1e-12):
            continue
        Qcc = inst.Q[np.ix_(cont, cont)]
        Qcb = inst.Q[np.ix_(cont, bset)]
        xb = x[bset]
        g = Qcb @ xb + inst.c[cont]
        const = xb @ inst.Q[np.ix_(bset, bset)] @ xb + 2.0 * inst.c[bset] @ xb
        if cont_eq is not None:
            a = inst.A[cont_eq][cont]
            tau = inst.b[cont_eq] - inst.A[cont_eq][bset] @ xb
            val, xc = _continuous_qp(Qcc, g, lo, np.minimum(hi, 1e12), a, tau)
        else:
            val, xc = _continuous_qp(Qcc, g, lo, np.minimum(hi, 1e12), None, None)
        if val is None:
            continue
        total = val + const
        if total < best:
            best = total
            best_x = x.copy()
            best_x[cont] = xc
    if best_x is None:
        raise TooLarge("oracle: no feasible assignment found")
    return OracleResult(float(best), best_x, count)


def pct_gap(v_star, v):
    """Relative gap (v* - v) / v* in percent."""
    return (v_star - v) / v_star * 100.0


# ------------------------------------------------------------------ Dykstra


class PsdCone:
    def project(self, M):
        return psd_project(M)


class FixedEntries:
    """Affine set fixing selected (i, j) entries (and mirrors) to values."""

    def __init__(self, rows, cols, values):
        self.rows = np.asarray(rows, dtype=int)
        self.cols = np.asarray(cols, dtype=int)
        self.values = np.asarray(values, dtype=float)

    def project(self, M):
        out = M.copy()
        out[self.rows, self.cols] = self.values
        out[self.cols, self.rows] = self.values
        return out


class ZeroPairing:
    """Hyperplane <N N.T, Y> = 0."""

    def __init__(self, N):
        self.NNt = np.asarray(N, dtype=float) @ np.asarray(N, dtype=float).T
        self.nrm2 = float(np.sum(self.NNt * self.NNt))

    def project(self, M):
        if self.nrm2 == 0.0:
            return M.copy()
        return M - (np.sum(self.NNt * M) / self.nrm2) * self.NNt


class AffineByMatrices:
    """Affine set {<M_k, Y> = q_k}; projection via a cached pseudo-inverse."""

    def __init__(self, mats, rhs):
        self.mats = [np.asarray(M, dtype=float) for M in mats]
        self.rhs = np.asarray(rhs, dtype=float)
        order = self.mats[0].shape[0]
        Amat = np.stack([M.ravel() for M in self.mats])
        self._pinv = np.linalg.pinv(Amat, rcond=1e-12)
        self._Amat = Amat
        self.order = order

    def project(self, M):
        resid = self._Amat @ M.ravel() - self.rhs
        corr = (self._pinv @ resid).reshape(M.shape)
        out = M - corr
        return 0.5 * (out + out.T)


def dykstra_project(target, sets, tol=1e-10, cap=50_000):
    """Metric projection onto the intersection of convex sets.

    Boyle-Dykstra iteration with one correction per set; stops when the
    cumulative change of a full sweep falls below tol.
    """
    if not np.all(np.isfinite(target)):
        raise NonFinite("dykstra_project: target contains NaN or Inf")
    Y = np.asarray(target, dtype=float).copy()
    incs = [np.zeros_like(Y) for _ in sets]
    for sweep in range(cap):
        change = 0.0
        for k, s in enumerate(sets):
            prev = Y
            Z = prev + incs[k]
            Y = s.project(Z)
            incs[k] = Z - Y
            change += float(np.linalg.norm(Y - prev))
        if change <= tol:
            return Y
    raise NoConvergence(f"dykstra_project: no convergence in {cap} sweeps")


# --------------------------------------------------------- finite differences


def fd_gradient(f, R, h=1e-6):
    """Entrywise central-difference gradient of a scalar field over matrices."""
    R = np.asarray(R, dtype=float)
    out = np.zeros_like(R)
    it = np.nditer(R, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        Rp = R.copy()
        Rm = R.copy()
        Rp[idx] += h
        Rm[idx] -= h
        fp = f(Rp)
        fm = f(Rm)
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NonFinite("fd_gradient: non-finite function value")
        out[idx] = (fp - fm) / (2.0 * h)
        it.iternext()
    return out
