"""Compile an MbqpInstance into a structured SDP of the form

    min <C, Y>  s.t.  Y in F ∩ E ∩ I ∩ PSD,

where F is the equality block kept inside the low-rank manifold
(the linear rows Ax = b, their lifted rows AX = b x.T, the binary diagonal
ties, and the corner z = 1), E is a penalized equality bundle and I a
penalized inequality bundle.  Four builders are provided: the plain Shor
relaxation, the RLT-strengthened relaxation in the original dimension, the
slack-lifted doubly-nonnegative relaxation, and its complementarity variant.

Every bundle operator supports apply(Y) and an adjoint; constraints are kept
in structured block form (never materialized as giant row matrices).
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import InvalidInstance, NotStrengthened, ShapeMismatch
from .model import bound_row_index, validate
from .symmat import congruence, symmetrize

# ------------------------------------------------------------ kept equality block


@dataclass(frozen=True)
class KeptBlock:
    """Equality constraints enforced by the manifold, in structured form.

    dim:       size N of the variable part (matrix order is N + 1)
    A, b:      linear rows A x = b
    binary:    indices i with X_ii = x_i kept in the block
    lift_rows: whether the lifted rows A X = b x.T belong to the block
               (True for the RLT/DNN family, False for the Shor relaxation)
    """

    dim: int
    A: np.ndarray
    b: np.ndarray
    binary: tuple
    lift_rows: bool = True

    def __post_init__(self):
        object.__setattr__(self, "A", np.asarray(self.A, dtype=float).reshape(-1, self.dim))
        object.__setattr__(self, "b", np.asarray(self.b, dtype=float).reshape(-1))
        object.__setattr__(self, "binary", tuple(int(i) for i in self.binary))

    @property
    def m(self):
        return self.A.shape[0]

    @property
    def p(self):
        return len(self.binary)

    @property
    def size(self):
        base = self.m + self.p + 1
        return base + self.m * self.dim if self.lift_rows else base

    def apply(self, Y):
        """Full equality residual map: [A x; vec(A X - b x.T); diag ties; z]."""
        x = Y[1:, 0]
        X = Y[1:, 1:]
        parts = [self.A @ x if self.m else np.zeros(0)]
        if self.lift_rows and self.m:
            parts.append((self.A @ X - np.outer(self.b, x)).ravel())
        elif self.lift_rows:
            parts.append(np.zeros(0))
        bidx = np.asarray(self.binary, dtype=int)
        parts.append(X[bidx, bidx] - x[bidx] if self.p else np.zeros(0))
        parts.append(np.array([Y[0, 0]]))
        return np.concatenate(parts)

    def rhs(self):
        parts = [self.b]
        if self.lift_rows:
            parts.append(np.zeros(self.m * self.dim))
        parts.append(np.zeros(self.p))
        parts.append(np.array([1.0]))
        return np.concatenate(parts)

    def homog_P(self):
        """P = [b.T; -A.T]; Y P = 0 aggregates Ax = bz and AX = b x.T on PSD Y."""
        return np.vstack([self.b[None, :], -self.A.T])


# ------------------------------------------------------------ bundle operators


class EntryPick:
    """Coordinate picks Y[rows[k], cols[k]] of the symmetric variable."""

    def __init__(self, order, rows, cols, rhs=None, tag="entries"):
        self.order = order
        self.rows = np.asarray(rows, dtype=int)
        self.cols = np.asarray(cols, dtype=int)
        self.size = self.rows.size
        self.rhs = np.zeros(self.size) if rhs is None else np.asarray(rhs, dtype=float)
        self.tag = tag
        self._offdiag = self.rows != self.cols

    def apply(self, Y):
        return Y[self.rows, self.cols]

    def adjoint_add(self, w, out):
        half = np.where(self._offdiag, 0.5 * w, w)
        np.add.at(out, (self.rows, self.cols), half)
        off = self._offdiag
        np.add.at(out, (self.cols[off], self.rows[off]), half[off])


def nonneg_pattern(order):
    """Entrywise nonnegativity of Y, one constraint per lower-triangle entry."""
    i, j = np.tril_indices(order)
    return EntryPick(order, i, j, tag="nonneg")


class QuadConOp:
    """Dense pairings <M_k, Y> for lifted quadratic constraints."""

    def __init__(self, mats, rhs=None, tag="quad"):
        self.mats = [symmetrize(M) for M in mats]
        self.size = len(self.mats)
        self.order = self.mats[0].shape[0] if self.mats else 0
        self.rhs = np.zeros(self.size) if rhs is None else np.asarray(rhs, dtype=float)
        self.tag = tag

    def apply(self, Y):
        return np.array([float(np.sum(M * Y)) for M in self.mats])

    def adjoint_add(self, w, out):
        for wk, M in zip(w, self.mats):
            if wk != 0.0:
                out += wk * M


class RltIneq:
    """Lower triangle of G X G.T - G x d.T - d x.T G.T + z d d.T >= 0."""

    def __init__(self, G, d):
        self.G = np.asarray(G, dtype=float)
        self.d = np.asarray(d, dtype=float).reshape(-1)
        self.l = self.G.shape[0]
        self.size = self.l * (self.l + 1) // 2
        self.rhs = np.zeros(self.size)
        self.tag = "rlt"

    def matrix(self, Y):
        z = Y[0, 0]
        x = Y[1:, 0]
        X = Y[1:, 1:]
        Gx = self.G @ x
        M = self.G @ X @ self.G.T
        M -= np.outer(Gx, self.d)
        M -= np.outer(self.d, Gx)
        M += z * np.outer(self.d, self.d)
        return M

    def apply(self, Y):
        return kernels.pack_tril(self.matrix(Y))

    def adjoint_add(self, w, out):
        M = kernels.unpack_tril_half(w, self.l)
        Md = M @ self.d
        GtMd = self.G.T @ Md
        out[0, 0] += float(self.d @ Md)
        out[1:, 0] -= GtMd
        out[0, 1:] -= GtMd
        out[1:, 1:] += self.G.T @ M @ self.G


class MixedIneq:
    """All entries of d x.T - G X >= 0 (an l-by-n block)."""

    def __init__(self, G, d):
        self.G = np.asarray(G, dtype=float)
        self.d = np.asarray(d, dtype=float).reshape(-1)
        self.l, self.n = self.G.shape
        self.size = self.l * self.n
        self.rhs = np.zeros(self.size)
        self.tag = "mixed"

    def apply(self, Y):
        x = Y[1:, 0]
        X = Y[1:, 1:]
        return (np.outer(self.d, x) - self.G @ X).ravel()

    def adjoint_add(self, w, out):
        Lam = w.reshape(self.l, self.n)
        v = 0.5 * (Lam.T @ self.d)
        out[1:, 0] += v
        out[0, 1:] += v
        S = self.G.T @ Lam
        out[1:, 1:] -= 0.5 * (S + S.T)


class LinIneqRows:
    """Homogenized linear rows z d - G x >= 0 (redundant but printed)."""

    def __init__(self, G, d):
        self.G = np.asarray(G, dtype=float)
        self.d = np.asarray(d, dtype=float).reshape(-1)
        self.size = self.G.shape[0]
        self.rhs = np.zeros(self.size)
        self.tag = "linrows"

    def apply(self, Y):
        return Y[0, 0] * self.d - self.G @ Y[1:, 0]

    def adjoint_add(self, w, out):
        out[0, 0] += float(self.d @ w)
        v = 0.5 * (self.G.T @ w)
        out[1:, 0] -= v
        out[0, 1:] -= v


class Bundle:
    """Ordered list of operators acting on the matrix variable."""

    def __init__(self, ops=()):
        self.ops = tuple(ops)
        self.size = int(sum(op.size for op in self.ops))
        self.rhs = (
            np.concatenate([op.rhs for op in self.ops]) if self.ops else np.zeros(0)
        )

    def apply(self, Y):
        if not self.ops:
            return np.zeros(0)
        return np.concatenate([op.apply(Y) for op in self.ops])

    def adjoint_into(self, w, out):
        k = 0
        for op in self.ops:
            op.adjoint_add(w[k : k + op.size], out)
            k += op.size

    def adjoint_matrix(self, w, order):
        out = np.zeros((order, order))
        self.adjoint_into(w, out)
        return out


# ------------------------------------------------------------------ GeneralSdp


@dataclass(frozen=True)
class GeneralSdp:
    order: int
    C: np.ndarray
    kept: KeptBlock
    eq: Bundle
    ineq: Bundle
    kind: str
    name: str
    meta: dict

    def __post_init__(self):
        object.__setattr__(self, "C", symmetrize(np.asarray(self.C, dtype=float)))
        if self.C.shape != (self.order, self.order):
            raise ShapeMismatch("cost matrix order mismatch")

    def objective(self, Y):
        return float(np.sum(self.C * Y))


def _cost_matrix(Q, c):
    n = Q.shape[0]
    C = np.zeros((n + 1, n + 1))
    C[0, 1:] = c
    C[1:, 0] = c
    C[1:, 1:] = Q
    return symmetrize(C)


def _validated(inst):
    report = validate(inst)
    if report:
        raise InvalidInstance(report)
    return inst


def _lift_quadcon_matrix(qc, dim):
    M = np.zeros((dim + 1, dim + 1))
    M[0, 0] = qc.c
    nq = qc.b.shape[0]
    M[0, 1 : nq + 1] = 0.5 * qc.b
    M[1 : nq + 1, 0] = 0.5 * qc.b
    M[1 : nq + 1, 1 : nq + 1] = qc.A
    return M


def _split_quadcons(inst, dim):
    eq_mats, ineq_mats = [], []
    for qc in inst.quad_cons:
        M = _lift_quadcon_matrix(qc, dim)
        if qc.sense == "eq":
            eq_mats.append(M)
        else:
            ineq_mats.append(-M)  # <M,Y> <= 0 becomes <-M, Y> >= 0
    return eq_mats, ineq_mats


def build_shor(inst):
    """Plain lifted relaxation: kept rows Ax=b, diag ties and corner;
    penalized inequalities z d - G x >= 0 and x >= 0."""
    _validated(inst)
    n = inst.n
    order = n + 1
    kept = KeptBlock(n, inst.A, inst.b, inst.binary, lift_rows=False)
    eq_mats, ineq_mats = _split_quadcons(inst, n)
    eq_ops = [QuadConOp(eq_mats)] if eq_mats else []
    ineq_ops = []
    if inst.l:
        ineq_ops.append(LinIneqRows(inst.G, inst.d))
    ineq_ops.append(EntryPick(order, np.arange(1, order), np.zeros(n, dtype=int), tag="x>=0"))
    if ineq_mats:
        ineq_ops.append(QuadConOp(ineq_mats))
    meta = dict(n=n, m=inst.m, l=inst.l, p=inst.p, slacks=0)
    return GeneralSdp(order, _cost_matrix(inst.Q, inst.c), kept, Bundle(eq_ops),
                      Bundle(ineq_ops), "shor", inst.name, meta)


def build_sdp_rlt(inst, keep_redundant_rows=True):
    """RLT-strengthened relaxation in the original dimension n + 1.

    The homogenized rows z d - G x >= 0 are redundant once one variable is
    bounded; they are kept by default to match the printed constraint set,
    and can be dropped with keep_redundant_rows=False.
    """
    _validated(inst)
    n = inst.n
    order = n + 1
    kept = KeptBlock(n, inst.A, inst.b, inst.binary, lift_rows=True)
    eq_mats, ineq_mats = _split_quadcons(inst, n)
    eq_ops = [QuadConOp(eq_mats)] if eq_mats else []
    ineq_ops = []
    if inst.l:
        ineq_ops.append(RltIneq(inst.G, inst.d))
        ineq_ops.append(MixedIneq(inst.G, inst.d))
        if keep_redundant_rows:
            ineq_ops.append(LinIneqRows(inst.G, inst.d))
    ineq_ops.append(nonneg_pattern(order))
    if ineq_mats:
        ineq_ops.append(QuadConOp(ineq_mats))
    meta = dict(n=n, m=inst.m, l=inst.l, p=inst.p, slacks=0,
                redundant_rows=bool(inst.l and keep_redundant_rows))
    return GeneralSdp(order, _cost_matrix(inst.Q, inst.c), kept, Bundle(eq_ops),
                      Bundle(ineq_ops), "sdprlt", inst.name, meta)


def _slack_extend(inst):
    """Data of the slack-lifted problem over x' = [x; s]."""
    n, l, m = inst.n, inst.l, inst.m
    n2 = n + l
    Q2 = np.zeros((n2, n2))
    Q2[:n, :n] = inst.Q
    c2 = np.concatenate([inst.c, np.zeros(l)])
    A2 = np.zeros((m + l, n2))
    if m:
        A2[:m, :n] = inst.A
    A2[m:, :n] = inst.G
    A2[m:, n:] = np.eye(l)
    b2 = np.concatenate([inst.b, inst.d])
    return n2, Q2, c2, A2, b2


def build_dnn(inst):
    """Slack-lifted doubly nonnegative relaxation of order n + l + 1."""
    _validated(inst)
    n2, Q2, c2, A2, b2 = _slack_extend(inst)
    order = n2 + 1
    kept = KeptBlock(n2, A2, b2, inst.binary, lift_rows=True)
    eq_mats, ineq_mats = _split_quadcons(inst, n2)
    eq_ops = [QuadConOp(eq_mats)] if eq_mats else []
    ineq_ops = [nonneg_pattern(order)]
    if ineq_mats:
        ineq_ops.append(QuadConOp(ineq_mats))
    meta = dict(n=inst.n, m=inst.m, l=inst.l, p=inst.p, slacks=inst.l)
    return GeneralSdp(order, _cost_matrix(Q2, c2), kept, Bundle(eq_ops),
                      Bundle(ineq_ops), "dnn", inst.name, meta)


def build_comp(inst):
    """Complementarity variant of the slack-lifted relaxation.

    Requires the strengthened form (a row x_i <= 1 for every binary i); the
    binary diagonal ties are replaced by penalized entry zeros
    X'[i, n + j_i] = 0 between each binary variable and the slack of its
    bound row.  Only entrywise nonnegativity is penalized beyond that.
    """
    _validated(inst)
    if inst.p == 0:
        raise NotStrengthened("build_comp: no binary variables")
    rows = bound_row_index(inst)
    if rows is None:
        raise NotStrengthened(
            "build_comp: some binary variable has no x_i <= 1 row; apply "
            "strengthen_binary first"
        )
    n, l = inst.n, inst.l
    n2, Q2, c2, A2, b2 = _slack_extend(inst)
    order = n2 + 1
    kept = KeptBlock(n2, A2, b2, (), lift_rows=True)
    pick_r = np.array([i + 1 for i in inst.binary], dtype=int)
    pick_c = np.array([n + rows[i] + 1 for i in inst.binary], dtype=int)
    eq_mats, ineq_mats = _split_quadcons(inst, n2)
    eq_ops = [EntryPick(order, pick_r, pick_c, tag="comp-zeros")]
    if eq_mats:
        eq_ops.append(QuadConOp(eq_mats))
    ineq_ops = [nonneg_pattern(order)]
    if ineq_mats:
        ineq_ops.append(QuadConOp(ineq_mats))
    meta = dict(n=n, m=inst.m, l=l, p=inst.p, slacks=l)
    return GeneralSdp(order, _cost_matrix(Q2, c2), kept, Bundle(eq_ops),
                      Bundle(ineq_ops), "comp", inst.name, meta)


BUILDERS = {
    "shor": build_shor,
    "sdprlt": build_sdp_rlt,
    "dnn": build_dnn,
    "comp": build_comp,
}


# ------------------------------------------------------------------- phi map


def phi_matrix(G, d):
    """The congruence factor [1, 0; 0, I; d, -G] of the lifting map."""
    G = np.asarray(G, dtype=float)
    d = np.asarray(d, dtype=float).reshape(-1)
    l, n = G.shape
    T = np.zeros((n + l + 1, n + 1))
    T[0, 0] = 1.0
    T[1 : n + 1, 1:] = np.eye(n)
    T[n + 1 :, 0] = d
    T[n + 1 :, 1:] = -G
    return T


def phi_map(Y, G, d):
    """Lift an order-(n+1) matrix to order (n+l+1) by the slack congruence."""
    Y = np.asarray(Y, dtype=float)
    G = np.asarray(G, dtype=float)
    n = Y.shape[0] - 1
    if G.shape[1] != n:
        raise ShapeMismatch(f"phi_map: G has {G.shape[1]} columns, expected {n}")
    return congruence(Y, phi_matrix(G, d))


def phi_restrict(Yp, n):
    """Leading principal block of order n + 1; inverts phi_map on its range."""
    return np.asarray(Yp, dtype=float)[: n + 1, : n + 1].copy()


# -------------------------------------------------------------- count audit


@dataclass(frozen=True)
class CountAudit:
    kind: str
    order: int
    n_kept_eq: int
    n_pen_eq: int
    n_pen_ineq: int        # structural inequality rows, redundant rows excluded
    n_redundant: int
    n_nonneg: int
    expected_eq: int
    expected_ineq: int
    eq_ok: bool
    ineq_ok: bool


def audit_counts(sdp):
    """Count record checked against the closed-form constraint counts."""
    n = sdp.meta["n"]
    m = sdp.meta["m"]
    l = sdp.meta["l"]
    p = sdp.meta["p"]
    n_nonneg = 0
    n_red = 0
    n_struct = 0
    for op in sdp.ineq.ops:
        if op.tag == "nonneg":
            n_nonneg += op.size
        elif op.tag == "linrows":
            n_red += op.size
        else:
            n_struct += op.size
    kept = sdp.kept.size
    pen_eq = sdp.eq.size
    if sdp.kind == "shor":
        expected_eq = m + p + 1
        expected_ineq = l + n
    elif sdp.kind == "sdprlt":
        expected_eq = m * (n + 1) + p + 1
        expected_ineq = l * (2 * n + l + 1) // 2
    elif sdp.kind == "dnn":
        expected_eq = (m + l) * (n + l + 1) + p + 1
        expected_ineq = 0
    elif sdp.kind == "comp":
        expected_eq = (m + l) * (n + l + 1) + 1 + p
        expected_ineq = 0
    else:
        expected_eq = kept + pen_eq
        expected_ineq = n_struct
    if sdp.kind == "shor":
        got_ineq = n_struct + n_red  # the z d - G x rows are the printed rows here
    else:
        got_ineq = n_struct
    got_eq = kept + pen_eq
    # quadratic-constraint lifts are extras on top of the closed forms
    extra_eq = sum(op.size for op in sdp.eq.ops if getattr(op, "tag", "") == "quad")
    extra_ineq = sum(op.size for op in sdp.ineq.ops if getattr(op, "tag", "") == "quad")
    got_eq -= extra_eq
    got_ineq -= extra_ineq
    if sdp.kind == "comp":
        got_eq = kept + sum(op.size for op in sdp.eq.ops if op.tag == "comp-zeros")
    return CountAudit(
        kind=sdp.kind,
        order=sdp.order,
        n_kept_eq=kept,
        n_pen_eq=pen_eq,
        n_pen_ineq=n_struct,
        n_redundant=n_red,
        n_nonneg=n_nonneg,
        expected_eq=expected_eq,
        expected_ineq=expected_ineq,
        eq_ok=(got_eq == expected_eq),
        ineq_ok=(got_ineq == expected_ineq),
    )


# ----------------------------------------------------------------- text export


def export_text(sdp, path):
    """Sparse text export for external cross-checks.

    Line format (1-based indices, floats via repr):
        ORDER k
        COST nnz            followed by "i j v" lines, lower triangle
        EQ ncon             followed by "k i j v" triplets and "RHS k v" lines
        INEQ ncon           same layout; constraints read <M_k, Y> >= rhs_k
    Pairings count off-diagonal entries twice, matching <M, Y> on symmetric Y.
    """
    order = sdp.order
    lines = [f"ORDER {order}"]

    def mat_triplets(M):
        out = []
        for i in range(order):
            for j in range(i + 1):
                if M[i, j] != 0.0:
                    out.append((i + 1, j + 1, M[i, j]))
        return out

    cost = mat_triplets(sdp.C)
    lines.append(f"COST {len(cost)}")
    lines.extend(f"{i} {j} {v!r}" for i, j, v in cost)

    def emit(tagname, mats, rhs):
        lines.append(f"{tagname} {len(mats)}")
        for k, M in enumerate(mats):
            for i, j, v in mat_triplets(M):
                lines.append(f"{k + 1} {i} {j} {v!r}")
        for k, v in enumerate(rhs):
            if v != 0.0:
                lines.append(f"RHS {k + 1} {v!r}")

    eq_mats, eq_rhs = _materialize_kept(sdp)
    for op in sdp.eq.ops:
        for t in range(op.size):
            e = np.zeros(op.size)
            e[t] = 1.0
            M = np.zeros((order, order))
            op.adjoint_add(e, M)
            eq_mats.append(M)
        eq_rhs.extend(op.rhs.tolist())
    emit("EQ", eq_mats, eq_rhs)

    ineq_mats, ineq_rhs = [], []
    for op in sdp.ineq.ops:
        for t in range(op.size):
            e = np.zeros(op.size)
            e[t] = 1.0
            M = np.zeros((order, order))
            op.adjoint_add(e, M)
            ineq_mats.append(M)
        ineq_rhs.extend(op.rhs.tolist())
    emit("INEQ", ineq_mats, ineq_rhs)

    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _materialize_kept(sdp):
    kept = sdp.kept
    order = sdp.order
    mats, rhs = [], []
    n = kept.dim
    for j in range(kept.m):
        M = np.zeros((order, order))
        M[0, 1:] = 0.5 * kept.A[j]
        M[1:, 0] = 0.5 * kept.A[j]
        mats.append(M)
        rhs.append(float(kept.b[j]))
    if kept.lift_rows:
        for j in range(kept.m):
            for t in range(n):
                M = np.zeros((order, order))
                row = kept.A[j]
                M[1:, t + 1] += 0.5 * row
                M[t + 1, 1:] += 0.5 * row
                M[0, t + 1] -= 0.5 * kept.b[j]
                M[t + 1, 0] -= 0.5 * kept.b[j]
                mats.append(M)
                rhs.append(0.0)
    for i in kept.binary:
        M = np.zeros((order, order))
        M[i + 1, i + 1] = 1.0
        M[0, i + 1] = -0.5
        M[i + 1, 0] = -0.5
        mats.append(M)
        rhs.append(0.0)
    M = np.zeros((order, order))
    M[0, 0] = 1.0
    mats.append(M)
    rhs.append(1.0)
    return mats, rhs
