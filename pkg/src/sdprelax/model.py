"""Problem data for mixed-binary quadratic programs.

The canonical instance is

    min  x.T Q x + 2 c.T x
    s.t. A x = b,  G x <= d,  x >= 0,  x_i in {0,1} for i in `binary`,

optionally extended by lifted quadratic constraints
<A_i, X> + b_i.T x + c_i (= or <=) 0 on the product matrix X.

Indices are 0-based everywhere in memory and in the instance file.
"""

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import EmptyBinarySet, InvalidSparsity, ShapeMismatch
from .symmat import symmetrize


@dataclass(frozen=True)
class LiftedQuadCon:
    """One lifted quadratic constraint <A, X> + b.T x + c (sense) 0."""

    A: np.ndarray
    b: np.ndarray
    c: float
    sense: str  # "eq" or "le"

    def __post_init__(self):
        object.__setattr__(self, "A", symmetrize(np.asarray(self.A, dtype=float)))
        object.__setattr__(self, "b", np.asarray(self.b, dtype=float).reshape(-1))
        object.__setattr__(self, "c", float(self.c))
        if self.sense not in ("eq", "le"):
            raise ValueError(f"sense must be 'eq' or 'le', got {self.sense!r}")
        if self.A.shape[0] != self.b.shape[0]:
            raise ShapeMismatch("LiftedQuadCon: A and b sizes differ")


def _as_matrix(M, rows, cols, who):
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return np.zeros((rows if rows is not None else 0, cols))
    if M.ndim != 2:
        raise ShapeMismatch(f"{who}: expected a 2-d array")
    return M


@dataclass(frozen=True)
class MbqpInstance:
    n: int
    Q: np.ndarray
    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    G: np.ndarray
    d: np.ndarray
    binary: tuple = ()
    quad_cons: tuple = ()
    name: str = "instance"

    def __post_init__(self):
        n = int(self.n)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "Q", symmetrize(_as_matrix(self.Q, n, n, "Q")))
        object.__setattr__(self, "c", np.asarray(self.c, dtype=float).reshape(-1))
        object.__setattr__(self, "A", _as_matrix(self.A, None, n, "A"))
        object.__setattr__(self, "b", np.asarray(self.b, dtype=float).reshape(-1))
        object.__setattr__(self, "G", _as_matrix(self.G, None, n, "G"))
        object.__setattr__(self, "d", np.asarray(self.d, dtype=float).reshape(-1))
        object.__setattr__(self, "binary", tuple(int(i) for i in self.binary))
        object.__setattr__(self, "quad_cons", tuple(self.quad_cons))
        if self.Q.shape != (n, n):
            raise ShapeMismatch(f"Q must be {n}x{n}, got {self.Q.shape}")
        if self.c.shape != (n,):
            raise ShapeMismatch(f"c must have length {n}")
        if self.A.shape[1] != n or self.G.shape[1] != n:
            raise ShapeMismatch("A/G column count must equal n")
        if self.A.shape[0] != self.b.shape[0]:
            raise ShapeMismatch("A and b row counts differ")
        if self.G.shape[0] != self.d.shape[0]:
            raise ShapeMismatch("G and d row counts differ")
        for qc in self.quad_cons:
            if qc.A.shape != (n, n):
                raise ShapeMismatch("quad_cons matrices must be n x n")

    @property
    def m(self):
        return self.A.shape[0]

    @property
    def l(self):
        return self.G.shape[0]

    @property
    def p(self):
        return len(self.binary)

    def objective(self, x):
        x = np.asarray(x, dtype=float)
        return float(x @ self.Q @ x + 2.0 * self.c @ x)


def validate(inst):
    """Report-only check of the instance invariants; empty list means valid."""
    report = []
    m = inst.m
    if m > 0:
        s = np.linalg.svd(inst.A, compute_uv=False)
        rank = int(np.sum(s > 1e-10 * s[0])) if s.size else 0
        if rank < m:
            report.append(f"rank-deficient A: numerical rank {rank} < {m} rows")
    if np.any(inst.b < -1e-12):
        report.append(f"negative b: min entry {inst.b.min()!r}")
    seen = set()
    for i in inst.binary:
        if i < 0 or i >= inst.n:
            report.append(f"binary index {i} outside [0, {inst.n})")
        if i in seen:
            report.append(f"duplicate binary index {i}")
        seen.add(i)
    for k, qc in enumerate(inst.quad_cons):
        if not np.any(qc.A):
            report.append(f"quad_cons[{k}] has zero quadratic part")
    if not np.all(np.isfinite(inst.Q)) or not np.all(np.isfinite(inst.c)):
        report.append("non-finite objective data")
    for name in ("A", "b", "G", "d"):
        if not np.all(np.isfinite(getattr(inst, name))):
            report.append(f"non-finite entries in {name}")
    return report


def strengthen_binary(inst):
    """Append the redundant bound row x_i <= 1 for every binary index.

    Rows are appended unconditionally, mirroring the unconditional redundancy
    of the reformulation; no deduplication is attempted.
    """
    if inst.p == 0:
        raise EmptyBinarySet("strengthen_binary: instance has no binary variables")
    rows = np.zeros((inst.p, inst.n))
    for k, i in enumerate(inst.binary):
        rows[k, i] = 1.0
    G = np.vstack([inst.G, rows]) if inst.l else rows
    d = np.concatenate([inst.d, np.ones(inst.p)])
    return replace(inst, G=G, d=d, name=inst.name + "+bounds")


def bound_row_index(inst):
    """Map binary index -> row of (G, d) that is exactly x_i <= 1.

    Returns None when some binary variable has no such row.
    """
    idx = {}
    for i in inst.binary:
        want = np.zeros(inst.n)
        want[i] = 1.0
        found = None
        for j in range(inst.l):
            if inst.d[j] == 1.0 and np.array_equal(inst.G[j], want):
                found = j
                break
        if found is None:
            return None
        idx[i] = found
    return idx


def l0_reformulate(inst, rho, mode="bigM"):
    """Rewrite a cardinality bound ||x||_0 <= rho over x in [0, e].

    bigM:            variables (x, u); u <= e, x <= u, e.T u = rho, u binary.
    complementarity: variables (x, v); x <= e, v <= e, e.T v = n - rho,
                     x.T v = 0 as a lifted quadratic equality, v binary.
    """
    n = inst.n
    rho = int(rho)
    if rho <= 0 or rho > n:
        raise InvalidSparsity(f"rho must lie in (0, {n}], got {rho}")
    if mode not in ("bigM", "complementarity"):
        raise ValueError(f"unknown mode {mode!r}")
    n2 = 2 * n
    Q2 = np.zeros((n2, n2))
    Q2[:n, :n] = inst.Q
    c2 = np.concatenate([inst.c, np.zeros(n)])
    A_pad = np.hstack([inst.A, np.zeros((inst.m, n))]) if inst.m else np.zeros((0, n2))
    G_pad = np.hstack([inst.G, np.zeros((inst.l, n))]) if inst.l else np.zeros((0, n2))
    eye = np.eye(n)
    zero = np.zeros((n, n))

    if mode == "bigM":
        new_eq = np.concatenate([np.zeros(n), np.ones(n)])[None, :]  # e.T u = rho
        A2 = np.vstack([A_pad, new_eq])
        b2 = np.concatenate([inst.b, [float(rho)]])
        G2 = np.vstack([G_pad, np.hstack([eye, -eye]), np.hstack([zero, eye])])
        d2 = np.concatenate([inst.d, np.zeros(n), np.ones(n)])
        quad = inst.quad_cons
        lifted = [_pad_quadcon(qc, n2) for qc in quad]
        binary = tuple(inst.binary) + tuple(range(n, n2))
        return MbqpInstance(
            n2, Q2, c2, A2, b2, G2, d2, binary, tuple(lifted), inst.name + "+l0bigM"
        )

    # complementarity: auxiliary v = e - u
    new_eq = np.concatenate([np.zeros(n), np.ones(n)])[None, :]  # e.T v = n - rho
    A2 = np.vstack([A_pad, new_eq])
    b2 = np.concatenate([inst.b, [float(n - rho)]])
    G2 = np.vstack([G_pad, np.hstack([eye, zero]), np.hstack([zero, eye])])
    d2 = np.concatenate([inst.d, np.ones(n), np.ones(n)])
    cross = np.zeros((n2, n2))
    cross[:n, n:] = 0.5 * eye
    cross[n:, :n] = 0.5 * eye
    comp = LiftedQuadCon(cross, np.zeros(n2), 0.0, "eq")  # x.T v = 0
    lifted = [_pad_quadcon(qc, n2) for qc in inst.quad_cons] + [comp]
    binary = tuple(inst.binary) + tuple(range(n, n2))
    return MbqpInstance(
        n2, Q2, c2, A2, b2, G2, d2, binary, tuple(lifted), inst.name + "+l0comp"
    )


def _pad_quadcon(qc, n2):
    n = qc.A.shape[0]
    A = np.zeros((n2, n2))
    A[:n, :n] = qc.A
    b = np.zeros(n2)
    b[:n] = qc.b
    return LiftedQuadCon(A, b, qc.c, qc.sense)


# ------------------------------------------------------------- instance file

_FORMAT = "mbqp-instance"


def _matrix_to_json(M):
    M = np.asarray(M, dtype=float)
    nnz = int(np.count_nonzero(M))
    if M.size > 0 and nnz < 0.25 * M.size:
        i, j = np.nonzero(M)
        return {
            "shape": list(M.shape),
            "coo": [[int(a), int(b), M[a, b]] for a, b in zip(i, j)],
        }
    return {"dense": M.tolist(), "shape": list(M.shape)}


def _matrix_from_json(obj):
    shape = tuple(obj["shape"])
    if "dense" in obj:
        out = np.array(obj["dense"], dtype=float).reshape(shape)
    else:
        out = np.zeros(shape)
        for a, b, v in obj["coo"]:
            out[int(a), int(b)] = v
    return out


def to_document(inst):
    return {
        "format": _FORMAT,
        "version": 1,
        "name": inst.name,
        "n": inst.n,
        "Q": _matrix_to_json(inst.Q),
        "c": inst.c.tolist(),
        "A": _matrix_to_json(inst.A),
        "b": inst.b.tolist(),
        "G": _matrix_to_json(inst.G),
        "d": inst.d.tolist(),
        "binary": list(inst.binary),
        "quad_cons": [
            {
                "A": _matrix_to_json(qc.A),
                "b": qc.b.tolist(),
                "c": qc.c,
                "sense": qc.sense,
            }
            for qc in inst.quad_cons
        ],
    }


def from_document(doc):
    if doc.get("format") != _FORMAT:
        raise ValueError(f"not a {_FORMAT} document")
    quad = tuple(
        LiftedQuadCon(_matrix_from_json(q["A"]), np.array(q["b"]), q["c"], q["sense"])
        for q in doc.get("quad_cons", [])
    )
    return MbqpInstance(
        n=doc["n"],
        Q=_matrix_from_json(doc["Q"]),
        c=np.array(doc["c"], dtype=float),
        A=_matrix_from_json(doc["A"]),
        b=np.array(doc["b"], dtype=float),
        G=_matrix_from_json(doc["G"]),
        d=np.array(doc["d"], dtype=float),
        binary=tuple(doc.get("binary", [])),
        quad_cons=quad,
        name=doc.get("name", "instance"),
    )


def save_instance(inst, path):
    with open(path, "w") as fh:
        json.dump(to_document(inst), fh, indent=1)
        fh.write("\n")


def load_instance(path):
    with open(path) as fh:
        return from_document(json.load(fh))
