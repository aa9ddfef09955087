import itertools

import numpy as np
import pytest

from sdprelax import model
from sdprelax.errors import EmptyBinarySet, InvalidSparsity


def biq(n, seed=0, binary=None):
    rng = np.random.default_rng(seed)
    Q = rng.integers(-10, 10, size=(n, n)).astype(float)
    Q = 0.5 * (Q + Q.T)
    c = rng.integers(-5, 5, size=n).astype(float)
    return model.MbqpInstance(
        n, Q, c, np.zeros((0, n)), np.zeros(0), np.zeros((0, n)), np.zeros(0),
        binary=tuple(range(n)) if binary is None else binary, name=f"biq{n}",
    )


class TestValidate:
    def test_valid_biq_empty_report(self):
        assert model.validate(biq(3)) == []

    def test_duplicate_row_rank_deficient(self):
        inst = model.MbqpInstance(
            3, np.eye(3), np.zeros(3),
            np.array([[1.0, 0, 0], [1.0, 0, 0]]), np.array([1.0, 1.0]),
            np.zeros((0, 3)), np.zeros(0), binary=(0,),
        )
        rep = model.validate(inst)
        assert any("rank-deficient A" in r for r in rep)

    def test_negative_b(self):
        inst = model.MbqpInstance(
            2, np.eye(2), np.zeros(2), np.array([[1.0, 0]]), np.array([-1.0]),
            np.zeros((0, 2)), np.zeros(0),
        )
        rep = model.validate(inst)
        assert any("negative b" in r for r in rep)

    def test_duplicate_binary_index(self):
        inst = biq(2, binary=(0, 0))
        assert any("duplicate binary" in r for r in model.validate(inst))


class TestStrengthen:
    def test_biq_rows(self):
        inst = model.strengthen_binary(biq(3))
        assert inst.l == 3
        assert np.allclose(inst.G, np.eye(3))
        assert np.allclose(inst.d, np.ones(3))

    def test_no_dedup(self):
        once = model.strengthen_binary(biq(3))
        twice = model.strengthen_binary(once)
        assert twice.l == 6

    def test_empty_binary_raises(self):
        with pytest.raises(EmptyBinarySet):
            model.strengthen_binary(biq(3, binary=()))

    def test_bound_row_index(self):
        inst = model.strengthen_binary(biq(3))
        idx = model.bound_row_index(inst)
        assert idx == {0: 0, 1: 1, 2: 2}
        assert model.bound_row_index(biq(3)) is None


def _simplex_qp(n, seed=0):
    rng = np.random.default_rng(seed)
    F = rng.standard_normal((n, n))
    Q = F @ F.T
    return model.MbqpInstance(
        n, Q, np.zeros(n), np.ones((1, n)), np.array([1.0]),
        np.zeros((0, n)), np.zeros(0), binary=(), name="simplex",
    )


class TestL0Reformulate:
    def test_bigm_structure(self):
        inst = model.l0_reformulate(_simplex_qp(2), 1, mode="bigM")
        assert inst.n == 4
        assert inst.m == 2  # simplex row + cardinality row
        assert np.allclose(inst.A[-1], [0, 0, 1, 1])
        assert inst.b[-1] == 1.0
        # rows x <= u then u <= e
        assert inst.l == 4
        assert inst.binary == (2, 3)

    def test_complementarity_structure(self):
        inst = model.l0_reformulate(_simplex_qp(2), 1, mode="complementarity")
        assert inst.n == 4
        assert len(inst.quad_cons) == 1
        qc = inst.quad_cons[0]
        assert qc.sense == "eq"
        # cross block between x and v
        expected = np.zeros((4, 4))
        expected[0, 2] = expected[2, 0] = 0.5
        expected[1, 3] = expected[3, 1] = 0.5
        assert np.allclose(qc.A, expected)
        assert inst.b[-1] == 1.0  # e.T v = n - rho = 1

    def test_invalid_rho(self):
        with pytest.raises(InvalidSparsity):
            model.l0_reformulate(_simplex_qp(2), 0)
        with pytest.raises(InvalidSparsity):
            model.l0_reformulate(_simplex_qp(2), 3)

    @pytest.mark.parametrize("n,rho", [(2, 1), (2, 2), (3, 2), (4, 2), (5, 3)])
    def test_projection_supports_match(self, n, rho):
        # Enumerate binary u (bigM) and v (complementarity): the reachable
        # support sets of x must both equal {S : |S| <= rho}.
        want = {
            frozenset(S)
            for k in range(rho + 1)
            for S in itertools.combinations(range(n), k)
        }
        big = set()
        for bits in itertools.product([0, 1], repeat=n):
            if sum(bits) == rho:  # e.T u = rho
                sup = frozenset(i for i, b in enumerate(bits) if b)
                big.update(frozenset(t) for k in range(len(sup) + 1)
                           for t in itertools.combinations(sorted(sup), k))
        comp = set()
        for bits in itertools.product([0, 1], repeat=n):
            if sum(bits) == n - rho:  # e.T v = n - rho
                free = frozenset(i for i, b in enumerate(bits) if not b)
                comp.update(frozenset(t) for k in range(len(free) + 1)
                            for t in itertools.combinations(sorted(free), k))
        assert big == want
        assert comp == want

    def test_bigm_rho_full_projects_onto_box(self):
        # With rho = n the cardinality constraint is inactive: every support
        # reachable, i.e. the x-projection is the whole box.
        inst = model.l0_reformulate(_simplex_qp(2), 2, mode="bigM")
        assert inst.b[-1] == 2.0


class TestInstanceFile:
    @pytest.mark.parametrize("dense", [True, False])
    def test_round_trip_exact(self, tmp_path, dense):
        inst = _simplex_qp(4, seed=3)
        if not dense:
            inst = model.l0_reformulate(inst, 2, mode="complementarity")
        path = tmp_path / "inst.json"
        model.save_instance(inst, path)
        back = model.load_instance(path)
        assert back.n == inst.n
        assert np.array_equal(back.Q, inst.Q)
        assert np.array_equal(back.c, inst.c)
        assert np.array_equal(back.A, inst.A)
        assert np.array_equal(back.b, inst.b)
        assert np.array_equal(back.G, inst.G)
        assert np.array_equal(back.d, inst.d)
        assert back.binary == inst.binary
        assert len(back.quad_cons) == len(inst.quad_cons)
        for qa, qb in zip(back.quad_cons, inst.quad_cons):
            assert np.array_equal(qa.A, qb.A)
            assert np.array_equal(qa.b, qb.b)
            assert qa.c == qb.c and qa.sense == qb.sense

    def test_round_trip_awkward_floats(self, tmp_path):
        inst = _simplex_qp(3, seed=1)
        inst = model.MbqpInstance(
            3, inst.Q * (1.0 / 3.0), inst.c + 0.1, inst.A, inst.b,
            np.zeros((0, 3)), np.zeros(0),
        )
        path = tmp_path / "inst.json"
        model.save_instance(inst, path)
        back = model.load_instance(path)
        assert np.array_equal(back.Q, inst.Q)
        assert np.array_equal(back.c, inst.c)
