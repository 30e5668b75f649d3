# SPDX-FileCopyrightText: 2022 VMware Inc
#
# SPDX-License-Identifier: MIT

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctbn_ep.algebra import (
    IntensityFactor,
    PointDistribution,
    amalgamate,
    augment_absorbing,
    cim_factor,
    divide,
    embed,
    matrix_exponential,
    merge_scopes,
    propagate,
    reduce,
)
from ctbn_ep.errors import (
    ImpossibleEvidenceError,
    IncompatibleEvidenceError,
    ScopeError,
)
from ctbn_ep.model import Variable
from tests.conftest import DRUG_PAIR_JOINT

A = Variable("A", ("a1", "a2"))
B = Variable("B", ("b1", "b2", "b3"))


def random_intensity(seed: int, size: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    matrix = rng.uniform(0.0, 4.0, (size, size))
    np.fill_diagonal(matrix, 0.0)
    np.fill_diagonal(matrix, -matrix.sum(axis=1))
    return matrix


class TestAmalgamate:
    def test_drug_pair_joint(self, drug_pair):
        joint = amalgamate(
            cim_factor(drug_pair, "A"), cim_factor(drug_pair, "B")
        )

        assert joint.names == ("A", "B")
        np.testing.assert_array_equal(joint.matrix, DRUG_PAIR_JOINT)

    def test_commutative(self, drug_pair):
        first = cim_factor(drug_pair, "A")
        second = cim_factor(drug_pair, "B")

        np.testing.assert_array_equal(
            amalgamate(first, second).matrix,
            amalgamate(second, first).matrix,
        )

    def test_embedded_conditional(self, drug_pair):
        embedded = embed(cim_factor(drug_pair, "B"), (A, B))

        np.testing.assert_array_equal(
            embedded.matrix,
            [
                [-5, 0, 2, 0, 3, 0],
                [0, -7, 0, 3, 0, 4],
                [2, 0, -6, 0, 4, 0],
                [0, 3, 0, -8, 0, 5],
                [2, 0, 5, 0, -7, 0],
                [0, 3, 0, 6, 0, -9],
            ],
        )

    def test_embed_repeats_unary_factor(self, drug_pair):
        embedded = embed(cim_factor(drug_pair, "A"), (A, B))

        assert embedded.matrix[0, 1] == 1
        assert embedded.matrix[2, 3] == 1
        assert embedded.matrix[0, 3] == 0
        np.testing.assert_allclose(embedded.row_sums(), 0.0)

    def test_embed_missing_variable(self, drug_pair):
        with pytest.raises(ScopeError):
            embed(cim_factor(drug_pair, "B"), (B,))

    def test_incompatible_evidence(self, drug_pair):
        first = reduce(cim_factor(drug_pair, "B"), {"B": "b1"})
        second = reduce(cim_factor(drug_pair, "B"), {"B": "b2"})

        with pytest.raises(IncompatibleEvidenceError):
            amalgamate(first, second)

    def test_merge_scopes(self):
        C = Variable("C", ("c1", "c2"))

        assert merge_scopes((A, B), (B, C)) == (A, B, C)
        assert merge_scopes((A, C), (B, C)) == (A, B, C)


class TestDivide:
    def test_divide_inverts_amalgamate(self, drug_pair):
        first = cim_factor(drug_pair, "A")
        second = cim_factor(drug_pair, "B")

        result = divide(amalgamate(first, second), first)

        np.testing.assert_allclose(
            result.matrix, embed(second, (A, B)).matrix
        )

    def test_scope_error(self, drug_pair):
        with pytest.raises(ScopeError):
            divide(cim_factor(drug_pair, "A"), cim_factor(drug_pair, "B"))


class TestReduce:
    def test_reduced_pair(self, drug_pair):
        joint = amalgamate(
            cim_factor(drug_pair, "A"), cim_factor(drug_pair, "B")
        )

        reduced = reduce(joint, {"B": "b1"})

        assert reduced.retained.tolist() == [0, 1]
        np.testing.assert_array_equal(reduced.matrix, [[-6, 1], [2, -9]])
        assert reduced.is_reduced
        assert reduced.is_valid()

    def test_order_independent(self, drug_pair):
        joint = amalgamate(
            cim_factor(drug_pair, "A"), cim_factor(drug_pair, "B")
        )

        first = reduce(reduce(joint, {"A": "a1"}), {"B": "b2"})
        second = reduce(reduce(joint, {"B": "b2"}), {"A": "a1"})

        np.testing.assert_array_equal(first.matrix, second.matrix)
        np.testing.assert_array_equal(first.retained, second.retained)

    def test_empty_evidence(self, drug_pair):
        factor = cim_factor(drug_pair, "A")

        assert reduce(factor, {}) is factor

    def test_impossible(self, drug_pair):
        factor = reduce(cim_factor(drug_pair, "A"), {"A": "a1"})

        with pytest.raises(ImpossibleEvidenceError):
            reduce(factor, {"A": "a2"})

    def test_evidence_outside_scope(self, drug_pair):
        with pytest.raises(ScopeError):
            reduce(cim_factor(drug_pair, "A"), {"B": "b1"})


class TestMatrixExponential:
    def test_two_state(self):
        factor = IntensityFactor.full((A,), [[-1, 1], [1, -1]])

        result = matrix_exponential(factor, 1.0)

        assert result[0, 0] == pytest.approx(0.567668, abs=1e-6)
        np.testing.assert_allclose(result.sum(axis=1), 1.0)

    def test_zero_time(self):
        factor = IntensityFactor.full((B,), random_intensity(1, 3))

        np.testing.assert_allclose(matrix_exponential(factor, 0.0), np.eye(3))

    def test_negative_time(self):
        factor = IntensityFactor.full((A,), [[-1, 1], [1, -1]])

        with pytest.raises(ValueError):
            matrix_exponential(factor, -1.0)

    @settings(max_examples=100, deadline=None)
    @given(
        seed=st.integers(0, 2**32 - 1),
        size=st.integers(2, 6),
        s=st.floats(0.0, 2.0),
        t=st.floats(0.0, 2.0),
    )
    def test_chapman_kolmogorov(self, seed, size, s, t):
        scope = (Variable("X", tuple(f"x{i}" for i in range(size))),)
        factor = IntensityFactor.full(scope, random_intensity(seed, size))

        combined = matrix_exponential(factor, s + t)
        product = matrix_exponential(factor, s) @ matrix_exponential(
            factor, t
        )

        np.testing.assert_allclose(combined, product, atol=1e-9)
        np.testing.assert_allclose(combined.sum(axis=1), 1.0, atol=1e-9)
        assert np.all(combined >= -1e-12)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_lie_product_decays_quadratically(self, seed):
        scope = (Variable("X", ("x0", "x1", "x2")),)
        first = IntensityFactor.full(scope, random_intensity(seed, 3))
        second = IntensityFactor.full(scope, random_intensity(seed + 50, 3))
        summed = IntensityFactor.full(scope, first.matrix + second.matrix)
        commutator = (
            first.matrix @ second.matrix - second.matrix @ first.matrix
        )

        errors = []
        for t in (1e-2, 1e-3, 1e-4):
            split = matrix_exponential(first, t) @ matrix_exponential(
                second, t
            )
            gap = split - matrix_exponential(summed, t)
            errors.append(np.max(np.abs(gap).sum(axis=1)))
            assert errors[-1] <= np.max(np.abs(commutator)) * 3 * t**2

        assert 70 < errors[0] / errors[1] < 130
        assert 70 < errors[1] / errors[2] < 130

    def test_lie_product_of_drug_pair(self, drug_pair):
        first = embed(cim_factor(drug_pair, "A"), (A, B))
        second = embed(cim_factor(drug_pair, "B"), (A, B))
        joint = amalgamate(
            cim_factor(drug_pair, "A"), cim_factor(drug_pair, "B")
        )

        errors = [
            np.max(
                np.abs(
                    matrix_exponential(first, t)
                    @ matrix_exponential(second, t)
                    - matrix_exponential(joint, t)
                )
            )
            for t in (1e-3, 1e-4)
        ]

        np.testing.assert_allclose(
            first.matrix + second.matrix, joint.matrix
        )
        assert 70 < errors[0] / errors[1] < 130

    def test_embedding_preserves_dynamics(self):
        factor = IntensityFactor.full((A,), [[-1, 1], [2, -2]])
        transition = matrix_exponential(factor, 0.7)

        slow = matrix_exponential(embed(factor, (A, B)), 0.7)
        fast = matrix_exponential(embed(factor, (B, A)), 0.7)

        np.testing.assert_allclose(
            slow, np.kron(np.eye(3), transition), atol=1e-12
        )
        np.testing.assert_allclose(
            fast, np.kron(transition, np.eye(3)), atol=1e-12
        )


class TestPropagate:
    def test_reduced_mass_decreases(self, drug_pair):
        joint = amalgamate(
            cim_factor(drug_pair, "A"), cim_factor(drug_pair, "B")
        )
        reduced = reduce(joint, {"B": "b1"})
        p0 = PointDistribution(
            reduced.scope, reduced.retained, np.array([0.5, 0.5])
        )

        result = propagate(p0, reduced, 1.0)

        eigenvalues, vectors = np.linalg.eig(reduced.matrix)
        series = (
            vectors @ np.diag(np.exp(eigenvalues)) @ np.linalg.inv(vectors)
        ).real
        assert result.mass == pytest.approx((p0.probs @ series).sum())
        assert 0 < result.mass < 1

    def test_unreduced_keeps_mass(self, drug_pair):
        factor = cim_factor(drug_pair, "A")

        result = propagate(PointDistribution.uniform((A,)), factor, 3.0)

        assert result.mass == pytest.approx(1.0)
        np.testing.assert_allclose(result.probs, [2 / 3, 1 / 3], atol=1e-3)

    def test_mismatch(self, drug_pair):
        factor = cim_factor(drug_pair, "A")

        with pytest.raises(ValueError):
            propagate(PointDistribution.uniform((B,)), factor, 1.0)


class TestPointDistribution:
    def test_marginalize_and_labels(self):
        joint = PointDistribution.full((A, B), [0.1, 0.2, 0.3, 0.1, 0.2, 0.1])

        marginal = joint.marginalize(["B"])

        np.testing.assert_allclose(marginal.probs, [0.3, 0.4, 0.3])
        assert list(marginal.as_dict()) == ["B=b1", "B=b2", "B=b3"]

    def test_relabel(self):
        joint = PointDistribution.full((A, B), [0.1, 0.2, 0.3, 0.1, 0.2, 0.1])

        moved = joint.relabel("A", "a1", "a2")

        np.testing.assert_allclose(moved.probs, [0, 0.1, 0, 0.3, 0, 0.2])

    def test_condition_and_normalize(self):
        joint = PointDistribution.full((A, B), [0.1, 0.2, 0.3, 0.1, 0.2, 0.1])

        conditioned = joint.condition({"A": "a1"}).normalized()

        np.testing.assert_allclose(
            conditioned.probs, [1 / 6, 0, 0.5, 0, 1 / 3, 0]
        )

    def test_zero_mass(self):
        empty = PointDistribution.full((A,), [0.0, 0.0])

        with pytest.raises(ImpossibleEvidenceError):
            empty.normalized()


class TestAugmentAbsorbing:
    def test_exit_column(self):
        factor = IntensityFactor(
            (A, B), np.array([0, 1]), np.array([[-6.0, 1.0], [2.0, -9.0]])
        )

        augmented = augment_absorbing(factor)

        np.testing.assert_allclose(augmented.matrix[:, 2], [5, 7, 0])
        np.testing.assert_allclose(augmented.row_sums(), 0.0)
        assert augmented.absorbing
