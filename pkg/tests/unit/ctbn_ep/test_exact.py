# SPDX-FileCopyrightText: 2022 VMware Inc
#
# SPDX-License-Identifier: MIT

import copy
import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.linalg import expm

from ctbn_ep.errors import (
    EvidenceError,
    ImpossibleEvidenceError,
    JointSizeError,
)
from ctbn_ep.exact import (
    ExactFilter,
    evidence_likelihood,
    exact_joint,
    exact_query,
    joint_intensity,
    trajectory_log_likelihood,
)
from ctbn_ep.formats import model_from_dict
from ctbn_ep.model import (
    EvidenceTimeline,
    IntervalObservation,
    PointObservation,
    Trajectory,
    Transition,
    TransitionObservation,
)
from tests.conftest import DRUG_PAIR, DRUG_PAIR_JOINT


class TestJointIntensity:
    def test_drug_pair(self, drug_pair):
        np.testing.assert_array_equal(
            joint_intensity(drug_pair).matrix, DRUG_PAIR_JOINT
        )

    def test_cap(self, drug_pair):
        with pytest.raises(JointSizeError):
            joint_intensity(drug_pair, cap=4)


class TestExactQuery:
    def test_initial_marginals(self, drug_pair):
        evidence = EvidenceTimeline((0.0, 1.0))

        result = exact_query(drug_pair, evidence, 0.0, ["A"])

        np.testing.assert_allclose(result.probs, [0.5, 0.5])

    def test_unconditioned_matches_expm(self, drug_pair):
        evidence = EvidenceTimeline((0.0, 1.0))

        result = exact_joint(drug_pair, evidence, 0.7)

        expected = np.full(6, 1 / 6) @ expm(DRUG_PAIR_JOINT * 0.7)
        np.testing.assert_allclose(result.probs, expected, atol=1e-12)

    def test_chain_filtering(self, chain, chain_evidence):
        result = exact_query(chain, chain_evidence, 1.0, ["A"])

        np.testing.assert_allclose(result.probs, [0.738, 0.262], atol=1e-3)

    def test_point_evidence(self, drug_pair):
        evidence = EvidenceTimeline(
            (0.0, 1.0), points=(PointObservation("B", "b2", 0.5),)
        )

        at_point = exact_query(drug_pair, evidence, 0.5, ["B"])

        np.testing.assert_allclose(at_point.probs, [0, 1, 0], atol=1e-12)

    def test_transition_evidence(self, drug_pair):
        evidence = EvidenceTimeline(
            (0.0, 1.0),
            transitions=(TransitionObservation("A", "a1", "a2", 0.5),),
        )

        before = exact_query(drug_pair, evidence, 0.25, ["A"])
        after = exact_query(drug_pair, evidence, 0.5, ["A"])

        assert before.probs[0] > 0
        np.testing.assert_allclose(after.probs, [0, 1], atol=1e-12)

    def test_horizon(self, drug_pair):
        engine = ExactFilter(drug_pair, EvidenceTimeline((0.0, 1.0)))

        with pytest.raises(ValueError):
            engine.distribution(1.5)

    def test_impossible(self, drug_pair):
        document = copy.deepcopy(DRUG_PAIR)
        document["initial"]["cpts"]["A"][""] = [1.0, 0.0]
        model = model_from_dict(document)
        evidence = EvidenceTimeline(
            (0.0, 1.0), points=(PointObservation("A", "a2", 0.0),)
        )

        with pytest.raises(ImpossibleEvidenceError):
            ExactFilter(model, evidence)


class TestEvidenceLikelihood:
    def test_no_evidence(self, drug_pair):
        assert evidence_likelihood(
            drug_pair, EvidenceTimeline((0.0, 1.0))
        ) == pytest.approx(0.0, abs=1e-12)

    def test_point(self, drug_pair):
        evidence = EvidenceTimeline(
            (0.0, 1.0), points=(PointObservation("B", "b1", 0.5),)
        )

        prior = np.full(6, 1 / 6) @ expm(DRUG_PAIR_JOINT * 0.5)
        expected = math.log(prior[0] + prior[1])
        assert evidence_likelihood(drug_pair, evidence) == pytest.approx(
            expected
        )

    def test_interval(self, drug_pair):
        evidence = EvidenceTimeline(
            (0.0, 1.0),
            intervals=(IntervalObservation("B", "b1", 0.0, 1.0),),
        )

        reduced = DRUG_PAIR_JOINT[:2, :2]
        survival = (np.array([0.5, 0.5]) @ expm(reduced)).sum()
        expected = math.log(survival / 3)
        assert evidence_likelihood(drug_pair, evidence) == pytest.approx(
            expected
        )

    def test_non_increasing(self, drug_pair):
        evidence = EvidenceTimeline(
            (0.0, 2.0),
            intervals=(IntervalObservation("B", "b1", 0.5, 1.5),),
        )
        engine = ExactFilter(drug_pair, evidence)

        values = [engine.log_likelihood(t) for t in np.linspace(0, 2, 21)]

        assert all(b <= a + 1e-12 for a, b in zip(values, values[1:]))


class TestExpectedStatistics:
    def test_reduced_segment(self, drug_pair):
        evidence = EvidenceTimeline(
            (0.0, 1.0),
            intervals=(IntervalObservation("B", "b1", 0.0, 1.0),),
        )
        engine = ExactFilter(drug_pair, evidence)

        stats = engine.expected_statistics(0, ["A"])

        np.testing.assert_allclose(
            stats.expected_time, [0.61, 0.39], atol=0.02
        )
        assert stats.normalizer == pytest.approx(5.81, abs=0.05)


class TestTrajectoryLogLikelihood:
    def test_hand_computed(self, drug_pair):
        trajectory = Trajectory(
            0.0, 1.0, {"A": "a1", "B": "b1"}, (Transition(0.4, "A", "a2"),)
        )

        expected = math.log(1 / 6) - 0.4 - 1.2 - 2.0 - 4.2
        assert trajectory_log_likelihood(
            drug_pair, trajectory
        ) == pytest.approx(expected)

    def test_rate_factors(self, drug_pair):
        trajectory = Trajectory(
            0.0,
            1.0,
            {"A": "a1", "B": "b1"},
            (Transition(0.4, "A", "a2"), Transition(0.7, "B", "b3")),
        )

        expected = (
            math.log(1 / 6)
            - (0.4 + 2 * 0.6)
            - (5 * 0.4 + 7 * 0.3 + 9 * 0.3)
            + math.log(1)
            + math.log(4)
        )
        assert trajectory_log_likelihood(
            drug_pair, trajectory
        ) == pytest.approx(expected)

    def test_zero_rate(self):
        document = copy.deepcopy(DRUG_PAIR)
        document["cims"]["A"][""] = [[0, 0], [2, -2]]
        model = model_from_dict(document)
        trajectory = Trajectory(
            0.0, 1.0, {"A": "a1", "B": "b1"}, (Transition(0.4, "A", "a2"),)
        )

        assert trajectory_log_likelihood(model, trajectory) == -math.inf

    def test_malformed(self, drug_pair):
        trajectory = Trajectory(0.0, 1.0, {"A": "a1"})

        with pytest.raises(EvidenceError):
            trajectory_log_likelihood(drug_pair, trajectory)

    def test_density_integrates_to_one(self):
        rates = np.array([[-0.8, 0.8], [0.5, -0.5]])
        model = model_from_dict(
            {
                "variables": [{"name": "X", "states": ["x1", "x2"]}],
                "edges": [],
                "cims": {"X": {"": rates.tolist()}},
                "initial": {"edges": [], "cpts": {"X": {"": [0.4, 0.6]}}},
            }
        )
        other = {"x1": "x2", "x2": "x1"}

        def density(start, times=()):
            transitions, state = [], start
            for time in times:
                state = other[state]
                transitions.append(Transition(time, "X", state))
            trajectory = Trajectory(
                0.0, 2.0, {"X": start}, tuple(transitions)
            )
            return math.exp(trajectory_log_likelihood(model, trajectory))

        total = 0.0
        for start in ("x1", "x2"):
            total += density(start)
            total += quad(
                lambda t, first=start: density(first, (t,)), 0.0, 2.0
            )[0]

        # counting chain over (state, transitions so far capped at two)
        counting = np.zeros((6, 6))
        for count in range(3):
            base = 2 * count
            after = 2 * min(count + 1, 2)
            for x in range(2):
                counting[base + x, after + 1 - x] += -rates[x, x]
                counting[base + x, base + x] += rates[x, x]
        p0 = np.array([0.4, 0.6, 0, 0, 0, 0])
        total += (p0 @ expm(counting * 2.0))[4:].sum()

        assert total == pytest.approx(1.0, abs=1e-3)
