# SPDX-FileCopyrightText: 2022 VMware Inc
#
# SPDX-License-Identifier: MIT

import math

import pytest

from ctbn_ep.clustergraph import ClusterTopology
from ctbn_ep.evaluation import Comparison, compare, kl_divergence


class TestKlDivergence:
    def test_known_value(self):
        assert kl_divergence([0.5, 0.5], [0.25, 0.75]) == pytest.approx(
            0.14384, abs=1e-5
        )

    def test_chain_marginals(self):
        assert kl_divergence([0.738, 0.262], [0.703, 0.297]) == pytest.approx(
            0.003005, abs=5e-5
        )

    def test_identical(self):
        assert kl_divergence([0.2, 0.8], [0.2, 0.8]) == 0.0

    def test_zero_entries_of_p(self):
        assert kl_divergence([1.0, 0.0], [0.5, 0.5]) == pytest.approx(
            math.log(2)
        )

    def test_support_violation(self, caplog):
        assert kl_divergence([0.5, 0.5], [1.0, 0.0]) == math.inf
        assert "infinite" in caplog.text

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            kl_divergence([0.5, 0.5], [1 / 3, 1 / 3, 1 / 3])


class TestCompare:
    def test_chain(self, chain, chain_evidence):
        comparison = compare(chain, chain_evidence)

        assert len(comparison.times) == 60
        assert comparison.times[0] == 0.0
        assert comparison.times[-1] == 1.0
        assert comparison.converged
        assert comparison.divergences[0] == pytest.approx(0.0, abs=1e-9)
        assert all(math.isfinite(kl) for kl in comparison.divergences)
        assert 0 < comparison.average < 0.05

    def test_single_cluster_is_exact(self, chain, chain_evidence):
        topology = ClusterTopology.from_dict(
            chain, {"clusters": [["A", "B", "C", "D"]], "edges": []}
        )

        comparison = compare(
            chain, chain_evidence, points=5, topology=topology
        )

        assert max(comparison.divergences) < 1e-9

    def test_to_dict(self):
        comparison = Comparison([0.0, 1.0], [0.0, 0.2], True)

        assert comparison.to_dict() == {
            "points": [{"t": 0.0, "kl": 0.0}, {"t": 1.0, "kl": 0.2}],
            "average_kl": pytest.approx(0.1),
            "converged": True,
        }
