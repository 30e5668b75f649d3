# SPDX-FileCopyrightText: 2022 VMware Inc
#
# SPDX-License-Identifier: MIT

"""
Accuracy of EP against the exact engine: KL divergence of the full joint at
evenly spaced probe times.
"""

import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, List, Optional

import numpy as np
from scipy.special import rel_entr

from ctbn_ep.clustergraph import ClusterTopology
from ctbn_ep.ep import FilterResult, run_filter
from ctbn_ep.exact import ExactFilter
from ctbn_ep.formats import probe_times
from ctbn_ep.model import CtbnModel, EvidenceTimeline, Segment


def kl_divergence(p, q) -> float:
    """
    KL(p || q) in nats. Zero entries of ``p`` contribute nothing; mass of
    ``p`` where ``q`` is zero makes the divergence infinite.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError(f"shape mismatch {p.shape} vs {q.shape}")

    if violated := np.flatnonzero((p > 0) & (q <= 0)).tolist():
        logging.warning(
            f"KL divergence is infinite: q vanishes where p > 0 at {violated}"
        )
        return math.inf

    return max(float(np.sum(rel_entr(p, q))), 0.0)


@dataclass(frozen=True)
class Comparison:
    times: List[float]
    divergences: List[float]
    converged: bool

    @property
    def average(self) -> float:
        return float(np.mean(self.divergences))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "points": [
                {"t": t, "kl": kl}
                for t, kl in zip(self.times, self.divergences)
            ],
            "average_kl": self.average,
            "converged": self.converged,
        }


def compare(
    model: CtbnModel,
    evidence: EvidenceTimeline,
    points: int = 60,
    topology: Optional[ClusterTopology] = None,
    segments: Optional[List[Segment]] = None,
    tol: Optional[float] = None,
    max_iters: Optional[int] = None,
) -> Comparison:
    """
    Runs both engines over the evidence and reports KL(exact || EP) of the
    full joint at ``points`` evenly spaced times across the horizon.
    """
    exact = ExactFilter(model, evidence, segments=segments)
    approximate: FilterResult = run_filter(
        model,
        evidence,
        topology=topology,
        tol=tol,
        max_iters=max_iters,
        segments=segments,
    )

    times = list(probe_times(points, *evidence.horizon))
    divergences = [
        kl_divergence(
            exact.distribution(t).probs, approximate.joint(t).probs
        )
        for t in times
    ]
    comparison = Comparison(times, divergences, approximate.converged)
    logging.info(
        f"Compared {points} probe(s): average KL {comparison.average:.6g}"
    )
    return comparison
