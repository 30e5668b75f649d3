# SPDX-FileCopyrightText: 2022 VMware Inc
#
# SPDX-License-Identifier: MIT

"""
Exact inference over the amalgamated joint intensity matrix.
"""

import logging
import math
from dataclasses import dataclass
from typing import Iterable, List, Optional

import numpy as np

from ctbn_ep.algebra import (
    IntensityFactor,
    PointDistribution,
    cim_factor,
    embed,
    propagate,
    reduce,
)
from ctbn_ep.config import config
from ctbn_ep.errors import (
    EvidenceError,
    ImpossibleEvidenceError,
    JointSizeError,
)
from ctbn_ep.model import (
    CtbnModel,
    EvidenceTimeline,
    Segment,
    Trajectory,
    initial_joint,
    partition_evidence,
    state_count,
    trajectory_statistics,
)
from ctbn_ep.suffstats import SuffStats, aggregate_stats, expected_suff_stats


def joint_intensity(
    model: CtbnModel, cap: Optional[int] = None
) -> IntensityFactor:
    """Sum of every CIM embedded over the full joint state space."""
    cap = config.JOINT_SIZE_CAP if cap is None else cap
    size = state_count(model.variables)
    if size > cap:
        raise JointSizeError(
            f"joint space of {len(model.variables)} variables has {size} "
            f"states, above the cap of {cap}"
        )

    joint = IntensityFactor.zeros(model.variables)
    for variable in model.variables:
        joint = IntensityFactor(
            joint.scope,
            joint.retained,
            joint.matrix
            + embed(cim_factor(model, variable.name), model.variables).matrix,
        )

    return joint


def apply_boundary(
    vector: PointDistribution, segment: Segment
) -> PointDistribution:
    """
    Conditions a full joint vector on the observations at the segment end.
    Observed transitions condition on the old value, then relabel the mass.
    """
    vector = vector.condition(segment.boundary_points)
    for transition in segment.boundary_transitions:
        vector = vector.relabel(
            transition.variable, transition.from_value, transition.to_value
        )

    return vector


@dataclass(frozen=True, eq=False)
class _SegmentStart:
    segment: Segment
    factor: IntensityFactor
    start: PointDistribution
    log_scale: float


class ExactFilter:
    """
    Forward filter over the full joint space.

    Vectors are unnormalized evidence likelihoods; each segment start is
    renormalized and its log-mass accumulated in ``log_scale``.
    """

    def __init__(
        self,
        model: CtbnModel,
        evidence: EvidenceTimeline,
        segments: Optional[List[Segment]] = None,
    ):
        self.model = model
        self.horizon = evidence.horizon
        self.joint = joint_intensity(model)
        self.segments = segments or partition_evidence(evidence, model)
        self._starts: List[_SegmentStart] = []

        vector = PointDistribution.full(
            model.variables, initial_joint(model, model.names)
        )
        vector = vector.condition(self.segments[0].opening_points)
        log_scale = 0.0
        for segment in self.segments:
            factor = reduce(self.joint, segment.active)
            start = vector.restrict(factor.retained)
            mass = start.mass
            if not mass > config.IMPOSSIBLE_MASS:
                raise ImpossibleEvidenceError(
                    f"evidence has zero probability at {segment.start}"
                )
            log_scale += math.log(mass)
            start = start.normalized()
            self._starts.append(
                _SegmentStart(segment, factor, start, log_scale)
            )

            end = propagate(start, factor, segment.length).expand()
            vector = apply_boundary(end, segment)

        mass = vector.mass
        if not mass > config.IMPOSSIBLE_MASS:
            raise ImpossibleEvidenceError(
                f"evidence has zero probability at {self.horizon[1]}"
            )
        self._final = vector.normalized()
        self._final_log_scale = log_scale + math.log(mass)
        logging.debug(
            f"Exact filter over {len(self.segments)} segment(s), "
            f"log-likelihood {self._final_log_scale:.6g}"
        )

    def _check_time(self, t: float) -> None:
        t_start, t_end = self.horizon
        if not t_start <= t <= t_end:
            raise ValueError(f"time {t} outside horizon [{t_start}, {t_end}]")

    def segment_index(self, t: float) -> int:
        self._check_time(t)
        for index, entry in enumerate(self._starts):
            if entry.segment.covers(t):
                return index

        return len(self._starts) - 1

    def _unnormalized(self, t: float):
        self._check_time(t)
        if t >= self.horizon[1]:
            return self._final, self._final_log_scale

        entry = self._starts[self.segment_index(t)]
        vector = propagate(
            entry.start, entry.factor, t - entry.segment.start
        ).expand()
        return vector, entry.log_scale

    def distribution(self, t: float) -> PointDistribution:
        """Normalized full joint at ``t`` (right limit)."""
        vector, _ = self._unnormalized(t)
        return vector.normalized()

    def query(self, t: float, names: Iterable[str]) -> PointDistribution:
        return self.distribution(t).marginalize(names)

    def log_likelihood(self, t: float) -> float:
        """Log-probability of the evidence observed up to ``t``."""
        vector, log_scale = self._unnormalized(t)
        mass = vector.mass
        if not mass > 0:
            return -math.inf

        return log_scale + math.log(mass)

    def expected_statistics(
        self, index: int, names: Iterable[str]
    ) -> SuffStats:
        """Expected statistics of segment ``index`` aggregated onto names."""
        entry = self._starts[index]
        stats = expected_suff_stats(
            entry.factor,
            entry.start,
            (entry.segment.start, entry.segment.end),
        )
        return aggregate_stats(stats, names)


def exact_query(
    model: CtbnModel,
    evidence: EvidenceTimeline,
    t: float,
    query_vars: Iterable[str],
) -> PointDistribution:
    """Posterior marginal of ``query_vars`` at ``t`` given the evidence."""
    return ExactFilter(model, evidence).query(t, query_vars)


def evidence_likelihood(
    model: CtbnModel, evidence: EvidenceTimeline, t: Optional[float] = None
) -> float:
    """
    Log-probability of the state evidence up to ``t`` (horizon end by
    default). Observed transitions contribute through their endpoint
    values only.
    """
    engine = ExactFilter(model, evidence)
    return engine.log_likelihood(evidence.horizon[1] if t is None else t)


def exact_joint(
    model: CtbnModel, evidence: EvidenceTimeline, t: float
) -> PointDistribution:
    return ExactFilter(model, evidence).distribution(t)


def initial_log_probability(
    model: CtbnModel, state: dict
) -> float:
    """log P0(state) from the initial network's CPTs."""
    total = 0.0
    for variable in model.variables:
        cpt = model.initial.cpts[variable.name]
        row = cpt.table[tuple(state[p] for p in cpt.parents)]
        probability = float(row[variable.index(state[variable.name])])
        if probability <= 0:
            return -math.inf
        total += math.log(probability)

    return total


def trajectory_log_likelihood(
    model: CtbnModel, trajectory: Trajectory
) -> float:
    """
    Log-density of a fully observed trajectory: the initial-state
    log-probability plus, per family, the sum of M[x, x'|u] ln q_{xx'|u}
    minus q_{x|u} T[x|u].
    """
    try:
        trajectory.check(model)
    except ValueError as err:
        raise EvidenceError(f"invalid trajectory: {err}")

    total = initial_log_probability(model, trajectory.initial_state)
    stats = trajectory_statistics(model, trajectory)
    for variable in model.variables:
        cim = model.cims[variable.name]
        family = stats[variable.name]
        for values, matrix in cim.matrices.items():
            matrix = np.asarray(matrix, dtype=float)
            counts = family.counts[values]
            total -= float(np.dot(-np.diag(matrix), family.time[values]))

            used = counts > 0
            if np.any(used & (matrix <= 0)):
                logging.warning(
                    f"trajectory uses a zero-rate transition of "
                    f"{variable.name} under {dict(zip(cim.parents, values))}"
                )
                return -math.inf
            total += float(np.sum(counts[used] * np.log(matrix[used])))

    return total

