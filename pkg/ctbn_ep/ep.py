# SPDX-FileCopyrightText: 2022 VMware Inc
#
# SPDX-License-Identifier: MIT

"""
Expectation propagation over cluster graphs, one segment of constant
evidence at a time, and the forward filter chaining segments together.
"""

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from ctbn_ep.algebra import (
    IntensityFactor,
    PointDistribution,
    amalgamate,
    cim_factor,
    divide,
    embed,
    project_states,
    propagate,
)
from ctbn_ep.clustergraph import (
    ClusterTopology,
    Edge,
    build_cluster_tree,
    cluster_initial_distributions,
    edge_key,
    sweep_schedule,
    tree_roots,
    upward_downward,
)
from ctbn_ep.config import config
from ctbn_ep.errors import (
    ImpossibleEvidenceError,
    JointSizeError,
    ScopeError,
    SmoothingNotSupportedError,
)
from ctbn_ep.model import (
    CtbnModel,
    EvidenceTimeline,
    Segment,
    TransitionObservation,
    consistent_states,
    partition_evidence,
    state_count,
)
from ctbn_ep.suffstats import (
    SuffStats,
    aggregate_stats,
    approx_marginalize,
    expected_suff_stats,
)


class Direction(enum.Enum):
    FORWARD = "forward"
    BACKWARD = "backward"


@dataclass
class ClusterGraphState:
    """
    Potentials and sepset messages of one segment. Mutated in place by
    ``send_message``; not shared between execution contexts.
    """

    model: CtbnModel
    topology: ClusterTopology
    segment: Segment
    initials: List[PointDistribution]
    potentials: List[IntensityFactor]
    messages: Dict[Edge, IntensityFactor]
    sweeps: int = 0
    converged: bool = False
    last_change: float = 0.0
    rtol: Optional[float] = None

    @property
    def interval(self) -> Tuple[float, float]:
        return (self.segment.start, self.segment.end)

    def start_distribution(self, i: int) -> PointDistribution:
        """P0 of cluster ``i`` restricted to its retained states."""
        retained = self.potentials[i].retained
        return self.initials[i].restrict(retained).normalized()

    def sepset_start(self, i: int, j: int) -> PointDistribution:
        message = self.messages[edge_key(i, j)]
        initial = self.initials[i].marginalize(self.topology.sepset(i, j))
        return initial.restrict(message.retained).normalized()


@dataclass(frozen=True, eq=False)
class CalibratedPointBeliefs:
    """
    Mutually consistent cluster and sepset distributions at one instant.
    All vectors span the full joint space of their scopes.
    """

    cluster_beliefs: List[PointDistribution]
    sepset_beliefs: Dict[Edge, PointDistribution]


def _cluster_retained(model, topology, i, evidence) -> np.ndarray:
    scope = model.ordered(topology.clusters[i])
    relevant = {k: v for k, v in evidence.items() if k in topology.clusters[i]}
    retained = consistent_states(scope, relevant)
    if len(retained) == 0:
        raise ImpossibleEvidenceError(
            f"evidence {relevant} empties cluster {topology.clusters[i]}"
        )
    return retained


def init_segment(
    model: CtbnModel,
    topology: ClusterTopology,
    initials: Sequence[PointDistribution],
    segment: Segment,
) -> ClusterGraphState:
    """
    Potentials are the reduced CIMs assigned to each cluster, amalgamated;
    every message starts as the zero intensity matrix.
    """
    potentials = []
    for i, cluster in enumerate(topology.clusters):
        scope = model.ordered(cluster)
        potential = IntensityFactor.zeros(
            scope, _cluster_retained(model, topology, i, segment.active)
        )
        for name in topology.assigned(i):
            potential = amalgamate(potential, cim_factor(model, name), scope)
        potentials.append(potential)

    messages = {}
    for i, j in topology.edges:
        names = topology.sepset(i, j)
        scope = model.ordered(names)
        relevant = {k: v for k, v in segment.active.items() if k in names}
        messages[edge_key(i, j)] = IntensityFactor.zeros(
            scope, consistent_states(scope, relevant)
        )

    return ClusterGraphState(
        model=model,
        topology=topology,
        segment=segment,
        initials=list(initials),
        potentials=potentials,
        messages=messages,
    )


def outgoing_message(
    state: ClusterGraphState, i: int, j: int
) -> IntensityFactor:
    """
    The projection of potential ``i`` onto the sepset with ``j``. On
    cyclic topologies the message is shifted so that its largest row sum is
    zero; a constant exit rate only rescales beliefs.
    """
    delta = approx_marginalize(
        state.potentials[i],
        state.start_distribution(i),
        state.interval,
        state.topology.sepset(i, j),
        rtol=state.rtol,
    )
    if state.topology.is_tree:
        return delta

    return shift_exit(delta)


def shift_exit(factor: IntensityFactor) -> IntensityFactor:
    """``factor`` plus c I, with c the negated largest row sum."""
    if factor.size == 0:
        return factor

    shift = float(np.max(factor.row_sums()))
    return IntensityFactor(
        factor.scope,
        factor.retained,
        factor.matrix - shift * np.eye(factor.size),
    )


def normalized_belief(
    start: PointDistribution, factor: IntensityFactor, t: float
) -> PointDistribution:
    """
    Normalized ``start exp(Q t)`` over every joint state. The factor is
    shifted first so long exit-heavy runs do not underflow.
    """
    return propagate(start, shift_exit(factor), t).normalized().expand()


def send_message(
    state: ClusterGraphState, i: int, j: int
) -> ClusterGraphState:
    """
    pi_j <- pi_j + delta - mu and mu <- delta, with one stored message per
    undirected edge.
    """
    key = edge_key(i, j)
    if key not in state.messages:
        raise ValueError(f"{i}-{j} is not an edge of the topology")

    delta = outgoing_message(state, i, j)
    stored = state.messages[key]
    change = float(np.max(np.abs(divide(delta, stored).matrix), initial=0.0))

    target = state.potentials[j]
    state.potentials[j] = divide(
        amalgamate(target, delta, target.scope), stored
    )
    state.messages[key] = delta
    state.last_change = max(state.last_change, change)
    return state


def sweep(
    state: ClusterGraphState, schedule: Optional[Sequence[Edge]] = None
) -> float:
    """Sends one round of messages; returns the largest message change."""
    schedule = sweep_schedule(state.topology) if schedule is None else schedule
    state.last_change = 0.0
    for i, j in schedule:
        send_message(state, i, j)
    state.sweeps += 1
    logging.debug(
        f"Sweep {state.sweeps} on [{state.segment.start}, "
        f"{state.segment.end}): max message change {state.last_change:.3g}"
    )
    return state.last_change


def run_segment_ep(
    state: ClusterGraphState,
    schedule: Optional[Sequence[Edge]] = None,
    tol: Optional[float] = None,
    max_iters: Optional[int] = None,
) -> ClusterGraphState:
    """
    Sweeps until every message changes by less than ``tol`` or
    ``max_iters`` sweeps have run; the outcome is recorded on the state.
    """
    tol = config.EP_TOL if tol is None else tol
    max_iters = config.EP_MAX_ITERS if max_iters is None else max_iters
    if not state.topology.edges or state.segment.length == 0:
        state.converged = True
        return state

    for _ in range(max_iters):
        if sweep(state, schedule) < tol:
            state.converged = True
            break

    if not state.converged:
        logging.warning(
            f"EP did not converge on [{state.segment.start}, "
            f"{state.segment.end}) after {state.sweeps} sweeps "
            f"(last change {state.last_change:.3g})"
        )
    return state


def calibration_residual(state: ClusterGraphState) -> float:
    """Largest disagreement between the two projections onto any sepset."""
    if state.segment.length == 0:
        return 0.0

    residual = 0.0
    for i, j in state.topology.edges:
        forward = outgoing_message(state, i, j)
        backward = outgoing_message(state, j, i)
        gap = np.max(np.abs(divide(forward, backward).matrix), initial=0.0)
        residual = max(residual, float(gap))

    return residual


def conservation_gap(state: ClusterGraphState) -> float:
    """
    Largest entry of sum(potentials) - sum(messages) - reduced joint
    intensity, all embedded over the full joint space.
    """
    model = state.model
    if state_count(model.variables) > config.JOINT_SIZE_CAP:
        raise JointSizeError("conservation check needs the full joint space")

    retained = consistent_states(model.variables, state.segment.active)
    total = np.zeros((len(retained), len(retained)))
    for potential in state.potentials:
        total += embed(potential, model.variables, retained).matrix
    for message in state.messages.values():
        total -= embed(message, model.variables, retained).matrix
    for variable in model.variables:
        total -= embed(
            cim_factor(model, variable.name), model.variables, retained
        ).matrix

    return float(np.max(np.abs(total), initial=0.0))


def _broadcast(
    belief: PointDistribution, sepset: PointDistribution
) -> np.ndarray:
    return sepset.probs[project_states(belief.scope, sepset.scope)]


def calibrate(
    topology: ClusterTopology,
    clusters: List[PointDistribution],
    sepsets: Dict[Edge, PointDistribution],
) -> Tuple[CalibratedPointBeliefs, float]:
    """
    One upward-downward sum-product pass with sepset division over the
    calibration tree. Returns normalized beliefs and the log of the total
    mass of the represented joint.
    """
    clusters = [b.expand() for b in clusters]
    sepsets = {k: s.expand() for k, s in sepsets.items()}
    tree = topology.calibration_tree()

    def pass_message(i: int, j: int) -> None:
        key = edge_key(i, j)
        names = topology.sepset(i, j)
        fresh = clusters[i].marginalize(names)
        old = sepsets[key]
        ratio = np.divide(
            fresh.probs,
            old.probs,
            out=np.zeros_like(fresh.probs),
            where=old.probs > 0,
        )
        scope = clusters[j].scope
        index = project_states(scope, fresh.scope)
        clusters[j] = PointDistribution.full(
            scope, clusters[j].probs * ratio[index]
        )
        sepsets[key] = fresh

    upward, downward = upward_downward(tree)
    for i, j in upward + downward:
        pass_message(i, j)

    log_mass = 0.0
    component_mass = {}
    for root in tree_roots(tree):
        mass = clusters[root].mass
        if not mass > config.IMPOSSIBLE_MASS:
            raise ImpossibleEvidenceError(
                f"point evidence has zero probability in cluster "
                f"{topology.clusters[root]}"
            )
        log_mass += math.log(mass)
        for member in nx.node_connected_component(tree, root):
            component_mass[member] = mass

    normalized = [
        PointDistribution.full(b.scope, b.probs / component_mass[i])
        for i, b in enumerate(clusters)
    ]
    calibrated_sepsets = {}
    for i, j in topology.edges:
        key = edge_key(i, j)
        if tree.has_edge(i, j):
            calibrated_sepsets[key] = PointDistribution.full(
                sepsets[key].scope, sepsets[key].probs / component_mass[i]
            )
        else:
            calibrated_sepsets[key] = normalized[i].marginalize(
                topology.sepset(i, j)
            )

    return CalibratedPointBeliefs(normalized, calibrated_sepsets), log_mass


def endpoint_beliefs(
    state: ClusterGraphState, offset: Optional[float] = None
) -> CalibratedPointBeliefs:
    """
    Cluster and sepset distributions ``offset`` into the segment (its end
    by default), recalibrated into a coherent set.
    """
    offset = state.segment.length if offset is None else offset
    clusters = [
        normalized_belief(state.start_distribution(i), potential, offset)
        for i, potential in enumerate(state.potentials)
    ]
    sepsets = {
        key: normalized_belief(state.sepset_start(*key), message, offset)
        for key, message in state.messages.items()
    }
    beliefs, _ = calibrate(state.topology, clusters, sepsets)
    return beliefs


def condition_point_evidence(
    topology: ClusterTopology,
    beliefs: CalibratedPointBeliefs,
    points: Mapping[str, str],
    transitions: Sequence[TransitionObservation] = (),
) -> Tuple[CalibratedPointBeliefs, float]:
    """
    Zeroes inconsistent entries of every factor holding an observed
    variable, moves mass along observed transitions, and recalibrates.
    Returns the conditioned beliefs and the log-probability of the
    evidence under ``beliefs``.
    """

    moved = {t.variable for t in transitions}
    before = {k: v for k, v in points.items() if k not in moved}
    after = {k: v for k, v in points.items() if k in moved}

    def condition(belief: PointDistribution) -> PointDistribution:
        belief = belief.condition(before)
        for transition in transitions:
            if transition.variable in belief.names:
                belief = belief.relabel(
                    transition.variable,
                    transition.from_value,
                    transition.to_value,
                )
        return belief.condition(after)

    if not points and not transitions:
        return beliefs, 0.0

    clusters = [condition(b) for b in beliefs.cluster_beliefs]
    sepsets = {k: condition(s) for k, s in beliefs.sepset_beliefs.items()}
    return calibrate(topology, clusters, sepsets)


def region_log_likelihood(state: ClusterGraphState) -> float:
    """
    Region-based estimate of the log-probability of the segment's
    continuous evidence: cluster survival masses over sepset ones.
    """
    total = 0.0
    length = state.segment.length
    for i, potential in enumerate(state.potentials):
        total += math.log(
            max(
                propagate(state.start_distribution(i), potential, length).mass,
                config.IMPOSSIBLE_MASS,
            )
        )
    for (i, j), message in state.messages.items():
        total -= math.log(
            max(
                propagate(state.sepset_start(i, j), message, length).mass,
                config.IMPOSSIBLE_MASS,
            )
        )

    return total


@dataclass(frozen=True)
class SegmentReport:
    start: float
    end: float
    sweeps: int
    converged: bool
    residual: float
    log_likelihood: float


@dataclass(eq=False)
class FilterResult:
    """
    Per-segment EP states with the calibrated beliefs entering each segment
    (``starts``) and those at the horizon end (``final``).
    """

    model: CtbnModel
    topology: ClusterTopology
    segments: List[Segment]
    states: List[ClusterGraphState]
    starts: List[CalibratedPointBeliefs]
    final: CalibratedPointBeliefs
    reports: List[SegmentReport] = field(default_factory=list)
    log_likelihood: float = 0.0

    @property
    def horizon(self) -> Tuple[float, float]:
        return (self.segments[0].start, self.segments[-1].end)

    @property
    def converged(self) -> bool:
        return all(r.converged for r in self.reports)

    def _locate(self, t: float) -> Tuple[int, float]:
        t_start, t_end = self.horizon
        if not t_start <= t <= t_end:
            raise ValueError(f"time {t} outside horizon [{t_start}, {t_end}]")
        for index, segment in enumerate(self.segments):
            if segment.covers(t):
                return index, t - segment.start

        return len(self.segments) - 1, self.segments[-1].length

    def _at_final(self, t: float) -> bool:
        last = self.segments[-1]
        return t == last.end and bool(
            last.boundary_points or last.boundary_transitions
        )

    def cluster_belief(self, t: float, i: int) -> PointDistribution:
        """Normalized belief of cluster ``i`` at ``t`` (right limit)."""
        if self._at_final(t):
            return self.final.cluster_beliefs[i]
        index, offset = self._locate(t)
        if offset == 0:
            return self.starts[index].cluster_beliefs[i]

        state = self.states[index]
        return normalized_belief(
            state.start_distribution(i), state.potentials[i], offset
        )

    def marginal(self, t: float, names: Iterable[str]) -> PointDistribution:
        names = tuple(names)
        cluster = self.topology.smallest_cluster(names)
        if cluster is None:
            return self.joint(t).marginalize(names)

        return self.cluster_belief(t, cluster).marginalize(names)

    def beliefs(self, t: float) -> CalibratedPointBeliefs:
        if self._at_final(t):
            return self.final
        index, offset = self._locate(t)
        if offset == 0:
            return self.starts[index]

        return endpoint_beliefs(self.states[index], offset)

    def joint(self, t: float) -> PointDistribution:
        """
        Full joint reassembled from calibrated beliefs as the product of
        cluster beliefs over the product of sepset beliefs.
        """
        model = self.model
        if state_count(model.variables) > config.JOINT_SIZE_CAP:
            raise JointSizeError(
                f"joint reassembly over {len(model.variables)} variables "
                f"exceeds {config.JOINT_SIZE_CAP} states"
            )

        beliefs = self.beliefs(t)
        tree = self.topology.calibration_tree()
        joint = np.ones(state_count(model.variables))
        for belief in beliefs.cluster_beliefs:
            index = project_states(model.variables, belief.scope)
            joint *= belief.probs[index]
        for i, j in tree.edges:
            sepset = beliefs.sepset_beliefs[edge_key(i, j)]
            denominator = sepset.probs[
                project_states(model.variables, sepset.scope)
            ]
            joint = np.divide(
                joint,
                denominator,
                out=np.zeros_like(joint),
                where=denominator > 0,
            )

        return PointDistribution.full(model.variables, joint).normalized()

    def expected_statistics(
        self, index: int, names: Iterable[str]
    ) -> SuffStats:
        """Expected statistics of segment ``index`` from the smallest
        cluster holding ``names``."""
        names = tuple(names)
        state = self.states[index]
        cluster = self.topology.smallest_cluster(names)
        if cluster is None:
            raise ScopeError(f"no cluster holds {', '.join(names)}")

        return aggregate_stats(cluster_statistics(state, cluster), names)


def cluster_statistics(state: ClusterGraphState, i: int) -> SuffStats:
    return expected_suff_stats(
        state.potentials[i],
        state.start_distribution(i),
        state.interval,
        rtol=state.rtol,
    )


def run_filter(
    model: CtbnModel,
    evidence: EvidenceTimeline,
    topology: Optional[ClusterTopology] = None,
    tol: Optional[float] = None,
    max_iters: Optional[int] = None,
    segments: Optional[List[Segment]] = None,
    direction: Direction = Direction.FORWARD,
) -> FilterResult:
    """
    Forward filtering: segment EP, extraction of the end beliefs,
    recalibration with the boundary evidence, hand-off to the next segment.
    """
    if direction is not Direction.FORWARD:
        raise SmoothingNotSupportedError(
            "backward smoothing is not supported; only forward filtering "
            "is available"
        )

    topology = topology or build_cluster_tree(model)
    segments = segments or partition_evidence(evidence, model)
    log_likelihood = 0.0

    initials = cluster_initial_distributions(model, topology)
    sepsets = {
        edge_key(i, j): initials[i].marginalize(topology.sepset(i, j))
        for i, j in topology.edges
    }
    beliefs, _ = calibrate(topology, initials, sepsets)
    opening = dict(segments[0].active)
    opening.update(segments[0].opening_points)
    beliefs, log_probability = condition_point_evidence(
        topology, beliefs, opening
    )
    log_likelihood += log_probability

    states, starts, reports = [], [], []
    for index, segment in enumerate(segments):
        starts.append(beliefs)
        state = init_segment(model, topology, beliefs.cluster_beliefs, segment)
        run_segment_ep(state, tol=tol, max_iters=max_iters)
        states.append(state)

        segment_log_likelihood = region_log_likelihood(state)
        log_likelihood += segment_log_likelihood
        residual = calibration_residual(state)
        reports.append(
            SegmentReport(
                start=segment.start,
                end=segment.end,
                sweeps=state.sweeps,
                converged=state.converged,
                residual=residual,
                log_likelihood=segment_log_likelihood,
            )
        )
        logging.info(
            f"Segment [{segment.start}, {segment.end}): "
            f"{'converged' if state.converged else 'not converged'} after "
            f"{state.sweeps} sweep(s), residual {residual:.3g}"
        )

        boundary = dict(segment.boundary_points)
        if index + 1 < len(segments):
            boundary.update(segments[index + 1].active)
        beliefs, log_probability = condition_point_evidence(
            topology,
            endpoint_beliefs(state),
            boundary,
            segment.boundary_transitions,
        )
        log_likelihood += log_probability

    return FilterResult(
        model=model,
        topology=topology,
        segments=segments,
        states=states,
        starts=starts,
        final=beliefs,
        reports=reports,
        log_likelihood=log_likelihood,
    )
