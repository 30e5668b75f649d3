# SPDX-FileCopyrightText: 2022 VMware Inc
#
# SPDX-License-Identifier: MIT

"""
Domain types for CTBN models, trajectories and evidence.

Joint states over an ordered scope ``(X1, ..., Xk)`` are indexed with the
first variable varying fastest: ``index = sum(idx(x_m) * stride_m)`` with
``stride_1 = 1``. Scopes are always ordered by model declaration order.
"""

import itertools
import logging
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from ctbn_ep.config import config
from ctbn_ep.errors import (
    EvidenceError,
    JointSizeError,
    ModelValidationError,
    ScopeError,
    Violation,
)

ParentValues = Tuple[str, ...]


@dataclass(frozen=True)
class Variable:
    name: str
    states: Tuple[str, ...]

    @property
    def cardinality(self) -> int:
        return len(self.states)

    def index(self, state: str) -> int:
        try:
            return self.states.index(state)
        except ValueError:
            raise EvidenceError(f"'{state}' is not a state of {self.name}")


def state_count(scope: Sequence[Variable]) -> int:
    return int(np.prod([v.cardinality for v in scope], dtype=np.int64))


def joint_assignments(scope: Sequence[Variable]) -> np.ndarray:
    """
    Returns an (N, k) array: row n holds the state indices of joint state n.
    """
    dims = tuple(v.cardinality for v in scope)
    if len(dims) == 0:
        return np.zeros((1, 0), dtype=np.int64)

    rows = np.unravel_index(np.arange(state_count(scope)), dims, order="F")
    return np.stack(rows, axis=1)


def joint_index(scope: Sequence[Variable], assignments: np.ndarray):
    """Inverse of ``joint_assignments`` for an (N, k) index array."""
    dims = tuple(v.cardinality for v in scope)
    if len(dims) == 0:
        return np.zeros(len(assignments), dtype=np.int64)

    return np.ravel_multi_index(
        tuple(np.asarray(assignments).T), dims, order="F"
    )


def consistent_states(
    scope: Sequence[Variable], evidence: Mapping[str, str]
) -> np.ndarray:
    """Joint state indices of ``scope`` agreeing with ``evidence``."""
    keep = np.ones(state_count(scope), dtype=bool)
    rows = joint_assignments(scope)
    for position, variable in enumerate(scope):
        if variable.name in evidence:
            value = variable.index(evidence[variable.name])
            keep &= rows[:, position] == value

    return np.flatnonzero(keep)


def parent_instantiations(
    variables: Sequence[Variable],
) -> List[ParentValues]:
    return list(itertools.product(*(v.states for v in variables)))


def format_instantiation(names: Sequence[str], values: ParentValues) -> str:
    """Parent instantiation label, e.g. ``A=a1,B=b2`` (empty for roots)."""
    return ",".join(f"{n}={v}" for n, v in zip(names, values))


@dataclass(frozen=True, eq=False)
class Cim:
    """Conditional intensity matrix, one rate matrix per parent values."""

    subject: str
    parents: Tuple[str, ...]
    matrices: Dict[ParentValues, np.ndarray]

    def matrix(self, assignment: Mapping[str, str]) -> np.ndarray:
        return self.matrices[tuple(assignment[p] for p in self.parents)]


@dataclass(frozen=True, eq=False)
class Cpt:
    """Conditional probability table of the initial network."""

    variable: str
    parents: Tuple[str, ...]
    table: Dict[ParentValues, np.ndarray]


@dataclass(frozen=True, eq=False)
class InitialNetwork:
    edges: Tuple[Tuple[str, str], ...]
    cpts: Dict[str, Cpt]

    def graph(self, names: Sequence[str]) -> nx.DiGraph:
        dag = nx.DiGraph()
        dag.add_nodes_from(names)
        dag.add_edges_from(self.edges)
        return dag


@dataclass(frozen=True, eq=False)
class CtbnModel:
    variables: Tuple[Variable, ...]
    edges: Tuple[Tuple[str, str], ...]
    cims: Dict[str, Cim]
    initial: InitialNetwork

    @property
    def names(self) -> Tuple[str, ...]:
        return tuple(v.name for v in self.variables)

    def variable(self, name: str) -> Variable:
        for variable in self.variables:
            if variable.name == name:
                return variable

        raise ScopeError(f"Unknown variable '{name}'")

    def ordered(self, names: Iterable[str]) -> Tuple[Variable, ...]:
        """Variables named in ``names``, in declaration order."""
        wanted = set(names)
        if unknown := wanted - set(self.names):
            raise ScopeError(
                f"Unknown variable(s) {', '.join(sorted(unknown))}"
            )

        return tuple(v for v in self.variables if v.name in wanted)

    def parents(self, name: str) -> Tuple[str, ...]:
        sources = {parent for parent, child in self.edges if child == name}
        return tuple(n for n in self.names if n in sources)

    def family(self, name: str) -> Tuple[Variable, ...]:
        return self.ordered((name,) + self.parents(name))

    def graph(self) -> nx.DiGraph:
        graph = nx.DiGraph()
        graph.add_nodes_from(self.names)
        graph.add_edges_from(self.edges)
        return graph


def _check_rate_matrix(
    matrix: np.ndarray, size: int, location: str, tol: float
) -> List[Violation]:
    if matrix.shape != (size, size):
        return [
            Violation(
                "shape",
                location,
                f"expected {size}x{size} matrix, got {matrix.shape}",
            )
        ]

    violations = []
    off_diagonal = matrix - np.diag(np.diag(matrix))
    for row, col in zip(*np.nonzero(off_diagonal < 0)):
        violations.append(
            Violation(
                "negative-off-diagonal",
                f"{location} row {row} col {col}",
                f"intensity {matrix[row, col]} is negative",
            )
        )
    for row, total in enumerate(matrix.sum(axis=1)):
        if abs(total) > tol:
            violations.append(
                Violation(
                    "row-sum",
                    f"{location} row {row}",
                    f"row sums to {total}, expected 0",
                )
            )

    return violations


def collect_violations(
    model: CtbnModel, tol: Optional[float] = None
) -> List[Violation]:
    """Returns every invariant violation found in ``model``."""
    tol = config.VALIDATION_TOL if tol is None else tol
    violations: List[Violation] = []
    names = [v.name for v in model.variables]
    known = set(names)

    for name in {n for n in names if names.count(n) > 1}:
        violations.append(
            Violation("duplicate", f"variable {name}", "name declared twice")
        )
    for variable in model.variables:
        if len(variable.states) == 0:
            violations.append(
                Violation("states", f"variable {variable.name}", "no states")
            )
        if len(set(variable.states)) != len(variable.states):
            violations.append(
                Violation(
                    "duplicate",
                    f"variable {variable.name}",
                    "state labels are not unique",
                )
            )

    for parent, child in model.edges:
        for end in (parent, child):
            if end not in known:
                violations.append(
                    Violation(
                        "dangling",
                        f"edge {parent}->{child}",
                        f"unknown variable '{end}'",
                    )
                )
        if parent == child:
            violations.append(
                Violation(
                    "self-loop",
                    f"edge {parent}->{child}",
                    "a variable cannot be its own parent",
                )
            )

    for subject in model.cims:
        if subject not in known:
            violations.append(
                Violation(
                    "dangling", f"cim {subject}", "unknown subject variable"
                )
            )

    for variable in model.variables:
        cim = model.cims.get(variable.name)
        location = f"cim {variable.name}"
        if cim is None:
            violations.append(Violation("missing", location, "no CIM given"))
            continue

        if unknown := [p for p in cim.parents if p not in known]:
            violations.append(
                Violation(
                    "dangling",
                    location,
                    f"unknown parent(s) {', '.join(unknown)}",
                )
            )
            continue

        if set(cim.parents) != set(model.parents(variable.name)):
            violations.append(
                Violation(
                    "parents",
                    location,
                    f"CIM parents {list(cim.parents)} differ from graph "
                    f"parents {list(model.parents(variable.name))}",
                )
            )

        parents = [model.variable(p) for p in cim.parents]
        expected = set(parent_instantiations(parents))
        for values in sorted(expected - set(cim.matrices)):
            violations.append(
                Violation(
                    "missing-instantiation",
                    f"{location} | "
                    f"{format_instantiation(cim.parents, values)}",
                    "no intensity matrix for this parent instantiation",
                )
            )
        for values in sorted(set(cim.matrices) - expected):
            violations.append(
                Violation(
                    "dangling",
                    f"{location} | "
                    f"{format_instantiation(cim.parents, values)}",
                    "instantiation names unknown parent states",
                )
            )
        for values in sorted(set(cim.matrices) & expected):
            violations.extend(
                _check_rate_matrix(
                    np.asarray(cim.matrices[values], dtype=float),
                    variable.cardinality,
                    f"{location} | "
                    f"{format_instantiation(cim.parents, values)}",
                    tol,
                )
            )

    violations.extend(_initial_violations(model, tol))
    return violations


def _initial_violations(model: CtbnModel, tol: float) -> List[Violation]:
    violations: List[Violation] = []
    known = set(model.names)
    initial = model.initial

    for parent, child in initial.edges:
        for end in (parent, child):
            if end not in known:
                violations.append(
                    Violation(
                        "dangling",
                        f"initial edge {parent}->{child}",
                        f"unknown variable '{end}'",
                    )
                )
    dag = nx.DiGraph()
    dag.add_edges_from(initial.edges)
    if not nx.is_directed_acyclic_graph(dag):
        violations.append(
            Violation(
                "cycle", "initial network", "initial network is not acyclic"
            )
        )

    for name in initial.cpts:
        if name not in known:
            violations.append(
                Violation("dangling", f"cpt {name}", "unknown variable")
            )

    for variable in model.variables:
        location = f"cpt {variable.name}"
        cpt = initial.cpts.get(variable.name)
        if cpt is None:
            violations.append(Violation("missing", location, "no CPT given"))
            continue

        dag_parents = {p for p, c in initial.edges if c == variable.name}
        if unknown := [p for p in cpt.parents if p not in known]:
            violations.append(
                Violation(
                    "dangling",
                    location,
                    f"unknown parent(s) {', '.join(unknown)}",
                )
            )
            continue
        if set(cpt.parents) != dag_parents:
            violations.append(
                Violation(
                    "parents",
                    location,
                    f"CPT parents {list(cpt.parents)} differ from initial "
                    f"network parents {sorted(dag_parents)}",
                )
            )

        parents = [model.variable(p) for p in cpt.parents]
        expected = set(parent_instantiations(parents))
        for values in sorted(expected - set(cpt.table)):
            violations.append(
                Violation(
                    "missing-instantiation",
                    f"{location} | "
                    f"{format_instantiation(cpt.parents, values)}",
                    "no distribution for this parent instantiation",
                )
            )
        for values in sorted(set(cpt.table) & expected):
            row = np.asarray(cpt.table[values], dtype=float)
            row_location = (
                f"{location} | {format_instantiation(cpt.parents, values)}"
            )
            if row.shape != (variable.cardinality,):
                violations.append(
                    Violation(
                        "shape",
                        row_location,
                        f"expected {variable.cardinality} entries",
                    )
                )
                continue
            if np.any(row < 0):
                violations.append(
                    Violation(
                        "cpt-negative", row_location, "negative probability"
                    )
                )
            if abs(row.sum() - 1.0) > tol:
                violations.append(
                    Violation(
                        "cpt-normalization",
                        row_location,
                        f"row sums to {row.sum()}, expected 1",
                    )
                )

    return violations


def validate_model(model: CtbnModel, tol: Optional[float] = None) -> CtbnModel:
    """
    Returns ``model`` if all invariants hold, otherwise raises
    ``ModelValidationError`` carrying every violation found.
    """
    if violations := collect_violations(model, tol):
        logging.debug(f"Model rejected with {len(violations)} violation(s)")
        raise ModelValidationError(violations)

    return model


def initial_joint(model: CtbnModel, scope: Iterable[str]) -> np.ndarray:
    """
    Exact marginal of the initial network onto ``scope`` by enumeration.

    Only the ancestral closure of ``scope`` in the initial network is
    enumerated; the remaining variables sum out to one. The returned vector
    follows the joint indexing convention over the declaration-ordered scope.
    """
    targets = model.ordered(scope)
    dag = model.initial.graph(model.names)
    needed = set(v.name for v in targets)
    for variable in targets:
        needed |= nx.ancestors(dag, variable.name)
    enumerated = model.ordered(needed)

    if state_count(enumerated) > config.JOINT_SIZE_CAP:
        raise JointSizeError(
            f"Initial enumeration over {len(enumerated)} variables exceeds "
            f"{config.JOINT_SIZE_CAP} joint states"
        )

    axes = {v.name: i for i, v in enumerate(enumerated)}
    joint = np.ones(tuple(v.cardinality for v in enumerated))
    for variable in enumerated:
        cpt = model.initial.cpts[variable.name]
        family = [model.variable(p) for p in cpt.parents] + [variable]
        table = np.zeros(tuple(v.cardinality for v in family))
        for values, probs in cpt.table.items():
            position = tuple(
                parent.index(value)
                for parent, value in zip(family[:-1], values)
            )
            table[position] = probs

        positions = [axes[v.name] for v in family]
        order = np.argsort(positions)
        shape = [1] * len(enumerated)
        for position in positions:
            shape[position] = enumerated[position].cardinality
        joint = joint * table.transpose(order).reshape(shape)

    keep = [axes[v.name] for v in targets]
    summed = tuple(i for i in range(len(enumerated)) if i not in keep)
    marginal = joint.sum(axis=summed) if summed else joint
    return np.asarray(marginal).reshape(-1, order="F")


@dataclass(frozen=True)
class Transition:
    time: float
    variable: str
    state: str


@dataclass(frozen=True, eq=False)
class Trajectory:
    start_time: float
    end_time: float
    initial_state: Dict[str, str]
    transitions: Tuple[Transition, ...] = ()

    def check(self, model: CtbnModel) -> None:
        """Raises ``ValueError`` when the trajectory is malformed."""
        if set(self.initial_state) != set(model.names):
            raise ValueError("initial state must assign every variable")

        state = dict(self.initial_state)
        previous = self.start_time
        for transition in self.transitions:
            if not previous < transition.time < self.end_time:
                raise ValueError(
                    f"transition at {transition.time} is not strictly "
                    "increasing inside the trajectory interval"
                )
            if state[transition.variable] == transition.state:
                raise ValueError(
                    f"transition at {transition.time} does not change "
                    f"{transition.variable}"
                )
            model.variable(transition.variable).index(transition.state)
            state[transition.variable] = transition.state
            previous = transition.time

    def state_at(self, time: float) -> Dict[str, str]:
        """Joint state at ``time`` (right limit)."""
        state = dict(self.initial_state)
        for transition in self.transitions:
            if transition.time > time:
                break
            state[transition.variable] = transition.state

        return state


@dataclass
class FamilyStatistics:
    """T[x|u] and M[x,x'|u] of one variable, keyed by parent values."""

    time: Dict[ParentValues, np.ndarray] = field(default_factory=dict)
    counts: Dict[ParentValues, np.ndarray] = field(default_factory=dict)


def trajectory_statistics(
    model: CtbnModel, trajectory: Trajectory
) -> Dict[str, FamilyStatistics]:
    """Sufficient statistics of a fully observed trajectory."""
    stats: Dict[str, FamilyStatistics] = {}
    for variable in model.variables:
        cim = model.cims[variable.name]
        parents = [model.variable(p) for p in cim.parents]
        family = FamilyStatistics()
        for values in parent_instantiations(parents):
            family.time[values] = np.zeros(variable.cardinality)
            family.counts[values] = np.zeros(
                (variable.cardinality, variable.cardinality)
            )
        stats[variable.name] = family

    def key(name: str, state: Mapping[str, str]) -> ParentValues:
        return tuple(state[p] for p in model.cims[name].parents)

    state = dict(trajectory.initial_state)
    clock = trajectory.start_time
    events = list(trajectory.transitions) + [None]
    for transition in events:
        until = trajectory.end_time if transition is None else transition.time
        for variable in model.variables:
            position = variable.index(state[variable.name])
            stats[variable.name].time[key(variable.name, state)][position] += (
                until - clock
            )
        if transition is None:
            break

        variable = model.variable(transition.variable)
        source = variable.index(state[variable.name])
        target = variable.index(transition.state)
        stats[variable.name].counts[key(variable.name, state)][
            source, target
        ] += 1
        state[variable.name] = transition.state
        clock = transition.time

    return stats


@dataclass(frozen=True)
class IntervalObservation:
    variable: str
    value: str
    start: float
    end: float


@dataclass(frozen=True)
class PointObservation:
    variable: str
    value: str
    time: float


@dataclass(frozen=True)
class TransitionObservation:
    variable: str
    from_value: str
    to_value: str
    time: float


@dataclass(frozen=True)
class EvidenceTimeline:
    horizon: Tuple[float, float]
    intervals: Tuple[IntervalObservation, ...] = ()
    points: Tuple[PointObservation, ...] = ()
    transitions: Tuple[TransitionObservation, ...] = ()


@dataclass(frozen=True)
class Segment:
    """
    Maximal interval ``[start, end)`` of constant continuous evidence.

    ``boundary_points`` and ``boundary_transitions`` are observed at ``end``;
    ``opening_points`` only appear on the first segment, for observations at
    the horizon start.
    """

    start: float
    end: float
    active: Dict[str, str] = field(default_factory=dict)
    boundary_points: Dict[str, str] = field(default_factory=dict)
    boundary_transitions: Tuple[TransitionObservation, ...] = ()
    opening_points: Dict[str, str] = field(default_factory=dict)

    @property
    def length(self) -> float:
        return self.end - self.start

    def covers(self, time: float) -> bool:
        return self.start <= time < self.end


def check_evidence(
    evidence: EvidenceTimeline, model: Optional[CtbnModel] = None
) -> None:
    """Raises ``EvidenceError`` when ``evidence`` breaks its invariants."""
    t_start, t_end = evidence.horizon
    if not t_start < t_end:
        raise EvidenceError(f"empty horizon [{t_start}, {t_end}]")

    for interval in evidence.intervals:
        if not interval.start < interval.end:
            raise EvidenceError(
                f"interval {interval.variable}={interval.value} has "
                f"start {interval.start} >= end {interval.end}"
            )
        if interval.start < t_start or interval.end > t_end:
            raise EvidenceError(
                f"interval {interval.variable}={interval.value} "
                f"[{interval.start}, {interval.end}) leaves the horizon"
            )
    for point in evidence.points:
        if not t_start <= point.time <= t_end:
            raise EvidenceError(
                f"point {point.variable}={point.value} at {point.time} "
                "is outside the horizon"
            )
    for transition in evidence.transitions:
        if not t_start < transition.time <= t_end:
            raise EvidenceError(
                f"transition of {transition.variable} at {transition.time} "
                "must lie in (t_start, t_end]"
            )
        if transition.from_value == transition.to_value:
            raise EvidenceError(
                f"transition of {transition.variable} at {transition.time} "
                "does not change the value"
            )

    for first, second in itertools.combinations(evidence.intervals, 2):
        if (
            first.variable == second.variable
            and first.value != second.value
            and first.start < second.end
            and second.start < first.end
        ):
            raise EvidenceError(
                f"overlapping intervals disagree on {first.variable}: "
                f"{first.value} vs {second.value}"
            )

    if model is not None:
        observed = (
            [(o.variable, o.value) for o in evidence.intervals]
            + [(o.variable, o.value) for o in evidence.points]
            + [(o.variable, o.from_value) for o in evidence.transitions]
            + [(o.variable, o.to_value) for o in evidence.transitions]
        )
        for name, value in observed:
            try:
                model.variable(name).index(value)
            except ScopeError as err:
                raise EvidenceError(str(err))


def _points_at(
    evidence: EvidenceTimeline, time: float
) -> Dict[str, str]:
    points: Dict[str, str] = {}
    for point in evidence.points:
        if point.time != time:
            continue
        if points.get(point.variable, point.value) != point.value:
            raise EvidenceError(
                f"contradictory point observations of {point.variable} at "
                f"{time}: {points[point.variable]} vs {point.value}"
            )
        points[point.variable] = point.value

    return points


def _boundary(
    time: float,
    left: Mapping[str, str],
    right: Mapping[str, str],
    points: Dict[str, str],
    transitions: List[TransitionObservation],
) -> Tuple[Dict[str, str], Tuple[TransitionObservation, ...]]:
    """
    Resolves the observations at one distinguished time point into point
    values (right limits) and observed transitions, adding implied
    transitions where the pinned value changes across the boundary.
    """
    explicit = {}
    for transition in transitions:
        if transition.variable in explicit:
            raise EvidenceError(
                f"two transitions of {transition.variable} at {time}"
            )
        explicit[transition.variable] = transition

    resolved = []
    for name, transition in explicit.items():
        if left.get(name, transition.from_value) != transition.from_value:
            raise EvidenceError(
                f"transition of {name} at {time} starts from "
                f"{transition.from_value} but {left[name]} is observed"
            )
        for after in (points.get(name), right.get(name)):
            if after is not None and after != transition.to_value:
                raise EvidenceError(
                    f"transition of {name} at {time} ends in "
                    f"{transition.to_value} but {after} is observed"
                )
        points.pop(name, None)
        resolved.append(transition)

    for name in sorted(set(left) | set(points) | set(right)):
        if name in explicit:
            continue
        after = points.get(name)
        if after is not None and right.get(name, after) != after:
            raise EvidenceError(
                f"point {name}={after} at {time} contradicts the interval "
                f"{name}={right[name]} starting there"
            )
        after = after if after is not None else right.get(name)
        before = left.get(name)
        if before is not None and after is not None and before != after:
            logging.debug(f"Implied transition of {name} at {time}")
            resolved.append(
                TransitionObservation(name, before, after, time)
            )
            points.pop(name, None)

    return points, tuple(resolved)


def partition_evidence(
    evidence: EvidenceTimeline, model: Optional[CtbnModel] = None
) -> List[Segment]:
    """
    Splits the horizon into segments of constant continuous evidence.

    The distinguished time points are the horizon ends plus every interval
    endpoint and observation time. Point and transition observations attach
    to the segment ending at their time.
    """
    check_evidence(evidence, model)
    t_start, t_end = evidence.horizon
    times = {t_start, t_end}
    times.update(o.start for o in evidence.intervals)
    times.update(o.end for o in evidence.intervals)
    times.update(o.time for o in evidence.points)
    times.update(o.time for o in evidence.transitions)
    times = sorted(times)

    actives = []
    for start, end in zip(times[:-1], times[1:]):
        actives.append(
            {
                o.variable: o.value
                for o in evidence.intervals
                if o.start <= start and end <= o.end
            }
        )

    opening = _points_at(evidence, t_start)
    for name, value in opening.items():
        if actives[0].get(name, value) != value:
            raise EvidenceError(
                f"point {name}={value} at {t_start} contradicts the interval "
                f"{name}={actives[0][name]} starting there"
            )

    segments = []
    for position, (start, end) in enumerate(zip(times[:-1], times[1:])):
        right = actives[position + 1] if position + 1 < len(actives) else {}
        points, transitions = _boundary(
            end,
            actives[position],
            right,
            _points_at(evidence, end),
            [o for o in evidence.transitions if o.time == end],
        )
        segments.append(
            Segment(
                start=start,
                end=end,
                active=actives[position],
                boundary_points=points,
                boundary_transitions=transitions,
                opening_points=opening if position == 0 else {},
            )
        )

    logging.debug(f"Evidence partitioned into {len(segments)} segment(s)")
    return segments


def refine_segments(
    segments: Sequence[Segment],
    pieces: Optional[int] = None,
    max_length: Optional[float] = None,
) -> List[Segment]:
    """
    Splits every segment into evenly spaced pieces with the same active
    evidence; boundary observations stay on the last piece.
    """
    if pieces is not None and pieces < 1:
        raise ValueError("pieces must be at least 1")
    if max_length is not None and max_length <= 0:
        raise ValueError("max_length must be positive")

    refined = []
    for segment in segments:
        count = pieces or 1
        if max_length is not None:
            count = max(count, int(np.ceil(segment.length / max_length)))
        cuts = np.linspace(segment.start, segment.end, count + 1)
        cuts[-1] = segment.end
        for index in range(count):
            last = index == count - 1
            refined.append(
                replace(
                    segment,
                    start=float(cuts[index]),
                    end=float(cuts[index + 1]),
                    boundary_points=segment.boundary_points if last else {},
                    boundary_transitions=(
                        segment.boundary_transitions if last else ()
                    ),
                    opening_points=(
                        segment.opening_points if index == 0 else {}
                    ),
                )
            )

    return refined
