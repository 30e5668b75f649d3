# SPDX-FileCopyrightText: 2022 VMware Inc
#
# SPDX-License-Identifier: MIT

"""
Factor algebra over (possibly reduced) intensity matrices.

Factor product is addition of intensity matrices and factor division is
subtraction, once both operands are embedded over a common scope.
"""

import logging
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
from scipy.linalg import expm

from ctbn_ep.config import config
from ctbn_ep.errors import (
    ImpossibleEvidenceError,
    IncompatibleEvidenceError,
    ScopeError,
)
from ctbn_ep.model import (
    CtbnModel,
    Variable,
    consistent_states,
    joint_assignments,
    joint_index,
    state_count,
)

Scope = Tuple[Variable, ...]


def scope_names(scope: Sequence[Variable]) -> Tuple[str, ...]:
    return tuple(v.name for v in scope)


def sub_scope(scope: Sequence[Variable], names: Iterable[str]) -> Scope:
    """Members of ``scope`` named in ``names``, keeping the scope order."""
    wanted = set(names)
    if missing := wanted - set(scope_names(scope)):
        raise ScopeError(
            f"{', '.join(sorted(missing))} not in scope "
            f"({', '.join(scope_names(scope))})"
        )

    return tuple(v for v in scope if v.name in wanted)


def merge_scopes(*scopes: Sequence[Variable]) -> Scope:
    """
    Union of declaration-ordered scopes.

    The relative order inside each scope is kept; variables whose order is
    not fixed by any input scope keep their order of first appearance.
    """
    order = nx.DiGraph()
    seen = []
    for scope in scopes:
        for variable in scope:
            if variable not in seen:
                seen.append(variable)
            order.add_node(variable)
        order.add_edges_from(zip(scope[:-1], scope[1:]))

    return tuple(
        nx.lexicographical_topological_sort(order, key=seen.index)
    )


def project_states(
    scope: Sequence[Variable],
    target: Sequence[Variable],
    states: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    Maps joint states of ``scope`` (all of them, or ``states``) to the
    joint index of their projection onto ``target``.
    """
    rows = joint_assignments(scope)
    if states is not None:
        rows = rows[np.asarray(states, dtype=np.int64)]
    positions = [list(scope).index(v) for v in target]
    return joint_index(target, rows[:, positions])


@dataclass(frozen=True, eq=False)
class IntensityFactor:
    """
    Dense rate matrix over the ``retained`` joint states of ``scope``.

    ``absorbing`` factors carry one extra trailing state (the exit state)
    that is not part of ``retained``.
    """

    scope: Scope
    retained: np.ndarray
    matrix: np.ndarray
    absorbing: bool = False

    @classmethod
    def full(cls, scope: Sequence[Variable], matrix) -> "IntensityFactor":
        scope = tuple(scope)
        return cls(
            scope,
            np.arange(state_count(scope)),
            np.asarray(matrix, dtype=float),
        )

    @classmethod
    def zeros(
        cls,
        scope: Sequence[Variable],
        retained: Optional[np.ndarray] = None,
    ) -> "IntensityFactor":
        scope = tuple(scope)
        if retained is None:
            retained = np.arange(state_count(scope))
        retained = np.asarray(retained, dtype=np.int64)
        return cls(scope, retained, np.zeros((len(retained), len(retained))))

    @property
    def names(self) -> Tuple[str, ...]:
        return scope_names(self.scope)

    @property
    def size(self) -> int:
        return len(self.retained)

    @property
    def is_reduced(self) -> bool:
        return self.size < state_count(self.scope)

    def row_sums(self) -> np.ndarray:
        return self.matrix.sum(axis=1)

    def is_valid(self, tol: Optional[float] = None) -> bool:
        """Off-diagonal entries are non-negative and rows sum to <= tol."""
        tol = config.VALIDATION_TOL if tol is None else tol
        off_diagonal = self.matrix - np.diag(np.diag(self.matrix))
        return bool(
            np.all(off_diagonal >= -tol) and np.all(self.row_sums() <= tol)
        )


@dataclass(frozen=True, eq=False)
class PointDistribution:
    """Vector over the ``retained`` joint states of ``scope``."""

    scope: Scope
    retained: np.ndarray
    probs: np.ndarray

    @classmethod
    def full(cls, scope: Sequence[Variable], probs) -> "PointDistribution":
        scope = tuple(scope)
        return cls(
            scope,
            np.arange(state_count(scope)),
            np.asarray(probs, dtype=float),
        )

    @classmethod
    def uniform(cls, scope: Sequence[Variable]) -> "PointDistribution":
        count = state_count(scope)
        return cls.full(scope, np.full(count, 1.0 / count))

    @property
    def names(self) -> Tuple[str, ...]:
        return scope_names(self.scope)

    @property
    def mass(self) -> float:
        return float(self.probs.sum())

    def normalized(self, floor: Optional[float] = None) -> "PointDistribution":
        floor = config.IMPOSSIBLE_MASS if floor is None else floor
        mass = self.mass
        if not mass > floor:
            raise ImpossibleEvidenceError(
                f"evidence has zero probability (mass {mass:.3g}) over "
                f"({', '.join(self.names)})"
            )

        return PointDistribution(self.scope, self.retained, self.probs / mass)

    def expand(self) -> "PointDistribution":
        """Scatters the vector over every joint state, zeros elsewhere."""
        probs = np.zeros(state_count(self.scope))
        probs[self.retained] = self.probs
        return PointDistribution.full(self.scope, probs)

    def restrict(self, retained: np.ndarray) -> "PointDistribution":
        """Entries of ``retained`` states; states not carried here are 0."""
        retained = np.asarray(retained, dtype=np.int64)
        return PointDistribution(
            self.scope, retained, self.expand().probs[retained]
        )

    def condition(self, evidence: Mapping[str, str]) -> "PointDistribution":
        """Zeroes the states inconsistent with ``evidence`` (unnormalized)."""
        relevant = {k: v for k, v in evidence.items() if k in self.names}
        full = self.expand()
        keep = consistent_states(self.scope, relevant)
        probs = np.zeros_like(full.probs)
        probs[keep] = full.probs[keep]
        return PointDistribution(
            self.scope, self.retained, probs[self.retained]
        )

    def relabel(
        self, variable: str, from_value: str, to_value: str
    ) -> "PointDistribution":
        """
        Conditions on ``variable = from_value`` and moves that mass to the
        same joint state with ``variable = to_value``.
        """
        position = self.names.index(variable)
        target = self.scope[position]
        source_index = target.index(from_value)
        target_index = target.index(to_value)

        full = self.expand()
        rows = joint_assignments(self.scope)
        sources = np.flatnonzero(rows[:, position] == source_index)
        moved = rows[sources].copy()
        moved[:, position] = target_index
        probs = np.zeros_like(full.probs)
        probs[joint_index(self.scope, moved)] = full.probs[sources]
        return PointDistribution.full(self.scope, probs)

    def marginalize(self, names: Iterable[str]) -> "PointDistribution":
        """Sums onto ``names``; the result spans every joint state."""
        target = sub_scope(self.scope, names)
        projection = project_states(self.scope, target, self.retained)
        probs = np.bincount(
            projection, weights=self.probs, minlength=state_count(target)
        )
        return PointDistribution.full(target, probs)

    def as_dict(self) -> dict:
        rows = joint_assignments(self.scope)[self.retained]
        return {
            ",".join(
                f"{v.name}={v.states[i]}" for v, i in zip(self.scope, row)
            ): float(p)
            for row, p in zip(rows, self.probs)
        }


def cim_factor(model: CtbnModel, name: str) -> IntensityFactor:
    """The CIM of ``name`` as a factor over its declaration-ordered family."""
    scope = model.family(name)
    cim = model.cims[name]
    subject = scope_names(scope).index(name)
    rows = joint_assignments(scope)
    others = [i for i in range(len(scope)) if i != subject]
    context = joint_index(
        tuple(scope[i] for i in others), rows[:, others]
    )

    matrix = np.zeros((len(rows), len(rows)))
    for key in np.unique(context):
        members = np.flatnonzero(context == key)
        members = members[np.argsort(rows[members, subject])]
        assignment = {
            scope[i].name: scope[i].states[rows[members[0], i]]
            for i in others
        }
        matrix[np.ix_(members, members)] = np.asarray(
            cim.matrix(assignment), dtype=float
        )

    return IntensityFactor.full(scope, matrix)


def _positions(
    factor: IntensityFactor,
    target_scope: Scope,
    retained: np.ndarray,
) -> np.ndarray:
    projection = project_states(target_scope, factor.scope, retained)
    if factor.size == 0 and len(projection) == 0:
        return np.zeros(0, dtype=np.int64)
    positions = np.searchsorted(factor.retained, projection)
    positions = np.minimum(positions, max(factor.size - 1, 0))
    if factor.size == 0 or np.any(factor.retained[positions] != projection):
        raise IncompatibleEvidenceError(
            f"factor over ({', '.join(factor.names)}) does not retain every "
            "requested joint state"
        )

    return positions


def embed(
    factor: IntensityFactor,
    target_scope: Sequence[Variable],
    retained: Optional[np.ndarray] = None,
) -> IntensityFactor:
    """
    Embeds ``factor`` into ``target_scope`` with repeated copies: an entry
    is the factor entry of the projected states when both states agree on
    every other target variable, and zero otherwise.

    ``retained`` defaults to every target state whose projection the factor
    retains.
    """
    target_scope = tuple(target_scope)
    if missing := set(factor.names) - set(scope_names(target_scope)):
        raise ScopeError(
            f"cannot embed ({', '.join(factor.names)}) into "
            f"({', '.join(scope_names(target_scope))}): "
            f"{', '.join(sorted(missing))} missing"
        )

    if retained is None:
        projection = project_states(target_scope, factor.scope)
        retained = np.flatnonzero(np.isin(projection, factor.retained))
    retained = np.asarray(retained, dtype=np.int64)

    positions = _positions(factor, target_scope, retained)
    rest = tuple(v for v in target_scope if v not in factor.scope)
    context = project_states(target_scope, rest, retained)
    same_context = context[:, None] == context[None, :]
    matrix = factor.matrix[np.ix_(positions, positions)] * same_context

    return IntensityFactor(target_scope, retained, matrix)


def _common_retained(
    scope: Scope, first: IntensityFactor, second: IntensityFactor
) -> np.ndarray:
    keep = np.ones(state_count(scope), dtype=bool)
    for factor in (first, second):
        projection = project_states(scope, factor.scope)
        keep &= np.isin(projection, factor.retained)

    retained = np.flatnonzero(keep)
    if len(retained) == 0:
        raise IncompatibleEvidenceError(
            f"({', '.join(first.names)}) and ({', '.join(second.names)}) "
            "retain no common joint state"
        )

    return retained


def amalgamate(
    first: IntensityFactor,
    second: IntensityFactor,
    scope: Optional[Sequence[Variable]] = None,
) -> IntensityFactor:
    """
    Sum of both factors embedded over the union scope, restricted to the
    joint states both of them retain.
    """
    scope = (
        merge_scopes(first.scope, second.scope)
        if scope is None
        else tuple(scope)
    )
    retained = _common_retained(scope, first, second)
    return IntensityFactor(
        scope,
        retained,
        embed(first, scope, retained).matrix
        + embed(second, scope, retained).matrix,
    )


def divide(
    numerator: IntensityFactor, denominator: IntensityFactor
) -> IntensityFactor:
    """
    ``numerator`` minus ``denominator`` embedded over the numerator's
    retained states. No sign constraint is enforced on the result.
    """
    if not set(denominator.names) <= set(numerator.names):
        raise ScopeError(
            f"cannot divide ({', '.join(numerator.names)}) by "
            f"({', '.join(denominator.names)})"
        )

    embedded = embed(denominator, numerator.scope, numerator.retained)
    return IntensityFactor(
        numerator.scope,
        numerator.retained,
        numerator.matrix - embedded.matrix,
    )


def reduce(
    factor: IntensityFactor, evidence: Mapping[str, str]
) -> IntensityFactor:
    """
    Removes the rows and columns of states inconsistent with ``evidence``.
    Rate into removed states stays on the diagonal as exit intensity.
    """
    if missing := set(evidence) - set(factor.names):
        raise ScopeError(
            f"evidence on {', '.join(sorted(missing))} outside "
            f"({', '.join(factor.names)})"
        )
    if not evidence:
        return factor

    consistent = consistent_states(factor.scope, evidence)
    keep = np.flatnonzero(np.isin(factor.retained, consistent))
    if len(keep) == 0:
        raise ImpossibleEvidenceError(
            f"evidence {dict(evidence)} eliminates every state of "
            f"({', '.join(factor.names)})"
        )

    return IntensityFactor(
        factor.scope,
        factor.retained[keep],
        factor.matrix[np.ix_(keep, keep)],
    )


def augment_absorbing(factor: IntensityFactor) -> IntensityFactor:
    """Adds a trailing absorbing state collecting every row deficit."""
    size = factor.size
    matrix = np.zeros((size + 1, size + 1))
    matrix[:size, :size] = factor.matrix
    matrix[:size, size] = np.maximum(-factor.row_sums(), 0.0)
    return IntensityFactor(factor.scope, factor.retained, matrix, True)


def matrix_exponential(factor: IntensityFactor, t: float) -> np.ndarray:
    """exp(Q t) by scaling and squaring."""
    if t < 0:
        raise ValueError(f"duration must be non-negative, got {t}")

    return expm(factor.matrix * t)


def propagate(
    p0: PointDistribution, factor: IntensityFactor, t: float
) -> PointDistribution:
    """
    Row vector ``p0 exp(Q t)``. The result is unnormalized when the factor
    is reduced; its mass is the probability that the evidence survives.
    """
    if p0.names != factor.names or not np.array_equal(
        p0.retained, factor.retained
    ):
        raise ValueError(
            f"distribution over ({', '.join(p0.names)}) with "
            f"{len(p0.retained)} states does not match factor over "
            f"({', '.join(factor.names)}) with {factor.size} states"
        )
    if t == 0:
        return p0

    probs = p0.probs @ matrix_exponential(factor, t)
    logging.debug(
        f"Propagated ({', '.join(p0.names)}) over {t}: mass "
        f"{p0.mass:.6g} -> {probs.sum():.6g}"
    )
    return PointDistribution(p0.scope, p0.retained, np.maximum(probs, 0.0))
