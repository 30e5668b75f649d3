# SPDX-FileCopyrightText: 2022 VMware Inc
#
# SPDX-License-Identifier: MIT

"""
Expected sufficient statistics of an intensity factor over an interval and
the moment-matching projection built on them.
"""

import logging
from dataclasses import dataclass, replace
from typing import Iterable, Optional, Tuple

import numpy as np
from scipy.integrate import simpson, solve_ivp

from ctbn_ep.algebra import (
    IntensityFactor,
    PointDistribution,
    Scope,
    augment_absorbing,
    matrix_exponential,
    project_states,
    scope_names,
    sub_scope,
)
from ctbn_ep.config import config
from ctbn_ep.errors import ImpossibleEvidenceError, ProjectionError

# sample points inserted per accepted solver step for the fine quadrature
FINE_SUBDIVISIONS = 4


@dataclass(frozen=True, eq=False)
class SuffStats:
    """
    Normalized expected statistics over the ``retained`` states of
    ``scope``. ``normalizer`` is the constant c that scales the raw
    integrals so occupancy sums to ``interval_length``.
    """

    scope: Scope
    retained: np.ndarray
    expected_time: np.ndarray
    expected_transitions: np.ndarray
    expected_exit: np.ndarray
    interval_length: float
    survival: float = 1.0
    normalizer: float = 1.0
    absorbed_time: float = 0.0
    error_estimate: float = 0.0

    @property
    def names(self) -> Tuple[str, ...]:
        return scope_names(self.scope)

    @property
    def expected_departures(self) -> np.ndarray:
        """E[M[v]]: transitions out of each state, exits included."""
        return self.expected_transitions.sum(axis=1) + self.expected_exit

    def unnormalized(self) -> "SuffStats":
        return replace(
            self,
            expected_time=self.expected_time / self.normalizer,
            expected_transitions=self.expected_transitions / self.normalizer,
            expected_exit=self.expected_exit / self.normalizer,
            normalizer=1.0,
        )


def _quadrature(times: np.ndarray, values: np.ndarray) -> np.ndarray:
    if len(times) < 2:
        return np.zeros(values.shape[0])

    return simpson(values, x=times, axis=1)


def _refine(times: np.ndarray, pieces: int) -> np.ndarray:
    steps = np.diff(times)
    offsets = np.arange(pieces) / pieces
    grid = (times[:-1, None] + steps[:, None] * offsets[None, :]).ravel()
    return np.append(grid, times[-1])


def expected_suff_stats(
    factor: IntensityFactor,
    p0: PointDistribution,
    interval: Tuple[float, float],
    rtol: Optional[float] = None,
    atol: Optional[float] = None,
) -> SuffStats:
    """
    Expected occupancy times and transition counts of ``factor`` started
    from ``p0`` over ``interval``.

    The factor is augmented with an absorbing exit state, whose rows sum to
    zero, so the backward weights are identically one and the statistics
    are integrals of the forward distribution alone. Exit counts are the
    rate into the exit state times the occupancy of each state.
    """
    rtol = config.RK_RTOL if rtol is None else rtol
    atol = config.RK_ATOL if atol is None else atol
    t1, t2 = interval
    length = t2 - t1
    if not length > 0:
        raise ValueError(f"interval [{t1}, {t2}) is empty")
    if len(p0.probs) != factor.size:
        raise ValueError(
            f"initial distribution has {len(p0.probs)} states, factor "
            f"has {factor.size}"
        )

    augmented = augment_absorbing(factor).matrix
    size = factor.size
    alpha0 = np.append(p0.probs, 0.0)

    q_max = float(np.max(-np.diag(augmented), initial=0.0))
    first_step = length
    if q_max > 0:
        first_step = min(length, config.RK_INITIAL_STEP_FACTOR / q_max)

    solution = solve_ivp(
        lambda _, alpha: alpha @ augmented,
        (0.0, length),
        alpha0,
        method="RK45",
        rtol=rtol,
        atol=atol,
        first_step=first_step,
        dense_output=True,
    )
    if not solution.success:
        raise RuntimeError(f"integration failed: {solution.message}")
    logging.debug(
        f"RK45 over ({', '.join(factor.names)}) took {len(solution.t) - 1} "
        f"steps, {solution.nfev} evaluations"
    )

    coarse_grid = _refine(solution.t, 2)
    fine_grid = _refine(solution.t, FINE_SUBDIVISIONS)
    occupancy = _quadrature(fine_grid, solution.sol(fine_grid))
    coarse = _quadrature(coarse_grid, solution.sol(coarse_grid))
    occupancy = np.maximum(occupancy, 0.0)

    kept = occupancy[:size].sum()
    if not kept > config.IMPOSSIBLE_MASS:
        raise ImpossibleEvidenceError(
            f"all mass of ({', '.join(factor.names)}) is absorbed at the "
            "start of the interval"
        )
    normalizer = length / kept

    rates = augmented[:size, :size] - np.diag(np.diag(augmented[:size, :size]))
    transitions = rates * occupancy[:size, None]
    exits = augmented[:size, size] * occupancy[:size]

    survival = float(
        (p0.probs @ matrix_exponential(factor, length)).sum()
    )
    scale = max(
        float(np.max(occupancy[:size], initial=0.0)),
        float(np.max(transitions, initial=0.0)),
        float(np.max(exits, initial=0.0)),
    )
    error = (
        float(np.max(np.abs(occupancy - coarse)))
        * max(float(np.max(np.abs(augmented))), 1.0)
        + 10 * rtol * scale
    ) * normalizer

    return SuffStats(
        scope=factor.scope,
        retained=factor.retained,
        expected_time=occupancy[:size] * normalizer,
        expected_transitions=transitions * normalizer,
        expected_exit=exits * normalizer,
        interval_length=length,
        survival=survival,
        normalizer=normalizer,
        absorbed_time=float(occupancy[size]),
        error_estimate=error,
    )


def aggregate_stats(stats: SuffStats, target: Iterable[str]) -> SuffStats:
    """
    Sums statistics onto the projections to ``target``. Transitions between
    states with the same projection are dropped.
    """
    target = tuple(target)
    if len(target) == 0:
        raise ValueError("aggregation target must not be empty")
    target_scope = sub_scope(stats.scope, target)

    projection = project_states(stats.scope, target_scope, stats.retained)
    retained, positions = np.unique(projection, return_inverse=True)
    positions = positions.ravel()
    size = len(retained)

    time = np.bincount(positions, weights=stats.expected_time, minlength=size)
    exits = np.bincount(
        positions, weights=stats.expected_exit, minlength=size
    )
    crossing = positions[:, None] != positions[None, :]
    transitions = np.zeros((size, size))
    np.add.at(
        transitions,
        (positions[:, None], positions[None, :]),
        stats.expected_transitions * crossing,
    )

    return replace(
        stats,
        scope=target_scope,
        retained=retained,
        expected_time=time,
        expected_transitions=transitions,
        expected_exit=exits,
    )


def moment_match(stats: SuffStats) -> IntensityFactor:
    """
    Maximum-likelihood intensity matrix for the statistics: q_v is
    E[M[v]] / E[T[v]] and each off-diagonal entry is E[M[v, v']] / E[T[v]].
    Exits leave the matching negative row deficit.
    """
    departures = stats.expected_departures
    time = stats.expected_time
    idle = time <= 0
    if np.any(idle & (departures > 0)):
        state = int(np.flatnonzero(idle & (departures > 0))[0])
        raise ProjectionError(
            f"state {stats.retained[state]} of ({', '.join(stats.names)}) "
            "has expected transitions but no expected occupancy"
        )

    safe_time = np.where(idle, 1.0, time)
    matrix = stats.expected_transitions / safe_time[:, None]
    matrix[idle] = 0.0
    np.fill_diagonal(matrix, 0.0)
    np.fill_diagonal(matrix, -np.where(idle, 0.0, departures / safe_time))

    return IntensityFactor(stats.scope, stats.retained, matrix)


def approx_marginalize(
    factor: IntensityFactor,
    p0: PointDistribution,
    interval: Tuple[float, float],
    target: Iterable[str],
    rtol: Optional[float] = None,
) -> IntensityFactor:
    """Projects ``factor`` onto ``target`` by matching expected statistics."""
    stats = expected_suff_stats(factor, p0, interval, rtol=rtol)
    return moment_match(aggregate_stats(stats, target))
