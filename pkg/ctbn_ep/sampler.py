# SPDX-FileCopyrightText: 2022 VMware Inc
#
# SPDX-License-Identifier: MIT

"""
Forward sampling of CTBN trajectories and their empirical statistics.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from ctbn_ep.algebra import Scope
from ctbn_ep.model import (
    CtbnModel,
    Trajectory,
    Transition,
    Variable,
    consistent_states,
    joint_index,
    state_count,
)
from ctbn_ep.suffstats import SuffStats

RNG_ALGORITHM = "PCG64"


def _sample_initial(
    model: CtbnModel, rng: np.random.Generator
) -> Dict[str, str]:
    order = {name: i for i, name in enumerate(model.names)}
    dag = model.initial.graph(model.names)
    state: Dict[str, str] = {}
    for name in nx.lexicographical_topological_sort(dag, key=order.get):
        variable = model.variable(name)
        cpt = model.initial.cpts[name]
        probs = np.asarray(cpt.table[tuple(state[p] for p in cpt.parents)])
        state[name] = variable.states[rng.choice(len(probs), p=probs)]

    return state


def _children(model: CtbnModel) -> Dict[str, List[str]]:
    return {
        name: [c for c in model.names if name in model.cims[c].parents]
        for name in model.names
    }


def sample_trajectory(
    model: CtbnModel,
    t_end: float,
    seed: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
    t_start: float = 0.0,
) -> Trajectory:
    """
    Competing exponential clocks, one per variable at the rate of its
    current state under the current parent values. The variable whose
    clock fires first jumps; its clock and its children's are redrawn.
    """
    if not t_end > t_start:
        raise ValueError(f"t_end must exceed {t_start}, got {t_end}")
    rng = np.random.default_rng(seed) if rng is None else rng
    children = _children(model)

    state = _sample_initial(model, rng)
    initial = dict(state)

    def draw(name: str, now: float) -> float:
        variable = model.variable(name)
        matrix = np.asarray(model.cims[name].matrix(state), dtype=float)
        current = variable.index(state[name])
        rate = -matrix[current, current]
        if rate <= 0:
            return np.inf
        return now + rng.exponential(1.0 / rate)

    clocks = {name: draw(name, t_start) for name in model.names}
    transitions = []
    while True:
        name = min(model.names, key=lambda n: clocks[n])
        now = clocks[name]
        if now >= t_end:
            break

        variable = model.variable(name)
        matrix = np.asarray(model.cims[name].matrix(state), dtype=float)
        row = matrix[variable.index(state[name])].copy()
        source = variable.index(state[name])
        rate = -row[source]
        row[source] = 0.0
        target = rng.choice(variable.cardinality, p=row / rate)
        state[name] = variable.states[target]
        transitions.append(Transition(float(now), name, state[name]))

        for redraw in [name] + children[name]:
            clocks[redraw] = draw(redraw, now)

    return Trajectory(t_start, t_end, initial, tuple(transitions))


def sample_trajectories(
    model: CtbnModel, n: int, t_end: float, seed: Optional[int] = None
) -> List[Trajectory]:
    """``n`` trajectories from one PCG64 generator seeded with ``seed``."""
    if n < 1:
        raise ValueError("at least one trajectory must be sampled")

    rng = np.random.default_rng(seed)
    trajectories = [sample_trajectory(model, t_end, rng=rng) for _ in range(n)]
    logging.debug(
        f"Sampled {n} trajectories on [0, {t_end}] with seed {seed}: "
        f"{sum(len(t.transitions) for t in trajectories)} transitions"
    )
    return trajectories


@dataclass(frozen=True, eq=False)
class EmpiricalStats:
    """Sample statistics and their standard errors."""

    stats: SuffStats
    time_error: np.ndarray
    transitions_error: np.ndarray
    exit_error: np.ndarray
    count: int


def _single(
    trajectory: Trajectory,
    scope: Scope,
    interval: Tuple[float, float],
    censor: Mapping[str, str],
) -> Optional[Tuple[np.ndarray, np.ndarray, np.ndarray]]:
    size = state_count(scope)
    time = np.zeros(size)
    transitions = np.zeros((size, size))
    exits = np.zeros(size)
    t1, t2 = interval

    def index(state: Mapping[str, str]) -> int:
        row = [[v.index(state[v.name]) for v in scope]]
        return int(joint_index(scope, np.asarray(row))[0])

    state = trajectory.state_at(t1)
    if any(state[k] != v for k, v in censor.items()):
        return None

    clock = t1
    names = {v.name for v in scope}
    for transition in trajectory.transitions:
        if transition.time <= t1:
            continue
        if transition.time >= t2:
            break

        current = index(state)
        time[current] += transition.time - clock
        clock = transition.time
        if (
            transition.variable in censor
            and transition.state != censor[transition.variable]
        ):
            exits[current] += 1
            return time, transitions, exits

        state = dict(state)
        state[transition.variable] = transition.state
        if transition.variable in names:
            transitions[current, index(state)] += 1

    time[index(state)] += t2 - clock
    return time, transitions, exits


def empirical_suff_stats(
    trajectories: Sequence[Trajectory],
    scope: Sequence[Variable],
    interval: Tuple[float, float],
    censor: Optional[Mapping[str, str]] = None,
) -> EmpiricalStats:
    """
    Average occupancy times and transition counts over the joint states of
    ``scope`` within ``interval``.

    With ``censor``, trajectories whose state at the interval start breaks
    the censoring values are skipped, and the others stop at their first
    departure from them, counted as an exit. Statistics are then scaled so
    occupancy sums to the interval length, with delta-method errors for
    the ratio.
    """
    if len(trajectories) == 0:
        raise ValueError("no trajectories given")
    scope = tuple(scope)
    censor = dict(censor or {})
    length = interval[1] - interval[0]

    samples = [
        s
        for s in (_single(t, scope, interval, censor) for t in trajectories)
        if s is not None
    ]
    if not samples:
        raise ValueError("no trajectory starts consistent with the censor")
    count = len(samples)

    times = np.stack([s[0] for s in samples])
    transitions = np.stack([s[1] for s in samples])
    exits = np.stack([s[2] for s in samples])
    kept = times.sum(axis=1)
    mean_kept = kept.mean()
    ratio = length / mean_kept

    def estimate(values: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        flat = values.reshape(count, -1)
        mean = flat.mean(axis=0)
        scaled = mean * ratio
        residual = flat - np.outer(kept, mean / mean_kept)
        spread = residual.std(axis=0, ddof=1) if count > 1 else 0 * mean
        error = spread * ratio / np.sqrt(count)
        shape = values.shape[1:]
        return scaled.reshape(shape), np.asarray(error).reshape(shape)

    time, time_error = estimate(times)
    moves, moves_error = estimate(transitions)
    leaving, leaving_error = estimate(exits)

    names = {x.name for x in scope}
    retained = consistent_states(
        scope, {k: v for k, v in censor.items() if k in names}
    )
    stats = SuffStats(
        scope=scope,
        retained=retained,
        expected_time=time[retained],
        expected_transitions=moves[np.ix_(retained, retained)],
        expected_exit=leaving[retained],
        interval_length=length,
        survival=float(np.mean(exits.sum(axis=1) == 0)),
        normalizer=ratio,
    )
    return EmpiricalStats(
        stats=stats,
        time_error=time_error[retained],
        transitions_error=moves_error[np.ix_(retained, retained)],
        exit_error=leaving_error[retained],
        count=count,
    )
