# SPDX-FileCopyrightText: 2022 VMware Inc
#
# SPDX-License-Identifier: MIT

"""
JSON documents: models, evidence, queries, topologies, trajectory dumps
and reports.
"""

import json
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ctbn_ep.config import config
from ctbn_ep.errors import EvidenceError, ModelValidationError, Violation
from ctbn_ep.model import (
    Cim,
    Cpt,
    CtbnModel,
    EvidenceTimeline,
    InitialNetwork,
    IntervalObservation,
    PointObservation,
    Trajectory,
    Transition,
    TransitionObservation,
    Variable,
    format_instantiation,
    validate_model,
)
from ctbn_ep.sampler import RNG_ALGORITHM

QUERY_KINDS = ("marginal", "expected-statistics", "evidence-likelihood")


def load_json(path: str) -> Dict[str, Any]:
    with open(path, "r") as file_object:
        return json.load(file_object)


def _parse_label(
    label: str, parents: Sequence[str], location: str
) -> Tuple[Optional[Tuple[str, ...]], List[Violation]]:
    assignment = {}
    for part in filter(None, (p.strip() for p in label.split(","))):
        name, _, value = part.partition("=")
        assignment[name.strip()] = value.strip()

    unknown = sorted(set(assignment) - set(parents))
    missing = sorted(set(parents) - set(assignment))
    if unknown or missing:
        details = []
        if unknown:
            details.append(f"unknown parent(s) {', '.join(unknown)}")
        if missing:
            details.append(f"missing parent(s) {', '.join(missing)}")
        return None, [
            Violation("dangling", f"{location} | {label}", "; ".join(details))
        ]

    return tuple(assignment[p] for p in parents), []


def model_from_dict(document: Dict[str, Any]) -> CtbnModel:
    """
    Builds and validates a model. Every problem found is reported in one
    ``ModelValidationError``.
    """
    try:
        variables = tuple(
            Variable(str(v["name"]), tuple(str(s) for s in v["states"]))
            for v in document["variables"]
        )
        edges = tuple((str(p), str(c)) for p, c in document.get("edges", []))
        cim_documents = document["cims"]
        initial_document = document["initial"]
        initial_edges = tuple(
            (str(p), str(c)) for p, c in initial_document.get("edges", [])
        )
        cpt_documents = initial_document["cpts"]
    except (KeyError, TypeError, ValueError) as err:
        raise ModelValidationError(
            [Violation("schema", "model", f"malformed document: {err}")]
        )

    names = [v.name for v in variables]
    violations: List[Violation] = []

    def parents_of(child: str, links) -> Tuple[str, ...]:
        sources = {p for p, c in links if c == child}
        return tuple(n for n in names if n in sources) + tuple(
            sorted(sources - set(names))
        )

    cims = {}
    for subject, table in cim_documents.items():
        parents = parents_of(subject, edges)
        matrices = {}
        for label, rows in table.items():
            key, problems = _parse_label(label, parents, f"cim {subject}")
            violations.extend(problems)
            if key is not None:
                matrices[key] = np.asarray(rows, dtype=float)
        cims[subject] = Cim(subject, parents, matrices)

    cpts = {}
    for subject, table in cpt_documents.items():
        parents = parents_of(subject, initial_edges)
        rows = {}
        for label, probs in table.items():
            key, problems = _parse_label(label, parents, f"cpt {subject}")
            violations.extend(problems)
            if key is not None:
                rows[key] = np.asarray(probs, dtype=float)
        cpts[subject] = Cpt(subject, parents, rows)

    model = CtbnModel(
        variables=variables,
        edges=edges,
        cims=cims,
        initial=InitialNetwork(initial_edges, cpts),
    )
    try:
        validate_model(model)
    except ModelValidationError as err:
        violations.extend(err.violations)
    if violations:
        raise ModelValidationError(violations)

    return model


def model_to_dict(model: CtbnModel) -> Dict[str, Any]:
    return {
        "variables": [
            {"name": v.name, "states": list(v.states)} for v in model.variables
        ],
        "edges": [list(e) for e in model.edges],
        "cims": {
            name: {
                format_instantiation(cim.parents, key): np.asarray(m).tolist()
                for key, m in cim.matrices.items()
            }
            for name, cim in model.cims.items()
        },
        "initial": {
            "edges": [list(e) for e in model.initial.edges],
            "cpts": {
                name: {
                    format_instantiation(cpt.parents, key): np.asarray(
                        p
                    ).tolist()
                    for key, p in cpt.table.items()
                }
                for name, cpt in model.initial.cpts.items()
            },
        },
    }


def evidence_from_dict(document: Dict[str, Any]) -> EvidenceTimeline:
    try:
        t_start, t_end = (float(t) for t in document["horizon"])
        intervals = tuple(
            IntervalObservation(
                str(o["var"]),
                str(o["value"]),
                float(o["from"]),
                float(o["to"]),
            )
            for o in document.get("intervals", [])
        )
        points = tuple(
            PointObservation(str(o["var"]), str(o["value"]), float(o["t"]))
            for o in document.get("points", [])
        )
        transitions = tuple(
            TransitionObservation(
                str(o["var"]),
                str(o["from_value"]),
                str(o["to_value"]),
                float(o["t"]),
            )
            for o in document.get("transitions", [])
        )
    except (KeyError, TypeError, ValueError) as err:
        raise EvidenceError(f"malformed evidence document: {err}")

    return EvidenceTimeline((t_start, t_end), intervals, points, transitions)


def evidence_to_dict(evidence: EvidenceTimeline) -> Dict[str, Any]:
    return {
        "horizon": list(evidence.horizon),
        "intervals": [
            {"var": o.variable, "value": o.value, "from": o.start, "to": o.end}
            for o in evidence.intervals
        ],
        "points": [
            {"var": o.variable, "value": o.value, "t": o.time}
            for o in evidence.points
        ],
        "transitions": [
            {
                "var": o.variable,
                "from_value": o.from_value,
                "to_value": o.to_value,
                "t": o.time,
            }
            for o in evidence.transitions
        ],
    }


@dataclass(frozen=True)
class QuerySpec:
    kind: str
    variables: Tuple[str, ...]
    times: Tuple[float, ...]

    def check(self, model: CtbnModel, evidence: EvidenceTimeline) -> None:
        model.ordered(self.variables)
        t_start, t_end = evidence.horizon
        for t in self.times:
            if not t_start <= t <= t_end:
                raise ValueError(
                    f"probe time {t} outside horizon [{t_start}, {t_end}]"
                )


def probe_times(count: int, start: float, end: float) -> Tuple[float, ...]:
    """``count`` evenly spaced times from ``start`` to ``end`` inclusive."""
    if count < 1:
        raise ValueError("probe count must be at least 1")

    return tuple(float(t) for t in np.linspace(start, end, count))


def query_from_dict(document: Dict[str, Any]) -> QuerySpec:
    kind = document.get("kind", "marginal")
    if kind not in QUERY_KINDS:
        raise ValueError(
            f"Invalid query kind {kind}. Supported kinds "
            f"{', '.join(QUERY_KINDS)}"
        )

    times = document.get("times", [])
    if isinstance(times, dict):
        times = probe_times(
            int(times["count"]), float(times["start"]), float(times["end"])
        )
    return QuerySpec(
        kind=kind,
        variables=tuple(document.get("variables", [])),
        times=tuple(float(t) for t in times),
    )


def trajectories_to_dict(
    trajectories: Sequence[Trajectory], seed: Optional[int]
) -> Dict[str, Any]:
    return {
        "rng": RNG_ALGORITHM,
        "seed": seed,
        "trajectories": [
            {
                "start": t.start_time,
                "end": t.end_time,
                "initial": dict(t.initial_state),
                "transitions": [
                    {"t": x.time, "var": x.variable, "to": x.state}
                    for x in t.transitions
                ],
            }
            for t in trajectories
        ],
    }


def trajectories_from_dict(document: Dict[str, Any]) -> List[Trajectory]:
    return [
        Trajectory(
            float(t["start"]),
            float(t["end"]),
            dict(t["initial"]),
            tuple(
                Transition(float(x["t"]), str(x["var"]), str(x["to"]))
                for x in t["transitions"]
            ),
        )
        for t in document["trajectories"]
    ]


def _rounded(value: Any, digits: int) -> Any:
    if isinstance(value, dict):
        return {k: _rounded(v, digits) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_rounded(v, digits) for v in value]
    if isinstance(value, np.ndarray):
        return _rounded(value.tolist(), digits)
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (float, np.floating)):
        if not np.isfinite(value):
            return str(value)
        return float(f"{float(value):.{digits}g}")
    if isinstance(value, np.integer):
        return int(value)

    return value


def _text_lines(value: Any, digits: int, prefix: str = "") -> List[str]:
    if isinstance(value, dict):
        lines = []
        width = max((len(str(k)) for k in value), default=0)
        for key, item in value.items():
            if isinstance(item, (dict, list)):
                lines.append(f"{prefix}{key}:")
                lines.extend(_text_lines(item, digits, prefix + "  "))
            else:
                lines.append(
                    f"{prefix}{str(key).ljust(width)}  "
                    f"{_text_value(item, digits)}"
                )
        return lines
    if isinstance(value, list):
        lines = []
        for position, item in enumerate(value):
            if isinstance(item, (dict, list)):
                lines.append(f"{prefix}[{position}]")
                lines.extend(_text_lines(item, digits, prefix + "  "))
            else:
                lines.append(f"{prefix}{_text_value(item, digits)}")
        return lines

    return [f"{prefix}{_text_value(value, digits)}"]


def _text_value(value: Any, digits: int) -> str:
    if isinstance(value, float):
        return f"{value:.{digits}g}"
    return str(value)


def render_report(
    report: Dict[str, Any], fmt: str = "json", digits: Optional[int] = None
) -> str:
    """Deterministic rendering with fixed significant digits."""
    digits = config.REPORT_DIGITS if digits is None else digits
    rounded = _rounded(report, digits)
    if fmt == "json":
        return json.dumps(rounded, indent=2)
    if fmt == "text":
        return "\n".join(_text_lines(rounded, digits))

    raise ValueError(f"Invalid report format {fmt}. Supported json, text")
