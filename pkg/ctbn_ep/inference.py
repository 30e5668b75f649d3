# SPDX-FileCopyrightText: 2022 VMware Inc
#
# SPDX-License-Identifier: MIT

import importlib
import logging
from dataclasses import asdict, dataclass
from typing import Any, Dict, List, Optional, Union

import numpy as np

# the 'service import is used to retrieve sublcasses (Implemented Services)
from ctbn_ep import Dynaconf, engine_settings, services  # noqa
from ctbn_ep.algebra import PointDistribution
from ctbn_ep.clustergraph import ClusterTopology
from ctbn_ep.ep import cluster_statistics, run_filter
from ctbn_ep.evaluation import compare
from ctbn_ep.exact import ExactFilter
from ctbn_ep.formats import (
    QuerySpec,
    evidence_from_dict,
    model_from_dict,
    query_from_dict,
    trajectories_to_dict,
)
from ctbn_ep.interfaces import IStorage
from ctbn_ep.model import (
    CtbnModel,
    EvidenceTimeline,
    Segment,
    partition_evidence,
    refine_segments,
)
from ctbn_ep.sampler import sample_trajectories
from ctbn_ep.suffstats import SuffStats


@dataclass
class ResultDetails:
    status: str
    details: Optional[Dict[str, Any]]


def stats_to_dict(stats: SuffStats) -> Dict[str, Any]:
    labels = list(
        PointDistribution(stats.scope, stats.retained, stats.expected_time)
        .as_dict()
        .keys()
    )
    return {
        "variables": list(stats.names),
        "expected_time": dict(zip(labels, stats.expected_time.tolist())),
        "expected_transitions": {
            source: dict(zip(labels, row))
            for source, row in zip(
                labels, stats.expected_transitions.tolist()
            )
        },
        "expected_exit": dict(zip(labels, stats.expected_exit.tolist())),
        "normalizer": stats.normalizer,
        "survival": stats.survival,
        "error_estimate": stats.error_estimate,
    }


def segments_for(
    model: CtbnModel, evidence: EvidenceTimeline, pieces: Optional[int] = None
) -> List[Segment]:
    segments = partition_evidence(evidence, model)
    if pieces:
        segments = refine_segments(segments, pieces=pieces)

    return segments


def _probe_times(query: QuerySpec, evidence: EvidenceTimeline) -> List[float]:
    return list(query.times) or [evidence.horizon[1]]


def exact_report(
    model: CtbnModel,
    evidence: EvidenceTimeline,
    query: QuerySpec,
    segments: Optional[List[Segment]] = None,
) -> Dict[str, Any]:
    """Answers ``query`` with the exact engine."""
    query.check(model, evidence)
    engine = ExactFilter(model, evidence, segments=segments)
    names = query.variables or model.names
    report: Dict[str, Any] = {"engine": "exact", "kind": query.kind}

    if query.kind == "marginal":
        report["probes"] = [
            {"t": t, "distribution": engine.query(t, names).as_dict()}
            for t in _probe_times(query, evidence)
        ]
    elif query.kind == "evidence-likelihood":
        report["probes"] = [
            {"t": t, "log_likelihood": engine.log_likelihood(t)}
            for t in _probe_times(query, evidence)
        ]
    else:
        report["segments"] = [
            {
                "start": segment.start,
                "end": segment.end,
                "statistics": stats_to_dict(
                    engine.expected_statistics(index, names)
                ),
            }
            for index, segment in enumerate(engine.segments)
        ]

    return report


def _convergence(result) -> List[Dict[str, Any]]:
    return [asdict(report) for report in result.reports]


def ep_report(
    model: CtbnModel,
    evidence: EvidenceTimeline,
    query: QuerySpec,
    topology: Optional[ClusterTopology] = None,
    tol: Optional[float] = None,
    max_iters: Optional[int] = None,
    segments: Optional[List[Segment]] = None,
) -> Dict[str, Any]:
    """
    Answers ``query`` with the EP filter. Evidence likelihoods are only
    estimated for the whole horizon.
    """
    query.check(model, evidence)
    result = run_filter(
        model,
        evidence,
        topology=topology,
        tol=tol,
        max_iters=max_iters,
        segments=segments,
    )
    names = query.variables or model.names
    report: Dict[str, Any] = {"engine": "ep", "kind": query.kind}

    if query.kind == "marginal":
        report["probes"] = [
            {"t": t, "distribution": result.marginal(t, names).as_dict()}
            for t in _probe_times(query, evidence)
        ]
    elif query.kind == "evidence-likelihood":
        report["probes"] = [
            {"t": evidence.horizon[1], "log_likelihood": result.log_likelihood}
        ]
    else:
        report["segments"] = [
            {
                "start": segment.start,
                "end": segment.end,
                "statistics": stats_to_dict(
                    result.expected_statistics(index, names)
                ),
            }
            for index, segment in enumerate(result.segments)
        ]

    report["converged"] = result.converged
    report["convergence"] = _convergence(result)
    return report


def ep_stats_report(
    model: CtbnModel,
    evidence: EvidenceTimeline,
    segment: int,
    topology: Optional[ClusterTopology] = None,
    tol: Optional[float] = None,
    max_iters: Optional[int] = None,
    segments: Optional[List[Segment]] = None,
) -> Dict[str, Any]:
    """Expected statistics of every cluster on one segment."""
    result = run_filter(
        model,
        evidence,
        topology=topology,
        tol=tol,
        max_iters=max_iters,
        segments=segments,
    )
    if not 0 <= segment < len(result.segments):
        raise ValueError(
            f"segment {segment} out of range, the evidence has "
            f"{len(result.segments)} segment(s)"
        )

    state = result.states[segment]
    return {
        "engine": "ep",
        "segment": {"start": state.segment.start, "end": state.segment.end},
        "clusters": [
            {
                "cluster": list(cluster),
                "statistics": stats_to_dict(cluster_statistics(state, i)),
            }
            for i, cluster in enumerate(result.topology.clusters)
        ],
        "converged": result.converged,
        "convergence": _convergence(result),
    }


def compare_report(
    model: CtbnModel,
    evidence: EvidenceTimeline,
    points: int,
    topology: Optional[ClusterTopology] = None,
    tol: Optional[float] = None,
    max_iters: Optional[int] = None,
    segments: Optional[List[Segment]] = None,
) -> Dict[str, Any]:
    return compare(
        model,
        evidence,
        points=points,
        topology=topology,
        segments=segments,
        tol=tol,
        max_iters=max_iters,
    ).to_dict()


class InferenceService:
    """
    Inference actions over models and evidence held by the storage backend.
    """

    ACTIONS = (
        "validate",
        "exact_query",
        "ep_query",
        "ep_stats",
        "compare",
        "sample",
    )

    def __init__(self):
        self._settings = engine_settings
        self._storage_backend = self.refresh_settings().STORAGE

    @classmethod
    def create_service(cls):
        """Class Method for InferenceService service creation."""
        return cls()

    def refresh_settings(self, settings: Optional[Dynaconf] = None):
        """Refreshes the InferenceService settings."""
        if settings is None:
            settings = self._settings

        storage_backends = [
            storage.__name__.upper() for storage in IStorage.__subclasses__()
        ]
        backend = settings.get("STORAGE_BACKEND", "LocalStorage")

        if type(backend) != str and issubclass(
            backend, tuple(IStorage.__subclasses__())
        ):
            logging.debug(f"STORAGE_BACKEND is defined as {backend}")

        elif backend.upper() not in storage_backends:
            raise ValueError(
                f"Invalid Storage Backend {backend}. "
                f"Supported Storage Backends {', '.join(storage_backends)}"
            )
        else:
            settings.STORAGE_BACKEND = getattr(
                importlib.import_module("ctbn_ep.services"), backend
            )

            if missing := [
                s.name
                for s in settings.STORAGE_BACKEND.settings()
                if s.required and s.name not in settings
            ]:
                raise AttributeError(
                    "'Settings' object has not attribute(s) "
                    f"{', '.join(missing)}"
                )

            settings.STORAGE_BACKEND.configure(settings)
            storage_kwargs = {
                s.argument: settings.store[s.name]
                for s in settings.STORAGE_BACKEND.settings()
            }
            settings.STORAGE = settings.STORAGE_BACKEND(**storage_kwargs)

        self._settings = settings
        return settings

    def _load(
        self, kind: str, value: Union[str, Dict[str, Any]]
    ) -> Dict[str, Any]:
        """
        Documents given by name are read from the storage backend, inline
        documents are used as they are.
        """
        if isinstance(value, str):
            return self._storage_backend.get(kind, value)

        return value

    def _inputs(self, payload: Dict[str, Any], evidence: bool = True):
        if "model" not in payload:
            raise ValueError("No model in the payload")
        model = model_from_dict(self._load("model", payload["model"]))
        if not evidence:
            return model, None

        if "evidence" not in payload:
            raise ValueError("No evidence in the payload")
        return model, evidence_from_dict(
            self._load("evidence", payload["evidence"])
        )

    def _options(
        self, model: CtbnModel, evidence: EvidenceTimeline, payload
    ) -> Dict[str, Any]:
        topology = None
        if document := payload.get("topology"):
            topology = ClusterTopology.from_dict(
                model, self._load("topology", document)
            )

        return {
            "topology": topology,
            "tol": payload.get("tol"),
            "max_iters": payload.get("max_iters"),
            "segments": segments_for(model, evidence, payload.get("segments")),
        }

    def _running(self, action: str, update_state: Optional[Any]) -> None:
        if update_state is None:
            return

        update_state(
            state="RUNNING",
            meta={"action": action, "status": "Running inference"},
        )

    def _finish(
        self, payload: Dict[str, Any], details: Dict[str, Any]
    ) -> Dict[str, Any]:
        if output := payload.get("output"):
            self._storage_backend.put("report", output, details)
            logging.debug(f"Report stored as {output}")

        result = ResultDetails(status="Task finished.", details=details)
        return asdict(result)

    def validate(
        self, payload: Dict[str, Any], update_state: Optional[Any] = None
    ) -> Dict[str, Any]:
        self._running("validate", update_state)
        model, _ = self._inputs(payload, evidence=False)
        return self._finish(
            payload,
            {
                "valid": True,
                "variables": list(model.names),
                "joint_states": int(
                    np.prod([v.cardinality for v in model.variables])
                ),
            },
        )

    def exact_query(
        self, payload: Dict[str, Any], update_state: Optional[Any] = None
    ) -> Dict[str, Any]:
        self._running("exact_query", update_state)
        model, evidence = self._inputs(payload)
        query = query_from_dict(self._load("query", payload.get("query", {})))
        segments = segments_for(model, evidence, payload.get("segments"))
        return self._finish(
            payload, exact_report(model, evidence, query, segments=segments)
        )

    def ep_query(
        self, payload: Dict[str, Any], update_state: Optional[Any] = None
    ) -> Dict[str, Any]:
        self._running("ep_query", update_state)
        model, evidence = self._inputs(payload)
        query = query_from_dict(self._load("query", payload.get("query", {})))
        options = self._options(model, evidence, payload)
        return self._finish(
            payload, ep_report(model, evidence, query, **options)
        )

    def ep_stats(
        self, payload: Dict[str, Any], update_state: Optional[Any] = None
    ) -> Dict[str, Any]:
        self._running("ep_stats", update_state)
        model, evidence = self._inputs(payload)
        options = self._options(model, evidence, payload)
        return self._finish(
            payload,
            ep_stats_report(
                model, evidence, int(payload.get("segment", 0)), **options
            ),
        )

    def compare(
        self, payload: Dict[str, Any], update_state: Optional[Any] = None
    ) -> Dict[str, Any]:
        self._running("compare", update_state)
        model, evidence = self._inputs(payload)
        options = self._options(model, evidence, payload)
        return self._finish(
            payload,
            compare_report(
                model, evidence, int(payload.get("points", 60)), **options
            ),
        )

    def sample(
        self, payload: Dict[str, Any], update_state: Optional[Any] = None
    ) -> Dict[str, Any]:
        self._running("sample", update_state)
        model, _ = self._inputs(payload, evidence=False)
        if "t_end" not in payload:
            raise ValueError("No t_end in the payload")

        seed = payload.get("seed")
        trajectories = sample_trajectories(
            model, int(payload.get("n", 1)), float(payload["t_end"]), seed
        )
        return self._finish(payload, trajectories_to_dict(trajectories, seed))
