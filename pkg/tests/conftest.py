# SPDX-FileCopyrightText: 2022 VMware Inc
#
# SPDX-License-Identifier: MIT

import json

import numpy as np
import pytest

from ctbn_ep.formats import evidence_from_dict, model_from_dict

# two-variable network A -> B, A binary and B ternary
DRUG_PAIR = {
    "variables": [
        {"name": "A", "states": ["a1", "a2"]},
        {"name": "B", "states": ["b1", "b2", "b3"]},
    ],
    "edges": [["A", "B"]],
    "cims": {
        "A": {"": [[-1, 1], [2, -2]]},
        "B": {
            "A=a1": [[-5, 2, 3], [2, -6, 4], [2, 5, -7]],
            "A=a2": [[-7, 3, 4], [3, -8, 5], [3, 6, -9]],
        },
    },
    "initial": {
        "edges": [],
        "cpts": {
            "A": {"": [0.5, 0.5]},
            "B": {"": [1 / 3, 1 / 3, 1 / 3]},
        },
    },
}

# the same pair amalgamated, first variable fastest
DRUG_PAIR_JOINT = np.array(
    [
        [-6, 1, 2, 0, 3, 0],
        [2, -9, 0, 3, 0, 4],
        [2, 0, -7, 1, 4, 0],
        [0, 3, 2, -10, 0, 5],
        [2, 0, 5, 0, -8, 1],
        [0, 3, 0, 6, 2, -11],
    ]
)


def _chain_cim(parent: str, low: str, high: str):
    return {
        f"{parent}={low}": [[-1, 1], [10, -10]],
        f"{parent}={high}": [[-10, 10], [1, -1]],
    }


# four-variable chain A -> B -> C -> D, each child tracking its parent
CHAIN = {
    "variables": [
        {"name": name, "states": [f"{name.lower()}1", f"{name.lower()}2"]}
        for name in "ABCD"
    ],
    "edges": [["A", "B"], ["B", "C"], ["C", "D"]],
    "cims": {
        "A": {"": [[-1, 1], [1, -1]]},
        "B": _chain_cim("A", "a1", "a2"),
        "C": _chain_cim("B", "b1", "b2"),
        "D": _chain_cim("C", "c1", "c2"),
    },
    "initial": {
        "edges": [],
        "cpts": {
            "A": {"": [0.5, 0.5]},
            "B": {"": [0.5, 0.5]},
            "C": {"": [0.5, 0.5]},
            "D": {"": [1.0, 0.0]},
        },
    },
}

CHAIN_EVIDENCE = {
    "horizon": [0.0, 1.0],
    "intervals": [{"var": "D", "value": "d1", "from": 0.0, "to": 1.0}],
    "points": [],
    "transitions": [],
}

CHAIN_TOPOLOGY = {
    "clusters": [["A", "B"], ["B", "C"], ["C", "D"]],
    "edges": [[0, 1], [1, 2]],
    "assignment": {"A": 0, "B": 0, "C": 1, "D": 2},
}


def random_model_document(seed: int, cardinalities=(2, 3, 2)):
    """A random connected chain with positive rates everywhere."""
    rng = np.random.default_rng(seed)
    names = [f"X{i}" for i in range(len(cardinalities))]
    variables = [
        {"name": name, "states": [f"s{k}" for k in range(size)]}
        for name, size in zip(names, cardinalities)
    ]

    def rates(size):
        matrix = rng.uniform(0.2, 3.0, (size, size))
        np.fill_diagonal(matrix, 0.0)
        np.fill_diagonal(matrix, -matrix.sum(axis=1))
        return matrix.tolist()

    cims = {names[0]: {"": rates(cardinalities[0])}}
    for position in range(1, len(names)):
        parent = variables[position - 1]
        cims[names[position]] = {
            f"{parent['name']}={state}": rates(cardinalities[position])
            for state in parent["states"]
        }

    cpts = {}
    for name, size in zip(names, cardinalities):
        probs = rng.uniform(0.1, 1.0, size)
        cpts[name] = {"": (probs / probs.sum()).tolist()}

    return {
        "variables": variables,
        "edges": [[names[i - 1], names[i]] for i in range(1, len(names))],
        "cims": cims,
        "initial": {"edges": [], "cpts": cpts},
    }


@pytest.fixture
def drug_pair():
    return model_from_dict(DRUG_PAIR)


@pytest.fixture
def chain():
    return model_from_dict(CHAIN)


@pytest.fixture
def chain_evidence():
    return evidence_from_dict(CHAIN_EVIDENCE)


@pytest.fixture
def chain_files(tmp_path):
    """The chain model, evidence and topology written as JSON files."""
    paths = {}
    for name, document in (
        ("model", CHAIN),
        ("evidence", CHAIN_EVIDENCE),
        ("topology", CHAIN_TOPOLOGY),
    ):
        path = tmp_path / f"{name}.json"
        path.write_text(json.dumps(document))
        paths[name] = str(path)

    return paths
