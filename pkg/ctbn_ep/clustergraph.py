# SPDX-FileCopyrightText: 2022 VMware Inc
#
# SPDX-License-Identifier: MIT

"""
Message-passing topology: moralization, clique trees and user supplied
cluster graphs.
"""

import itertools
import logging
from collections import deque
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple

import networkx as nx

from ctbn_ep.algebra import PointDistribution
from ctbn_ep.errors import ModelValidationError, Violation
from ctbn_ep.model import CtbnModel, initial_joint

Edge = Tuple[int, int]


def edge_key(i: int, j: int) -> Edge:
    return (i, j) if i < j else (j, i)


@dataclass(frozen=True)
class ClusterTopology:
    """
    Clusters of variable names (declaration order), undirected edges between
    cluster indices, and the cluster each variable's CIM is assigned to.
    """

    clusters: Tuple[Tuple[str, ...], ...]
    edges: Tuple[Edge, ...]
    assignment: Dict[str, int]

    def sepset(self, i: int, j: int) -> Tuple[str, ...]:
        return tuple(n for n in self.clusters[i] if n in self.clusters[j])

    def neighbors(self, i: int) -> List[int]:
        return sorted(
            [b for a, b in self.edges if a == i]
            + [a for a, b in self.edges if b == i]
        )

    def assigned(self, i: int) -> List[str]:
        return [n for n, c in self.assignment.items() if c == i]

    def graph(self) -> nx.Graph:
        graph = nx.Graph()
        graph.add_nodes_from(range(len(self.clusters)))
        for i, j in self.edges:
            graph.add_edge(i, j, weight=len(self.sepset(i, j)))
        return graph

    @property
    def is_tree(self) -> bool:
        return nx.is_forest(self.graph())

    def calibration_tree(self) -> nx.Graph:
        """The topology itself when it is a forest, else a maximum spanning
        tree by sepset size."""
        graph = self.graph()
        if nx.is_forest(graph):
            return graph

        return nx.maximum_spanning_tree(graph, weight="weight")

    def running_intersection(self) -> bool:
        graph = self.graph()
        names = {n for cluster in self.clusters for n in cluster}
        for name in names:
            holders = [i for i, c in enumerate(self.clusters) if name in c]
            if not nx.is_connected(graph.subgraph(holders)):
                return False

        return True

    def smallest_cluster(self, names) -> Optional[int]:
        """Index of the smallest cluster holding all ``names``."""
        wanted = set(names)
        holders = [
            i for i, c in enumerate(self.clusters) if wanted <= set(c)
        ]
        if not holders:
            return None

        return min(holders, key=lambda i: (len(self.clusters[i]), i))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "clusters": [list(c) for c in self.clusters],
            "edges": [list(e) for e in self.edges],
            "assignment": dict(self.assignment),
        }

    @classmethod
    def from_dict(
        cls, model: CtbnModel, document: Dict[str, Any]
    ) -> "ClusterTopology":
        """Reads and validates a topology document against ``model``."""
        try:
            clusters = tuple(
                tuple(v.name for v in model.ordered(cluster))
                for cluster in document["clusters"]
            )
            edges = tuple(
                sorted(edge_key(int(i), int(j)) for i, j in document["edges"])
            )
        except (KeyError, TypeError, ValueError) as err:
            raise ModelValidationError(
                [Violation("topology", "document", f"malformed: {err}")]
            )

        assignment = document.get("assignment")
        if assignment is None:
            assignment = {
                v.name: cls._smallest(clusters, model.family(v.name))
                for v in model.variables
            }
        assignment = {k: int(v) for k, v in assignment.items()}
        topology = cls(clusters, edges, assignment)
        topology.validate(model)
        return topology

    @staticmethod
    def _smallest(clusters, family) -> int:
        names = {v.name for v in family}
        holders = [i for i, c in enumerate(clusters) if names <= set(c)]
        if not holders:
            return -1

        return min(holders, key=lambda i: (len(clusters[i]), i))

    def violations(self, model: CtbnModel) -> List[Violation]:
        violations = []
        count = len(self.clusters)
        for i, j in self.edges:
            if not (0 <= i < count and 0 <= j < count) or i == j:
                violations.append(
                    Violation("topology", f"edge {i}-{j}", "bad cluster index")
                )
            elif not self.sepset(i, j):
                violations.append(
                    Violation("topology", f"edge {i}-{j}", "empty sepset")
                )

        for variable in model.variables:
            location = f"assignment {variable.name}"
            cluster = self.assignment.get(variable.name)
            if cluster is None or not 0 <= cluster < count:
                violations.append(
                    Violation("topology", location, "no cluster assigned")
                )
                continue
            family = {v.name for v in model.family(variable.name)}
            if not family <= set(self.clusters[cluster]):
                violations.append(
                    Violation(
                        "topology",
                        location,
                        f"cluster {cluster} does not hold the family "
                        f"{sorted(family)}",
                    )
                )

        return violations

    def validate(self, model: CtbnModel) -> "ClusterTopology":
        if violations := self.violations(model):
            raise ModelValidationError(violations)

        return self


def moralize(model: CtbnModel) -> nx.Graph:
    """Undirected graph with every parent set married."""
    graph = nx.Graph()
    graph.add_nodes_from(model.names)
    graph.add_edges_from(
        (parent, child) for parent, child in model.edges if parent != child
    )
    for name in model.names:
        graph.add_edges_from(itertools.combinations(model.parents(name), 2))

    return graph


def _fill_in(graph: nx.Graph, node: str) -> int:
    neighbors = list(graph.neighbors(node))
    return sum(
        1
        for a, b in itertools.combinations(neighbors, 2)
        if not graph.has_edge(a, b)
    )


def build_cluster_tree(model: CtbnModel) -> ClusterTopology:
    """
    Clique tree of the moralized graph: min-fill elimination (ties by
    declaration order), maximal cliques as clusters, linked by a maximum
    spanning tree over sepset sizes.
    """
    graph = moralize(model)
    order = {name: i for i, name in enumerate(model.names)}
    cliques: List[set] = []
    while graph.number_of_nodes():
        node = min(graph.nodes, key=lambda n: (_fill_in(graph, n), order[n]))
        neighbors = list(graph.neighbors(node))
        cliques.append({node, *neighbors})
        graph.add_edges_from(itertools.combinations(neighbors, 2))
        graph.remove_node(node)

    maximal = [
        c
        for i, c in enumerate(cliques)
        if not any(
            c < other or (c == other and j < i)
            for j, other in enumerate(cliques)
            if j != i
        )
    ]
    clusters = tuple(
        tuple(n for n in model.names if n in clique) for clique in maximal
    )

    candidates = nx.Graph()
    candidates.add_nodes_from(range(len(clusters)))
    for i, j in itertools.combinations(range(len(clusters)), 2):
        shared = set(clusters[i]) & set(clusters[j])
        if shared:
            candidates.add_edge(i, j, weight=len(shared))
    tree = nx.maximum_spanning_tree(candidates, weight="weight")
    edges = tuple(sorted(edge_key(i, j) for i, j in tree.edges))

    assignment = {
        v.name: ClusterTopology._smallest(clusters, model.family(v.name))
        for v in model.variables
    }
    logging.debug(f"Cluster tree {clusters} with edges {edges}")
    return ClusterTopology(clusters, edges, assignment)


def _bfs(tree: nx.Graph, root: int) -> List[Tuple[int, int, int]]:
    """(parent, child, depth) in breadth-first order, neighbors sorted."""
    visited = {root}
    queue = deque([(root, 0)])
    result = []
    while queue:
        node, depth = queue.popleft()
        for neighbor in sorted(tree.neighbors(node)):
            if neighbor not in visited:
                visited.add(neighbor)
                result.append((node, neighbor, depth + 1))
                queue.append((neighbor, depth + 1))

    return result


def tree_roots(tree: nx.Graph) -> List[int]:
    """One root per connected component: the lowest-index tree center."""
    return [
        min(nx.center(tree.subgraph(component)))
        for component in sorted(
            nx.connected_components(tree), key=lambda c: min(c)
        )
    ]


def upward_downward(tree: nx.Graph) -> Tuple[List[Edge], List[Edge]]:
    """Directed edges towards the roots (deepest first) and away from them."""
    upward, downward = [], []
    for root in tree_roots(tree):
        visits = _bfs(tree, root)
        upward.extend(
            (child, parent)
            for parent, child, _ in sorted(
                visits, key=lambda v: (-v[2], v[1])
            )
        )
        downward.extend((parent, child) for parent, child, _ in visits)

    return upward, downward


def sweep_schedule(topology: ClusterTopology) -> List[Edge]:
    """
    Directed messages of one sweep: an upward then downward pass on trees,
    every edge in both directions on loopy graphs.
    """
    if topology.is_tree:
        upward, downward = upward_downward(topology.graph())
        return upward + downward

    forward = sorted(topology.edges)
    return forward + [(j, i) for i, j in forward]


def cluster_initial_distributions(
    model: CtbnModel, topology: ClusterTopology
) -> List[PointDistribution]:
    """Initial-network marginal of every cluster."""
    return [
        PointDistribution.full(
            model.ordered(cluster), initial_joint(model, cluster)
        )
        for cluster in topology.clusters
    ]
