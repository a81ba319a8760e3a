"""Undirected weighted graph with node attributes, plus backbone extraction."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterable, Iterator


def edge_key(u: str, v: str) -> tuple[str, str]:
    return (u, v) if u < v else (v, u)


@dataclass
class WeightedNetwork:
    """Simple undirected weighted graph.

    Edges are stored once under a canonical (min, max) node ordering; an
    adjacency map is kept in sync for neighbor queries. Self-loops and
    duplicate edges are rejected, weights must be positive.
    """

    _edges: dict[tuple[str, str], float] = field(default_factory=dict)
    _adj: dict[str, dict[str, float]] = field(default_factory=dict)
    node_attrs: dict[str, dict[str, float]] = field(default_factory=dict)

    def add_node(self, node: str) -> None:
        self._adj.setdefault(node, {})

    def add_edge(self, u: str, v: str, weight: float) -> None:
        if u == v:
            raise ValueError(f"self-loop on {u!r}")
        if not weight > 0:
            raise ValueError(f"edge weight must be positive, got {weight}")
        key = edge_key(u, v)
        if key in self._edges:
            raise ValueError(f"duplicate edge {key}")
        self._edges[key] = weight
        self._adj.setdefault(u, {})[v] = weight
        self._adj.setdefault(v, {})[u] = weight

    @property
    def nodes(self) -> set[str]:
        return set(self._adj)

    def sorted_nodes(self) -> list[str]:
        return sorted(self._adj)

    def has_node(self, node: str) -> bool:
        return node in self._adj

    def neighbors(self, node: str) -> dict[str, float]:
        return self._adj[node]

    def degree(self, node: str) -> int:
        return len(self._adj[node])

    def strength(self, node: str) -> float:
        return sum(self._adj[node].values())

    def edges(self) -> Iterator[tuple[str, str, float]]:
        for (u, v), w in self._edges.items():
            yield u, v, w

    def sorted_edges(self) -> list[tuple[str, str, float]]:
        return [(u, v, self._edges[(u, v)]) for u, v in sorted(self._edges)]

    def edge_weight(self, u: str, v: str) -> float:
        return self._edges[edge_key(u, v)]

    def has_edge(self, u: str, v: str) -> bool:
        return edge_key(u, v) in self._edges

    @property
    def n_nodes(self) -> int:
        return len(self._adj)

    @property
    def n_edges(self) -> int:
        return len(self._edges)

    def set_attr(self, node: str, name: str, value: float) -> None:
        if node not in self._adj:
            raise KeyError(f"unknown node {node!r}")
        self.node_attrs.setdefault(node, {})[name] = float(value)

    def get_attr(self, node: str, name: str) -> float | None:
        return self.node_attrs.get(node, {}).get(name)

    def subgraph(self, nodes: Iterable[str]) -> "WeightedNetwork":
        keep = set(nodes)
        sub = WeightedNetwork()
        for node in keep:
            if node in self._adj:
                sub.add_node(node)
        for (u, v), w in self._edges.items():
            if u in keep and v in keep:
                sub.add_edge(u, v, w)
        for node in keep:
            if node in self.node_attrs:
                sub.node_attrs[node] = dict(self.node_attrs[node])
        return sub


def from_edges(edges: Iterable[tuple[str, str, float]], nodes: Iterable[str] = ()) -> WeightedNetwork:
    net = WeightedNetwork()
    for node in nodes:
        net.add_node(node)
    for u, v, w in edges:
        net.add_edge(u, v, w)
    return net


def disparity_backbone(net: WeightedNetwork, alpha: float) -> WeightedNetwork:
    """Keep edges that are statistically significant for at least one endpoint.

    An edge (i, j) is significant for endpoint i when i has degree k > 1 and
    (1 - w_ij / strength_i) ** (k - 1) < alpha. Degree-1 endpoints never make
    their edge significant (their normalized weight is 1, so the significance
    is conventionally 1). All nodes are retained, isolates included.
    """
    if not 0 < alpha <= 1:
        raise ValueError(f"alpha must be in (0, 1], got {alpha}")
    strengths = {node: net.strength(node) for node in net._adj}
    backbone = WeightedNetwork()
    for node in net._adj:
        backbone.add_node(node)
    for (u, v), w in net._edges.items():
        if _edge_significant(net, u, w, strengths, alpha) or _edge_significant(net, v, w, strengths, alpha):
            backbone.add_edge(u, v, w)
    for node, attrs in net.node_attrs.items():
        backbone.node_attrs[node] = dict(attrs)
    return backbone


def _edge_significant(
    net: WeightedNetwork, endpoint: str, weight: float, strengths: dict[str, float], alpha: float
) -> bool:
    k = net.degree(endpoint)
    if k <= 1:
        return False
    p = weight / strengths[endpoint]
    return (1.0 - p) ** (k - 1) < alpha


def write_edges_csv(net: WeightedNetwork, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["source", "target", "weight"])
        for u, v, w in net.sorted_edges():
            writer.writerow([u, v, repr(w)])


def read_edges_csv(path: str, nodes: Iterable[str] = ()) -> WeightedNetwork:
    net = WeightedNetwork()
    for node in nodes:
        net.add_node(node)
    with open(path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header != ["source", "target", "weight"]:
            raise ValueError(f"unexpected edge CSV header in {path}: {header}")
        for row in reader:
            net.add_edge(row[0], row[1], float(row[2]))
    return net


def write_node_attrs_csv(net: WeightedNetwork, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["node", "attr", "value"])
        for node in sorted(net.node_attrs):
            for attr in sorted(net.node_attrs[node]):
                writer.writerow([node, attr, repr(net.node_attrs[node][attr])])
