"""Retweet-based coordination detection.

Pipeline: pick the most prolific retweeters, vectorize who-retweeted-what with
TF-IDF over retweeted post ids, connect users by cosine similarity, keep the
statistically significant backbone, then score each user by how strict an
edge-weight filter must get before the user drops out of the backbone.
"""

from __future__ import annotations

import bisect
import csv
import math
import statistics
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import networkx as nx

from .ingest import Corpus
from .network import WeightedNetwork, disparity_backbone  # noqa: F401  (re-export)


@dataclass
class CoordinationResult:
    scores: dict[str, float]
    coordinated: set[str]
    communities: dict[str, int] = field(default_factory=dict)
    threshold_used: float = 0.0
    excluded: set[str] = field(default_factory=set)


def select_superspreaders(corpus: Corpus, fraction: float) -> set[str]:
    """Top ``fraction`` of retweeting users by retweet count.

    The base population is users with at least one retweet. The selection size
    is floor(fraction * population), floored at 1; ties at the cutoff are
    broken by lexicographic user id.
    """
    if not 0 < fraction <= 1:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    retweeters = [(user, count) for user, count in corpus.retweet_counts.items() if count > 0]
    if not retweeters:
        raise ValueError("no user in the corpus has any retweet")
    k = max(1, math.floor(fraction * len(retweeters)))
    retweeters.sort(key=lambda item: (-item[1], item[0]))
    return {user for user, _ in retweeters[:k]}


def build_retweet_vectors(
    corpus: Corpus, users: Iterable[str]
) -> dict[str, dict[str, float]]:
    """TF-IDF vectors over the ids of posts each selected user retweeted.

    tf(u, t) is the raw retweet count, idf(t) = ln(N / df(t)) with df counted
    over the selected users only. Posts retweeted by every selected user get
    idf 0 and are dropped, so rare co-retweets dominate the similarity.
    """
    selected = sorted(set(users))
    counts: dict[str, dict[str, int]] = {}
    df: dict[str, int] = {}
    for user in selected:
        per_user: dict[str, int] = {}
        for post in corpus.posts_by_author(user):
            if post.kind != "retweet":
                continue
            per_user[post.referenced_post_id] = per_user.get(post.referenced_post_id, 0) + 1
        counts[user] = per_user
        for target in per_user:
            df[target] = df.get(target, 0) + 1
    n = len(selected)
    vectors: dict[str, dict[str, float]] = {}
    for user in selected:
        vec: dict[str, float] = {}
        for target, tf in counts[user].items():
            idf = math.log(n / df[target])
            if idf > 0.0:
                vec[target] = tf * idf
        vectors[user] = vec
    return vectors


def similarity_network(vectors: Mapping[str, Mapping[str, float]]) -> WeightedNetwork:
    """Pairwise cosine similarity network over sparse user vectors.

    Only user pairs sharing at least one vector component are compared (via an
    inverted index over post ids), every positive cosine becomes an edge, and
    users with empty vectors stay as isolated nodes.
    """
    nonempty = {u: v for u, v in vectors.items() if v}
    if len(nonempty) < 2:
        raise ValueError("need at least 2 nonempty vectors")
    norms = {u: math.sqrt(sum(x * x for x in vec.values())) for u, vec in nonempty.items()}
    postings: dict[str, list[tuple[str, float]]] = {}
    for user in sorted(nonempty):
        for target, value in nonempty[user].items():
            postings.setdefault(target, []).append((user, value))
    dots: dict[tuple[str, str], float] = {}
    for target in sorted(postings):
        entries = postings[target]
        for i in range(len(entries)):
            ui, xi = entries[i]
            for j in range(i + 1, len(entries)):
                uj, xj = entries[j]
                key = (ui, uj)
                dots[key] = dots.get(key, 0.0) + xi * xj
    net = WeightedNetwork()
    for user in sorted(vectors):
        net.add_node(user)
    for (u, v), dot in sorted(dots.items()):
        if dot <= 0.0:
            continue
        cosine = min(1.0, dot / (norms[u] * norms[v]))
        net.add_edge(u, v, cosine)
    return net


def coordination_scores(backbone: WeightedNetwork) -> dict[str, float]:
    """Score each node by the edge-weight percentile at which it disconnects.

    A moving threshold sweeps the backbone's distinct edge weights in
    ascending order; at each step every edge with weight up to the threshold
    is removed, and nodes whose degree first reaches zero receive the fraction
    of backbone edges removed so far. Nodes that survive the last step are
    assigned at that step (fraction 1.0); nodes isolated before the sweep
    score 0.
    """
    m = backbone.n_edges
    if m == 0:
        raise ValueError("backbone has no edges")
    weights = sorted(w for _, _, w in backbone.edges())
    # For each node, the sweep removes its last incident edge at the step
    # whose threshold equals the node's strongest incident weight, so the
    # score is the count of edges with weight <= that maximum, over m.
    scores: dict[str, float] = {}
    for node in backbone.sorted_nodes():
        nbrs = backbone.neighbors(node)
        if not nbrs:
            scores[node] = 0.0
            continue
        max_w = max(nbrs.values())
        removed = bisect.bisect_right(weights, max_w)
        scores[node] = removed / m
    return scores


def label_coordinated(
    scores: Mapping[str, float], exclusions: Iterable[str] = ()
) -> CoordinationResult:
    """Split users at the median coordination score (strictly above counts)."""
    if not scores:
        raise ValueError("scores must be nonempty")
    threshold = statistics.median(scores.values())
    excluded = set(exclusions)
    coordinated = {u for u, s in scores.items() if s > threshold} - excluded
    return CoordinationResult(
        scores=dict(scores),
        coordinated=coordinated,
        threshold_used=threshold,
        excluded={u for u in excluded if u in scores},
    )


def louvain_communities(backbone: WeightedNetwork, seed: int) -> dict[str, int]:
    """Weighted-modularity Louvain partition with a seeded node order.

    Community ids are renumbered deterministically: largest community first,
    ties broken by smallest member id.
    """
    if backbone.n_nodes == 0:
        raise ValueError("backbone has no nodes")
    graph = nx.Graph()
    graph.add_nodes_from(backbone.sorted_nodes())
    for u, v, w in backbone.sorted_edges():
        graph.add_edge(u, v, weight=w)
    communities = nx.community.louvain_communities(graph, weight="weight", resolution=1.0, seed=seed)
    ordered = sorted(communities, key=lambda c: (-len(c), min(c)))
    assignment: dict[str, int] = {}
    for cid, members in enumerate(ordered):
        for node in members:
            assignment[node] = cid
    return assignment


def write_result_csv(result: CoordinationResult, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["user", "score", "coordinated", "community"])
        for user in sorted(result.scores):
            writer.writerow(
                [
                    user,
                    repr(result.scores[user]),
                    "true" if user in result.coordinated else "false",
                    result.communities.get(user, ""),
                ]
            )


def read_result_csv(path: str) -> CoordinationResult:
    scores: dict[str, float] = {}
    coordinated: set[str] = set()
    communities: dict[str, int] = {}
    with open(path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header != ["user", "score", "coordinated", "community"]:
            raise ValueError(f"unexpected coordination CSV header in {path}: {header}")
        for row in reader:
            user, score, flag, community = row
            scores[user] = float(score)
            if flag == "true":
                coordinated.add(user)
            if community != "":
                communities[user] = int(community)
    return CoordinationResult(scores=scores, coordinated=coordinated, communities=communities)
