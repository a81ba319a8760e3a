"""Political leaning inference over the hashtag co-occurrence network.

Hashtag leanings spread outward from a seed set by iterated weighted
averaging. Each iteration filters the co-occurrence network with a
progressively softer significance threshold, so tightly co-used hashtags pick
up a leaning early and loosely attached ones late.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from itertools import combinations
from typing import Mapping, Optional, Sequence

from .ingest import Corpus, PostRecord
from .network import WeightedNetwork, disparity_backbone


@dataclass
class LeaningTable:
    hashtag_leaning: dict[str, float] = field(default_factory=dict)
    post_leaning: dict[str, float] = field(default_factory=dict)
    user_leaning: dict[str, float] = field(default_factory=dict)
    undefined_hashtags_final: set[str] = field(default_factory=set)


def build_cooccurrence(corpus: Corpus) -> WeightedNetwork:
    """Hashtag co-occurrence network: edge weight = number of shared posts."""
    if len(corpus) == 0:
        raise ValueError("corpus is empty")
    weights: dict[tuple[str, str], int] = {}
    tags_seen: set[str] = set()
    for post in corpus.posts:
        tags_seen.update(post.hashtags)
        for a, b in combinations(sorted(post.hashtags), 2):
            weights[(a, b)] = weights.get((a, b), 0) + 1
    net = WeightedNetwork()
    for tag in sorted(tags_seen):
        net.add_node(tag)
    for (a, b), w in sorted(weights.items()):
        net.add_edge(a, b, float(w))
    return net


def alpha_schedule(start: float, end: float = 1.0, steps: int = 13) -> list[float]:
    """Logarithmically spaced significance thresholds from start to end inclusive."""
    if not 0 < start < end <= 1:
        raise ValueError(f"need 0 < start < end <= 1, got start={start}, end={end}")
    if steps < 2:
        raise ValueError(f"steps must be >= 2, got {steps}")
    lo, hi = math.log10(start), math.log10(end)
    values = [10 ** (lo + (hi - lo) * i / (steps - 1)) for i in range(steps)]
    values[0], values[-1] = start, end
    return values


def propagate_labels(
    net: WeightedNetwork,
    seeds: Mapping[str, float],
    schedule: Sequence[float],
) -> tuple[dict[str, float], set[str]]:
    """Spread seed leanings over the network with a relaxing backbone filter.

    Each step extracts the backbone at the step's alpha (alpha >= 1 means the
    whole network) and simultaneously assigns every still-undefined hashtag
    that has at least one backbone neighbor the co-occurrence-weighted mean of
    its neighbors' leanings; neighbors undefined at the start of the step
    contribute 0. Assigned values are frozen; seeds are never overwritten.
    Hashtags never reached by an update end at 0 and are reported separately.
    """
    if not schedule:
        raise ValueError("schedule is empty")
    if list(schedule) != sorted(schedule):
        raise ValueError("schedule must be ascending")
    defined: dict[str, float] = {}
    for tag, value in seeds.items():
        if not net.has_node(tag):
            warnings.warn(f"seed hashtag {tag} does not occur in the network", stacklevel=2)
            continue
        defined[tag] = float(value)
    for alpha in schedule:
        sub = net if alpha >= 1.0 else disparity_backbone(net, alpha)
        updates: dict[str, float] = {}
        for node in sub.sorted_nodes():
            if node in defined:
                continue
            nbrs = sub.neighbors(node)
            if not nbrs:
                continue
            num = 0.0
            den = 0.0
            for other in sorted(nbrs):
                w = nbrs[other]
                num += w * defined.get(other, 0.0)
                den += w
            updates[node] = num / den
        defined.update(updates)
    undefined_final = {node for node in net.nodes if node not in defined}
    values = dict(defined)
    for node in undefined_final:
        values[node] = 0.0
    return values, undefined_final


def post_leaning(post: PostRecord, hashtag_leaning: Mapping[str, float]) -> Optional[float]:
    """Leaning of the post's most polarized hashtag; |leaning| ties average out."""
    values = [hashtag_leaning[tag] for tag in post.hashtags if tag in hashtag_leaning]
    if not values:
        return None
    top = max(abs(v) for v in values)
    tied = [v for v in values if abs(v) == top]
    return sum(tied) / len(tied)


def user_leaning(corpus: Corpus, post_leanings: Mapping[str, float]) -> dict[str, float]:
    """Mean leaning of each user's originals and retweets that have a leaning."""
    result: dict[str, float] = {}
    for user in corpus.authors():
        values = [
            post_leanings[post.post_id]
            for post in corpus.posts_by_author(user)
            if post.kind in ("original", "retweet") and post.post_id in post_leanings
        ]
        if values:
            result[user] = sum(values) / len(values)
    return result


def compute_leaning_table(
    corpus: Corpus,
    seeds: Mapping[str, float],
    schedule: Sequence[float],
) -> LeaningTable:
    net = build_cooccurrence(corpus)
    hashtag_values, undefined_final = propagate_labels(net, seeds, schedule)
    table = LeaningTable(hashtag_leaning=hashtag_values, undefined_hashtags_final=undefined_final)
    for post in corpus.posts:
        value = post_leaning(post, hashtag_values)
        if value is not None:
            table.post_leaning[post.post_id] = value
    table.user_leaning = user_leaning(corpus, table.post_leaning)
    return table


def write_leaning_csv(values: Mapping[str, float], path: str, key_column: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow([key_column, "leaning"])
        for key in sorted(values):
            writer.writerow([key, repr(values[key])])


def read_leaning_csv(path: str, key_column: str) -> dict[str, float]:
    out: dict[str, float] = {}
    with open(path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header != [key_column, "leaning"]:
            raise ValueError(f"unexpected leaning CSV header in {path}: {header}")
        for row in reader:
            out[row[0]] = float(row[1])
    return out
