"""Chronological production/interaction encoding of user activity.

An original post is a production (P). A retweet is an interaction (I) with the
retweeted post. Replies and quotes contribute an interaction with the
referenced post immediately followed by a production for the user's own text.
Trimmed sequences alternate interaction runs and production runs, which pair
up into blocks for the conditioned-toxicity comparisons.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from datetime import datetime
from typing import Iterable, Mapping, Optional, Sequence

from .ingest import PostRecord
from .stats import BootstrapSummary, bootstrap_mean

CONDITIONS = ("author_group", "toxicity_class", "leaning_align")


@dataclass(frozen=True)
class ActivityStep:
    kind: str  # "P" or "I"
    post_id: str
    referenced_post_id: Optional[str]
    referenced_author_id: Optional[str]
    timestamp: datetime


@dataclass(frozen=True)
class UserActivitySequence:
    user: str
    steps: tuple[ActivityStep, ...]

    def pattern(self) -> str:
        return ">".join(step.kind for step in self.steps)


@dataclass(frozen=True)
class InteractionBlock:
    toxic_fraction: float
    coordinated_fraction: Optional[float]
    mean_leaning: Optional[float]
    n: int  # interactions with a toxicity score
    n_steps: int
    n_above: int  # toxicity strictly above the threshold
    n_below: int  # toxicity strictly below the threshold


@dataclass(frozen=True)
class ProductionBlock:
    mean_toxicity: float
    n: int


@dataclass(frozen=True)
class BlockPair:
    user: str
    index: int
    interaction: InteractionBlock
    production: ProductionBlock


def encode_actions(posts: Sequence[PostRecord]) -> UserActivitySequence:
    """Encode one user's posts, oldest first, into P/I steps."""
    if not posts:
        raise ValueError("posts must be nonempty")
    user = posts[0].author_id
    ordered = sorted(posts, key=lambda p: (p.created_at, p.post_id))
    steps: list[ActivityStep] = []
    for post in ordered:
        if post.author_id != user:
            raise ValueError("posts belong to different authors")
        if post.kind == "original":
            steps.append(ActivityStep("P", post.post_id, None, None, post.created_at))
        elif post.kind == "retweet":
            steps.append(
                ActivityStep("I", post.post_id, post.referenced_post_id, post.referenced_author_id, post.created_at)
            )
        elif post.kind in ("reply", "quote"):
            steps.append(
                ActivityStep("I", post.post_id, post.referenced_post_id, post.referenced_author_id, post.created_at)
            )
            steps.append(ActivityStep("P", post.post_id, None, None, post.created_at))
        else:
            raise ValueError(f"unknown post kind {post.kind!r}")
    return UserActivitySequence(user=user, steps=tuple(steps))


def trim_sequence(seq: UserActivitySequence) -> Optional[UserActivitySequence]:
    """Drop the leading production run and trailing interaction run.

    Returns None when nothing interaction-then-production remains.
    """
    steps = list(seq.steps)
    start = 0
    while start < len(steps) and steps[start].kind == "P":
        start += 1
    end = len(steps)
    while end > start and steps[end - 1].kind == "I":
        end -= 1
    trimmed = steps[start:end]
    if not trimmed:
        return None
    return UserActivitySequence(user=seq.user, steps=tuple(trimmed))


def _runs(steps: Sequence[ActivityStep]) -> list[tuple[str, list[ActivityStep]]]:
    runs: list[tuple[str, list[ActivityStep]]] = []
    for step in steps:
        if runs and runs[-1][0] == step.kind:
            runs[-1][1].append(step)
        else:
            runs.append((step.kind, [step]))
    return runs


def segment_blocks(
    seq: UserActivitySequence,
    toxicity: Mapping[str, float],
    coordinated: Iterable[str],
    post_leanings: Mapping[str, float],
    toxic_threshold: float = 0.6,
    author_by_post: Optional[Mapping[str, str]] = None,
) -> list[BlockPair]:
    """Pair up consecutive interaction and production runs with their features.

    Interaction features are computed over the referenced posts: the toxic
    fraction over those with a score (strictly above the threshold counts),
    the coordinated fraction over those with a resolvable author, and the mean
    leaning over those with a leaning. The production feature is the mean
    toxicity of the scored produced posts. A pair is dropped when either side
    has no scored post at all.
    """
    coordinated_set = set(coordinated)
    runs = _runs(seq.steps)
    if runs and (runs[0][0] != "I" or runs[-1][0] != "P"):
        raise ValueError("sequence is not trimmed (must start with I and end with P)")
    pairs: list[BlockPair] = []
    index = 0
    for pos in range(0, len(runs) - 1, 2):
        i_kind, i_steps = runs[pos]
        p_kind, p_steps = runs[pos + 1]
        if i_kind != "I" or p_kind != "P":
            raise ValueError("runs do not alternate I-run, P-run")
        interaction = _interaction_features(
            i_steps, toxicity, coordinated_set, post_leanings, toxic_threshold, author_by_post
        )
        production = _production_features(p_steps, toxicity)
        if interaction is None or production is None:
            continue
        pairs.append(BlockPair(user=seq.user, index=index, interaction=interaction, production=production))
        index += 1
    return pairs


def _interaction_features(
    steps: Sequence[ActivityStep],
    toxicity: Mapping[str, float],
    coordinated: set[str],
    post_leanings: Mapping[str, float],
    threshold: float,
    author_by_post: Optional[Mapping[str, str]],
) -> Optional[InteractionBlock]:
    n_scored = 0
    n_above = 0
    n_below = 0
    n_authored = 0
    n_coordinated = 0
    leanings: list[float] = []
    for step in steps:
        ref = step.referenced_post_id
        if ref is None:
            continue
        if ref in toxicity:
            value = toxicity[ref]
            n_scored += 1
            if value > threshold:
                n_above += 1
            elif value < threshold:
                n_below += 1
        author = step.referenced_author_id
        if author is None and author_by_post is not None:
            author = author_by_post.get(ref)
        if author is not None:
            n_authored += 1
            if author in coordinated:
                n_coordinated += 1
        if ref in post_leanings:
            leanings.append(post_leanings[ref])
    if n_scored == 0:
        return None
    return InteractionBlock(
        toxic_fraction=n_above / n_scored,
        coordinated_fraction=(n_coordinated / n_authored) if n_authored else None,
        mean_leaning=(sum(leanings) / len(leanings)) if leanings else None,
        n=n_scored,
        n_steps=len(steps),
        n_above=n_above,
        n_below=n_below,
    )


def _production_features(
    steps: Sequence[ActivityStep], toxicity: Mapping[str, float]
) -> Optional[ProductionBlock]:
    values = [toxicity[s.post_id] for s in steps if s.post_id in toxicity]
    if not values:
        return None
    return ProductionBlock(mean_toxicity=sum(values) / len(values), n=len(values))


def classify_pair(
    pair: BlockPair,
    condition: str,
    user_leanings: Optional[Mapping[str, float]] = None,
) -> Optional[str]:
    """Condition value for a block pair, or None when the pair is filtered out."""
    block = pair.interaction
    if condition == "author_group":
        if block.coordinated_fraction is None:
            return None
        if block.coordinated_fraction == 1.0:
            return "coordinated"
        if block.coordinated_fraction == 0.0:
            return "non_coordinated"
        return None
    if condition == "toxicity_class":
        if block.n_above == block.n:
            return "toxic"
        if block.n_below == block.n:
            return "non_toxic"
        return None
    if condition == "leaning_align":
        if user_leanings is None or block.mean_leaning is None:
            return None
        user_value = user_leanings.get(pair.user)
        if user_value is None or user_value == 0.0:
            return None
        if block.mean_leaning * user_value < 0.0:
            return "opposite_leaning"
        return "same_leaning"
    raise ValueError(f"unknown condition {condition!r}")


def conditioned_means(
    pairs: Sequence[BlockPair],
    condition: str,
    user_leanings: Optional[Mapping[str, float]] = None,
    replicates: int = 50000,
    seed: int = 0,
) -> dict[str, BootstrapSummary]:
    """Bootstrap mean production toxicity per condition value.

    Pairs failing the condition's purity rule are discarded; a condition value
    with no surviving pairs is simply absent from the result.
    """
    if condition not in CONDITIONS:
        raise ValueError(f"unknown condition {condition!r}")
    if not pairs:
        raise ValueError("pairs must be nonempty")
    groups: dict[str, list[float]] = {}
    ordered = sorted(pairs, key=lambda p: (p.user, p.index))
    for pair in ordered:
        value = classify_pair(pair, condition, user_leanings)
        if value is not None:
            groups.setdefault(value, []).append(pair.production.mean_toxicity)
    result: dict[str, BootstrapSummary] = {}
    for offset, name in enumerate(sorted(groups)):
        result[name] = bootstrap_mean(groups[name], replicates=replicates, seed=seed + offset)
    return result


def write_block_pairs_csv(pairs: Sequence[BlockPair], path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(
            [
                "user",
                "pair_index",
                "toxic_fraction",
                "coordinated_fraction",
                "mean_leaning",
                "production_mean_toxicity",
                "n_interactions",
                "n_productions",
            ]
        )
        for pair in sorted(pairs, key=lambda p: (p.user, p.index)):
            writer.writerow(
                [
                    pair.user,
                    pair.index,
                    repr(pair.interaction.toxic_fraction),
                    "" if pair.interaction.coordinated_fraction is None else repr(pair.interaction.coordinated_fraction),
                    "" if pair.interaction.mean_leaning is None else repr(pair.interaction.mean_leaning),
                    repr(pair.production.mean_toxicity),
                    pair.interaction.n,
                    pair.production.n,
                ]
            )


def write_block_pairs_detail_csv(pairs: Sequence[BlockPair], path: str) -> None:
    """Internal variant carrying the counts the purity filters need."""
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(
            [
                "user",
                "pair_index",
                "toxic_fraction",
                "coordinated_fraction",
                "mean_leaning",
                "production_mean_toxicity",
                "n_interactions",
                "n_productions",
                "n_steps",
                "n_above",
                "n_below",
            ]
        )
        for pair in sorted(pairs, key=lambda p: (p.user, p.index)):
            writer.writerow(
                [
                    pair.user,
                    pair.index,
                    repr(pair.interaction.toxic_fraction),
                    "" if pair.interaction.coordinated_fraction is None else repr(pair.interaction.coordinated_fraction),
                    "" if pair.interaction.mean_leaning is None else repr(pair.interaction.mean_leaning),
                    repr(pair.production.mean_toxicity),
                    pair.interaction.n,
                    pair.production.n,
                    pair.interaction.n_steps,
                    pair.interaction.n_above,
                    pair.interaction.n_below,
                ]
            )


def read_block_pairs_detail_csv(path: str) -> list[BlockPair]:
    pairs: list[BlockPair] = []
    with open(path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        next(reader, None)
        for row in reader:
            interaction = InteractionBlock(
                toxic_fraction=float(row[2]),
                coordinated_fraction=None if row[3] == "" else float(row[3]),
                mean_leaning=None if row[4] == "" else float(row[4]),
                n=int(row[6]),
                n_steps=int(row[8]),
                n_above=int(row[9]),
                n_below=int(row[10]),
            )
            production = ProductionBlock(mean_toxicity=float(row[5]), n=int(row[7]))
            pairs.append(BlockPair(user=row[0], index=int(row[1]), interaction=interaction, production=production))
    return pairs
