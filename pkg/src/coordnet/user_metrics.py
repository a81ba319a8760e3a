"""Per-user toxicity and activity filters."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional

from .ingest import PostRecord


@dataclass(frozen=True)
class UserToxicity:
    value: float
    n_posts_considered: int
    n_top_used: int


def user_toxicity(
    posts: Iterable[PostRecord],
    toxicity: Mapping[str, float],
    top_fraction: float = 0.10,
    include_retweets: bool = True,
) -> Optional[UserToxicity]:
    """Mean toxicity of the user's most toxic posts.

    Considers originals (and retweets unless excluded) that have a score; the
    top ceil(top_fraction * n) scores are averaged, never fewer than one.
    Returns None when the user has no eligible post.
    """
    if not 0 < top_fraction <= 1:
        raise ValueError(f"top_fraction must be in (0, 1], got {top_fraction}")
    kinds = ("original", "retweet") if include_retweets else ("original",)
    values = sorted(
        (toxicity[p.post_id] for p in posts if p.kind in kinds and p.post_id in toxicity),
        reverse=True,
    )
    if not values:
        return None
    n = len(values)
    k = max(1, math.ceil(top_fraction * n))
    return UserToxicity(value=sum(values[:k]) / k, n_posts_considered=n, n_top_used=k)


def filter_min_activity(user_counts: Mapping[str, int], minimum: int = 5) -> set[str]:
    """Users with at least ``minimum`` counted posts (boundary inclusive)."""
    return {user for user, count in user_counts.items() if count >= minimum}


def write_user_toxicity_csv(values: Mapping[str, UserToxicity], path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["user", "toxicity", "n_posts", "n_top"])
        for user in sorted(values):
            ut = values[user]
            writer.writerow([user, repr(ut.value), ut.n_posts_considered, ut.n_top_used])


def read_user_toxicity_csv(path: str) -> dict[str, UserToxicity]:
    out: dict[str, UserToxicity] = {}
    with open(path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header != ["user", "toxicity", "n_posts", "n_top"]:
            raise ValueError(f"unexpected user toxicity CSV header in {path}: {header}")
        for row in reader:
            out[row[0]] = UserToxicity(float(row[1]), int(row[2]), int(row[3]))
    return out
