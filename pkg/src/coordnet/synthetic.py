"""Seeded synthetic corpora with planted structure.

The generator plants co-retweeting groups (dense, pool-focused retweet
behavior), politically slanted hashtag blocks wired to seed hashtags, cohort
toxicity regimes realized as lexicon tokens the offline scorer responds to,
and an optional lagged coupling between the toxicity of interacted content
and later background production.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from typing import Optional

import numpy as np

from .ingest import Corpus, PostRecord, SeedConfig, build_corpus, extract_hashtags

_FILLERS = (
    "the", "vote", "election", "today", "policy", "people", "country", "plan",
    "promise", "leader", "debate", "future", "change", "support", "community",
    "jobs", "health", "school", "tax", "housing", "manifesto", "count",
)
_STRONG_TERMS = ("scumbag", "wanker", "scum", "twat", "bastard", "vermin", "moron")
_MILD_TERMS = ("awful", "pathetic", "useless", "liar", "hypocrite", "terrible")


@dataclass(frozen=True)
class HashtagBlock:
    prefix: str
    n_hashtags: int
    leaning_center: float
    seed_value: Optional[float] = None  # seed hashtag leaning, None = no seed tag

    @property
    def seed_tag(self) -> Optional[str]:
        return f"#{self.prefix}seed" if self.seed_value is not None else None

    def tag(self, index: int) -> str:
        return f"#{self.prefix}{index}"


@dataclass(frozen=True)
class ToxicityProfile:
    toxic_post_rate: float
    mild_term_rate: float = 0.3


@dataclass(frozen=True)
class Coupling:
    lag_hours: int
    strength: float


DEFAULT_BLOCKS = (
    HashtagBlock(prefix="alpha", n_hashtags=30, leaning_center=-1.0, seed_value=-1.0),
    HashtagBlock(prefix="beta", n_hashtags=30, leaning_center=1.0, seed_value=1.0),
    HashtagBlock(prefix="main", n_hashtags=40, leaning_center=0.0, seed_value=0.0),
)


@dataclass(frozen=True)
class SyntheticSpec:
    n_users: int = 10000
    n_posts: int = 100000
    n_coordinated_groups: int = 2
    group_size: int = 50
    co_retweet_pool_size: int = 20
    co_retweet_rate: float = 0.8
    hashtag_blocks: tuple[HashtagBlock, ...] = DEFAULT_BLOCKS
    coordinated_toxicity: ToxicityProfile = ToxicityProfile(toxic_post_rate=0.5)
    background_toxicity: ToxicityProfile = ToxicityProfile(toxic_post_rate=0.1)
    coupling: Optional[Coupling] = Coupling(lag_hours=2, strength=0.6)
    n_hours: int = 480
    start: datetime = datetime(2019, 11, 12, tzinfo=timezone.utc)
    seed: int = 0

    def validate(self) -> None:
        if min(self.n_users, self.n_posts, self.n_coordinated_groups, self.group_size) < 1:
            raise ValueError("all counts must be positive")
        if self.co_retweet_pool_size < 1 or self.n_hours < 1:
            raise ValueError("all counts must be positive")
        if not 0 <= self.co_retweet_rate <= 1:
            raise ValueError("co_retweet_rate must be in [0, 1]")
        if self.n_coordinated_groups * self.group_size > self.n_users:
            raise ValueError("planted groups do not fit into n_users")
        for profile in (self.coordinated_toxicity, self.background_toxicity):
            if not 0 <= profile.toxic_post_rate <= 1:
                raise ValueError("toxic_post_rate must be in [0, 1]")
        if self.coupling is not None and not 0 <= self.coupling.strength <= 1:
            raise ValueError("coupling strength must be in [0, 1]")


@dataclass
class GroundTruth:
    coordinated_groups: dict[str, int] = field(default_factory=dict)
    hashtag_leanings: dict[str, float] = field(default_factory=dict)
    seed_config: SeedConfig = field(default_factory=lambda: SeedConfig({}, {}, frozenset()))
    coupling: Optional[Coupling] = None


class _Builder:
    def __init__(self, spec: SyntheticSpec):
        self.spec = spec
        self.rng = np.random.default_rng(spec.seed)
        self.records: list[PostRecord] = []
        self.next_id = 0
        # (post_id, author_id, hour, text) of posts available for interaction
        self.originals: list[tuple[str, str, int, str]] = []

    def new_id(self) -> str:
        pid = f"p{self.next_id:07d}"
        self.next_id += 1
        return pid

    def timestamp(self, hour: int) -> datetime:
        minute = int(self.rng.integers(0, 60))
        second = int(self.rng.integers(0, 60))
        return self.spec.start + timedelta(hours=int(hour), minutes=minute, seconds=second)

    def make_text(self, toxic: bool, mild_rate: float, hashtags: list[str]) -> str:
        rng = self.rng
        if toxic:
            n_fill, n_strong = 3, 6
            tokens = [_FILLERS[i] for i in rng.integers(0, len(_FILLERS), size=n_fill)]
            tokens += [_STRONG_TERMS[i] for i in rng.integers(0, len(_STRONG_TERMS), size=n_strong)]
        else:
            tokens = [_FILLERS[i] for i in rng.integers(0, len(_FILLERS), size=8)]
            if rng.random() < mild_rate:
                tokens.append(_MILD_TERMS[int(rng.integers(0, len(_MILD_TERMS)))])
        order = rng.permutation(len(tokens))
        text = " ".join(tokens[i] for i in order)
        if hashtags:
            text = text + " " + " ".join(hashtags)
        return text

    def pick_hashtags(self, block: HashtagBlock, include_seed_prob: float = 0.25) -> list[str]:
        rng = self.rng
        tags: list[str] = []
        if rng.random() < 0.85:
            n = 1 + int(rng.integers(0, 2))
            for i in rng.integers(0, block.n_hashtags, size=n):
                tags.append(block.tag(int(i)))
        if block.seed_tag is not None and rng.random() < include_seed_prob:
            tags.append(block.seed_tag)
        return sorted(set(tags))

    def add_original(self, author: str, hour: int, toxic: bool, mild_rate: float, hashtags: list[str]) -> str:
        pid = self.new_id()
        text = self.make_text(toxic, mild_rate, hashtags)
        self.records.append(
            PostRecord(
                post_id=pid,
                author_id=author,
                created_at=self.timestamp(hour),
                kind="original",
                text=text,
                hashtags=tuple(extract_hashtags(text)),
            )
        )
        self.originals.append((pid, author, hour, text))
        return pid

    def add_interaction(self, kind: str, author: str, target: tuple[str, str, int, str], own_text: str = "") -> None:
        target_id, target_author, target_hour, target_text = target
        hour = min(self.spec.n_hours - 1, target_hour + int(self.rng.integers(0, 3)))
        pid = self.new_id()
        if kind == "retweet":
            text = f"rt @{target_author}: {target_text}"
        elif kind == "quote":
            text = f"{own_text} https://t.co/{pid}"
        else:
            text = f"@{target_author} {own_text}"
        self.records.append(
            PostRecord(
                post_id=pid,
                author_id=author,
                created_at=self.timestamp(hour),
                kind=kind,
                text=text,
                hashtags=tuple(extract_hashtags(text)),
                referenced_post_id=target_id,
                referenced_author_id=target_author,
            )
        )


def generate(spec: SyntheticSpec) -> tuple[Corpus, GroundTruth]:
    """Build a corpus plus the planted labels, deterministically per seed."""
    spec.validate()
    builder = _Builder(spec)
    rng = builder.rng
    n_planted = spec.n_coordinated_groups * spec.group_size

    users = [f"u{i:05d}" for i in range(spec.n_users)]
    planted_idx = rng.choice(spec.n_users, size=n_planted, replace=False)
    planted_users = [users[i] for i in planted_idx]
    planted_set = set(planted_users)
    background_users = [u for u in users if u not in planted_set]
    groups = {
        user: g
        for g, chunk in enumerate(
            planted_users[i * spec.group_size : (i + 1) * spec.group_size]
            for i in range(spec.n_coordinated_groups)
        )
        for user in chunk
    }

    polarized = [b for b in spec.hashtag_blocks if b.leaning_center != 0.0] or list(spec.hashtag_blocks)
    neutral = [b for b in spec.hashtag_blocks if b.leaning_center == 0.0] or list(spec.hashtag_blocks)
    group_block = {g: polarized[g % len(polarized)] for g in range(spec.n_coordinated_groups)}

    # Background users carry a latent alignment driving their hashtag choices.
    alignment: dict[str, HashtagBlock] = {}
    for user in background_users:
        r = rng.random()
        if r < 0.4:
            alignment[user] = polarized[0]
        elif r < 0.8 and len(polarized) > 1:
            alignment[user] = polarized[1]
        else:
            alignment[user] = neutral[0]

    # Hourly toxicity regime for coordinated content; background production
    # follows it with a lag when coupling is enabled.
    hours = np.arange(spec.n_hours)
    regime = 0.5 + 0.4 * np.sin(2 * np.pi * hours / 72.0) + 0.05 * rng.standard_normal(spec.n_hours)
    regime = np.clip(regime, 0.05, 0.95)
    if spec.coupling is not None and spec.coupling.strength > 0:
        lagged = np.roll(regime, spec.coupling.lag_hours)
        base = spec.background_toxicity.toxic_post_rate
        background_rate = np.clip(base + spec.coupling.strength * (lagged - 0.5), 0.01, 0.99)
    else:
        background_rate = np.full(spec.n_hours, spec.background_toxicity.toxic_post_rate)

    # Post budget. Planted users pad their pool co-retweets with enough
    # popular-post retweets to sit firmly in the top retweeter tier.
    n_pool = spec.n_coordinated_groups * spec.co_retweet_pool_size
    n_coord_orig = 3 * n_planted
    n_from_pool = int(round(spec.co_retweet_rate * spec.co_retweet_pool_size))
    planted_extra = rng.integers(30, 46, size=n_planted)
    n_planted_rt = n_planted * n_from_pool + int(planted_extra.sum())
    n_replies = max(1, int(0.04 * spec.n_posts))
    n_quotes = max(1, int(0.04 * spec.n_posts))
    n_bg_orig = max(1, int(0.28 * spec.n_posts))
    used = n_pool + n_coord_orig + n_planted_rt + n_replies + n_quotes + n_bg_orig
    n_bg_rt = max(1, spec.n_posts - used)

    mild = spec.background_toxicity.mild_term_rate

    # Amplified accounts authoring the co-retweet pools.
    pools: dict[int, list[tuple[str, str, int, str]]] = {}
    for g in range(spec.n_coordinated_groups):
        amp = f"amp{g:02d}"
        block = group_block[g]
        pools[g] = []
        for _ in range(spec.co_retweet_pool_size):
            hour = int(rng.integers(0, spec.n_hours))
            toxic = rng.random() < spec.background_toxicity.toxic_post_rate
            builder.add_original(amp, hour, toxic, mild, builder.pick_hashtags(block))
            pools[g].append(builder.originals[-1])

    # Coordinated users' own originals; toxicity tracks the hourly regime.
    coord_originals: list[tuple[str, str, int, str]] = []
    for user in planted_users:
        block = group_block[groups[user]]
        for _ in range(3):
            hour = int(rng.integers(0, spec.n_hours))
            toxic = rng.random() < regime[hour] * spec.coordinated_toxicity.toxic_post_rate * 2
            builder.add_original(user, hour, toxic, mild, builder.pick_hashtags(block))
            coord_originals.append(builder.originals[-1])

    # Background originals; coupled toxicity when configured.
    bg_author_idx = rng.integers(0, len(background_users), size=n_bg_orig)
    for i in range(n_bg_orig):
        author = background_users[int(bg_author_idx[i])]
        hour = int(rng.integers(0, spec.n_hours))
        toxic = rng.random() < background_rate[hour]
        tags = builder.pick_hashtags(alignment[author]) if rng.random() < 0.7 else []
        builder.add_original(author, hour, toxic, mild, tags)
    bg_originals = builder.originals[n_pool + len(coord_originals) :]

    # Planted co-retweets plus popular background noise.
    popularity = 1.0 / np.arange(1, len(bg_originals) + 1) ** 1.1
    popularity /= popularity.sum()
    for rank, user in enumerate(planted_users):
        pool = pools[groups[user]]
        chosen = rng.choice(len(pool), size=min(n_from_pool, len(pool)), replace=False)
        for idx in sorted(int(i) for i in chosen):
            builder.add_interaction("retweet", user, pool[idx])
        extra = rng.choice(len(bg_originals), size=int(planted_extra[rank]), p=popularity)
        for idx in extra:
            builder.add_interaction("retweet", user, bg_originals[int(idx)])

    # Background retweets: heavy-tailed per-user activity; a slice of targets
    # is coordinated-authored so exposure to planted content exists.
    activity = np.minimum(rng.zipf(2.6, size=len(background_users)), 20)
    activity_weights = activity / activity.sum()
    rt_authors = rng.choice(len(background_users), size=n_bg_rt, p=activity_weights)
    coord_share = rng.random(n_bg_rt) < 0.3
    bg_target_idx = rng.choice(len(bg_originals), size=n_bg_rt, p=popularity)
    coord_target_idx = rng.integers(0, len(coord_originals), size=n_bg_rt)
    for i in range(n_bg_rt):
        author = background_users[int(rt_authors[i])]
        if coord_share[i]:
            target = coord_originals[int(coord_target_idx[i])]
        else:
            target = bg_originals[int(bg_target_idx[i])]
        if target[1] == author:
            target = bg_originals[int((bg_target_idx[i] + 1) % len(bg_originals))]
        builder.add_interaction("retweet", author, target)

    # Replies and quotes from background users.
    all_targets = builder.originals
    reply_authors = rng.choice(len(background_users), size=n_replies + n_quotes, p=activity_weights)
    reply_targets = rng.integers(0, len(all_targets), size=n_replies + n_quotes)
    for i in range(n_replies + n_quotes):
        kind = "reply" if i < n_replies else "quote"
        author = background_users[int(reply_authors[i])]
        target = all_targets[int(reply_targets[i])]
        if target[1] == author:
            target = all_targets[int((reply_targets[i] + 1) % len(all_targets))]
        hour = min(spec.n_hours - 1, target[2] + int(rng.integers(0, 3)))
        toxic = rng.random() < background_rate[hour]
        own = builder.make_text(toxic, mild, [])
        builder.add_interaction(kind, author, target, own_text=own)

    corpus = build_corpus(builder.records)
    truth = GroundTruth(
        coordinated_groups=dict(groups),
        hashtag_leanings=_planted_hashtag_leanings(spec),
        seed_config=_seed_config(spec),
        coupling=spec.coupling,
    )
    return corpus, truth


def _planted_hashtag_leanings(spec: SyntheticSpec) -> dict[str, float]:
    out: dict[str, float] = {}
    for block in spec.hashtag_blocks:
        for i in range(block.n_hashtags):
            out[block.tag(i)] = block.leaning_center
        if block.seed_tag is not None:
            out[block.seed_tag] = block.seed_value
    return out


def _seed_config(spec: SyntheticSpec) -> SeedConfig:
    hashtag_leanings = {
        block.seed_tag: float(block.seed_value)
        for block in spec.hashtag_blocks
        if block.seed_tag is not None
    }
    excluded = frozenset(f"amp{g:02d}" for g in range(spec.n_coordinated_groups))
    return SeedConfig(hashtag_leanings=hashtag_leanings, account_leanings={}, excluded_accounts=excluded)


def write_ground_truth(truth: GroundTruth, users_path: str, hashtags_path: str) -> None:
    with open(users_path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["user", "group"])
        for user in sorted(truth.coordinated_groups):
            writer.writerow([user, truth.coordinated_groups[user]])
    with open(hashtags_path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["hashtag", "leaning"])
        for tag in sorted(truth.hashtag_leanings):
            writer.writerow([tag, repr(truth.hashtag_leanings[tag])])
