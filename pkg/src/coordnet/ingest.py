"""Corpus loading, validation, and indexing.

The corpus is newline-delimited JSON, one post per line. Hashtags are never
read from the input; they are always derived from the post text so that the
same tokenization rules apply everywhere.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Iterable, Optional

POST_KINDS = ("original", "retweet", "reply", "quote")
REFERENCING_KINDS = frozenset({"retweet", "reply", "quote"})

# '#' followed by a maximal run of ASCII word characters, case-folded.
HASHTAG_RE = re.compile(r"#[A-Za-z0-9_]+")

CORPUS_FIELDS = (
    "post_id",
    "author_id",
    "created_at",
    "kind",
    "text",
    "referenced_post_id",
    "referenced_author_id",
)


class CorpusError(Exception):
    """Raised for unreadable or structurally invalid corpus input."""


class SeedConfigError(Exception):
    """Raised for invalid seed configuration files."""


def extract_hashtags(text: str) -> list[str]:
    """Return lowercased hashtags in first-occurrence order, deduplicated."""
    seen: dict[str, None] = {}
    for match in HASHTAG_RE.findall(text):
        seen.setdefault(match.lower(), None)
    return list(seen)


def parse_utc_timestamp(raw: str) -> datetime:
    """Parse an ISO-8601 instant and normalize it to UTC.

    Naive timestamps are rejected: downstream hourly binning needs one
    canonical clock.
    """
    value = raw.strip()
    if value.endswith(("Z", "z")):
        value = value[:-1] + "+00:00"
    try:
        parsed = datetime.fromisoformat(value)
    except ValueError as exc:
        raise ValueError(f"invalid ISO-8601 timestamp: {raw!r}") from exc
    if parsed.tzinfo is None:
        raise ValueError(f"timestamp lacks a UTC offset: {raw!r}")
    return parsed.astimezone(timezone.utc)


@dataclass(frozen=True)
class PostRecord:
    """One tweet-like record."""

    post_id: str
    author_id: str
    created_at: datetime
    kind: str
    text: str
    hashtags: tuple[str, ...]
    referenced_post_id: Optional[str] = None
    referenced_author_id: Optional[str] = None

    def validate(self) -> None:
        if self.kind not in POST_KINDS:
            raise ValueError(f"unknown post kind {self.kind!r}")
        if self.kind in REFERENCING_KINDS:
            if not self.referenced_post_id:
                raise ValueError(f"{self.kind} post {self.post_id} lacks referenced_post_id")
        else:
            if self.referenced_post_id is not None or self.referenced_author_id is not None:
                raise ValueError(f"original post {self.post_id} carries reference fields")
        if self.created_at.tzinfo is None:
            raise ValueError(f"post {self.post_id} has a naive timestamp")

    def to_json_dict(self) -> dict:
        out = {
            "post_id": self.post_id,
            "author_id": self.author_id,
            "created_at": self.created_at.strftime("%Y-%m-%dT%H:%M:%S+00:00"),
            "kind": self.kind,
            "text": self.text,
        }
        if self.referenced_post_id is not None:
            out["referenced_post_id"] = self.referenced_post_id
        if self.referenced_author_id is not None:
            out["referenced_author_id"] = self.referenced_author_id
        return out


def post_from_json_dict(obj: dict) -> PostRecord:
    if not isinstance(obj, dict):
        raise ValueError("record is not a JSON object")
    unknown = set(obj) - set(CORPUS_FIELDS)
    if unknown:
        raise ValueError(f"unknown fields: {sorted(unknown)}")
    try:
        post_id = obj["post_id"]
        author_id = obj["author_id"]
        created_raw = obj["created_at"]
        kind = obj["kind"]
        text = obj["text"]
    except KeyError as exc:
        raise ValueError(f"missing field {exc.args[0]!r}") from None
    for name, value in (("post_id", post_id), ("author_id", author_id), ("kind", kind), ("text", text)):
        if not isinstance(value, str):
            raise ValueError(f"field {name!r} must be a string")
    record = PostRecord(
        post_id=post_id,
        author_id=author_id,
        created_at=parse_utc_timestamp(created_raw),
        kind=kind,
        text=text,
        hashtags=tuple(extract_hashtags(text)),
        referenced_post_id=obj.get("referenced_post_id"),
        referenced_author_id=obj.get("referenced_author_id"),
    )
    record.validate()
    return record


@dataclass
class Corpus:
    """Immutable-after-construction post collection with exact inverse indexes."""

    posts: list[PostRecord] = field(default_factory=list)
    by_id: dict[str, PostRecord] = field(default_factory=dict)
    by_author: dict[str, list[str]] = field(default_factory=dict)
    by_hashtag: dict[str, list[str]] = field(default_factory=dict)
    retweet_counts: dict[str, int] = field(default_factory=dict)
    skipped_lines: int = 0

    def add(self, post: PostRecord) -> None:
        if post.post_id in self.by_id:
            raise CorpusError(f"duplicate post_id {post.post_id!r}")
        self.posts.append(post)
        self.by_id[post.post_id] = post
        self.by_author.setdefault(post.author_id, []).append(post.post_id)
        for tag in post.hashtags:
            self.by_hashtag.setdefault(tag, []).append(post.post_id)
        if post.kind == "retweet":
            self.retweet_counts[post.author_id] = self.retweet_counts.get(post.author_id, 0) + 1

    def __len__(self) -> int:
        return len(self.posts)

    def authors(self) -> list[str]:
        return sorted(self.by_author)

    def posts_by_author(self, author_id: str) -> list[PostRecord]:
        return [self.by_id[pid] for pid in self.by_author.get(author_id, [])]

    def author_of(self, post_id: str) -> Optional[str]:
        post = self.by_id.get(post_id)
        return post.author_id if post is not None else None


def load_corpus(path: str, strict: bool = True) -> Corpus:
    """Load a newline-delimited JSON corpus.

    In strict mode any malformed line aborts with its line number. In lenient
    mode malformed lines are skipped and counted in ``Corpus.skipped_lines``.
    A duplicate post_id is always fatal.
    """
    corpus = Corpus()
    try:
        handle = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise CorpusError(f"cannot read corpus file {path}: {exc}") from exc
    with handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                post = post_from_json_dict(obj)
            except (ValueError, TypeError) as exc:
                if strict:
                    raise CorpusError(f"{path}:{lineno}: malformed record: {exc}") from exc
                corpus.skipped_lines += 1
                continue
            corpus.add(post)
    return corpus


def dump_corpus(corpus: Corpus, path: str) -> None:
    """Write the corpus back out in the load format (round-trip safe)."""
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for post in corpus.posts:
            handle.write(json.dumps(post.to_json_dict(), sort_keys=False))
            handle.write("\n")


def build_corpus(posts: Iterable[PostRecord]) -> Corpus:
    corpus = Corpus()
    for post in posts:
        post.validate()
        corpus.add(post)
    return corpus


HASHTAG_LEANING_VALUES = (-1.0, 0.0, 1.0)
ACCOUNT_LEANING_VALUES = (-1.0, 1.0)

_SECTION_HEADERS = {
    "hashtag,leaning": "hashtag",
    "account,leaning": "account",
    "excluded_account": "excluded",
}


@dataclass(frozen=True)
class SeedConfig:
    """Seed hashtag/account leanings plus the manually labeled exclusion list."""

    hashtag_leanings: dict[str, float]
    account_leanings: dict[str, float]
    excluded_accounts: frozenset[str]


def _normalize_hashtag(raw: str) -> str:
    tag = raw.strip().lower()
    if not tag.startswith("#"):
        tag = "#" + tag
    if not HASHTAG_RE.fullmatch(tag):
        raise SeedConfigError(f"invalid hashtag {raw!r}")
    return tag


def load_seed_config(path: str) -> SeedConfig:
    """Parse the sectioned seed CSV (hashtag leanings, account leanings, exclusions)."""
    hashtags: dict[str, float] = {}
    accounts: dict[str, float] = {}
    excluded: set[str] = set()
    section: Optional[str] = None
    try:
        handle = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise SeedConfigError(f"cannot read seed config {path}: {exc}") from exc
    with handle:
        for lineno, line in enumerate(handle, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#!"):
                continue
            if stripped.lower() in _SECTION_HEADERS:
                section = _SECTION_HEADERS[stripped.lower()]
                continue
            if section is None:
                raise SeedConfigError(f"{path}:{lineno}: data before any section header")
            if section == "hashtag":
                key, leaning = _parse_leaning_row(stripped, path, lineno, HASHTAG_LEANING_VALUES)
                tag = _normalize_hashtag(key)
                if tag in hashtags:
                    raise SeedConfigError(f"{path}:{lineno}: duplicate hashtag {tag}")
                hashtags[tag] = leaning
            elif section == "account":
                key, leaning = _parse_leaning_row(stripped, path, lineno, ACCOUNT_LEANING_VALUES)
                if key in accounts:
                    raise SeedConfigError(f"{path}:{lineno}: duplicate account {key}")
                accounts[key] = leaning
            else:
                excluded.add(stripped)
    return SeedConfig(
        hashtag_leanings=hashtags,
        account_leanings=accounts,
        excluded_accounts=frozenset(excluded),
    )


def _parse_leaning_row(
    row: str, path: str, lineno: int, allowed: tuple[float, ...]
) -> tuple[str, float]:
    parts = row.split(",")
    if len(parts) != 2:
        raise SeedConfigError(f"{path}:{lineno}: expected 'key,leaning', got {row!r}")
    key = parts[0].strip()
    try:
        leaning = float(parts[1])
    except ValueError:
        raise SeedConfigError(f"{path}:{lineno}: leaning is not a number: {parts[1]!r}") from None
    if leaning not in allowed:
        raise SeedConfigError(f"{path}:{lineno}: leaning {leaning} not in {sorted(allowed)}")
    return key, leaning


def write_seed_config(config: SeedConfig, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write("hashtag,leaning\n")
        for tag in sorted(config.hashtag_leanings):
            handle.write(f"{tag},{_format_leaning(config.hashtag_leanings[tag])}\n")
        handle.write("account,leaning\n")
        for account in sorted(config.account_leanings):
            handle.write(f"{account},{_format_leaning(config.account_leanings[account])}\n")
        handle.write("excluded_account\n")
        for account in sorted(config.excluded_accounts):
            handle.write(f"{account}\n")


def _format_leaning(value: float) -> str:
    return str(int(value)) if float(value).is_integer() else repr(value)
