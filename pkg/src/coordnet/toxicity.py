"""Text normalization and per-post toxicity scoring.

Scores come either from a remote HTTP service that returns a ``TOXICITY``
probability for a piece of text, or from a deterministic offline scorer backed
by a bundled weighted lexicon. The offline path exists so the whole pipeline
can run hermetically and reproducibly.
"""

from __future__ import annotations

import csv
import json
import math
import os
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from typing import Callable, Mapping, Optional

import requests

from .ingest import Corpus

UNSCORED_REASONS = ("empty_after_preprocessing", "unsupported_language", "service_error")

LEXICON_RESOURCE = "toxicity_lexicon_v1.json"

_URL_RE = re.compile(r"(?:https?://\S+|\bt\.co/\S+)", re.IGNORECASE)
_MENTION_RE = re.compile(r"@\w+:?")
_HASHTAG_RE = re.compile(r"#\w+")
_WHITESPACE_RE = re.compile(r"\s+")

# Codepoint ranges carrying the Unicode emoji presentation blocks, plus the
# variation selectors and regional indicators used to compose them.
_EMOJI_RANGES = (
    (0x1F000, 0x1FAFF),
    (0x2600, 0x27BF),
    (0x2190, 0x21FF),
    (0x2B00, 0x2BFF),
    (0xFE00, 0xFE0F),
    (0x1F1E6, 0x1F1FF),
    (0x200D, 0x200D),
    (0x20E3, 0x20E3),
)


class ScoringError(Exception):
    """Raised for fatal scoring problems (bad cache, missing API key)."""


def _is_emoji(char: str) -> bool:
    code = ord(char)
    return any(lo <= code <= hi for lo, hi in _EMOJI_RANGES)


def preprocess_text(text: str) -> str:
    """Lowercase and strip hashtags, URLs, @-mentions, and emoji.

    Whitespace is collapsed to single spaces; the result may be empty.
    """
    out = text.lower()
    out = _URL_RE.sub(" ", out)
    out = _MENTION_RE.sub(" ", out)
    out = _HASHTAG_RE.sub(" ", out)
    out = "".join(ch for ch in out if not _is_emoji(ch))
    return _WHITESPACE_RE.sub(" ", out).strip()


@dataclass(frozen=True)
class Lexicon:
    version: int
    bias: float
    terms: dict[str, float]


def load_lexicon() -> Lexicon:
    raw = resources.files("coordnet").joinpath("data").joinpath(LEXICON_RESOURCE).read_text("utf-8")
    obj = json.loads(raw)
    return Lexicon(version=obj["version"], bias=float(obj["bias"]), terms={k: float(v) for k, v in obj["terms"].items()})


_LEXICON: Optional[Lexicon] = None


def _lexicon() -> Lexicon:
    global _LEXICON
    if _LEXICON is None:
        _LEXICON = load_lexicon()
    return _LEXICON


def lexicon_hits(text: str) -> tuple[float, int]:
    """Summed lexicon weights over the tokens of an already-preprocessed text.

    Returns (weight_sum, token_count). This is the pre-normalization quantity:
    adding a positive-weight token can only increase the sum.
    """
    lex = _lexicon()
    tokens = re.findall(r"[a-z0-9']+", text)
    total = 0.0
    for token in tokens:
        total += lex.terms.get(token, 0.0)
    return total, len(tokens)


def offline_score(text: str) -> float:
    """Deterministic toxicity score in [0, 1] for preprocessed text.

    logistic(weight_sum / token_count + bias); the negative bias anchors
    lexicon-free text near zero.
    """
    hits, n_tokens = lexicon_hits(text)
    z = hits / max(n_tokens, 1) + _lexicon().bias
    return 1.0 / (1.0 + math.exp(-z))


@dataclass(frozen=True)
class ScorerConfig:
    mode: str = "offline"  # "offline" | "remote"
    endpoint: str = ""
    api_key_env: str = "TOXICITY_API_KEY"
    max_qps: float = 10.0
    max_retries: int = 3
    batch_concurrency: int = 1

    def __post_init__(self) -> None:
        if self.mode not in ("offline", "remote"):
            raise ValueError(f"unknown scorer mode {self.mode!r}")
        if not self.max_qps > 0:
            raise ValueError("max_qps must be positive")
        if self.batch_concurrency < 1:
            raise ValueError("batch_concurrency must be >= 1")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")


@dataclass
class ToxicityTable:
    scores: dict[str, float] = field(default_factory=dict)
    unscored: dict[str, str] = field(default_factory=dict)

    def merge(self, other: "ToxicityTable") -> None:
        self.scores.update(other.scores)
        for post_id, reason in other.unscored.items():
            if post_id not in self.scores:
                self.unscored[post_id] = reason

    def covers(self, post_id: str) -> bool:
        return post_id in self.scores or post_id in self.unscored


class RateLimiter:
    """Spaces calls so any sliding 1 s window sees at most ceil(max_qps).

    Slot k is scheduled at origin + k * interval (one multiply, not an
    accumulated increment), with the interval padded by a relative 1e-9 so
    float rounding can never pull ceil(max_qps) + 1 slots inside a window.
    """

    def __init__(self, max_qps: float, time_fn: Callable[[], float] = time.monotonic, sleep_fn: Callable[[float], None] = time.sleep):
        self._interval = (1.0 + 1e-9) / max_qps
        self._time = time_fn
        self._sleep = sleep_fn
        self._origin = self._time()
        self._count = 0
        self._lock = threading.Lock()

    def acquire(self) -> None:
        with self._lock:
            scheduled = self._origin + self._count * self._interval
            now = self._time()
            if now > scheduled:
                # Late: restart the schedule from the present.
                self._origin = now
                self._count = 0
                scheduled = now
            self._count += 1
            wait = scheduled - now
        if wait > 0:
            self._sleep(wait)


class UnsupportedLanguage(Exception):
    pass


class ServiceFailure(Exception):
    pass


def _default_post_fn(endpoint: str, api_key: str, text: str, timeout: float = 30.0) -> float:
    body = {"comment": {"text": text}, "requestedAttributes": {"TOXICITY": {}}}
    response = requests.post(endpoint, params={"key": api_key}, json=body, timeout=timeout)
    if response.status_code == 400 and b"LANGUAGE_NOT_SUPPORTED" in response.content:
        raise UnsupportedLanguage(text[:40])
    if response.status_code != 200:
        raise ServiceFailure(f"HTTP {response.status_code}")
    payload = response.json()
    return float(payload["attributeScores"]["TOXICITY"]["summaryScore"]["value"])


def score_posts(
    corpus: Corpus,
    config: ScorerConfig,
    cache: Optional[ToxicityTable] = None,
    *,
    post_fn: Optional[Callable[[str, str, str], float]] = None,
    time_fn: Callable[[], float] = time.monotonic,
    sleep_fn: Callable[[float], None] = time.sleep,
) -> ToxicityTable:
    """Score every corpus post not already covered by the cache.

    Posts whose text is empty after preprocessing are never submitted.
    Remote failures are retried with exponential backoff up to
    ``config.max_retries`` and then recorded as ``service_error`` (retriable on
    a later run); language rejections are terminal.
    """
    table = ToxicityTable()
    if cache is not None:
        table.merge(cache)
    api_key = ""
    if config.mode == "remote":
        api_key = os.environ.get(config.api_key_env, "")
        if not api_key:
            raise ScoringError(f"environment variable {config.api_key_env} is not set")
        if post_fn is None:
            post_fn = lambda endpoint, key, text: _default_post_fn(endpoint, key, text)  # noqa: E731
    limiter = RateLimiter(config.max_qps, time_fn=time_fn, sleep_fn=sleep_fn)
    for post in corpus.posts:
        if table.covers(post.post_id) and table.unscored.get(post.post_id) != "service_error":
            continue
        cleaned = preprocess_text(post.text)
        if not cleaned:
            table.unscored[post.post_id] = "empty_after_preprocessing"
            table.scores.pop(post.post_id, None)
            continue
        if config.mode == "offline":
            table.scores[post.post_id] = offline_score(cleaned)
            table.unscored.pop(post.post_id, None)
            continue
        outcome = _score_remote(cleaned, config, api_key, post_fn, limiter, sleep_fn)
        if isinstance(outcome, float):
            table.scores[post.post_id] = outcome
            table.unscored.pop(post.post_id, None)
        else:
            table.unscored[post.post_id] = outcome
    return table


def _score_remote(
    text: str,
    config: ScorerConfig,
    api_key: str,
    post_fn: Callable[[str, str, str], float],
    limiter: RateLimiter,
    sleep_fn: Callable[[float], None],
) -> float | str:
    backoff = 0.5
    for attempt in range(config.max_retries + 1):
        limiter.acquire()
        try:
            value = post_fn(config.endpoint, api_key, text)
        except UnsupportedLanguage:
            return "unsupported_language"
        except Exception:
            if attempt == config.max_retries:
                return "service_error"
            sleep_fn(backoff)
            backoff *= 2
            continue
        return min(1.0, max(0.0, value))
    return "service_error"


def write_cache(table: ToxicityTable, scores_path: str, unscored_path: str) -> None:
    with open(scores_path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["post_id", "toxicity"])
        for post_id in sorted(table.scores):
            writer.writerow([post_id, repr(table.scores[post_id])])
    with open(unscored_path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["post_id", "reason"])
        for post_id in sorted(table.unscored):
            writer.writerow([post_id, table.unscored[post_id]])


def read_cache(scores_path: str, unscored_path: str) -> ToxicityTable:
    table = ToxicityTable()
    try:
        with open(scores_path, "r", encoding="utf-8", newline="") as handle:
            reader = csv.reader(handle)
            header = next(reader, None)
            if header != ["post_id", "toxicity"]:
                raise ScoringError(f"corrupt score cache {scores_path}: header {header}")
            for row in reader:
                if len(row) != 2:
                    raise ScoringError(f"corrupt score cache {scores_path}: row {row}")
                value = float(row[1])
                if not 0.0 <= value <= 1.0:
                    raise ScoringError(f"corrupt score cache {scores_path}: score {value}")
                table.scores[row[0]] = value
    except OSError as exc:
        raise ScoringError(f"cannot read score cache {scores_path}: {exc}") from exc
    except ValueError as exc:
        raise ScoringError(f"corrupt score cache {scores_path}: {exc}") from exc
    try:
        with open(unscored_path, "r", encoding="utf-8", newline="") as handle:
            reader = csv.reader(handle)
            header = next(reader, None)
            if header != ["post_id", "reason"]:
                raise ScoringError(f"corrupt unscored cache {unscored_path}: header {header}")
            for row in reader:
                if len(row) != 2 or row[1] not in UNSCORED_REASONS:
                    raise ScoringError(f"corrupt unscored cache {unscored_path}: row {row}")
                table.unscored[row[0]] = row[1]
    except OSError as exc:
        raise ScoringError(f"cannot read unscored cache {unscored_path}: {exc}") from exc
    return table


def score_map(table: ToxicityTable) -> Mapping[str, float]:
    return table.scores
