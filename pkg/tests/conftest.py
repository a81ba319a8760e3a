from __future__ import annotations

from datetime import datetime, timedelta, timezone

import pytest

from coordnet.ingest import PostRecord, build_corpus, extract_hashtags

T0 = datetime(2019, 11, 12, tzinfo=timezone.utc)


def make_post(
    post_id: str,
    author: str = "u1",
    kind: str = "original",
    text: str = "hello world",
    minutes: int = 0,
    ref: str | None = None,
    ref_author: str | None = None,
):
    return PostRecord(
        post_id=post_id,
        author_id=author,
        created_at=T0 + timedelta(minutes=minutes),
        kind=kind,
        text=text,
        hashtags=tuple(extract_hashtags(text)),
        referenced_post_id=ref,
        referenced_author_id=ref_author,
    )


@pytest.fixture
def tiny_corpus():
    posts = [
        make_post("p1", "alice", "original", "morning #ge2019 everyone", minutes=0),
        make_post("p2", "bob", "retweet", "rt @alice: morning #ge2019 everyone", minutes=5, ref="p1", ref_author="alice"),
        make_post("p3", "alice", "reply", "@bob agreed", minutes=10, ref="p2", ref_author="bob"),
    ]
    return build_corpus(posts)
