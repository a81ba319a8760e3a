from __future__ import annotations

import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from coordnet.ingest import (
    Corpus,
    CorpusError,
    SeedConfigError,
    build_corpus,
    dump_corpus,
    extract_hashtags,
    load_corpus,
    load_seed_config,
    parse_utc_timestamp,
    write_seed_config,
)

from conftest import make_post


def _write_lines(path, lines):
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _record(post_id, kind="original", **overrides):
    obj = {
        "post_id": post_id,
        "author_id": "alice",
        "created_at": "2019-11-12T10:00:00Z",
        "kind": kind,
        "text": "hello #GE2019",
    }
    if kind in ("retweet", "reply", "quote"):
        obj["referenced_post_id"] = "x1"
        obj["referenced_author_id"] = "bob"
    obj.update(overrides)
    return json.dumps(obj)


class TestExtractHashtags:
    def test_dedup_and_lowercase(self):
        assert extract_hashtags("Vote #GE2019 and #getbrexitdone #GE2019") == ["#ge2019", "#getbrexitdone"]

    def test_no_tags(self):
        assert extract_hashtags("no tags here") == []

    def test_punctuation_splits_tokens(self):
        assert extract_hashtags("#ForTheMany,#ForTheManyNotTheFew") == ["#forthemany", "#forthemanynotthefew"]

    @given(st.text(max_size=200))
    def test_output_shape(self, text):
        tags = extract_hashtags(text)
        assert len(tags) == len(set(tags))
        for tag in tags:
            assert tag.startswith("#")
            assert tag == tag.lower()

    @given(st.lists(st.from_regex(r"#[a-z0-9_]{1,10}", fullmatch=True), max_size=8))
    def test_idempotent_on_rendered_output(self, tags):
        rendered = " ".join(tags)
        once = extract_hashtags(rendered)
        assert extract_hashtags(" ".join(once)) == once


class TestLoadCorpus:
    def test_three_valid_records(self, tmp_path):
        path = tmp_path / "c.jsonl"
        _write_lines(path, [_record("p1"), _record("p2", "retweet"), _record("p3", "quote")])
        corpus = load_corpus(str(path), strict=True)
        assert len(corpus) == 3
        assert corpus.by_author["alice"] == ["p1", "p2", "p3"]
        assert corpus.by_hashtag["#ge2019"] == ["p1", "p2", "p3"]
        assert corpus.retweet_counts == {"alice": 1}

    def test_strict_error_names_line(self, tmp_path):
        path = tmp_path / "c.jsonl"
        bad = json.loads(_record("p2", "retweet"))
        del bad["referenced_post_id"]
        _write_lines(path, [_record("p1"), json.dumps(bad)])
        with pytest.raises(CorpusError, match=":2:"):
            load_corpus(str(path), strict=True)

    def test_lenient_counts_skipped(self, tmp_path):
        path = tmp_path / "c.jsonl"
        _write_lines(path, [_record("p1"), "{not json", _record("p3")])
        corpus = load_corpus(str(path), strict=False)
        assert len(corpus) == 2
        assert corpus.skipped_lines == 1

    def test_duplicate_post_id_always_fatal(self, tmp_path):
        path = tmp_path / "c.jsonl"
        _write_lines(path, [_record("p1"), _record("p1")])
        with pytest.raises(CorpusError, match="duplicate"):
            load_corpus(str(path), strict=False)

    def test_unreadable_file(self, tmp_path):
        with pytest.raises(CorpusError):
            load_corpus(str(tmp_path / "missing.jsonl"))

    def test_original_with_reference_rejected(self, tmp_path):
        path = tmp_path / "c.jsonl"
        _write_lines(path, [_record("p1", referenced_post_id="x")])
        with pytest.raises(CorpusError):
            load_corpus(str(path))

    def test_round_trip(self, tmp_path, tiny_corpus):
        path = tmp_path / "out.jsonl"
        dump_corpus(tiny_corpus, str(path))
        reloaded = load_corpus(str(path))
        assert reloaded.posts == tiny_corpus.posts
        assert reloaded.by_author == tiny_corpus.by_author
        assert reloaded.by_hashtag == tiny_corpus.by_hashtag
        assert reloaded.retweet_counts == tiny_corpus.retweet_counts

    def test_retweet_count_totals(self, tiny_corpus):
        total = sum(tiny_corpus.retweet_counts.values())
        assert total == sum(1 for p in tiny_corpus.posts if p.kind == "retweet")

    def test_indexes_invert_posts(self, tiny_corpus):
        rebuilt = Corpus()
        for post in tiny_corpus.posts:
            rebuilt.add(post)
        assert rebuilt.by_author == tiny_corpus.by_author
        assert rebuilt.by_hashtag == tiny_corpus.by_hashtag


class TestTimestamps:
    def test_z_suffix_and_offset(self):
        a = parse_utc_timestamp("2019-11-12T10:00:00Z")
        b = parse_utc_timestamp("2019-11-12T11:00:00+01:00")
        assert a == b

    def test_naive_rejected(self):
        with pytest.raises(ValueError):
            parse_utc_timestamp("2019-11-12T10:00:00")

    def test_garbage_rejected(self):
        with pytest.raises(ValueError):
            parse_utc_timestamp("yesterday")


SEED_FILE = """hashtag,leaning
#GE2019,0
#votelabour,-1
#backboris,+1
account,leaning
@UKLabour,-1
@Conservatives,1
excluded_account
@BBCNews
"""


class TestSeedConfig:
    def test_basic(self, tmp_path):
        path = tmp_path / "seeds.csv"
        path.write_text(SEED_FILE, encoding="utf-8")
        config = load_seed_config(str(path))
        assert config.hashtag_leanings == {"#ge2019": 0.0, "#votelabour": -1.0, "#backboris": 1.0}
        assert config.account_leanings == {"@UKLabour": -1.0, "@Conservatives": 1.0}
        assert config.excluded_accounts == {"@BBCNews"}

    def test_fractional_leaning_rejected(self, tmp_path):
        path = tmp_path / "seeds.csv"
        path.write_text("hashtag,leaning\n#x,0.5\n", encoding="utf-8")
        with pytest.raises(SeedConfigError):
            load_seed_config(str(path))

    def test_empty_exclusions(self, tmp_path):
        path = tmp_path / "seeds.csv"
        path.write_text("hashtag,leaning\n#x,0\nexcluded_account\n", encoding="utf-8")
        config = load_seed_config(str(path))
        assert config.excluded_accounts == frozenset()

    def test_duplicate_hashtag_rejected(self, tmp_path):
        path = tmp_path / "seeds.csv"
        path.write_text("hashtag,leaning\n#x,0\n#X,1\n", encoding="utf-8")
        with pytest.raises(SeedConfigError, match="duplicate"):
            load_seed_config(str(path))

    def test_round_trip(self, tmp_path):
        path = tmp_path / "seeds.csv"
        path.write_text(SEED_FILE, encoding="utf-8")
        config = load_seed_config(str(path))
        out = tmp_path / "seeds2.csv"
        write_seed_config(config, str(out))
        assert load_seed_config(str(out)) == config


def test_build_corpus_validates_kind():
    post = make_post("p1", kind="retweet")  # missing reference
    with pytest.raises(ValueError):
        build_corpus([post])
