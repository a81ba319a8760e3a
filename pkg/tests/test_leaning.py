from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coordnet.ingest import build_corpus
from coordnet.leaning import (
    alpha_schedule,
    build_cooccurrence,
    compute_leaning_table,
    post_leaning,
    propagate_labels,
    read_leaning_csv,
    user_leaning,
    write_leaning_csv,
)
from coordnet.network import WeightedNetwork, from_edges

from conftest import make_post


class TestCooccurrence:
    def test_counts(self):
        posts = [
            make_post("p1", text="#a #b", minutes=0),
            make_post("p2", text="#a #b", minutes=1),
            make_post("p3", text="#a #c", minutes=2),
        ]
        net = build_cooccurrence(build_corpus(posts))
        assert net.sorted_edges() == [("#a", "#b", 2.0), ("#a", "#c", 1.0)]

    def test_single_hashtag_node_isolated(self):
        net = build_cooccurrence(build_corpus([make_post("p1", text="only #solo here")]))
        assert net.nodes == {"#solo"}
        assert net.n_edges == 0

    def test_empty_corpus_rejected(self):
        with pytest.raises(ValueError):
            build_cooccurrence(build_corpus([]))

    def test_duplicate_hashtag_in_post_counts_once(self):
        net = build_cooccurrence(build_corpus([make_post("p1", text="#a #b #a")]))
        assert net.sorted_edges() == [("#a", "#b", 1.0)]


class TestAlphaSchedule:
    def test_five_decades(self):
        assert alpha_schedule(1e-4, 1, 5) == pytest.approx([1e-4, 1e-3, 1e-2, 1e-1, 1.0])

    def test_three_steps(self):
        assert alpha_schedule(1e-2, 1, 3) == pytest.approx([0.01, 0.1, 1.0])

    def test_endpoints_exact(self):
        values = alpha_schedule(3e-3, 1.0, 7)
        assert values[0] == 3e-3
        assert values[-1] == 1.0
        assert values == sorted(values)
        assert all(b > a for a, b in zip(values, values[1:]))

    def test_invalid_bounds(self):
        with pytest.raises(ValueError):
            alpha_schedule(0.5, 0.5, 3)
        with pytest.raises(ValueError):
            alpha_schedule(0.0, 1.0, 3)
        with pytest.raises(ValueError):
            alpha_schedule(1e-3, 1.0, 1)


class TestPropagateLabels:
    def test_simultaneous_update_example(self):
        net = from_edges([("s", "x", 3.0), ("x", "y", 1.0)])
        values, undefined = propagate_labels(net, {"s": 1.0}, [1.0])
        assert values == {"s": 1.0, "x": 0.75, "y": 0.0}
        assert undefined == set()

    def test_symmetric_path_is_neutral(self):
        net = from_edges([("l", "x", 1.0), ("x", "r", 1.0)])
        values, _ = propagate_labels(net, {"l": -1.0, "r": 1.0}, [1.0])
        assert values["x"] == 0.0

    def test_isolated_hashtag_reported(self):
        net = from_edges([("s", "x", 1.0)], nodes=["iso"])
        values, undefined = propagate_labels(net, {"s": 1.0}, [0.5, 1.0])
        assert values["iso"] == 0.0
        assert undefined == {"iso"}

    def test_seeds_never_move(self):
        net = from_edges([("s", "x", 1.0), ("x", "t", 5.0)])
        values, _ = propagate_labels(net, {"s": 1.0, "t": -1.0}, [0.3, 1.0])
        assert values["s"] == 1.0
        assert values["t"] == -1.0

    def test_missing_seed_warns(self):
        net = from_edges([("a", "b", 1.0)])
        with pytest.warns(UserWarning):
            propagate_labels(net, {"#nowhere": 1.0}, [1.0])

    def test_empty_schedule_rejected(self):
        with pytest.raises(ValueError):
            propagate_labels(from_edges([("a", "b", 1.0)]), {"a": 1.0}, [])

    def test_descending_schedule_rejected(self):
        with pytest.raises(ValueError):
            propagate_labels(from_edges([("a", "b", 1.0)]), {"a": 1.0}, [0.5, 0.1])

    def test_multi_step_freezing(self):
        # The weak x-y edge is filtered out of the first backbone, so x is
        # defined first (pure seed signal) and y later averages the frozen x
        # value instead of 0. A single full-network step gives y = 0 instead.
        net = from_edges([("s", "x", 99.0), ("x", "y", 1.0)])
        values_one, _ = propagate_labels(net, {"s": 1.0}, [1.0])
        assert values_one["x"] == pytest.approx(0.99)
        assert values_one["y"] == 0.0
        values_two, _ = propagate_labels(net, {"s": 1.0}, [0.5, 1.0])
        assert values_two["x"] == 1.0
        assert values_two["y"] == 1.0

    @settings(max_examples=40, deadline=None)
    @given(st.data())
    def test_range_and_sign_symmetry(self, data):
        n = data.draw(st.integers(3, 7))
        names = [f"h{i}" for i in range(n)]
        edges = []
        for i in range(n):
            for j in range(i + 1, n):
                w = data.draw(st.integers(0, 3))
                if w:
                    edges.append((names[i], names[j], float(w)))
        if not edges:
            return
        net = from_edges(edges, nodes=names)
        seed_nodes = data.draw(st.sets(st.sampled_from(names), min_size=1, max_size=2))
        seeds = {name: data.draw(st.sampled_from([-1.0, 0.0, 1.0])) for name in sorted(seed_nodes)}
        schedule = [0.5, 1.0]
        values, _ = propagate_labels(net, seeds, schedule)
        lo = min(min(seeds.values()), 0.0)
        hi = max(max(seeds.values()), 0.0)
        for value in values.values():
            assert lo - 1e-12 <= value <= hi + 1e-12
        mirrored, _ = propagate_labels(net, {k: -v for k, v in seeds.items()}, schedule)
        for name in values:
            assert mirrored[name] == pytest.approx(-values[name], abs=1e-12)

    def test_monotone_coverage(self):
        net = from_edges(
            [("s", "a", 9.0), ("a", "b", 9.0), ("b", "c", 9.0), ("c", "d", 1.0)],
        )
        schedule = alpha_schedule(1e-3, 1.0, 6)
        covered_sizes = []
        for steps in range(1, len(schedule) + 1):
            values, undefined = propagate_labels(net, {"s": 1.0}, schedule[:steps])
            covered_sizes.append(len(values) - len(undefined))
        assert covered_sizes == sorted(covered_sizes)

    def test_deterministic(self):
        net = from_edges([("s", "x", 2.0), ("x", "y", 1.0), ("y", "z", 4.0)])
        args = ({"s": -1.0}, [0.2, 0.6, 1.0])
        assert propagate_labels(net, *args) == propagate_labels(net, *args)


class TestPostLeaning:
    def test_most_polarized_wins(self):
        post = make_post("p1", text="#a #b")
        assert post_leaning(post, {"#a": 0.2, "#b": -0.9}) == -0.9

    def test_symmetric_tie_averages(self):
        post = make_post("p1", text="#a #b")
        assert post_leaning(post, {"#a": 0.5, "#b": -0.5}) == 0.0

    def test_no_hashtags_absent(self):
        assert post_leaning(make_post("p1", text="plain"), {"#a": 1.0}) is None

    def test_equal_sign_tie(self):
        post = make_post("p1", text="#a #b")
        assert post_leaning(post, {"#a": 0.5, "#b": 0.5}) == 0.5


class TestUserLeaning:
    def _corpus(self):
        posts = [
            make_post("p1", author="u", text="#a", minutes=0),
            make_post("p2", author="u", kind="retweet", text="rt #b", minutes=1, ref="p1", ref_author="u2"),
            make_post("p3", author="u", kind="reply", text="#c reply", minutes=2, ref="p1", ref_author="u2"),
            make_post("p4", author="v", text="no tags", minutes=3),
        ]
        return build_corpus(posts)

    def test_mean_over_originals_and_retweets(self):
        corpus = self._corpus()
        leanings = {"p1": 0.9, "p2": 0.3, "p3": -1.0}
        result = user_leaning(corpus, leanings)
        assert result["u"] == pytest.approx(0.6)  # reply p3 excluded

    def test_user_without_leaning_posts_absent(self):
        corpus = self._corpus()
        assert "v" not in user_leaning(corpus, {"p1": 0.5})

    def test_symmetric_values_average_to_zero(self):
        posts = [
            make_post("p1", author="u", text="#a", minutes=0),
            make_post("p2", author="u", text="#b", minutes=1),
            make_post("p3", author="u", text="#c", minutes=2),
        ]
        corpus = build_corpus(posts)
        result = user_leaning(corpus, {"p1": 1.0, "p2": 0.0, "p3": -1.0})
        assert result["u"] == 0.0


def test_compute_leaning_table_end_to_end():
    posts = [
        make_post("p1", author="u1", text="#seedleft #near", minutes=0),
        make_post("p2", author="u2", text="#near #far", minutes=1),
        make_post("p3", author="u3", text="#lonely", minutes=2),
    ]
    corpus = build_corpus(posts)
    table = compute_leaning_table(corpus, {"#seedleft": -1.0}, [1.0])
    assert table.hashtag_leaning["#seedleft"] == -1.0
    assert "#lonely" in table.undefined_hashtags_final
    assert set(table.post_leaning) == {"p1", "p2", "p3"}
    assert "u1" in table.user_leaning


def test_leaning_csv_round_trip(tmp_path):
    values = {"#a": -0.25, "#b": 1.0}
    path = tmp_path / "hashtag_leaning.csv"
    write_leaning_csv(values, str(path), "hashtag")
    assert read_leaning_csv(str(path), "hashtag") == values
