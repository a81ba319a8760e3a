from __future__ import annotations

import csv
import dataclasses
import os

import numpy as np
import pytest

from coordnet.cli import main as cli_main
from coordnet.ingest import dump_corpus, write_seed_config
from coordnet.network import from_edges
from coordnet.pipeline import (
    Pipeline,
    PipelineConfig,
    PipelineError,
    PipelineLocked,
    StageDependencyError,
    cluster_normalize,
    ecdf_rows,
    histogram2d_rows,
    read_config,
    weighted_neighbor_mean,
    write_config,
)
from coordnet.synthetic import SyntheticSpec, generate


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("pipeline")
    spec = SyntheticSpec(n_users=600, n_posts=6000, group_size=15, n_hours=120, seed=4)
    corpus, truth = generate(spec)
    corpus_path = root / "corpus.jsonl"
    seeds_path = root / "seeds.csv"
    dump_corpus(corpus, str(corpus_path))
    write_seed_config(truth.seed_config, str(seeds_path))
    config = PipelineConfig(
        corpus_path=str(corpus_path),
        seeds_path=str(seeds_path),
        cache_dir=str(root / "cache"),
        output_dir=str(root / "out"),
        superspreader_fraction=0.12,
        bootstrap_replicates=500,
        spearman_replicates=200,
        shuffles=200,
        ad_simulations=200,
        te_bootstraps=30,
        seed=2,
    )
    pipeline = Pipeline(config)
    outcomes = pipeline.run_all()
    return root, config, pipeline, outcomes, truth


class TestConfig:
    def test_round_trip(self, tmp_path):
        config = PipelineConfig(
            corpus_path="/data/corpus.jsonl",
            seeds_path="/data/seeds.csv",
            cache_dir="/tmp/cache",
            output_dir="/tmp/out",
            superspreader_fraction=0.02,
            backbone_alpha=0.17,
            toxic_threshold=0.55,
            seed=42,
        )
        path = tmp_path / "config.ini"
        write_config(config, str(path))
        assert read_config(str(path)) == config

    def test_domain_validation(self):
        with pytest.raises(PipelineError):
            PipelineConfig(superspreader_fraction=0.0).validate()
        with pytest.raises(PipelineError):
            PipelineConfig(backbone_alpha=2.0).validate()
        with pytest.raises(PipelineError):
            PipelineConfig(te_q=1.0).validate()
        with pytest.raises(PipelineError):
            PipelineConfig(min_activity=0).validate()


class TestStages:
    def test_all_ran(self, small_run):
        _, _, _, outcomes, _ = small_run
        assert all(outcomes.values())

    def test_coord_runs_without_tox(self, tmp_path, small_run):
        root, config, _, _, _ = small_run
        fresh = dataclasses.replace(config, output_dir=str(tmp_path / "fresh"))
        pipeline = Pipeline(fresh)
        assert pipeline.run_stage("ingest")
        assert pipeline.run_stage("coord")
        assert os.path.exists(os.path.join(fresh.output_dir, "artifacts", "coord", "coordination.csv"))

    def test_missing_dependency_named(self, tmp_path, small_run):
        _, config, _, _, _ = small_run
        fresh = dataclasses.replace(config, output_dir=str(tmp_path / "dep"))
        pipeline = Pipeline(fresh)
        pipeline.run_stage("ingest")
        with pytest.raises(StageDependencyError, match="metrics"):
            pipeline.run_stage("compare")

    def test_rerun_is_noop(self, small_run):
        _, _, pipeline, _, _ = small_run
        again = pipeline.run_all()
        assert not any(again.values())

    def test_threshold_change_reruns_tail_only(self, small_run):
        root, config, _, _, _ = small_run
        changed = dataclasses.replace(config, toxic_threshold=0.7)
        outcomes = Pipeline(changed).run_all()
        reran = {stage for stage, ran in outcomes.items() if ran}
        assert reran <= {"sequences", "compare", "report"}
        assert "sequences" in reran
        # Restore the original artifacts for the other tests.
        Pipeline(config).run_all()

    def test_unknown_stage(self, small_run):
        _, _, pipeline, _, _ = small_run
        with pytest.raises(PipelineError):
            pipeline.run_stage("nonsense")

    def test_report_files_exist(self, small_run):
        root, config, _, _, _ = small_run
        expected = [
            "ecdf_activity.csv",
            "joint_score_toxicity.csv",
            "joint_toxicity_neighbor_toxicity.csv",
            "joint_leaning_toxicity.csv",
            "joint_leaning_neighbor_leaning.csv",
            "bootstrap_user_toxicity.csv",
            "bootstrap_user_toxicity_no_retweets.csv",
            "bootstrap_conditioned_means.csv",
            "hourly_series.csv",
            "te_summary.csv",
            "stats_summary.csv",
        ]
        for name in expected:
            assert os.path.exists(os.path.join(config.output_dir, "report", name)), name
        assert os.path.exists(os.path.join(config.output_dir, "manifest.json"))

    def test_recovers_planted_users(self, small_run):
        _, config, pipeline, _, truth = small_run
        result = pipeline.coordination_result()
        planted = set(truth.coordinated_groups)
        recovered = planted & result.coordinated
        assert len(recovered) >= 0.8 * len(planted)

    def test_ecdf_conservation(self, small_run):
        _, config, _, _, _ = small_run
        path = os.path.join(config.output_dir, "report", "ecdf_activity.csv")
        with open(path, newline="") as handle:
            rows = list(csv.DictReader(handle))
        finals = [float(r["ecdf"]) for r in rows]
        assert max(finals) == 1.0


class TestLock:
    def test_live_lock_blocks(self, small_run, tmp_path):
        _, config, _, _, _ = small_run
        fresh = dataclasses.replace(config, output_dir=str(tmp_path / "locked"))
        os.makedirs(fresh.output_dir, exist_ok=True)
        with open(os.path.join(fresh.output_dir, ".lock"), "w") as handle:
            handle.write(str(os.getpid()))
        with pytest.raises(PipelineLocked):
            Pipeline(fresh).run_stage("ingest")

    def test_stale_lock_stolen(self, small_run, tmp_path):
        _, config, _, _, _ = small_run
        fresh = dataclasses.replace(config, output_dir=str(tmp_path / "stale"))
        os.makedirs(fresh.output_dir, exist_ok=True)
        with open(os.path.join(fresh.output_dir, ".lock"), "w") as handle:
            handle.write("999999999")
        assert Pipeline(fresh).run_stage("ingest")


class TestReportHelpers:
    def test_single_neighbor_mean_is_that_neighbor(self):
        net = from_edges([("a", "b", 0.7)])
        result = weighted_neighbor_mean(net, {"a": 0.2, "b": 0.9})
        assert result["a"] == 0.9
        assert result["b"] == 0.2

    def test_weighted_neighbor_mean(self):
        net = from_edges([("a", "b", 3.0), ("a", "c", 1.0)])
        result = weighted_neighbor_mean(net, {"b": 1.0, "c": 0.0, "a": 0.5})
        assert result["a"] == pytest.approx(0.75)

    def test_neighborless_nodes_absent(self):
        net = from_edges([("a", "b", 1.0)], nodes=["z"])
        assert "z" not in weighted_neighbor_mean(net, {"a": 1.0, "b": 1.0})

    def test_cluster_normalize_endpoints(self):
        values = {"u1": -0.4, "u2": 0.1, "u3": 0.6}
        communities = {"u1": 0, "u2": 0, "u3": 0}
        result = cluster_normalize(values, communities)
        assert result["u1"] == 0.0
        assert result["u3"] == 1.0
        assert 0.0 < result["u2"] < 1.0

    def test_cluster_normalize_is_per_cluster(self):
        values = {"a": 0.0, "b": 1.0, "c": 5.0, "d": 9.0}
        communities = {"a": 0, "b": 0, "c": 1, "d": 1}
        result = cluster_normalize(values, communities)
        assert result["a"] == result["c"] == 0.0
        assert result["b"] == result["d"] == 1.0

    def test_histogram_conservation(self):
        rng = np.random.default_rng(0)
        points = [(float(x), float(y)) for x, y in rng.random((500, 2))]
        rows = histogram2d_rows(points, bins=12)
        assert sum(count for *_, count in rows) == 500

    def test_ecdf_rows(self):
        rows = ecdf_rows([3.0, 1.0, 2.0, 2.0])
        assert rows == [(1.0, 0.25), (2.0, 0.75), (3.0, 1.0)]


class TestCli:
    def test_cli_runs_all(self, small_run, tmp_path, capsys):
        _, config, _, _, _ = small_run
        cfg = dataclasses.replace(config, output_dir=str(tmp_path / "cli_out"))
        path = tmp_path / "config.ini"
        write_config(cfg, str(path))
        code = cli_main(["all", "--config", str(path), "--svg"])
        captured = capsys.readouterr()
        assert code == 0
        assert "report: ran" in captured.out
        assert os.path.exists(os.path.join(cfg.output_dir, "report", "ecdf_activity.svg"))

    def test_cli_stage_choice_enforced(self, tmp_path):
        with pytest.raises(SystemExit):
            cli_main(["bogus", "--config", str(tmp_path / "c.ini")])

    def test_cli_missing_config(self, tmp_path):
        assert cli_main(["ingest", "--config", str(tmp_path / "missing.ini")]) == 2

    def test_cli_seed_override(self, small_run, tmp_path, capsys):
        _, config, _, _, _ = small_run
        cfg = dataclasses.replace(config, output_dir=str(tmp_path / "cli_seed"))
        path = tmp_path / "config.ini"
        write_config(cfg, str(path))
        assert cli_main(["ingest", "--config", str(path), "--seed", "99"]) == 0
