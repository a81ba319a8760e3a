"""End-to-end pipeline with cached stages and report emission.

Every stage writes versioned artifacts under the output directory and records
an input hash in the manifest; re-running a stage whose inputs are unchanged
is a no-op. Writes go through temp files so a crash never leaves a partial
artifact in place.
"""

from __future__ import annotations

import configparser
import csv
import hashlib
import json
import os
import shutil
from dataclasses import dataclass, fields
from typing import Mapping, Optional, Sequence

import numpy as np

from . import coordination as coord_mod
from . import leaning as leaning_mod
from . import sequences as seq_mod
from . import stats as stats_mod
from . import toxicity as tox_mod
from . import transfer_entropy as te_mod
from . import user_metrics as um_mod
from .ingest import Corpus, SeedConfig, load_corpus, load_seed_config
from .network import WeightedNetwork, read_edges_csv, write_edges_csv

STAGES = ("ingest", "tox", "coord", "leaning", "metrics", "sequences", "compare", "te", "report")

STAGE_DEPS: dict[str, tuple[str, ...]] = {
    "ingest": (),
    "tox": ("ingest",),
    "coord": ("ingest",),
    "leaning": ("ingest",),
    "metrics": ("ingest", "tox"),
    "sequences": ("ingest", "tox", "coord", "leaning"),
    "compare": ("metrics", "coord", "sequences", "leaning"),
    "te": ("ingest", "tox", "coord"),
    "report": ("ingest", "tox", "coord", "leaning", "metrics", "sequences", "compare", "te"),
}

TE_PROBS = (0.05, 0.5, 0.95)
JOINT_BINS = 30


class PipelineError(Exception):
    pass


class StageDependencyError(PipelineError):
    def __init__(self, stage: str, missing: str):
        super().__init__(f"stage {stage!r} requires stage {missing!r} to have run first")
        self.stage = stage
        self.missing = missing


class PipelineLocked(PipelineError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    corpus_path: str = ""
    seeds_path: str = ""
    cache_dir: str = ""
    output_dir: str = ""
    scorer_mode: str = "offline"
    scorer_endpoint: str = ""
    api_key_env: str = "TOXICITY_API_KEY"
    max_qps: float = 10.0
    max_retries: int = 3
    batch_concurrency: int = 1
    superspreader_fraction: float = 0.01
    backbone_alpha: float = 0.05
    leaning_alpha_start: float = 1e-4
    leaning_alpha_steps: int = 13
    toxic_threshold: float = 0.6
    min_activity: int = 5
    top_fraction: float = 0.10
    bootstrap_replicates: int = 50000
    spearman_replicates: int = 10000
    shuffles: int = 10000
    ad_simulations: int = 10000
    te_q: float = 0.5
    te_history: int = 1
    te_bootstraps: int = 300
    seed: int = 0

    def validate(self) -> None:
        if not 0 < self.superspreader_fraction <= 1:
            raise PipelineError("superspreader_fraction must be in (0, 1]")
        if not 0 < self.backbone_alpha <= 1:
            raise PipelineError("backbone_alpha must be in (0, 1]")
        if not 0 < self.leaning_alpha_start < 1:
            raise PipelineError("leaning_alpha_start must be in (0, 1)")
        if self.leaning_alpha_steps < 2:
            raise PipelineError("leaning_alpha_steps must be >= 2")
        if not 0 <= self.toxic_threshold <= 1:
            raise PipelineError("toxic_threshold must be in [0, 1]")
        if not 0 < self.top_fraction <= 1:
            raise PipelineError("top_fraction must be in (0, 1]")
        if self.min_activity < 1:
            raise PipelineError("min_activity must be >= 1")
        for name in ("bootstrap_replicates", "spearman_replicates", "shuffles", "ad_simulations", "te_bootstraps"):
            if getattr(self, name) < 1:
                raise PipelineError(f"{name} must be >= 1")
        if self.te_q <= 0 or self.te_q == 1.0:
            raise PipelineError("te_q must be positive and != 1")
        if self.te_history < 1:
            raise PipelineError("te_history must be >= 1")


_CONFIG_SECTIONS: dict[str, tuple[str, ...]] = {
    "paths": ("corpus_path", "seeds_path", "cache_dir", "output_dir"),
    "toxicity": ("scorer_mode", "scorer_endpoint", "api_key_env", "max_qps", "max_retries", "batch_concurrency"),
    "coordination": ("superspreader_fraction", "backbone_alpha"),
    "leaning": ("leaning_alpha_start", "leaning_alpha_steps"),
    "analysis": (
        "toxic_threshold",
        "min_activity",
        "top_fraction",
        "bootstrap_replicates",
        "spearman_replicates",
        "shuffles",
        "ad_simulations",
    ),
    "te": ("te_q", "te_history", "te_bootstraps"),
    "run": ("seed",),
}

# Config fields that feed each stage's cache key. Upstream artifacts carry the
# rest of the dependency information through their hashes.
_STAGE_CONFIG_FIELDS: dict[str, tuple[str, ...]] = {
    "ingest": ("corpus_path", "seeds_path"),
    "tox": ("scorer_mode", "scorer_endpoint", "api_key_env", "max_qps", "max_retries", "batch_concurrency", "cache_dir"),
    "coord": ("superspreader_fraction", "backbone_alpha", "seed"),
    "leaning": ("leaning_alpha_start", "leaning_alpha_steps"),
    "metrics": ("top_fraction",),
    "sequences": ("toxic_threshold",),
    "compare": ("min_activity", "bootstrap_replicates", "ad_simulations", "seed"),
    "te": ("te_q", "te_history", "te_bootstraps", "seed"),
    "report": ("spearman_replicates", "shuffles", "seed", "min_activity"),
}


def write_config(config: PipelineConfig, path: str) -> None:
    parser = configparser.ConfigParser()
    for section, names in _CONFIG_SECTIONS.items():
        parser[section] = {name: _format_value(getattr(config, name)) for name in names}
    with open(path, "w", encoding="utf-8") as handle:
        parser.write(handle)


def _format_value(value: object) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def read_config(path: str) -> PipelineConfig:
    parser = configparser.ConfigParser()
    with open(path, "r", encoding="utf-8") as handle:
        parser.read_file(handle)
    kwargs: dict[str, object] = {}
    types = {f.name: f.type for f in fields(PipelineConfig)}
    for section, names in _CONFIG_SECTIONS.items():
        if section not in parser:
            continue
        for name in names:
            if name not in parser[section]:
                continue
            raw = parser[section][name]
            kind = types[name]
            if kind == "int":
                kwargs[name] = int(raw)
            elif kind == "float":
                kwargs[name] = float(raw)
            else:
                kwargs[name] = raw
    config = PipelineConfig(**kwargs)
    config.validate()
    return config


def sha256_file(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _sha256_obj(obj: object) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode("utf-8")).hexdigest()


class _Lock:
    def __init__(self, output_dir: str):
        self.path = os.path.join(output_dir, ".lock")
        self.held = False

    def acquire(self) -> None:
        os.makedirs(os.path.dirname(self.path), exist_ok=True)
        while True:
            try:
                fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
            except FileExistsError:
                if self._stale():
                    os.unlink(self.path)
                    continue
                raise PipelineLocked(f"another pipeline holds {self.path}") from None
            with os.fdopen(fd, "w") as handle:
                handle.write(str(os.getpid()))
            self.held = True
            return

    def _stale(self) -> bool:
        try:
            with open(self.path, "r", encoding="utf-8") as handle:
                pid = int(handle.read().strip() or "0")
        except (OSError, ValueError):
            return True
        if pid == os.getpid():
            return False
        try:
            os.kill(pid, 0)
        except ProcessLookupError:
            return True
        except PermissionError:
            return False
        return False

    def release(self) -> None:
        if self.held:
            try:
                os.unlink(self.path)
            except FileNotFoundError:
                pass
            self.held = False


class StageWriter:
    """Collects a stage's output files and commits them atomically."""

    def __init__(self, root: str, stage_dir: str):
        self.root = root
        self.stage_dir = stage_dir
        self.tmp_dir = os.path.join(root, f".tmp_{stage_dir.replace(os.sep, '_')}")
        self._files: list[str] = []
        if os.path.isdir(self.tmp_dir):
            shutil.rmtree(self.tmp_dir)
        os.makedirs(self.tmp_dir, exist_ok=True)

    def path(self, name: str) -> str:
        self._files.append(name)
        return os.path.join(self.tmp_dir, name)

    def commit(self) -> dict[str, str]:
        final_dir = os.path.join(self.root, self.stage_dir)
        os.makedirs(final_dir, exist_ok=True)
        hashes: dict[str, str] = {}
        for name in self._files:
            src = os.path.join(self.tmp_dir, name)
            dst = os.path.join(final_dir, name)
            os.replace(src, dst)
            hashes[f"{self.stage_dir}/{name}"] = sha256_file(dst)
        shutil.rmtree(self.tmp_dir, ignore_errors=True)
        return hashes

    def abort(self) -> None:
        shutil.rmtree(self.tmp_dir, ignore_errors=True)


class Pipeline:
    """Runs stages against one output directory, caching by input hash."""

    def __init__(self, config: PipelineConfig):
        config.validate()
        if not config.output_dir:
            raise PipelineError("config.output_dir is required")
        self.config = config
        self.output_dir = config.output_dir
        os.makedirs(self.output_dir, exist_ok=True)
        self.manifest_path = os.path.join(self.output_dir, "manifest.json")
        self._corpus: Optional[Corpus] = None
        self._seeds: Optional[SeedConfig] = None
        self._toxicity: Optional[tox_mod.ToxicityTable] = None
        self._coordination: Optional[coord_mod.CoordinationResult] = None
        self._backbone: Optional[WeightedNetwork] = None

    # -- manifest ---------------------------------------------------------

    def _read_manifest(self) -> dict:
        if not os.path.exists(self.manifest_path):
            return {"stages": {}}
        with open(self.manifest_path, "r", encoding="utf-8") as handle:
            return json.load(handle)

    def _write_manifest(self, manifest: dict) -> None:
        tmp = self.manifest_path + ".tmp"
        with open(tmp, "w", encoding="utf-8") as handle:
            json.dump(manifest, handle, indent=2, sort_keys=True)
            handle.write("\n")
        os.replace(tmp, self.manifest_path)

    def _stage_output_hash(self, manifest: dict, stage: str) -> str:
        entry = manifest["stages"].get(stage)
        if entry is None:
            raise StageDependencyError("?", stage)
        return _sha256_obj(sorted(entry["outputs"].items()))

    def _input_hash(self, manifest: dict, stage: str) -> str:
        config_part = {
            name: getattr(self.config, name) for name in _STAGE_CONFIG_FIELDS[stage]
        }
        deps_part = {}
        for dep in STAGE_DEPS[stage]:
            deps_part[dep] = self._stage_output_hash(manifest, dep)
        files_part = {}
        if stage == "ingest":
            files_part["corpus"] = sha256_file(self.config.corpus_path)
            files_part["seeds"] = sha256_file(self.config.seeds_path)
        return _sha256_obj({"config": config_part, "deps": deps_part, "files": files_part})

    def _outputs_intact(self, entry: dict) -> bool:
        for relpath, digest in entry["outputs"].items():
            path = os.path.join(self.output_dir, relpath)
            if not os.path.exists(path) or sha256_file(path) != digest:
                return False
        return True

    # -- public API -------------------------------------------------------

    def run_stage(self, stage: str) -> bool:
        """Run one stage; returns False when cached output was reused."""
        if stage not in STAGES:
            raise PipelineError(f"unknown stage {stage!r}; expected one of {STAGES}")
        lock = _Lock(self.output_dir)
        lock.acquire()
        try:
            manifest = self._read_manifest()
            for dep in STAGE_DEPS[stage]:
                if dep not in manifest["stages"]:
                    raise StageDependencyError(stage, dep)
            input_hash = self._input_hash(manifest, stage)
            entry = manifest["stages"].get(stage)
            if entry is not None and entry.get("input_hash") == input_hash and self._outputs_intact(entry):
                return False
            writer = StageWriter(self.output_dir, self._stage_dir(stage))
            try:
                getattr(self, f"_stage_{stage}")(writer)
                hashes = writer.commit()
            except BaseException:
                writer.abort()
                raise
            manifest["stages"][stage] = {"input_hash": input_hash, "outputs": hashes}
            self._write_manifest(manifest)
            return True
        finally:
            lock.release()

    def run_all(self) -> dict[str, bool]:
        return {stage: self.run_stage(stage) for stage in STAGES}

    @staticmethod
    def _stage_dir(stage: str) -> str:
        return "report" if stage == "report" else os.path.join("artifacts", stage)

    # -- shared loading ---------------------------------------------------

    def corpus(self) -> Corpus:
        if self._corpus is None:
            self._corpus = load_corpus(self.config.corpus_path, strict=False)
        return self._corpus

    def seeds(self) -> SeedConfig:
        if self._seeds is None:
            self._seeds = load_seed_config(self.config.seeds_path)
        return self._seeds

    def _artifact(self, stage: str, name: str) -> str:
        return os.path.join(self.output_dir, self._stage_dir(stage), name)

    def toxicity_table(self) -> tox_mod.ToxicityTable:
        if self._toxicity is None:
            self._toxicity = tox_mod.read_cache(
                self._artifact("tox", "toxicity.csv"), self._artifact("tox", "toxicity_unscored.csv")
            )
        return self._toxicity

    def coordination_result(self) -> coord_mod.CoordinationResult:
        if self._coordination is None:
            self._coordination = coord_mod.read_result_csv(self._artifact("coord", "coordination.csv"))
        return self._coordination

    def backbone(self) -> WeightedNetwork:
        if self._backbone is None:
            nodes = sorted(self.coordination_result().scores)
            self._backbone = read_edges_csv(self._artifact("coord", "backbone_edges.csv"), nodes=nodes)
        return self._backbone

    # -- stages -----------------------------------------------------------

    def _stage_ingest(self, writer: StageWriter) -> None:
        corpus = self.corpus()
        seeds = self.seeds()
        kinds: dict[str, int] = {}
        for post in corpus.posts:
            kinds[post.kind] = kinds.get(post.kind, 0) + 1
        summary = {
            "n_posts": len(corpus),
            "n_users": len(corpus.by_author),
            "n_hashtags": len(corpus.by_hashtag),
            "kinds": dict(sorted(kinds.items())),
            "skipped_lines": corpus.skipped_lines,
            "corpus_sha256": sha256_file(self.config.corpus_path),
            "seeds_sha256": sha256_file(self.config.seeds_path),
            "n_seed_hashtags": len(seeds.hashtag_leanings),
            "n_excluded_accounts": len(seeds.excluded_accounts),
        }
        with open(writer.path("corpus_summary.json"), "w", encoding="utf-8") as handle:
            json.dump(summary, handle, indent=2, sort_keys=True)
            handle.write("\n")

    def _stage_tox(self, writer: StageWriter) -> None:
        config = self.config
        scorer = tox_mod.ScorerConfig(
            mode=config.scorer_mode,
            endpoint=config.scorer_endpoint,
            api_key_env=config.api_key_env,
            max_qps=config.max_qps,
            max_retries=config.max_retries,
            batch_concurrency=config.batch_concurrency,
        )
        cache = None
        if config.cache_dir:
            scores_path = os.path.join(config.cache_dir, "toxicity.csv")
            unscored_path = os.path.join(config.cache_dir, "toxicity_unscored.csv")
            if os.path.exists(scores_path) and os.path.exists(unscored_path):
                cache = tox_mod.read_cache(scores_path, unscored_path)
        table = tox_mod.score_posts(self.corpus(), scorer, cache)
        tox_mod.write_cache(table, writer.path("toxicity.csv"), writer.path("toxicity_unscored.csv"))
        if config.cache_dir:
            os.makedirs(config.cache_dir, exist_ok=True)
            tox_mod.write_cache(
                table,
                os.path.join(config.cache_dir, "toxicity.csv"),
                os.path.join(config.cache_dir, "toxicity_unscored.csv"),
            )
        self._toxicity = table

    def _stage_coord(self, writer: StageWriter) -> None:
        corpus = self.corpus()
        config = self.config
        spreaders = coord_mod.select_superspreaders(corpus, config.superspreader_fraction)
        vectors = coord_mod.build_retweet_vectors(corpus, spreaders)
        simnet = coord_mod.similarity_network(vectors)
        backbone = coord_mod.disparity_backbone(simnet, config.backbone_alpha)
        scores = coord_mod.coordination_scores(backbone)
        result = coord_mod.label_coordinated(scores, self.seeds().excluded_accounts)
        result.communities = coord_mod.louvain_communities(backbone, seed=config.seed + 1)
        with open(writer.path("superspreaders.csv"), "w", encoding="utf-8", newline="") as handle:
            out = csv.writer(handle, lineterminator="\n")
            out.writerow(["user", "retweet_count"])
            for user in sorted(spreaders):
                out.writerow([user, corpus.retweet_counts.get(user, 0)])
        write_edges_csv(backbone, writer.path("backbone_edges.csv"))
        coord_mod.write_result_csv(result, writer.path("coordination.csv"))
        self._coordination = result
        self._backbone = backbone

    def _stage_leaning(self, writer: StageWriter) -> None:
        config = self.config
        schedule = leaning_mod.alpha_schedule(config.leaning_alpha_start, 1.0, config.leaning_alpha_steps)
        table = leaning_mod.compute_leaning_table(self.corpus(), self.seeds().hashtag_leanings, schedule)
        leaning_mod.write_leaning_csv(table.hashtag_leaning, writer.path("hashtag_leaning.csv"), "hashtag")
        leaning_mod.write_leaning_csv(table.post_leaning, writer.path("post_leaning.csv"), "post_id")
        leaning_mod.write_leaning_csv(table.user_leaning, writer.path("user_leaning.csv"), "user")
        summary = {"n_undefined_final": len(table.undefined_hashtags_final)}
        with open(writer.path("leaning_summary.json"), "w", encoding="utf-8") as handle:
            json.dump(summary, handle, indent=2, sort_keys=True)
            handle.write("\n")

    def _stage_metrics(self, writer: StageWriter) -> None:
        corpus = self.corpus()
        toxicity = self.toxicity_table().scores
        top_fraction = self.config.top_fraction
        with_rt: dict[str, um_mod.UserToxicity] = {}
        no_rt: dict[str, um_mod.UserToxicity] = {}
        counts_rows: list[tuple[str, int, int]] = []
        for user in corpus.authors():
            posts = corpus.posts_by_author(user)
            n_orig = sum(1 for p in posts if p.kind == "original")
            n_rt = sum(1 for p in posts if p.kind == "retweet")
            counts_rows.append((user, n_orig, n_rt))
            value = um_mod.user_toxicity(posts, toxicity, top_fraction, include_retweets=True)
            if value is not None:
                with_rt[user] = value
            value = um_mod.user_toxicity(posts, toxicity, top_fraction, include_retweets=False)
            if value is not None:
                no_rt[user] = value
        um_mod.write_user_toxicity_csv(with_rt, writer.path("user_toxicity.csv"))
        um_mod.write_user_toxicity_csv(no_rt, writer.path("user_toxicity_originals.csv"))
        with open(writer.path("activity_counts.csv"), "w", encoding="utf-8", newline="") as handle:
            out = csv.writer(handle, lineterminator="\n")
            out.writerow(["user", "n_original", "n_retweet"])
            for user, n_orig, n_rt in counts_rows:
                out.writerow([user, n_orig, n_rt])

    def _stage_sequences(self, writer: StageWriter) -> None:
        corpus = self.corpus()
        toxicity = self.toxicity_table().scores
        coordinated = self.coordination_result().coordinated
        post_leanings = leaning_mod.read_leaning_csv(self._artifact("leaning", "post_leaning.csv"), "post_id")
        author_by_post = {post.post_id: post.author_id for post in corpus.posts}
        pairs: list[seq_mod.BlockPair] = []
        for user in corpus.authors():
            if user in coordinated:
                continue
            seq = seq_mod.encode_actions(corpus.posts_by_author(user))
            trimmed = seq_mod.trim_sequence(seq)
            if trimmed is None:
                continue
            pairs.extend(
                seq_mod.segment_blocks(
                    trimmed,
                    toxicity,
                    coordinated,
                    post_leanings,
                    toxic_threshold=self.config.toxic_threshold,
                    author_by_post=author_by_post,
                )
            )
        seq_mod.write_block_pairs_csv(pairs, writer.path("block_pairs.csv"))
        seq_mod.write_block_pairs_detail_csv(pairs, writer.path("block_pairs_detail.csv"))

    def _user_activity(self) -> dict[str, tuple[int, int]]:
        counts: dict[str, tuple[int, int]] = {}
        path = self._artifact("metrics", "activity_counts.csv")
        with open(path, "r", encoding="utf-8", newline="") as handle:
            reader = csv.reader(handle)
            next(reader, None)
            for row in reader:
                counts[row[0]] = (int(row[1]), int(row[2]))
        return counts

    def _stage_compare(self, writer: StageWriter) -> None:
        config = self.config
        coordinated = self.coordination_result().coordinated
        activity = self._user_activity()
        summary_rows: list[list[str]] = []

        def run_group_bootstraps(
            metric: str, table: Mapping[str, um_mod.UserToxicity], counts: Mapping[str, int], out_name: str, seed0: int
        ) -> dict[str, list[float]]:
            eligible = um_mod.filter_min_activity(counts, config.min_activity)
            groups: dict[str, list[float]] = {"coordinated": [], "non_coordinated": []}
            for user in sorted(table):
                if user not in eligible:
                    continue
                key = "coordinated" if user in coordinated else "non_coordinated"
                groups[key].append(table[user].value)
            with open(writer.path(out_name), "w", encoding="utf-8", newline="") as handle:
                out = csv.writer(handle, lineterminator="\n")
                out.writerow(["group", "replicate_mean"])
                for offset, name in enumerate(sorted(groups)):
                    values = groups[name]
                    if not values:
                        continue
                    summary = stats_mod.bootstrap_mean(values, config.bootstrap_replicates, seed0 + offset)
                    means = stats_mod.bootstrap_replicate_means(values, config.bootstrap_replicates, seed0 + offset)
                    for value in means:
                        out.writerow([name, repr(float(value))])
                    summary_rows.append(
                        [
                            metric,
                            name,
                            repr(summary.mean),
                            repr(summary.ci_low),
                            repr(summary.ci_high),
                            "",
                            str(len(values)),
                        ]
                    )
            return groups

        tox_with = um_mod.read_user_toxicity_csv(self._artifact("metrics", "user_toxicity.csv"))
        tox_without = um_mod.read_user_toxicity_csv(self._artifact("metrics", "user_toxicity_originals.csv"))
        counts_total = {u: a + b for u, (a, b) in activity.items()}
        counts_orig = {u: a for u, (a, _) in activity.items()}
        groups = run_group_bootstraps(
            "user_toxicity", tox_with, counts_total, "bootstrap_user_toxicity.csv", config.seed + 11
        )
        run_group_bootstraps(
            "user_toxicity_no_retweets", tox_without, counts_orig, "bootstrap_user_toxicity_no_retweets.csv", config.seed + 13
        )
        if groups["coordinated"] and groups["non_coordinated"]:
            p_value = stats_mod.anderson_darling_k(
                [groups["coordinated"], groups["non_coordinated"]],
                simulations=config.ad_simulations,
                seed=config.seed + 17,
            )
            summary_rows.append(
                [
                    "anderson_darling",
                    "coordinated_vs_non_coordinated",
                    "",
                    "",
                    "",
                    repr(p_value),
                    str(len(groups["coordinated"]) + len(groups["non_coordinated"])),
                ]
            )
        pairs = seq_mod.read_block_pairs_detail_csv(self._artifact("sequences", "block_pairs_detail.csv"))
        user_leanings = leaning_mod.read_leaning_csv(self._artifact("leaning", "user_leaning.csv"), "user")
        with open(writer.path("bootstrap_conditioned_means.csv"), "w", encoding="utf-8", newline="") as handle:
            out = csv.writer(handle, lineterminator="\n")
            out.writerow(["condition", "group", "replicate_mean"])
            for cond_offset, condition in enumerate(seq_mod.CONDITIONS):
                if not pairs:
                    continue
                grouped: dict[str, list[float]] = {}
                for pair in sorted(pairs, key=lambda p: (p.user, p.index)):
                    value = seq_mod.classify_pair(pair, condition, user_leanings)
                    if value is not None:
                        grouped.setdefault(value, []).append(pair.production.mean_toxicity)
                for offset, name in enumerate(sorted(grouped)):
                    seed = config.seed + 19 + 10 * cond_offset + offset
                    summary = stats_mod.bootstrap_mean(grouped[name], config.bootstrap_replicates, seed)
                    means = stats_mod.bootstrap_replicate_means(grouped[name], config.bootstrap_replicates, seed)
                    for value in means:
                        out.writerow([condition, name, repr(float(value))])
                    summary_rows.append(
                        [
                            f"conditioned_{condition}",
                            name,
                            repr(summary.mean),
                            repr(summary.ci_low),
                            repr(summary.ci_high),
                            "",
                            str(len(grouped[name])),
                        ]
                    )
        with open(writer.path("compare_summary.csv"), "w", encoding="utf-8", newline="") as handle:
            out = csv.writer(handle, lineterminator="\n")
            out.writerow(["metric", "group", "mean", "ci_low", "ci_high", "p_value", "n"])
            for row in summary_rows:
                out.writerow(row)

    def _te_series(self) -> dict[str, te_mod.HourlySeries]:
        corpus = self.corpus()
        toxicity = self.toxicity_table().scores
        coordinated = self.coordination_result().coordinated
        stamps = [post.created_at for post in corpus.posts]
        start = te_mod.floor_hour(min(stamps))
        end = te_mod.floor_hour(max(stamps)) + te_mod.HOUR
        produced: list[tuple] = []
        interacted_coord: list[tuple] = []
        interacted_all: list[tuple] = []
        for post in corpus.posts:
            if post.author_id in coordinated:
                continue
            if post.kind == "original":
                if post.post_id in toxicity:
                    produced.append((post.created_at, toxicity[post.post_id]))
            elif post.referenced_post_id is not None and post.referenced_post_id in toxicity:
                ref_author = post.referenced_author_id or corpus.author_of(post.referenced_post_id)
                value = (post.created_at, toxicity[post.referenced_post_id])
                interacted_all.append(value)
                if ref_author is not None and ref_author in coordinated:
                    interacted_coord.append(value)
        window = (start, end)
        return {
            "produced": te_mod.hourly_series(produced, window),
            "interacted_coordinated": te_mod.hourly_series(interacted_coord, window),
            "interacted_all": te_mod.hourly_series(interacted_all, window),
        }

    def _stage_te(self, writer: StageWriter) -> None:
        config = self.config
        series = self._te_series()
        te_mod.write_series_csv(series["produced"], writer.path("hourly_produced.csv"))
        te_mod.write_series_csv(series["interacted_coordinated"], writer.path("hourly_interacted_coordinated.csv"))
        te_mod.write_series_csv(series["interacted_all"], writer.path("hourly_interacted_all.csv"))
        symbols = {}
        for name, hs in series.items():
            try:
                symbols[name] = te_mod.symbolize_series(hs, TE_PROBS)
            except ValueError:
                symbols[name] = None
        directions = [
            ("interacted_coordinated", "produced"),
            ("produced", "interacted_coordinated"),
            ("interacted_all", "produced"),
            ("produced", "interacted_all"),
        ]
        with open(writer.path("te_summary.csv"), "w", encoding="utf-8", newline="") as handle:
            out = csv.writer(handle, lineterminator="\n")
            out.writerow(["direction", "q", "history", "te", "p_value", "n_transitions"])
            for offset, (src, dst) in enumerate(directions):
                name = f"{src}->{dst}"
                x = symbols[src]
                y = symbols[dst]
                if x is None or y is None:
                    out.writerow([name, repr(config.te_q), config.te_history, "", "", 0])
                    continue
                try:
                    result = te_mod.te_significance(
                        x,
                        y,
                        q=config.te_q,
                        history=config.te_history,
                        bootstraps=config.te_bootstraps,
                        seed=config.seed + 23 + offset,
                    )
                except te_mod.InsufficientData:
                    out.writerow([name, repr(config.te_q), config.te_history, "", "", 0])
                    continue
                out.writerow(
                    [
                        name,
                        repr(config.te_q),
                        config.te_history,
                        repr(result.te_observed),
                        repr(result.p_value),
                        result.n_transitions,
                    ]
                )

    # -- report -----------------------------------------------------------

    def _stage_report(self, writer: StageWriter) -> None:
        emit_report(self, writer)


# ---------------------------------------------------------------------------
# Report helpers (kept at module level so they are directly testable).
# ---------------------------------------------------------------------------


def weighted_neighbor_mean(
    net: WeightedNetwork, values: Mapping[str, float]
) -> dict[str, float]:
    """Similarity-weighted mean of each node's neighbors' values.

    Nodes with no neighbor carrying a value are absent from the result.
    """
    out: dict[str, float] = {}
    for node in net.sorted_nodes():
        contributing: list[tuple[float, float]] = []
        for other in sorted(net.neighbors(node)):
            if other in values:
                contributing.append((net.neighbors(node)[other], values[other]))
        if len(contributing) == 1:
            out[node] = contributing[0][1]
        elif contributing:
            den = sum(w for w, _ in contributing)
            out[node] = sum(w * v for w, v in contributing) / den
    return out


def cluster_normalize(values: Mapping[str, float], communities: Mapping[str, int]) -> dict[str, float]:
    """Min-max normalize values within each community onto [0, 1]."""
    by_community: dict[int, list[float]] = {}
    for user in values:
        cid = communities.get(user)
        if cid is not None:
            by_community.setdefault(cid, []).append(values[user])
    bounds = {
        cid: (min(vals), max(vals)) for cid, vals in by_community.items()
    }
    out: dict[str, float] = {}
    for user in values:
        cid = communities.get(user)
        if cid is None:
            continue
        lo, hi = bounds[cid]
        out[user] = 0.5 if hi == lo else (values[user] - lo) / (hi - lo)
    return out


def histogram2d_rows(
    points: Sequence[tuple[float, float]], bins: int = JOINT_BINS
) -> list[tuple[float, float, float, float, int]]:
    """Nonzero 2-d histogram cells as (x_low, x_high, y_low, y_high, count)."""
    if not points:
        return []
    xs = np.asarray([p[0] for p in points], dtype=float)
    ys = np.asarray([p[1] for p in points], dtype=float)
    counts, x_edges, y_edges = np.histogram2d(xs, ys, bins=bins)
    rows: list[tuple[float, float, float, float, int]] = []
    for i in range(bins):
        for j in range(bins):
            count = int(counts[i, j])
            if count:
                rows.append(
                    (float(x_edges[i]), float(x_edges[i + 1]), float(y_edges[j]), float(y_edges[j + 1]), count)
                )
    return rows


def ecdf_rows(values: Sequence[float]) -> list[tuple[float, float]]:
    data = sorted(values)
    n = len(data)
    rows: list[tuple[float, float]] = []
    for i, v in enumerate(data, start=1):
        if i == n or data[i] != v:
            rows.append((v, i / n))
    return rows


def emit_report(pipeline: Pipeline, writer: StageWriter) -> None:
    config = pipeline.config
    corpus = pipeline.corpus()
    result = pipeline.coordination_result()
    backbone = pipeline.backbone()
    activity = pipeline._user_activity()
    tox_with = um_mod.read_user_toxicity_csv(pipeline._artifact("metrics", "user_toxicity.csv"))
    user_tox = {u: t.value for u, t in tox_with.items()}
    user_leanings = leaning_mod.read_leaning_csv(pipeline._artifact("leaning", "user_leaning.csv"), "user")

    spreaders = set(result.scores)

    # Fig 1 data: activity ECDFs, superspreaders vs everyone else.
    with open(writer.path("ecdf_activity.csv"), "w", encoding="utf-8", newline="") as handle:
        out = csv.writer(handle, lineterminator="\n")
        out.writerow(["group", "kind", "value", "ecdf"])
        for kind, index in (("original", 0), ("retweet", 1)):
            for group, selector in (
                ("superspreaders", lambda u: u in spreaders),
                ("others", lambda u: u not in spreaders),
            ):
                values = [float(activity[u][index]) for u in sorted(activity) if selector(u)]
                for value, q in ecdf_rows(values):
                    out.writerow([group, kind, repr(value), repr(q)])

    # Three largest communities by scored members.
    community_sizes: dict[int, int] = {}
    for user in result.scores:
        cid = result.communities.get(user)
        if cid is not None:
            community_sizes[cid] = community_sizes.get(cid, 0) + 1
    top3 = [cid for cid, _ in sorted(community_sizes.items(), key=lambda kv: (-kv[1], kv[0]))[:3]]
    in_top3 = {u for u in result.scores if result.communities.get(u) in top3}

    neighbor_tox = weighted_neighbor_mean(backbone, {u: user_tox[u] for u in user_tox if u in spreaders})
    spreader_leaning = {u: user_leanings[u] for u in sorted(spreaders) if u in user_leanings}
    neighbor_leaning = weighted_neighbor_mean(backbone, spreader_leaning)
    norm_leaning = cluster_normalize(
        {u: v for u, v in spreader_leaning.items() if u in result.coordinated and u in in_top3},
        result.communities,
    )

    def write_joint(name: str, rows_by_community: dict[int, list[tuple[float, float]]]) -> None:
        with open(writer.path(name), "w", encoding="utf-8", newline="") as handle:
            out = csv.writer(handle, lineterminator="\n")
            out.writerow(["community", "x_low", "x_high", "y_low", "y_high", "count"])
            for cid in sorted(rows_by_community):
                for x_lo, x_hi, y_lo, y_hi, count in histogram2d_rows(rows_by_community[cid]):
                    out.writerow([cid, repr(x_lo), repr(x_hi), repr(y_lo), repr(y_hi), count])

    def by_community(users: Sequence[str], x: Mapping[str, float], y: Mapping[str, float]) -> dict:
        grouped: dict[int, list[tuple[float, float]]] = {}
        for user in sorted(users):
            if user in x and user in y:
                grouped.setdefault(result.communities[user], []).append((x[user], y[user]))
        return grouped

    coordinated_top3 = sorted(u for u in result.coordinated if u in in_top3)
    write_joint("joint_score_toxicity.csv", by_community(sorted(in_top3), result.scores, user_tox))
    write_joint("joint_toxicity_neighbor_toxicity.csv", by_community(coordinated_top3, user_tox, neighbor_tox))
    write_joint("joint_leaning_toxicity.csv", by_community(coordinated_top3, norm_leaning, user_tox))
    write_joint("joint_leaning_neighbor_leaning.csv", by_community(coordinated_top3, spreader_leaning, neighbor_leaning))

    # Fig 3 data: activity vs toxicity smoother plus toxicity histograms.
    eligible = um_mod.filter_min_activity({u: a + b for u, (a, b) in activity.items()}, config.min_activity)
    with open(writer.path("activity_toxicity_loess.csv"), "w", encoding="utf-8", newline="") as handle:
        out = csv.writer(handle, lineterminator="\n")
        out.writerow(["group", "activity", "fitted", "ci_low", "ci_high"])
        for group, selector in (
            ("coordinated", lambda u: u in result.coordinated),
            ("non_coordinated", lambda u: u not in result.coordinated),
        ):
            users = [u for u in sorted(user_tox) if u in eligible and selector(u)]
            xs = [float(activity[u][0] + activity[u][1]) for u in users]
            ys = [user_tox[u] for u in users]
            if len(xs) >= 5 and len(set(xs)) > 1:
                for x0, fit, lo, hi in stats_mod.loess(xs, ys):
                    out.writerow([group, repr(x0), repr(fit), repr(lo), repr(hi)])
    with open(writer.path("user_toxicity_hist.csv"), "w", encoding="utf-8", newline="") as handle:
        out = csv.writer(handle, lineterminator="\n")
        out.writerow(["group", "bin_low", "bin_high", "count"])
        edges = np.linspace(0.0, 1.0, 31)
        for group, selector in (
            ("coordinated", lambda u: u in result.coordinated),
            ("non_coordinated", lambda u: u not in result.coordinated),
        ):
            values = [user_tox[u] for u in sorted(user_tox) if u in eligible and selector(u)]
            counts, _ = np.histogram(values, bins=edges)
            for i, count in enumerate(counts):
                out.writerow([group, repr(float(edges[i])), repr(float(edges[i + 1])), int(count)])

    # Fig 4 data: hourly series with a smoother per series.
    with open(writer.path("hourly_series.csv"), "w", encoding="utf-8", newline="") as handle:
        out = csv.writer(handle, lineterminator="\n")
        out.writerow(["series", "hour", "mean_toxicity", "count"])
        series_rows: dict[str, list[tuple[float, float]]] = {}
        for name in ("produced", "interacted_coordinated", "interacted_all"):
            hs = te_mod.read_series_csv(pipeline._artifact("te", f"hourly_{name}.csv"))
            points: list[tuple[float, float]] = []
            for i, (value, count) in enumerate(zip(hs.values, hs.counts)):
                hour = hs.hour_at(i).strftime("%Y-%m-%dT%H:%M:%S+00:00")
                out.writerow([name, hour, "" if value is None else repr(value), count])
                if value is not None:
                    points.append((float(i), value))
            series_rows[name] = points
    with open(writer.path("hourly_loess.csv"), "w", encoding="utf-8", newline="") as handle:
        out = csv.writer(handle, lineterminator="\n")
        out.writerow(["series", "hour_index", "fitted", "ci_low", "ci_high"])
        for name in sorted(series_rows):
            points = series_rows[name]
            if len(points) >= 5:
                xs = [p[0] for p in points]
                ys = [p[1] for p in points]
                for x0, fit, lo, hi in stats_mod.loess(xs, ys, span=0.3):
                    out.writerow([name, repr(x0), repr(fit), repr(lo), repr(hi)])
    with open(writer.path("hourly_hist.csv"), "w", encoding="utf-8", newline="") as handle:
        out = csv.writer(handle, lineterminator="\n")
        out.writerow(["series", "bin_low", "bin_high", "count"])
        edges = np.linspace(0.0, 1.0, 31)
        for name in sorted(series_rows):
            values = [p[1] for p in series_rows[name]]
            counts, _ = np.histogram(values, bins=edges)
            for i, count in enumerate(counts):
                out.writerow([name, repr(float(edges[i])), repr(float(edges[i + 1])), int(count)])

    # Statistics summary (correlations, assortativity, homogeneity test).
    stats_rows: list[list[str]] = []
    for cid in top3:
        members = sorted(u for u in result.scores if result.communities.get(u) == cid)
        for group, selector in (
            ("coordinated", lambda u: u in result.coordinated),
            ("non_coordinated", lambda u: u not in result.coordinated),
        ):
            xs = [result.scores[u] for u in members if selector(u) and u in user_tox]
            ys = [user_tox[u] for u in members if selector(u) and u in user_tox]
            if len(xs) >= 3:
                try:
                    res = stats_mod.spearman(xs, ys, config.spearman_replicates, seed=config.seed + 31 + cid)
                except ValueError:
                    continue
                stats_rows.append(
                    [
                        "spearman_score_toxicity",
                        f"community_{cid}_{group}",
                        repr(res.rho),
                        repr(res.ci_low),
                        repr(res.ci_high),
                        "",
                        str(len(xs)),
                    ]
                )
        coord_members = [u for u in members if u in result.coordinated]
        xs = [spreader_leaning[u] for u in coord_members if u in spreader_leaning and u in user_tox]
        ys = [user_tox[u] for u in coord_members if u in spreader_leaning and u in user_tox]
        if len(xs) >= 3:
            try:
                res = stats_mod.spearman(xs, ys, config.spearman_replicates, seed=config.seed + 41 + cid)
                stats_rows.append(
                    [
                        "spearman_leaning_toxicity",
                        f"community_{cid}_coordinated",
                        repr(res.rho),
                        repr(res.ci_low),
                        repr(res.ci_high),
                        "",
                        str(len(xs)),
                    ]
                )
            except ValueError:
                pass
        subgraph = backbone.subgraph(members)
        attr = {u: user_tox[u] for u in members if u in user_tox}
        try:
            value = stats_mod.assortativity(subgraph, attr)
            z, null_mean, null_sd = stats_mod.shuffle_zscore(subgraph, attr, config.shuffles, seed=config.seed + 51 + cid)
            stats_rows.append(
                ["assortativity_toxicity", f"community_{cid}", repr(value), "", "", "", str(subgraph.n_edges)]
            )
            stats_rows.append(
                ["assortativity_zscore", f"community_{cid}", repr(z), repr(null_mean), repr(null_sd), "", str(config.shuffles)]
            )
        except ValueError:
            pass
    with open(pipeline._artifact("compare", "compare_summary.csv"), "r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        next(reader, None)
        for row in reader:
            stats_rows.append(row)
    with open(writer.path("stats_summary.csv"), "w", encoding="utf-8", newline="") as handle:
        out = csv.writer(handle, lineterminator="\n")
        out.writerow(["metric", "scope", "value", "ci_low", "ci_high", "p_value", "n"])
        for row in stats_rows:
            out.writerow(row)

    # Bootstrap densities and flow summary, copied from upstream artifacts.
    for name in (
        "bootstrap_user_toxicity.csv",
        "bootstrap_user_toxicity_no_retweets.csv",
        "bootstrap_conditioned_means.csv",
    ):
        shutil.copyfile(pipeline._artifact("compare", name), writer.path(name))
    shutil.copyfile(pipeline._artifact("te", "te_summary.csv"), writer.path("te_summary.csv"))


def render_svgs(output_dir: str) -> list[str]:
    """Minimal self-contained SVG renderings of the headline report CSVs."""
    report_dir = os.path.join(output_dir, "report")
    rendered: list[str] = []
    ecdf_path = os.path.join(report_dir, "ecdf_activity.csv")
    if os.path.exists(ecdf_path):
        series: dict[tuple[str, str], list[tuple[float, float]]] = {}
        with open(ecdf_path, "r", encoding="utf-8", newline="") as handle:
            reader = csv.reader(handle)
            next(reader, None)
            for group, kind, value, q in reader:
                series.setdefault((group, kind), []).append((float(value), float(q)))
        out_path = os.path.join(report_dir, "ecdf_activity.svg")
        _write_line_svg(out_path, series, x_log=True)
        rendered.append(out_path)
    hourly_path = os.path.join(report_dir, "hourly_series.csv")
    if os.path.exists(hourly_path):
        series = {}
        with open(hourly_path, "r", encoding="utf-8", newline="") as handle:
            reader = csv.reader(handle)
            next(reader, None)
            for i, row in enumerate(reader):
                if row[2] == "":
                    continue
                series.setdefault((row[0], "toxicity"), []).append((float(i), float(row[2])))
        out_path = os.path.join(report_dir, "hourly_series.svg")
        _write_line_svg(out_path, series, x_log=False)
        rendered.append(out_path)
    return rendered


_SVG_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b", "#e377c2")


def _write_line_svg(path: str, series: dict, x_log: bool, width: int = 640, height: int = 360) -> None:
    import math as _math

    points_all = [p for pts in series.values() for p in pts]
    if not points_all:
        return
    xs = [(_math.log10(p[0] + 1.0) if x_log else p[0]) for p in points_all]
    ys = [p[1] for p in points_all]
    x_min, x_max = min(xs), max(xs)
    y_min, y_max = min(ys), max(ys)
    x_span = (x_max - x_min) or 1.0
    y_span = (y_max - y_min) or 1.0
    margin = 36
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    for idx, key in enumerate(sorted(series)):
        pts = sorted(series[key])
        coords = []
        for x, y in pts:
            fx = _math.log10(x + 1.0) if x_log else x
            px = margin + (fx - x_min) / x_span * (width - 2 * margin)
            py = height - margin - (y - y_min) / y_span * (height - 2 * margin)
            coords.append(f"{px:.2f},{py:.2f}")
        color = _SVG_COLORS[idx % len(_SVG_COLORS)]
        lines.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{" ".join(coords)}"/>')
        lines.append(
            f'<text x="{margin}" y="{margin + 14 * idx}" fill="{color}" font-size="11">{"/".join(key)}</text>'
        )
    lines.append("</svg>")
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("\n".join(lines))
        handle.write("\n")


def run(config: PipelineConfig, stage: str = "all") -> dict[str, bool]:
    pipeline = Pipeline(config)
    if stage == "all":
        return pipeline.run_all()
    return {stage: pipeline.run_stage(stage)}
