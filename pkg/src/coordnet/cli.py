"""Command line entry point: run pipeline stages against a config file."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .pipeline import STAGES, Pipeline, PipelineError, read_config, render_svgs


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coordnet",
        description="Detect retweet-based coordination and analyze its relationship with content toxicity.",
    )
    parser.add_argument("stage", choices=list(STAGES) + ["all"], help="pipeline stage to run, or 'all'")
    parser.add_argument("--config", required=True, help="path to the pipeline config file")
    parser.add_argument("--seed", type=int, default=None, help="override the config's global seed")
    parser.add_argument(
        "--offline-toxicity",
        action="store_true",
        help="force the deterministic offline toxicity scorer regardless of config",
    )
    parser.add_argument("--svg", action="store_true", help="also render summary SVGs after the report stage")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = read_config(args.config)
    except (OSError, ValueError, PipelineError) as exc:
        print(f"error: cannot load config {args.config}: {exc}", file=sys.stderr)
        return 2
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    if args.offline_toxicity:
        config = replace(config, scorer_mode="offline")
    pipeline = Pipeline(config)
    try:
        if args.stage == "all":
            outcomes = pipeline.run_all()
        else:
            outcomes = {args.stage: pipeline.run_stage(args.stage)}
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for stage, ran in outcomes.items():
        print(f"{stage}: {'ran' if ran else 'cached'}")
    if args.svg and ("report" in outcomes):
        for path in render_svgs(config.output_dir):
            print(f"rendered {path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
