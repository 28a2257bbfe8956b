"""Command line entry point: `painpoints run`, one subcommand per stage, and `painpoints synth`.

Log verbosity comes from the PAINPOINTS_LOG_LEVEL environment variable
(DEBUG, INFO, WARNING, ...; default WARNING).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from painpoints import config as cfgmod
from painpoints import pipeline, synth
from painpoints.corpus import ConfigError

LOG_ENV = "PAINPOINTS_LOG_LEVEL"

EXIT_STAGE_FAILED = 1
EXIT_BAD_CONFIG = 2

STAGE_HELP = {
    "ingest": "read the input corpus (jsonl/csv) into reviews.jsonl",
    "preprocess": "normalize, tokenize, build the keyword lexicon and filter reviews",
    "train-sent": "train the sentiment classifier on an 8:1:1 split",
    "topics-init": "embed reviews and cluster them into initial topics with an outlier class",
    "topics-merge": "merge topics sharing keywords and drop minor topics",
    "itm": "iteratively retrain a topic classifier and relabel confident reviews",
    "extract": "attribute, expand and rank sentiment and per-topic pain points",
    "evaluate": "coherence, outlier ratio, classifier and optional ground-truth metrics",
    "report": "write report.json, report.md and figures",
}


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("-c", "--config", type=Path, help="INI configuration file (defaults apply when omitted)")
    p.add_argument("-i", "--input", type=Path, help="override pipeline.input")
    p.add_argument("-o", "--output-dir", type=Path, help="override pipeline.output_dir")
    p.add_argument("--seed", type=int, help="override pipeline.seed")
    p.add_argument("--truth", type=Path, help="override pipeline.truth (ground-truth sidecar)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="painpoints",
        description="Extract customer pain points from reviews with attribution over sentiment and topic "
                    f"classifiers. Set {LOG_ENV} to control logging.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run every stage in order")
    _add_common(run)
    for name, text in STAGE_HELP.items():
        _add_common(sub.add_parser(name, help=text))

    syn = sub.add_parser("synth", help="write a seeded synthetic corpus plus a ground-truth sidecar")
    syn.add_argument("output", type=Path, help="corpus path (.jsonl); the sidecar is <stem>.truth.jsonl")
    syn.add_argument("--seed", type=int, default=0)
    syn.add_argument("--docs-per-topic", type=int, default=200)
    syn.add_argument("--negative-fraction", type=float, default=0.4)
    syn.add_argument("--noise-rate", type=float, default=0.05)

    dc = sub.add_parser("default-config", help="print the default configuration file")
    dc.add_argument("output", type=Path, nargs="?", help="write here instead of stdout")
    return parser


def _load_config(args) -> cfgmod.PipelineConfig:
    conf = cfgmod.load(args.config) if args.config else cfgmod.parse("", Path.cwd())
    return conf.with_overrides(input=args.input, output_dir=args.output_dir, seed=args.seed, truth=args.truth)


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get(LOG_ENV, "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)

    if args.command == "default-config":
        if args.output:
            args.output.write_text(cfgmod.DEFAULT_INI, encoding="utf-8")
        else:
            sys.stdout.write(cfgmod.DEFAULT_INI)
        return 0

    if args.command == "synth":
        try:
            spec = synth.GeneratorSpec(docs_per_topic=args.docs_per_topic, negative_fraction=args.negative_fraction,
                                       noise_rate=args.noise_rate, seed=args.seed)
            reviews, truth = synth.generate(spec)
        except synth.SynthError as exc:
            print(f"painpoints: stage synth failed: {exc}", file=sys.stderr)
            return EXIT_STAGE_FAILED
        args.output.parent.mkdir(parents=True, exist_ok=True)
        sidecar = synth.write_corpus(reviews, truth, args.output)
        print(f"wrote {len(reviews)} reviews to {args.output} and ground truth to {sidecar}")
        return 0

    try:
        conf = _load_config(args)
        if args.command in ("run", "ingest") and conf.input is None:
            raise ConfigError("pipeline.input is not set (use --input or the config file)")
        conf.check_inputs()
    except (ConfigError, ValueError) as exc:
        print(f"painpoints: configuration error: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG

    try:
        if args.command == "run":
            manifest = pipeline.run_pipeline(conf)
            print(f"run complete: {Path(conf.output_dir) / pipeline.REPORT_MD} "
                  f"(config {manifest.config_hash[:12]})")
        else:
            artifacts = pipeline.run_stage(conf, args.command)
            print(f"{args.command}: wrote {', '.join(artifacts)}")
    except pipeline.StageError as exc:
        print(f"painpoints: {exc}", file=sys.stderr)
        return EXIT_STAGE_FAILED
    return 0


if __name__ == "__main__":
    sys.exit(main())
