"""synth: write a synthetic corpus and its manifest."""

import argparse
import logging

from voxpath.commands.common import non_negative_int, override
from voxpath.config import RunConfig
from voxpath.services.synth import default_corpus_spec, gen_corpus, load_corpus_spec

logger = logging.getLogger(__name__)


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("synth", help="generate a labeled synthetic vowel corpus")
    parser.add_argument("--spec", help="corpus spec TOML; built-in class regimes when omitted")
    parser.add_argument("--out-dir", required=True, help="directory for WAV files and manifest.txt")
    parser.add_argument("--seed", type=non_negative_int, help="corpus seed (beats spec and config)")
    parser.add_argument("--duration", type=float, help="clip duration in seconds")
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace, config: RunConfig, jobs: int) -> dict:
    spec = load_corpus_spec(args.spec) if args.spec else default_corpus_spec()
    spec = override(spec, "corpus spec", duration_s=args.duration)
    seed = args.seed if args.seed is not None else (spec.seed if spec.seed is not None else config.seeds.synth)
    manifest = gen_corpus(spec, args.out_dir, seed=seed, jobs=jobs)
    total = sum(regime.count for regime in spec.classes.values())
    print(f"Wrote {total} clips and {manifest} (seed {seed})")
    return {"manifest": str(manifest), "clips": total, "seed": seed}
