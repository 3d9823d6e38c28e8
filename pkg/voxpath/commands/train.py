"""train: fit one pipeline on the whole feature table and save it."""

import argparse
import logging

from voxpath.commands.common import non_negative_int, require_path
from voxpath.config import RunConfig
from voxpath.services.features import load_feature_cache
from voxpath.services.persistence import load_hyperparams, save_model
from voxpath.services.pipeline import train_pipeline

logger = logging.getLogger(__name__)


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("train", help="fit a pipeline on all rows of a cache")
    parser.add_argument("--cache", help="feature cache from extract")
    parser.add_argument("--hyperparams", help="hyperparameters file from tune")
    parser.add_argument("--out", help="model file (JSON)")
    parser.add_argument("--seed", type=non_negative_int, help="model seed")
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace, config: RunConfig, jobs: int) -> dict:
    cache = require_path(args.cache, config.paths.cache, "--cache")
    hp_file = load_hyperparams(require_path(args.hyperparams, config.paths.hyperparams, "--hyperparams"))
    out = require_path(args.out, config.paths.model, "--out")
    seed = args.seed if args.seed is not None else config.seeds.model

    table = load_feature_cache(cache)
    pipeline = train_pipeline(table.X, table.y, hp_file.hyperparams, seed, config.pipeline)
    provenance = {
        "rows": len(table),
        "class_counts": {label.slug: n for label, n in table.class_counts().items()},
        "tuning_report": hp_file.report.model_dump() if hp_file.report else None,
    }
    save_model(pipeline, out, table.mfcc_config, table.feature_config, provenance)
    print(f"Saved {pipeline.kind.value} model to {out} ({pipeline.n_selected}/{pipeline.mask.size} features, seed {seed})")
    return {"model": str(out), "seed": seed, "fingerprint": pipeline.fingerprint}
