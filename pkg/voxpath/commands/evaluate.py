"""evaluate: k-fold cross-validation report for a hyperparameter file."""

import argparse
import logging

from voxpath.commands.common import non_negative_int, override, positive_int, require_path
from voxpath.config import RunConfig
from voxpath.services.features import load_feature_cache
from voxpath.services.persistence import load_hyperparams
from voxpath.services.pipeline import cross_validate
from voxpath.services.reports import render_table, write_report

logger = logging.getLogger(__name__)

MODEL_NAMES = {"svm-pipeline": "Proposed (RF + SVM)", "gbt": "Gradient boosting"}


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("evaluate", help="cross-validate tuned hyperparameters")
    parser.add_argument("--cache", help="feature cache from extract")
    parser.add_argument("--hyperparams", help="hyperparameters file from tune")
    parser.add_argument("--out", help="report path (JSON; a .txt table is written beside it)")
    parser.add_argument("--k", type=positive_int, help="number of folds")
    parser.add_argument("--seed", type=non_negative_int, help="fold and model seed")
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace, config: RunConfig, jobs: int) -> dict:
    cache = require_path(args.cache, config.paths.cache, "--cache")
    hp_path = require_path(args.hyperparams, config.paths.hyperparams, "--hyperparams")
    options = override(config.pipeline, "pipeline", k=args.k)
    seed = args.seed if args.seed is not None else config.seeds.eval

    table = load_feature_cache(cache)
    hp = load_hyperparams(hp_path).hyperparams
    report = cross_validate(table, hp, options.k, seed, options, jobs=jobs)
    name = MODEL_NAMES[hp.kind]
    print(render_table({name: report}))

    outputs = {"weighted": report.weighted, "seed": seed, "k": options.k}
    out = args.out or config.paths.report
    if out:
        provenance = {
            "seed": seed,
            "k": options.k,
            "d": table.d,
            "rows": len(table),
            "hyperparams": hp.model_dump(),
        }
        write_report(out, name, report, provenance)
        outputs["report"] = str(out)
    return outputs
