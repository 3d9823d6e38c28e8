"""tune: cascade search for the best hyperparameters of one model kind."""

import argparse
import logging
from pathlib import Path

from voxpath.commands.common import non_negative_int, override, positive_int, require_path
from voxpath.config import RunConfig
from voxpath.errors import ConfigError
from voxpath.models import PipelineKind
from voxpath.services.features import load_feature_cache
from voxpath.services.persistence import save_hyperparams
from voxpath.services.pipeline import space_for, tune
from voxpath.services.shac import export_history

logger = logging.getLogger(__name__)


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("tune", help="search hyperparameters with SHAC")
    parser.add_argument("--cache", help="feature cache from extract")
    parser.add_argument(
        "--kind",
        choices=[k.value for k in PipelineKind],
        default=PipelineKind.SVM_PIPELINE.value,
        help="model family to tune",
    )
    parser.add_argument("--out", help="best-hyperparameters file (JSON)")
    parser.add_argument("--log", help="tuning log CSV (default: <out>.csv)")
    parser.add_argument("--budget", type=positive_int, help="evaluations, capped at [shac].budget")
    parser.add_argument("--k", type=positive_int, help="folds per evaluation")
    parser.add_argument("--seed", type=non_negative_int, help="tuning seed")
    parser.add_argument("--eval-seed", type=non_negative_int, help="re-ranking seed")
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace, config: RunConfig, jobs: int) -> dict:
    cache = require_path(args.cache, config.paths.cache, "--cache")
    out = require_path(args.out, config.paths.hyperparams, "--out")
    log_path = Path(args.log) if args.log else out.with_suffix(".csv")
    kind = PipelineKind(args.kind)

    shac_cfg = config.shac
    if args.budget is not None:
        if args.budget > shac_cfg.budget:
            logger.warning(f"--budget {args.budget} capped at the configured {shac_cfg.budget}")
        shac_cfg = override(shac_cfg, "shac", budget=min(args.budget, shac_cfg.budget))
    options = override(config.pipeline, "pipeline", k=args.k)
    tune_seed = args.seed if args.seed is not None else config.seeds.tune
    eval_seed = args.eval_seed if args.eval_seed is not None else config.seeds.eval

    overrides = config.search.svm_pipeline if kind == PipelineKind.SVM_PIPELINE else config.search.gbt
    try:
        space = space_for(kind, options).with_overrides(overrides)
    except ValueError as e:
        raise ConfigError(f"search.{kind.value.replace('-', '_')}: {e}")

    table = load_feature_cache(cache)
    result = tune(table, kind, space, shac_cfg, tune_seed, eval_seed, options, jobs=jobs)
    save_hyperparams(
        result.best,
        out,
        tune_seed=tune_seed,
        eval_seed=eval_seed,
        fallback=result.fallback,
        report=result.report,
    )
    export_history(result.search.evaluated, space, log_path)
    print(f"Best {kind.value}: {result.best.model_dump()}")
    print(f"Eval weighted score {result.report.weighted:.4f} (+/- {result.report.std_dev:.4f})")
    return {
        "hyperparams": str(out),
        "log": str(log_path),
        "evaluations": result.search.n_evaluations,
        "fallback": result.fallback,
    }
