"""extract: manifest -> feature cache (one cache per d with --d-grid)."""

import argparse
import logging
from pathlib import Path

from voxpath.commands.common import positive_int, require_path
from voxpath.config import RunConfig
from voxpath.services.features import (
    batch_extract,
    read_manifest,
    save_feature_cache,
    with_n_mfcc,
)

logger = logging.getLogger(__name__)


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("extract", help="extract MFCC summary features into a cache")
    parser.add_argument("--manifest", help="manifest of 'path,label' lines")
    parser.add_argument("--out", help="feature cache path (JSON)")
    parser.add_argument("--d", type=positive_int, help="number of MFCCs kept (default from [dsp])")
    parser.add_argument(
        "--d-grid",
        action="store_true",
        help="write one cache per d in [features].d_grid, suffixed _d<d>",
    )
    parser.set_defaults(handler=run)


def grid_path(out: Path, d: int) -> Path:
    return out.with_name(f"{out.stem}_d{d}{out.suffix}")


def run(args: argparse.Namespace, config: RunConfig, jobs: int) -> dict:
    manifest = require_path(args.manifest, config.paths.manifest, "--manifest")
    out = require_path(args.out, config.paths.cache, "--out")
    entries = read_manifest(manifest)

    if args.d_grid:
        targets = [(d, grid_path(out, d)) for d in config.features.d_grid]
    else:
        targets = [(args.d or config.dsp.n_mfcc, out)]

    written = []
    for d, path in targets:
        mfcc_cfg = with_n_mfcc(config.dsp, d)
        table = batch_extract(entries, manifest.parent, mfcc_cfg, config.features, jobs=jobs)
        save_feature_cache(table, path)
        print(f"{path}: {len(table)} rows x {table.n_features} features")
        written.append(str(path))
    return {"caches": written}
