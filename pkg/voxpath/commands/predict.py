"""predict: label a WAV file or every clip of a manifest."""

import argparse
import logging
from pathlib import Path

from voxpath.commands.common import require_path
from voxpath.config import RunConfig
from voxpath.errors import StorageError
from voxpath.models import ClassLabel
from voxpath.services.dsp import read_wav
from voxpath.services.features import batch_extract, extract, read_manifest
from voxpath.services.persistence import load_model

logger = logging.getLogger(__name__)


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("predict", help="classify recordings with a trained model")
    parser.add_argument("--model", help="model file from train")
    parser.add_argument("--input", required=True, help="a .wav file or a manifest")
    parser.add_argument("--out", help="also write the predictions here")
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace, config: RunConfig, jobs: int) -> dict:
    pipeline, model_file = load_model(require_path(args.model, config.paths.model, "--model"))
    source = Path(args.input)

    if source.suffix.lower() == ".wav":
        vector = extract(read_wav(source), model_file.mfcc, model_file.features)
        label = ClassLabel(int(pipeline.predict(vector.values)[0]))
        lines = [label.slug]
    else:
        entries = read_manifest(source)
        table = batch_extract(entries, source.parent, model_file.mfcc, model_file.features, jobs=jobs)
        labels = pipeline.predict(table.X) if len(table) else []
        lines = [f"{cid},{ClassLabel(int(label)).slug}" for cid, label in zip(table.clip_ids, labels)]

    text = "\n".join(lines)
    print(text)
    if args.out:
        try:
            Path(args.out).write_text(text + "\n", encoding="utf-8")
        except OSError as e:
            raise StorageError(f"cannot write predictions {args.out}: {e}", path=args.out)
    return {"predictions": len(lines)}
