"""Command-line subcommands; each module exposes register(subparsers)."""

from voxpath.commands import evaluate, extract, predict, synth, train, tune

COMMANDS = [synth, extract, tune, train, evaluate, predict]

__all__ = ["COMMANDS", "synth", "extract", "tune", "train", "evaluate", "predict"]
