"""Successive halving and classification (SHAC) hyperparameter search.

Each stage evaluates a batch of samples that passed every classifier in the
cascade so far, then trains one more binary classifier separating the stage's
above-median scores from the rest. Later stages therefore sample from an
increasingly narrow region of the search space.
"""

import csv
import json
import logging
from collections.abc import Callable
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional, Sequence, Union

import numpy as np

from voxpath.errors import ConfigError, InvalidArgumentError, StorageError
from voxpath.models import GbtParams, SearchSpace, ShacConfig, ShacRecord
from voxpath.services.tabular import GbtModel, fit_gbt
from voxpath.services.workers import parallel_map

logger = logging.getLogger(__name__)

# Candidates drawn per vectorized rejection-sampling pass
SAMPLE_CHUNK = 1024
# Continuous values are rounded to this many decimals
VALUE_DECIMALS = 3

Sample = dict[str, Any]
Objective = Callable[[Sample], float]


@dataclass(eq=False)
class ShacResult:
    """Everything a search produced, in evaluation order."""

    evaluated: list[ShacRecord]
    cascade: list[GbtModel]
    candidates: list[ShacRecord]
    final_stage: int
    reused_final_stage: bool

    @property
    def n_evaluations(self) -> int:
        return len(self.evaluated)

    def best(self) -> ShacRecord:
        """Highest-scoring evaluation; the earliest wins ties."""
        if not self.evaluated:
            raise InvalidArgumentError("no evaluations recorded")
        scores = np.array([r.score for r in self.evaluated])
        return self.evaluated[int(np.argmax(scores))]

    def stage_scores(self, stage: int) -> list[float]:
        return [r.score for r in self.evaluated if r.stage == stage]


# Sampling


def draw_samples(space: SearchSpace, rng: np.random.Generator, size: int) -> tuple[list[Sample], np.ndarray]:
    """size independent uniform samples and their ordinal encodings (size, n_params)."""
    columns = []
    encoded = np.empty((size, len(space.params)))
    for col, spec in enumerate(space.params):
        if spec.is_discrete:
            index = rng.integers(0, len(spec.choices), size=size)
            columns.append([spec.choices[i] for i in index])
            encoded[:, col] = index
        else:
            raw = np.round(rng.uniform(spec.low, spec.high, size=size), VALUE_DECIMALS)
            raw = np.clip(raw, spec.low, spec.high)
            columns.append([float(v) for v in raw])
            encoded[:, col] = raw
    names = space.names
    samples = [dict(zip(names, values)) for values in zip(*columns)]
    return samples, encoded


def sample_uniform(space: SearchSpace, rng: np.random.Generator) -> Sample:
    """One uniform draw from every dimension."""
    samples, _ = draw_samples(space, rng, 1)
    return samples[0]


def encode_samples(space: SearchSpace, samples: Sequence[Sample]) -> np.ndarray:
    """Ordinal encoding: choice index for discrete dimensions, the value otherwise."""
    encoded = np.empty((len(samples), len(space.params)))
    for row, sample in enumerate(samples):
        for col, spec in enumerate(space.params):
            value = sample[spec.name]
            encoded[row, col] = spec.choices.index(value) if spec.is_discrete else float(value)
    return encoded


def _acceptance(cascade: Sequence[GbtModel], encoded: np.ndarray) -> np.ndarray:
    """P(above median) from every classifier, shape (n, len(cascade))."""
    if not cascade:
        return np.ones((encoded.shape[0], 0))
    return np.column_stack([clf.predict_proba(encoded)[:, 1] for clf in cascade])


def cascade_accepts(cascade: Sequence[GbtModel], space: SearchSpace, sample: Sample) -> bool:
    probs = _acceptance(cascade, encode_samples(space, [sample]))
    return bool(np.all(probs > 0.5))


def sample_through_cascade(
    space: SearchSpace,
    cascade: Sequence[GbtModel],
    rng: np.random.Generator,
    count: int,
    reject_cap: int,
) -> list[tuple[Sample, bool]]:
    """Rejection-sample count draws that every classifier accepts.

    After reject_cap consecutive rejections the rejected draw with the most
    accepting classifiers (then the largest summed margin) is taken instead
    and flagged as not accepted.
    """
    taken: list[tuple[Sample, bool]] = []
    rejected_run = 0
    runner_up: Optional[tuple[tuple[int, float], Sample]] = None

    while len(taken) < count:
        samples, encoded = draw_samples(space, rng, SAMPLE_CHUNK)
        probs = _acceptance(cascade, encoded)
        passes = np.all(probs > 0.5, axis=1)
        votes = np.sum(probs > 0.5, axis=1)
        margins = np.sum(probs - 0.5, axis=1)
        for idx in range(SAMPLE_CHUNK):
            if passes[idx]:
                taken.append((samples[idx], True))
                rejected_run, runner_up = 0, None
            else:
                rejected_run += 1
                key = (int(votes[idx]), float(margins[idx]))
                if runner_up is None or key > runner_up[0]:
                    runner_up = (key, samples[idx])
                if rejected_run >= reject_cap:
                    logger.warning(
                        f"Cascade rejected {reject_cap} draws in a row; forcing the best-margin draw"
                    )
                    taken.append((runner_up[1], False))
                    rejected_run, runner_up = 0, None
            if len(taken) == count:
                break
    return taken


# Search


def select_candidates(scores: Sequence[float]) -> list[int]:
    """Indices of scores strictly above mean + population std, best first."""
    values = np.asarray(scores, dtype=np.float64)
    if values.size == 0:
        raise InvalidArgumentError("cannot select candidates from an empty batch")
    if np.ptp(values) == 0:
        return []
    threshold = values.mean() + values.std()
    above = np.flatnonzero(values > threshold)
    return above[np.argsort(-values[above], kind="stable")].tolist()


def _stage_classifier(space: SearchSpace, records: Sequence[ShacRecord], cfg: ShacConfig) -> Optional[GbtModel]:
    scores = np.array([r.score for r in records])
    labels = (scores > np.median(scores)).astype(np.int64)
    if labels.min() == labels.max():
        logger.info("Stage scores do not split around the median; no classifier trained")
        return None
    params = GbtParams(
        n_estimators=cfg.classifier_rounds,
        max_depth=cfg.classifier_depth,
        learning_rate=cfg.classifier_learning_rate,
    )
    return fit_gbt(encode_samples(space, [r.values for r in records]), labels, params, n_classes=2)


def _evaluate(
    objective: Objective,
    drawn: Sequence[tuple[Sample, bool]],
    stage: int,
    jobs: int,
) -> list[ShacRecord]:
    scores = parallel_map(objective, [sample for sample, _ in drawn], jobs)
    return [
        ShacRecord(stage=stage, values=sample, score=float(score), accepted=accepted)
        for (sample, accepted), score in zip(drawn, scores)
    ]


def run_shac(
    space: SearchSpace,
    objective: Objective,
    cfg: ShacConfig,
    seed: int,
    jobs: int = 1,
) -> ShacResult:
    """Run the cascade search; at most cfg.budget objective calls.

    The objective must be picklable when jobs > 1. With the same seed and a
    deterministic objective the result is identical for every jobs value.
    """
    if cfg.budget < cfg.batch:
        raise ConfigError(f"shac: budget {cfg.budget} is smaller than one batch of {cfg.batch}")
    rng = np.random.default_rng(seed)
    evaluated: list[ShacRecord] = []
    cascade: list[GbtModel] = []

    stage = 0
    drawn = sample_through_cascade(space, cascade, rng, cfg.batch, cfg.reject_cap)
    stage_records = _evaluate(objective, drawn, stage, jobs)
    evaluated.extend(stage_records)
    logger.info(f"SHAC stage {stage}: best {max(r.score for r in stage_records):.4f}")

    while True:
        remaining = cfg.budget - len(evaluated)
        if remaining <= 0:
            break
        if len(cascade) < cfg.max_classifiers:
            classifier = _stage_classifier(space, stage_records, cfg)
            if classifier is not None:
                cascade.append(classifier)
        if remaining < cfg.batch or len(cascade) >= cfg.max_classifiers:
            break
        stage += 1
        drawn = sample_through_cascade(space, cascade, rng, cfg.batch, cfg.reject_cap)
        stage_records = _evaluate(objective, drawn, stage, jobs)
        evaluated.extend(stage_records)
        logger.info(
            f"SHAC stage {stage}: {len(cascade)} classifiers, "
            f"mean {np.mean([r.score for r in stage_records]):.4f}, "
            f"best {max(r.score for r in stage_records):.4f}"
        )

    remaining = cfg.budget - len(evaluated)
    if remaining >= cfg.final_batch:
        stage += 1
        drawn = sample_through_cascade(space, cascade, rng, cfg.final_batch, cfg.reject_cap)
        final_records = _evaluate(objective, drawn, stage, jobs)
        evaluated.extend(final_records)
        reused = False
    else:
        final_records = stage_records
        reused = True
        logger.info(f"Budget exhausted; stage {stage} doubles as the final batch")

    ranked = select_candidates([r.score for r in final_records])
    candidates = [final_records[i] for i in ranked]
    logger.info(
        f"SHAC finished: {len(evaluated)} evaluations, {len(cascade)} classifiers, "
        f"{len(candidates)} candidates"
    )
    return ShacResult(
        evaluated=evaluated,
        cascade=cascade,
        candidates=candidates,
        final_stage=stage,
        reused_final_stage=reused,
    )


# Tuning log


def export_history(records: Sequence[ShacRecord], space: SearchSpace, path: Union[str, Path]) -> None:
    """One CSV row per evaluation: stage, accepted, score, then every parameter."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["stage", "accepted", "score", *space.names])
            for record in records:
                values = [json.dumps(record.values[name]) for name in space.names]
                writer.writerow([record.stage, int(record.accepted), repr(record.score), *values])
    except OSError as e:
        raise StorageError(f"cannot write tuning log {path}: {e}", path=str(path))


def load_history(path: Union[str, Path], space: SearchSpace) -> list[ShacRecord]:
    path = Path(path)
    try:
        with open(path, newline="", encoding="utf-8") as f:
            rows = list(csv.DictReader(f))
    except OSError as e:
        raise StorageError(f"cannot read tuning log {path}: {e}", path=str(path))
    return [
        ShacRecord(
            stage=int(row["stage"]),
            accepted=bool(int(row["accepted"])),
            score=float(row["score"]),
            values={name: json.loads(row[name]) for name in space.names},
        )
        for row in rows
    ]
