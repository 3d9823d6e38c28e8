"""Versioned JSON files for trained pipelines and tuned hyperparameters."""

import logging
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np
from pydantic import BaseModel, ValidationError

from voxpath import __version__
from voxpath.errors import DataError, ModelFormatError, StorageError
from voxpath.models import (
    FeatureConfig,
    GbtData,
    HyperparamsFile,
    MetricReport,
    MfccConfig,
    ModelFile,
    OvoData,
    StandardizerState,
    SvmMachineData,
    TreeData,
)
from voxpath.services.pipeline import Hyperparams, TrainedPipeline
from voxpath.services.svm import BinarySvm, OvoSvm
from voxpath.services.tabular import DecisionTree, GbtModel

logger = logging.getLogger(__name__)

MODEL_FORMAT_VERSION = 1
HYPERPARAMS_FORMAT_VERSION = 1


# Classifier <-> data


def tree_to_data(tree: DecisionTree) -> TreeData:
    return TreeData(
        feature=tree.feature.tolist(),
        threshold=tree.threshold.tolist(),
        left=tree.left.tolist(),
        right=tree.right.tolist(),
        value=tree.value.tolist(),
    )


def tree_from_data(data: TreeData) -> DecisionTree:
    feature = np.array(data.feature, dtype=np.int64)
    return DecisionTree(
        feature=feature,
        threshold=np.array(data.threshold, dtype=np.float64),
        left=np.array(data.left, dtype=np.int64),
        right=np.array(data.right, dtype=np.int64),
        value=np.array(data.value, dtype=np.float64),
        importances=np.zeros(0),
    )


def classifier_to_data(classifier: Union[OvoSvm, GbtModel]) -> Union[OvoData, GbtData]:
    if isinstance(classifier, OvoSvm):
        return OvoData(
            n_classes=classifier.n_classes,
            machines=[
                SvmMachineData(
                    pair=pair,
                    gamma=machine.gamma,
                    C=machine.C,
                    bias=machine.bias,
                    support_vectors=machine.support_vectors.tolist(),
                    dual_coef=machine.dual_coef.tolist(),
                )
                for pair, machine in classifier.machines.items()
            ],
            skipped_pairs=classifier.skipped_pairs,
        )
    return GbtData(
        n_classes=classifier.n_classes,
        base_score=classifier.base_score.tolist(),
        rounds=[[tree_to_data(t) for t in trees] for trees in classifier.rounds],
    )


def classifier_from_data(data: Union[OvoData, GbtData], n_selected: int) -> Union[OvoSvm, GbtModel]:
    if isinstance(data, OvoData):
        machines = {}
        for m in data.machines:
            sv = np.array(m.support_vectors, dtype=np.float64).reshape(len(m.support_vectors), n_selected)
            machines[tuple(m.pair)] = BinarySvm(
                support_vectors=sv,
                dual_coef=np.array(m.dual_coef, dtype=np.float64),
                bias=m.bias,
                gamma=m.gamma,
                C=m.C,
            )
        return OvoSvm(
            n_classes=data.n_classes,
            machines=machines,
            skipped_pairs=[tuple(p) for p in data.skipped_pairs],
        )
    return GbtModel(
        n_classes=data.n_classes,
        base_score=np.array(data.base_score, dtype=np.float64),
        rounds=[[tree_from_data(t) for t in trees] for trees in data.rounds],
        train_loss=[],
    )


# Files


def _write(model: BaseModel, path: Union[str, Path], what: str) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(model.model_dump_json(indent=1), encoding="utf-8")
    except OSError as e:
        raise StorageError(f"cannot write {what} {path}: {e}", path=str(path))


def _read(path: Union[str, Path], what: str) -> str:
    path = Path(path)
    try:
        return path.read_text(encoding="utf-8")
    except OSError as e:
        raise StorageError(f"cannot read {what} {path}: {e}", path=str(path))


class _VersionProbe(BaseModel):
    format_version: int


def _check_version(raw: str, expected: int, path: Union[str, Path], what: str) -> None:
    try:
        probe = _VersionProbe.model_validate_json(raw)
    except ValidationError:
        raise DataError(f"{path}: not a {what} file")
    if probe.format_version != expected:
        raise ModelFormatError(
            f"{path}: {what} format version {probe.format_version}, this build reads {expected}"
        )


def save_model(
    pipeline: TrainedPipeline,
    path: Union[str, Path],
    mfcc: MfccConfig,
    features: FeatureConfig,
    provenance: Optional[dict[str, Any]] = None,
) -> None:
    standardizer = None
    if pipeline.mean is not None:
        standardizer = StandardizerState(mean=pipeline.mean.tolist(), scale=pipeline.scale.tolist())
    model = ModelFile(
        format_version=MODEL_FORMAT_VERSION,
        voxpath_version=__version__,
        hyperparams=pipeline.hyperparams,
        options=pipeline.options,
        d=pipeline.d,
        mfcc=mfcc,
        features=features,
        mask=pipeline.mask.tolist(),
        importances=pipeline.importances.tolist(),
        standardizer=standardizer,
        classifier=classifier_to_data(pipeline.classifier),
        seed=pipeline.seed,
        fingerprint=pipeline.fingerprint,
        provenance=provenance or {},
    )
    _write(model, path, "model")
    logger.info(f"Saved {pipeline.kind.value} model ({pipeline.n_selected} features) to {path}")


def load_model(path: Union[str, Path]) -> tuple[TrainedPipeline, ModelFile]:
    """Rebuild a pipeline; a different format version raises ModelFormatError."""
    raw = _read(path, "model")
    _check_version(raw, MODEL_FORMAT_VERSION, path, "model")
    try:
        data = ModelFile.model_validate_json(raw)
    except ValidationError as e:
        raise DataError(f"{path}: malformed model file ({e.error_count()} validation errors)")

    mask = np.array(data.mask, dtype=bool)
    if mask.size != 3 * data.d or not mask.any():
        raise DataError(f"{path}: mask must select at least one of {3 * data.d} features")
    mean = scale = None
    if data.standardizer is not None:
        mean = np.array(data.standardizer.mean, dtype=np.float64)
        scale = np.array(data.standardizer.scale, dtype=np.float64)
    pipeline = TrainedPipeline(
        hyperparams=data.hyperparams,
        options=data.options,
        mask=mask,
        importances=np.array(data.importances, dtype=np.float64),
        classifier=classifier_from_data(data.classifier, int(mask.sum())),
        d=data.d,
        seed=data.seed,
        fingerprint=data.fingerprint,
        mean=mean,
        scale=scale,
    )
    return pipeline, data


def save_hyperparams(
    hp: Hyperparams,
    path: Union[str, Path],
    tune_seed: Optional[int] = None,
    eval_seed: Optional[int] = None,
    fallback: bool = False,
    report: Optional[MetricReport] = None,
) -> None:
    _write(
        HyperparamsFile(
            format_version=HYPERPARAMS_FORMAT_VERSION,
            hyperparams=hp,
            tune_seed=tune_seed,
            eval_seed=eval_seed,
            fallback=fallback,
            report=report,
        ),
        path,
        "hyperparameters",
    )


def load_hyperparams(path: Union[str, Path]) -> HyperparamsFile:
    raw = _read(path, "hyperparameters")
    _check_version(raw, HYPERPARAMS_FORMAT_VERSION, path, "hyperparameters")
    try:
        return HyperparamsFile.model_validate_json(raw)
    except ValidationError as e:
        raise DataError(f"{path}: malformed hyperparameters file ({e.error_count()} validation errors)")
