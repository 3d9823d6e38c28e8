"""Per-clip feature vectors, manifests and the cached feature table."""

import logging
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
from pydantic import ValidationError

from voxpath.errors import (
    DataError,
    InvalidArgumentError,
    ModelFormatError,
    StorageError,
    VoxpathError,
)
from voxpath.models import (
    ClassLabel,
    FeatureCacheFile,
    FeatureConfig,
    FeatureRow,
    ManifestEntry,
    MfccConfig,
)
from voxpath.services.dsp import AudioClip, MfccMatrix, delta, mfcc, read_wav, resample
from voxpath.services.workers import parallel_map

logger = logging.getLogger(__name__)

CACHE_FORMAT_VERSION = 1

DEFAULT_BLOCKS = ("mfcc_mean", "delta_mean", "delta_max")


@dataclass(frozen=True, eq=False)
class FeatureVector:
    """Three concatenated d-length blocks, 3d values in total."""

    values: np.ndarray
    d: int

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != (3 * self.d,):
            raise InvalidArgumentError(f"expected {3 * self.d} feature values, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise InvalidArgumentError("feature values must be finite")
        object.__setattr__(self, "values", values)


@dataclass(eq=False)
class FeatureTable:
    """Rows of labeled feature vectors in manifest order."""

    clip_ids: list[str]
    X: np.ndarray
    y: np.ndarray
    d: int
    mfcc_config: MfccConfig = field(default_factory=MfccConfig)
    feature_config: FeatureConfig = field(default_factory=FeatureConfig)

    def __post_init__(self) -> None:
        self.X = np.asarray(self.X, dtype=np.float64).reshape(len(self.clip_ids), 3 * self.d)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.y.shape != (len(self.clip_ids),):
            raise InvalidArgumentError("one label per clip is required")
        if len(set(self.clip_ids)) != len(self.clip_ids):
            raise InvalidArgumentError("clip ids must be unique")
        if self.y.size and (self.y.min() < 0 or self.y.max() >= len(ClassLabel)):
            raise InvalidArgumentError(f"labels must be in 0..{len(ClassLabel) - 1}")

    def __len__(self) -> int:
        return len(self.clip_ids)

    @property
    def n_features(self) -> int:
        return 3 * self.d

    def class_counts(self) -> dict[ClassLabel, int]:
        return {label: int(np.sum(self.y == label)) for label in ClassLabel}


def aggregate(
    mfcc_mat: MfccMatrix,
    delta_mat: MfccMatrix,
    blocks: Sequence[str] = DEFAULT_BLOCKS,
    delta2_mat: Optional[MfccMatrix] = None,
) -> FeatureVector:
    """Concatenate per-coefficient summaries over frames.

    The default layout is [mean(mfcc) | mean(delta) | max(delta)].
    """
    if mfcc_mat.values.shape != delta_mat.values.shape:
        raise InvalidArgumentError(
            f"mfcc {mfcc_mat.values.shape} and delta {delta_mat.values.shape} shapes differ"
        )
    sources = {"mfcc": mfcc_mat, "delta": delta_mat, "delta2": delta2_mat}
    parts = []
    for block in blocks:
        source_name, _, stat = block.rpartition("_")
        source = sources.get(source_name)
        if source is None:
            raise InvalidArgumentError(f"feature block '{block}' needs a {source_name} matrix")
        if source.values.shape != mfcc_mat.values.shape:
            raise InvalidArgumentError(f"{source_name} shape differs from the mfcc shape")
        if stat == "mean":
            parts.append(source.values.mean(axis=1))
        elif stat == "max":
            parts.append(source.values.max(axis=1))
        else:
            raise InvalidArgumentError(f"unknown feature block '{block}'")
    return FeatureVector(values=np.concatenate(parts), d=mfcc_mat.n_coeffs)


def extract(clip: AudioClip, mfcc_cfg: MfccConfig, feat_cfg: FeatureConfig) -> FeatureVector:
    """resample -> mfcc -> delta -> aggregate for one clip."""
    if clip.sample_rate != mfcc_cfg.sample_rate:
        clip = resample(clip, mfcc_cfg.sample_rate)
    coeffs = mfcc(clip, mfcc_cfg)
    first = delta(coeffs, feat_cfg.delta_width, feat_cfg.delta_order)
    second = None
    if feat_cfg.needs_second_delta:
        second = delta(first, feat_cfg.delta_width, feat_cfg.delta_order)
    return aggregate(coeffs, first, feat_cfg.blocks, delta2_mat=second)


# Manifests


def read_manifest(path: Union[str, Path]) -> list[ManifestEntry]:
    """Parse 'relative/path.wav,label' lines; lines starting with '#' are comments."""
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise StorageError(f"cannot read manifest {path}: {e}", path=str(path))

    entries = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        clip_path, sep, label_text = line.rpartition(",")
        if not sep or not clip_path.strip():
            raise DataError(f"{path}:{lineno}: expected 'path,label', got '{raw.strip()}'")
        try:
            label = ClassLabel.from_slug(label_text)
        except ValueError as e:
            raise DataError(f"{path}:{lineno}: {e}")
        entries.append(ManifestEntry(path=clip_path.strip(), label=label))

    seen: set[str] = set()
    for entry in entries:
        if entry.path in seen:
            raise DataError(f"{path}: clip '{entry.path}' is listed twice")
        seen.add(entry.path)
    return entries


def write_manifest(entries: Sequence[ManifestEntry], path: Union[str, Path], header: str = "") -> None:
    lines = [f"# {header}"] if header else []
    lines.extend(f"{entry.path},{entry.label.slug}" for entry in entries)
    try:
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as e:
        raise StorageError(f"cannot write manifest {path}: {e}", path=str(path))


def _extract_path(
    path: Path, mfcc_cfg: MfccConfig, feat_cfg: FeatureConfig
) -> Union[np.ndarray, str]:
    """Worker: feature values for one file, or an error message."""
    try:
        return extract(read_wav(path), mfcc_cfg, feat_cfg).values
    except VoxpathError as e:
        return str(e)
    except (OSError, ValueError) as e:
        return f"{type(e).__name__}: {e}"


def batch_extract(
    entries: Sequence[ManifestEntry],
    base_dir: Union[str, Path],
    mfcc_cfg: MfccConfig,
    feat_cfg: FeatureConfig,
    jobs: int = 1,
) -> FeatureTable:
    """Extract every manifest entry; any failure aborts with all failing paths."""
    base_dir = Path(base_dir)
    d = mfcc_cfg.n_mfcc
    if not entries:
        logger.warning("Manifest is empty; returning an empty feature table")
        return FeatureTable([], np.empty((0, 3 * d)), np.empty(0, dtype=np.int64), d, mfcc_cfg, feat_cfg)

    logger.info(f"Extracting features (d={d}) from {len(entries)} clips with {jobs} jobs")
    worker = partial(_extract_path, mfcc_cfg=mfcc_cfg, feat_cfg=feat_cfg)
    results = parallel_map(worker, [base_dir / e.path for e in entries], jobs)

    failures = [
        f"{entry.path}: {result}"
        for entry, result in zip(entries, results)
        if isinstance(result, str)
    ]
    if failures:
        raise DataError(f"{len(failures)} clips failed feature extraction: " + "; ".join(failures))

    return FeatureTable(
        clip_ids=[e.path for e in entries],
        X=np.vstack(results),
        y=np.array([int(e.label) for e in entries], dtype=np.int64),
        d=d,
        mfcc_config=mfcc_cfg,
        feature_config=feat_cfg,
    )


def with_n_mfcc(mfcc_cfg: MfccConfig, d: int) -> MfccConfig:
    """Same front end with d coefficients kept."""
    try:
        return MfccConfig.model_validate({**mfcc_cfg.model_dump(), "n_mfcc": d})
    except ValidationError as e:
        raise InvalidArgumentError(f"cannot keep d={d} coefficients: {e.errors()[0]['msg']}")


# Feature cache


def save_feature_cache(table: FeatureTable, path: Union[str, Path]) -> None:
    cache = FeatureCacheFile(
        format_version=CACHE_FORMAT_VERSION,
        d=table.d,
        mfcc=table.mfcc_config,
        features=table.feature_config,
        rows=[
            FeatureRow(clip_id=cid, label=ClassLabel(int(label)), values=row.tolist())
            for cid, label, row in zip(table.clip_ids, table.y, table.X)
        ],
    )
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(cache.model_dump_json(indent=1), encoding="utf-8")
    except OSError as e:
        raise StorageError(f"cannot write feature cache {path}: {e}", path=str(path))
    logger.info(f"Wrote {len(table)} feature rows (d={table.d}) to {path}")


def load_feature_cache(path: Union[str, Path]) -> FeatureTable:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise StorageError(f"cannot read feature cache {path}: {e}", path=str(path))
    try:
        cache = FeatureCacheFile.model_validate_json(text)
    except ValidationError as e:
        raise DataError(f"{path}: not a feature cache ({e.error_count()} validation errors)")
    if cache.format_version != CACHE_FORMAT_VERSION:
        raise ModelFormatError(
            f"{path}: feature cache version {cache.format_version}, expected {CACHE_FORMAT_VERSION}"
        )
    bad = [row.clip_id for row in cache.rows if len(row.values) != 3 * cache.d]
    if bad:
        raise DataError(f"{path}: rows {bad[:3]} do not hold {3 * cache.d} values")
    X = np.array([row.values for row in cache.rows], dtype=np.float64).reshape(len(cache.rows), 3 * cache.d)
    return FeatureTable(
        clip_ids=[row.clip_id for row in cache.rows],
        X=X,
        y=np.array([int(row.label) for row in cache.rows], dtype=np.int64),
        d=cache.d,
        mfcc_config=cache.mfcc,
        feature_config=cache.features,
    )
