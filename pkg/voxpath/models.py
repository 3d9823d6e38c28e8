"""Pydantic models for voxpath."""

import math
from enum import Enum, IntEnum
from typing import Annotated, Any, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class ClassLabel(IntEnum):
    """Diagnostic classes, integer-coded in training order."""
    NORMAL = 0
    NEOPLASM = 1
    PHONOTRAUMA = 2
    VOCAL_PALSY = 3

    @property
    def slug(self) -> str:
        return LABEL_SLUGS[self]

    @classmethod
    def from_slug(cls, text: str) -> "ClassLabel":
        key = text.strip().lower()
        for label, slug in LABEL_SLUGS.items():
            if slug == key:
                return label
        raise ValueError(f"unknown class label '{text}'")


# Manifest and directory names for each class
LABEL_SLUGS = {
    ClassLabel.NORMAL: "normal",
    ClassLabel.NEOPLASM: "neoplasm",
    ClassLabel.PHONOTRAUMA: "phonotrauma",
    ClassLabel.VOCAL_PALSY: "vocal_palsy",
}

NUM_CLASSES = len(ClassLabel)


class PipelineKind(str, Enum):
    """Classifier family trained after feature selection."""
    SVM_PIPELINE = "svm-pipeline"
    GBT = "gbt"


FeatureBlock = Literal[
    "mfcc_mean", "mfcc_max", "delta_mean", "delta_max", "delta2_mean", "delta2_max"
]


class MfccConfig(BaseModel):
    """Front-end framing and mel/MFCC settings."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    sample_rate: int = Field(default=22050, gt=0)
    n_fft: int = Field(default=2048, ge=2)
    hop: int = Field(default=512, gt=0)
    n_mels: int = Field(default=128, gt=0)
    n_mfcc: int = Field(default=15, gt=0)
    fmin: float = Field(default=0.0, ge=0.0)
    fmax: Optional[float] = Field(default=None, gt=0.0)
    log_floor: float = Field(default=1e-10, gt=0.0)

    @property
    def n_bins(self) -> int:
        return self.n_fft // 2 + 1

    @property
    def resolved_fmax(self) -> float:
        return self.fmax if self.fmax is not None else self.sample_rate / 2.0

    @model_validator(mode="after")
    def _check_ranges(self) -> "MfccConfig":
        if self.n_fft % 2:
            raise ValueError(f"n_fft must be even, got {self.n_fft}")
        if self.n_mels > self.n_bins:
            raise ValueError(f"n_mels={self.n_mels} exceeds n_fft/2+1={self.n_bins}")
        if self.n_mfcc > self.n_mels:
            raise ValueError(f"n_mfcc={self.n_mfcc} exceeds n_mels={self.n_mels}")
        if self.resolved_fmax > self.sample_rate / 2.0:
            raise ValueError(f"fmax={self.resolved_fmax} is above Nyquist")
        if self.fmin >= self.resolved_fmax:
            raise ValueError(f"fmin={self.fmin} must be below fmax={self.resolved_fmax}")
        return self


class FeatureConfig(BaseModel):
    """Delta smoothing and summary-statistic layout."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    delta_width: int = Field(default=9, ge=3)
    delta_order: int = Field(default=1, ge=1)
    blocks: tuple[FeatureBlock, FeatureBlock, FeatureBlock] = (
        "mfcc_mean",
        "delta_mean",
        "delta_max",
    )
    d_grid: tuple[int, ...] = (10, 15, 20, 25, 30, 40, 50, 100)

    @model_validator(mode="after")
    def _check_layout(self) -> "FeatureConfig":
        if self.delta_width % 2 == 0:
            raise ValueError(f"delta_width must be odd, got {self.delta_width}")
        if self.delta_order >= self.delta_width:
            raise ValueError("delta_order must be below delta_width")
        if len(set(self.blocks)) != len(self.blocks):
            raise ValueError(f"feature blocks must be distinct, got {list(self.blocks)}")
        if any(d <= 0 for d in self.d_grid):
            raise ValueError("d_grid values must be positive")
        return self

    @property
    def needs_second_delta(self) -> bool:
        return any(block.startswith("delta2") for block in self.blocks)


class TreeParams(BaseModel):
    """Growth limits for a single CART tree."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    max_depth: Optional[int] = Field(default=None, ge=0)
    min_samples_split: int = Field(default=2, ge=2)
    n_features_per_split: Optional[int] = Field(default=None, ge=1)


class GbtParams(BaseModel):
    """Gradient-boosted tree ensemble settings."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    n_estimators: int = Field(default=100, gt=0)
    max_depth: int = Field(default=3, ge=1)
    learning_rate: float = Field(default=0.1, gt=0.0)


class SvmParams(BaseModel):
    """Soft-margin RBF machine settings; gamma is already resolved."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    C: float = Field(default=1.0, gt=0.0)
    gamma: float = Field(default=1.0, gt=0.0)
    gamma_raw: Optional[float] = None
    tol: float = Field(default=1e-3, gt=0.0)
    max_iter: Optional[int] = Field(default=None, gt=0)


class ShacConfig(BaseModel):
    """Cascade search budget and stage-classifier settings."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    budget: int = Field(default=1000, gt=0)
    batch: int = Field(default=100, gt=0)
    max_classifiers: int = Field(default=10, ge=1)
    final_batch: int = Field(default=100, gt=0)
    reject_cap: int = Field(default=10000, gt=0)
    classifier_rounds: int = Field(default=50, gt=0)
    classifier_depth: int = Field(default=3, ge=1)
    classifier_learning_rate: float = Field(default=0.1, gt=0.0)


ParamValue = Union[int, float, str, None]


class ParamDomain(BaseModel):
    """Either a finite choice list or a closed real interval."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    choices: Optional[tuple[ParamValue, ...]] = None
    low: Optional[float] = None
    high: Optional[float] = None

    @field_validator("choices")
    @classmethod
    def _none_keyword(cls, value: Optional[tuple]) -> Optional[tuple]:
        # TOML has no null, so "none" spells "no limit"
        if value is None:
            return value
        return tuple(None if isinstance(v, str) and v.lower() == "none" else v for v in value)

    @model_validator(mode="after")
    def _one_kind(self) -> "ParamDomain":
        interval = self.low is not None or self.high is not None
        if self.choices is not None and interval:
            raise ValueError("give either choices or low/high, not both")
        if self.choices is not None:
            if not self.choices:
                raise ValueError("choices must not be empty")
        elif self.low is None or self.high is None:
            raise ValueError("an interval needs both low and high")
        elif not self.low < self.high:
            raise ValueError(f"low={self.low} must be below high={self.high}")
        return self

    @property
    def is_discrete(self) -> bool:
        return self.choices is not None


class ParamSpec(ParamDomain):
    """Named search dimension."""

    name: str


class SearchSpace(BaseModel):
    """Ordered hyperparameter domains searched by the cascade."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    params: tuple[ParamSpec, ...]

    @model_validator(mode="after")
    def _unique_names(self) -> "SearchSpace":
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate parameter names in {names}")
        if not names:
            raise ValueError("a search space needs at least one parameter")
        return self

    @property
    def names(self) -> list[str]:
        return [p.name for p in self.params]

    def with_overrides(self, overrides: dict[str, ParamDomain]) -> "SearchSpace":
        """Replace the domains of named dimensions; unknown names are rejected."""
        unknown = sorted(set(overrides) - set(self.names))
        if unknown:
            raise ValueError(f"unknown search parameters {unknown}; known: {self.names}")
        params = []
        for spec in self.params:
            domain = overrides.get(spec.name)
            if domain is None:
                params.append(spec)
            else:
                params.append(ParamSpec(name=spec.name, **domain.model_dump()))
        return SearchSpace(params=tuple(params))


class ShacRecord(BaseModel):
    """One evaluated sample in the tuning log."""
    stage: int = Field(ge=0)
    values: dict[str, Any]
    score: float
    accepted: bool = True


class ProposedHyperparams(BaseModel):
    """Forest selection followed by a one-vs-one RBF SVM."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: Literal["svm-pipeline"] = "svm-pipeline"
    rf_trees: int = Field(default=100, gt=0)
    rf_depth: Optional[int] = Field(default=None, ge=1)
    sel_threshold: float = Field(default=0.0, ge=0.0, le=0.5)
    svm_C: float = Field(default=1.0, ge=0.0)
    gamma_raw: float = Field(default=-1.0, ge=-1.0, le=1.0)


class GbtHyperparams(BaseModel):
    """Gradient-boosted trees on forest-selected features."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: Literal["gbt"] = "gbt"
    n_estimators: int = Field(default=100, gt=0)
    max_depth: int = Field(default=3, ge=1)
    learning_rate: float = Field(default=0.1, gt=0.0, le=1.0)
    rf_trees: int = Field(default=100, gt=0)
    rf_depth: Optional[int] = Field(default=None, ge=1)
    sel_threshold: float = Field(default=0.0, ge=0.0, le=0.5)


PipelineHyperparams = Annotated[
    Union[ProposedHyperparams, GbtHyperparams], Field(discriminator="kind")
]


class MetricWeights(BaseModel):
    """Weights of the combined score."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    sensitivity: float = Field(default=0.4, ge=0.0)
    specificity: float = Field(default=0.2, ge=0.0)
    recall: float = Field(default=0.4, ge=0.0)


class BaselineSelection(BaseModel):
    """Forest/selection settings the baseline uses when they are not searched."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    rf_trees: int = Field(default=100, gt=0)
    rf_depth: Optional[int] = Field(default=None, ge=1)
    sel_threshold: float = Field(default=0.0, ge=0.0, le=0.5)


class PipelineOptions(BaseModel):
    """Settings shared by every pipeline fit and cross-validation run."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    k: int = Field(default=5, ge=2)
    standardize: bool = False
    svm_tol: float = Field(default=1e-3, gt=0.0)
    svm_max_iter: Optional[int] = Field(default=None, gt=0)
    weights: MetricWeights = Field(default_factory=MetricWeights)
    baseline_selection: BaselineSelection = Field(default_factory=BaselineSelection)
    baseline_shared_selection: bool = False


class FoldMetrics(BaseModel):
    """Metrics on a single held-out fold."""
    fold: int = Field(ge=0)
    n: int = Field(ge=0)
    sensitivity: float = Field(ge=0.0, le=1.0)
    specificity: float = Field(ge=0.0, le=1.0)
    uar: float = Field(ge=0.0, le=1.0)
    weighted: float


class MetricReport(BaseModel):
    """Binary and multi-class scores, fold means when cross-validated."""
    sensitivity: float = Field(ge=0.0, le=1.0)
    specificity: float = Field(ge=0.0, le=1.0)
    uar: float = Field(ge=0.0, le=1.0)
    weighted: float
    std_dev: float = Field(default=0.0, ge=0.0)
    folds: list[FoldMetrics] = Field(default_factory=list)
    k: Optional[int] = None
    seed: Optional[int] = None


class ManifestEntry(BaseModel):
    """A recording path relative to the manifest and its class."""
    path: str
    label: ClassLabel


class FeatureRow(BaseModel):
    """Cached feature vector for one clip."""
    clip_id: str
    label: ClassLabel
    values: list[float]


class FeatureCacheFile(BaseModel):
    """On-disk feature table with the settings that produced it."""
    format_version: int
    d: int = Field(gt=0)
    mfcc: MfccConfig
    features: FeatureConfig
    rows: list[FeatureRow] = Field(default_factory=list)


class VoiceParams(BaseModel):
    """Source-filter parameters for one synthetic sustained vowel."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    f0: float = Field(default=150.0, ge=60.0, le=400.0)
    jitter: float = Field(default=0.0, ge=0.0, le=0.2)
    shimmer: float = Field(default=0.0, ge=0.0, le=0.2)
    hnr_db: float = math.inf
    formants: tuple[tuple[float, float], ...] = ((700.0, 130.0), (1220.0, 160.0), (2600.0, 250.0))
    duration_s: float = Field(default=3.0, gt=0.0)
    sample_rate: int = Field(default=44100, gt=0)

    @model_validator(mode="after")
    def _formants_below_nyquist(self) -> "VoiceParams":
        for freq, bandwidth in self.formants:
            if not 0.0 < freq < self.sample_rate / 2.0:
                raise ValueError(f"formant {freq} Hz is outside (0, Nyquist)")
            if bandwidth <= 0.0:
                raise ValueError(f"formant bandwidth must be positive, got {bandwidth}")
        if math.isnan(self.hnr_db):
            raise ValueError("hnr_db must be a number")
        return self


Range = tuple[float, float]


class ClassRegime(BaseModel):
    """Per-class sampling ranges for synthetic voice parameters."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    count: int = Field(ge=0)
    f0: Range
    jitter: Range
    shimmer: Range
    hnr_db: Range
    bandwidth_scale: float = Field(default=1.0, gt=0.0)

    @model_validator(mode="after")
    def _ordered(self) -> "ClassRegime":
        for name in ("f0", "jitter", "shimmer", "hnr_db"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name} range is reversed: ({lo}, {hi})")
        if self.f0[0] < 60.0 or self.f0[1] > 400.0:
            raise ValueError(f"f0 range {self.f0} leaves [60, 400] Hz")
        for name in ("jitter", "shimmer"):
            lo, hi = getattr(self, name)
            if lo < 0.0 or hi > 0.2:
                raise ValueError(f"{name} range ({lo}, {hi}) leaves [0, 0.2]")
        return self


class CorpusSpec(BaseModel):
    """Everything needed to regenerate a synthetic corpus byte for byte."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    seed: Optional[int] = Field(default=None, ge=0)
    duration_s: float = Field(default=3.0, gt=0.0)
    sample_rate: int = Field(default=44100, gt=0)
    formants: tuple[tuple[float, float], ...] = ((700.0, 130.0), (1220.0, 160.0), (2600.0, 250.0))
    classes: dict[ClassLabel, ClassRegime]

    @field_validator("classes", mode="before")
    @classmethod
    def _slug_keys(cls, value: Any) -> Any:
        if not isinstance(value, dict):
            return value
        keyed = {}
        for key, regime in value.items():
            keyed[ClassLabel.from_slug(key) if isinstance(key, str) else key] = regime
        return keyed


class StandardizerState(BaseModel):
    """Per-column z-score parameters fitted on training data."""
    mean: list[float]
    scale: list[float]


class TreeData(BaseModel):
    """Flattened tree arrays; feature -1 marks a leaf."""
    feature: list[int]
    threshold: list[float]
    left: list[int]
    right: list[int]
    value: list[list[float]]


class GbtData(BaseModel):
    n_classes: int
    base_score: list[float]
    rounds: list[list[TreeData]]


class SvmMachineData(BaseModel):
    """One binary machine of the one-vs-one ensemble."""
    pair: tuple[int, int]
    gamma: float
    C: float
    bias: float
    support_vectors: list[list[float]]
    dual_coef: list[float]


class OvoData(BaseModel):
    n_classes: int
    machines: list[SvmMachineData]
    skipped_pairs: list[tuple[int, int]] = Field(default_factory=list)


class ModelFile(BaseModel):
    """Self-describing trained pipeline."""
    format_version: int
    voxpath_version: str
    hyperparams: PipelineHyperparams
    options: PipelineOptions
    d: int
    mfcc: MfccConfig
    features: FeatureConfig
    mask: list[bool]
    importances: list[float]
    standardizer: Optional[StandardizerState] = None
    classifier: Union[OvoData, GbtData]
    seed: int
    fingerprint: str
    provenance: dict[str, Any] = Field(default_factory=dict)


class HyperparamsFile(BaseModel):
    """Output of the tune command, input of train and evaluate."""
    format_version: int
    hyperparams: PipelineHyperparams
    tune_seed: Optional[int] = None
    eval_seed: Optional[int] = None
    fallback: bool = False
    report: Optional[MetricReport] = None


class AuditEvent(BaseModel):
    """One command-level audit record."""
    timestamp: str
    command: str
    action: str
    status: str
    seed: Optional[int] = None
    details: dict[str, Any] = Field(default_factory=dict)
