"""Feature selection plus classifier, stratified cross-validation and tuning."""

import hashlib
import json
import logging
from dataclasses import dataclass
from functools import partial
from typing import Optional, Sequence, Union

import numpy as np
from pydantic import ValidationError

from voxpath.errors import ConvergenceError, InvalidArgumentError
from voxpath.models import (
    NUM_CLASSES,
    ClassLabel,
    FoldMetrics,
    GbtHyperparams,
    GbtParams,
    MetricReport,
    MetricWeights,
    ParamSpec,
    PipelineKind,
    PipelineOptions,
    ProposedHyperparams,
    SearchSpace,
    ShacConfig,
    ShacRecord,
    SvmParams,
    TreeParams,
)
from voxpath.services.features import FeatureTable
from voxpath.services.shac import Sample, ShacResult, run_shac
from voxpath.services.svm import OvoSvm, fit_ovo, resolve_gamma
from voxpath.services.tabular import GbtModel, fit_forest, fit_gbt, select_mask
from voxpath.services.workers import parallel_map

logger = logging.getLogger(__name__)

# Smallest penalty handed to the SVM; the search domain starts at 0
MIN_SVM_C = 1e-3

Hyperparams = Union[ProposedHyperparams, GbtHyperparams]


def proposed_space() -> SearchSpace:
    """Forest size and depth, selection threshold, SVM penalty and kernel width."""
    return SearchSpace(
        params=(
            ParamSpec(name="rf_trees", choices=(10, 20, 50, 100)),
            ParamSpec(name="rf_depth", choices=(3, 4, 5, 6, 7, 8, None)),
            ParamSpec(name="sel_threshold", low=0.0, high=0.5),
            ParamSpec(name="svm_C", low=0.0, high=25.0),
            ParamSpec(name="gamma_raw", low=-1.0, high=1.0),
        )
    )


def gbt_space(shared_selection: bool = False) -> SearchSpace:
    """Boosting rounds, depth and learning rate; optionally the selection stage too."""
    params = [
        ParamSpec(name="n_estimators", choices=(10, 25, 50, 100, 200)),
        ParamSpec(name="max_depth", choices=(3, 4, 5, 6, 7, 8)),
        ParamSpec(name="learning_rate", low=0.01, high=0.2),
    ]
    if shared_selection:
        params.extend(proposed_space().params[:3])
    return SearchSpace(params=tuple(params))


def space_for(kind: PipelineKind, options: PipelineOptions) -> SearchSpace:
    if kind == PipelineKind.SVM_PIPELINE:
        return proposed_space()
    return gbt_space(options.baseline_shared_selection)


def build_hyperparams(kind: PipelineKind, sample: Sample, options: PipelineOptions) -> Hyperparams:
    """Turn a search sample into validated hyperparameters."""
    try:
        if kind == PipelineKind.SVM_PIPELINE:
            return ProposedHyperparams(**sample)
        return GbtHyperparams(**{**options.baseline_selection.model_dump(), **sample})
    except ValidationError as e:
        raise InvalidArgumentError(f"sample {sample} is not a valid {kind.value} configuration: {e}")


# Folds


@dataclass(frozen=True, eq=False)
class FoldSplit:
    """k disjoint held-out index sets covering every row once."""

    folds: list[np.ndarray]
    seed: int

    @property
    def k(self) -> int:
        return len(self.folds)

    def train_test(self, fold: int) -> tuple[np.ndarray, np.ndarray]:
        test = self.folds[fold]
        train = np.sort(np.concatenate([f for i, f in enumerate(self.folds) if i != fold]))
        return train, test


def make_folds(labels: Sequence[int], k: int, seed: int) -> FoldSplit:
    """Stratified split: each class shuffled, then dealt round-robin.

    The dealing pointer carries over from one class to the next, so fold
    sizes differ by at most one overall as well as per class.
    """
    y = np.asarray(labels).astype(np.int64)
    if k < 2:
        raise InvalidArgumentError(f"k must be >= 2, got {k}")
    if k > y.size:
        raise InvalidArgumentError(f"k={k} exceeds the number of rows ({y.size})")
    rng = np.random.default_rng(seed)
    assignment = np.empty(y.size, dtype=np.int64)
    pointer = 0
    for label in np.unique(y):
        members = rng.permutation(np.flatnonzero(y == label))
        if members.size < k:
            logger.warning(f"Class {label} has {members.size} rows, fewer than k={k}")
        assignment[members] = (pointer + np.arange(members.size)) % k
        pointer += members.size
    return FoldSplit(folds=[np.flatnonzero(assignment == f) for f in range(k)], seed=seed)


# Training


@dataclass(eq=False)
class TrainedPipeline:
    """Forest-selected columns fed to an OvO SVM or a boosted ensemble."""

    hyperparams: Hyperparams
    options: PipelineOptions
    mask: np.ndarray
    importances: np.ndarray
    classifier: Union[OvoSvm, GbtModel]
    d: int
    seed: int
    fingerprint: str
    mean: Optional[np.ndarray] = None
    scale: Optional[np.ndarray] = None

    @property
    def kind(self) -> PipelineKind:
        return PipelineKind(self.hyperparams.kind)

    @property
    def n_selected(self) -> int:
        return int(self.mask.sum())

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.mask.size:
            raise InvalidArgumentError(f"expected {self.mask.size} features, got {X.shape[1]}")
        if self.mean is not None:
            X = (X - self.mean) / self.scale
        return X[:, self.mask]

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.classifier.predict(self.transform(X))


def config_fingerprint(hp: Hyperparams, options: PipelineOptions, seed: int, d: int) -> str:
    payload = json.dumps(
        {"hyperparams": hp.model_dump(), "options": options.model_dump(), "seed": seed, "d": d},
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


def train_pipeline(
    X: np.ndarray,
    y: np.ndarray,
    hp: Hyperparams,
    seed: int,
    options: Optional[PipelineOptions] = None,
) -> TrainedPipeline:
    """fit_forest -> select_mask -> fit_ovo (or fit_gbt) on the selected columns."""
    options = options or PipelineOptions()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).astype(np.int64)
    if X.ndim != 2 or X.shape[1] % 3:
        raise InvalidArgumentError(f"expected (n, 3d) features, got shape {X.shape}")
    missing = sorted(set(range(NUM_CLASSES)) - set(np.unique(y).tolist()))
    if missing:
        logger.warning(f"Training rows lack classes {[ClassLabel(c).slug for c in missing]}")

    mean = scale = None
    if options.standardize:
        mean = X.mean(axis=0)
        scale = X.std(axis=0)
        scale[scale == 0] = 1.0
        X = (X - mean) / scale

    forest = fit_forest(
        X, y, hp.rf_trees, TreeParams(max_depth=hp.rf_depth), seed=seed, n_classes=NUM_CLASSES
    )
    mask = select_mask(forest.importances, hp.sel_threshold)
    selected = X[:, mask]

    classifier: Union[OvoSvm, GbtModel]
    if isinstance(hp, ProposedHyperparams):
        gamma = resolve_gamma(hp.gamma_raw, selected.shape[1])
        params = SvmParams(
            C=max(hp.svm_C, MIN_SVM_C),
            gamma=gamma,
            gamma_raw=hp.gamma_raw,
            tol=options.svm_tol,
            max_iter=options.svm_max_iter,
        )
        classifier = fit_ovo(selected, y, params, n_classes=NUM_CLASSES)
    else:
        params = GbtParams(
            n_estimators=hp.n_estimators, max_depth=hp.max_depth, learning_rate=hp.learning_rate
        )
        classifier = fit_gbt(selected, y, params, n_classes=NUM_CLASSES)

    logger.debug(f"Trained {hp.kind} pipeline on {X.shape[0]} rows, {int(mask.sum())}/{mask.size} features")
    return TrainedPipeline(
        hyperparams=hp,
        options=options,
        mask=mask,
        importances=forest.importances,
        classifier=classifier,
        d=X.shape[1] // 3,
        seed=seed,
        fingerprint=config_fingerprint(hp, options, seed, X.shape[1] // 3),
        mean=mean,
        scale=scale,
    )


# Metrics


def weighted_score(
    sensitivity: float, specificity: float, uar: float, weights: Optional[MetricWeights] = None
) -> float:
    w = weights or MetricWeights()
    return w.sensitivity * sensitivity + w.specificity * specificity + w.recall * uar


def _rate(hits: int, total: int) -> float:
    # undefined rates (no rows on that side) count as perfect
    return hits / total if total else 1.0


def evaluate(
    pred: Sequence[int], truth: Sequence[int], weights: Optional[MetricWeights] = None
) -> MetricReport:
    """Binary normal-vs-pathological rates plus 4-class unweighted average recall."""
    pred = np.asarray(pred).astype(np.int64)
    truth = np.asarray(truth).astype(np.int64)
    if pred.shape != truth.shape or pred.ndim != 1:
        raise InvalidArgumentError(f"prediction shape {pred.shape} != truth shape {truth.shape}")
    if pred.size == 0:
        raise InvalidArgumentError("cannot evaluate an empty prediction set")

    sick_true = truth != ClassLabel.NORMAL
    sick_pred = pred != ClassLabel.NORMAL
    sensitivity = _rate(int(np.sum(sick_true & sick_pred)), int(np.sum(sick_true)))
    specificity = _rate(int(np.sum(~sick_true & ~sick_pred)), int(np.sum(~sick_true)))
    recalls = [float(np.mean(pred[truth == c] == c)) for c in range(NUM_CLASSES) if np.any(truth == c)]
    uar = float(np.mean(recalls))
    return MetricReport(
        sensitivity=sensitivity,
        specificity=specificity,
        uar=uar,
        weighted=weighted_score(sensitivity, specificity, uar, weights),
    )


def _run_fold(
    fold: int,
    split: FoldSplit,
    table: FeatureTable,
    hp: Hyperparams,
    seed: int,
    options: PipelineOptions,
) -> tuple[np.ndarray, np.ndarray, FoldMetrics]:
    train, test = split.train_test(fold)
    model = train_pipeline(table.X[train], table.y[train], hp, seed, options)
    pred = model.predict(table.X[test])
    report = evaluate(pred, table.y[test], options.weights)
    metrics = FoldMetrics(
        fold=fold,
        n=int(test.size),
        sensitivity=report.sensitivity,
        specificity=report.specificity,
        uar=report.uar,
        weighted=report.weighted,
    )
    return test, pred, metrics


def cross_val_predict(
    table: FeatureTable,
    hp: Hyperparams,
    k: int,
    seed: int,
    options: Optional[PipelineOptions] = None,
    jobs: int = 1,
) -> tuple[np.ndarray, list[FoldMetrics]]:
    """Held-out prediction for every row plus per-fold metrics."""
    options = options or PipelineOptions()
    split = make_folds(table.y, k, seed)
    worker = partial(_run_fold, split=split, table=table, hp=hp, seed=seed, options=options)
    results = parallel_map(worker, range(split.k), jobs)
    predictions = np.full(len(table), -1, dtype=np.int64)
    for test, pred, _ in results:
        predictions[test] = pred
    return predictions, [metrics for _, _, metrics in results]


def cross_validate(
    table: FeatureTable,
    hp: Hyperparams,
    k: int,
    seed: int,
    options: Optional[PipelineOptions] = None,
    jobs: int = 1,
) -> MetricReport:
    """Per-fold metrics averaged in fold order; std_dev is the population std of weighted."""
    options = options or PipelineOptions()
    _, folds = cross_val_predict(table, hp, k, seed, options, jobs)
    weighted = np.array([f.weighted for f in folds])
    return MetricReport(
        sensitivity=float(np.mean([f.sensitivity for f in folds])),
        specificity=float(np.mean([f.specificity for f in folds])),
        uar=float(np.mean([f.uar for f in folds])),
        weighted=float(weighted.mean()),
        std_dev=float(weighted.std()),
        folds=folds,
        k=k,
        seed=seed,
    )


# Tuning


class CrossValidationObjective:
    """Weighted cross-validation score of a search sample.

    A configuration whose SVM fails to converge scores 0.0.
    """

    def __init__(
        self,
        table: FeatureTable,
        kind: PipelineKind,
        k: int,
        seed: int,
        options: PipelineOptions,
    ):
        self.table = table
        self.kind = kind
        self.k = k
        self.seed = seed
        self.options = options

    def report(self, sample: Sample) -> MetricReport:
        hp = build_hyperparams(self.kind, sample, self.options)
        return cross_validate(self.table, hp, self.k, self.seed, self.options)

    def __call__(self, sample: Sample) -> float:
        try:
            return self.report(sample).weighted
        except ConvergenceError as e:
            logger.warning(f"Scoring {sample} as 0.0: {e}")
            return 0.0


@dataclass(eq=False)
class TuneResult:
    best: Hyperparams
    report: MetricReport
    search: ShacResult
    reevaluated: list[tuple[ShacRecord, Optional[MetricReport]]]
    fallback: bool


def tune(
    table: FeatureTable,
    kind: PipelineKind,
    space: SearchSpace,
    shac_cfg: ShacConfig,
    tune_seed: int,
    eval_seed: int,
    options: Optional[PipelineOptions] = None,
    jobs: int = 1,
) -> TuneResult:
    """Search on tune_seed folds, then re-rank the candidates on eval_seed folds."""
    if tune_seed == eval_seed:
        raise InvalidArgumentError("tune_seed and eval_seed must differ")
    options = options or PipelineOptions()
    objective = CrossValidationObjective(table, kind, options.k, tune_seed, options)
    search = run_shac(space, objective, shac_cfg, seed=tune_seed, jobs=jobs)

    candidates = search.candidates
    fallback = not candidates
    if fallback:
        logger.warning("No candidate cleared mean + std; falling back to the best evaluated sample")
        candidates = [search.best()]

    evaluator = CrossValidationObjective(table, kind, options.k, eval_seed, options)
    reports = parallel_map(partial(_safe_report, evaluator), [c.values for c in candidates], jobs)

    best_index = None
    for i, report in enumerate(reports):
        if report is None:
            continue
        if best_index is None or report.weighted > reports[best_index].weighted:
            best_index = i
    if best_index is None:
        raise ConvergenceError("no tuning candidate could be re-evaluated")

    best = build_hyperparams(kind, candidates[best_index].values, options)
    logger.info(
        f"Tuning picked {best.model_dump()} with eval weighted "
        f"{reports[best_index].weighted:.4f} from {len(candidates)} candidates"
    )
    return TuneResult(
        best=best,
        report=reports[best_index],
        search=search,
        reevaluated=list(zip(candidates, reports)),
        fallback=fallback,
    )


def _safe_report(evaluator: CrossValidationObjective, sample: Sample) -> Optional[MetricReport]:
    try:
        return evaluator.report(sample)
    except ConvergenceError as e:
        logger.warning(f"Candidate {sample} failed re-evaluation: {e}")
        return None
