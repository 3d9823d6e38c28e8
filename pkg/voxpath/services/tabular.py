"""CART trees, random forests with Gini importance, and softmax gradient boosting."""

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass
from functools import partial
from typing import Optional

import numpy as np
from scipy.special import logsumexp, softmax

from voxpath.errors import InvalidArgumentError
from voxpath.models import GbtParams, TreeParams
from voxpath.services.workers import parallel_map

logger = logging.getLogger(__name__)

# Fixed L2 penalty on boosted leaf weights
GBT_REG_LAMBDA = 1.0
# Halvings of a boosting step before the round is dropped
GBT_MAX_BACKTRACK = 30
# Floors the class priors used as initial boosting scores
GBT_PRIOR_FLOOR = 1e-12
# Gains this close to the best count as tied
GAIN_TIE_RTOL = 1e-12

Criterion = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]


@dataclass(eq=False)
class DecisionTree:
    """Array-backed binary tree; x[feature] <= threshold goes left."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    importances: np.ndarray
    depth: int = 0

    @property
    def n_nodes(self) -> int:
        return int(self.feature.size)

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by every row."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        nodes = np.zeros(X.shape[0], dtype=np.int64)
        active = np.flatnonzero(self.feature[nodes] >= 0)
        while active.size:
            current = nodes[active]
            go_left = X[active, self.feature[current]] <= self.threshold[current]
            nodes[active] = np.where(go_left, self.left[current], self.right[current])
            active = active[self.feature[nodes[active]] >= 0]
        return nodes

    def predict_value(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]


class _TreeGrower:
    """Depth-first greedy growth over sufficient statistics.

    stats holds one row per sample (class one-hot for Gini trees, gradient and
    hessian for boosted trees); criterion scores every candidate split from the
    left-side cumulative sums.
    """

    def __init__(
        self,
        X: np.ndarray,
        stats: np.ndarray,
        criterion: Criterion,
        leaf_value: Callable[[np.ndarray], np.ndarray],
        max_depth: Optional[int],
        min_samples_split: int,
        n_candidates: int,
        rng: Optional[np.random.Generator],
        min_gain: Optional[float],
        is_pure: Callable[[np.ndarray], bool] = lambda stats: False,
    ):
        self.X = X
        self.stats = stats
        self.criterion = criterion
        self.leaf_value = leaf_value
        self.max_depth = max_depth
        self.min_samples_split = min_samples_split
        self.n_candidates = n_candidates
        self.rng = rng
        self.min_gain = min_gain
        self.is_pure = is_pure

    def grow(self) -> DecisionTree:
        n, m = self.X.shape
        feature: list[int] = []
        threshold: list[float] = []
        left: list[int] = []
        right: list[int] = []
        value: list[np.ndarray] = []
        importances = np.zeros(m)
        depth_reached = 0

        def new_node() -> int:
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            value.append(np.empty(0))
            return len(feature) - 1

        stack = [(new_node(), np.arange(n), 0)]
        while stack:
            node, idx, depth = stack.pop()
            node_stats = self.stats[idx]
            value[node] = self.leaf_value(node_stats)
            depth_reached = max(depth_reached, depth)
            if self.max_depth is not None and depth >= self.max_depth:
                continue
            if idx.size < self.min_samples_split or self.is_pure(node_stats):
                continue
            split = self._find_split(idx)
            if split is None:
                continue
            gain, feat, thr = split
            go_left = self.X[idx, feat] <= thr
            left_node, right_node = new_node(), new_node()
            feature[node], threshold[node] = feat, thr
            left[node], right[node] = left_node, right_node
            importances[feat] += gain
            stack.append((right_node, idx[~go_left], depth + 1))
            stack.append((left_node, idx[go_left], depth + 1))

        return DecisionTree(
            feature=np.array(feature, dtype=np.int64),
            threshold=np.array(threshold, dtype=np.float64),
            left=np.array(left, dtype=np.int64),
            right=np.array(right, dtype=np.int64),
            value=np.vstack(value),
            importances=importances,
            depth=depth_reached,
        )

    def _find_split(self, idx: np.ndarray) -> Optional[tuple[float, int, float]]:
        m = self.X.shape[1]
        if self.n_candidates >= m or self.rng is None:
            return self._scan(idx, np.arange(m))
        # draw k features; keep drawing the rest when none of them splits
        perm = self.rng.permutation(m)
        found = self._scan(idx, np.sort(perm[: self.n_candidates]))
        if found is None:
            found = self._scan(idx, np.sort(perm[self.n_candidates :]))
        return found

    def _scan(self, idx: np.ndarray, features: np.ndarray) -> Optional[tuple[float, int, float]]:
        n = idx.size
        Xn = self.X[np.ix_(idx, features)]
        order = np.argsort(Xn, axis=0, kind="stable")
        xs = np.take_along_axis(Xn, order, axis=0)
        node_stats = self.stats[idx]
        left_sums = np.cumsum(node_stats[order], axis=0)[:-1]
        total = node_stats.sum(axis=0)
        n_left = np.arange(1, n, dtype=np.float64)[:, None]
        gain = self.criterion(left_sums, total, n_left)
        gain = np.where(xs[:-1] < xs[1:], gain, -np.inf)

        best = float(gain.max())
        if not math.isfinite(best):
            return None
        if self.min_gain is not None and best <= self.min_gain:
            return None
        # ties: lowest feature index, then lowest threshold
        tol = GAIN_TIE_RTOL * max(1.0, abs(best))
        pos = int(np.argmax((gain.T >= best - tol).ravel()))
        col, row = divmod(pos, n - 1)
        lo, hi = xs[row, col], xs[row + 1, col]
        thr = (lo + hi) / 2.0
        if thr >= hi:
            thr = lo
        return float(gain[row, col]), int(features[col]), float(thr)


def _gini_gain(left: np.ndarray, total: np.ndarray, n_left: np.ndarray) -> np.ndarray:
    # n*G(parent) - n_l*G(left) - n_r*G(right), in sample-count units
    n = total.sum()
    right = total[None, None, :] - left
    n_right = n - n_left
    return (left**2).sum(-1) / n_left + (right**2).sum(-1) / n_right - (total**2).sum() / n


def _class_distribution(stats: np.ndarray) -> np.ndarray:
    return stats.sum(axis=0) / stats.shape[0]


def _is_pure(stats: np.ndarray) -> bool:
    return bool(stats.sum(axis=0).max() == stats.shape[0])


def _newton_gain(left: np.ndarray, total: np.ndarray, n_left: np.ndarray) -> np.ndarray:
    g_left, h_left = left[..., 0], left[..., 1]
    g, h = total
    g_right, h_right = g - g_left, h - h_left
    lam = GBT_REG_LAMBDA
    return 0.5 * (g_left**2 / (h_left + lam) + g_right**2 / (h_right + lam) - g**2 / (h + lam))


def _newton_weight(stats: np.ndarray) -> np.ndarray:
    g, h = stats.sum(axis=0)
    return np.array([-g / (h + GBT_REG_LAMBDA)])


def _check_xy(X: np.ndarray, y: np.ndarray, n_classes: Optional[int]) -> tuple[np.ndarray, np.ndarray, int]:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.ndim != 2 or X.shape[0] == 0 or X.shape[1] == 0:
        raise InvalidArgumentError(f"X must be a non-empty 2-D array, got shape {X.shape}")
    if y.shape != (X.shape[0],):
        raise InvalidArgumentError(f"y must hold {X.shape[0]} labels, got shape {y.shape}")
    if not np.all(np.isfinite(X)):
        raise InvalidArgumentError("X must be finite")
    y = y.astype(np.int64)
    if y.min() < 0:
        raise InvalidArgumentError("labels must be non-negative integers")
    k = int(n_classes) if n_classes is not None else int(y.max()) + 1
    if y.max() >= k:
        raise InvalidArgumentError(f"label {int(y.max())} is out of range for {k} classes")
    return X, y, k


def fit_tree(
    X: np.ndarray,
    y: np.ndarray,
    params: Optional[TreeParams] = None,
    rng: Optional[np.random.Generator] = None,
    n_classes: Optional[int] = None,
) -> DecisionTree:
    """Grow a Gini classification tree; leaves hold class distributions."""
    X, y, k = _check_xy(X, y, n_classes)
    params = params or TreeParams()
    n_candidates = min(params.n_features_per_split or X.shape[1], X.shape[1])
    grower = _TreeGrower(
        X,
        np.eye(k)[y],
        criterion=_gini_gain,
        leaf_value=_class_distribution,
        max_depth=params.max_depth,
        min_samples_split=params.min_samples_split,
        n_candidates=n_candidates,
        rng=rng,
        min_gain=None,
        is_pure=_is_pure,
    )
    return grower.grow()


def fit_newton_tree(X: np.ndarray, grad: np.ndarray, hess: np.ndarray, max_depth: int) -> DecisionTree:
    """Second-order regression tree; leaves hold -G/(H+lambda)."""
    stats = np.column_stack([grad, hess]).astype(np.float64)
    grower = _TreeGrower(
        np.asarray(X, dtype=np.float64),
        stats,
        criterion=_newton_gain,
        leaf_value=_newton_weight,
        max_depth=max_depth,
        min_samples_split=2,
        n_candidates=X.shape[1],
        rng=None,
        min_gain=0.0,
    )
    return grower.grow()


# Random forest


@dataclass(eq=False)
class RandomForest:
    trees: list[DecisionTree]
    n_classes: int
    importances: np.ndarray
    seed: int

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return np.mean([tree.predict_value(X) for tree in self.trees], axis=0)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=1)


def _fit_bootstrap_tree(
    tree_index: int, X: np.ndarray, y: np.ndarray, params: TreeParams, seed: int, n_classes: int
) -> DecisionTree:
    rng = np.random.default_rng([seed, tree_index])
    sample = rng.integers(0, X.shape[0], size=X.shape[0])
    return fit_tree(X[sample], y[sample], params, rng=rng, n_classes=n_classes)


def mdi_importances(trees: list[DecisionTree], n_features: int) -> np.ndarray:
    """Per-tree normalized impurity decrease, averaged and renormalized.

    Falls back to uniform weights when no tree made a split.
    """
    per_tree = []
    for tree in trees:
        total = tree.importances.sum()
        per_tree.append(tree.importances / total if total > 0 else np.zeros(n_features))
    mean = np.mean(per_tree, axis=0) if per_tree else np.zeros(n_features)
    total = mean.sum()
    if total <= 0:
        return np.full(n_features, 1.0 / n_features)
    return mean / total


def fit_forest(
    X: np.ndarray,
    y: np.ndarray,
    n_trees: int,
    params: Optional[TreeParams] = None,
    seed: int = 0,
    n_classes: Optional[int] = None,
    jobs: int = 1,
) -> RandomForest:
    """Bootstrap-aggregated Gini trees with floor(sqrt(m)) features per split."""
    if n_trees < 1:
        raise InvalidArgumentError(f"n_trees must be >= 1, got {n_trees}")
    if seed < 0:
        raise InvalidArgumentError(f"seed must be non-negative, got {seed}")
    X, y, k = _check_xy(X, y, n_classes)
    params = params or TreeParams()
    m = X.shape[1]
    if params.n_features_per_split is None:
        params = params.model_copy(update={"n_features_per_split": max(1, math.isqrt(m))})

    worker = partial(_fit_bootstrap_tree, X=X, y=y, params=params, seed=seed, n_classes=k)
    trees = parallel_map(worker, range(n_trees), jobs)
    importances = mdi_importances(trees, m)
    logger.debug(f"Fitted forest of {n_trees} trees on {X.shape[0]}x{m} (seed={seed})")
    return RandomForest(trees=trees, n_classes=k, importances=importances, seed=seed)


def select_mask(importances: np.ndarray, threshold: float) -> np.ndarray:
    """Features with importance strictly above threshold, never empty."""
    importances = np.asarray(importances, dtype=np.float64)
    if importances.ndim != 1 or importances.size == 0:
        raise InvalidArgumentError("importances must be a non-empty 1-D array")
    mask = importances > threshold
    if not mask.any():
        best = int(np.argmax(importances))
        logger.warning(
            f"No feature importance exceeds {threshold:.4f}; keeping feature {best} alone"
        )
        mask[best] = True
    return mask


# Gradient boosting


@dataclass(eq=False)
class GbtModel:
    """Softmax boosting; leaf values already include the step size."""

    n_classes: int
    base_score: np.ndarray
    rounds: list[list[DecisionTree]]
    train_loss: list[float]

    @property
    def n_rounds(self) -> int:
        return len(self.rounds)

    def staged_decision_function(self, X: np.ndarray):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        scores = np.tile(self.base_score, (X.shape[0], 1))
        yield scores
        for trees in self.rounds:
            scores = scores + np.column_stack([tree.predict_value(X)[:, 0] for tree in trees])
            yield scores

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        scores = None
        for scores in self.staged_decision_function(X):
            pass
        return scores

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return softmax(self.decision_function(X), axis=1)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.argmax(self.decision_function(X), axis=1)


def softmax_log_loss(scores: np.ndarray, y: np.ndarray) -> float:
    """Mean negative log-likelihood of integer labels under softmax(scores)."""
    return float(np.mean(logsumexp(scores, axis=1) - scores[np.arange(y.size), y]))


def fit_gbt(
    X: np.ndarray, y: np.ndarray, params: Optional[GbtParams] = None, n_classes: Optional[int] = None
) -> GbtModel:
    """Newton-boosted trees, one per class and round, under softmax log-loss.

    A round whose step would raise the training loss is halved until it
    does not; the recorded loss is therefore non-increasing.
    """
    X, y, k = _check_xy(X, y, n_classes)
    params = params or GbtParams()
    n = X.shape[0]
    onehot = np.eye(k)[y]

    priors = np.maximum(onehot.mean(axis=0), GBT_PRIOR_FLOOR)
    base_score = np.log(priors)
    scores = np.tile(base_score, (n, 1))
    losses = [softmax_log_loss(scores, y)]
    rounds: list[list[DecisionTree]] = []

    for round_index in range(params.n_estimators):
        proba = softmax(scores, axis=1)
        grad = proba - onehot
        hess = np.maximum(proba * (1.0 - proba), 1e-16)
        trees = [fit_newton_tree(X, grad[:, c], hess[:, c], params.max_depth) for c in range(k)]
        raw = np.column_stack([tree.predict_value(X)[:, 0] for tree in trees])

        step = params.learning_rate
        for _ in range(GBT_MAX_BACKTRACK + 1):
            scaled = [_scaled_tree(tree, step) for tree in trees]
            candidate = scores + np.column_stack([tree.predict_value(X)[:, 0] for tree in scaled])
            loss = softmax_log_loss(candidate, y)
            if loss <= losses[-1]:
                break
            step /= 2.0
        else:
            logger.debug(f"Boosting round {round_index} could not lower the loss; stopping")
            break

        rounds.append(scaled)
        scores = candidate
        losses.append(loss)
        if not np.any(raw):
            break

    return GbtModel(n_classes=k, base_score=base_score, rounds=rounds, train_loss=losses)


def _scaled_tree(tree: DecisionTree, factor: float) -> DecisionTree:
    return DecisionTree(
        feature=tree.feature,
        threshold=tree.threshold,
        left=tree.left,
        right=tree.right,
        value=tree.value * factor,
        importances=tree.importances,
        depth=tree.depth,
    )
