"""Soft-margin RBF SVM trained by SMO, combined one-vs-one for multi-class."""

import logging
from dataclasses import dataclass, field
from functools import partial
from typing import Optional

import numpy as np
from scipy.spatial.distance import cdist

from voxpath.errors import ConvergenceError, InvalidArgumentError
from voxpath.models import SvmParams
from voxpath.services.workers import parallel_map

logger = logging.getLogger(__name__)

MIN_ITERATIONS = 100_000
ITERATIONS_PER_SAMPLE = 100
# Curvature floor for pairs of coincident points
MIN_CURVATURE = 1e-12


def resolve_gamma(gamma_raw: float, n_features: int) -> float:
    """Non-positive raw values mean 1 / n_features."""
    if n_features <= 0:
        raise InvalidArgumentError(f"n_features must be positive, got {n_features}")
    return 1.0 / n_features if gamma_raw <= 0 else float(gamma_raw)


def rbf(x: np.ndarray, z: np.ndarray, gamma: float) -> float:
    diff = np.asarray(x, dtype=np.float64) - np.asarray(z, dtype=np.float64)
    return float(np.exp(-gamma * np.dot(diff, diff)))


def rbf_matrix(A: np.ndarray, B: np.ndarray, gamma: float) -> np.ndarray:
    """exp(-gamma * ||a - b||^2) for every row pair."""
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    B = np.atleast_2d(np.asarray(B, dtype=np.float64))
    return np.exp(-gamma * cdist(A, B, "sqeuclidean"))


@dataclass(eq=False)
class BinarySvm:
    """Kernel expansion f(x) = sum_i dual_coef[i] k(sv_i, x) + bias."""

    support_vectors: np.ndarray
    dual_coef: np.ndarray
    bias: float
    gamma: float
    C: float
    support_indices: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    n_iter: int = 0

    @property
    def alpha(self) -> np.ndarray:
        return np.abs(self.dual_coef)

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if self.support_vectors.shape[0] == 0:
            return np.full(X.shape[0], self.bias)
        return rbf_matrix(X, self.support_vectors, self.gamma) @ self.dual_coef + self.bias

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.where(self.decision_function(X) > 0, 1, -1)


def duality_gap(K: np.ndarray, y: np.ndarray, alpha: np.ndarray, bias: float, C: float) -> float:
    """Primal objective minus dual objective at (alpha, bias)."""
    coef = alpha * y
    quad = float(coef @ K @ coef)
    margins = y * (K @ coef + bias)
    slack = np.maximum(0.0, 1.0 - margins).sum()
    primal = 0.5 * quad + C * slack
    dual = alpha.sum() - 0.5 * quad
    return float(primal - dual)


def smo_train(X: np.ndarray, y: np.ndarray, params: SvmParams) -> BinarySvm:
    """Solve the soft-margin dual with maximal-violating-pair SMO.

    Works on y*alpha, boxed in [A_i, B_i] = [0, C] for positives and
    [-C, 0] for negatives, and stops once the largest KKT violation
    drops below params.tol.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise InvalidArgumentError(f"need at least two training rows, got shape {X.shape}")
    if y.shape != (X.shape[0],) or not np.all(np.isin(y, (-1.0, 1.0))):
        raise InvalidArgumentError("labels must be -1 or +1, one per row")
    if not (np.any(y > 0) and np.any(y < 0)):
        raise InvalidArgumentError("both +1 and -1 labels are required")

    n = X.shape[0]
    C = params.C
    K = rbf_matrix(X, X, params.gamma)
    lower = np.where(y > 0, 0.0, -C)
    upper = np.where(y > 0, C, 0.0)
    ya = np.zeros(n)
    # g = 1 - y * sum_j alpha_j y_j K_ij, tracked as y*g
    yg = y.copy()
    max_iter = params.max_iter or max(MIN_ITERATIONS, ITERATIONS_PER_SAMPLE * n)

    iteration = 0
    while True:
        up = np.flatnonzero(ya < upper)
        down = np.flatnonzero(ya > lower)
        if up.size == 0 or down.size == 0:
            violation = 0.0
            break
        i = up[np.argmax(yg[up])]
        j = down[np.argmin(yg[down])]
        violation = float(yg[i] - yg[j])
        if violation < params.tol:
            break
        if iteration >= max_iter:
            alpha = np.abs(ya)
            bias = float((yg[i] + yg[j]) / 2.0)
            gap = duality_gap(K, y, alpha, bias, C)
            raise ConvergenceError(
                f"SMO stopped after {iteration} iterations with KKT violation "
                f"{violation:.3e} (tol {params.tol:g}), duality gap {gap:.3e}",
                duality_gap=gap,
                kkt_violation=violation,
            )
        curvature = max(K[i, i] + K[j, j] - 2.0 * K[i, j], MIN_CURVATURE)
        room_i = upper[i] - ya[i]
        room_j = ya[j] - lower[j]
        step = min(room_i, room_j, violation / curvature)
        yg += step * (K[j] - K[i])
        # land exactly on the box so bound membership is exact
        ya[i] = upper[i] if step == room_i else ya[i] + step
        ya[j] = lower[j] if step == room_j else ya[j] - step
        iteration += 1

    alpha = np.abs(ya)
    free = (ya > lower) & (ya < upper)
    if np.any(free):
        bias = float(np.mean(yg[free]))
    else:
        bias = float((yg[up].max() + yg[down].min()) / 2.0) if up.size and down.size else 0.0

    support = np.flatnonzero(alpha > 0)
    logger.debug(
        f"SMO converged in {iteration} iterations: {support.size}/{n} support vectors, "
        f"violation {violation:.2e}"
    )
    return BinarySvm(
        support_vectors=X[support].copy(),
        dual_coef=ya[support].copy(),
        bias=bias,
        gamma=params.gamma,
        C=C,
        support_indices=support,
        n_iter=iteration,
    )


@dataclass(eq=False)
class OvoSvm:
    """One binary machine per class pair (i, j), class j on the positive side."""

    n_classes: int
    machines: dict[tuple[int, int], BinarySvm]
    skipped_pairs: list[tuple[int, int]] = field(default_factory=list)

    def votes(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Vote counts and summed |decision| of won contests, each (n, K)."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        votes = np.zeros((X.shape[0], self.n_classes), dtype=np.int64)
        confidence = np.zeros((X.shape[0], self.n_classes))
        for (i, j), machine in self.machines.items():
            f = machine.decision_function(X)
            j_wins = f > 0
            votes[:, j] += j_wins
            votes[:, i] += ~j_wins
            confidence[:, j] += np.where(j_wins, np.abs(f), 0.0)
            confidence[:, i] += np.where(j_wins, 0.0, np.abs(f))
        return votes, confidence

    def predict(self, X: np.ndarray) -> np.ndarray:
        return ovo_predict(self, X)


def _fit_pair(pair: tuple[int, int], X: np.ndarray, y: np.ndarray, params: SvmParams) -> BinarySvm:
    i, j = pair
    rows = (y == i) | (y == j)
    labels = np.where(y[rows] == j, 1.0, -1.0)
    return smo_train(X[rows], labels, params)


def fit_ovo(
    X: np.ndarray,
    y: np.ndarray,
    params: SvmParams,
    n_classes: Optional[int] = None,
    jobs: int = 1,
) -> OvoSvm:
    """Train K(K-1)/2 machines; pairs missing a class are skipped and recorded."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).astype(np.int64)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise InvalidArgumentError("X must be 2-D with one label per row")
    k = int(n_classes) if n_classes is not None else int(y.max()) + 1
    present = set(np.unique(y).tolist())
    if len(present) < 2:
        raise InvalidArgumentError(f"need at least two classes, got {sorted(present)}")

    pairs = [(i, j) for i in range(k) for j in range(i + 1, k)]
    trainable = [p for p in pairs if p[0] in present and p[1] in present]
    skipped = [p for p in pairs if p not in trainable]
    for pair in skipped:
        logger.warning(f"Skipping SVM pair {pair}: a class has no training rows")

    worker = partial(_fit_pair, X=X, y=y, params=params)
    machines = parallel_map(worker, trainable, jobs)
    return OvoSvm(n_classes=k, machines=dict(zip(trainable, machines)), skipped_pairs=skipped)


def ovo_predict(model: OvoSvm, X: np.ndarray) -> np.ndarray:
    """Majority vote; ties go to the larger summed |decision|, then the lower index."""
    votes, confidence = model.votes(X)
    tied = votes == votes.max(axis=1, keepdims=True)
    return np.argmax(np.where(tied, confidence, -np.inf), axis=1)
