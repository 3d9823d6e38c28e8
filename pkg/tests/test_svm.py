"""Tests for the SMO solver and one-vs-one voting."""

import itertools

import numpy as np
import pytest

from voxpath.errors import ConvergenceError, InvalidArgumentError
from voxpath.models import SvmParams
from voxpath.services.svm import (
    BinarySvm,
    OvoSvm,
    fit_ovo,
    ovo_predict,
    rbf,
    rbf_matrix,
    resolve_gamma,
    smo_train,
)


def random_problem(rng, n):
    X = rng.uniform(-2.0, 2.0, (n, 2))
    y = np.where(rng.random(n) < 0.5, -1.0, 1.0)
    y[0], y[1] = 1.0, -1.0
    return X, y


def full_alpha(model: BinarySvm, n: int) -> np.ndarray:
    alpha = np.zeros(n)
    alpha[model.support_indices] = model.alpha
    return alpha


def dual_objective(alpha, Q):
    return alpha.sum() - 0.5 * alpha @ Q @ alpha


def oracle(K, y, C):
    """Exact dual optimum: enumerate which multipliers sit at 0, at C or in between."""
    n = y.size
    Q = np.outer(y, y) * K
    best, best_alpha = -np.inf, np.zeros(n)
    for states in itertools.product((0, 1, 2), repeat=n):
        states = np.array(states)
        alpha = np.where(states == 1, C, 0.0)
        free = states == 2
        if free.any():
            m = int(free.sum())
            A = np.zeros((m + 1, m + 1))
            A[:m, :m] = Q[np.ix_(free, free)]
            A[:m, m] = y[free]
            A[m, :m] = y[free]
            rhs = np.append(1.0 - Q[np.ix_(free, ~free)] @ alpha[~free], -y[~free] @ alpha[~free])
            try:
                alpha[free] = np.linalg.solve(A, rhs)[:m]
            except np.linalg.LinAlgError:
                continue
        if np.any(alpha < -1e-12) or np.any(alpha > C + 1e-12) or abs(alpha @ y) > 1e-9:
            continue
        value = dual_objective(alpha, Q)
        if value > best:
            best, best_alpha = value, alpha
    return np.clip(best_alpha, 0.0, C), Q


class TestKernel:
    """Tests for kernel helpers."""

    def test_resolve_gamma(self):
        """Non-positive raw values mean 1 / n_features."""
        assert resolve_gamma(-0.5, 12) == pytest.approx(1 / 12)
        assert resolve_gamma(0.0, 45) == pytest.approx(1 / 45)
        assert resolve_gamma(0.3, 10) == 0.3
        with pytest.raises(InvalidArgumentError):
            resolve_gamma(0.5, 0)

    def test_rbf_properties(self, rng):
        """k(x, x) = 1 and the matrix is symmetric."""
        X = rng.standard_normal((6, 3))
        K = rbf_matrix(X, X, 0.7)
        assert np.allclose(np.diag(K), 1.0)
        assert np.allclose(K, K.T)
        assert K[1, 4] == pytest.approx(rbf(X[1], X[4], 0.7))


class TestSmo:
    """Tests for the binary solver."""

    def test_kkt_conditions(self):
        """Solutions satisfy the box, the equality and the KKT tolerance."""
        tol = 1e-3
        for trial in range(100):
            rng = np.random.default_rng(trial)
            n = int(rng.integers(4, 13))
            X, y = random_problem(rng, n)
            C = float(rng.uniform(0.1, 10.0))
            model = smo_train(X, y, SvmParams(C=C, gamma=0.5, tol=tol))
            alpha = full_alpha(model, n)
            assert np.all(alpha >= 0) and np.all(alpha <= C + 1e-12)
            assert abs(np.sum(alpha * y)) < 1e-6
            margins = y * model.decision_function(X)
            at_zero = alpha <= 1e-12 * C
            at_bound = alpha >= C * (1 - 1e-12)
            free = ~at_zero & ~at_bound
            assert np.all(margins[at_zero] >= 1 - tol - 1e-9)
            assert np.all(np.abs(margins[free] - 1) <= tol + 1e-9)
            assert np.all(margins[at_bound] <= 1 + tol + 1e-9)

    def test_matches_dual_oracle(self):
        """Dual objective and confident predictions agree with an exhaustive active-set solve."""
        grid = np.stack(np.meshgrid(np.linspace(-2, 2, 9), np.linspace(-2, 2, 9)), -1).reshape(-1, 2)
        for trial in range(50):
            rng = np.random.default_rng(1000 + trial)
            n = int(rng.integers(2, 7))
            X, y = random_problem(rng, n)
            C = float(rng.uniform(0.5, 5.0))
            model = smo_train(X, y, SvmParams(C=C, gamma=1.0, tol=1e-6))
            K = rbf_matrix(X, X, 1.0)
            ref_alpha, Q = oracle(K, y, C)
            assert dual_objective(full_alpha(model, n), Q) == pytest.approx(
                dual_objective(ref_alpha, Q), abs=1e-3
            )

            free = (ref_alpha > 1e-6) & (ref_alpha < C - 1e-6)
            if not free.any():
                continue
            yg = y - K @ (ref_alpha * y)
            bias = float(np.mean(yg[free]))
            ref_f = rbf_matrix(grid, X, 1.0) @ (ref_alpha * y) + bias
            confident = np.abs(ref_f) > 0.1
            assert np.array_equal(
                np.sign(model.decision_function(grid)[confident]), np.sign(ref_f[confident])
            )

    def test_separable_pair(self):
        """Two points: both support vectors, margins exactly one."""
        X = np.array([[0.0, 0.0], [1.0, 0.0]])
        y = np.array([-1.0, 1.0])
        model = smo_train(X, y, SvmParams(C=10.0, gamma=1.0, tol=1e-6))
        assert model.support_indices.tolist() == [0, 1]
        assert np.allclose(y * model.decision_function(X), 1.0, atol=1e-5)
        assert model.predict(X).tolist() == [-1, 1]

    def test_iteration_guard(self, rng):
        """Hitting max_iter raises with the duality gap attached."""
        X, y = random_problem(rng, 30)
        with pytest.raises(ConvergenceError) as exc:
            smo_train(X, y, SvmParams(C=5.0, gamma=1.0, tol=1e-9, max_iter=1))
        assert exc.value.duality_gap is not None
        assert exc.value.kkt_violation > 1e-9

    def test_single_label_rejected(self, rng):
        """Both classes are needed."""
        with pytest.raises(InvalidArgumentError):
            smo_train(rng.standard_normal((4, 2)), np.ones(4), SvmParams())


def constant_machine(bias: float) -> BinarySvm:
    return BinarySvm(support_vectors=np.empty((0, 2)), dual_coef=np.empty(0), bias=bias, gamma=1.0, C=1.0)


class TestOneVsOne:
    """Tests for multi-class voting."""

    def test_machine_count(self, rng):
        """K classes train K(K-1)/2 machines."""
        y = np.repeat(np.arange(4), 6)
        X = y[:, None] * 3.0 + rng.standard_normal((24, 2)) * 0.2
        model = fit_ovo(X, y, SvmParams(C=1.0, gamma=0.5), n_classes=4)
        assert len(model.machines) == 6
        assert np.array_equal(model.predict(X), y)

    def test_missing_class_pairs_skipped(self, rng):
        """Pairs involving an absent class are recorded and skipped."""
        y = np.repeat([0, 1, 3], 5)
        X = rng.standard_normal((15, 2))
        model = fit_ovo(X, y, SvmParams(C=1.0, gamma=0.5), n_classes=4)
        assert sorted(model.skipped_pairs) == [(0, 2), (1, 2), (2, 3)]
        assert len(model.machines) == 3

    def test_two_classes_follow_binary_sign(self, rng):
        """K=2 predicts class 1 exactly where the machine is positive."""
        X = rng.standard_normal((20, 2))
        y = (X[:, 0] > 0).astype(int)
        model = fit_ovo(X, y, SvmParams(C=1.0, gamma=0.5))
        f = model.machines[(0, 1)].decision_function(X)
        assert np.array_equal(model.predict(X), (f > 0).astype(int))

    def test_tied_votes_use_confidence(self):
        """A three-way tie goes to the largest summed |decision|."""
        model = OvoSvm(
            n_classes=3,
            machines={(0, 1): constant_machine(0.5), (0, 2): constant_machine(-0.3), (1, 2): constant_machine(0.9)},
        )
        assert ovo_predict(model, np.zeros((1, 2))).tolist() == [2]

    def test_full_tie_goes_to_lowest_index(self):
        """Equal votes and confidence pick the lowest class."""
        model = OvoSvm(
            n_classes=3,
            machines={(0, 1): constant_machine(1.0), (0, 2): constant_machine(-1.0), (1, 2): constant_machine(1.0)},
        )
        assert ovo_predict(model, np.zeros((1, 2))).tolist() == [0]

    def test_zero_decision_votes_for_lower_class(self):
        """f = 0 counts as a win for the first class of the pair."""
        model = OvoSvm(n_classes=2, machines={(0, 1): constant_machine(0.0)})
        assert ovo_predict(model, np.zeros((1, 2))).tolist() == [0]

    @pytest.mark.parametrize("seed", range(4))
    def test_relabeling_classes(self, seed):
        """Renumbering the classes renumbers the predictions and nothing else."""
        rng = np.random.default_rng(seed)
        centers = rng.uniform(-2.0, 2.0, (4, 2))
        y = np.repeat(np.arange(4), 10)
        X = centers[y] + rng.standard_normal((40, 2))
        probe = rng.uniform(-4.0, 4.0, (200, 2))
        params = SvmParams(C=1.0, gamma=0.5)

        perm = rng.permutation(4)
        before = fit_ovo(X, y, params, n_classes=4).predict(probe)
        after = fit_ovo(X, perm[y], params, n_classes=4).predict(probe)
        assert np.array_equal(np.argsort(perm)[after], before)
