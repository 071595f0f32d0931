"""GLM fitting and the two marginal-likelihood scores."""

import math

import numpy as np
import pytest
import scipy.integrate

from logicreg.glmlik import (BINOMIAL, GAUSSIAN, Dataset, RobustGConfig,
                             design_matrix, fit_binomial, fit_gaussian,
                             log_marglik_jeffreys, log_marglik_robust_g)
from logicreg.space import Population
from logicreg.trees import conj, leaf


def random_design(rng, n, k):
    X = np.column_stack([np.ones(n)] +
                        [rng.integers(0, 2, n) for _ in range(k)])
    return np.ascontiguousarray(X, dtype=np.float64)


def logistic_data(rng, n, k, scale=0.8):
    design = random_design(rng, n, k)
    beta = rng.normal(0.0, scale, k + 1)
    p = 1.0 / (1.0 + np.exp(-design @ beta))
    y = (rng.random(n) < p).astype(np.float64)
    return design, y


class TestDataset:
    def test_valid(self):
        X = np.array([[0, 1], [1, 0], [1, 1]], dtype=np.uint8)
        d = Dataset(X=X, y=np.array([0.0, 1.0, 1.0]), family=BINOMIAL)
        assert d.n == 3 and d.m == 2

    def test_nonbinary_covariate_rejected(self):
        X = np.array([[0, 2], [1, 0]])
        with pytest.raises(ValueError):
            Dataset(X=X, y=np.zeros(2), family=GAUSSIAN)

    def test_binomial_response_must_be_01(self):
        X = np.zeros((3, 2), dtype=np.uint8)
        with pytest.raises(ValueError):
            Dataset(X=X, y=np.array([0.0, 0.5, 1.0]), family=BINOMIAL)

    def test_unknown_family(self):
        with pytest.raises(ValueError):
            Dataset(X=np.zeros((2, 1), dtype=np.uint8), y=np.zeros(2),
                    family="poisson")


class TestDesignMatrix:
    def test_empty_model_is_intercept_only(self):
        pop = Population(trees=(leaf(0),), d1=0)
        data = Dataset(X=np.array([[1], [0]], dtype=np.uint8),
                       y=np.zeros(2), family=GAUSSIAN)
        d = design_matrix(np.array([False]), pop, data)
        assert d.shape == (2, 1)
        assert (d == 1.0).all()

    def test_single_tree_column(self):
        pop = Population(trees=(conj(leaf(0), leaf(3, neg=True)),), d1=0)
        X = np.zeros((2, 4), dtype=np.uint8)
        X[0, 0] = 1
        data = Dataset(X=X, y=np.zeros(2), family=GAUSSIAN)
        d = design_matrix(np.array([True]), pop, data)
        assert d[0, 1] == 1.0 and d[1, 1] == 0.0


class TestGaussianFit:
    def test_intercept_only_closed_form(self):
        rng = np.random.default_rng(0)
        y = rng.normal(2.0, 1.0, 200)
        fit = fit_gaussian(np.ones((200, 1)), y)
        assert fit.coef[0] == pytest.approx(y.mean(), abs=1e-12)
        rss = float(np.sum((y - y.mean()) ** 2))
        assert fit.phi == pytest.approx(rss / 200, abs=1e-12)

    def test_loglik_matches_rss_formula(self):
        """Closed form -(n/2)(log(2 pi RSS/n) + 1) on 100 random instances."""
        rng = np.random.default_rng(1)
        for _ in range(100):
            n = int(rng.integers(20, 200))
            design = random_design(rng, n, int(rng.integers(1, 5)))
            y = design @ rng.normal(0, 1, design.shape[1]) + rng.normal(0, 1, n)
            fit = fit_gaussian(design, y)
            coef, *_ = np.linalg.lstsq(design, y, rcond=None)
            rss = float(np.sum((y - design @ coef) ** 2))
            expect = -0.5 * n * (math.log(2 * math.pi * rss / n) + 1.0)
            assert fit.loglik == pytest.approx(expect, abs=1e-10)

    def test_rank_deficiency_reported(self):
        design = np.ones((10, 2))
        fit = fit_gaussian(design, np.arange(10.0))
        assert fit.rank < 2


class TestBinomialFit:
    def test_intercept_only_closed_form(self):
        y = np.array([1.0] * 30 + [0.0] * 70)
        fit = fit_binomial(np.ones((100, 1)), y)
        assert fit.coef[0] == pytest.approx(math.log(0.3 / 0.7), abs=1e-8)

    def test_gradient_small_at_mle(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            design, y = logistic_data(rng, int(rng.integers(30, 150)),
                                      int(rng.integers(1, 4)))
            fit = fit_binomial(design, y)
            mu = 1.0 / (1.0 + np.exp(-(design @ fit.coef)))
            score = design.T @ (y - mu)
            assert np.max(np.abs(score)) < 1e-6

    def test_finite_difference_gradient(self):
        """d loglik / d beta at the MLE vanishes to 1e-5 (50 instances)."""
        rng = np.random.default_rng(3)

        def loglik(design, y, beta):
            eta = design @ beta
            return float(y @ eta - np.logaddexp(0.0, eta).sum())

        for _ in range(50):
            design, y = logistic_data(rng, 80, 2)
            fit = fit_binomial(design, y)
            h = 1e-6
            for j in range(3):
                e = np.zeros(3)
                e[j] = h
                grad = (loglik(design, y, fit.coef + e) -
                        loglik(design, y, fit.coef - e)) / (2 * h)
                assert abs(grad) < 1e-5

    def test_perfect_separation_capped(self):
        x = np.array([0.0] * 20 + [1.0] * 20)
        y = x.copy()
        design = np.column_stack([np.ones(40), x])
        fit = fit_binomial(design, y)
        assert math.isfinite(fit.loglik)
        assert np.max(np.abs(design @ fit.coef)) <= 30.0 + 1e-9

    def test_duplicate_column_flagged(self):
        rng = np.random.default_rng(4)
        design, y = logistic_data(rng, 60, 2)
        dup = np.column_stack([design, design[:, 1]])
        fit = fit_binomial(dup, y)
        assert fit.rank < dup.shape[1]


class TestJeffreysMarginal:
    def test_empty_model_no_penalty(self):
        rng = np.random.default_rng(5)
        y = rng.normal(size=50)
        fit = fit_gaussian(np.ones((50, 1)), y)
        assert log_marglik_jeffreys(fit, 50, 0) == fit.loglik

    def test_penalty_arithmetic(self):
        rng = np.random.default_rng(6)
        design = random_design(rng, 100, 2)
        y = rng.normal(size=100)
        fit = fit_gaussian(design, y)
        out = log_marglik_jeffreys(fit, 100, 2)
        assert out == pytest.approx(fit.loglik - math.log(100), abs=1e-12)

    def test_ranking_equals_neg_half_bic(self):
        rng = np.random.default_rng(7)
        n = 120
        X = rng.integers(0, 2, (n, 6)).astype(float)
        y = X[:, 0] * 2.0 + rng.normal(0, 1, n)
        scores, bics = [], []
        for cols in [(0,), (1,), (0, 1), (2, 3), (0, 4, 5)]:
            design = np.column_stack([np.ones(n), X[:, cols]])
            fit = fit_gaussian(design, y)
            scores.append(log_marglik_jeffreys(fit, n, len(cols)))
            bics.append(-2 * fit.loglik + (len(cols) + 1) * math.log(n))
        # same ordering (|M| counts only trees; intercept shifts are shared)
        assert np.argsort(scores).tolist() == np.argsort(
            [-b / 2 for b in bics]).tolist()

    def test_nonfinite_loglik_maps_to_neg_inf(self):
        from logicreg.glmlik import GlmFit
        fit = GlmFit(coef=np.zeros(1), loglik=math.nan, phi=1.0,
                     iterations=1, converged=False, rank=1)
        assert log_marglik_jeffreys(fit, 10, 0) == -math.inf


class TestRobustG:
    def test_null_model_equals_null_loglik(self):
        rng = np.random.default_rng(8)
        y = rng.normal(size=60)
        out = log_marglik_robust_g(np.ones((60, 1)), y, GAUSSIAN)
        fit = fit_gaussian(np.ones((60, 1)), y)
        assert out == pytest.approx(fit.loglik, abs=1e-12)

    def test_node_doubling_convergence(self):
        """64 -> 128 nodes moves the score by < 1e-6 on 20 gaussian cases."""
        rng = np.random.default_rng(9)
        for _ in range(20):
            n = int(rng.integers(50, 150))
            design = random_design(rng, n, 2)
            y = design @ rng.normal(0, 1, 3) + rng.normal(0, 1, n)
            a = log_marglik_robust_g(design, y, GAUSSIAN, RobustGConfig(nodes=64))
            b = log_marglik_robust_g(design, y, GAUSSIAN, RobustGConfig(nodes=128))
            assert abs(a - b) < 1e-6

    def test_dense_grid_oracle(self):
        """Independent adaptive integration over the full prior support."""
        rng = np.random.default_rng(10)
        for k in (1, 2):
            design = random_design(rng, 100, k)
            y = design @ rng.normal(0, 1, k + 1) + rng.normal(0, 1, 100)
            out = log_marglik_robust_g(design, y, GAUSSIAN,
                                       RobustGConfig(nodes=64))

            n = 100
            fit = fit_gaussian(design, y)
            rss = float(np.sum((y - design @ fit.coef) ** 2))
            rss0 = float(np.sum((y - y.mean()) ** 2))
            r2 = 1.0 - rss / rss0
            v = (n + 1) / (k + 1)

            def integrand(u, k=k, r2=r2):
                bf = u ** (k / 2.0) * (1.0 - r2 * (1.0 - u)) ** (-(n - 1) / 2)
                return bf * u ** (-0.5)

            num, _ = scipy.integrate.quad(integrand, 0.0, 1.0 / v, limit=200)
            den = 2.0 * math.sqrt(1.0 / v)
            null_ll = fit_gaussian(np.ones((n, 1)), y).loglik
            expect = null_ll + math.log(num / den)
            assert out == pytest.approx(expect, abs=1e-6)

    def test_binomial_score_is_finite_and_orders_signal(self):
        rng = np.random.default_rng(11)
        n = 400
        X = rng.integers(0, 2, (n, 4)).astype(float)
        eta = -0.5 + 2.0 * X[:, 0]
        y = (rng.random(n) < 1.0 / (1.0 + np.exp(-eta))).astype(float)
        d_true = np.column_stack([np.ones(n), X[:, 0]])
        d_noise = np.column_stack([np.ones(n), X[:, 1]])
        s_true = log_marglik_robust_g(d_true, y, BINOMIAL)
        s_noise = log_marglik_robust_g(d_noise, y, BINOMIAL)
        assert math.isfinite(s_true) and math.isfinite(s_noise)
        assert s_true > s_noise

    def test_rank_deficient_is_neg_inf(self):
        rng = np.random.default_rng(12)
        design, y = logistic_data(rng, 60, 1)
        dup = np.column_stack([design, design[:, 1]])
        assert log_marglik_robust_g(dup, y, BINOMIAL) == -math.inf

    def test_jeffreys_and_robust_agree_on_dominant_truth(self):
        """Both scores rank the true gaussian model first with huge effects."""
        rng = np.random.default_rng(13)
        n = 300
        X = rng.integers(0, 2, (n, 4)).astype(float)
        y = 10.0 * X[:, 0] + 10.0 * X[:, 1] + rng.normal(0, 1, n)
        candidates = [(0,), (1,), (0, 1), (0, 1, 2), (2, 3)]
        jef, rob = [], []
        for cols in candidates:
            design = np.column_stack([np.ones(n), X[:, cols]])
            fit = fit_gaussian(design, y)
            jef.append(log_marglik_jeffreys(fit, n, len(cols)))
            rob.append(log_marglik_robust_g(design, y, GAUSSIAN))
        assert int(np.argmax(jef)) == int(np.argmax(rob)) == 2

    def test_node_count_validation(self):
        with pytest.raises(ValueError):
            RobustGConfig(nodes=8)


class TestCollinearityMonotonicity:
    def test_adding_collinear_column_never_raises_loglik(self):
        rng = np.random.default_rng(14)
        n = 80
        design = random_design(rng, n, 2)
        y = design @ rng.normal(0, 1, 3) + rng.normal(0, 1, n)
        base = fit_gaussian(design, y)
        wider = fit_gaussian(np.column_stack([design, design[:, 1]]), y)
        assert wider.loglik <= base.loglik + 1e-10
