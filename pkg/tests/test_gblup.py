"""REML mixed-model fitting, breeding-value prediction and accuracy scoring."""

import numpy as np
import pytest

from pevsel import (ContractError, DataError, DegenerateInputError,
                    KinshipMatrix, PhenotypeVector, accuracy, center_scale,
                    fit_spmm, kinship, predict_gebv, restricted_loglik)
from conftest import make_scaled


def simulated_instance(rng, n, m, h2=0.5, n_test=0):
    """Markers, kinship and a phenotype with genetic signal."""
    M = make_scaled(rng, n + n_test, m)
    K = kinship(M)
    effects = rng.standard_normal(M.m) / np.sqrt(M.m)
    g = M.values @ effects
    noise_sd = np.sqrt(np.var(g) * (1 - h2) / h2)
    y = 2.0 + g + rng.normal(0, noise_sd, n + n_test)
    return M, K, y


class TestFitSpmm:
    def test_constant_phenotype_is_degenerate(self, rng):
        M = make_scaled(rng, 6, 10)
        K = kinship(M)
        y = PhenotypeVector(M.ids, np.full(6, 3.25))
        with pytest.raises(DegenerateInputError):
            fit_spmm(y, K)

    def test_identity_kinship_gives_zero_test_blups(self, rng):
        ids = tuple(f"x{i}" for i in range(12))
        K = KinshipMatrix(ids, np.eye(12))
        y = PhenotypeVector(ids[:8], rng.standard_normal(8) + 5.0)
        fit = fit_spmm(y, K, train_ids=ids[:8])
        np.testing.assert_allclose(fit.blups[8:], 0.0, atol=1e-12)
        pred = predict_gebv(fit, ids[8:])
        np.testing.assert_allclose(pred.values, fit.beta[0], atol=1e-12)

    def test_reml_beats_log_grid(self, rng):
        M, K, y = simulated_instance(rng, 30, 50)
        yv = PhenotypeVector(M.ids, y)
        fit = fit_spmm(yv, K)
        grid = np.logspace(-5, 5, 1000)
        grid_best = max(restricted_loglik(yv, K, r) for r in grid)
        assert fit.log_likelihood >= grid_best - 1e-6
        assert fit.sigma_g2 >= 0 and fit.sigma_e2 > 0

    def test_fixed_ratio_respected(self, rng):
        M, K, y = simulated_instance(rng, 20, 30)
        yv = PhenotypeVector(M.ids, y)
        fit = fit_spmm(yv, K, ratio=2.5)
        assert fit.ratio == 2.5
        assert fit.sigma_g2 == pytest.approx(2.5 * fit.sigma_e2)

    def test_requires_three_individuals(self, rng):
        M = make_scaled(rng, 5, 10)
        K = kinship(M)
        y = PhenotypeVector(M.ids[:2], [1.0, 2.0])
        with pytest.raises(ContractError):
            fit_spmm(y, K, train_ids=M.ids[:2])

    def test_translation_equivariance(self, rng):
        M, K, y = simulated_instance(rng, 25, 40, n_test=5)
        train, test = M.ids[:25], M.ids[25:]
        base = fit_spmm(PhenotypeVector(train, y[:25]), K, train_ids=train)
        shifted = fit_spmm(PhenotypeVector(train, y[:25] + 7.5), K,
                           train_ids=train)
        np.testing.assert_allclose(predict_gebv(shifted, test).values,
                                   predict_gebv(base, test).values + 7.5,
                                   atol=1e-9)


class TestPredictGebv:
    def test_duplicate_individual_interpolated_at_high_ratio(self, rng):
        # the test individual is a genetic copy of a training individual
        M = make_scaled(rng, 20, 40)
        values = np.array(M.values)
        values[19] = values[3]
        from pevsel import MarkerMatrix
        M2 = MarkerMatrix(M.ids, values, M.marker_names, centered_scaled=True)
        K = kinship(M2)
        train, test = M.ids[:19], (M.ids[19],)
        y = rng.standard_normal(19) * 2 + 1
        fit = fit_spmm(PhenotypeVector(train, y), K, train_ids=train,
                       ratio=1e8)
        pred = predict_gebv(fit, test)
        assert abs(pred.values[0] - y[3]) < 1e-3

    def test_identity_kinship_predicts_intercept(self, rng):
        ids = tuple(f"x{i}" for i in range(10))
        K = KinshipMatrix(ids, np.eye(10))
        y = PhenotypeVector(ids[:7], rng.standard_normal(7))
        fit = fit_spmm(y, K, train_ids=ids[:7])
        pred = predict_gebv(fit, ids[7:])
        np.testing.assert_allclose(pred.values, fit.beta[0], atol=1e-12)

    def test_matches_joint_ridge_normal_equations(self, rng):
        # independent oracle: solve the (intercept + markers) system directly
        # with lam = sigma_e2 / (sigma_g2 / m)
        M, K, y = simulated_instance(rng, 50, 80, n_test=20)
        train, test = M.ids[:50], M.ids[50:]
        ratio = 1.7
        fit = fit_spmm(PhenotypeVector(train, y[:50]), K, train_ids=train,
                       ratio=ratio)
        pred = predict_gebv(fit, test).values

        lam = M.m / ratio
        Xtr = M.values[:50]
        p = M.m + 1
        A = np.zeros((p, p))
        A[0, 0] = 50
        A[0, 1:] = Xtr.sum(axis=0)
        A[1:, 0] = Xtr.sum(axis=0)
        A[1:, 1:] = Xtr.T @ Xtr + lam * np.eye(M.m)
        b = np.concatenate([[y[:50].sum()], Xtr.T @ y[:50]])
        sol = np.linalg.solve(A, b)
        oracle = sol[0] + M.values[50:] @ sol[1:]
        np.testing.assert_allclose(pred, oracle, atol=1e-6)

    def test_unknown_id_is_data_error(self, rng):
        M, K, y = simulated_instance(rng, 10, 15)
        fit = fit_spmm(PhenotypeVector(M.ids, y), K)
        with pytest.raises(DataError):
            predict_gebv(fit, ["nope"])

    def test_shrinkage_keeps_predictions_in_training_range(self, rng):
        # unit-diagonal kinship: test predictions stay within the adjusted
        # training phenotype range
        for seed in range(5):
            local = np.random.default_rng(seed)
            M = make_scaled(local, 40, 60)
            K = kinship(M).values
            d = np.sqrt(np.diag(K))
            K = KinshipMatrix(M.ids, K / np.outer(d, d))
            train, test = M.ids[:30], M.ids[30:]
            y = local.standard_normal(30) * 3 + 10
            fit = fit_spmm(PhenotypeVector(train, y), K, train_ids=train)
            adjusted = y - fit.beta[0]
            blups = predict_gebv(fit, test).values - fit.beta[0]
            assert np.all(blups >= adjusted.min() - 1e-6)
            assert np.all(blups <= adjusted.max() + 1e-6)


class TestAccuracy:
    def test_perfect_and_anti_correlation(self):
        ids = ("a", "b", "c", "d")
        obs = PhenotypeVector(ids, [1.0, 2.0, 3.0, 4.0])
        same = PhenotypeVector(ids, [1.0, 2.0, 3.0, 4.0])
        neg = PhenotypeVector(ids, [-1.0, -2.0, -3.0, -4.0])
        assert accuracy(same, obs).correlation == pytest.approx(1.0)
        assert accuracy(neg, obs).correlation == pytest.approx(-1.0)

    def test_hand_computed_pearson(self):
        ids = tuple("abcde")
        a = PhenotypeVector(ids, [1, 2, 3, 4, 5])
        b = PhenotypeVector(ids, [1, 2, 3, 5, 4])
        # centered cross products: 9 / sqrt(10 * 10)
        assert accuracy(a, b).correlation == pytest.approx(0.9)
        assert accuracy(a, b).n_test == 5

    def test_constant_vector_is_degenerate_not_zero(self):
        ids = ("a", "b", "c")
        const = PhenotypeVector(ids, [2.0, 2.0, 2.0])
        other = PhenotypeVector(ids, [1.0, 2.0, 3.0])
        with pytest.raises(DegenerateInputError):
            accuracy(const, other)
        with pytest.raises(DegenerateInputError):
            accuracy(other, const)

    def test_needs_three_pairs(self):
        ids = ("a", "b")
        with pytest.raises(ContractError):
            accuracy(PhenotypeVector(ids, [1.0, 2.0]),
                     PhenotypeVector(ids, [2.0, 1.0]))

    def test_alignment_by_id_not_position(self):
        a = PhenotypeVector(("a", "b", "c"), [1.0, 2.0, 3.0])
        b = PhenotypeVector(("c", "a", "b"), [3.0, 1.0, 2.0])
        assert accuracy(a, b).correlation == pytest.approx(1.0)
