import math
import unittest

import numpy as np
import pytest
from scipy.stats import norm

from sclt.batches import SampleBatch
from sclt.errors import DomainError
from sclt.gaussian import GaussianSpec, sample_mvn
from sclt.distances import (
    BoundParams,
    DistanceReport,
    abb_certificate,
    bl_dictionary_lower,
    cf_empirical,
    cf_gauss,
    cf_sup_on_grid,
    coupling_l1_upper,
    empirical_box_tail,
    gaussian_box_tail,
    kolmogorov_1d,
)


def batch(stage, data, seed=1, flags=None):
    return SampleBatch(stage, np.asarray(data, dtype=float), seed=seed, flags=flags)


class TestDistanceReport(unittest.TestCase):

    def test_negative_value(self):
        with self.assertRaises(ValueError):
            DistanceReport(("Q_T", "R_T"), "coupling_l1", -1.0)

    def test_unknown_estimator(self):
        with self.assertRaises(ValueError):
            DistanceReport(("Q_T", "R_T"), "wasserstein", 0.0)

    def test_with_context(self):
        report = DistanceReport(("Q_T", "R_T"), "coupling_l1", 0.5).with_context(T=1e10, theory_shape=0.1)
        self.assertEqual(report.T, 1e10)
        self.assertEqual(report.theory_shape, 0.1)


class TestCoupling(unittest.TestCase):

    def test_value(self):
        X = batch("Q_T", [[0.0, 0.0], [1.0, 2.0]])
        Y = batch("R_T", [[1.0, 0.0], [1.0, 0.0]])

        report = coupling_l1_upper(X, Y, 2.0)
        self.assertEqual(report.value, 2.0 * (1.0 + 2.0) / 2)
        self.assertEqual(report.pair, ("Q_T", "R_T"))
        self.assertEqual(report.params, {"L": 2.0})

    def test_excluded_rows(self):
        X = batch("X_T", [[0.0], [100.0], [1.0]], flags=np.array([False, True, False]))
        Y = batch("X0_T", [[0.0], [0.0], [0.0]])

        report = coupling_l1_upper(X, Y, 1.0)
        self.assertEqual(report.value, 0.5)
        self.assertIn("excluded=1", report.flags)

    def test_not_cosampled(self):
        with self.assertRaises(ValueError):
            coupling_l1_upper(batch("Q_T", [[0.0]]), batch("R_T", [[0.0], [1.0]]), 1.0)
        with self.assertRaises(ValueError):
            coupling_l1_upper(batch("Q_T", [[0.0]], seed=1), batch("R_T", [[0.0]], seed=2), 1.0)

    def test_upper_bounds_lower(self):
        rng = np.random.default_rng(0)
        data = rng.normal(size=(2000, 2))
        X = batch("Q_T", data)
        Y = batch("R_T", data + rng.normal(scale=0.3, size=data.shape))

        upper = coupling_l1_upper(X, Y, 1.0)
        lower = bl_dictionary_lower(X, Y, 1.0, 1.0, 64, seed=3)
        self.assertLessEqual(lower.value, upper.value + 3 * (upper.uncertainty + lower.uncertainty))


class TestDictionary(unittest.TestCase):

    def test_identical_batches(self):
        data = np.random.default_rng(1).normal(size=(500, 2))
        report = bl_dictionary_lower(batch("Q_T", data), batch("R_T", data), 1.0, 1.0, 32, seed=0)
        self.assertEqual(report.value, 0.0)

    def test_prefix_stable(self):
        rng = np.random.default_rng(2)
        X = batch("Q_T", rng.normal(size=(300, 2)))
        Y = batch("R_T", rng.normal(loc=0.5, size=(300, 2)))

        small = bl_dictionary_lower(X, Y, 1.0, 1.0, 16, seed=7)
        large = bl_dictionary_lower(X, Y, 1.0, 1.0, 64, seed=7)
        self.assertGreaterEqual(large.value, small.value)

    def test_detects_shift(self):
        rng = np.random.default_rng(3)
        X = batch("R1_T", rng.normal(loc=2.0, size=(2000, 1)))
        report = bl_dictionary_lower(X, GaussianSpec.from_covariance([[1.0]]), 1.0, 1.0, 128, seed=1,
                                     reference_samples=20_000)

        self.assertEqual(report.pair, ("R1_T", "Z_tilde"))
        self.assertGreater(report.value, 10 * report.uncertainty)

    def test_bad_arguments(self):
        X = batch("Q_T", [[0.0]])
        with self.assertRaises(DomainError):
            bl_dictionary_lower(X, X, 1.0, 1.0, 0, seed=0)
        with self.assertRaises(ValueError):
            bl_dictionary_lower(X, GaussianSpec.from_covariance(np.eye(2)), 1.0, 1.0, 4, seed=0)


class TestCharacteristicFunctions(unittest.TestCase):

    def test_gaussian_samples_are_close(self):
        spec = GaussianSpec.from_covariance([[1.0, 0.3], [0.3, 1.0]])
        sample = sample_mvn(spec, 20_000, seed=5)
        X = SampleBatch("R1_T", sample.data, seed=5)

        result = cf_sup_on_grid(X, spec, F=2.0, grid_per_axis=8)
        self.assertLess(result.sup, 0.05)
        self.assertEqual(result.points, 9**2)

    def test_origin(self):
        X = batch("R1_T", [[3.0, -1.0]])
        self.assertEqual(cf_empirical(X, [0.0, 0.0]), 1 + 0j)
        self.assertEqual(cf_gauss(GaussianSpec.from_covariance(np.eye(2)), [0.0, 0.0]), 1.0)

    def test_point_mass(self):
        X = batch("R1_T", [[0.0]] * 10)
        spec = GaussianSpec.from_covariance([[1.0]])

        result = cf_sup_on_grid(X, spec, F=3.0, grid_per_axis=5)
        self.assertAlmostEqual(result.sup, 1 - math.exp(-0.5 * 2.0**2))
        self.assertAlmostEqual(abs(result.argmax[0]), 2.0)

    def test_bad_grid(self):
        X = batch("R1_T", [[0.0]])
        spec = GaussianSpec.from_covariance([[1.0]])
        with self.assertRaises(DomainError):
            cf_sup_on_grid(X, spec, F=0.0, grid_per_axis=3)
        with self.assertRaises(DomainError):
            cf_sup_on_grid(X, spec, F=1.0, grid_per_axis=0)


class TestCertificate(unittest.TestCase):

    def test_formula(self):
        self.assertEqual(abb_certificate(2.0, 1.0, 1.0, 2.0, 0.01, 0.1, 0.2, 2), 1.0 + 0.04 + 0.3)

    def test_negative_inputs(self):
        with self.assertRaises(DomainError):
            abb_certificate(1.0, 1.0, 1.0, 1.0, -0.1, 0.0, 0.0, 1)
        with self.assertRaises(DomainError):
            abb_certificate(1.0, 1.0, 1.0, 0.0, 0.1, 0.0, 0.0, 1)

    def test_monotone_in_each_input(self):
        rng = np.random.default_rng(9)
        for _ in range(200):
            L, M, R, F = rng.uniform(0.1, 3.0, size=4)
            cf_sup, tail_mu, tail_nu = rng.uniform(0.0, 0.5, size=3)
            N = int(rng.integers(1, 4))
            base = abb_certificate(L, M, R, F, cf_sup, tail_mu, tail_nu, N)
            step = float(rng.uniform(0.01, 1.0))

            self.assertGreaterEqual(abb_certificate(L, M, R, F, cf_sup + step, tail_mu, tail_nu, N), base)
            self.assertGreaterEqual(abb_certificate(L, M, R, F, cf_sup, tail_mu + step, tail_nu, N), base)
            self.assertGreaterEqual(abb_certificate(L, M, R, F, cf_sup, tail_mu, tail_nu + step, N), base)
            self.assertGreaterEqual(abb_certificate(L, M + step, R, F, cf_sup, tail_mu, tail_nu, N), base)

    def test_tails(self):
        X = batch("R1_T", [[0.0, 0.0], [3.0, 0.0], [0.0, -4.0], [1.0, 1.0]])
        self.assertEqual(empirical_box_tail(X, 2.0), 0.5)

        spec = GaussianSpec.from_covariance(np.eye(2))
        self.assertAlmostEqual(gaussian_box_tail(spec, 1.96), 2 * 0.04999579, places=6)
        self.assertEqual(gaussian_box_tail(spec, 0.0), 1.0)


class TestBoundParams(unittest.TestCase):

    def test_regimes(self):
        for params in (BoundParams.main(1e100), BoundParams.identity(1e100)):
            loglog_T = math.log(math.log(1e100))
            expected = params.C1 * params.C2 * params.r_threshold * params.u_norm1 / math.sqrt(0.5 * loglog_T)
            self.assertAlmostEqual(params.N_trunc, expected)

    def test_identity_truncation(self):
        loglog_T = math.log(math.log(1e100))
        params = BoundParams.identity(1e100)
        self.assertAlmostEqual(params.N_trunc, loglog_T / math.log(loglog_T))

    def test_constraints(self):
        with self.assertRaises(DomainError):
            BoundParams.main(1e100, C2=7.0)
        with self.assertRaises(DomainError):
            BoundParams.main(1e100, eps1=0.5, eps2=0.3)
        with self.assertRaises(DomainError):
            BoundParams.main(1e100, eps1=0.4, eps2=0.7)
        with self.assertRaises(DomainError):
            BoundParams.main(10.0)


@pytest.mark.parametrize("n", [10, 100, 1000])
def test_kolmogorov_matches_scipy_definition(n):
    values = np.random.default_rng(n).normal(size=n)
    ordered = np.sort(values)
    cdf = norm.cdf(ordered)
    expected = max(np.max(np.arange(1, n + 1) / n - cdf), np.max(cdf - np.arange(n) / n))

    assert abs(kolmogorov_1d(values) - expected) < 1e-12


def test_kolmogorov_reference():
    assert kolmogorov_1d([0.5, 0.5], lambda x: np.clip(x, 0, 1)) == 0.5
    with pytest.raises(ValueError):
        kolmogorov_1d([])
    with pytest.raises(ValueError):
        kolmogorov_1d([0.0], "cauchy")


def test_kolmogorov_ignores_sample_order():
    rng = np.random.default_rng(21)
    values = rng.normal(0.1, 1.2, size=500)
    expected = kolmogorov_1d(values)

    for _ in range(5):
        assert kolmogorov_1d(rng.permutation(values)) == expected
    assert kolmogorov_1d(values[::-1]) == expected
