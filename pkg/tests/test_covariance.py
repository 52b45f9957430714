import math
import unittest
from dataclasses import replace

import numpy as np
import pytest

from sclt.arith import MERTENS_CONSTANT, sieve_primes
from sclt.characters import character, character_group
from sclt.covariance import (
    KAPPA2,
    ShiftConfig,
    build_K,
    build_K_tilde,
    check_pd,
    classify_shift_pair,
    covariance_spec,
    dedekind_covariance,
    distance_condition,
    normalizer,
    orthogonality_gap,
    shifts_from_rule,
    u_quadratic,
    v_min,
)
from sclt.dirichlet_series import derive_params, dirichlet_sum, prime_terms, sample_heights
from sclt.errors import DomainError, EmptyRangeError
from sclt.streams import STREAM_HEIGHTS, uniform_integers

T = 1e50
LOG_T = math.log(T)
LOGLOG_T = math.log(LOG_T)


class TestClassifyShiftPair(unittest.TestCase):

    def test_intermediate_class(self):
        pair = classify_shift_pair(0.0, LOG_T**-0.5, T, delta_budget=1.0)
        self.assertAlmostEqual(pair.c, 0.5)
        self.assertAlmostEqual(pair.e, 0.0, places=12)
        self.assertFalse(pair.cond1)
        self.assertFalse(pair.violation)

    def test_equal_shifts(self):
        pair = classify_shift_pair(0.25, 0.25, T, delta_budget=0.0)
        self.assertEqual(pair.c, 1.0)
        self.assertTrue(pair.cond1)
        self.assertFalse(pair.violation)

    def test_far_apart(self):
        pair = classify_shift_pair(0.0, 1.0, T, delta_budget=0.1)
        self.assertEqual(pair.c, 0.0)
        self.assertFalse(pair.violation)

    def test_very_close_is_class_one(self):
        pair = classify_shift_pair(0.0, 1e-10, T, delta_budget=0.0)
        self.assertEqual(pair.c, 1.0)
        self.assertGreater(pair.e, 0)
        self.assertFalse(pair.violation)

    def test_prescribed_class_violation(self):
        pair = classify_shift_pair(0.0, 1.0, T, delta_budget=1.0, c=0.5)
        self.assertAlmostEqual(pair.e, -0.5 * LOGLOG_T)
        self.assertTrue(pair.violation)


def test_v_min():
    assert v_min(T, 0.0, 0.0) == LOGLOG_T
    assert v_min(T, 0.0, 1e-30) == LOGLOG_T
    assert abs(v_min(T, 0.0, 0.5) - math.log(2)) < 1e-15


class TestShiftConfig(unittest.TestCase):

    def test_matrix(self):
        alphas = [0.0, LOG_T**-0.5, 1.0]
        config = ShiftConfig.from_alphas(alphas, T)

        self.assertEqual(config.N, 3)
        self.assertAlmostEqual(config.pair_class[0][1], 0.5)
        self.assertEqual(config.pair_class[1][0], config.pair_class[0][1])
        self.assertEqual(config.pair_class[0][0], 1.0)
        self.assertEqual(config.unclassified, ())

    def test_unclassified_pairs_are_listed(self):
        config = ShiftConfig.from_alphas([0.0, 1.0], T, delta_budget=0.1, c_matrix=[[1, 0.5], [0.5, 1]])
        self.assertEqual(config.unclassified, ((0, 1),))

    def test_domain(self):
        with self.assertRaises(DomainError):
            ShiftConfig.from_alphas([0.0, 0.6 * T], T)
        with self.assertRaises(DomainError):
            ShiftConfig.from_alphas([0.0], T, epsilon=0.7)
        with self.assertRaises(DomainError):
            ShiftConfig.from_alphas([0.0], T, delta_budget=-1)


def test_shifts_from_rule_realise_consecutive_classes():
    c = [[1, 0.5, 0.25], [0.5, 1, 0.75], [0.25, 0.75, 1]]
    alphas = shifts_from_rule(T, c)
    config = ShiftConfig.from_alphas(alphas, T)

    assert alphas[0] == 0.0
    assert abs(config.pair_class[0][1] - 0.5) < 1e-12
    assert abs(config.pair_class[1][2] - 0.75) < 1e-12


def test_shifts_from_rule_keep_classes_across_heights():
    c = [[1, 0.3], [0.3, 1]]
    for height in (1e20, 1e40, 1e80):
        config = ShiftConfig.from_alphas(shifts_from_rule(height, c), height)
        assert abs(config.pair_class[0][1] - 0.3) < 1e-12


class TestCheckPD(unittest.TestCase):

    def test_identity(self):
        result = check_pd(np.eye(4))
        self.assertTrue(result.pd)
        self.assertEqual(result.verdict, "pd")
        self.assertEqual(result.minors, (1.0, 1.0, 1.0, 1.0))

    def test_not_pd(self):
        result = check_pd(np.array([[1.0, 2.0], [2.0, 1.0]]))
        self.assertFalse(result.pd)
        self.assertEqual(result.verdict, "not_pd")

    def test_semidefinite(self):
        result = check_pd(np.ones((2, 2)))
        self.assertEqual(result.verdict, "semidefinite")

    def test_rejects_asymmetric(self):
        with self.assertRaises(DomainError):
            check_pd(np.array([[1.0, 0.5], [0.0, 1.0]]))

    def test_sylvester_and_cholesky_agree(self):
        rng = np.random.default_rng(7)
        indeterminate = 0
        for _ in range(1000):
            dim = int(rng.integers(1, 6))
            a = rng.normal(size=(dim, dim))
            matrix = (a + a.T) / 2 + dim * 0.5 * np.eye(dim)
            result = check_pd(matrix)
            if result.verdict == "indeterminate":
                indeterminate += 1
                continue
            self.assertEqual(result.pd, result.cholesky_ok)
            self.assertEqual(result.pd, result.min_eigenvalue > 0)

        self.assertLess(indeterminate, 10)


class TestCovariance(unittest.TestCase):

    def setUp(self):
        self.params = derive_params(1e4, Y_override=1000, X_override=5000)

    def test_same_character_uses_classes(self):
        chi = character(5, 1)
        config = ShiftConfig.from_alphas([0.0, LOG_T**-0.5], T)
        spec = build_K(config, [chi, chi])

        np.testing.assert_allclose(spec.K_target, [[1, 0.5], [0.5, 1]])
        self.assertTrue(spec.pd_target)

    def test_distinct_characters_give_identity(self):
        chars = character_group(7)
        config = ShiftConfig.from_alphas([0.0] * len(chars), T)
        spec = build_K(config, chars)

        np.testing.assert_array_equal(spec.K_target, np.eye(6))
        self.assertTrue(spec.pd_target)

    def test_empirical_matrix(self):
        chi = character(5, 1)
        config = ShiftConfig.from_alphas([0.0, 0.05], 1e4)
        spec = build_K_tilde(1e4, config, [chi, chi], self.params)

        self.assertEqual(spec.K_empirical.shape, (2, 2))
        np.testing.assert_allclose(np.diag(spec.K_empirical), [1.0, 1.0])
        self.assertGreater(spec.K_empirical[0, 1], 0.5)
        self.assertTrue(spec.pd_empirical)

    def test_orthogonal_characters(self):
        config = ShiftConfig.from_alphas([0.0, 0.0], 1e4)
        spec = covariance_spec(1e4, config, [character(5, 1), character(5, 2)], self.params)

        self.assertLess(orthogonality_gap(spec), 0.4)
        self.assertIsNotNone(spec.K_target)

    def test_empty_p1_range(self):
        params = derive_params(1e4, Y_override=14, X_override=5000)
        config = ShiftConfig.from_alphas([0.0], 1e4)

        with self.assertRaises(EmptyRangeError):
            build_K_tilde(1e4, config, [character(5, 1)], params)
        with self.assertRaises(EmptyRangeError):
            normalizer(1e4, character(5, 1), params)

    def test_normalizer_matches_direct_sum(self):
        chi = character(5, 2)
        primes = sieve_primes(1000).between(13, 1000).tolist()
        direct = math.fsum(abs(chi(p)) ** 2 * p ** (-2 * self.params.sigma0) for p in primes)
        result = normalizer(1e4, chi, self.params)

        self.assertAlmostEqual(result.M_T_chi, direct, places=12)
        self.assertAlmostEqual(result.C1, math.sqrt(math.log(math.log(1e4)) / direct))
        self.assertEqual(result.within_kappa2, result.C1**2 < KAPPA2)

    def test_normalizer_rejects_inconsistent_height(self):
        params = replace(derive_params(1e8, Y_override=1e5, X_override=1e6), sigma0=0.5)
        principal = character(1, 0)
        self.assertLess(normalizer(1e8, principal, params).M_T_chi, math.log(math.log(1e8)))

        with self.assertRaises(ArithmeticError):
            normalizer(16.0, principal, params)

    def test_principal_normalizer_gap(self):
        T = math.exp(255.0)
        params = derive_params(T)
        self.assertAlmostEqual(math.log10(params.Y), 5.0, delta=0.01)

        principal = character(1, 0)
        loglog_T = math.log(math.log(T))
        nested = loglog_T - math.log(loglog_T)

        result = normalizer(T, principal, params)
        self.assertGreater(nested - result.M_T_chi, 0)
        self.assertGreater(result.C1, 1)

        # at σ₀ = 1/2 the gap is log K' plus the primes up to 13 less Mertens' constant
        flat = normalizer(T, principal, replace(params, sigma0=0.5))
        small_primes = sum(1 / p for p in (2, 3, 5, 7, 11, 13))
        expected = math.log(params.K_prime) + small_primes - MERTENS_CONSTANT
        self.assertAlmostEqual(nested - flat.M_T_chi, expected, delta=0.01)
        self.assertLess(flat.M_T_chi, loglog_T)
        self.assertGreater(result.C1, flat.C1)

    def test_empirical_entries_bounded(self):
        rng = np.random.default_rng(11)
        chars = character_group(5) + character_group(8)
        for _ in range(20):
            picked = [chars[int(i)] for i in rng.integers(0, len(chars), size=3)]
            config = ShiftConfig.from_alphas(rng.uniform(0.0, 2.0, size=3).tolist(), 1e4)
            spec = build_K_tilde(1e4, config, picked, self.params)

            self.assertTrue(np.all(np.abs(spec.K_empirical) <= 1.0 + 1e-12))
            np.testing.assert_allclose(np.diag(spec.K_empirical), 1.0)

    def test_target_translation_invariant(self):
        rng = np.random.default_rng(12)
        chars = [character(5, 1), character(5, 1), character(7, 2), character(5, 1)]
        for _ in range(20):
            alphas = [LOG_T ** -float(c) for c in rng.uniform(0.0, 1.5, size=4)]
            alphas[3] = alphas[0]
            moved = [alpha + 0.5 for alpha in alphas]

            spec = build_K(ShiftConfig.from_alphas(alphas, T), chars)
            translated = build_K(ShiftConfig.from_alphas(moved, T), chars)
            np.testing.assert_allclose(translated.K_target, spec.K_target, atol=1e-9)


def test_dedekind_covariance():
    config = ShiftConfig.from_alphas([0.0, LOG_T**-0.5], T)
    quadratic = [character(5, 2), character(4, 1)]
    matrix = dedekind_covariance(config, quadratic)

    np.testing.assert_allclose(matrix, [[1, 0.25], [0.25, 1]])

    same = dedekind_covariance(config, [character(5, 2), character(5, 2)])
    np.testing.assert_allclose(same, [[1, 0.5], [0.5, 1]])


def test_u_quadratic():
    chi = character(5, 1)
    config = ShiftConfig.from_alphas([0.0, 0.5], T)
    value = u_quadratic([1.0, 2.0], config, [chi, chi], T)

    assert abs(value - (5 * LOGLOG_T + 4 * math.log(2))) < 1e-12
    assert abs(u_quadratic([1.0, 2.0], config, [chi, character(5, 2)], T) - 5 * LOGLOG_T) < 1e-12


def test_distance_condition_rows():
    config = ShiftConfig.from_alphas([0.0, 0.0, 0.3], 1e4)
    rows = distance_condition(config, [character(5, 1), character(5, 1), character(5, 2)], 1e4)

    assert [(row.i, row.j) for row in rows] == [(0, 1), (0, 2), (1, 2)]
    assert all(row.value >= 0 and row.cutoff == 1e4 for row in rows)


@pytest.mark.slow
def test_sampled_correlations_on_the_critical_line():
    # log T = 39 puts the shift gap at exactly (log T)^(-1/2), the c = 1/2 class
    height = math.exp(39.0)
    delta = 39.0**-0.5
    chi, psi = character(5, 1), character(5, 2)
    params = replace(derive_params(height, Y_override=1e5, X_override=1e6), sigma0=0.5)

    pair = ShiftConfig.from_alphas([0.0, delta], height)
    assert abs(pair.pair_class[0][1] - 0.5) < 1e-12
    assert abs(build_K(pair, [chi, chi]).K_target[0, 1] - 0.5) < 1e-12

    heights = sample_heights(height, uniform_integers(5, STREAM_HEIGHTS, 10**4))
    values = dirichlet_sum([chi, chi, psi], [0.0, delta, 0.0], 0.5, heights, prime_terms(13, 1e5)).real
    sampled = np.corrcoef(values, rowvar=False)
    predicted = build_K_tilde(height, ShiftConfig.from_alphas([0.0, delta, 0.0], height), [chi, chi, psi], params)

    assert abs(sampled[0, 1] - 0.5) <= 0.10
    assert abs(sampled[0, 2]) <= 0.05
    np.testing.assert_allclose(sampled, predicted.K_empirical, atol=0.03)
