import math
import unittest

import numpy as np
import pytest

from sclt.arith import (
    MERTENS_CONSTANT,
    big_omega,
    count_prime_factors_in_range,
    factorize,
    mobius,
    mobius_upto,
    prime_factor_counts,
    prime_sum,
    prime_table,
    sieve_primes,
    von_mangoldt,
)
from sclt.characters import character
from sclt.errors import CapacityError, DomainError


class TestSieve(unittest.TestCase):

    def test_small_limits(self):
        self.assertEqual(sieve_primes(2).primes.tolist(), [2])
        self.assertEqual(sieve_primes(30).primes.tolist(), [2, 3, 5, 7, 11, 13, 17, 19, 23, 29])

    def test_prime_counts(self):
        self.assertEqual(len(sieve_primes(10**4)), 1229)
        self.assertEqual(len(sieve_primes(10**6)), 78498)

    def test_segment_boundaries(self):
        # crosses several segments with a root that is not a segment multiple
        limit = 3 * 2**20 + 17
        flags = np.ones(limit + 1, dtype=bool)
        flags[:2] = False
        for p in range(2, math.isqrt(limit) + 1):
            if flags[p]:
                flags[p * p::p] = False

        self.assertEqual(sieve_primes(limit).primes.tolist(), np.flatnonzero(flags).tolist())

    def test_log_table_matches(self):
        table = sieve_primes(1000)
        np.testing.assert_allclose(table.log_p, np.log(table.primes.astype(float)))

    def test_read_only(self):
        table = sieve_primes(100)
        with self.assertRaises(ValueError):
            table.primes[0] = 4

    def test_invalid_limit(self):
        with self.assertRaises(DomainError):
            sieve_primes(1)

    def test_capacity(self):
        with self.assertRaises(CapacityError) as context:
            sieve_primes(1001, capacity=1000)

        self.assertEqual(context.exception.requested, 1001)
        self.assertEqual(context.exception.capacity, 1000)

    def test_between_is_half_open(self):
        table = sieve_primes(100)
        self.assertEqual(table.between(13, 19).tolist(), [17, 19])
        self.assertEqual(table.between(13, 16.5).tolist(), [])

    def test_span_beyond_limit(self):
        with self.assertRaises(CapacityError):
            sieve_primes(100).span(0, 101)


def test_shared_table_grows():
    small = prime_table(50)
    large = prime_table(small.limit * 2 + 1)

    assert large.limit >= small.limit * 2 + 1
    assert large.primes[: len(small)].tolist() == small.primes.tolist()


def test_mertens_sum():
    table = sieve_primes(10**6)
    total = math.fsum((1.0 / table.primes).tolist())

    assert abs(total - math.log(math.log(10**6)) - MERTENS_CONSTANT) < 1e-3


class TestArithmeticFunctions(unittest.TestCase):

    def test_factorize(self):
        self.assertEqual(factorize(1), [])
        self.assertEqual(factorize(360), [(2, 3), (3, 2), (5, 1)])
        self.assertEqual(factorize(999983), [(999983, 1)])
        self.assertEqual(factorize(2**40), [(2, 40)])

    def test_factorize_rejects(self):
        with self.assertRaises(DomainError):
            factorize(0)
        with self.assertRaises(CapacityError):
            factorize(10**15)

    def test_mobius(self):
        self.assertEqual([mobius(n) for n in range(1, 11)], [1, -1, -1, 0, -1, 1, -1, 0, 0, 1])
        with self.assertRaises(DomainError):
            mobius(0)

    def test_mobius_table_agrees(self):
        table = mobius_upto(500)
        self.assertEqual(table[1:].tolist(), [mobius(n) for n in range(1, 501)])

    def test_von_mangoldt(self):
        self.assertAlmostEqual(von_mangoldt(8), math.log(2))
        self.assertAlmostEqual(von_mangoldt(49), math.log(7))
        self.assertEqual(von_mangoldt(6), 0.0)
        self.assertEqual(von_mangoldt(1), 0.0)

    def test_divisor_sums_of_von_mangoldt(self):
        limit = 10**4
        totals = np.zeros(limit + 1)
        for d in range(2, limit + 1):
            weight = von_mangoldt(d)
            if weight:
                totals[d::d] += weight

        np.testing.assert_allclose(totals[1:], np.log(np.arange(1, limit + 1)), rtol=0, atol=1e-9)

    def test_big_omega(self):
        self.assertEqual(big_omega(1), 0)
        self.assertEqual(big_omega(72), 5)

    def test_count_in_range(self):
        self.assertEqual(count_prime_factors_in_range(2 * 3 * 17 * 17 * 101, 13, 100), 2)
        self.assertEqual(count_prime_factors_in_range(2 * 3 * 17 * 17 * 101, 13, 101), 3)
        with self.assertRaises(DomainError):
            count_prime_factors_in_range(10, 5, 2)

    def test_prime_factor_counts(self):
        counts = prime_factor_counts(300, 13, 100)
        for n in range(1, 301):
            self.assertEqual(counts[n], count_prime_factors_in_range(n, 13, 100))


class TestPrimeSum(unittest.TestCase):

    def test_principal_sum_of_reciprocals(self):
        total = prime_sum(character(1, 0), 0.0, 1.0, 30)
        expected = sum(1 / p for p in (2, 3, 5, 7, 11, 13, 17, 19, 23, 29))

        self.assertAlmostEqual(total.real, expected, places=14)
        self.assertEqual(total.imag, 0.0)

    def test_lower_bound_excludes(self):
        total = prime_sum(character(1, 0), 0.0, 2.0, 30, lo=13)
        expected = sum(p**-2 for p in (17, 19, 23, 29))

        self.assertAlmostEqual(total.real, expected, places=14)

    def test_character_vanishes_on_modulus(self):
        chi = character(5, 1)
        total = prime_sum(chi, 0.0, 1.0, 5)
        expected = chi(2) / 2 + chi(3) / 3

        self.assertAlmostEqual(total, expected, places=14)

    def test_twist(self):
        total = prime_sum(character(1, 0), 1.5, 1.0, 10)
        expected = sum(p ** complex(-1, -1.5) for p in (2, 3, 5, 7))

        self.assertAlmostEqual(total, expected, places=13)

    def test_empty_and_invalid(self):
        self.assertEqual(prime_sum(character(1, 0), 0.0, 1.0, 1.5), 0j)
        with self.assertRaises(DomainError):
            prime_sum(character(1, 0), 0.0, 0.0, 10)


@pytest.mark.slow
def test_sieve_at_capacity_scale():
    assert len(sieve_primes(10**8)) == 5761455
