import math
import unittest
from fractions import Fraction

import numpy as np

from sclt.characters import (
    character,
    character_group,
    character_sum,
    euler_phi,
    evaluate,
    pair_delta,
    principal_character,
    root_of_unity,
)
from sclt.errors import CapacityError, DomainError


class TestCharacterGroup(unittest.TestCase):

    def test_group_sizes(self):
        for q in (1, 2, 3, 4, 5, 8, 12, 16, 45, 100):
            self.assertEqual(len(character_group(q)), euler_phi(q))

    def test_principal_first(self):
        for q in (3, 8, 15):
            self.assertTrue(character_group(q)[0].principal)
            self.assertFalse(any(chi.principal for chi in character_group(q)[1:]))

    def test_mod_5_generator_values(self):
        chi = character(5, 1)
        self.assertEqual(chi(2), 1j)
        self.assertEqual(chi(3), -1j)
        self.assertEqual(chi(5), 0j)
        self.assertEqual(chi.order, 4)

    def test_quadratic_mod_5_is_legendre(self):
        chi = character(5, 2)
        self.assertEqual([chi(n) for n in range(1, 6)], [1, -1, -1, 1, 0])
        self.assertEqual(chi.order, 2)

    def test_single_character_matches_group(self):
        for q in (8, 24, 35):
            for index, chi in enumerate(character_group(q)):
                self.assertEqual(character(q, index), chi)

    def test_complete_multiplicativity(self):
        for chi in character_group(24):
            for m in range(1, 30):
                for n in range(1, 30):
                    self.assertAlmostEqual(chi(m * n), chi(m) * chi(n), places=12)

    def test_orthogonality(self):
        group = character_group(20)
        for i, chi in enumerate(group):
            for j, psi in enumerate(group):
                total = sum(chi(r) * psi(r).conjugate() for r in range(20))
                expected = euler_phi(20) if i == j else 0
                self.assertAlmostEqual(abs(total - expected), 0.0, places=10)

    def test_invalid_modulus(self):
        with self.assertRaises(DomainError):
            character_group(0)
        with self.assertRaises(CapacityError):
            character_group(5001)

    def test_invalid_index(self):
        with self.assertRaises(DomainError):
            character(5, 4)

    def test_large_modulus_single_character(self):
        chi = character(100003, 1)
        self.assertEqual(chi.modulus, 100003)
        self.assertAlmostEqual(abs(chi(2)), 1.0)


def test_modulus_one_is_trivial():
    chi = principal_character()

    assert chi.principal
    assert chi(0) == 1
    assert chi.values([1, 2, 3]).tolist() == [1, 1, 1]


def test_values_are_vectorised_evaluate():
    chi = character(13, 5)
    n = np.arange(0, 40)

    np.testing.assert_array_equal(chi.values(n), [evaluate(chi, int(k)) for k in n])


def test_conjugate_and_product():
    chi = character(7, 1)

    assert (chi * chi.conjugate()).principal
    assert chi.conjugate().conjugate() == chi
    assert (chi * chi).order == chi.order // math.gcd(chi.order, 2)


def test_pair_delta():
    assert pair_delta(character(5, 1), character(5, 1)) == 1
    assert pair_delta(character(5, 1), character(5, 3)) == 0
    assert pair_delta(character(3, 0), character(5, 0)) == 1
    assert pair_delta(character(4, 1), character(8, 1)) in (0, 1)


def test_pair_delta_induced_characters():
    # the character mod 4 and the one it induces mod 8 agree on odd residues
    chi_4 = character(4, 1)
    induced = [chi for chi in character_group(8) if all(chi(r) == chi_4(r) for r in (1, 3, 5, 7))]

    assert len(induced) == 1
    assert pair_delta(chi_4, induced[0]) == 1


def test_character_sum():
    assert character_sum(character(9, 0)) == 6
    assert all(character_sum(chi) == 0 for chi in character_group(9)[1:])


def test_exact_roots():
    assert root_of_unity(Fraction(1, 2)) == -1
    assert root_of_unity(Fraction(5, 4)) == 1j
    assert abs(root_of_unity(Fraction(1, 3)) - complex(-0.5, math.sqrt(3) / 2)) < 1e-15
