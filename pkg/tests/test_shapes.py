import math
import unittest

from sclt.dirichlet_series import derive_params
from sclt.shapes import PAIR_SHAPES, ShapeContext, overall_shapes, theory_shape


def context(T, N=2, **kwargs):
    return ShapeContext(T=T, L=1.0, M=1.0, N=N, **kwargs)


class TestTheoryShape(unittest.TestCase):

    def test_every_pair_is_positive(self):
        for pair in PAIR_SHAPES:
            value = theory_shape(pair, context(1e100))
            self.assertGreater(value, 0, pair)
            self.assertTrue(math.isfinite(value))

    def test_unknown_pair(self):
        self.assertTrue(math.isnan(theory_shape(("X_T", "Z_tilde"), context(1e100))))

    def test_small_height(self):
        # log log log T <= 0 below e^e
        self.assertTrue(math.isnan(theory_shape(("Q_T", "R_T"), context(10.0))))

    def test_decay(self):
        for pair in [("Q_T", "R_T"), ("R_T", "R1_T"), ("Z_tilde", "X_tilde"), ("M_T_surrogate", "Q_T")]:
            self.assertLess(theory_shape(pair, context(1e300)), theory_shape(pair, context(1e50)), pair)

    def test_linear_in_constants(self):
        base = theory_shape(("Q_T", "R_T"), context(1e100))
        doubled = theory_shape(("Q_T", "R_T"), ShapeContext(T=1e100, L=2.0, M=1.0, N=2))
        self.assertAlmostEqual(doubled, 2 * base)

    def test_from_params(self):
        params = derive_params(1e100, K=30.0, K_prime=4.0)
        shape_context = ShapeContext.from_params(params, L=1.0, M=1.0, N=3)

        self.assertEqual(shape_context.K, 30.0)
        self.assertEqual(shape_context.K_prime, 4.0)
        self.assertEqual(shape_context.T, 1e100)


class TestOverallShapes(unittest.TestCase):

    def test_identity_depends_on_dimension(self):
        two = overall_shapes(context(1e100, N=2))
        three = overall_shapes(context(1e100, N=3))
        four = overall_shapes(context(1e100, N=4))

        self.assertGreater(three.identity, two.identity)
        self.assertTrue(math.isnan(four.identity))
        self.assertEqual(two.main_lipschitz, four.main_lipschitz)

    def test_main_parts(self):
        lll = math.log(math.log(math.log(1e100)))
        shapes = overall_shapes(context(1e100, eps1=0.2, eps2=0.6))

        self.assertAlmostEqual(shapes.main_lipschitz, lll**-0.2)
        self.assertAlmostEqual(shapes.main_bounded, math.exp(-0.5 * lll**0.8))

    def test_small_height(self):
        shapes = overall_shapes(context(10.0))
        self.assertTrue(math.isnan(shapes.main_lipschitz))
