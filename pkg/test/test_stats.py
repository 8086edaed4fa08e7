"""
Unit tests for the stats module
"""

import unittest
import numpy as np
from src.stats import (
    bound_gate,
    chi_square_gate,
    difference_gate,
    homogeneity_gate,
    ks_uniform_gate,
    seed_stream,
    z_gate,
)


class TestStats(unittest.TestCase):
    """
    Test class for stats module
    """

    def test_seed_stream(self):
        """
        Test that replicate seeds are reproducible and distinct
        """

        self.assertEqual(seed_stream(7, 3), seed_stream(7, 3))
        seeds = {seed_stream(7, i) for i in range(1000)}
        self.assertEqual(len(seeds), 1000)
        self.assertNotEqual(seed_stream(7, 0), seed_stream(8, 0))
        self.assertTrue(all(0 <= seed < 2**64 for seed in seeds))

    def test_z_gate(self):
        """
        Test the pass, fail and inconclusive outcomes of the mean gate
        """

        constant = z_gate("constant", [0.5] * 10, 0.5)
        self.assertEqual(constant.verdict, "Pass")
        self.assertEqual(constant.se, 0.0)

        rng = np.random.default_rng(0)
        samples = rng.normal(0.0, 1.0, 400)
        self.assertTrue(z_gate("centred", samples, 0.0).passed)
        shifted = z_gate("shifted", samples, 0.5)
        self.assertEqual(shifted.verdict, "Fail")
        self.assertLess(shifted.statistic, -4.0)
        self.assertTrue(z_gate("slack", samples, 0.5, slack=1.0).passed)

        single = z_gate("single", [1.0], 0.0)
        self.assertEqual(single.verdict, "Inconclusive")
        self.assertTrue(single.passed)
        self.assertEqual(single.samples, 1)

    def test_difference_gate(self):
        """
        Test paired differences against zero
        """

        self.assertTrue(difference_gate("same", [1.0, 2.0, 3.0], [1.0, 2.0, 3.0]).passed)
        self.assertFalse(difference_gate("apart", [1.0, 1.1, 0.9], [5.0, 5.0, 5.0]).passed)

    def test_chi_square_gate(self):
        """
        Test goodness of fit and counts in impossible categories
        """

        self.assertEqual(chi_square_gate("fair", [250, 250, 250, 250], [0.25] * 4).verdict, "Pass")
        self.assertEqual(chi_square_gate("skewed", [400, 200, 200, 200], [0.25] * 4).verdict, "Fail")
        impossible = chi_square_gate("impossible", [10, 1], [1.0, 0.0])
        self.assertEqual(impossible.verdict, "Fail")
        self.assertEqual(impossible.p_value, 0.0)
        self.assertEqual(chi_square_gate("single", [10, 0], [1.0, 0.0]).verdict, "Inconclusive")

    def test_homogeneity_gate(self):
        """
        Test the two-sample contingency gate
        """

        self.assertEqual(homogeneity_gate("same", [100, 200, 300], [110, 190, 300]).verdict, "Pass")
        self.assertEqual(homogeneity_gate("apart", [300, 100, 100], [100, 100, 300]).verdict, "Fail")
        self.assertEqual(homogeneity_gate("one", [10, 0], [12, 0]).verdict, "Inconclusive")

    def test_ks_uniform_gate(self):
        """
        Test the uniformity gate on uniform and concentrated samples
        """

        rng = np.random.default_rng(1)
        self.assertEqual(ks_uniform_gate("uniform", rng.random(500)).verdict, "Pass")
        self.assertEqual(ks_uniform_gate("low", rng.random(500) * 0.5).verdict, "Fail")
        self.assertEqual(ks_uniform_gate("empty", []).verdict, "Inconclusive")

    def test_bound_gate(self):
        """
        Test the deterministic bound
        """

        self.assertTrue(bound_gate("inside", 0.5, 1.0).passed)
        self.assertTrue(bound_gate("edge", 1.0, 1.0).passed)
        self.assertFalse(bound_gate("outside", 1.5, 1.0).passed)


if __name__ == "__main__":
    unittest.main()
