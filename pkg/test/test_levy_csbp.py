"""
Unit tests for the levy_csbp module
"""

import csv
import math
import tempfile
import unittest
from pathlib import Path
import numpy as np
from src import mechanism
from src.errors import ConfigurationError, DomainError
from src.levy_csbp import (
    CsbpPath,
    LevyPath,
    Lifetime,
    diffusion_integral,
    jump_square_sum,
    lamperti_forward,
    lamperti_inverse,
    scale_initial_mass,
    simulate_csbp,
    simulate_levy,
    stopping_time_T_eps,
    write_jumps_csv,
    write_trajectory_csv,
)
from src.mechanism import BranchingMechanism
from src.measures import StableDensity
from src.stats import seed_stream


def make_path(times, values, jump_index=(), kind="Alive", m=None) -> CsbpPath:
    times = np.asarray(times, dtype=float)
    return CsbpPath(
        times=times,
        values=np.asarray(values, dtype=float),
        clock=times.copy(),
        jump_index=np.asarray(jump_index, dtype=np.int64),
        lifetime=Lifetime(kind=kind, time=float(times[-1])),
        horizon=float(times[-1]),
        mechanism=m,
    )


class TestLevyCsbp(unittest.TestCase):
    """
    Test class for levy_csbp module
    """

    def test_pure_drift_levy(self):
        """
        Test that Y_t = 1 + t when alpha = -1 and there is no noise
        """

        g = simulate_levy(BranchingMechanism(alpha=-1.0), 1.0, 0.01, seed=0)
        self.assertAlmostEqual(g.value_at(0.5), 1.5, places=9)
        self.assertAlmostEqual(float(g.values[-1]), 2.0, places=9)
        self.assertEqual(len(g.jump_index), 0)

    def test_grid_times(self):
        """
        Test that skeleton times sit on multiples of the step without drift
        """

        g = simulate_levy(BranchingMechanism(alpha=-1.0), 1.0, 0.1, seed=0)
        self.assertEqual(g.times.tolist(), [k * 0.1 for k in range(11)])
        for k in range(11):
            self.assertAlmostEqual(g.value_at(k / 10), 1.0 + k / 10, places=9)
        g = simulate_levy(BranchingMechanism(alpha=-1.0), 0.95, 0.1, seed=0)
        self.assertEqual(g.times[-1], 0.95)
        self.assertAlmostEqual(float(g.values[-1]), 1.95, places=9)

    def test_brownian_variance(self):
        """
        Test that the Brownian part has variance sigma^2 t
        """

        m = BranchingMechanism(alpha=-10.0, sigma=math.sqrt(2.0))
        ends = np.array(
            [simulate_levy(m, 0.5, 0.05, seed=seed_stream(1, i)).values[-1] for i in range(4000)]
        )
        variance = float(ends.var(ddof=1))
        se = variance * math.sqrt(2.0 / (len(ends) - 1))
        self.assertLessEqual(abs(variance - 1.0), 4.0 * se)

    def test_compound_poisson_jump_count(self):
        """
        Test that jumps of a unit atom arrive at rate one
        """

        m = mechanism.compound_poisson()
        counts = np.array(
            [len(simulate_levy(m, 1.0, 0.01, seed=seed_stream(2, i)).jump_index) for i in range(4000)]
        )
        se = counts.std(ddof=1) / math.sqrt(len(counts))
        self.assertLessEqual(abs(counts.mean() - 1.0), 4.0 * se)

    def test_simulate_levy_rejects_bad_input(self):
        """
        Test the configuration errors of the Lévy simulator
        """

        with self.assertRaises(ConfigurationError):
            simulate_levy(mechanism.feller(), 1.0, 0.0)
        with self.assertRaises(ConfigurationError):
            simulate_levy(mechanism.feller(), 1.0, 0.01, jump_truncation=2.0)

    def test_constant_path(self):
        """
        Test that a constant path c is slowed down by c
        """

        g = LevyPath(
            times=np.array([0.0, 1.0, 2.0]),
            values=np.array([2.0, 2.0, 2.0]),
            jump_index=np.empty(0, dtype=np.int64),
        )
        p = lamperti_inverse(g)
        np.testing.assert_allclose(p.times, [0.0, 0.5, 1.0])
        np.testing.assert_allclose(p.values, 2.0)
        self.assertEqual(p.lifetime.kind, "Alive")

    def test_round_trip(self):
        """
        Test that L(L^-1(g)) gives back g
        """

        m = mechanism.neveu_feller()
        g = simulate_levy(m, 1.0, 0.001, 0.01, seed=5)
        back = lamperti_forward(lamperti_inverse(g, mechanism=m))
        np.testing.assert_allclose(back.times, g.times, rtol=1e-9, atol=1e-12)
        np.testing.assert_array_equal(back.values, g.values)
        np.testing.assert_array_equal(back.jump_index, g.jump_index)

    def test_time_changed_drift(self):
        """
        Test that Y = 1 + t becomes Z_t = e^t
        """

        g = simulate_levy(BranchingMechanism(alpha=-1.0), 3.0, 0.001, seed=0)
        p = lamperti_inverse(g)
        for t in (0.2, 0.5, 1.0):
            self.assertAlmostEqual(p.value_at(t), math.exp(t), delta=5e-3 * math.exp(t))

    def test_lamperti_inverse_rejects_nonpositive_start(self):
        """
        Test that a path must start above 0
        """

        g = LevyPath(
            times=np.array([0.0, 1.0]),
            values=np.array([0.0, 1.0]),
            jump_index=np.empty(0, dtype=np.int64),
        )
        with self.assertRaises(DomainError):
            lamperti_inverse(g)

    def test_subcritical_drift_csbp(self):
        """
        Test that Psi(u) = u gives Z_t = e^-t and never counts the floor as extinction
        """

        p = simulate_csbp(mechanism.pure_drift(), 1.0, 0.001, seed=0)
        self.assertAlmostEqual(p.value_at(1.0), math.exp(-1.0), delta=5e-3)
        self.assertEqual(p.lifetime.kind, "Alive")
        long = simulate_csbp(mechanism.pure_drift(), 40.0, 0.01, seed=0)
        self.assertEqual(long.lifetime.kind, "Alive")

    def test_feller_laplace_and_extinction(self):
        """
        Test E[exp(-Z_1)] and P(Z_1 = 0) for the Feller diffusion
        """

        m = mechanism.feller()
        paths = [simulate_csbp(m, 1.0, 0.002, seed=seed_stream(3, i)) for i in range(600)]
        values = np.array([p.value_at(1.0) for p in paths])
        laplace = np.exp(-values)
        se = laplace.std(ddof=1) / math.sqrt(len(paths))
        self.assertLessEqual(abs(laplace.mean() - math.exp(-0.5)), 4.0 * se + 0.006)
        extinct = values == 0.0
        se = extinct.std(ddof=1) / math.sqrt(len(paths))
        self.assertLessEqual(abs(extinct.mean() - math.exp(-1.0)), 4.0 * se + 0.006)
        for p in paths:
            if p.lifetime.kind == "Extinct":
                self.assertEqual(float(p.values[-1]), 0.0)
                self.assertEqual(p.value_at(p.end + 1.0), 0.0)

    def test_jumps_preserved(self):
        """
        Test that the time change keeps every jump size
        """

        m = BranchingMechanism(alpha=0.5, nu=StableDensity(index=1.5))
        g = simulate_levy(m, 2.0, 0.001, 0.01, seed=9, clock="lamperti")
        p = lamperti_inverse(g, mechanism=m)
        np.testing.assert_array_equal(np.sort(g.jump_sizes), np.sort(p.jump_sizes))
        self.assertTrue(np.all(g.jump_sizes >= 0.01))
        fractions = p.jump_fractions
        self.assertTrue(np.all((fractions > 0.0) & (fractions < 1.0)))
        self.assertTrue(np.all(np.diff(p.jump_times) > 0.0))

    def test_horizon_truncation(self):
        """
        Test that a path longer than the horizon is cut there and left alive
        """

        g = simulate_levy(BranchingMechanism(alpha=-1.0), 3.0, 0.01, seed=0)
        p = lamperti_inverse(g, horizon=0.5)
        self.assertEqual(p.end, 0.5)
        self.assertEqual(p.lifetime, Lifetime(kind="Alive", time=0.5))

    def test_explosion(self):
        """
        Test that Psi(u) = -sqrt(u) runs into the ceiling and is marked exploded
        """

        p = simulate_csbp(
            mechanism.negative_sqrt(), 10.0, 0.001, 0.001, seed=4, explosion_ceiling=1e4
        )
        if p.lifetime.kind == "Exploded":
            self.assertGreaterEqual(float(p.values[-1]), 1e4)
        else:
            self.assertEqual(p.lifetime.kind, "Alive")

    def test_stopping_time(self):
        """
        Test T(eps) on hand-made paths
        """

        self.assertEqual(stopping_time_T_eps(make_path([0.0, 1.0], [1.0, 1.0]), 0.5), 1.0)
        jump = make_path([0.0, 0.4, 1.0], [1.0, 3.0, 3.0], [1])
        self.assertEqual(stopping_time_T_eps(jump, 0.5), 0.4)
        with self.assertRaises(DomainError):
            stopping_time_T_eps(jump, 1.5)
        m = mechanism.feller()
        for i in range(20):
            p = simulate_csbp(m, 5.0, 0.001, seed=seed_stream(4, i))
            stop = stopping_time_T_eps(p, 0.9)
            self.assertGreater(stop, 0.0)
            self.assertTrue(math.isfinite(stop))

    def test_jump_square_sum(self):
        """
        Test the sum of squared rescaled jumps up to t
        """

        p = make_path([0.0, 0.2, 0.5, 0.7, 1.0], [1.0, 2.0, 2.0, 4.0, 4.0], [1, 3])
        self.assertAlmostEqual(jump_square_sum(p, 1.0), 0.5)
        self.assertAlmostEqual(jump_square_sum(p, 0.6), 0.25)
        self.assertAlmostEqual(jump_square_sum(p, 1.0, eps=0.6), 0.25)

    def test_truncation_stability(self):
        """
        Test that the mean sum of squared relative jumps barely moves when the truncation halves
        """

        m = mechanism.neveu_feller()
        means, ses = [], []
        for stream, truncation in ((3, 0.02), (4, 0.01)):
            sums = np.array(
                [
                    jump_square_sum(
                        simulate_csbp(m, 0.5, 0.001, truncation, seed_stream(stream, i)),
                        0.5,
                        eps=0.2,
                    )
                    for i in range(300)
                ]
            )
            self.assertTrue(np.all(np.isfinite(sums)))
            means.append(float(sums.mean()))
            ses.append(float(sums.std(ddof=1) / math.sqrt(len(sums))))
        gap = abs(means[0] - means[1])
        self.assertLessEqual(gap, 0.1 * max(means) + 4.0 * math.hypot(*ses))

    def test_diffusion_integral(self):
        """
        Test the integral of sigma^2 / Z on a step path
        """

        p = make_path([0.0, 0.5, 1.0], [1.0, 2.0, 2.0])
        self.assertAlmostEqual(diffusion_integral(p, math.sqrt(2.0)), 1.5)
        self.assertAlmostEqual(diffusion_integral(p, math.sqrt(2.0), 0.5), 1.0)

    def test_scale_initial_mass(self):
        """
        Test the scaling of a quadratic CSBP path to another initial mass
        """

        p = make_path([0.0, 0.5, 1.0], [1.0, 2.0, 0.0], kind="Extinct")
        q = scale_initial_mass(p, 2.0)
        np.testing.assert_allclose(q.times, [0.0, 1.0, 2.0])
        np.testing.assert_allclose(q.values, [2.0, 4.0, 0.0])
        self.assertEqual(q.lifetime, Lifetime(kind="Extinct", time=2.0))
        with self.assertRaises(DomainError):
            scale_initial_mass(p, 0.0)

    def test_csv_exports(self):
        """
        Test the trajectory and jump CSV files
        """

        p = make_path([0.0, 0.2, 0.5, 0.7, 1.0], [1.0, 2.0, 2.0, 4.0, 4.0], [1, 3])
        with tempfile.TemporaryDirectory() as directory:
            write_trajectory_csv(p, Path(directory) / "trajectory.csv")
            write_jumps_csv(p, Path(directory) / "jumps.csv")
            with open(Path(directory) / "trajectory.csv") as handle:
                rows = list(csv.reader(handle))
            self.assertEqual(rows[0], ["time", "Z"])
            self.assertEqual(len(rows), 6)
            with open(Path(directory) / "jumps.csv") as handle:
                rows = list(csv.reader(handle))
            self.assertEqual(rows[0], ["s", "delta", "Z_minus", "Z"])
            self.assertEqual([float(v) for v in rows[1]], [0.2, 1.0, 1.0, 2.0])


if __name__ == "__main__":
    unittest.main()
