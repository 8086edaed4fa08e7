"""
Unit tests for the experiments module
"""

import csv
import json
import math
import tempfile
import unittest
from pathlib import Path
from src import mechanism
from src.errors import ConfigurationError
from src.experiments import expected_behaviours, map_replicates, run_experiment
from src.models import ExperimentConfig


def square(cfg: ExperimentConfig, index: int) -> int:
    return index * index + cfg.n


class TestExperiments(unittest.TestCase):
    """
    Test class for experiments module
    """

    def test_map_replicates(self):
        """
        Test that a pool returns the same results in replicate order
        """

        serial = ExperimentConfig(experiment="oracle", replicates=50, threads=1)
        pooled = ExperimentConfig(experiment="oracle", replicates=50, threads=2)
        self.assertEqual(map_replicates(square, serial), [i * i + 3 for i in range(50)])
        self.assertEqual(map_replicates(square, pooled), map_replicates(square, serial))
        self.assertEqual(map_replicates(square, serial, 3), [3, 4, 7])

    def test_oracle(self):
        """
        Test the subordinator oracle against its closed forms
        """

        report = run_experiment({"experiment": "oracle", "replicates": 4000, "threads": 1})
        self.assertTrue(report.passed)
        self.assertEqual(len(report.gates), 2 + 3)

    def test_laplace(self):
        """
        Test the Laplace functional of the Feller diffusion on a small grid
        """

        report = run_experiment(
            {
                "experiment": "laplace",
                "mechanism": "feller",
                "horizon": 0.5,
                "step": 0.005,
                "times": [0.5],
                "lambdas": [1.0],
                "replicates": 300,
                "threads": 1,
            }
        )
        self.assertTrue(report.passed)
        self.assertEqual(report.tables[0].columns[0], "t")
        self.assertEqual(len(report.tables[0].rows), 1)

    def test_single_replicate_is_inconclusive(self):
        """
        Test that one replicate cannot fail a mean gate
        """

        report = run_experiment(
            {
                "experiment": "laplace",
                "horizon": 0.5,
                "step": 0.01,
                "times": [0.5],
                "lambdas": [1.0],
                "replicates": 1,
                "threads": 1,
            }
        )
        self.assertEqual(report.gates[0].verdict, "Inconclusive")
        self.assertTrue(report.passed)

    def test_rate_continuity(self):
        """
        Test the deterministic rate sequences
        """

        report = run_experiment({"experiment": "rate_continuity", "threads": 1})
        self.assertTrue(report.passed)
        self.assertEqual(len(report.tables[0].rows), 100)

    def test_algebra(self):
        """
        Test that the algebraic identities hold on every instance
        """

        report = run_experiment(
            {
                "experiment": "algebra",
                "n": 6,
                "horizon": 0.2,
                "step": 0.002,
                "replicates": 3,
                "instances_per_replicate": 20,
                "threads": 1,
            }
        )
        self.assertTrue(report.passed)
        self.assertEqual([gate.statistic for gate in report.gates], [0.0, 0.0])

    def test_classify(self):
        """
        Test that a subcritical drift never dies
        """

        report = run_experiment(
            {
                "experiment": "classify",
                "mechanism": "pure_drift",
                "horizon": 2.0,
                "step": 0.01,
                "replicates": 5,
                "threads": 1,
            }
        )
        self.assertTrue(report.passed)
        self.assertEqual(report.tables[0].rows, [["InfLifeNoExtinct", False, 5]])

    def test_dust(self):
        """
        Test the dust of unit atoms against the product over jumps
        """

        report = run_experiment(
            {
                "experiment": "dust",
                "mechanism": "compound_poisson",
                "horizon": 1.0,
                "step": 0.01,
                "n": 200,
                "replicates": 20,
                "threads": 1,
            }
        )
        self.assertTrue(report.passed)
        self.assertEqual(report.gates[0].name, "dust_matches_jumps")

    def gate_names(self, report) -> set[str]:
        return {gate.name for gate in report.gates}

    def test_extinction(self):
        """
        Test P(Z_t = 0) of the Feller diffusion against exp(-1/t)
        """

        report = run_experiment(
            {
                "experiment": "extinction",
                "mechanism": "feller",
                "horizon": 1.0,
                "step": 0.002,
                "times": [0.5, 1.0],
                "replicates": 400,
                "threads": 1,
            }
        )
        self.assertTrue(report.passed)
        self.assertEqual(self.gate_names(report), {"extinction_t=0.5", "extinction_t=1"})
        self.assertAlmostEqual(report.tables[0].rows[1][3], math.exp(-1.0))

    def test_compensator(self):
        """
        Test the merger counts of three levels against their compensators
        """

        report = run_experiment(
            {
                "experiment": "compensator",
                "mechanism": "feller",
                "n": 3,
                "horizon": 0.5,
                "step": 0.002,
                "replicates": 200,
                "threads": 1,
            }
        )
        self.assertTrue(report.passed)
        self.assertIn("compensator_n=3_K=123", self.gate_names(report))
        self.assertIn("exchangeable_n=3_size=2", self.gate_names(report))
        self.assertEqual(len(report.tables[0].rows), 4)

    def test_paintbox_marginal(self):
        """
        Test the partition between 0 and t against the subordinator paint-box
        """

        report = run_experiment(
            {
                "experiment": "paintbox_marginal",
                "mechanism": "feller",
                "n": 3,
                "horizon": 0.5,
                "step": 0.002,
                "replicates": 400,
                "threads": 1,
            }
        )
        self.assertTrue(report.passed)
        self.assertTrue(
            {"paintbox_marginal_n=3", "paintbox_exchangeable_n=3", "oracle_mean_total"}
            <= self.gate_names(report)
        )
        self.assertEqual(len(report.tables[0].rows), 5)

    def test_eve(self):
        """
        Test that dying Feller paths show an Eve carried by the lowest level
        """

        report = run_experiment(
            {
                "experiment": "eve",
                "mechanism": "feller",
                "n": 20,
                "horizon": 20.0,
                "step": 0.001,
                "replicates": 30,
                "threads": 1,
            }
        )
        self.assertTrue(report.passed)
        self.assertTrue(
            {"eve_criterion_agrees_with_weights", "eve_detected", "eve_location_uniform"}
            <= self.gate_names(report)
        )

        report = run_experiment(
            {
                "experiment": "eve",
                "mechanism": "pure_drift",
                "n": 10,
                "horizon": 2.0,
                "step": 0.01,
                "replicates": 5,
                "threads": 1,
            }
        )
        self.assertTrue(report.passed)
        self.assertIn("eve_bounded", self.gate_names(report))

    def test_decomposition(self):
        """
        Test the level-n measure against the reconstruction on a few surviving paths
        """

        report = run_experiment(
            {
                "experiment": "decomposition",
                "mechanism": "feller",
                "n": 40,
                "level": 10,
                "horizon": 0.25,
                "step": 0.001,
                "replicates": 5,
                "threads": 1,
            }
        )
        self.assertTrue(report.passed)
        self.assertEqual(
            self.gate_names(report), {"decomposition_tv", "persistence_mismatches"}
        )
        self.assertTrue(all(row[2] for row in report.tables[0].rows))

    def test_lamperti(self):
        """
        Test the Lamperti round trip on jump paths
        """

        report = run_experiment(
            {
                "experiment": "lamperti",
                "mechanism": "neveu_feller",
                "horizon": 0.5,
                "step": 0.001,
                "jump_truncation": 0.01,
                "replicates": 3,
                "threads": 1,
            }
        )
        self.assertTrue(report.passed)
        self.assertEqual(len(report.gates), 3)

    def test_configuration_errors(self):
        """
        Test the experiments that refuse a configuration
        """

        with self.assertRaises(ConfigurationError):
            run_experiment({"experiment": "compensator", "n": 13, "threads": 1})
        with self.assertRaises(ConfigurationError):
            run_experiment({"experiment": "paintbox_marginal", "mechanism": "neveu", "threads": 1})
        with self.assertRaises(ConfigurationError):
            run_experiment({"experiment": "paintbox_marginal", "n": 7, "threads": 1})

    def test_expected_behaviours(self):
        """
        Test the behaviours each reference mechanism allows
        """

        self.assertEqual(expected_behaviours(mechanism.negative_sqrt()), {"Explosion"})
        self.assertEqual(expected_behaviours(mechanism.pure_drift()), {"InfLifeNoExtinct"})
        self.assertEqual(expected_behaviours(mechanism.neveu()), {"InfLifeNoExtinct"})
        self.assertEqual(expected_behaviours(mechanism.feller()), {"Extinction"})
        self.assertEqual(
            expected_behaviours(mechanism.neveu_feller()),
            {"Extinction", "InfLifePossibleExtinct"},
        )

    def test_report_files(self):
        """
        Test that reruns write byte-identical reports whatever the thread count
        """

        config = {
            "experiment": "algebra",
            "n": 5,
            "horizon": 0.2,
            "step": 0.002,
            "replicates": 4,
            "instances_per_replicate": 5,
        }
        with tempfile.TemporaryDirectory() as directory:
            first, second = Path(directory) / "first", Path(directory) / "second"
            run_experiment({**config, "threads": 1}, first)
            run_experiment({**config, "threads": 2}, second)
            self.assertEqual(
                (first / "report.json").read_bytes(), (second / "report.json").read_bytes()
            )
            report = json.loads((first / "report.json").read_text())
            self.assertTrue(report["passed"])
            self.assertNotIn("threads", report["config"])

            run_experiment({"experiment": "rate_continuity", "threads": 1}, first)
            with open(first / "rate_continuity.csv") as handle:
                rows = list(csv.reader(handle))
            self.assertEqual(rows[0], ["k", "diffusion_rate", "closed_form", "atom_rate"])
            self.assertEqual(len(rows), 101)


if __name__ == "__main__":
    unittest.main()
