"""
Unit tests for the genealogy_flow module
"""

import csv
import json
import math
import tempfile
import unittest
from pathlib import Path
import numpy as np
from src import mechanism
from src.errors import DomainError
from src.genealogy_flow import (
    JUMP,
    KINGMAN,
    PartitionFlow,
    ReproductionEvent,
    build_flow,
    compensator_integral,
    count_events,
    counting_processes,
    empty_flow,
    merger_subsets,
    partition_between,
    rate_continuity_check,
    rate_lambda,
    restrict_flow,
    write_counting_csv,
    write_event_log,
)
from src.levy_csbp import CsbpPath, Lifetime, simulate_csbp
from src.measures import FiniteAtoms
from src.mechanism import BranchingMechanism
from src.partitions import coag, from_blocks, identity, restrict
from src.stats import seed_stream


def make_path(times, values, jump_index=(), m=None) -> CsbpPath:
    times = np.asarray(times, dtype=float)
    return CsbpPath(
        times=times,
        values=np.asarray(values, dtype=float),
        clock=times.copy(),
        jump_index=np.asarray(jump_index, dtype=np.int64),
        lifetime=Lifetime(kind="Alive", time=float(times[-1])),
        horizon=float(times[-1]),
        mechanism=m,
    )


def make_flow(n, events, horizon=1.0) -> PartitionFlow:
    """
    A flow from (time, block) pairs; blocks of two are Kingman events.
    """

    blocks = [np.asarray(block, dtype=np.int64) for _, block in events]
    sizes = [len(block) for block in blocks]
    return PartitionFlow(
        n=n,
        horizon=horizon,
        times=np.asarray([t for t, _ in events], dtype=float),
        kinds=np.asarray([KINGMAN if size == 2 else JUMP for size in sizes], dtype=np.int8),
        offsets=np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64),
        members=np.concatenate(blocks) if blocks else np.empty(0, dtype=np.int64),
        fractions=np.asarray([math.nan if size == 2 else 0.5 for size in sizes]),
    )


ATOM = BranchingMechanism(nu=FiniteAtoms(atoms=[(1.0, 1.0)]))


class TestGenealogyFlow(unittest.TestCase):
    """
    Test class for genealogy_flow module
    """

    def test_partition_between(self):
        """
        Test the composition of hand-made events
        """

        f = make_flow(3, [(0.2, [1, 2]), (0.6, [2, 3])])
        self.assertEqual(partition_between(f, 0.5, 0.5), identity(3))
        self.assertEqual(partition_between(f, 0.5, 1.0), from_blocks([[1], [2, 3]]))
        self.assertEqual(partition_between(f, 0.0, 1.0), from_blocks([[1, 2, 3]]))
        g = make_flow(3, [(0.2, [2, 3]), (0.6, [1, 2])])
        self.assertEqual(partition_between(g, 0.0, 1.0), from_blocks([[1, 2], [3]]))
        with self.assertRaises(DomainError):
            partition_between(f, 0.6, 0.2)

    def test_event_at_boundary(self):
        """
        Test that the window is open on the left and closed on the right
        """

        f = make_flow(2, [(0.5, [1, 2])])
        self.assertEqual(partition_between(f, 0.5, 1.0), identity(2))
        self.assertEqual(partition_between(f, 0.0, 0.5), from_blocks([[1, 2]]))

    def test_cocycle(self):
        """
        Test Pi_{r,t} = Coag(Pi_{s,t}, Pi_{r,s}) on a simulated flow
        """

        p = simulate_csbp(mechanism.neveu_feller(), 0.5, 0.001, 0.01, seed=2)
        f = build_flow(p, 8, seed=3)
        rng = np.random.default_rng(5)
        for _ in range(100):
            r, s, t = np.sort(rng.uniform(0.0, f.horizon, 3))
            self.assertEqual(
                partition_between(f, r, t),
                coag(partition_between(f, s, t), partition_between(f, r, s)),
            )

    def test_restrict_flow(self):
        """
        Test that restriction drops members above m and events that become trivial
        """

        f = make_flow(4, [(0.2, [1, 3]), (0.4, [2, 3, 4])])
        g = restrict_flow(f, 3)
        self.assertEqual(g.event_count, 2)
        self.assertEqual(g.block(1).tolist(), [2, 3])
        self.assertEqual(restrict_flow(f, 2).event_count, 0)
        with self.assertRaises(DomainError):
            restrict_flow(f, 5)

    def test_restriction_commutes_with_composition(self):
        """
        Test that restricting the flow restricts its partitions
        """

        p = simulate_csbp(mechanism.feller(), 0.3, 0.001, seed=6)
        f = build_flow(p, 10, seed=7)
        for m in (2, 5, 9):
            self.assertEqual(
                partition_between(restrict_flow(f, m), 0.0, f.horizon),
                restrict(partition_between(f, 0.0, f.horizon), m),
            )

    def test_event_validation(self):
        """
        Test the constraints on a single reproduction event
        """

        event = ReproductionEvent(n=4, time=0.1, kind="jump", block=(1, 2, 4), x=0.5)
        self.assertEqual(event.partition, from_blocks([[1, 2, 4], [3]]))
        self.assertEqual(event.record().block, [1, 2, 4])
        with self.assertRaises(ValueError):
            ReproductionEvent(n=4, time=0.1, kind="kingman", block=(1, 2, 3))
        with self.assertRaises(ValueError):
            ReproductionEvent(n=4, time=0.1, kind="jump", block=(1, 2))
        with self.assertRaises(ValueError):
            ReproductionEvent(n=4, time=0.1, kind="kingman", block=(2, 5))

    def test_flow_without_noise_is_empty(self):
        """
        Test that a path without diffusion or jumps carries no events
        """

        p = simulate_csbp(mechanism.pure_drift(), 1.0, 0.01, seed=0)
        self.assertEqual(build_flow(p, 5, seed=0).event_count, 0)

    def test_single_jump_retention(self):
        """
        Test that a jump with x = 1/2 merges both of two levels with probability 1/4
        """

        p = make_path([0.0, 0.5, 1.0], [1.0, 2.0, 2.0], [1], ATOM)
        self.assertAlmostEqual(float(p.jump_fractions[0]), 0.5)
        kept = np.array([build_flow(p, 2, seed=seed_stream(8, i)).event_count for i in range(20000)])
        se = kept.std(ddof=1) / math.sqrt(len(kept))
        self.assertLessEqual(abs(kept.mean() - 0.25), 4.0 * se)

    def test_kingman_count(self):
        """
        Test that sigma^2 = 2 on Z = 2 gives one Kingman event per unit time at n = 2
        """

        p = make_path([0.0, 0.5, 1.0], [2.0, 2.0, 2.0], m=mechanism.feller())
        counts = np.array([build_flow(p, 2, seed=seed_stream(9, i)).event_count for i in range(4000)])
        se = counts.std(ddof=1) / math.sqrt(len(counts))
        self.assertLessEqual(abs(counts.mean() - 1.0), 4.0 * se)

    def test_jump_at_stopping_time(self):
        """
        Test that a flow stopped at a jump time keeps that jump
        """

        p = make_path([0.0, 0.4, 1.0], [1.0, 100.0, 100.0], [1], ATOM)
        flows = [build_flow(p, 2, seed=i, until=0.4) for i in range(20)]
        self.assertTrue(all(f.horizon == 0.4 for f in flows))
        self.assertTrue(any(f.event_count == 1 for f in flows))
        self.assertTrue(all(np.all(f.times <= 0.4) for f in flows))

    def test_build_flow_rejects_bad_input(self):
        """
        Test the domain and configuration errors of build_flow
        """

        p = make_path([0.0, 1.0], [1.0, 1.0])
        with self.assertRaises(ValueError):
            build_flow(p, 4)
        with self.assertRaises(DomainError):
            build_flow(make_path([0.0, 1.0], [1.0, 1.0], m=ATOM), 1)

    def test_counting_processes(self):
        """
        Test L_t(n, K) on one Kingman event and on the empty flow
        """

        f = make_flow(3, [(0.2, [1, 3])])
        processes = counting_processes(f)
        self.assertEqual(len(processes), 4)
        self.assertEqual(processes[(1, 3)].value_at(0.1), 0)
        self.assertEqual(processes[(1, 3)].value_at(0.2), 1)
        self.assertEqual(processes[(1, 2, 3)].value_at(1.0), 0)
        self.assertTrue(all(c.value_at(1.0) == 0 for c in counting_processes(empty_flow(3, 1.0)).values()))
        self.assertEqual(len(list(merger_subsets(5))), 2**5 - 5 - 1)

    def test_count_events(self):
        """
        Test the total and per-size event counts
        """

        f = make_flow(4, [(0.2, [1, 3]), (0.4, [2, 3, 4]), (0.7, [1, 2])])
        self.assertEqual(count_events(f, 1.0), 3)
        self.assertEqual(count_events(f, 0.5), 2)
        self.assertEqual(count_events(f, 1.0, size=2), 2)
        self.assertEqual(count_events(f, 1.0, size=3), 1)

    def test_rate_lambda(self):
        """
        Test lambda_{n,k} on the diffusion and single-atom cases
        """

        self.assertAlmostEqual(rate_lambda(2, 2, 1.0, mechanism.feller()), 2.0)
        self.assertAlmostEqual(rate_lambda(7, 2, 1.0, mechanism.feller()), 2.0)
        self.assertEqual(rate_lambda(3, 3, 1.0, mechanism.feller()), 0.0)
        self.assertAlmostEqual(rate_lambda(2, 2, 1.0, ATOM), 0.25)
        with self.assertRaises(DomainError):
            rate_lambda(2, 3, 1.0, ATOM)
        with self.assertRaises(DomainError):
            rate_lambda(2, 2, 0.0, ATOM)

    def test_compensator_integral(self):
        """
        Test the integral of the rates along a step path
        """

        p = make_path([0.0, 0.5, 1.0], [2.0, 1.0, 1.0])
        self.assertAlmostEqual(compensator_integral(p, 2, 2, mechanism.feller(), 1.0), 1.5)
        self.assertAlmostEqual(compensator_integral(p, 2, 2, mechanism.feller(), 0.5), 0.5)
        self.assertAlmostEqual(compensator_integral(p, 2, 2, ATOM, 1.0), 2.0 / 9.0 * 0.5 + 0.25 * 0.5)

    def test_rate_continuity_check(self):
        """
        Test the continuity check on a constant sequence and a converging diffusion sequence
        """

        constant = rate_continuity_check(2, 2, lambda m: (1.0, ATOM), (1.0, ATOM), terms=range(1, 11))
        self.assertEqual(constant.max_tail_deviation, 0.0)
        self.assertFalse(constant.flagged)

        def diffusion(m: int) -> tuple[float, BranchingMechanism]:
            return 1.0 + 1.0 / m, BranchingMechanism(sigma=math.sqrt(2.0 + 1.0 / m))

        report = rate_continuity_check(2, 2, diffusion, (1.0, mechanism.feller()))
        self.assertAlmostEqual(report.limit, 2.0)
        for term, value in zip(report.terms, report.values):
            self.assertAlmostEqual(value, (2.0 + 1.0 / term) / (1.0 + 1.0 / term), delta=1e-9)
        self.assertLessEqual(report.deviations[-1], 1e-2)
        self.assertTrue(report.monotone)
        self.assertFalse(report.flagged)

    def test_writers(self):
        """
        Test the event log and the counting CSV
        """

        f = make_flow(3, [(0.2, [1, 3]), (0.4, [1, 2, 3])])
        with tempfile.TemporaryDirectory() as directory:
            write_event_log(f, Path(directory) / "events.jsonl")
            write_counting_csv(f, Path(directory) / "counting.csv")
            with open(Path(directory) / "events.jsonl") as handle:
                records = [json.loads(line) for line in handle]
            self.assertEqual(records[0], {"t": 0.2, "kind": "kingman", "block": [1, 3], "x": None})
            self.assertEqual(records[1]["kind"], "jump")
            with open(Path(directory) / "counting.csv") as handle:
                rows = list(csv.reader(handle))
            self.assertEqual(rows[0], ["t", "subset", "count"])
            self.assertEqual(rows[1], ["0.2", "1,3", "1"])


if __name__ == "__main__":
    unittest.main()
