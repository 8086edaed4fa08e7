"""
The experiment harness: replicate loops, statistical gates and report files.

Each experiment is a runner in the ``experiments`` registry. Replicates are
independent and seeded from the master seed by SeedSequence spawning, so a
report only depends on its configuration and never on the thread count.
"""

import csv
import logging
import math
from collections import Counter
from collections.abc import Callable
from concurrent.futures import ProcessPoolExecutor
from itertools import repeat
from pathlib import Path
from typing import Any
import numpy as np
from pydantic import BaseModel
from src import partitions
from src.errors import ConfigurationError
from src.genealogy_flow import (
    MAX_ENUMERATED_LEVEL,
    build_flow,
    compensator_integral,
    counting_processes,
    partition_between,
    rate_continuity_check,
)
from src.levy_csbp import (
    lamperti_forward,
    lamperti_inverse,
    simulate_levy,
    stopping_time_T_eps,
)
from src.lookdown_eve import (
    check_eve_criterion,
    classify_behaviour,
    decomposition_check,
    dust_frequency_check,
    empirical_measure,
    eve_estimate,
    run_lookdown,
)
from src.measures import NoMeasure
from src.mechanism import (
    BranchingMechanism,
    LaplaceFlow,
    classify,
    compound_poisson,
    solve_ut,
    solve_ut_boundary,
)
from src.models import Experiments, ExperimentConfig, ExperimentReport, Table
from src.oracle import FellerSubordinatorOracle, oracle_partition, sample_feller_subordinator
from src.stats import (
    Gate,
    bound_gate,
    chi_square_gate,
    difference_gate,
    homogeneity_gate,
    ks_uniform_gate,
    seed_stream,
    z_gate,
)

logger = logging.getLogger(__name__)

ORACLE_STREAM = 1 << 40
EVE_FRACTIONS = (0.25, 0.5, 0.75, 0.95)
EVE_WEIGHT = 0.9
EVE_MISS_RATE = 0.10
EVE_DISAGREEMENT_RATE = 0.05
CLASSIFY_MISS_RATE = 0.05
MAX_PAINTBOX_LEVEL = 6
RATE_CLOSED_FORM_TOLERANCE = 1e-9
RATE_DEVIATION_TOLERANCE = 1e-2
GATE_NOTE = (
    "Each z-gate fails spuriously with probability about 6e-5 and each "
    "p-value gate with probability 1e-3; a report with G gates is a Bonferroni "
    "family with false-failure probability at most G times that."
)


class Outcome(BaseModel, frozen=True):
    gates: list[Gate]
    tables: list[Table] = []
    notes: list[str] = []


type Runner = Callable[[ExperimentConfig], Outcome]


def map_replicates[T](
    worker: Callable[[ExperimentConfig, int], T],
    cfg: ExperimentConfig,
    count: int | None = None,
) -> list[T]:
    """
    Run ``worker(cfg, i)`` for i = 0..count-1, in a process pool when threads > 1.

    Results come back in replicate order.
    """

    count = cfg.replicates if count is None else count
    if cfg.threads == 1:
        return [worker(cfg, i) for i in range(count)]
    chunk = max(1, count // (4 * cfg.threads))
    with ProcessPoolExecutor(max_workers=cfg.threads) as pool:
        return list(pool.map(worker, repeat(cfg), range(count), chunksize=chunk))


def _rng(cfg: ExperimentConfig, index: int) -> np.random.Generator:
    return np.random.default_rng(seed_stream(cfg.master_seed, index))


def _child(rng: np.random.Generator) -> int:
    return int(rng.integers(2**63))


def _is_feller(m: BranchingMechanism) -> bool:
    return m.alpha == 0.0 and math.isclose(m.sigma**2, 2.0) and isinstance(m.nu, NoMeasure)


def _oracle_total(cfg: ExperimentConfig, index: int) -> float:
    o = FellerSubordinatorOracle(t=cfg.evaluation_time)
    return sample_feller_subordinator(o, seed_stream(cfg.master_seed, ORACLE_STREAM + index)).total


def _oracle_gates(cfg: ExperimentConfig) -> list[Gate]:
    o = FellerSubordinatorOracle(t=cfg.evaluation_time)
    totals = np.asarray(map_replicates(_oracle_total, cfg))
    gates = [
        z_gate("oracle_mean_total", totals, o.a),
        z_gate("oracle_prob_zero", totals == 0.0, o.prob_zero),
    ]
    gates.extend(
        z_gate(f"oracle_laplace_lambda={lam:g}", np.exp(-lam * totals), o.laplace(lam))
        for lam in cfg.lambdas
    )
    return gates


def run_oracle(cfg: ExperimentConfig) -> Outcome:
    """
    The exact Feller subordinator against its closed-form moments.
    """

    return Outcome(gates=_oracle_gates(cfg), notes=[GATE_NOTE])


def _values_at_times(cfg: ExperimentConfig, index: int) -> list[float]:
    p = cfg.simulate(seed_stream(cfg.master_seed, index), horizon=max(cfg.times))
    return [p.value_at(t) for t in cfg.times]


def run_laplace(cfg: ExperimentConfig) -> Outcome:
    """
    E[exp(-lambda Z_t)] against exp(-u_t(lambda)) on the (t, lambda) grid.
    """

    m = cfg.branching
    flow = LaplaceFlow(mechanism=m)
    values = np.asarray(map_replicates(_values_at_times, cfg))
    gates, rows = [], []
    for j, t in enumerate(cfg.times):
        for lam in cfg.lambdas:
            target = math.exp(-solve_ut(flow, t, lam))
            gate = z_gate(
                f"laplace_t={t:g}_lambda={lam:g}",
                np.exp(-lam * values[:, j]),
                target,
                slack=3.0 * cfg.step,
            )
            gates.append(gate)
            rows.append([t, lam, gate.mean, gate.se, target, gate.verdict])
    table = Table(
        name="laplace",
        columns=["t", "lambda", "mean", "se", "target", "verdict"],
        rows=rows,
    )
    return Outcome(gates=gates, tables=[table], notes=[GATE_NOTE])


def _extinct_by(cfg: ExperimentConfig, index: int) -> list[bool]:
    p = cfg.simulate(seed_stream(cfg.master_seed, index), horizon=max(cfg.times))
    return [p.lifetime.kind == "Extinct" and p.lifetime.time <= t for t in cfg.times]


def run_extinction(cfg: ExperimentConfig) -> Outcome:
    """
    P(Z_t = 0) against exp(-u_t(infinity)).
    """

    flow = LaplaceFlow(mechanism=cfg.branching)
    extinct = np.asarray(map_replicates(_extinct_by, cfg), dtype=float)
    gates, rows = [], []
    for j, t in enumerate(cfg.times):
        target = math.exp(-solve_ut_boundary(flow, t, "infinity"))
        gate = z_gate(f"extinction_t={t:g}", extinct[:, j], target, slack=3.0 * cfg.step)
        gates.append(gate)
        rows.append([t, gate.mean, gate.se, target, gate.verdict])
    table = Table(
        name="extinction",
        columns=["t", "fraction_extinct", "se", "target", "verdict"],
        rows=rows,
    )
    return Outcome(gates=gates, tables=[table], notes=[GATE_NOTE])


def _levels(cfg: ExperimentConfig) -> list[int]:
    return cfg.levels or [cfg.n]


def _compensator_replicate(
    cfg: ExperimentConfig, index: int
) -> dict[int, tuple[dict[tuple[int, ...], int], dict[int, float]]]:
    m = cfg.branching
    rng = _rng(cfg, index)
    t = cfg.evaluation_time
    p = cfg.simulate(_child(rng), horizon=t, m=m)
    stop = min(t, stopping_time_T_eps(p, cfg.epsilon))
    result = {}
    for n in _levels(cfg):
        f = build_flow(p, n, _child(rng), until=stop)
        counts = {
            subset: process.value_at(stop)
            for subset, process in counting_processes(f, stop).items()
        }
        integrals = {
            k: compensator_integral(p, n, k, m, t, cfg.epsilon) for k in range(2, n + 1)
        }
        result[n] = (counts, integrals)
    return result


def run_compensator(cfg: ExperimentConfig) -> Outcome:
    """
    L_{t ^ T(eps)}(n, K) against the integral of lambda_{n,#K}(Z_s, Psi) on the same path.

    Subsets of the same size share a compensator, so their totals are also
    checked for equal frequencies.
    """

    for n in _levels(cfg):
        if n > MAX_ENUMERATED_LEVEL:
            raise ConfigurationError(
                f"compensator checks enumerate every subset; n={n} exceeds {MAX_ENUMERATED_LEVEL}"
            )
    replicates = map_replicates(_compensator_replicate, cfg)
    gates, rows = [], []
    for n in _levels(cfg):
        subsets = list(replicates[0][n][0])
        for subset in subsets:
            counts = [replicate[n][0][subset] for replicate in replicates]
            integrals = [replicate[n][1][len(subset)] for replicate in replicates]
            label = "".join(map(str, subset)) if n < 10 else "-".join(map(str, subset))
            gate = difference_gate(f"compensator_n={n}_K={label}", counts, integrals)
            gates.append(gate)
            rows.append(
                [n, label, len(subset), float(np.mean(counts)), float(np.mean(integrals)), gate.se, gate.verdict]
            )
        for size in range(2, n):
            same = [subset for subset in subsets if len(subset) == size]
            totals = [sum(r[n][0][subset] for r in replicates) for subset in same]
            gates.append(
                chi_square_gate(
                    f"exchangeable_n={n}_size={size}", totals, np.full(len(same), 1.0 / len(same))
                )
            )
    table = Table(
        name="compensator",
        columns=["n", "K", "size", "mean_count", "mean_compensator", "se", "verdict"],
        rows=rows,
    )
    return Outcome(gates=gates, tables=[table], notes=[GATE_NOTE])


def _labelings(n: int) -> list[tuple[int, ...]]:
    """
    The canonical labels of every partition of [n].
    """

    rows = [(1,)]
    for _ in range(n - 1):
        rows = [row + (label,) for row in rows for label in range(1, max(row) + 2)]
    return rows


def _flow_marginal(
    cfg: ExperimentConfig, index: int
) -> tuple[tuple[int, ...], tuple[int, ...]] | None:
    rng = _rng(cfg, index)
    t = cfg.evaluation_time
    p = cfg.simulate(_child(rng), horizon=t)
    if p.value_at(t) <= 0.0:
        return None
    f = build_flow(p, cfg.n, _child(rng), until=t)
    pi = partition_between(f, 0.0, t)
    moved = partitions.permute(pi, rng.permutation(cfg.n) + 1)
    return tuple(pi.labels.tolist()), tuple(moved.labels.tolist())


def _oracle_marginal(cfg: ExperimentConfig, index: int) -> tuple[int, ...]:
    o = FellerSubordinatorOracle(t=cfg.evaluation_time)
    rng = np.random.default_rng(seed_stream(cfg.master_seed, 2 * ORACLE_STREAM + index))
    while True:
        pi, sample = oracle_partition(o, cfg.n, rng)
        if sample.total > 0.0:
            return tuple(pi.labels.tolist())


def run_paintbox_marginal(cfg: ExperimentConfig) -> Outcome:
    """
    The law of the partition between 0 and t of the flow, given Z_t > 0, against
    the paint-box of the exact subordinator given a positive total.

    The flow partition is also compared with its image under a uniform random
    relabeling of [n], which must have the same law.
    """

    if not _is_feller(cfg.branching):
        raise ConfigurationError("the paint-box oracle only exists for Psi(u) = u^2")
    if cfg.n > MAX_PAINTBOX_LEVEL:
        raise ConfigurationError(f"paint-box marginals are tabulated up to n={MAX_PAINTBOX_LEVEL}")
    gates = _oracle_gates(cfg)
    survivors = [pair for pair in map_replicates(_flow_marginal, cfg) if pair is not None]
    simulated = Counter(label for label, _ in survivors)
    moved = Counter(label for _, label in survivors)
    exact = Counter(map_replicates(_oracle_marginal, cfg))
    categories = _labelings(cfg.n)
    first = [simulated[label] for label in categories]
    second = [exact[label] for label in categories]
    third = [moved[label] for label in categories]
    gates.append(homogeneity_gate(f"paintbox_marginal_n={cfg.n}", first, second))
    gates.append(homogeneity_gate(f"paintbox_exchangeable_n={cfg.n}", first, third))
    rows = [
        [str(partitions.Partition(labels=np.asarray(label)).blocks), a, b, c]
        for label, a, b, c in zip(categories, first, second, third)
    ]
    table = Table(
        name="paintbox_marginal",
        columns=["partition", "flow", "oracle", "relabeled_flow"],
        rows=rows,
    )
    notes = [
        GATE_NOTE,
        f"{sum(first)} of {cfg.replicates} simulated paths survived to t={cfg.evaluation_time:g}.",
    ]
    return Outcome(gates=gates, tables=[table], notes=notes)


def _eve_replicate(
    cfg: ExperimentConfig, index: int
) -> tuple[str, float, float, float | None, int, bool, str]:
    rng = _rng(cfg, index)
    p = cfg.simulate(_child(rng))
    criterion = check_eve_criterion(p)
    end = p.end
    f = build_flow(p, cfg.n, _child(rng), until=EVE_FRACTIONS[-1] * end)
    types = rng.random(cfg.n)
    measures = [
        empirical_measure(run_lookdown(f, 0.0, types, fraction * end))
        for fraction in EVE_FRACTIONS
    ]
    estimate = eve_estimate(measures)
    return (
        criterion.verdict,
        criterion.statistic,
        estimate.max_weight_trajectory[-1],
        estimate.eve_location,
        measures[-1].ancestor_count,
        estimate.eve_location == float(types[0]),
        p.lifetime.kind,
    )


def run_eve(cfg: ExperimentConfig) -> Outcome:
    """
    The Eve criterion against the lookdown measures near the end of life.

    With extinction in finite time an Eve should show up in almost every path
    that dies and sit at a uniform type; without it the criterion stays bounded.
    """

    m = cfg.branching
    replicates = map_replicates(_eve_replicate, cfg)
    verdicts = np.asarray([r[0] for r in replicates])
    weights = np.asarray([r[2] for r in replicates])
    diverging = verdicts == "Diverging"
    heavy = weights >= EVE_WEIGHT
    gates = [
        bound_gate("eve_criterion_agrees_with_weights", float(np.mean(diverging != heavy)), EVE_DISAGREEMENT_RATE)
    ]
    if m.extinction_possible_in_finite_time:
        extinct = np.asarray([r[6] == "Extinct" for r in replicates])
        if extinct.any():
            found = float(np.mean((diverging & heavy)[extinct]))
            gates.append(bound_gate("eve_detected", 1.0 - found, EVE_MISS_RATE))
        located = [r for r in replicates if r[0] == "Diverging" and r[3] is not None]
        gates.append(ks_uniform_gate("eve_location_uniform", [r[3] for r in located]))
        settled = [r for r in located if r[2] >= EVE_WEIGHT]
        if settled:
            misses = sum(not r[5] for r in settled) / len(settled)
            gates.append(bound_gate("eve_carries_level_one_type", misses, EVE_MISS_RATE))
    else:
        gates.append(bound_gate("eve_bounded", 1.0 - float(np.mean(verdicts == "Bounded")), 0.0))
    table = Table(
        name="eve",
        columns=[
            "replicate",
            "verdict",
            "statistic",
            "final_max_weight",
            "eve_location",
            "ancestors",
            "eve_at_level_one",
            "lifetime",
        ],
        rows=[[i, *r] for i, r in enumerate(replicates)],
    )
    return Outcome(gates=gates, tables=[table], notes=[GATE_NOTE])


def _dust_replicate(cfg: ExperimentConfig, index: int) -> tuple[float, float]:
    rng = _rng(cfg, index)
    t = cfg.evaluation_time
    p = cfg.simulate(_child(rng), horizon=t)
    f = build_flow(p, cfg.n, _child(rng), until=t)
    check = dust_frequency_check(f, t)
    return check.empirical_dust, check.predicted_dust


def run_dust(cfg: ExperimentConfig) -> Outcome:
    """
    The singleton frequency of the flow against the product of (1 - x) over jumps.
    """

    m = cfg.branching
    replicates = np.asarray(map_replicates(_dust_replicate, cfg))
    empirical, predicted = replicates[:, 0], replicates[:, 1]
    tolerance = 2.0 / math.sqrt(cfg.n)
    if m.sigma > 0.0:
        gates = [bound_gate("dust_vanishes_with_diffusion", float(np.mean(empirical)), tolerance)]
    else:
        gates = [
            z_gate("dust_matches_jumps", np.abs(empirical - predicted), 0.0, slack=tolerance)
        ]
    table = Table(
        name="dust",
        columns=["replicate", "empirical", "predicted"],
        rows=[[i, float(a), float(b)] for i, (a, b) in enumerate(replicates)],
    )
    return Outcome(gates=gates, tables=[table], notes=[f"dust regime: {m.nu.family}"])


def _diffusion_sequence(k: int) -> tuple[float, BranchingMechanism]:
    return 1.0 + 1.0 / k, BranchingMechanism(sigma=math.sqrt(2.0 + 1.0 / k))


def _atom_sequence(k: int) -> tuple[float, BranchingMechanism]:
    return 1.0, compound_poisson(size=1.0, mass=1.0 + 1.0 / k)


def run_rate_continuity(cfg: ExperimentConfig) -> Outcome:
    """
    lambda_{2,2} along converging (z_k, Psi_k) sequences, with and without jumps.
    """

    diffusion = rate_continuity_check(
        2, 2, _diffusion_sequence, (1.0, BranchingMechanism(sigma=math.sqrt(2.0)))
    )
    atoms = rate_continuity_check(2, 2, _atom_sequence, (1.0, compound_poisson(size=1.0, mass=1.0)))
    closed = [(2.0 + 1.0 / k) / (1.0 + 1.0 / k) for k in diffusion.terms]
    gates = [
        bound_gate(
            "diffusion_closed_form",
            max(abs(a - b) for a, b in zip(diffusion.values, closed)),
            RATE_CLOSED_FORM_TOLERANCE,
        ),
        bound_gate("diffusion_converges", diffusion.deviations[-1], RATE_DEVIATION_TOLERANCE),
        bound_gate("atoms_converge", atoms.deviations[-1], RATE_DEVIATION_TOLERANCE),
    ]
    rows = [
        [k, a, c, b]
        for k, a, c, b in zip(diffusion.terms, diffusion.values, closed, atoms.values)
    ]
    table = Table(
        name="rate_continuity",
        columns=["k", "diffusion_rate", "closed_form", "atom_rate"],
        rows=rows,
    )
    notes = [f"limits: diffusion {diffusion.limit:g}, atoms {atoms.limit:g}"]
    return Outcome(gates=gates, tables=[table], notes=notes)


def _decomposition_replicate(cfg: ExperimentConfig, index: int) -> tuple[float, bool, int] | None:
    rng = _rng(cfg, index)
    t = cfg.evaluation_time
    p = cfg.simulate(_child(rng), horizon=t)
    if p.value_at(t) <= 0.0:
        return None
    f = build_flow(p, cfg.n, _child(rng), until=t)
    report = decomposition_check(p, f, 0.0, t, cfg.level)
    return report.tv_distance, report.persistence_matches_levels, report.level


def run_decomposition(cfg: ExperimentConfig) -> Outcome:
    """
    The lookdown measure of the first levels against the one rebuilt from the full flow.
    """

    replicates = [r for r in map_replicates(_decomposition_replicate, cfg) if r is not None]
    if not replicates:
        gate = Gate(name="decomposition_tv", kind="bound", verdict="Inconclusive", threshold=0.0)
        return Outcome(gates=[gate], notes=["no path survived to t"])
    level = replicates[0][2]
    distances = [r[0] for r in replicates]
    gates = [
        bound_gate("decomposition_tv", float(np.mean(distances)), 5.0 / math.sqrt(level)),
        bound_gate("persistence_mismatches", float(sum(not r[1] for r in replicates)), 0.0),
    ]
    table = Table(
        name="decomposition",
        columns=["replicate", "tv_distance", "persistence_matches_levels"],
        rows=[[i, r[0], r[1]] for i, r in enumerate(replicates)],
    )
    return Outcome(gates=gates, tables=[table])


def expected_behaviours(m: BranchingMechanism) -> set[str]:
    """
    The behaviours a path of this mechanism can show.
    """

    if not m.is_conservative:
        return {"Explosion"}
    if not m.extinction_possible_in_finite_time:
        return {"InfLifeNoExtinct"}
    if m.gamma > 0.0:
        return {"Extinction", "InfLifePossibleExtinct"}
    return {"Extinction"}


def _classify_replicate(cfg: ExperimentConfig, index: int) -> tuple[str, bool]:
    p = cfg.simulate(seed_stream(cfg.master_seed, index))
    report = classify_behaviour(p)
    return report.label, report.undecided


def run_classify(cfg: ExperimentConfig) -> Outcome:
    """
    Path behaviours against the behaviours the mechanism allows.
    """

    m = cfg.branching
    expected = expected_behaviours(m)
    replicates = map_replicates(_classify_replicate, cfg)
    decided = [label for label, undecided in replicates if not undecided]
    if decided:
        misses = sum(label not in expected for label in decided) / len(decided)
        gate = bound_gate("behaviour_in_expected_set", misses, CLASSIFY_MISS_RATE)
    else:
        gate = Gate(
            name="behaviour_in_expected_set",
            kind="bound",
            verdict="Inconclusive",
            threshold=CLASSIFY_MISS_RATE,
        )
    counts = Counter((label, undecided) for label, undecided in replicates)
    table = Table(
        name="classify",
        columns=["label", "undecided", "count"],
        rows=[[label, undecided, count] for (label, undecided), count in sorted(counts.items())],
    )
    notes = [
        classify(m).model_dump_json(),
        f"expected behaviours: {', '.join(sorted(expected))}",
    ]
    return Outcome(gates=[gate], tables=[table], notes=notes)


def _lamperti_replicate(cfg: ExperimentConfig, index: int) -> tuple[float, float]:
    m = cfg.branching
    g = simulate_levy(
        m,
        cfg.horizon,
        cfg.step,
        cfg.jump_truncation,
        seed_stream(cfg.master_seed, index),
        gaussian_correction=cfg.gaussian_correction,
        explosion_ceiling=cfg.explosion_ceiling,
    )
    back = lamperti_forward(lamperti_inverse(g, mechanism=m))
    middles = 0.5 * (g.times[:-1] + g.times[1:])
    middles = middles[middles < back.times[-1]]
    deviation = max(
        (abs(back.value_at(s) - g.value_at(s)) for s in middles), default=0.0
    )
    return deviation, 2.0 * cfg.step * float(np.max(np.abs(g.values)))


def run_lamperti(cfg: ExperimentConfig) -> Outcome:
    """
    L(L^{-1}(g)) against g at the midpoints of the Lévy skeleton.
    """

    replicates = map_replicates(_lamperti_replicate, cfg)
    gates = [
        bound_gate(f"lamperti_round_trip_{i}", deviation, bound)
        for i, (deviation, bound) in enumerate(replicates)
    ]
    table = Table(
        name="lamperti",
        columns=["replicate", "deviation", "bound"],
        rows=[[i, a, b] for i, (a, b) in enumerate(replicates)],
    )
    return Outcome(gates=gates, tables=[table])


def _algebra_replicate(cfg: ExperimentConfig, index: int) -> tuple[int, int]:
    rng = _rng(cfg, index)
    broken_associativity = 0
    for _ in range(cfg.instances_per_replicate):
        a, b, c = (partitions.random_partition(cfg.n, rng) for _ in range(3))
        left = partitions.coag(partitions.coag(a, b), c)
        right = partitions.coag(a, partitions.coag(b, c))
        broken_associativity += left != right
    p = cfg.simulate(_child(rng))
    f = build_flow(p, cfg.n, _child(rng))
    broken_cocycle = 0
    for _ in range(cfg.instances_per_replicate):
        r, s, t = np.sort(rng.uniform(0.0, f.horizon, 3))
        whole = partition_between(f, r, t)
        split = partitions.coag(partition_between(f, s, t), partition_between(f, r, s))
        broken_cocycle += whole != split
    return broken_associativity, broken_cocycle


def run_algebra(cfg: ExperimentConfig) -> Outcome:
    """
    Associativity of Coag and the cocycle property of the flow.
    """

    replicates = np.asarray(map_replicates(_algebra_replicate, cfg))
    gates = [
        bound_gate("coag_associative", float(replicates[:, 0].sum()), 0.0),
        bound_gate("flow_cocycle", float(replicates[:, 1].sum()), 0.0),
    ]
    return Outcome(
        gates=gates,
        notes=[f"{cfg.replicates * cfg.instances_per_replicate} instances of each identity"],
    )


experiments: dict[Experiments, Runner] = {
    "oracle": run_oracle,
    "laplace": run_laplace,
    "extinction": run_extinction,
    "compensator": run_compensator,
    "paintbox_marginal": run_paintbox_marginal,
    "eve": run_eve,
    "dust": run_dust,
    "rate_continuity": run_rate_continuity,
    "decomposition": run_decomposition,
    "classify": run_classify,
    "lamperti": run_lamperti,
    "algebra": run_algebra,
}


def write_table(table: Table, destination: Path) -> None:
    with open(destination, "w", newline="") as stream:
        writer = csv.writer(stream)
        writer.writerow(table.columns)
        writer.writerows(table.rows)


def run_experiment(
    config: ExperimentConfig | dict[str, Any], out_dir: Path | str | None = None
) -> ExperimentReport:
    """
    Run one experiment and, given an output directory, write report.json and
    one CSV per table into it.
    """

    cfg = config if isinstance(config, ExperimentConfig) else ExperimentConfig(**config)
    logger.info(
        "Running %s with %d replicate(s) on %d thread(s).",
        cfg.experiment,
        cfg.replicates,
        cfg.threads,
    )
    outcome = experiments[cfg.experiment](cfg)
    report = ExperimentReport(
        experiment=cfg.experiment,
        config=cfg,
        gates=outcome.gates,
        tables=outcome.tables,
        notes=outcome.notes,
    )
    for gate in report.gates:
        if not gate.passed:
            logger.warning("Gate %s failed: %s", gate.name, gate.model_dump_json())
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(report.model_dump_json(indent=2))
        for table in report.tables:
            write_table(table, out / f"{table.name}.csv")
        logger.info("Wrote the %s report to %s.", cfg.experiment, out)
    return report
