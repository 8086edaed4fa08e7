"""
Lookdown particle system, empirical measures and Eve / dust / behaviour diagnostics.

Levels are ancestors in the lookdown sense: block i of the partition between
s and t is the set of levels at time t whose ancestor at time s is level i,
so the type carried by level j at time t is ``initial_types[labels[j] - 1]``.
"""

import logging
import math
from collections.abc import Sequence
from typing import Literal
import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator
from src.errors import DomainError
from src.genealogy_flow import PartitionFlow, partition_between
from src.levy_csbp import CsbpPath, diffusion_integral, jump_square_sum
from src.partitions import Partition, dust_fraction, restrict

logger = logging.getLogger(__name__)

EVE_DIVERGENCE_THRESHOLD = 1e3
EVE_PLATEAU_GROWTH = 0.01
EVE_DECAY_RATIO = 0.5
EVE_MIN_DECADES = 2
WEIGHT_TOLERANCE = 1e-12
DECIDED_SIZE = 1e3

EveVerdict = Literal["Diverging", "Bounded", "Inconclusive"]

Behaviour = Literal[
    "Extinction", "Explosion", "InfLifeNoExtinct", "InfLifePossibleExtinct"
]


class LookdownState(BaseModel, frozen=True):
    """
    The lookdown configuration at time t of a system started at time s.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    n: int
    start_time: float
    time: float
    initial_types: tuple[float, ...]
    partition: Partition
    type_of_level: np.ndarray


class EmpiricalMeasure(BaseModel, frozen=True):
    """
    Atoms from the non-singleton blocks; the singletons form the dust.
    """

    atoms: list[tuple[float, float]]
    dust_weight: float
    time: float

    @model_validator(mode="after")
    def check_weights(self) -> "EmpiricalMeasure":
        if any(weight <= 0.0 for _, weight in self.atoms) or self.dust_weight < 0.0:
            raise ValueError("weights must be positive and dust nonnegative")
        total = math.fsum([weight for _, weight in self.atoms] + [self.dust_weight])
        if abs(total - 1.0) > WEIGHT_TOLERANCE:
            raise ValueError(f"empirical measure has total weight {total}")
        return self

    @property
    def max_weight(self) -> float:
        return max((weight for _, weight in self.atoms), default=0.0)

    @property
    def ancestor_count(self) -> int:
        """
        The number of ancestors with more than one descendant level.
        """
        return len(self.atoms)


def run_lookdown(
    f: PartitionFlow, s: float, initial_types: Sequence[float], t: float
) -> LookdownState:
    """
    Propagate the initial types of the n levels from time s to time t.
    """

    if len(initial_types) != f.n:
        raise DomainError(f"need {f.n} initial types, got {len(initial_types)}")
    if len(set(initial_types)) != len(initial_types):
        raise DomainError("initial types must be pairwise distinct")
    if t > f.horizon:
        raise DomainError(f"t={t} lies beyond the flow horizon {f.horizon}")
    partition = partition_between(f, s, t)
    types = np.asarray(initial_types, dtype=float)
    return LookdownState(
        n=f.n,
        start_time=s,
        time=t,
        initial_types=tuple(initial_types),
        partition=partition,
        type_of_level=types[partition.labels - 1],
    )


def measure_of(
    partition: Partition, types: Sequence[float] | np.ndarray, time: float
) -> EmpiricalMeasure:
    """
    The empirical measure of a partition whose block i carries ``types[i - 1]``.
    """

    sizes = partition.block_sizes()
    atoms = [
        (float(types[i]), int(size) / partition.n)
        for i, size in enumerate(sizes)
        if size > 1
    ]
    dust = int(np.count_nonzero(sizes == 1)) / partition.n
    return EmpiricalMeasure(atoms=atoms, dust_weight=dust, time=time)


def empirical_measure(st: LookdownState) -> EmpiricalMeasure:
    """
    Xi_{s,t} at level n: atoms at the ancestral types, the singletons as dust.
    """

    return measure_of(st.partition, st.initial_types, st.time)


class EveCriterion(BaseModel, frozen=True):
    """
    S(tau) along remaining-time decades and the resulting verdict.
    """

    statistic: float
    diverged: bool
    verdict: EveVerdict
    checkpoints: list[float]
    values: list[float]


def eve_statistic(p: CsbpPath, tau: float) -> float:
    """
    S(tau): the sum of squared rescaled jumps plus the integral of sigma^2 / Z up to tau.
    """

    sigma = p.mechanism.sigma if p.mechanism is not None else 0.0
    return jump_square_sum(p, tau) + diffusion_integral(p, sigma, tau)


def check_eve_criterion(
    p: CsbpPath, threshold: float = EVE_DIVERGENCE_THRESHOLD
) -> EveCriterion:
    """
    Decide whether S grows without bound as tau increases to the end of the path.

    Checkpoints sit at remaining times span * 10^-k, down to the grid
    resolution, followed by the end of the path. The verdict is Diverging when S
    passes ``threshold`` or its increments stop decaying across decades,
    Bounded when it stops growing (less than 1% over the last decade), and
    Inconclusive otherwise.
    """

    end = p.end
    steps = np.diff(p.times)
    resolution = float(np.median(steps[steps > 0.0])) if np.any(steps > 0.0) else end
    decades = max(EVE_MIN_DECADES, int(math.floor(math.log10(end / resolution))))
    checkpoints = [end - end * 10.0**-k for k in range(decades + 1)] + [end]
    values = [eve_statistic(p, tau) for tau in checkpoints]
    statistic = values[-1]
    increments = np.diff(values)

    if statistic >= threshold or not math.isfinite(statistic):
        verdict: EveVerdict = "Diverging"
    elif statistic == 0.0 or increments[-1] < EVE_PLATEAU_GROWTH * statistic:
        verdict = "Bounded"
    elif increments[-1] >= EVE_DECAY_RATIO * increments[-2]:
        verdict = "Diverging"
    else:
        verdict = "Inconclusive"
    return EveCriterion(
        statistic=statistic,
        diverged=statistic >= threshold,
        verdict=verdict,
        checkpoints=checkpoints,
        values=values,
    )


class EveEstimate(BaseModel, frozen=True):
    """
    The Eve type, if any, and the weight of the heaviest atom at each time.
    """

    eve_location: float | None
    max_weight_trajectory: list[float]
    no_eve: bool = False


def eve_estimate(measures: Sequence[EmpiricalMeasure]) -> EveEstimate:
    """
    The type of the heaviest atom at the last time, and the max weight over time.
    """

    trajectory = [measure.max_weight for measure in measures]
    if not measures or not measures[-1].atoms:
        return EveEstimate(eve_location=None, max_weight_trajectory=trajectory, no_eve=True)
    location, _ = max(measures[-1].atoms, key=lambda atom: atom[1])
    return EveEstimate(eve_location=location, max_weight_trajectory=trajectory)


class DustCheck(BaseModel, frozen=True):
    """
    The observed singleton fraction next to the one the jumps predict.
    """

    empirical_dust: float
    predicted_dust: float


def predicted_dust(p: CsbpPath, t: float) -> float:
    """
    The product of (1 - Delta Z_s / Z_s) over the jumps s <= t; 0 when sigma > 0.
    """

    if p.mechanism is not None and p.mechanism.sigma > 0.0:
        return 0.0
    keep = p.jump_times <= t
    return float(np.prod(1.0 - p.jump_fractions[keep]))


def dust_frequency_check(f: PartitionFlow, t: float) -> DustCheck:
    """
    The singleton fraction of the partition between 0 and t, against its prediction.
    """

    if f.source is None:
        raise DomainError("dust_frequency_check needs a flow built from a path")
    return DustCheck(
        empirical_dust=dust_fraction(partition_between(f, 0.0, t)),
        predicted_dust=predicted_dust(f.source, t),
    )


class AncestorRecord(BaseModel, frozen=True):
    level: int
    absorbed_at: float | None
    final_weight: float


class AncestorOrder(BaseModel, frozen=True):
    """
    Ancestors sorted by persistence; survivors by final weight (a finite-horizon proxy).
    """

    ancestors: list[AncestorRecord]
    predominance_proxy: bool


def _forward(labels: np.ndarray, members: np.ndarray) -> np.ndarray:
    """
    Coag(pi_K, pi) on canonical labels: the partition just after event K.
    """

    leaders = np.ones(len(labels) + 1, dtype=np.int64)
    leaders[0] = 0
    leaders[members[1:]] = 0
    rank = np.cumsum(leaders)
    rho = rank[1:].copy()
    rho[members - 1] = rank[members[0]]
    return labels[rho - 1]


def block_count_trajectory(
    f: PartitionFlow, s: float = 0.0, t: float | None = None, level: int | None = None
) -> tuple[np.ndarray, np.ndarray, Partition]:
    """
    The number of blocks of the partition of the first ``level`` levels between s
    and each event time in (s, t] that changes it.

    Runs forward in time: after an event K the partition is Coag(pi_K, previous).
    Returns the event times, the block counts and the final partition.
    """

    t = f.horizon if t is None else t
    level = f.n if level is None else level
    first, last = f.window(s, t)
    seconds = f.members[f.offsets[first:last] + 1].tolist()
    labels = np.arange(1, level + 1)
    times, counts = [], []
    for position, second in enumerate(seconds):
        if second > level:
            continue
        members = f.block(first + position)
        labels = _forward(labels, members[members <= level])
        times.append(f.times[first + position])
        counts.append(labels.max())
    return (
        np.asarray(times, dtype=float),
        np.asarray(counts, dtype=np.int64),
        Partition(labels=labels),
    )


def ancestor_extinction_order(
    f: PartitionFlow, s: float = 0.0, t: float | None = None, level: int | None = None
) -> AncestorOrder:
    """
    Order the ancestors of the first ``level`` levels (all n by default) by persistence.

    Ancestor i loses its last descendant among those levels when the block
    count drops below i. Ancestors still present at t come first, heaviest
    first; the rest follow by decreasing absorption time.
    """

    times, counts, final = block_count_trajectory(f, s, t, level)
    sizes = final.block_sizes()
    records = []
    for ancestor in range(1, final.n + 1):
        index = int(np.searchsorted(-counts, -ancestor, side="right"))
        absorbed = float(times[index]) if index < len(counts) else None
        weight = float(sizes[ancestor - 1]) / final.n if ancestor <= len(sizes) else 0.0
        records.append(
            AncestorRecord(level=ancestor, absorbed_at=absorbed, final_weight=weight)
        )
    survivors = sorted(
        (r for r in records if r.absorbed_at is None), key=lambda r: -r.final_weight
    )
    gone = sorted(
        (r for r in records if r.absorbed_at is not None), key=lambda r: -r.absorbed_at
    )
    return AncestorOrder(
        ancestors=survivors + gone, predominance_proxy=len(survivors) > 1
    )


class BehaviourReport(BaseModel, frozen=True):
    label: Behaviour
    undecided: bool = False
    ancestor_order: AncestorOrder | None = None


def classify_behaviour(p: CsbpPath, f: PartitionFlow | None = None) -> BehaviourReport:
    """
    Label a path with one of the four long-term behaviours of the MVBP.

    Absorbed paths are labelled by their lifetime marker. A path still alive at
    the horizon is labelled from the mechanism (gamma, conservativeness, the
    tail integral of 1 / Psi) and flagged undecided when it could still end
    either way. No ancestor ordering is attempted for explosions.
    """

    m = p.mechanism
    if m is None:
        raise DomainError("classify_behaviour needs a path that carries its mechanism")
    if p.lifetime.kind == "Extinct":
        return BehaviourReport(label="Extinction")
    if p.lifetime.kind == "Exploded":
        return BehaviourReport(label="Explosion")
    if not m.is_conservative:
        return BehaviourReport(label="Explosion", undecided=True)
    if not m.extinction_possible_in_finite_time:
        return BehaviourReport(label="InfLifeNoExtinct")
    if m.gamma > 0.0 and p.values[-1] >= DECIDED_SIZE:
        order = ancestor_extinction_order(f) if f is not None else None
        return BehaviourReport(label="InfLifePossibleExtinct", ancestor_order=order)
    return BehaviourReport(label="Extinction", undecided=True)


class DecompositionReport(BaseModel, frozen=True):
    """
    The level-n empirical measure against the reconstructed measure at the full level.
    """

    s: float
    t: float
    level: int
    full_level: int
    z_s: float
    z_t: float
    tv_distance: float
    empirical: EmpiricalMeasure
    reconstructed: EmpiricalMeasure
    persistence_matches_levels: bool


def total_variation(a: EmpiricalMeasure, b: EmpiricalMeasure) -> float:
    """
    Half the L1 distance between atom weights, dust compared as one component.
    """

    weights: dict[float, float] = {}
    for location, weight in a.atoms:
        weights[location] = weights.get(location, 0.0) + weight
    for location, weight in b.atoms:
        weights[location] = weights.get(location, 0.0) - weight
    return 0.5 * (
        sum(abs(w) for w in weights.values()) + abs(a.dust_weight - b.dust_weight)
    )


def level_ancestry(
    f: PartitionFlow, s: float, t: float, level: int
) -> tuple[np.ndarray, dict[int, float]]:
    """
    Follow the ancestor of each of the first ``level`` levels event by event.

    At an event the levels of the block take the ancestor of its lowest level
    and the other levels keep their order, pushed up past the block. Returns
    the ancestor of every level at t and, for each ancestor that lost its last
    descendant in (s, t], the time it happened.
    """

    first, last = f.window(s, t)
    ancestors = np.arange(1, level + 1)
    lost: dict[int, float] = {}
    for index in range(first, last):
        members = f.block(index)
        members = members[members <= level]
        if len(members) < 2:
            continue
        kept = np.ones(level, dtype=bool)
        kept[members[1:] - 1] = False
        updated = np.empty(level, dtype=np.int64)
        updated[kept] = ancestors[: np.count_nonzero(kept)]
        updated[members[1:] - 1] = ancestors[members[0] - 1]
        for ancestor in np.setdiff1d(ancestors, updated).tolist():
            lost[ancestor] = float(f.times[index])
        ancestors = updated
    return ancestors, lost


def decomposition_check(
    p: CsbpPath,
    f: PartitionFlow,
    s: float,
    t: float,
    level: int | None = None,
    types: Sequence[float] | None = None,
) -> DecompositionReport:
    """
    Compare the lookdown measure of the first ``level`` levels, with the Eves as
    initial types, to r_{s,t} rebuilt from all f.n levels of the same flow.

    The Eves are the ancestors in persistence order, which at a finite level is
    the level order. The report says whether the flow agrees: an ancestry walk
    over the events must reproduce the restricted partition and lose ancestors
    from the top level down.
    """

    if not s <= t <= min(p.end, f.horizon):
        raise DomainError(f"decomposition_check needs s <= t <= end, got s={s}, t={t}")
    full_level = f.n
    level = level or max(2, full_level // 4)
    if not 2 <= level <= full_level:
        raise DomainError(f"level must lie in 2..{full_level}, got {level}")
    if types is None:
        types = [i / (full_level + 1) for i in range(1, full_level + 1)]
    full = partition_between(f, s, t)
    reconstructed = measure_of(full, types, t)
    empirical = measure_of(restrict(full, level), types, t)

    ancestors, lost = level_ancestry(f, s, t, level)
    persistence = [lost.get(ancestor, math.inf) for ancestor in range(1, level + 1)]
    consistent = np.array_equal(ancestors, restrict(full, level).labels)
    return DecompositionReport(
        s=s,
        t=t,
        level=level,
        full_level=full_level,
        z_s=p.value_at(s),
        z_t=p.value_at(t),
        tv_distance=total_variation(empirical, reconstructed),
        empirical=empirical,
        reconstructed=reconstructed,
        persistence_matches_levels=consistent
        and all(a >= b for a, b in zip(persistence, persistence[1:])),
    )
