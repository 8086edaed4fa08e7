"""
The flow of partitions of a simulated CSBP at a finite resolution n.

Reproduction events come from two sources: binary (Kingman) mergers at rate
binom(n, 2) sigma^2 / Z_t, and jump-driven mergers where each of the n levels
takes part independently with probability Delta Z_s / Z_s. Events are stored
column-wise; ``partition_between`` composes them right to left.
"""

import csv
import itertools
import json
import logging
import math
from collections.abc import Callable, Iterator, Sequence
from pathlib import Path
from typing import Literal
import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator
from scipy.special import comb
from src.errors import ConfigurationError, DomainError
from src.levy_csbp import CsbpPath, stopping_time_T_eps
from src.measures import FiniteAtoms, NoMeasure
from src.mechanism import BranchingMechanism
from src.partitions import Partition, Seed

logger = logging.getLogger(__name__)

KINGMAN, JUMP = 0, 1

MAX_FLOW_EVENTS = 20_000_000
MAX_ENUMERATED_LEVEL = 12

EventKind = Literal["kingman", "jump"]


class EventRecord(BaseModel, frozen=True):
    """
    One line of the event log: {"t", "kind", "block", "x"}.
    """

    t: float
    kind: EventKind
    block: list[int]
    x: float | None = None


class ReproductionEvent(BaseModel, frozen=True):
    """
    A single reproduction event: the levels in ``block`` merge into its least element.
    """

    n: int
    time: float
    kind: EventKind
    block: tuple[int, ...]
    x: float | None = None

    @model_validator(mode="after")
    def check_event(self) -> "ReproductionEvent":
        if list(self.block) != sorted(set(self.block)) or not self.block:
            raise ValueError("event block must be strictly increasing")
        if self.block[0] < 1 or self.block[-1] > self.n:
            raise ValueError(f"event block must lie in 1..{self.n}")
        if self.kind == "kingman" and len(self.block) != 2:
            raise ValueError("a Kingman event merges exactly two levels")
        if self.kind == "jump":
            if len(self.block) < 2:
                raise ValueError("a jump event merges at least two levels")
            if self.x is None or not 0.0 < self.x < 1.0:
                raise ValueError("a jump event needs x in (0, 1)")
        return self

    @property
    def partition(self) -> Partition:
        """
        pi_K: the partition of [n] whose only non-singleton block is K.
        """

        labels = np.arange(1, self.n + 1)
        labels[np.asarray(self.block) - 1] = self.block[0]
        return Partition(labels=labels)

    def record(self) -> EventRecord:
        """
        The JSON-lines form of the event.
        """

        return EventRecord(t=self.time, kind=self.kind, block=list(self.block), x=self.x)


class PartitionFlow(BaseModel, frozen=True):
    """
    The events of the flow at level n on [0, horizon), time-sorted.

    Event i merges ``members[offsets[i]:offsets[i + 1]]`` (1-based, ascending).
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    n: int
    horizon: float
    times: np.ndarray
    kinds: np.ndarray
    offsets: np.ndarray
    members: np.ndarray
    fractions: np.ndarray
    source: CsbpPath | None = None

    @field_validator("n")
    @classmethod
    def check_level(cls, n: int) -> int:
        if n < 2:
            raise DomainError(f"flow resolution must be at least 2, got {n}")
        return n

    @property
    def event_count(self) -> int:
        return int(self.times.size)

    def block(self, i: int) -> np.ndarray:
        return self.members[self.offsets[i] : self.offsets[i + 1]]

    def event(self, i: int) -> ReproductionEvent:
        kind: EventKind = "kingman" if self.kinds[i] == KINGMAN else "jump"
        x = None if kind == "kingman" else float(self.fractions[i])
        return ReproductionEvent(
            n=self.n,
            time=float(self.times[i]),
            kind=kind,
            block=tuple(self.block(i).tolist()),
            x=x,
        )

    @property
    def events(self) -> list[ReproductionEvent]:
        return [self.event(i) for i in range(self.event_count)]

    def window(self, s: float, t: float) -> tuple[int, int]:
        """
        The index range of the events with time in (s, t].
        """

        return (
            int(np.searchsorted(self.times, s, "right")),
            int(np.searchsorted(self.times, t, "right")),
        )


def _from_columns(
    n: int,
    horizon: float,
    times: np.ndarray,
    kinds: np.ndarray,
    blocks: Sequence[np.ndarray],
    fractions: np.ndarray,
    order_keys: np.ndarray,
    source: CsbpPath | None,
) -> PartitionFlow:
    order = np.lexsort((order_keys, times))
    sizes = np.asarray([len(blocks[i]) for i in order], dtype=np.int64)
    members = (
        np.concatenate([blocks[i] for i in order]).astype(np.int64)
        if len(order)
        else np.empty(0, dtype=np.int64)
    )
    times = times[order]
    if len(times) > 1 and np.any(np.diff(times) == 0.0):
        logger.warning(
            "Flow has %d coincident event time(s); ordered by source index.",
            int(np.count_nonzero(np.diff(times) == 0.0)),
        )
    return PartitionFlow(
        n=n,
        horizon=horizon,
        times=times,
        kinds=kinds[order],
        offsets=np.concatenate([[0], np.cumsum(sizes)]),
        members=members,
        fractions=fractions[order],
        source=source,
    )


def build_flow(
    p: CsbpPath, n: int, seed: Seed = None, *, until: float | None = None
) -> PartitionFlow:
    """
    Build the events of the flow of partitions of p at level n on [0, until].

    Jump-driven events use the restricted paint-box of (x, 0, ...), i.e. each
    level joins independently with probability x = Delta Z_s / Z_s. Kingman
    events form a Poisson process with rate binom(n, 2) sigma^2 / Z_t; on the
    step path the per-cell majorant is exact, so each cell gets a Poisson number
    of uniformly placed events, each marked with a uniform pair.
    """

    if n < 2:
        raise DomainError(f"flow resolution must be at least 2, got {n}")
    if p.mechanism is None:
        raise ConfigurationError("build_flow needs a path that carries its mechanism")
    rng = np.random.default_rng(seed)
    end = p.end if until is None else min(until, p.end)
    blocks: list[np.ndarray] = []

    jump_times, jump_x = p.jump_times, p.jump_fractions
    # a jump at an inner stopping time belongs to the stopped flow
    inner = until is not None and until < p.end
    in_window = np.flatnonzero(jump_times <= end if inner else jump_times < end)
    counts = rng.binomial(n, jump_x[in_window])
    kept = []
    for index, count in zip(in_window, counts):
        if count >= 2:
            blocks.append(np.sort(rng.choice(n, size=count, replace=False)) + 1)
            kept.append(index)
    kept = np.asarray(kept, dtype=np.int64)

    sigma = p.mechanism.sigma
    durations, values = p.cells(end)
    live = (values > 0.0) & (durations > 0.0)
    rates = np.zeros_like(durations)
    if sigma > 0.0:
        rates[live] = comb(n, 2) * sigma**2 / values[live]
    expected = float(np.sum(rates * durations))
    if expected > MAX_FLOW_EVENTS:
        raise ConfigurationError(
            f"about {expected:.3g} Kingman events expected at n={n}; "
            "lower n or stop the flow earlier"
        )
    per_cell = rng.poisson(rates * durations)
    total = int(per_cell.sum())
    kingman_times = np.repeat(p.times[:-1], per_cell) + rng.random(total) * np.repeat(
        durations, per_cell
    )
    first = rng.integers(0, n, total)
    second = rng.integers(0, n - 1, total)
    second += second >= first
    pairs = np.sort(np.stack([first, second], axis=1), axis=1) + 1
    blocks.extend(pairs)

    times = np.concatenate([jump_times[kept], kingman_times])
    kinds = np.concatenate(
        [np.full(len(kept), JUMP, np.int8), np.full(total, KINGMAN, np.int8)]
    )
    fractions = np.concatenate([jump_x[kept], np.full(total, np.nan)])
    order_keys = np.concatenate([kept, len(jump_times) + np.arange(total)])
    flow = _from_columns(n, end, times, kinds, blocks, fractions, order_keys, p)
    logger.debug(
        "Built flow at n=%d with %d jump and %d Kingman event(s).", n, len(kept), total
    )
    return flow


def restrict_flow(f: PartitionFlow, m: int) -> PartitionFlow:
    """
    The flow seen by the first m levels: events keep their members in [m] and
    vanish when fewer than two remain.
    """

    if not 2 <= m <= f.n:
        raise DomainError(f"cannot restrict a flow of level {f.n} to {m}")
    blocks, keep = [], []
    for i in range(f.event_count):
        members = f.block(i)
        members = members[members <= m]
        if len(members) >= 2:
            blocks.append(members)
            keep.append(i)
    keep = np.asarray(keep, dtype=np.int64)
    return _from_columns(
        m,
        f.horizon,
        f.times[keep],
        f.kinds[keep],
        blocks,
        f.fractions[keep],
        np.arange(len(keep)),
        f.source,
    )


def _merge(labels: np.ndarray, members: np.ndarray, blocks: int) -> np.ndarray:
    """
    Coag(P, pi_K) on canonical labels, for K already restricted to [blocks].
    """

    if len(members) == 2:
        i, j = members
        return np.where(labels < j, labels, np.where(labels == j, i, labels - 1))
    removed = np.zeros(blocks + 1, dtype=np.int64)
    removed[members[1:]] = 1
    relabel = np.arange(blocks + 1) - np.cumsum(removed)
    relabel[members[1:]] = relabel[members[0]]
    return relabel[labels]


def partition_between(f: PartitionFlow, s: float, t: float) -> Partition:
    """
    The partition of the levels at time t by their ancestor level at time s.

    Composes Coag(rho_q, Coag(rho_{q-1}, ...)) over the events in (s, t],
    starting from the latest one. An event only acts through its members not
    exceeding the current block count, so most late Kingman events are skipped.
    """

    if not 0.0 <= s <= t:
        raise DomainError(f"partition_between needs 0 <= s <= t, got s={s}, t={t}")
    first, last = f.window(s, t)
    labels = np.arange(1, f.n + 1)
    blocks = f.n
    seconds = f.members[f.offsets[first:last] + 1].tolist()
    for position in range(last - first - 1, -1, -1):
        if blocks == 1:
            break
        if seconds[position] > blocks:
            continue
        members = f.block(first + position)
        members = members[members <= blocks]
        labels = _merge(labels, members, blocks)
        blocks -= len(members) - 1
    return Partition(labels=labels)


class CountingProcess(BaseModel, frozen=True):
    """
    L_t(n, K): the number of events equal to pi_K up to time t.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    subset: tuple[int, ...]
    times: np.ndarray

    def value_at(self, t: float) -> int:
        return int(np.searchsorted(self.times, t, "right"))


def merger_subsets(n: int) -> Iterator[tuple[int, ...]]:
    """
    Every K in [n] with #K >= 2; there are 2^n - n - 1 of them.
    """

    for size in range(2, n + 1):
        yield from itertools.combinations(range(1, n + 1), size)


def counting_processes(
    f: PartitionFlow, horizon: float | None = None
) -> dict[tuple[int, ...], CountingProcess]:
    """
    The counting processes L_t(n, K) on [0, horizon].

    All 2^n - n - 1 subsets are listed for small n; above that only subsets
    that actually occur are kept.
    """

    horizon = f.horizon if horizon is None else horizon
    found: dict[tuple[int, ...], list[float]] = {}
    if f.n <= MAX_ENUMERATED_LEVEL:
        found = {subset: [] for subset in merger_subsets(f.n)}
    _, last = f.window(-math.inf, horizon)
    for i in range(last):
        found.setdefault(tuple(f.block(i).tolist()), []).append(float(f.times[i]))
    return {
        subset: CountingProcess(subset=subset, times=np.asarray(times))
        for subset, times in found.items()
    }


def count_events(f: PartitionFlow, until: float, size: int | None = None) -> int:
    """
    L_t(n), or only the events merging exactly ``size`` levels.
    """

    _, last = f.window(-math.inf, until)
    if size is None:
        return last
    return int(np.count_nonzero(np.diff(f.offsets[: last + 1]) == size))


def rate_lambda(n: int, k: int, z: float, m: BranchingMechanism) -> float:
    """
    lambda_{n,k}(z, Psi): the rate at which a given k-subset of n levels merges.

    (sigma^2 / z) 1{k = 2} + z int (h/(h+z))^k (z/(h+z))^(n-k) nu(dh)
    """

    if not 2 <= k <= n:
        raise DomainError(f"rate_lambda needs 2 <= k <= n, got n={n}, k={k}")
    if z <= 0.0:
        raise DomainError(f"rate_lambda needs z > 0, got {z}")
    diffusion = m.sigma**2 / z if k == 2 else 0.0
    return diffusion + z * m.nu.merger_integral(n, k, z)


def _rates_along(n: int, k: int, z: np.ndarray, m: BranchingMechanism) -> np.ndarray:
    rates = m.sigma**2 / z if k == 2 else np.zeros_like(z)
    match m.nu:
        case NoMeasure():
            return rates
        case FiniteAtoms(sizes=h, masses=c):
            x = h[None, :] / (h[None, :] + z[:, None])
            return rates + z * np.sum(c * x**k * (1.0 - x) ** (n - k), axis=1)
        case _:
            return rates + np.asarray([z_i * m.nu.merger_integral(n, k, z_i) for z_i in z])


def compensator_integral(
    p: CsbpPath,
    n: int,
    k: int,
    m: BranchingMechanism,
    t: float,
    eps: float | None = None,
) -> float:
    """
    The integral of lambda_{n,k}(Z_{s-}, Psi) over [0, t ^ T(eps)] on the step path.
    """

    until = t if eps is None else min(t, stopping_time_T_eps(p, eps))
    durations, values = p.cells(until)
    live = (durations > 0.0) & (values > 0.0)
    return float(np.sum(_rates_along(n, k, values[live], m) * durations[live]))


class RateContinuityReport(BaseModel, frozen=True):
    """
    lambda_{n,k}(z_m, Psi_m) along a sequence, against its limit.
    """

    n: int
    k: int
    terms: list[int]
    values: list[float]
    limit: float
    deviations: list[float]
    max_tail_deviation: float
    monotone: bool
    flagged: bool


def rate_continuity_check(
    n: int,
    k: int,
    sequence: Callable[[int], tuple[float, BranchingMechanism]],
    limit: tuple[float, BranchingMechanism],
    terms: Sequence[int] = tuple(range(1, 101)),
) -> RateContinuityReport:
    """
    Tabulate lambda_{n,k}(z_m, Psi_m) for m in ``terms`` against lambda_{n,k}(z, Psi).

    The tail is the second half of the terms. A sequence is flagged when its
    deviations are not monotone and do not shrink.
    """

    values = [rate_lambda(n, k, *sequence(term)) for term in terms]
    target = rate_lambda(n, k, *limit)
    deviations = [abs(value - target) for value in values]
    tail = deviations[len(deviations) // 2 :]
    monotone = all(b <= a + 1e-15 for a, b in zip(deviations, deviations[1:]))
    return RateContinuityReport(
        n=n,
        k=k,
        terms=list(terms),
        values=values,
        limit=target,
        deviations=deviations,
        max_tail_deviation=max(tail),
        monotone=monotone,
        flagged=not monotone and deviations[-1] >= deviations[0] > 0.0,
    )


def write_event_log(f: PartitionFlow, destination: Path) -> None:
    """
    Write the events as JSON lines.
    """

    with open(destination, "w") as handle:
        for event in f.events:
            handle.write(json.dumps(event.record().model_dump()) + "\n")
    logger.info("Wrote %d event(s) to %s.", f.event_count, destination)


def write_counting_csv(f: PartitionFlow, destination: Path) -> None:
    """
    Write the counting processes as t,subset,count rows, one per jump of L(n, K).
    """

    rows = []
    for subset, process in counting_processes(f).items():
        for count, t in enumerate(process.times.tolist(), start=1):
            rows.append((t, ",".join(map(str, subset)), count))
    rows.sort()
    with open(destination, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["t", "subset", "count"])
        writer.writerows((repr(t), subset, count) for t, subset, count in rows)
    logger.info("Wrote %d counting row(s) to %s.", len(rows), destination)


def empty_flow(n: int, horizon: float, source: CsbpPath | None = None) -> PartitionFlow:
    return _from_columns(
        n,
        horizon,
        np.empty(0),
        np.empty(0, np.int8),
        [],
        np.empty(0),
        np.empty(0, np.int64),
        source,
    )
