"""
Partitions of [n], the metric d_P, the Coag operator and paint-box samplers.

A partition is stored as a label array: ``labels[i]`` is the (1-based) index of
the block holding element i + 1, blocks numbered by increasing least element.
A prefix of canonical labels is itself canonical, which is what makes
restriction and the metric cheap.
"""

from collections.abc import Sequence
from typing import Any
import numpy as np
from numpy.random import Generator
from pydantic import (
    BaseModel,
    ConfigDict,
    NonNegativeFloat,
    PositiveInt,
    field_validator,
    model_validator,
)
from src.errors import ConsistencyError, DimensionError, DomainError

TOTAL_RELATIVE_TOLERANCE = 1e-9

type Seed = int | Generator | None


def canonical_labels(labels: Sequence[int] | np.ndarray) -> np.ndarray:
    """
    Renumber blocks 1, 2, ... in order of their least element.
    """

    labels = np.asarray(labels)
    if labels.size == 0:
        return labels.astype(np.int64)
    _, first, inverse = np.unique(labels, return_index=True, return_inverse=True)
    rank = np.empty(len(first), dtype=np.int64)
    rank[np.argsort(first)] = np.arange(1, len(first) + 1)
    return rank[inverse.reshape(-1)]


class Partition(BaseModel, frozen=True):
    """
    A partition of [n] in canonical label form.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    labels: np.ndarray

    @field_validator("labels", mode="before")
    @classmethod
    def canonicalize(cls, value: Any) -> np.ndarray:
        labels = canonical_labels(value)
        if labels.ndim != 1 or labels.size == 0:
            raise DomainError("a partition needs n >= 1 labels")
        labels.setflags(write=False)
        return labels

    @property
    def n(self) -> int:
        """
        The size of the ground set.
        """
        return int(self.labels.size)

    @property
    def block_count(self) -> int:
        """
        The number of blocks.
        """
        return int(self.labels.max())

    @property
    def blocks(self) -> list[list[int]]:
        """
        The blocks, in least-element order, elements ascending and 1-based.
        """

        order = np.argsort(self.labels, kind="stable")
        bounds = np.cumsum(np.bincount(self.labels)[1:])[:-1]
        return [(part + 1).tolist() for part in np.split(order, bounds)]

    def block_sizes(self) -> np.ndarray:
        """
        Block sizes in least-element order.
        """

        return np.bincount(self.labels)[1:]

    def block_of(self, element: int) -> int:
        """
        The block index of a 1-based element.
        """

        return int(self.labels[element - 1])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Partition):
            return NotImplemented
        return np.array_equal(self.labels, other.labels)

    def __hash__(self) -> int:
        return hash(self.labels.tobytes())

    def __repr__(self) -> str:
        return f"Partition({self.blocks})"


class MassPartition(BaseModel, frozen=True):
    """
    A nonincreasing sequence of masses with sum at most 1; the rest is dust.
    """

    model_config = ConfigDict(extra="forbid")

    s: tuple[NonNegativeFloat, ...] = ()

    @field_validator("s")
    @classmethod
    def check_masses(cls, s: tuple[float, ...]) -> tuple[float, ...]:
        """
        Masses must be nonincreasing with a sum of at most 1.
        """

        if any(a < b for a, b in zip(s, s[1:])):
            raise ValueError("mass partition must be nonincreasing")
        if sum(s) > 1.0 + 1e-12:
            raise ValueError(f"mass partition sums to {sum(s)} > 1")
        return s

    @property
    def dust(self) -> float:
        return max(1.0 - sum(self.s), 0.0)


class PartitionRecord(BaseModel, frozen=True):
    """
    The JSON encoding {"n": int, "blocks": [[ints...], ...]}.
    """

    model_config = ConfigDict(extra="forbid")

    n: PositiveInt
    blocks: list[list[PositiveInt]]

    @model_validator(mode="after")
    def check_cover(self) -> "PartitionRecord":
        elements = sorted(i for block in self.blocks for i in block)
        if elements != list(range(1, self.n + 1)):
            raise ValueError("blocks must partition 1..n")
        return self


def identity(n: int) -> Partition:
    """
    0_[n], the partition into singletons.
    """

    if n < 1:
        raise DomainError(f"n must be positive, got {n}")
    return Partition(labels=np.arange(1, n + 1))


def one_block(n: int) -> Partition:
    """
    1_[n], the trivial partition with a single block.
    """

    if n < 1:
        raise DomainError(f"n must be positive, got {n}")
    return Partition(labels=np.ones(n, dtype=np.int64))


def from_blocks(blocks: Sequence[Sequence[int]], n: int | None = None) -> Partition:
    """
    Build a partition from 1-based blocks; n defaults to the largest element.
    """

    size = n or max(i for block in blocks for i in block)
    record = PartitionRecord(n=size, blocks=[list(block) for block in blocks])
    labels = np.zeros(size, dtype=np.int64)
    for index, block in enumerate(record.blocks, start=1):
        labels[np.asarray(block) - 1] = index
    return Partition(labels=labels)


def to_json(pi: Partition) -> str:
    """
    Encode a partition as {"n": ..., "blocks": [...]}.
    """

    return PartitionRecord(n=pi.n, blocks=pi.blocks).model_dump_json()


def from_json(document: str) -> Partition:
    """
    Decode and validate a partition written by to_json.
    """

    record = PartitionRecord.model_validate_json(document)
    return from_blocks(record.blocks, record.n)


def restrict(pi: Partition, m: int) -> Partition:
    """
    The restriction pi^[m] of pi to [m].
    """

    if not 1 <= m <= pi.n:
        raise DimensionError(f"cannot restrict a partition of [{pi.n}] to [{m}]")
    return Partition(labels=pi.labels[:m])


def coag(pi: Partition, pi_prime: Partition) -> Partition:
    """
    Coag(pi, pi'): block i of the result is the union of the blocks pi(j), j in pi'(i).
    """

    if pi_prime.n < pi.block_count:
        raise DimensionError(
            f"pi has {pi.block_count} blocks but pi' only covers [{pi_prime.n}]"
        )
    return Partition(labels=pi_prime.labels[pi.labels - 1])


def distance(pi: Partition, pi_prime: Partition) -> float:
    """
    d(pi, pi') = 2^-i with i the largest j such that pi^[j] = pi'^[j].

    Both partitions are compared on their common prefix; equality there gives 0.
    """

    m = min(pi.n, pi_prime.n)
    mismatch = np.flatnonzero(pi.labels[:m] != pi_prime.labels[:m])
    if len(mismatch) == 0:
        return 0.0
    return 2.0 ** -int(mismatch[0])


def permute(pi: Partition, tau: Sequence[int] | np.ndarray) -> Partition:
    """
    The image of pi under the permutation tau of [n], given 1-based: blocks tau(B).
    """

    tau = np.asarray(tau)
    if sorted(tau.tolist()) != list(range(1, pi.n + 1)):
        raise DomainError("tau must be a permutation of 1..n")
    labels = np.empty(pi.n, dtype=np.int64)
    labels[tau - 1] = pi.labels
    return Partition(labels=labels)


def _paint(widths: np.ndarray, n: int, rng: Generator) -> Partition:
    """
    Throw n uniforms on consecutive intervals of the given widths; the rest is dust.
    """

    uniforms = rng.random(n)
    slot = np.searchsorted(np.cumsum(widths), uniforms, side="right")
    dust = slot >= len(widths)
    labels = np.where(dust, len(widths) + 1 + np.arange(n), slot + 1)
    return Partition(labels=labels)


def paintbox_mass(s: MassPartition, n: int, seed: Seed = None) -> Partition:
    """
    The paint-box based on s, restricted to [n].
    """

    if n < 1:
        raise DomainError(f"n must be positive, got {n}")
    widths = np.asarray([x for x in s.s if x > 0.0], dtype=float)
    return _paint(widths, n, np.random.default_rng(seed))


def paintbox_subordinator(
    jumps: Sequence[float] | np.ndarray,
    total: float,
    drift_mass: float,
    n: int,
    seed: Seed = None,
) -> Partition:
    """
    The paint-box of the jumps of a subordinator at level a, total = X_a.

    Elements i, j share a block iff their uniforms land in the same jump of X;
    the drift part produces dust. A null total gives 1_[n].
    """

    if n < 1:
        raise DomainError(f"n must be positive, got {n}")
    if total == 0.0:
        return one_block(n)
    jumps = np.asarray(jumps, dtype=float)
    if total < 0.0 or np.any(jumps <= 0.0) or drift_mass < 0.0:
        raise ConsistencyError("jumps and total must be positive, drift nonnegative")
    if abs(jumps.sum() + drift_mass - total) > TOTAL_RELATIVE_TOLERANCE * total:
        raise ConsistencyError(
            f"jumps sum to {jumps.sum()} + drift {drift_mass} but total is {total}"
        )
    return _paint(jumps / total, n, np.random.default_rng(seed))


def block_frequencies(pi: Partition) -> list[float]:
    """
    Block sizes divided by n, in least-element order.
    """

    return (pi.block_sizes() / pi.n).tolist()


def dust_fraction(pi: Partition) -> float:
    """
    The fraction of elements sitting in singleton blocks.
    """

    sizes = pi.block_sizes()
    return float(np.count_nonzero(sizes == 1) / pi.n)


def random_partition(n: int, seed: Seed = None, blocks: int | None = None) -> Partition:
    """
    A random partition of [n] with at most the given number of blocks.
    """

    rng = np.random.default_rng(seed)
    k = blocks or int(rng.integers(1, n + 1))
    return Partition(labels=rng.integers(1, k + 1, size=n))
