"""
Seeding and statistical gates for the experiment harness.
"""

import logging
import math
from collections.abc import Sequence
from typing import Literal
import numpy as np
from numpy.random import SeedSequence
from pydantic import BaseModel
from scipy import stats

logger = logging.getLogger(__name__)

Z_THRESHOLD = 4.0
P_THRESHOLD = 1e-3

GateKind = Literal["z", "chi2", "ks", "bound"]

GateVerdict = Literal["Pass", "Fail", "Inconclusive"]


def seed_stream(master_seed: int, index: int) -> int:
    """
    The 64-bit seed of replicate ``index``, derived by SeedSequence spawning.
    """

    sequence = SeedSequence(entropy=master_seed, spawn_key=(index,))
    return int(sequence.generate_state(1, np.uint64)[0])


class Gate(BaseModel, frozen=True):
    """
    The outcome of one statistical check, with the threshold it was held to.
    """

    name: str
    kind: GateKind
    verdict: GateVerdict
    statistic: float | None = None
    threshold: float
    p_value: float | None = None
    mean: float | None = None
    se: float | None = None
    target: float | None = None
    slack: float = 0.0
    samples: int = 0

    @property
    def passed(self) -> bool:
        return self.verdict != "Fail"


def _finite(value: float) -> float | None:
    return float(value) if math.isfinite(value) else None


def z_gate(
    name: str,
    samples: Sequence[float] | np.ndarray,
    target: float,
    *,
    slack: float = 0.0,
    threshold: float = Z_THRESHOLD,
) -> Gate:
    """
    Pass iff |mean - target| <= threshold * s.e. + slack.

    With fewer than two samples the s.e. is undefined and the gate is Inconclusive.
    """

    values = np.asarray(samples, dtype=float)
    if values.size < 2:
        logger.warning("Gate %s is inconclusive with %d sample(s).", name, values.size)
        return Gate(
            name=name,
            kind="z",
            verdict="Inconclusive",
            threshold=threshold,
            mean=_finite(values.mean()) if values.size else None,
            target=target,
            slack=slack,
            samples=int(values.size),
        )
    mean = float(values.mean())
    se = float(values.std(ddof=1) / math.sqrt(values.size))
    gap = abs(mean - target)
    z = gap / se if se > 0.0 else (0.0 if gap == 0.0 else math.inf)
    passed = gap <= threshold * se + slack + 1e-12 * max(1.0, abs(target))
    return Gate(
        name=name,
        kind="z",
        verdict="Pass" if passed else "Fail",
        statistic=_finite(math.copysign(z, mean - target)),
        threshold=threshold,
        mean=mean,
        se=se,
        target=target,
        slack=slack,
        samples=int(values.size),
    )


def difference_gate(
    name: str,
    first: Sequence[float] | np.ndarray,
    second: Sequence[float] | np.ndarray,
    *,
    slack: float = 0.0,
    threshold: float = Z_THRESHOLD,
) -> Gate:
    """
    Paired samples: the mean of first - second is within the gate of 0.
    """

    difference = np.asarray(first, dtype=float) - np.asarray(second, dtype=float)
    return z_gate(name, difference, 0.0, slack=slack, threshold=threshold)


def chi_square_gate(
    name: str,
    observed: Sequence[int] | np.ndarray,
    probabilities: Sequence[float] | np.ndarray,
    *,
    threshold: float = P_THRESHOLD,
) -> Gate:
    """
    Goodness of fit of category counts to the given probabilities; pass iff p >= threshold.
    """

    observed = np.asarray(observed, dtype=float)
    expected = np.asarray(probabilities, dtype=float) * observed.sum()
    keep = expected > 0.0
    if observed[~keep].sum() > 0.0:
        return Gate(name=name, kind="chi2", verdict="Fail", threshold=threshold, p_value=0.0)
    if keep.sum() < 2:
        return Gate(name=name, kind="chi2", verdict="Inconclusive", threshold=threshold)
    statistic, p_value = stats.chisquare(observed[keep], expected[keep])
    return Gate(
        name=name,
        kind="chi2",
        verdict="Pass" if p_value >= threshold else "Fail",
        statistic=float(statistic),
        threshold=threshold,
        p_value=float(p_value),
        samples=int(observed.sum()),
    )


def homogeneity_gate(
    name: str,
    first: Sequence[int] | np.ndarray,
    second: Sequence[int] | np.ndarray,
    *,
    threshold: float = P_THRESHOLD,
) -> Gate:
    """
    Two samples of category counts come from the same law; pass iff p >= threshold.
    """

    table = np.asarray([first, second], dtype=float)
    table = table[:, table.sum(axis=0) > 0]
    if table.shape[1] < 2 or np.any(table.sum(axis=1) < 2):
        return Gate(name=name, kind="chi2", verdict="Inconclusive", threshold=threshold)
    statistic, p_value, _, _ = stats.chi2_contingency(table, correction=False)
    return Gate(
        name=name,
        kind="chi2",
        verdict="Pass" if p_value >= threshold else "Fail",
        statistic=float(statistic),
        threshold=threshold,
        p_value=float(p_value),
        samples=int(table.sum()),
    )


def ks_uniform_gate(
    name: str, samples: Sequence[float] | np.ndarray, *, threshold: float = P_THRESHOLD
) -> Gate:
    """
    Kolmogorov-Smirnov test against uniform[0, 1]; pass iff p >= threshold.
    """

    values = np.asarray(samples, dtype=float)
    if values.size < 2:
        return Gate(name=name, kind="ks", verdict="Inconclusive", threshold=threshold)
    result = stats.kstest(values, "uniform")
    return Gate(
        name=name,
        kind="ks",
        verdict="Pass" if result.pvalue >= threshold else "Fail",
        statistic=float(result.statistic),
        threshold=threshold,
        p_value=float(result.pvalue),
        samples=int(values.size),
    )


def bound_gate(name: str, value: float, bound: float) -> Gate:
    """
    A deterministic check: pass iff value <= bound.
    """

    return Gate(
        name=name,
        kind="bound",
        verdict="Pass" if value <= bound else "Fail",
        statistic=float(value),
        threshold=float(bound),
    )
