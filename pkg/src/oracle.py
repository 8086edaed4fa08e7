"""
Exact sampler for the flow of subordinators of the Feller diffusion Psi(u) = u^2.

At time t the subordinator a -> S_{0,t}(a) has Laplace exponent
u_t(lambda) = lambda / (1 + lambda t) = int (1 - exp(-lambda h)) t^-2 exp(-h/t) dh:
no drift, no killing, Poisson(a / t) jumps of exponential size with mean t.
"""

import numpy as np
from pydantic import BaseModel, PositiveFloat, PositiveInt
from src.partitions import Partition, Seed, paintbox_subordinator


class FellerSubordinatorOracle(BaseModel, frozen=True):
    """
    S_{0,t}(a) for the Feller diffusion.
    """

    t: PositiveFloat
    a: PositiveFloat = 1.0

    def laplace(self, lam: float) -> float:
        """
        E[exp(-lambda S_{0,t}(a))] = exp(-a lambda / (1 + lambda t)).
        """

        return float(np.exp(-self.a * lam / (1.0 + lam * self.t)))

    @property
    def prob_zero(self) -> float:
        return float(np.exp(-self.a / self.t))


class SubordinatorSample(BaseModel, frozen=True):
    jumps: list[float]
    total: float
    drift_mass: float = 0.0


def sample_feller_subordinator(o: FellerSubordinatorOracle, seed: Seed = None) -> SubordinatorSample:
    """
    Draw the jumps of S_{0,t}(a) and their sum.
    """

    rng = np.random.default_rng(seed)
    count = rng.poisson(o.a / o.t)
    jumps = rng.exponential(o.t, size=count)
    return SubordinatorSample(jumps=jumps.tolist(), total=float(jumps.sum()))


def oracle_partition(
    o: FellerSubordinatorOracle, n: PositiveInt, seed: Seed = None
) -> tuple[Partition, SubordinatorSample]:
    """
    The paint-box of the rescaled jumps of one oracle draw, restricted to [n].
    """

    rng = np.random.default_rng(seed)
    sample = sample_feller_subordinator(o, rng)
    partition = paintbox_subordinator(
        sample.jumps, sample.total, sample.drift_mass, n, rng
    )
    return partition, sample
