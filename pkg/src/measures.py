"""
Lévy measures for branching mechanisms.

Each family is a frozen pydantic model tagged by its ``family`` field, so a
mechanism config such as ``{"family": "stable", "index": 1.5, "scale": 1}``
validates straight into the right class. Every family answers the same
questions: moments over an interval, the jump part of Psi, the pushforward
integral behind the merger rates, the tail mass above a truncation threshold
and conditional sampling of the jumps above it.
"""

import math
from functools import cached_property
from typing import Annotated, Any, Callable, Literal, Sequence
import numpy as np
from numpy.random import Generator
from pydantic import (
    BaseModel,
    ConfigDict,
    Discriminator,
    Field,
    NonNegativeFloat,
    PositiveFloat,
    Tag,
    field_validator,
    model_validator,
)
from scipy import integrate, special
from src.errors import ConfigurationError, NumericalIntegrationError

EULER_GAMMA = float(np.euler_gamma)

QUAD_RELATIVE_TOLERANCE = 1e-8

Families = Literal["none", "exponential", "stable", "atoms", "tabulated"]


def quad(
    integrand: Callable[[float], float],
    lo: float,
    hi: float,
    *,
    points: Sequence[float] | None = None,
) -> float:
    """
    Adaptive quadrature with relative error 1e-8.

    Raises NumericalIntegrationError when scipy reports that the requested
    accuracy was not reached.
    """

    if hi <= lo:
        return 0.0
    inner = None
    if points is not None and math.isfinite(hi):
        inner = [p for p in points if lo < p < hi] or None
    result = integrate.quad(
        integrand,
        lo,
        hi,
        epsabs=0.0,
        epsrel=QUAD_RELATIVE_TOLERANCE,
        limit=500,
        points=inner,
        full_output=1,
    )
    if len(result) > 3:
        raise NumericalIntegrationError(
            f"Quadrature on [{lo:.3g}, {hi:.3g}] did not converge: {result[3]}"
        )
    return float(result[0])


def quad_half_line(integrand: Callable[[float], float], split: float) -> float:
    """
    Quadrature over (0, inf), split at a point where the integrand changes regime.
    """

    return quad(integrand, 0.0, split) + quad(integrand, split, math.inf)


class BaseMeasure(BaseModel, frozen=True):
    """
    A base model for Lévy measures on (0, inf).
    """

    model_config = ConfigDict(extra="forbid")

    family: Families

    def moment(self, power: float, lo: float = 0.0, hi: float = math.inf) -> float:
        """
        The integral of h**power over [lo, hi] against the measure (may be inf).
        """

        raise NotImplementedError

    def laplace_part(self, u: float) -> float:
        """
        The jump part of Psi: integral of exp(-hu) - 1 + hu 1{h <= 1}.
        """

        raise NotImplementedError

    def merger_integral(self, n: int, k: int, z: float) -> float:
        """
        The integral of x**k (1 - x)**(n - k) for x = h / (h + z).
        """

        raise NotImplementedError

    def sample_tail(self, rng: Generator, delta: float, size: int) -> np.ndarray:
        """
        Draw jump sizes from the measure conditioned on [delta, inf).
        """

        raise NotImplementedError

    def tail_mass(self, delta: float) -> float:
        """
        The mass of [delta, inf), the rate of the jumps kept by truncation.
        """

        return self.moment(0.0, delta, math.inf)

    @property
    def total_mass(self) -> float:
        """
        The total mass of the measure (inf for infinite-activity families).
        """

        return self.moment(0.0)

    @property
    def small_jump_variation(self) -> float:
        """
        The integral of h over (0, 1]; finite iff the small jumps have finite variation.
        """

        return self.moment(1.0, 0.0, 1.0)

    @property
    def large_jump_mean(self) -> float:
        """
        The integral of h over (1, inf), which shifts Psi'(0+).
        """

        return self.moment(1.0, math.nextafter(1.0, math.inf), math.inf)

    @property
    def exact_small_u_order(self) -> float | None:
        """
        The exponent beta with Psi_nu(u) ~ c u**beta as u -> 0 when it is below 1.
        """

        return None

    @property
    def exact_large_u_order(self) -> float | None:
        """
        The exponent beta with Psi_nu(u) ~ c u**beta as u -> inf when it exceeds 1.
        """

        return None


class NoMeasure(BaseMeasure, frozen=True):
    """
    The zero measure: no jumps at all.
    """

    family: Literal["none"] = "none"

    def moment(self, power: float, lo: float = 0.0, hi: float = math.inf) -> float:
        return 0.0

    def laplace_part(self, u: float) -> float:
        return 0.0

    def merger_integral(self, n: int, k: int, z: float) -> float:
        return 0.0

    def sample_tail(self, rng: Generator, delta: float, size: int) -> np.ndarray:
        return np.empty(0)


class ExponentialDensity(BaseMeasure, frozen=True):
    """
    The density scale * exp(-rate * h) on (0, inf).
    """

    family: Literal["exponential"] = "exponential"
    rate: PositiveFloat
    scale: PositiveFloat = 1.0

    def moment(self, power: float, lo: float = 0.0, hi: float = math.inf) -> float:
        if hi <= lo:
            return 0.0
        if power <= -1.0 and lo <= 0.0:
            return math.inf
        a = power + 1.0
        if lo <= 0.0:
            lower = 0.0
        else:
            lower = float(special.gammainc(a, self.rate * lo))
        upper = 1.0 if math.isinf(hi) else float(special.gammainc(a, self.rate * hi))
        return self.scale * float(special.gamma(a)) / self.rate**a * (upper - lower)

    def laplace_part(self, u: float) -> float:
        compound = -self.scale * u / (self.rate * (self.rate + u))
        return compound + u * self.moment(1.0, 0.0, 1.0)

    def merger_integral(self, n: int, k: int, z: float) -> float:
        return quad_half_line(
            lambda h: self.scale
            * math.exp(-self.rate * h)
            * (h / (h + z)) ** k
            * (z / (h + z)) ** (n - k),
            z,
        )

    def sample_tail(self, rng: Generator, delta: float, size: int) -> np.ndarray:
        return delta + rng.exponential(1.0 / self.rate, size)


class StableDensity(BaseMeasure, frozen=True):
    """
    The stable density scale * h**(-1 - index) on (0, inf), index in (0, 2).
    """

    family: Literal["stable"] = "stable"
    index: float = Field(gt=0.0, lt=2.0)
    scale: PositiveFloat = 1.0

    def moment(self, power: float, lo: float = 0.0, hi: float = math.inf) -> float:
        if hi <= lo:
            return 0.0
        exponent = power - self.index
        if abs(exponent) < 1e-12:
            if lo <= 0.0 or math.isinf(hi):
                return math.inf
            return self.scale * math.log(hi / lo)
        if exponent > 0.0:
            if math.isinf(hi):
                return math.inf
            return self.scale * (hi**exponent - lo**exponent) / exponent
        if lo <= 0.0:
            return math.inf
        upper = 0.0 if math.isinf(hi) else hi**exponent
        return self.scale * (upper - lo**exponent) / exponent

    def laplace_part(self, u: float) -> float:
        if u <= 0.0:
            return 0.0
        beta, c = self.index, self.scale
        if abs(beta - 1.0) < 1e-12:
            return c * (u * math.log(u) + (EULER_GAMMA - 1.0) * u)
        power = c * float(special.gamma(-beta)) * u**beta
        if beta < 1.0:
            return power + c * u / (1.0 - beta)
        return power - c * u / (beta - 1.0)

    def merger_integral(self, n: int, k: int, z: float) -> float:
        return quad_half_line(
            lambda h: self.scale
            * h ** (-1.0 - self.index)
            * (h / (h + z)) ** k
            * (z / (h + z)) ** (n - k),
            z,
        )

    def sample_tail(self, rng: Generator, delta: float, size: int) -> np.ndarray:
        return delta * (1.0 - rng.random(size)) ** (-1.0 / self.index)

    @property
    def exact_small_u_order(self) -> float | None:
        return self.index if self.index < 1.0 else None

    @property
    def exact_large_u_order(self) -> float | None:
        return self.index if self.index > 1.0 else None


class FiniteAtoms(BaseMeasure, frozen=True):
    """
    Finitely many atoms: a list of (size, mass) pairs.
    """

    family: Literal["atoms"] = "atoms"
    atoms: Sequence[tuple[PositiveFloat, PositiveFloat]] = Field(min_length=1)

    @cached_property
    def sizes(self) -> np.ndarray:
        """
        The atom locations h_i.
        """
        return np.array([h for h, _ in self.atoms], dtype=float)

    @cached_property
    def masses(self) -> np.ndarray:
        """
        The atom masses c_i.
        """
        return np.array([c for _, c in self.atoms], dtype=float)

    def moment(self, power: float, lo: float = 0.0, hi: float = math.inf) -> float:
        h, c = self.sizes, self.masses
        inside = (h >= lo) & (h <= hi)
        return float(np.sum(c[inside] * h[inside] ** power))

    def laplace_part(self, u: float) -> float:
        h, c = self.sizes, self.masses
        return float(np.sum(c * (np.exp(-h * u) - 1.0 + h * u * (h <= 1.0))))

    def merger_integral(self, n: int, k: int, z: float) -> float:
        h, c = self.sizes, self.masses
        x = h / (h + z)
        return float(np.sum(c * x**k * (1.0 - x) ** (n - k)))

    def sample_tail(self, rng: Generator, delta: float, size: int) -> np.ndarray:
        h, c = self.sizes, self.masses
        kept = h >= delta
        if not kept.any():
            return np.empty(0)
        weights = c[kept] / c[kept].sum()
        return rng.choice(h[kept], size=size, p=weights)


class TabulatedDensity(BaseMeasure, frozen=True):
    """
    A density given on a grid of (h, density) pairs, linear in between and zero outside.
    """

    family: Literal["tabulated"] = "tabulated"
    grid: Sequence[tuple[PositiveFloat, NonNegativeFloat]] = Field(min_length=2)

    @field_validator("grid")
    @classmethod
    def check_grid(
        cls, value: Sequence[tuple[float, float]]
    ) -> Sequence[tuple[float, float]]:
        """
        Grid locations must be strictly increasing.
        """

        locations = [h for h, _ in value]
        if any(b <= a for a, b in zip(locations, locations[1:])):
            raise ValueError("Tabulated grid locations must be strictly increasing")
        return value

    @model_validator(mode="after")
    def check_values(self) -> "TabulatedDensity":
        """
        The measure must integrate 1 ^ h**2.
        """

        mass = self.moment(2.0, 0.0, 1.0) + self.moment(0.0, 1.0, math.inf)
        if not math.isfinite(mass):
            raise ValueError("Tabulated density does not integrate (1 ^ h^2)")
        return self

    @cached_property
    def locations(self) -> np.ndarray:
        """
        The grid locations.
        """
        return np.array([h for h, _ in self.grid], dtype=float)

    @cached_property
    def densities(self) -> np.ndarray:
        """
        The density values on the grid.
        """
        return np.array([d for _, d in self.grid], dtype=float)

    def density(self, h: float) -> float:
        """
        The interpolated density at h.
        """

        return float(
            np.interp(h, self.locations, self.densities, left=0.0, right=0.0)
        )

    def _integrate(
        self, integrand: Callable[[float], float], lo: float, hi: float
    ) -> float:
        locations = self.locations
        lo, hi = max(lo, float(locations[0])), min(hi, float(locations[-1]))
        return quad(
            lambda h: integrand(h) * self.density(h),
            lo,
            hi,
            points=[*locations.tolist(), 1.0],
        )

    def moment(self, power: float, lo: float = 0.0, hi: float = math.inf) -> float:
        return self._integrate(lambda h: h**power, lo, hi)

    def laplace_part(self, u: float) -> float:
        return self._integrate(
            lambda h: math.expm1(-h * u) + (h * u if h <= 1.0 else 0.0),
            0.0,
            math.inf,
        )

    def merger_integral(self, n: int, k: int, z: float) -> float:
        return self._integrate(
            lambda h: (h / (h + z)) ** k * (z / (h + z)) ** (n - k), 0.0, math.inf
        )

    def sample_tail(self, rng: Generator, delta: float, size: int) -> np.ndarray:
        locations, densities = self.locations, self.densities
        if delta >= locations[-1]:
            return np.empty(0)
        keep = locations > delta
        xs = np.concatenate([[max(delta, locations[0])], locations[keep]])
        ys = np.interp(xs, locations, densities, left=0.0, right=0.0)
        cdf = integrate.cumulative_trapezoid(ys, xs, initial=0.0)
        if cdf[-1] <= 0.0:
            raise ConfigurationError("Tabulated density has no mass above the threshold")
        return np.interp(rng.random(size) * cdf[-1], cdf, xs)


def get_measure_family(data: Any) -> str | None:
    """
    Get the family tag from raw config or from a model instance.
    """

    if isinstance(data, dict):
        return data.get("family")
    return getattr(data, "family", None)


type LevyMeasureSpec = Annotated[
    Annotated[NoMeasure, Tag("none")]
    | Annotated[ExponentialDensity, Tag("exponential")]
    | Annotated[StableDensity, Tag("stable")]
    | Annotated[FiniteAtoms, Tag("atoms")]
    | Annotated[TabulatedDensity, Tag("tabulated")],
    Discriminator(get_measure_family),
]
