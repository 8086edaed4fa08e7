"""
Branching mechanisms and the cumulant semigroup.

A branching mechanism is the triplet (alpha, sigma, nu) with

    Psi(u) = alpha u + sigma^2 u^2 / 2 + int (exp(-hu) - 1 + hu 1{h <= 1}) nu(dh)

and the Laplace functional of the CSBP is E[exp(-lambda Z_t)] = exp(-u_t(lambda))
where du/dt = -Psi(u), u_0 = lambda.
"""

import logging
import math
from functools import cached_property
from typing import Literal
from pydantic import BaseModel, ConfigDict, Field, NonNegativeFloat, PositiveFloat
from scipy import integrate, optimize
from src.errors import BlowUpError, ClassificationError, DomainError
from src.measures import (
    EULER_GAMMA,
    LevyMeasureSpec,
    NoMeasure,
    FiniteAtoms,
    StableDensity,
    quad,
)

logger = logging.getLogger(__name__)

GAMMA_CAP = 1e12
GAMMA_RELATIVE_TOLERANCE = 1e-10
GREY_DIVERGENCE_THRESHOLD = 1e6
GREY_MAX_DOUBLINGS = 120
GREY_RATIO_LIMIT = 0.95
ODE_CEILING = 1e12

Criticality = Literal["subcritical", "critical", "supercritical"]

DustRegime = Literal["SingletonsAlways", "NoSingletons"]


class BranchingMechanism(BaseModel, frozen=True):
    """
    The triplet (alpha, sigma, nu) defining Psi, with cached classification flags.
    """

    model_config = ConfigDict(extra="forbid")

    alpha: float = 0.0
    sigma: NonNegativeFloat = 0.0
    nu: LevyMeasureSpec = Field(default_factory=NoMeasure)

    def psi(self, u: float) -> float:
        """
        Evaluate Psi at u >= 0.
        """

        if u < 0.0:
            raise DomainError(f"Psi is defined on [0, inf), got u={u}")
        return self.alpha * u + 0.5 * self.sigma**2 * u * u + self.nu.laplace_part(u)

    @cached_property
    def psi_prime_zero(self) -> float:
        """
        Psi'(0+) = alpha - int_{(1, inf)} h nu(dh), possibly -inf.
        """

        return self.alpha - self.nu.large_jump_mean

    @cached_property
    def is_degenerate(self) -> bool:
        """
        Psi is identically zero: the total mass never moves.
        """

        return self.alpha == 0.0 and self.sigma == 0.0 and isinstance(self.nu, NoMeasure)

    @cached_property
    def is_finite_variation(self) -> bool:
        """
        The Lévy process has finite-variation paths: sigma = 0 and int_0^1 h nu(dh) < inf.
        """

        return self.sigma == 0.0 and math.isfinite(self.nu.small_jump_variation)

    @cached_property
    def levy_drift(self) -> float:
        """
        The drift of the finite-variation Lévy process, -alpha - int_0^1 h nu(dh).
        """

        if not self.is_finite_variation:
            return math.nan
        return -self.alpha - self.nu.small_jump_variation

    @cached_property
    def is_compound_poisson(self) -> bool:
        """
        The Lévy process is a pure finite-activity jump process with zero drift.
        """

        mass = self.nu.total_mass
        if not self.is_finite_variation or not 0.0 < mass < math.inf:
            return False
        scale = max(abs(self.alpha), self.nu.small_jump_variation, 1.0)
        return abs(self.levy_drift) <= 1e-12 * scale

    @cached_property
    def gamma(self) -> float:
        """
        The largest root sup{u >= 0 : Psi(u) <= 0}.
        """

        return largest_root(self)

    @cached_property
    def is_conservative(self) -> bool:
        """
        Grey's condition: int_{0+} du / |Psi(u)| = inf.
        """

        return grey_integral_diverges(self, "zero")

    @cached_property
    def extinction_possible_in_finite_time(self) -> bool:
        """
        Psi(v) > 0 for large v and int^inf du / Psi(u) < inf.
        """

        if math.isinf(self.gamma):
            return False
        return not grey_integral_diverges(self, "infinity")


class LaplaceFlow(BaseModel, frozen=True):
    """
    The cumulant semigroup u_t(lambda) of a mechanism, with solver settings.
    """

    model_config = ConfigDict(extra="forbid")

    mechanism: BranchingMechanism
    tolerance: PositiveFloat = 1e-9
    max_step: PositiveFloat = 0.05


class Classification(BaseModel, frozen=True):
    """
    The long-term behaviour of a Psi-CSBP.
    """

    conservative: bool
    extinction_in_finite_time: bool
    gamma: float
    prob_extinct: float
    criticality: Criticality
    psi_prime_zero: float
    finite_variation: bool
    compound_poisson: bool


def eval_psi(m: BranchingMechanism, u: float) -> float:
    """
    Evaluate the branching mechanism Psi at u >= 0.
    """

    return m.psi(u)


def psi_derivative_at_zero(m: BranchingMechanism) -> float:
    """
    Psi'(0+), which decides sub/critical/supercriticality.
    """

    return m.psi_prime_zero


def solve_ut(flow: LaplaceFlow, t: float, lam: float) -> float:
    """
    Solve du/dt = -Psi(u), u_0 = lambda, up to time t with adaptive RK45.

    Raises BlowUpError when u escapes to infinity before t; once u hits 0 it
    stays there.
    """

    if t < 0.0 or lam <= 0.0:
        raise DomainError(f"solve_ut needs t >= 0 and lambda > 0, got t={t}, lambda={lam}")
    if t == 0.0:
        return lam

    m = flow.mechanism

    def escape(_: float, u: list[float]) -> float:
        return ODE_CEILING - u[0]

    def extinct(_: float, u: list[float]) -> float:
        return u[0]

    escape.terminal = True  # type: ignore[attr-defined]
    extinct.terminal = True  # type: ignore[attr-defined]
    extinct.direction = -1  # type: ignore[attr-defined]

    solution = integrate.solve_ivp(
        lambda _, u: [-m.psi(max(u[0], 0.0))],
        (0.0, t),
        [lam],
        method="RK45",
        rtol=flow.tolerance,
        atol=flow.tolerance,
        max_step=flow.max_step,
        events=[escape, extinct],
    )
    if not solution.success:
        raise ClassificationError(f"u_t solver failed: {solution.message}")
    if len(solution.t_events[0]) > 0:
        raise BlowUpError(float(solution.t_events[0][0]))
    if len(solution.t_events[1]) > 0:
        return 0.0
    return max(float(solution.y[0, -1]), 0.0)


def solve_ut_boundary(
    flow: LaplaceFlow, t: float, side: Literal["infinity", "zero"]
) -> float:
    """
    u_t(inf) or u_t(0+).

    u_t(inf) solves int_u^inf dv / Psi(v) = t and is infinite unless extinction
    in finite time is possible; u_t(0+) solves int_0^u dv / (-Psi(v)) = t and is
    zero for conservative mechanisms.
    """

    if t < 0.0:
        raise DomainError(f"t must be nonnegative, got {t}")
    m = flow.mechanism
    if side == "infinity":
        if t == 0.0 or not m.extinction_possible_in_finite_time:
            return math.inf
        return _invert_tail_integral(m, t)
    if t == 0.0 or m.is_conservative:
        return 0.0
    return _invert_head_integral(m, t)


def lifetime_cdf(flow: LaplaceFlow, t: float) -> float:
    """
    P(T <= t) = exp(-u_t(inf)) + 1 - exp(-u_t(0+)).
    """

    extinct = math.exp(-solve_ut_boundary(flow, t, "infinity"))
    exploded = -math.expm1(-solve_ut_boundary(flow, t, "zero"))
    return extinct + exploded


def _invert_tail_integral(m: BranchingMechanism, t: float) -> float:
    if isinstance(m.nu, NoMeasure) and m.sigma > 0.0:
        return _quadratic_tail_inverse(m.alpha, 0.5 * m.sigma**2, t)

    floor = max(m.gamma, 0.0)

    def tail(v: float) -> float:
        split = floor + 2.0 * (v - floor)
        return quad(lambda u: 1.0 / m.psi(u), v, split) + quad(
            lambda u: 1.0 / m.psi(u), split, math.inf
        )

    hi = floor + 1.0
    while tail(hi) > t:
        hi = floor + 2.0 * (hi - floor)
        if hi > GAMMA_CAP:
            raise ClassificationError("u_t(inf) exceeds the search cap")
    lo = hi
    while tail(lo) < t:
        lo = floor + (lo - floor) / 2.0
        if lo - floor < 1e-300:
            raise ClassificationError("u_t(inf) bracket collapsed onto gamma")
    if lo == hi:
        return hi
    return float(
        optimize.brentq(lambda v: tail(v) - t, lo, hi, rtol=GAMMA_RELATIVE_TOLERANCE)
    )


def _quadratic_tail_inverse(alpha: float, b: float, t: float) -> float:
    """
    u_t(inf) for Psi(u) = alpha u + b u^2, from 1/u_t = b (exp(alpha t) - 1) / alpha.
    """

    if alpha == 0.0:
        return 1.0 / (b * t)
    return alpha / (b * math.expm1(alpha * t))


def _invert_head_integral(m: BranchingMechanism, t: float) -> float:
    def head(v: float) -> float:
        return quad(lambda u: -1.0 / m.psi(u), 0.0, v)

    top = m.gamma if math.isfinite(m.gamma) else math.inf
    hi = 1.0 if math.isinf(top) else top / 2.0
    while head(hi) < t:
        hi = 2.0 * hi if math.isinf(top) else top - (top - hi) / 2.0
        if hi > GAMMA_CAP:
            raise ClassificationError("u_t(0+) exceeds the search cap")
    return float(
        optimize.brentq(lambda v: head(v) - t, 0.0, hi, rtol=GAMMA_RELATIVE_TOLERANCE)
    )


def largest_root(m: BranchingMechanism) -> float:
    """
    gamma = sup{u >= 0 : Psi(u) <= 0} by doubling a bracket and bisection.
    """

    if m.is_degenerate:
        return math.inf
    if m.psi_prime_zero >= 0.0:
        return 0.0
    hi = 1.0
    while m.psi(hi) <= 0.0:
        hi *= 2.0
        if hi > GAMMA_CAP:
            return math.inf
    lo = hi / 2.0
    while m.psi(lo) > 0.0:
        lo /= 2.0
        if lo < 1e-300:
            raise ClassificationError("Psi'(0+) < 0 but Psi is positive near 0")
    if m.psi(lo) == 0.0:
        return lo
    try:
        return float(
            optimize.brentq(m.psi, lo, hi, rtol=GAMMA_RELATIVE_TOLERANCE, xtol=1e-300)
        )
    except (ValueError, RuntimeError) as e:
        raise ClassificationError(f"Root finding for gamma failed: {e}") from e


def grey_integral_diverges(
    m: BranchingMechanism, at: Literal["zero", "infinity"]
) -> bool:
    """
    Decide whether int du / |Psi(u)| diverges near 0 or near infinity.

    The analytic leading-order behaviour settles most mechanisms; the rest go
    through the numeric dyadic test.
    """

    if at == "zero":
        if math.isfinite(m.psi_prime_zero):
            return True
        if m.nu.exact_small_u_order is not None:
            return False
        start = m.gamma / 2.0 if math.isfinite(m.gamma) else 1.0
        return dyadic_integral_diverges(lambda u: abs(m.psi(u)), start, shrink=True)

    if m.sigma > 0.0:
        return False
    if m.is_finite_variation:
        return True
    if m.nu.exact_large_u_order is not None:
        return False
    start = max(2.0 * m.gamma, 1.0)
    return dyadic_integral_diverges(m.psi, start, shrink=False)


def dyadic_integral_diverges(psi, start: float, *, shrink: bool) -> bool:
    """
    Integrate 1/psi over dyadic shells towards 0 (shrink) or infinity.

    Divergence is declared when the partial integral passes 1e6 or the shell
    contributions stop decaying geometrically.
    """

    partial, previous, ratios = 0.0, None, []
    for k in range(GREY_MAX_DOUBLINGS):
        if shrink:
            lo, hi = start * 2.0 ** (-k - 1), start * 2.0**-k
        else:
            lo, hi = start * 2.0**k, start * 2.0 ** (k + 1)
        try:
            shell = quad(lambda u: 1.0 / psi(u), lo, hi)
        except ArithmeticError as e:
            raise ClassificationError(f"Grey integral failed on [{lo}, {hi}]: {e}") from e
        partial += shell
        if partial > GREY_DIVERGENCE_THRESHOLD:
            return True
        if previous is not None and previous > 0.0:
            ratios.append(shell / previous)
        previous = shell
        if shell <= 1e-15 * partial:
            return False
    tail = ratios[-8:]
    return sum(tail) / len(tail) >= GREY_RATIO_LIMIT


def classify(m: BranchingMechanism) -> Classification:
    """
    Classify the long-term behaviour of the Psi-CSBP.
    """

    gamma = m.gamma
    slope = m.psi_prime_zero
    if slope > 0.0:
        criticality: Criticality = "subcritical"
    elif slope == 0.0:
        criticality = "critical"
    else:
        criticality = "supercritical"
    record = Classification(
        conservative=m.is_conservative,
        extinction_in_finite_time=m.extinction_possible_in_finite_time,
        gamma=gamma,
        prob_extinct=0.0 if math.isinf(gamma) else math.exp(-gamma),
        criticality=criticality,
        psi_prime_zero=slope,
        finite_variation=m.is_finite_variation,
        compound_poisson=m.is_compound_poisson,
    )
    logger.debug("Classified mechanism %s as %s.", m, record)
    return record


def classify_dust(m: BranchingMechanism) -> DustRegime:
    """
    Singletons survive in the flow of partitions iff the Lévy process has finite variation.
    """

    return "SingletonsAlways" if m.is_finite_variation else "NoSingletons"


def feller() -> BranchingMechanism:
    """
    The Feller diffusion Psi(u) = u^2.
    """

    return BranchingMechanism(sigma=math.sqrt(2.0))


def pure_drift(alpha: float = 1.0) -> BranchingMechanism:
    """
    The deterministic mechanism Psi(u) = alpha u.
    """

    return BranchingMechanism(alpha=alpha)


def neveu() -> BranchingMechanism:
    """
    The Neveu mechanism Psi(u) = u ln u.
    """

    return BranchingMechanism(
        alpha=1.0 - EULER_GAMMA, nu=StableDensity(index=1.0, scale=1.0)
    )


def neveu_feller() -> BranchingMechanism:
    """
    Psi(u) = u ln u + u^2.
    """

    return BranchingMechanism(
        alpha=1.0 - EULER_GAMMA,
        sigma=math.sqrt(2.0),
        nu=StableDensity(index=1.0, scale=1.0),
    )


def negative_sqrt() -> BranchingMechanism:
    """
    The explosive mechanism Psi(u) = -sqrt(u) (a 1/2-stable subordinator).
    """

    scale = 1.0 / (2.0 * math.sqrt(math.pi))
    return BranchingMechanism(
        alpha=-2.0 * scale, nu=StableDensity(index=0.5, scale=scale)
    )


def compound_poisson(size: float = 1.0, mass: float = 1.0) -> BranchingMechanism:
    """
    A single-atom compound Poisson mechanism with zero Lévy drift.
    """

    nu = FiniteAtoms(atoms=[(size, mass)])
    return BranchingMechanism(alpha=-nu.small_jump_variation, nu=nu)
