"""
Spectrally positive Lévy paths and the Lamperti time change to CSBP paths.

Conventions: Psi is the Laplace exponent of the Lévy process Y, i.e.
E[exp(-u Y_t)] = exp(t Psi(u)), so Y has drift -alpha, Brownian part sigma and
positive jumps from nu. Jumps below the truncation threshold are replaced by
their compensator (and optionally a Gaussian of the same variance).

Every simulated path is a cadlag step function: ``values[k]`` holds on
``[times[k], times[k + 1])``. The Lamperti transforms are then exact on the
skeleton, jump times and sizes included.
"""

import csv
import logging
import math
from pathlib import Path
from typing import Literal
import numpy as np
from pydantic import BaseModel, ConfigDict
from src.errors import ConfigurationError, DomainError
from src.mechanism import BranchingMechanism

logger = logging.getLogger(__name__)

EXTINCTION_FLOOR = 1e-12
EXPLOSION_CEILING = 1e12
GAUSSIAN_CORRECTION_MIN_VARIANCE = 1e-12
GRID_SLACK = 1e-9
LEVEL_FLOOR = 1e-12
NORMAL_BLOCK = 4096
TIME_ROUNDING = 1e-12

Clock = Literal["levy", "lamperti"]

LifetimeKind = Literal["Alive", "Extinct", "Exploded"]


class Lifetime(BaseModel, frozen=True):
    """
    How a CSBP path ended: alive at the horizon, extinct at T_0 or exploded at T_inf.
    """

    kind: LifetimeKind
    time: float


class LevyPath(BaseModel, frozen=True):
    """
    A simulated Lévy skeleton with its explicit jump list.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    times: np.ndarray
    values: np.ndarray
    jump_index: np.ndarray
    truncation: float = EXTINCTION_FLOOR
    gaussian_correction_used: bool = False
    stopped_at_zero: bool = False
    hit_ceiling: bool = False

    @property
    def jump_times(self) -> np.ndarray:
        """
        The times of the simulated jumps.
        """
        return self.times[self.jump_index]

    @property
    def jump_sizes(self) -> np.ndarray:
        """
        The sizes of the simulated jumps.
        """
        return self.values[self.jump_index] - self.values[self.jump_index - 1]

    @property
    def jumps(self) -> list[tuple[float, float]]:
        """
        The jumps as (time, size) pairs.
        """
        return list(zip(self.jump_times.tolist(), self.jump_sizes.tolist()))

    def value_at(self, s: float) -> float:
        """
        The value of the step path at time s.

        Grid points within rounding of s count as reached.
        """

        reach = s + TIME_ROUNDING * max(abs(s), 1.0)
        return float(self.values[max(np.searchsorted(self.times, reach, "right") - 1, 0)])


class CsbpPath(BaseModel, frozen=True):
    """
    A simulated CSBP trajectory, its jumps and how it ended.

    ``clock[k]`` is the Lévy time matching ``times[k]``.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    times: np.ndarray
    values: np.ndarray
    clock: np.ndarray
    jump_index: np.ndarray
    lifetime: Lifetime
    horizon: float
    mechanism: BranchingMechanism | None = None
    source: LevyPath | None = None
    ceiling_hit: bool = False

    @property
    def end(self) -> float:
        """
        The last simulated time: the horizon, or the lifetime when it came first.
        """
        return float(self.times[-1])

    @property
    def jump_times(self) -> np.ndarray:
        """
        The CSBP times of the jumps.
        """
        return self.times[self.jump_index]

    @property
    def z_after(self) -> np.ndarray:
        """
        Z_s at each jump.
        """
        return self.values[self.jump_index]

    @property
    def z_before(self) -> np.ndarray:
        """
        Z_{s-} at each jump.
        """
        return self.values[self.jump_index - 1]

    @property
    def jump_sizes(self) -> np.ndarray:
        """
        Delta Z_s at each jump.
        """
        return self.z_after - self.z_before

    @property
    def jump_fractions(self) -> np.ndarray:
        """
        The rescaled jumps Delta Z_s / Z_s, all in (0, 1).
        """
        return self.jump_sizes / self.z_after

    @property
    def jumps(self) -> list[tuple[float, float, float, float]]:
        """
        The jumps as (s, Delta Z_s, Z_{s-}, Z_s) records.
        """
        return list(
            zip(
                self.jump_times.tolist(),
                self.jump_sizes.tolist(),
                self.z_before.tolist(),
                self.z_after.tolist(),
            )
        )

    def value_at(self, t: float) -> float:
        """
        Z_t on the step path (0 after extinction).
        """

        if t >= self.end and self.lifetime.kind == "Extinct":
            return 0.0
        return float(self.values[max(np.searchsorted(self.times, t, "right") - 1, 0)])

    def cells(self, until: float | None = None) -> tuple[np.ndarray, np.ndarray]:
        """
        Durations and values of the constant pieces of Z on [0, until).
        """

        until = self.end if until is None else min(until, self.end)
        starts = self.times[:-1]
        ends = np.minimum(self.times[1:], until)
        durations = np.clip(ends - starts, 0.0, None)
        return durations, self.values[:-1]


def _drift_and_variance(
    m: BranchingMechanism, truncation: float, gaussian_correction: bool
) -> tuple[float, float, bool]:
    drift = -m.alpha - m.nu.moment(1.0, truncation, 1.0)
    variance = m.sigma**2
    small = m.nu.moment(2.0, 0.0, truncation) if gaussian_correction else 0.0
    used = gaussian_correction and small > GAUSSIAN_CORRECTION_MIN_VARIANCE
    if used:
        variance += small
    return drift, variance, used


def simulate_levy(
    m: BranchingMechanism,
    horizon: float,
    step: float,
    jump_truncation: float = 1e-4,
    seed: int | None = None,
    *,
    gaussian_correction: bool = False,
    clock: Clock = "levy",
    extinction_floor: float = EXTINCTION_FLOOR,
    explosion_ceiling: float = math.inf,
    max_steps: int = 50_000_000,
) -> LevyPath:
    """
    Simulate the Psi-Lévy process started from 1 and stopped at 0.

    With ``clock="levy"`` the skeleton has a fixed step and ``horizon`` is Lévy
    time. With ``clock="lamperti"`` each step lasts ``step * Y`` so that the
    Lamperti clock int ds / Y advances by ``step`` per step, and ``horizon``
    bounds that clock.
    """

    if step <= 0.0 or horizon <= 0.0:
        raise ConfigurationError("step and horizon must be positive")
    if not 0.0 < jump_truncation <= 1.0:
        raise ConfigurationError("jump truncation must lie in (0, 1]")
    rate = m.nu.tail_mass(jump_truncation)
    if not math.isfinite(rate):
        raise ConfigurationError(
            f"nu family {m.nu.family!r} has infinite mass above {jump_truncation}"
        )
    drift, variance, correction = _drift_and_variance(
        m, jump_truncation, gaussian_correction
    )
    volatility = math.sqrt(variance)
    rng = np.random.default_rng(seed)

    times, values, jumps = [0.0], [1.0], []
    s, y, lamperti = 0.0, 1.0, 0.0
    normals, cursor = rng.standard_normal(NORMAL_BLOCK), 0
    stopped = ceiling = False

    for k in range(max_steps):
        if clock == "levy":
            end = (k + 1) * step
            if end > horizon - GRID_SLACK * step:
                end = horizon
            h = end - s
        else:
            h = step * max(y, LEVEL_FLOOR)
            end = s + h
        count = rng.poisson(rate * h) if rate > 0.0 else 0
        if count:
            # the jumps of one step, in time order, with the level after each
            at = s + np.sort(rng.random(count)) * h
            levels = y + np.cumsum(m.nu.sample_tail(rng, jump_truncation, count))
            before = np.concatenate(([y], levels[:-1]))
            lamperti += float(np.sum(np.diff(at, prepend=s) / before))
            jumps.extend(range(len(times), len(times) + count))
            times.extend(at.tolist())
            values.extend(levels.tolist())
            y = float(levels[-1])
        lamperti += (end - times[-1]) / y
        if cursor == NORMAL_BLOCK:
            normals, cursor = rng.standard_normal(NORMAL_BLOCK), 0
        y += drift * h + volatility * math.sqrt(h) * normals[cursor]
        cursor += 1
        s = end
        if y <= extinction_floor:
            y, stopped = 0.0, True
        elif y >= explosion_ceiling:
            ceiling = True
        times.append(s)
        values.append(y)
        if stopped or ceiling:
            break
        if clock == "levy" and s >= horizon:
            break
        if clock == "lamperti" and lamperti >= horizon:
            break
    else:
        raise ConfigurationError(f"Lévy simulation exceeded {max_steps} steps")

    return LevyPath(
        times=np.asarray(times),
        values=np.asarray(values),
        jump_index=np.asarray(jumps, dtype=np.int64),
        truncation=jump_truncation,
        gaussian_correction_used=correction,
        stopped_at_zero=stopped,
        hit_ceiling=ceiling,
    )


def lamperti_inverse(
    g: LevyPath,
    *,
    horizon: float | None = None,
    mechanism: BranchingMechanism | None = None,
    explosive: bool = True,
    extinguishable: bool = True,
) -> CsbpPath:
    """
    L^{-1}(g) = g o J(g) with J(g)_t = inf{s : int_0^s du / g(u) > t}.

    The clock is the exact integral of 1/g over the step path; every Lévy jump
    becomes one CSBP jump of the same size. A path stopped at 0 becomes an
    extinct CSBP when ``extinguishable`` (otherwise Z only tends to 0 and the
    path is cut where it met the floor). A path stopped at the ceiling becomes
    an exploded CSBP when ``explosive`` and is otherwise cut there.
    """

    if g.values[0] <= 0.0:
        raise DomainError("lamperti_inverse needs g(0) > 0")
    durations = np.diff(g.times)
    positive = g.values[:-1]
    if np.any(positive <= 0.0):
        raise DomainError("g vanishes before its last point")
    times = np.concatenate([[0.0], np.cumsum(durations / positive)])
    if np.any(np.diff(times) < 0.0):
        raise ArithmeticError("Lamperti clock is not monotone")

    end = float(times[-1])
    if g.stopped_at_zero and extinguishable:
        lifetime = Lifetime(kind="Extinct", time=end)
    elif g.hit_ceiling and explosive:
        lifetime = Lifetime(kind="Exploded", time=end)
    else:
        lifetime = Lifetime(kind="Alive", time=end)

    values, clock, jump_index = g.values, g.times, g.jump_index
    truncated = horizon is not None and end > horizon
    if truncated:
        keep = int(np.searchsorted(times, horizon, "right"))
        last = keep - 1
        levy_at_horizon = clock[last] + (horizon - times[last]) * values[last]
        times = np.append(times[:keep], horizon)
        clock = np.append(clock[:keep], levy_at_horizon)
        values = np.append(values[:keep], values[last])
        jump_index = jump_index[jump_index < keep]
        lifetime = Lifetime(kind="Alive", time=horizon)
        end = horizon

    return CsbpPath(
        times=times,
        values=values,
        clock=clock,
        jump_index=jump_index,
        lifetime=lifetime,
        horizon=end,
        mechanism=mechanism,
        source=g,
        ceiling_hit=g.hit_ceiling and not truncated and lifetime.kind == "Alive",
    )


def lamperti_forward(f: CsbpPath) -> LevyPath:
    """
    L(f) = f o I(f) with I(f)_t = inf{s : int_0^s f(u) du > t}.
    """

    if np.any(f.values < 0.0):
        raise DomainError("lamperti_forward needs a nonnegative path")
    durations = np.diff(f.times)
    clock = np.concatenate([[0.0], np.cumsum(durations * f.values[:-1])])
    if np.any(np.diff(clock) < 0.0):
        raise ArithmeticError("Lamperti clock is not monotone")
    return LevyPath(
        times=clock,
        values=f.values.copy(),
        jump_index=f.jump_index.copy(),
        stopped_at_zero=f.lifetime.kind == "Extinct",
        hit_ceiling=f.lifetime.kind == "Exploded",
    )


def simulate_csbp(
    m: BranchingMechanism,
    horizon: float,
    step: float,
    jump_truncation: float = 1e-4,
    seed: int | None = None,
    *,
    gaussian_correction: bool = False,
    extinction_floor: float = EXTINCTION_FLOOR,
    explosion_ceiling: float = EXPLOSION_CEILING,
) -> CsbpPath:
    """
    Simulate a Psi-CSBP started from 1 on [0, horizon] as L^{-1} of a Lévy path.

    The ceiling only applies when the mechanism can grow without bound
    (non-conservative or supercritical); it marks an explosion only for
    non-conservative mechanisms.
    """

    growing = not m.is_conservative or m.psi_prime_zero < 0.0
    levy = simulate_levy(
        m,
        horizon,
        step,
        jump_truncation,
        seed,
        gaussian_correction=gaussian_correction,
        clock="lamperti",
        extinction_floor=extinction_floor,
        explosion_ceiling=explosion_ceiling if growing else math.inf,
    )
    p = lamperti_inverse(
        levy,
        horizon=horizon,
        mechanism=m,
        explosive=not m.is_conservative,
        extinguishable=m.extinction_possible_in_finite_time,
    )
    if p.ceiling_hit:
        logger.debug("Cut a path at the ceiling %.3g at t=%.6g.", explosion_ceiling, p.end)
    return p


def stopping_time_T_eps(p: CsbpPath, eps: float) -> float:
    """
    T(eps): the first grid or jump time with Z outside (eps, 1/eps); the horizon if none.
    """

    if not 0.0 < eps < 1.0:
        raise DomainError(f"eps must lie in (0, 1), got {eps}")
    outside = np.flatnonzero((p.values <= eps) | (p.values >= 1.0 / eps))
    if len(outside) == 0:
        return p.horizon
    return float(p.times[outside[0]])


def jump_square_sum(p: CsbpPath, t: float, eps: float | None = None) -> float:
    """
    The sum of (Delta Z_s / Z_s)^2 over jumps s <= t ^ T(eps).
    """

    until = t if eps is None else min(t, stopping_time_T_eps(p, eps))
    keep = p.jump_times <= until
    return float(np.sum(p.jump_fractions[keep] ** 2))


def diffusion_integral(p: CsbpPath, sigma: float, until: float | None = None) -> float:
    """
    The integral of sigma^2 / Z_s over [0, until) along the step path.
    """

    durations, values = p.cells(until)
    alive = values > 0.0
    return float(np.sum(sigma**2 * durations[alive] / values[alive]))


def scale_initial_mass(p: CsbpPath, a: float, index: float = 2.0) -> CsbpPath:
    """
    A path started from a, for Psi(u) = c u^index: Z^a_t = a Z_{t a^(1 - index)}.
    """

    if a <= 0.0:
        raise DomainError("initial mass must be positive")
    stretch = a ** (index - 1.0)
    return p.model_copy(
        update={
            "times": p.times * stretch,
            "values": p.values * a,
            "horizon": p.horizon * stretch,
            "lifetime": Lifetime(
                kind=p.lifetime.kind, time=p.lifetime.time * stretch
            ),
        }
    )


def resample(p: CsbpPath, resolution: float) -> tuple[np.ndarray, np.ndarray]:
    """
    The step path on a uniform grid of the given resolution, jump times included.
    """

    grid = np.arange(0.0, p.end, resolution)
    times = np.union1d(np.append(grid, p.end), p.jump_times)
    index = np.searchsorted(p.times, times, "right") - 1
    return times, p.values[np.clip(index, 0, len(p.values) - 1)]


def write_trajectory_csv(
    p: CsbpPath, destination: Path, resolution: float | None = None
) -> None:
    """
    Write the trajectory as time,Z rows, one per grid or jump point.
    """

    times, values = (p.times, p.values) if resolution is None else resample(p, resolution)
    with open(destination, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["time", "Z"])
        writer.writerows((repr(float(t)), repr(float(z))) for t, z in zip(times, values))
    logger.info("Wrote %d trajectory row(s) to %s.", len(times), destination)


def write_jumps_csv(p: CsbpPath, destination: Path) -> None:
    """
    Write the jump list as s,delta,Z_minus,Z rows.
    """

    with open(destination, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["s", "delta", "Z_minus", "Z"])
        writer.writerows(tuple(repr(float(v)) for v in jump) for jump in p.jumps)
    logger.info("Wrote %d jump row(s) to %s.", len(p.jump_index), destination)
