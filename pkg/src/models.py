"""
Data models for configuration, requests and reports.
"""

from collections.abc import Callable
from os import environ
from typing import Annotated, Any, Literal
from pydantic import (
    BaseModel,
    ConfigDict,
    Discriminator,
    Field,
    NonNegativeInt,
    PositiveFloat,
    PositiveInt,
    Tag,
    computed_field,
    field_validator,
    model_validator,
)
from src import mechanism
from src.levy_csbp import EXPLOSION_CEILING, CsbpPath, simulate_csbp
from src.mechanism import BranchingMechanism
from src.stats import Gate

Presets = Literal[
    "feller",
    "pure_drift",
    "neveu",
    "neveu_feller",
    "negative_sqrt",
    "compound_poisson",
]

presets: dict[Presets, Callable[[], BranchingMechanism]] = {
    "feller": mechanism.feller,
    "pure_drift": mechanism.pure_drift,
    "neveu": mechanism.neveu,
    "neveu_feller": mechanism.neveu_feller,
    "negative_sqrt": mechanism.negative_sqrt,
    "compound_poisson": mechanism.compound_poisson,
}

Experiments = Literal[
    "oracle",
    "laplace",
    "extinction",
    "compensator",
    "paintbox_marginal",
    "eve",
    "dust",
    "rate_continuity",
    "decomposition",
    "classify",
    "lamperti",
    "algebra",
]


def get_mechanism_source(data: Any) -> str:
    """
    Get the mechanism source from the data: a preset name or an explicit triplet.
    """

    if isinstance(data, str):
        return "preset"
    return "triplet"


type MechanismSpec = Annotated[
    Annotated[Presets, Tag("preset")]
    | Annotated[BranchingMechanism, Tag("triplet")],
    Discriminator(get_mechanism_source),
]


def resolve_mechanism(source: Presets | BranchingMechanism) -> BranchingMechanism:
    """
    Build the mechanism named by a preset, or return an explicit one unchanged.
    """

    if isinstance(source, BranchingMechanism):
        return source
    return presets[source]()


def default_threads() -> int:
    """
    The worker count from CSBP_THREADS, 1 when unset.
    """

    return int(environ.get("CSBP_THREADS", "1"))


class SimulationSettings(BaseModel, frozen=True):
    """
    The settings shared by every path simulation.
    """

    model_config = ConfigDict(extra="forbid")

    mechanism: MechanismSpec = "feller"
    horizon: PositiveFloat = 1.0
    step: PositiveFloat = 1e-3
    jump_truncation: float = Field(default=1e-4, gt=0.0, le=1.0)
    gaussian_correction: bool = False
    explosion_ceiling: float = Field(default=EXPLOSION_CEILING, gt=1.0)

    @property
    def branching(self) -> BranchingMechanism:
        return resolve_mechanism(self.mechanism)

    def simulate(
        self,
        seed: int | None,
        horizon: float | None = None,
        m: BranchingMechanism | None = None,
    ) -> CsbpPath:
        """
        One CSBP path with these settings, optionally up to another horizon.
        """

        return simulate_csbp(
            self.branching if m is None else m,
            self.horizon if horizon is None else horizon,
            self.step,
            self.jump_truncation,
            seed,
            gaussian_correction=self.gaussian_correction,
            explosion_ceiling=self.explosion_ceiling,
        )


class ExperimentConfig(SimulationSettings, frozen=True):
    """
    One experiment run: what to simulate, how often and which checks to apply.
    """

    experiment: Experiments
    n: int = Field(default=3, ge=2)
    levels: list[Annotated[int, Field(ge=2)]] | None = None
    level: int | None = Field(default=None, ge=2)
    replicates: PositiveInt = 100
    master_seed: int = Field(default=0, ge=0, lt=2**64)
    epsilon: float = Field(default=0.2, gt=0.0, lt=1.0)
    t: PositiveFloat | None = None
    times: list[PositiveFloat] = [0.25, 0.5, 1.0]
    lambdas: list[PositiveFloat] = [0.5, 1.0, 2.0]
    instances_per_replicate: PositiveInt = 10
    threads: PositiveInt = Field(default_factory=default_threads, exclude=True)

    @field_validator("times", "lambdas")
    @classmethod
    def check_grid(cls, value: list[float]) -> list[float]:
        """
        Grids must be nonempty.
        """

        if not value:
            raise ValueError("grid must not be empty")
        return value

    @model_validator(mode="after")
    def check_values(self) -> "ExperimentConfig":
        """
        Validate the model fields.
        """

        if self.level is not None and self.level > self.n:
            raise ValueError(f"level {self.level} exceeds the flow level {self.n}")
        if self.t is not None and self.t > self.horizon:
            raise ValueError(f"t={self.t} lies beyond the horizon {self.horizon}")
        return self

    @property
    def evaluation_time(self) -> float:
        return self.horizon if self.t is None else self.t


class Table(BaseModel, frozen=True):
    """
    A CSV table of the report.
    """

    name: str
    columns: list[str]
    rows: list[list[float | int | str | bool | None]]


class ExperimentReport(BaseModel, frozen=True):
    """
    The machine-readable result of an experiment; reruns are byte-identical.
    """

    experiment: Experiments
    config: ExperimentConfig
    gates: list[Gate]
    tables: list[Table] = []
    notes: list[str] = []

    @computed_field
    @property
    def passed(self) -> bool:
        return all(gate.passed for gate in self.gates)


class ClassifyRequest(BaseModel, frozen=True):
    """
    A mechanism to classify, by preset name or triplet.
    """

    model_config = ConfigDict(extra="forbid")

    mechanism: MechanismSpec = "feller"


class RatesRequest(BaseModel, frozen=True):
    """
    A table of lambda_{n,k}(z, Psi) for k = 2..n and each z.
    """

    model_config = ConfigDict(extra="forbid")

    mechanism: MechanismSpec = "feller"
    n: int = Field(default=3, ge=2)
    z: list[PositiveFloat] = [1.0]


class RateRow(BaseModel, frozen=True):
    n: int
    k: int
    z: float
    rate: float


class SimulateRequest(SimulationSettings, frozen=True):
    seed: NonNegativeInt = 0


class BuildFlowRequest(SimulateRequest, frozen=True):
    n: int = Field(default=3, ge=2)


class TrajectoryRow(BaseModel, frozen=True):
    time: float
    Z: float
