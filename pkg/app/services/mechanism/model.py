from enum import Enum
from typing import Dict, List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.services.core_select.model import SolverConfig
from app.services.game.model import MAX_PARTICIPANTS, AccuracyModel
from app.services.learning.model import ModelArch, ModelParams, TrainConfig
from configs.envs import env_variables


class MechanismMode(str, Enum):
    exact = "exact"
    sampled = "sampled"
    vcg_only = "vcg_only"
    # core-selecting without the eps relaxation; fails on an empty core
    classical = "classical"

    @property
    def uses_all_coalitions(self) -> bool:
        return self in (MechanismMode.exact, MechanismMode.classical)


class AccuracySource(str, Enum):
    training = "training"
    oracle = "oracle"


class MechanismConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    n: int = Field(ge=1, le=MAX_PARTICIPANTS)
    rounds: int = Field(default=1, ge=1)
    delta: float = Field(default=0.3, gt=0.0, lt=1.0)
    confidence_delta: float = Field(default=0.3, gt=0.0, lt=1.0)
    sample_constant: float = Field(default=1.0, gt=0.0)
    b0: float = Field(default=2.0, ge=0.0)
    k: Optional[List[float]] = None
    phi0: float = Field(default=0.01, gt=0.0)
    train: TrainConfig = Field(default_factory=TrainConfig)
    arch: Optional[ModelArch] = None
    mode: MechanismMode = MechanismMode.sampled
    eval_repeats: int = Field(default=1, ge=1)
    seed: int = 0
    accuracy_source: AccuracySource = AccuracySource.training
    oracle: AccuracyModel = Field(default_factory=AccuracyModel)
    solver: SolverConfig = Field(default_factory=SolverConfig)
    parallel: Optional[Literal["local", "ray"]] = None

    @field_validator("k")
    @classmethod
    def _positive_preferences(cls, value):
        if value is not None and any(k <= 0.0 for k in value):
            raise ValueError("preference constants k must be positive")
        return value

    @model_validator(mode="after")
    def _check(self) -> "MechanismConfig":
        if self.k is not None and len(self.k) not in (1, self.n):
            raise ValueError(f"k needs 1 or n={self.n} entries, got {len(self.k)}")
        cap = env_variables.EXACT_MAX_PARTICIPANTS
        if self.mode.uses_all_coalitions and self.n > cap:
            raise ValueError(f"mode {self.mode.value} enumerates all coalitions and is capped at n={cap}")
        return self

    @property
    def preferences(self) -> List[float]:
        """k_i per participant; a single value (or none, meaning 2.0) applies to everyone."""
        if self.k is None:
            return [2.0] * self.n
        if len(self.k) == 1:
            return list(self.k) * self.n
        return list(self.k)


class ReputationState(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    R: np.ndarray
    cumulative_surplus: np.ndarray
    accumulated_payments: np.ndarray

    @classmethod
    def initial(cls, n: int, phi0: float) -> "ReputationState":
        return cls(R=np.full(n, phi0), cumulative_surplus=np.zeros(n), accumulated_payments=np.zeros(n))


class PhaseTimings(BaseModel):
    """Seconds spent per round phase."""
    model_config = ConfigDict(frozen=True)

    train: float = 0.0
    aggregate_eval: float = 0.0
    qp: float = 0.0

    @property
    def total(self) -> float:
        return self.train + self.aggregate_eval + self.qp


class RoundReport(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    round: int
    coalition_count: int
    # keyed by coalition bitmask
    accuracies: Dict[int, float]
    w: Dict[int, float]
    global_accuracy: float
    valuations: np.ndarray
    true_valuations: np.ndarray
    vcg_surplus: np.ndarray
    surplus: np.ndarray
    pi0: float
    eps: float
    sigma2: float
    payments: np.ndarray
    accumulated_payments: np.ndarray
    utilities: np.ndarray
    reputations: np.ndarray
    core_accuracy: Optional[float] = None
    wall_times: PhaseTimings = Field(default_factory=PhaseTimings)
    global_params: Optional[ModelParams] = None

    @model_validator(mode="after")
    def _consistent(self) -> "RoundReport":
        if not np.allclose(self.payments, self.surplus - self.valuations, rtol=0.0, atol=1e-9):
            raise ValueError("payments must equal surplus minus valuations")
        return self

    @property
    def n(self) -> int:
        return int(self.surplus.shape[0])

    @property
    def budget_spent(self) -> float:
        return float(self.payments.sum())


class SimulationResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    reports: List[RoundReport]
    accumulated_payments: np.ndarray
    accumulated_utility: np.ndarray
    reputation: ReputationState

    @property
    def final_global_accuracy(self) -> float:
        return self.reports[-1].global_accuracy


class ValidationRow(BaseModel):
    model_config = ConfigDict(frozen=True)

    seed: int
    m: int
    sigma2_exact: float
    sigma2_sampled: float
    core_accuracy: float
    vcg_core_accuracy: float
    time_ms: float

    @property
    def sigma2_error(self) -> float:
        """Exact minus sampled sigma^2; nonnegative up to solver tolerance since sampling relaxes the program."""
        return self.sigma2_exact - self.sigma2_sampled
