import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.services.qp.service import DEFAULT_MAX_ITER, DEFAULT_TOL

NONNEG_TOL = 1e-9


class SurplusVector(BaseModel):
    """Observable surplus: pi per participant, pi0 for the server, eps the core relaxation."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    pi: np.ndarray
    pi0: float
    eps: float = 0.0
    # objective of the core-selecting program that produced this vector, sum_i (pi_i - pi_i^VCG + eps)^2
    sigma2: float = 0.0

    @field_validator("pi", mode="before")
    @classmethod
    def _as_vector(cls, value):
        return np.asarray(value, dtype=np.float64).reshape(-1)

    @model_validator(mode="after")
    def _nonnegative(self) -> "SurplusVector":
        if self.pi.size and self.pi.min() < -NONNEG_TOL:
            raise ValueError(f"participant surplus {self.pi.min():.3e} is negative")
        if self.pi0 < -NONNEG_TOL or self.eps < -NONNEG_TOL:
            raise ValueError(f"server surplus ({self.pi0:.3e}) and eps ({self.eps:.3e}) must be nonnegative")
        return self

    @property
    def n(self) -> int:
        return int(self.pi.shape[0])

    @property
    def total(self) -> float:
        return float(self.pi.sum() + self.pi0)


class PaymentVector(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    p: np.ndarray
    budget_spent: float

    @field_validator("p", mode="before")
    @classmethod
    def _as_vector(cls, value):
        return np.asarray(value, dtype=np.float64).reshape(-1)


class SolverConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    tol: float = Field(default=DEFAULT_TOL, gt=0.0)
    max_iter: int = Field(default=DEFAULT_MAX_ITER, ge=1)
