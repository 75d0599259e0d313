import json
from enum import Enum
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.exceptions import ParameterError

SYMMETRY_TOL = 1e-12
PSD_FLOOR = -1e-9


def _matrix(value) -> np.ndarray:
    array = np.asarray(value, dtype=np.float64)
    if array.ndim == 1 and array.size == 0:
        array = array.reshape(0, 0)
    if array.ndim != 2:
        raise ValueError(f"expected a matrix, got shape {array.shape}")
    return array


def _vector(value) -> np.ndarray:
    return np.asarray(value, dtype=np.float64).reshape(-1)


class QuadraticProgram(BaseModel):
    """
    minimize    0.5 x'Qx + c'x + constant
    subject to  A_eq x = b_eq,  G x <= h,  x >= lb

    lb entries may be -inf. ridge_center, when set, is the point the solver's
    degeneracy ridge pulls towards, so among several optima it returns the one
    nearest that point.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True)

    Q: np.ndarray
    c: np.ndarray
    A_eq: Optional[np.ndarray] = None
    b_eq: Optional[np.ndarray] = None
    G: Optional[np.ndarray] = None
    h: Optional[np.ndarray] = None
    lb: Optional[np.ndarray] = None
    constant: float = 0.0
    ridge_center: Optional[np.ndarray] = None

    @field_validator("Q", "A_eq", "G", mode="before")
    @classmethod
    def _as_matrix(cls, value):
        return None if value is None else _matrix(value)

    @field_validator("c", "b_eq", "h", "lb", "ridge_center", mode="before")
    @classmethod
    def _as_vector(cls, value):
        return None if value is None else _vector(value)

    @model_validator(mode="after")
    def _fill_defaults(self) -> "QuadraticProgram":
        n = self.c.shape[0]
        if self.A_eq is None or self.A_eq.size == 0:
            self.A_eq = np.zeros((0, n))
            self.b_eq = np.zeros(0) if self.b_eq is None else self.b_eq
        if self.G is None or self.G.size == 0:
            self.G = np.zeros((0, n))
            self.h = np.zeros(0) if self.h is None else self.h
        if self.lb is None:
            self.lb = np.full(n, -np.inf)
        return self

    @property
    def n_vars(self) -> int:
        return int(self.c.shape[0])

    @property
    def n_eq(self) -> int:
        return int(self.A_eq.shape[0])

    @property
    def n_ineq(self) -> int:
        return int(self.G.shape[0])

    def check_dimensions(self) -> None:
        n = self.n_vars
        if self.Q.shape != (n, n):
            raise ParameterError(f"Q has shape {self.Q.shape}, expected ({n}, {n})")
        if self.A_eq.shape[1] != n:
            raise ParameterError(f"A_eq has {self.A_eq.shape[1]} columns, expected {n}")
        if self.b_eq is None or self.b_eq.shape[0] != self.A_eq.shape[0]:
            raise ParameterError("b_eq must have one entry per row of A_eq")
        if self.G.shape[1] != n:
            raise ParameterError(f"G has {self.G.shape[1]} columns, expected {n}")
        if self.h is None or self.h.shape[0] != self.G.shape[0]:
            raise ParameterError("h must have one entry per row of G")
        if self.lb.shape[0] != n:
            raise ParameterError(f"lb has {self.lb.shape[0]} entries, expected {n}")
        if self.ridge_center is not None and self.ridge_center.shape[0] != n:
            raise ParameterError(f"ridge_center has {self.ridge_center.shape[0]} entries, expected {n}")
        if not np.allclose(self.Q, self.Q.T, rtol=0.0, atol=SYMMETRY_TOL):
            raise ParameterError(f"Q is not symmetric within {SYMMETRY_TOL}")
        for name in ("Q", "c", "A_eq", "b_eq", "G", "h"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ParameterError(f"{name} contains NaN or Inf")

    def min_eigenvalue(self) -> float:
        if self.n_vars == 0:
            return 0.0
        return float(np.linalg.eigvalsh(self.Q).min())

    def objective(self, x: np.ndarray) -> float:
        return float(0.5 * x @ self.Q @ x + self.c @ x + self.constant)

    def to_json(self) -> str:
        payload = {
            "Q": self.Q.tolist(),
            "c": self.c.tolist(),
            "A_eq": self.A_eq.tolist(),
            "b_eq": self.b_eq.tolist(),
            "G": self.G.tolist(),
            "h": self.h.tolist(),
            "lb": [None if not np.isfinite(v) else float(v) for v in self.lb],
            "constant": self.constant,
            "ridge_center": None if self.ridge_center is None else self.ridge_center.tolist(),
        }
        return json.dumps(payload)

    @classmethod
    def from_json(cls, text: str) -> "QuadraticProgram":
        payload = json.loads(text)
        n = len(payload["c"])
        return cls(
            Q=np.array(payload["Q"], dtype=np.float64).reshape(n, n),
            c=payload["c"],
            A_eq=np.array(payload["A_eq"], dtype=np.float64).reshape(-1, n),
            b_eq=payload["b_eq"],
            G=np.array(payload["G"], dtype=np.float64).reshape(-1, n),
            h=payload["h"],
            lb=[-np.inf if v is None else v for v in payload["lb"]],
            constant=payload.get("constant", 0.0),
            ridge_center=payload.get("ridge_center"),
        )

    def dump(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(self.to_json())


class QpStatus(str, Enum):
    optimal = "Optimal"
    infeasible = "Infeasible"
    iteration_limit = "IterationLimit"


class KktResiduals(BaseModel):
    model_config = ConfigDict(frozen=True)

    primal_eq: float = 0.0
    primal_ineq: float = 0.0
    dual: float = 0.0
    complementarity: float = 0.0

    def worst(self) -> float:
        return max(self.primal_eq, self.primal_ineq, self.dual, self.complementarity)

    def within(self, tol: float) -> bool:
        return self.worst() <= tol


class QpMultipliers(BaseModel):
    """Lagrange multipliers: eq free, ineq >= 0 for Gx <= h, lower >= 0 for x >= lb."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    eq: np.ndarray
    ineq: np.ndarray
    lower: np.ndarray

    @field_validator("eq", "ineq", "lower", mode="before")
    @classmethod
    def _as_vector(cls, value):
        return _vector(value)

    @classmethod
    def zeros(cls, qp: QuadraticProgram) -> "QpMultipliers":
        return cls(eq=np.zeros(qp.n_eq), ineq=np.zeros(qp.n_ineq), lower=np.zeros(qp.n_vars))


class QpSolution(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    x: np.ndarray
    objective: float
    status: QpStatus
    kkt_residuals: KktResiduals = Field(default_factory=KktResiduals)
    multipliers: Optional[QpMultipliers] = None
    ridge: float = 0.0
    iterations: int = 0
    # max primal residual left by the feasibility phase; 0 when a feasible point was found
    infeasibility: float = 0.0

    @property
    def is_optimal(self) -> bool:
        return self.status == QpStatus.optimal

    def diagnostics(self) -> dict:
        return {
            "status": self.status.value,
            "objective": self.objective,
            "iterations": self.iterations,
            "ridge": self.ridge,
            "infeasibility": self.infeasibility,
            **self.kkt_residuals.model_dump(),
        }
