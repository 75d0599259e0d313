import json
from enum import Enum
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class ArchKind(str, Enum):
    logistic = "logistic"
    mlp = "mlp"


class ModelArch(BaseModel):
    """
    Architecture descriptor. theta layout (row-major blocks, in this order):

      logistic: W (C x d), b (C)
      mlp:      W1 (hidden x d), b1 (hidden), W2 (C x hidden), b2 (C)
    """
    model_config = ConfigDict(frozen=True)

    kind: ArchKind = ArchKind.logistic
    n_features: int = Field(ge=1)
    n_classes: int = Field(ge=2)
    hidden: Optional[int] = Field(default=None, ge=1)

    @model_validator(mode="after")
    def _hidden_matches_kind(self) -> "ModelArch":
        if self.kind == ArchKind.mlp and self.hidden is None:
            raise ValueError("mlp architecture needs a hidden width")
        if self.kind == ArchKind.logistic and self.hidden is not None:
            raise ValueError("logistic architecture takes no hidden width")
        return self

    @classmethod
    def logistic_regression(cls, n_features: int, n_classes: int) -> "ModelArch":
        return cls(kind=ArchKind.logistic, n_features=n_features, n_classes=n_classes)

    @classmethod
    def perceptron(cls, n_features: int, hidden: int, n_classes: int) -> "ModelArch":
        return cls(kind=ArchKind.mlp, n_features=n_features, hidden=hidden, n_classes=n_classes)

    @property
    def n_params(self) -> int:
        d, c = self.n_features, self.n_classes
        if self.kind == ArchKind.logistic:
            return c * d + c
        h = self.hidden
        return h * d + h + c * h + c


class ModelParams(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    arch: ModelArch
    theta: np.ndarray

    @field_validator("theta", mode="before")
    @classmethod
    def _as_vector(cls, value):
        array = np.asarray(value, dtype=np.float64)
        if array.ndim != 1:
            raise ValueError("theta must be a flat vector")
        return array

    @model_validator(mode="after")
    def _check_length(self) -> "ModelParams":
        if self.theta.shape[0] != self.arch.n_params:
            raise ValueError(f"theta has {self.theta.shape[0]} entries, arch needs {self.arch.n_params}")
        if not np.all(np.isfinite(self.theta)):
            raise ValueError("theta contains NaN or Inf")
        return self

    def with_theta(self, theta: np.ndarray) -> "ModelParams":
        return ModelParams(arch=self.arch, theta=theta)

    def to_json(self) -> str:
        return json.dumps({"arch": self.arch.model_dump(mode="json"), "theta": self.theta.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "ModelParams":
        payload = json.loads(text)
        return cls(arch=ModelArch(**payload["arch"]), theta=payload["theta"])

    def to_bytes(self) -> bytes:
        """Little-endian float64 theta; the arch is carried separately."""
        return self.theta.astype("<f8").tobytes()

    @classmethod
    def from_bytes(cls, arch: ModelArch, blob: bytes) -> "ModelParams":
        return cls(arch=arch, theta=np.frombuffer(blob, dtype="<f8").astype(np.float64))


class TrainConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    batch_size: int = Field(default=32, ge=1)
    local_epochs: int = Field(default=1, ge=0)
    # 0 is accepted so the frozen limit can be expressed
    learning_rate: float = Field(default=0.1, ge=0.0)
    l2: float = Field(default=0.0, ge=0.0)
