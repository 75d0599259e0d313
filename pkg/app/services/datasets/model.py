from enum import Enum

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class LabeledDataset(BaseModel):
    """Rows of real features with integer class ids in 0..n_classes-1."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    features: np.ndarray
    labels: np.ndarray
    n_classes: int = Field(ge=2)
    name: str = "dataset"

    @field_validator("features", mode="before")
    @classmethod
    def _as_float_matrix(cls, value):
        array = np.asarray(value, dtype=np.float64)
        if array.ndim != 2:
            raise ValueError(f"features must be a 2-d matrix, got shape {array.shape}")
        return array

    @field_validator("labels", mode="before")
    @classmethod
    def _as_label_vector(cls, value):
        array = np.asarray(value)
        if array.ndim != 1:
            raise ValueError(f"labels must be a 1-d vector, got shape {array.shape}")
        if array.size and not np.issubdtype(array.dtype, np.integer):
            if not np.all(np.equal(np.mod(array, 1), 0)):
                raise ValueError("labels must be integer class ids")
        return array.astype(np.int64)

    @model_validator(mode="after")
    def _check_invariants(self) -> "LabeledDataset":
        if self.features.shape[0] != self.labels.shape[0]:
            raise ValueError(
                f"feature rows ({self.features.shape[0]}) != label count ({self.labels.shape[0]})"
            )
        if not np.all(np.isfinite(self.features)):
            raise ValueError("features contain NaN or Inf")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise ValueError(f"labels must lie in 0..{self.n_classes - 1}")
        return self

    @property
    def n_samples(self) -> int:
        return int(self.features.shape[0])

    @property
    def n_features(self) -> int:
        return int(self.features.shape[1])

    @property
    def is_empty(self) -> bool:
        return self.n_samples == 0

    def subset(self, indices, name: str = None) -> "LabeledDataset":
        indices = np.asarray(indices, dtype=np.int64)
        return LabeledDataset(
            features=self.features[indices],
            labels=self.labels[indices],
            n_classes=self.n_classes,
            name=name or self.name,
        )


class StrategyKind(str, Enum):
    truthful = "truthful"
    noise = "noise"
    removal = "removal"
    label_flip = "label_flip"
    quit = "quit"


class InputStrategy(BaseModel):
    """How a participant transforms its true dataset before training."""
    model_config = ConfigDict(frozen=True)

    kind: StrategyKind = StrategyKind.truthful
    degree: float = Field(default=0.0, ge=0.0, le=1.0)

    @classmethod
    def parse(cls, text: str) -> "InputStrategy":
        """Parse ``kind`` or ``kind:degree`` (e.g. ``label_flip:0.5``)."""
        kind, _, degree = text.strip().partition(":")
        return cls(kind=kind.strip().lower(), degree=float(degree) if degree.strip() else 0.0)

    def label(self) -> str:
        if self.kind in (StrategyKind.truthful, StrategyKind.quit):
            return self.kind.value
        return f"{self.kind.value}:{self.degree:g}"


TRUTHFUL = InputStrategy()
