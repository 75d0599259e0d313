from dataclasses import dataclass
from typing import Dict, Iterable, Iterator, List, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.exceptions import CapabilityError, MissingCoalitionError, ParameterError
from app.services.datasets.model import InputStrategy, StrategyKind

MAX_PARTICIPANTS = 30


@dataclass(frozen=True, order=True)
class Coalition:
    """A subset of participants 0..n-1 stored as a bitmask; members iterate ascending."""
    bits: int
    n: int

    def __post_init__(self):
        if not 0 <= self.n <= MAX_PARTICIPANTS:
            raise ParameterError(f"coalitions support 0..{MAX_PARTICIPANTS} participants, got {self.n}")
        if self.bits < 0 or self.bits >> self.n:
            raise ParameterError(f"bitmask {self.bits:#x} has members outside 0..{self.n - 1}")

    @classmethod
    def of(cls, members: Iterable[int], n: int) -> "Coalition":
        bits = 0
        for i in members:
            if not 0 <= i < n:
                raise ParameterError(f"participant {i} outside 0..{n - 1}")
            bits |= 1 << i
        return cls(bits, n)

    @classmethod
    def grand(cls, n: int) -> "Coalition":
        return cls((1 << n) - 1, n)

    @classmethod
    def empty(cls, n: int) -> "Coalition":
        return cls(0, n)

    @classmethod
    def all_nonempty(cls, n: int) -> List["Coalition"]:
        return [cls(bits, n) for bits in range(1, 1 << n)]

    def members(self) -> List[int]:
        return [i for i in range(self.n) if self.bits >> i & 1]

    def __iter__(self) -> Iterator[int]:
        return iter(self.members())

    def __contains__(self, i: int) -> bool:
        return 0 <= i < self.n and bool(self.bits >> i & 1)

    def __len__(self) -> int:
        return bin(self.bits).count("1")

    @property
    def is_empty(self) -> bool:
        return self.bits == 0

    def without(self, i: int) -> "Coalition":
        return Coalition(self.bits & ~(1 << i), self.n)

    def with_member(self, i: int) -> "Coalition":
        return Coalition(self.bits | (1 << i), self.n)

    def __repr__(self) -> str:
        return f"Coalition({self.members()}, n={self.n})"


class ValuationParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    k: List[float]
    b0: float = Field(ge=0.0)
    solo_accuracy: List[float]

    @model_validator(mode="after")
    def _check(self) -> "ValuationParams":
        if len(self.k) != len(self.solo_accuracy):
            raise ValueError("k and solo_accuracy must have one entry per participant")
        if any(k <= 0.0 for k in self.k):
            raise ValueError("preference constants k must be positive")
        if any(not 0.0 <= a <= 1.0 for a in self.solo_accuracy):
            raise ValueError("solo accuracies must lie in [0, 1]")
        return self

    @property
    def n(self) -> int:
        return len(self.k)


class CharacteristicTable:
    """w(S) per evaluated coalition, with the coalition-model accuracy kept alongside."""

    def __init__(self, n: int):
        if not 0 <= n <= MAX_PARTICIPANTS:
            raise ParameterError(f"tables support 0..{MAX_PARTICIPANTS} participants, got {n}")
        self.n = n
        self.values: Dict[Coalition, float] = {Coalition.empty(n): 0.0}
        self.accuracies: Dict[Coalition, float] = {}

    def set(self, coalition: Coalition, w: float, accuracy: Optional[float] = None) -> None:
        if coalition.n != self.n:
            raise ParameterError(f"coalition over {coalition.n} participants in a table over {self.n}")
        if coalition.is_empty:
            return
        self.values[coalition] = float(w)
        if accuracy is not None:
            self.accuracies[coalition] = float(accuracy)

    def __getitem__(self, coalition: Coalition) -> float:
        try:
            return self.values[coalition]
        except KeyError:
            raise MissingCoalitionError(f"w{coalition.members()} was never evaluated") from None

    def __contains__(self, coalition: Coalition) -> bool:
        return coalition in self.values

    def __len__(self) -> int:
        return len(self.values)

    @property
    def grand_value(self) -> float:
        return self[Coalition.grand(self.n)]

    def is_complete(self) -> bool:
        return len(self.values) == 1 << self.n

    def coalitions(self) -> List[Coalition]:
        """Evaluated nonempty coalitions in bitmask order."""
        return sorted(c for c in self.values if not c.is_empty)

    def worth_array(self) -> np.ndarray:
        """w indexed by bitmask; only for complete tables."""
        if not self.is_complete():
            raise CapabilityError(
                f"table holds {len(self.values)} of {1 << self.n} coalitions; a complete table is required"
            )
        worth = np.empty(1 << self.n)
        for coalition, value in self.values.items():
            worth[coalition.bits] = value
        return worth

    @classmethod
    def from_worth(cls, n: int, worth: Iterable[float]) -> "CharacteristicTable":
        """Build a complete table from a bitmask-indexed worth sequence (worth[0] is ignored)."""
        worth = np.asarray(list(worth), dtype=np.float64)
        if worth.shape[0] != 1 << n:
            raise ParameterError(f"need {1 << n} worth values for n={n}, got {worth.shape[0]}")
        table = cls(n)
        for bits in range(1, 1 << n):
            table.set(Coalition(bits, n), worth[bits])
        return table

    def to_frame(self) -> pd.DataFrame:
        rows = [
            {
                "coalition_bitmask": c.bits,
                "size": len(c),
                "accuracy": self.accuracies.get(c, np.nan),
                "w": self.values[c],
            }
            for c in self.coalitions()
        ]
        return pd.DataFrame(rows, columns=["coalition_bitmask", "size", "accuracy", "w"])

    def to_csv(self, path: str) -> None:
        self.to_frame().to_csv(path, index=False)


class AccuracyModel(BaseModel):
    """
    Analytic coalition accuracy used in place of training:

      a(S, f) = a_max - c1 / (1 + sum_{i in S} (1 - f_i)) - c2 * sum_{i in S} f_i

    clamped to [0, 1]. With f = 0 it grows with |S|; it falls strictly in every f_i.
    An input strategy maps to f = strategy_weight[kind] * degree (quit counts as 1).
    """
    model_config = ConfigDict(frozen=True)

    a_max: float = Field(default=0.95, gt=0.0, le=1.0)
    c1: float = Field(default=0.3, gt=0.0)
    c2: float = Field(default=0.2, gt=0.0)
    noise_weight: float = Field(default=0.5, ge=0.0, le=1.0)
    removal_weight: float = Field(default=0.5, ge=0.0, le=1.0)
    label_flip_weight: float = Field(default=1.0, ge=0.0, le=1.0)

    def false_degree(self, strategy: InputStrategy) -> float:
        kind = strategy.kind
        if kind == StrategyKind.truthful:
            return 0.0
        if kind == StrategyKind.quit:
            return 1.0
        weight = {
            StrategyKind.noise: self.noise_weight,
            StrategyKind.removal: self.removal_weight,
            StrategyKind.label_flip: self.label_flip_weight,
        }[kind]
        return weight * strategy.degree
