import os
from enum import Enum
from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.services.datasets.model import InputStrategy, StrategyKind, TRUTHFUL
from app.services.game.model import MAX_PARTICIPANTS, AccuracyModel
from app.services.learning.model import ArchKind, ModelArch, TrainConfig
from app.services.mechanism.model import AccuracySource, MechanismConfig, MechanismMode
from configs.envs import env_variables

BENCH_EXACT_MAX_PARTICIPANTS = 14
ALL_COALITIONS = "all"


class DatasetKind(str, Enum):
    synthetic = "synthetic"
    csv = "csv"


def _split_list(value, separator: str = ","):
    if value is None or isinstance(value, list):
        return value
    return [item.strip() for item in str(value).split(separator) if item.strip()]


def _switch(value) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ("on", "true", "yes", "1"):
        return True
    if text in ("off", "false", "no", "0"):
        return False
    raise ValueError(f"expected on/off, got {value!r}")


class ExperimentConfig(BaseModel):
    """
    One flat KEY=VALUE experiment file. Keys are case-insensitive, lists are
    comma-separated and strategy assignments read ``participant:kind[:degree]``
    separated by ``;``. Unknown keys are rejected.
    """
    model_config = ConfigDict(extra="forbid", frozen=True)

    # mechanism
    n: int = Field(ge=1, le=MAX_PARTICIPANTS)
    rounds: int = Field(default=1, ge=1)
    mode: MechanismMode = MechanismMode.sampled
    delta: float = Field(default=0.3, gt=0.0, lt=1.0)
    confidence_delta: float = Field(default=0.3, gt=0.0, lt=1.0)
    sample_constant: float = Field(default=1.0, gt=0.0)
    b0: float = Field(default=2.0, ge=0.0)
    k: Optional[List[float]] = None
    phi0: float = Field(default=0.01, gt=0.0)
    eval_repeats: int = Field(default=1, ge=1)
    seed: int = 0
    accuracy_source: AccuracySource = AccuracySource.training
    parallel: Optional[Literal["local", "ray"]] = None

    # analytic oracle
    oracle_a_max: float = Field(default=0.95, gt=0.0, le=1.0)
    oracle_c1: float = Field(default=0.3, gt=0.0)
    oracle_c2: float = Field(default=0.2, gt=0.0)

    # local training
    model: ArchKind = ArchKind.logistic
    hidden: Optional[int] = Field(default=None, ge=1)
    batch_size: int = Field(default=32, ge=1)
    local_epochs: int = Field(default=1, ge=0)
    learning_rate: float = Field(default=0.1, ge=0.0)
    l2: float = Field(default=0.0, ge=0.0)

    # data
    dataset: DatasetKind = DatasetKind.synthetic
    csv_path: Optional[str] = None
    label_column: str = "label"
    n_samples: int = Field(default=1200, ge=2)
    n_features: int = Field(default=5, ge=1)
    n_classes: int = Field(default=3, ge=2)
    class_separation: float = Field(default=1.5, ge=0.0)
    test_fraction: float = Field(default=0.2, gt=0.0, lt=1.0)
    strategies: Dict[int, InputStrategy] = Field(default_factory=dict)

    # outputs
    out: str = "results"
    plots: bool = True
    checkpoints: bool = False
    export_tables: bool = False

    # validate
    m_grid: List[str] = Field(default_factory=lambda: ["10", "30", "60", ALL_COALITIONS])
    validation_seeds: int = Field(default=10, ge=1)

    # sweep
    sweep_modes: List[MechanismMode] = Field(
        default_factory=lambda: [MechanismMode.vcg_only, MechanismMode.exact, MechanismMode.sampled]
    )
    sweep_strategies: List[StrategyKind] = Field(
        default_factory=lambda: [StrategyKind.label_flip, StrategyKind.removal, StrategyKind.noise]
    )
    sweep_degrees: List[float] = Field(default_factory=lambda: [0.0, 0.25, 0.5, 0.75, 1.0])
    repeats: int = Field(default=10, ge=1)
    deviator: int = Field(default=0, ge=0)

    # bench
    bench_n: List[int] = Field(default_factory=lambda: [4, 6, 8, 10, 12])
    bench_modes: List[MechanismMode] = Field(default_factory=lambda: [MechanismMode.exact, MechanismMode.sampled])

    @field_validator("k", "m_grid", "sweep_modes", "sweep_strategies", "sweep_degrees", "bench_n", "bench_modes", mode="before")
    @classmethod
    def _comma_list(cls, value):
        return _split_list(value)

    @field_validator("plots", "checkpoints", "export_tables", mode="before")
    @classmethod
    def _on_off(cls, value):
        return _switch(value)

    @field_validator("strategies", mode="before")
    @classmethod
    def _strategy_assignments(cls, value):
        if value is None or isinstance(value, dict):
            return value or {}
        assignments = {}
        for entry in _split_list(value, ";"):
            participant, _, strategy = entry.partition(":")
            if not strategy:
                raise ValueError(f"strategy entry {entry!r} must read participant:kind[:degree]")
            index = int(participant)
            if index in assignments:
                raise ValueError(f"participant {index} is assigned twice")
            assignments[index] = InputStrategy.parse(strategy)
        return assignments

    @field_validator("m_grid")
    @classmethod
    def _m_tokens(cls, value):
        for token in value:
            if token.lower() != ALL_COALITIONS and (not token.isdigit() or int(token) < 1):
                raise ValueError(f"m_grid entries must be positive integers or '{ALL_COALITIONS}', got {token!r}")
        if not value:
            raise ValueError("m_grid is empty")
        return [token.lower() for token in value]

    @field_validator("sweep_degrees")
    @classmethod
    def _degrees(cls, value):
        if any(not 0.0 <= d <= 1.0 for d in value):
            raise ValueError("sweep degrees must lie in [0, 1]")
        return value

    @field_validator("csv_path")
    @classmethod
    def _csv_exists(cls, value):
        if value is not None and not os.path.isfile(value):
            raise ValueError(f"file not found: {value}")
        return value

    @model_validator(mode="after")
    def _cross_checks(self) -> "ExperimentConfig":
        if self.dataset == DatasetKind.csv and self.csv_path is None:
            raise ValueError("csv_path: required when dataset=csv")
        if self.k is not None and len(self.k) not in (1, self.n):
            raise ValueError(f"k: needs 1 or n={self.n} entries, got {len(self.k)}")
        bad = [i for i in self.strategies if not 0 <= i < self.n]
        if bad:
            raise ValueError(f"strategies: participants {bad} outside 0..{self.n - 1}")
        if self.deviator >= self.n:
            raise ValueError(f"deviator: participant {self.deviator} outside 0..{self.n - 1}")
        if self.model == ArchKind.mlp and self.hidden is None:
            raise ValueError("hidden: required when model=mlp")
        cap = env_variables.EXACT_MAX_PARTICIPANTS
        if self.mode.uses_all_coalitions and self.n > cap:
            raise ValueError(f"mode: {self.mode.value} enumerates all coalitions and is capped at n={cap}")
        return self

    def resolved_m_grid(self, n: int) -> List[int]:
        population = (1 << n) - 1
        values = {population if token == ALL_COALITIONS else min(int(token), population) for token in self.m_grid}
        return sorted(values)

    def strategy_profile(self, n: Optional[int] = None, overrides: Optional[Dict[int, InputStrategy]] = None) -> List[InputStrategy]:
        n = n or self.n
        assigned = self.strategies if overrides is None else overrides
        return [assigned.get(i, TRUTHFUL) for i in range(n)]

    def mechanism_config(self, **updates) -> MechanismConfig:
        """
        MechanismConfig for this experiment; keyword updates (n, mode, seed, rounds, arch)
        override file values. A per-participant k list only carries over when n is unchanged.
        """
        n = updates.get("n", self.n)
        fields = dict(
            n=n,
            rounds=self.rounds,
            delta=self.delta,
            confidence_delta=self.confidence_delta,
            sample_constant=self.sample_constant,
            b0=self.b0,
            k=self.k if self.k is None or len(self.k) == 1 or n == self.n else self.k[:1],
            phi0=self.phi0,
            train=TrainConfig(
                batch_size=self.batch_size,
                local_epochs=self.local_epochs,
                learning_rate=self.learning_rate,
                l2=self.l2,
            ),
            mode=self.mode,
            eval_repeats=self.eval_repeats,
            seed=self.seed,
            accuracy_source=self.accuracy_source,
            oracle=AccuracyModel(a_max=self.oracle_a_max, c1=self.oracle_c1, c2=self.oracle_c2),
            parallel=self.parallel,
        )
        fields.update(updates)
        return MechanismConfig(**fields)

    def model_arch(self, n_features: int, n_classes: int) -> ModelArch:
        if self.model == ArchKind.mlp:
            return ModelArch.perceptron(n_features, self.hidden, n_classes)
        return ModelArch.logistic_regression(n_features, n_classes)
