import logging
from abc import ABC, abstractmethod
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.clients.ray_client import fan_out
from app.exceptions import ParameterError
from app.services.datasets.model import InputStrategy, LabeledDataset, StrategyKind
from app.services.datasets.service import apply_strategy
from app.services.game.model import Coalition
from app.services.game.service import analytic_oracle
from app.services.learning.model import ModelArch, ModelParams
from app.services.learning.service import evaluate_accuracy, init_params, local_update
from app.services.mechanism.aggregation import aggregate
from app.services.mechanism.model import AccuracySource, MechanismConfig
from utility.utils import derive_seed

logger = logging.getLogger(__name__)


class CoalitionEvaluator(ABC):
    """Produces coalition accuracies for one simulation; one instance per run."""

    def __init__(self, config: MechanismConfig, strategies: Sequence[InputStrategy]):
        if len(strategies) != config.n:
            raise ParameterError(f"{len(strategies)} strategies for n={config.n} participants")
        self.config = config
        self.n = config.n
        self.strategies = list(strategies)

    @abstractmethod
    def start_round(self, round_index: int) -> Tuple[np.ndarray, np.ndarray]:
        """Run the round's local work; return (observed solo accuracies, truthful solo accuracies)."""

    @abstractmethod
    def evaluate(self, coalitions: Sequence[Coalition], weights: np.ndarray) -> Dict[Coalition, float]:
        """Accuracy of each coalition's aggregate, in the order given."""

    @abstractmethod
    def commit_global(self, weights: np.ndarray) -> Optional[ModelParams]:
        """Make the grand-coalition aggregate the next round's global model."""


class TrainedEvaluator(CoalitionEvaluator):
    def __init__(
        self,
        config: MechanismConfig,
        strategies: Sequence[InputStrategy],
        shards: Sequence[LabeledDataset],
        test: LabeledDataset,
    ):
        super().__init__(config, strategies)
        if len(shards) != self.n:
            raise ParameterError(f"{len(shards)} shards for n={self.n} participants")
        if test.is_empty:
            raise ParameterError("the server test set is empty")

        self.arch = config.arch or ModelArch.logistic_regression(test.n_features, test.n_classes)
        self.test = test
        self.true_shards = list(shards)
        self.observed_shards = [
            apply_strategy(shard, strategy, derive_seed(config.seed, "strategy", i))
            for i, (shard, strategy) in enumerate(zip(shards, strategies))
        ]
        self.global_params = init_params(self.arch, derive_seed(config.seed, "init"))
        self.local_models: List[ModelParams] = []
        self._eval_sets: List[LabeledDataset] = [test]
        self._cache: Dict[Coalition, float] = {}

    def _score(self, params: ModelParams) -> float:
        return float(np.mean([evaluate_accuracy(params, data) for data in self._eval_sets]))

    def _bootstrap(self, round_index: int) -> List[LabeledDataset]:
        repeats = self.config.eval_repeats
        if repeats == 1:
            return [self.test]
        rng = np.random.default_rng(derive_seed(self.config.seed, "eval", round_index))
        m = self.test.n_samples
        return [self.test.subset(rng.integers(0, m, size=m), name=f"{self.test.name}-boot{r}") for r in range(repeats)]

    def start_round(self, round_index: int) -> Tuple[np.ndarray, np.ndarray]:
        self._cache = {}
        self._eval_sets = self._bootstrap(round_index)
        seeds = [derive_seed(self.config.seed, "training", i, round_index) for i in range(self.n)]

        # deviators also train on their true data with the same seed, for the truthful solo baseline
        deviators = [i for i, s in enumerate(self.strategies) if s.kind != StrategyKind.truthful]
        jobs = [(self.observed_shards[i], seeds[i]) for i in range(self.n)]
        jobs += [(self.true_shards[i], seeds[i]) for i in deviators]

        start = self.global_params
        train = self.config.train
        models = fan_out(lambda job: local_update(start, job[0], train, job[1]), jobs, self.config.parallel)
        self.local_models = models[: self.n]

        scores = fan_out(self._score, models, self.config.parallel)
        observed = np.array(scores[: self.n])
        truthful = observed.copy()
        truthful[deviators] = scores[self.n:]
        return observed, truthful

    def evaluate(self, coalitions: Sequence[Coalition], weights: np.ndarray) -> Dict[Coalition, float]:
        pending = [c for c in coalitions if c not in self._cache]
        locals_, score = self.local_models, self._score

        def coalition_accuracy(coalition: Coalition) -> float:
            members = coalition.members()
            return score(aggregate([locals_[i] for i in members], weights[members]))

        for coalition, accuracy in zip(pending, fan_out(coalition_accuracy, pending, self.config.parallel)):
            self._cache[coalition] = accuracy
        return {c: self._cache[c] for c in coalitions}

    def commit_global(self, weights: np.ndarray) -> Optional[ModelParams]:
        self.global_params = aggregate(self.local_models, weights)
        return self.global_params


class OracleEvaluator(CoalitionEvaluator):
    """Analytic accuracies from each participant's false degree; no models are trained."""

    def __init__(self, config: MechanismConfig, strategies: Sequence[InputStrategy]):
        super().__init__(config, strategies)
        self.profile = [config.oracle.false_degree(s) for s in self.strategies]
        self._observed = analytic_oracle(self.profile, config.oracle)
        self._truthful = analytic_oracle([0.0] * self.n, config.oracle)

    def start_round(self, round_index: int) -> Tuple[np.ndarray, np.ndarray]:
        singles = [Coalition.of([i], self.n) for i in range(self.n)]
        return (
            np.array([self._observed(c) for c in singles]),
            np.array([self._truthful(c) for c in singles]),
        )

    def evaluate(self, coalitions: Sequence[Coalition], weights: np.ndarray) -> Dict[Coalition, float]:
        return {c: self._observed(c) for c in coalitions}

    def commit_global(self, weights: np.ndarray) -> Optional[ModelParams]:
        return None


def build_evaluator(
    config: MechanismConfig,
    strategies: Sequence[InputStrategy],
    shards: Optional[Sequence[LabeledDataset]] = None,
    test: Optional[LabeledDataset] = None,
) -> CoalitionEvaluator:
    if config.accuracy_source == AccuracySource.oracle:
        return OracleEvaluator(config, strategies)
    if shards is None or test is None:
        raise ParameterError("training accuracy needs participant shards and a server test set")
    return TrainedEvaluator(config, strategies, shards, test)
