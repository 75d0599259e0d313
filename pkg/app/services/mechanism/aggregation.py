from typing import Sequence

import numpy as np

from app.exceptions import ParameterError
from app.services.learning.model import ModelParams
from app.services.mechanism.model import ReputationState


def aggregation_weights(weights: Sequence[float]) -> np.ndarray:
    weights = np.asarray(weights, dtype=np.float64)
    if weights.size == 0:
        raise ParameterError("cannot aggregate an empty member set")
    if np.any(weights <= 0.0) or not np.all(np.isfinite(weights)):
        raise ParameterError("aggregation weights must be positive and finite")
    return weights / weights.sum()


def aggregate(models: Sequence[ModelParams], weights: Sequence[float]) -> ModelParams:
    """Reputation-weighted average of the members' parameter vectors, weights normalized over the members."""
    if len(models) != len(weights):
        raise ParameterError(f"{len(models)} models but {len(weights)} weights")
    normalized = aggregation_weights(weights)
    arch = models[0].arch
    if any(model.arch != arch for model in models[1:]):
        raise ParameterError("cannot aggregate models with different architectures")
    if len(models) == 1:
        return models[0]
    theta = np.tensordot(normalized, np.stack([model.theta for model in models]), axes=1)
    return models[0].with_theta(theta)


def update_reputation(state: ReputationState, round_surplus: Sequence[float], phi0: float) -> ReputationState:
    round_surplus = np.asarray(round_surplus, dtype=np.float64)
    if round_surplus.shape != state.cumulative_surplus.shape:
        raise ParameterError(
            f"surplus for {round_surplus.shape[0]} participants, state has {state.cumulative_surplus.shape[0]}"
        )
    cumulative = state.cumulative_surplus + round_surplus
    return state.model_copy(update={"cumulative_surplus": cumulative, "R": np.maximum(phi0, cumulative)})


def accrue_payments(state: ReputationState, payments: Sequence[float]) -> ReputationState:
    return state.model_copy(
        update={"accumulated_payments": state.accumulated_payments + np.asarray(payments, dtype=np.float64)}
    )
