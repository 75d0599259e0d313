import logging
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from app.exceptions import CapabilityError, ParameterError
from app.services.game.model import AccuracyModel, CharacteristicTable, Coalition, ValuationParams

logger = logging.getLogger(__name__)

EPSILON_BOUND_MAX_PARTICIPANTS = 12


def _check_accuracy(value: float, name: str) -> None:
    if not 0.0 <= value <= 1.0:
        raise ParameterError(f"{name} must lie in [0, 1], got {value}")


def valuation(global_accuracy: float, solo_accuracy: float, k: float) -> float:
    """k * max(a_global - a_solo, 0), one realized evaluation standing in for the expectation."""
    _check_accuracy(global_accuracy, "global_accuracy")
    _check_accuracy(solo_accuracy, "solo_accuracy")
    if k <= 0.0:
        raise ParameterError(f"preference constant k must be positive, got {k}")
    return k * max(global_accuracy - solo_accuracy, 0.0)


def characteristic_value(coalition: Coalition, coalition_accuracy: float, vp: ValuationParams) -> float:
    if coalition.is_empty:
        return 0.0
    _check_accuracy(coalition_accuracy, "coalition_accuracy")
    return vp.b0 + sum(
        valuation(coalition_accuracy, vp.solo_accuracy[i], vp.k[i]) for i in coalition.members()
    )


def build_characteristic_table(
    n: int,
    accuracies: Mapping[Coalition, float],
    vp: ValuationParams,
) -> CharacteristicTable:
    if vp.n != n:
        raise ParameterError(f"valuation params cover {vp.n} participants, table needs {n}")
    table = CharacteristicTable(n)
    for coalition, accuracy in accuracies.items():
        table.set(coalition, characteristic_value(coalition, accuracy, vp), accuracy)
    return table


def vcg_surplus(table: CharacteristicTable) -> np.ndarray:
    grand = Coalition.grand(table.n)
    w_grand = table[grand]
    return np.array([w_grand - table[grand.without(i)] for i in range(table.n)])


def vcg_payment(i: int, global_valuations: Sequence[float], drop_i_valuations: Sequence[float]) -> float:
    """Externality of i on the others: their value with i's input minus their value without it."""
    if len(global_valuations) != len(drop_i_valuations):
        raise ParameterError("valuation vectors must have equal length")
    others = [j for j in range(len(global_valuations)) if j != i]
    return float(sum(global_valuations[j] for j in others) - sum(drop_i_valuations[j] for j in others))


def subset_sums(values: Sequence[float]) -> np.ndarray:
    """Array s with s[bits] = sum of values[i] over the members of bitmask bits."""
    sums = np.zeros(1)
    for value in values:
        sums = np.concatenate([sums, sums + value])
    return sums


def epsilon_lower_bound(table: CharacteristicTable) -> float:
    """
    Smallest ε guaranteed to put the VCG surplus in the strong ε-core:

      α(S)  = max_{T ⊇ S} max_{i ∈ S} [(w(N) - w(N∖i)) - (w(T) - w(T∖i))]
      bound = max_{S ≠ ∅} α(S) * (n - |S|),  clamped at 0

    The max over supersets is a superset-max transform per participant.
    """
    n = table.n
    if n > EPSILON_BOUND_MAX_PARTICIPANTS:
        raise CapabilityError(
            f"epsilon_lower_bound enumerates 2^n subsets; capped at n={EPSILON_BOUND_MAX_PARTICIPANTS}, got {n}"
        )
    if n == 0:
        return 0.0

    worth = table.worth_array()
    masks = np.arange(1 << n)
    full = (1 << n) - 1
    sizes = np.array([bin(m).count("1") for m in masks])
    alpha = np.full(1 << n, -np.inf)

    for i in range(n):
        bit = 1 << i
        has_i = (masks & bit) != 0
        marginal = np.full(1 << n, -np.inf)
        marginal[has_i] = worth[full] - worth[full ^ bit] - (worth[has_i] - worth[masks[has_i] ^ bit])
        for j in range(n):
            lacks_j = masks[(masks >> j & 1) == 0]
            marginal[lacks_j] = np.maximum(marginal[lacks_j], marginal[lacks_j | (1 << j)])
        alpha[has_i] = np.maximum(alpha[has_i], marginal[has_i])

    bound = float(np.max(alpha[1:] * (n - sizes[1:])))
    logger.debug("epsilon lower bound for n=%d: %.6g", n, bound)
    return max(bound, 0.0)


def oracle_accuracy(base: AccuracyModel, members: Iterable[int], profile: Sequence[float]) -> float:
    degrees = np.array([profile[i] for i in members], dtype=np.float64)
    effective = float(np.sum(1.0 - degrees))
    accuracy = base.a_max - base.c1 / (1.0 + effective) - base.c2 * float(np.sum(degrees))
    return float(np.clip(accuracy, 0.0, 1.0))


def analytic_oracle(profile: Sequence[float], base: AccuracyModel) -> Callable[[Coalition], float]:
    """Coalition accuracy as a deterministic function of the participants' false degrees."""
    profile = [float(f) for f in profile]
    for i, f in enumerate(profile):
        if not 0.0 <= f <= 1.0:
            raise ParameterError(f"false degree of participant {i} must lie in [0, 1], got {f}")

    def accuracy(coalition: Coalition) -> float:
        if coalition.n != len(profile):
            raise ParameterError(f"coalition over {coalition.n} participants, profile has {len(profile)}")
        return oracle_accuracy(base, coalition.members(), profile)

    return accuracy
