import logging
import time
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from app.exceptions import CapabilityError, MechanismError, ParameterError
from app.middleware.logger.log_execution_time import log_execution_time
from app.middleware.logger.logging import file_logger
from app.middleware.logger.RunContextManager import RunContextManager
from app.services.core_select.service import (
    constraints_from_table,
    core_accuracy,
    coverage,
    payments_from_surplus,
    sample_coalitions,
    sample_size,
    solve_core_selecting,
    vcg_core_accuracy,
)
from app.services.datasets.model import InputStrategy, LabeledDataset, TRUTHFUL
from app.services.game.model import Coalition, ValuationParams
from app.services.game.service import EPSILON_BOUND_MAX_PARTICIPANTS, build_characteristic_table, valuation, vcg_surplus
from app.services.mechanism.aggregation import accrue_payments, aggregate, update_reputation
from app.services.mechanism.evaluator import CoalitionEvaluator, build_evaluator
from app.services.mechanism.model import (
    MechanismConfig,
    MechanismMode,
    PhaseTimings,
    ReputationState,
    RoundReport,
    SimulationResult,
    ValidationRow,
)
from utility.utils import derive_seed

logger = logging.getLogger(__name__)

__all__ = [
    "aggregate",
    "update_reputation",
    "IncentiveMechanism",
    "evaluation_set",
    "run_simulation",
    "run_exact_vs_sampled",
]


def _with_vcg_coalitions(coalitions: Iterable[Coalition], n: int) -> List[Coalition]:
    """Add N and every N minus i, drop the empty set and duplicates, order by bitmask."""
    grand = Coalition.grand(n)
    pool = set(coalitions) | {grand} | {grand.without(i) for i in range(n)}
    return sorted(c for c in pool if not c.is_empty)


def evaluation_set(config: MechanismConfig, round_index: int) -> List[Coalition]:
    """Coalitions whose worth is needed this round under config.mode."""
    n = config.n
    if config.mode.uses_all_coalitions:
        return Coalition.all_nonempty(n)
    if config.mode == MechanismMode.vcg_only:
        return _with_vcg_coalitions([], n)
    m = sample_size(n, config.delta, config.confidence_delta, config.sample_constant)
    samples = sample_coalitions(n, m, derive_seed(config.seed, "sampling", round_index))
    return _with_vcg_coalitions(samples, n)


class IncentiveMechanism:
    """
    Federated rounds with core-selecting payments. Each round: local updates,
    coalition evaluation under reputation weights, characteristic table, VCG
    surplus, the core-selecting program (or plain VCG), payments and reputation.
    """

    def __init__(
        self,
        config: MechanismConfig,
        strategies: Optional[Sequence[InputStrategy]] = None,
        shards: Optional[Sequence[LabeledDataset]] = None,
        test: Optional[LabeledDataset] = None,
        evaluator: Optional[CoalitionEvaluator] = None,
    ):
        self.config = config
        self.strategies = list(strategies) if strategies is not None else [TRUTHFUL] * config.n
        self.evaluator = evaluator or build_evaluator(config, self.strategies, shards, test)
        self.k = config.preferences

    def initial_state(self) -> ReputationState:
        return ReputationState.initial(self.config.n, self.config.phi0)

    def run_round(self, state: ReputationState, round_index: int) -> Tuple[ReputationState, RoundReport]:
        config = self.config
        n = config.n
        RunContextManager.set_round(round_index)

        started = time.perf_counter()
        observed_solo, truthful_solo = self.evaluator.start_round(round_index)
        trained = time.perf_counter()

        coalitions = evaluation_set(config, round_index)
        accuracies = self.evaluator.evaluate(coalitions, state.R)
        grand = Coalition.grand(n)
        global_accuracy = accuracies[grand]
        global_params = self.evaluator.commit_global(state.R)
        evaluated = time.perf_counter()

        vp = ValuationParams(k=self.k, b0=config.b0, solo_accuracy=observed_solo.tolist())
        table = build_characteristic_table(n, accuracies, vp)
        vcg = vcg_surplus(table)
        valuations = np.array([valuation(global_accuracy, observed_solo[i], self.k[i]) for i in range(n)])
        true_valuations = np.array([valuation(global_accuracy, truthful_solo[i], self.k[i]) for i in range(n)])

        if config.mode == MechanismMode.vcg_only:
            surplus, pi0, eps, sigma2 = vcg, table.grand_value - float(vcg.sum()), 0.0, 0.0
            payments = vcg - valuations
        else:
            try:
                solution = solve_core_selecting(
                    constraints_from_table(table),
                    vcg,
                    table.grand_value,
                    config.solver,
                    pin_epsilon=config.mode == MechanismMode.classical,
                    round_index=round_index,
                )
            except MechanismError as e:
                e.round_index = round_index
                raise
            surplus, pi0, eps, sigma2 = solution.pi, solution.pi0, solution.eps, solution.sigma2
            payments = payments_from_surplus(solution, valuations).p
        solved = time.perf_counter()

        state = accrue_payments(update_reputation(state, surplus, config.phi0), payments)
        report = RoundReport(
            round=round_index,
            coalition_count=len(coalitions),
            accuracies={c.bits: a for c, a in accuracies.items()},
            w={c.bits: table[c] for c in coalitions},
            global_accuracy=global_accuracy,
            valuations=valuations,
            true_valuations=true_valuations,
            vcg_surplus=vcg,
            surplus=surplus,
            pi0=pi0,
            eps=eps,
            sigma2=sigma2,
            payments=payments,
            accumulated_payments=state.accumulated_payments,
            utilities=true_valuations + payments,
            reputations=state.R,
            core_accuracy=coverage(surplus, pi0, eps, table) if table.is_complete() else None,
            wall_times=PhaseTimings(train=trained - started, aggregate_eval=evaluated - trained, qp=solved - evaluated),
            global_params=global_params,
        )
        file_logger.info(
            f"round {round_index}: {len(coalitions)} coalitions, global accuracy {global_accuracy:.4f}, "
            f"eps {eps:.3g}, budget spent {report.budget_spent:.4f}",
            extra={"ctx": "ROUND"},
        )
        return state, report

    def run(self) -> SimulationResult:
        state = self.initial_state()
        reports: List[RoundReport] = []
        try:
            for round_index in range(1, self.config.rounds + 1):
                state, report = self.run_round(state, round_index)
                reports.append(report)
        finally:
            RunContextManager.set_round(None)
        return SimulationResult(
            reports=reports,
            accumulated_payments=state.accumulated_payments,
            accumulated_utility=np.sum([r.utilities for r in reports], axis=0),
            reputation=state,
        )


@log_execution_time
def run_simulation(
    config: MechanismConfig,
    strategies: Optional[Sequence[InputStrategy]] = None,
    shards: Optional[Sequence[LabeledDataset]] = None,
    test: Optional[LabeledDataset] = None,
) -> SimulationResult:
    """T rounds threading the global model, reputation and accumulated payments."""
    return IncentiveMechanism(config, strategies, shards, test).run()


@log_execution_time
def run_exact_vs_sampled(
    config: MechanismConfig,
    m_grid: Sequence[int],
    seeds: Sequence[int],
    shards: Optional[Sequence[LabeledDataset]] = None,
    test: Optional[LabeledDataset] = None,
) -> List[ValidationRow]:
    """
    Per seed: evaluate every coalition once (all participants truthful), solve
    the exact program, then the sampled program for each m on the same table.
    Rows come back ordered by (m, seed).
    """
    n = config.n
    if n > EPSILON_BOUND_MAX_PARTICIPANTS:
        raise CapabilityError(
            f"exact-vs-sampled validation enumerates 2^n coalitions; capped at n={EPSILON_BOUND_MAX_PARTICIPANTS}"
        )
    population = (1 << n) - 1
    grid = sorted({min(max(int(m), 1), population) for m in m_grid})
    if not grid:
        raise ParameterError("m_grid is empty")

    rows: List[ValidationRow] = []
    for seed in seeds:
        seeded = config.model_copy(update={"seed": int(seed)})
        mechanism = IncentiveMechanism(seeded, None, shards, test)
        state = mechanism.initial_state()
        RunContextManager.set_round(1)

        observed_solo, _ = mechanism.evaluator.start_round(1)
        accuracies = mechanism.evaluator.evaluate(Coalition.all_nonempty(n), state.R)
        vp = ValuationParams(k=mechanism.k, b0=config.b0, solo_accuracy=observed_solo.tolist())
        table = build_characteristic_table(n, accuracies, vp)
        vcg = vcg_surplus(table)
        exact = solve_core_selecting(constraints_from_table(table), vcg, table.grand_value, config.solver)
        baseline = vcg_core_accuracy(table, vcg)

        for m in grid:
            started = time.perf_counter()
            samples = _with_vcg_coalitions(sample_coalitions(n, m, derive_seed(seed, "sampling", 1)), n)
            sampled = solve_core_selecting(
                [(c, table[c]) for c in samples], vcg, table.grand_value, config.solver
            )
            elapsed = time.perf_counter() - started
            rows.append(
                ValidationRow(
                    seed=int(seed),
                    m=m,
                    sigma2_exact=exact.sigma2,
                    sigma2_sampled=sampled.sigma2,
                    core_accuracy=core_accuracy(sampled, table),
                    vcg_core_accuracy=baseline,
                    time_ms=1000.0 * elapsed,
                )
            )
        logger.debug("validation seed %s: exact sigma2 %.6g", seed, exact.sigma2)
    RunContextManager.set_round(None)
    return sorted(rows, key=lambda row: (row.m, row.seed))
