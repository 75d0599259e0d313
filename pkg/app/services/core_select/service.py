import logging
import math
import os
from typing import List, Optional, Sequence, Tuple

import numpy as np

from app.exceptions import CapabilityError, MechanismError, ParameterError
from app.middleware.logger.logging import file_logger
from app.middleware.logger.RunContextManager import RunContextManager
from app.services.core_select.model import PaymentVector, SolverConfig, SurplusVector
from app.services.game.model import CharacteristicTable, Coalition
from app.services.game.service import subset_sums
from app.services.qp.model import QuadraticProgram
from app.services.qp.service import solve_qp
from configs.envs import env_variables

logger = logging.getLogger(__name__)

CORE_TOL = 1e-6
NESTED_SAMPLING_MAX_PARTICIPANTS = 20

Constraint = Tuple[Coalition, float]


def constraints_from_table(table: CharacteristicTable) -> List[Constraint]:
    """One (S, w(S)) pair per evaluated nonempty coalition, in bitmask order."""
    return [(coalition, table[coalition]) for coalition in table.coalitions()]


def build_program(
    constraints: Sequence[Constraint],
    vcg: Sequence[float],
    wN: float,
    pin_epsilon: bool = False,
) -> QuadraticProgram:
    """
    Core-selecting program over x = (pi_1..pi_n, eps), pi0 eliminated as w(N) - sum(pi):

      minimize    sum_i (pi_i - pi_i^VCG + eps)^2
      subject to  sum_{i not in S} pi_i - eps <= w(N) - w(S)   for each supplied S
                  sum_i pi_i <= w(N)                            (pi0 >= 0)
                  pi >= 0, eps >= 0                             (eps = 0 when pinned)

    The ridge centre (pi^VCG, 0) settles ties along the flat (pi - t, eps + t) direction.
    """
    if not constraints:
        raise ParameterError("the core-selecting program needs at least one coalition constraint")
    vcg = np.asarray(vcg, dtype=np.float64)
    n = vcg.shape[0]

    B = np.hstack([np.eye(n), np.ones((n, 1))])
    bits = np.array([coalition.bits for coalition, _ in constraints], dtype=np.int64)
    worth = np.array([w for _, w in constraints], dtype=np.float64)
    if any(coalition.n != n for coalition, _ in constraints):
        raise ParameterError(f"constraint coalitions must range over {n} participants")

    outside = 1.0 - ((bits[:, None] >> np.arange(n)[None, :]) & 1)
    coalition_rows = np.hstack([outside, -np.ones((len(constraints), 1))])
    budget_row = np.append(np.ones(n), 0.0)[None, :]

    pinned = np.zeros((1, n + 1))
    pinned[0, n] = 1.0
    return QuadraticProgram(
        Q=2.0 * B.T @ B,
        c=-2.0 * B.T @ vcg,
        constant=float(vcg @ vcg),
        A_eq=pinned if pin_epsilon else None,
        b_eq=np.zeros(1) if pin_epsilon else None,
        G=np.vstack([coalition_rows, budget_row]),
        h=np.append(wN - worth, wN),
        lb=np.zeros(n + 1),
        ridge_center=np.append(vcg, 0.0),
    )


def _dump_program(qp: QuadraticProgram, round_index: Optional[int]) -> Optional[str]:
    debug_dir = env_variables.QP_DEBUG_DIR
    if not debug_dir:
        return None
    os.makedirs(debug_dir, exist_ok=True)
    run_id = RunContextManager.get_run_id() or "adhoc"
    path = os.path.join(debug_dir, f"qp_{run_id}_round{round_index if round_index is not None else 'na'}.json")
    qp.dump(path)
    return path


def solve_core_selecting(
    constraints: Sequence[Constraint],
    vcg: Sequence[float],
    wN: float,
    cfg: Optional[SolverConfig] = None,
    pin_epsilon: bool = False,
    round_index: Optional[int] = None,
) -> SurplusVector:
    cfg = cfg or SolverConfig()
    qp = build_program(constraints, vcg, wN, pin_epsilon)
    n = qp.n_vars - 1

    # pi = 0 with the smallest eps covering every constraint is always feasible (pi0 = w(N) >= 0)
    start = np.zeros(n + 1)
    if not pin_epsilon:
        start[n] = max(0.0, max(w for _, w in constraints) - wN)

    solution = solve_qp(qp, cfg.tol, cfg.max_iter, x0=start)
    if not solution.is_optimal:
        path = _dump_program(qp, round_index)
        file_logger.warning(
            f"core-selecting program not solved: {solution.diagnostics()}" + (f" (dumped to {path})" if path else ""),
            extra={"ctx": "QP"},
        )
        raise MechanismError(
            f"core-selecting program ended with status {solution.status.value}",
            solution=solution,
            round_index=round_index,
        )

    pi = solution.x[:n]
    logger.debug(
        "core-selecting solve over %d constraints: eps %.3g, sigma2 %.3g, %d iterations",
        len(constraints),
        solution.x[n],
        solution.objective,
        solution.iterations,
    )
    return SurplusVector(
        pi=pi,
        pi0=float(wN - pi.sum()),
        eps=float(solution.x[n]),
        sigma2=max(solution.objective, 0.0),
    )


def payments_from_surplus(s: SurplusVector, observed_valuations: Sequence[float]) -> PaymentVector:
    v = np.asarray(observed_valuations, dtype=np.float64)
    if v.shape[0] != s.n:
        raise ParameterError(f"{v.shape[0]} valuations for {s.n} participants")
    p = s.pi - v
    return PaymentVector(p=p, budget_spent=float(p.sum()))


def first_price_surplus(n: int, wN: float) -> SurplusVector:
    if wN < 0.0:
        raise ParameterError(f"w(N) must be nonnegative, got {wN}")
    return SurplusVector(pi=np.zeros(n), pi0=wN, eps=0.0)


def coverage(pi: np.ndarray, pi0: float, eps: float, table: CharacteristicTable) -> float:
    """Fraction of nonempty coalitions S with sum_{i in S} pi_i + pi0 + eps >= w(S) - CORE_TOL."""
    if not table.is_complete():
        raise CapabilityError(
            f"core accuracy needs all {(1 << table.n) - 1} coalitions, table has {len(table) - 1}"
        )
    if table.n == 0:
        return 1.0
    worth = table.worth_array()
    covered = subset_sums(np.asarray(pi, dtype=np.float64)) + pi0 + eps >= worth - CORE_TOL
    return float(np.count_nonzero(covered[1:])) / ((1 << table.n) - 1)


def core_accuracy(s: SurplusVector, full_table: CharacteristicTable) -> float:
    return coverage(s.pi, s.pi0, s.eps, full_table)


def vcg_core_accuracy(full_table: CharacteristicTable, vcg: Sequence[float]) -> float:
    """Core accuracy of the VCG surplus itself (pi0 takes the remainder, eps = 0)."""
    vcg = np.asarray(vcg, dtype=np.float64)
    return coverage(vcg, full_table.grand_value - float(vcg.sum()), 0.0, full_table)


def probable_core_check(s: SurplusVector, table: CharacteristicTable, delta: float) -> bool:
    if not 0.0 <= delta < 1.0:
        raise ParameterError(f"delta must lie in [0, 1), got {delta}")
    return core_accuracy(s, table) >= 1.0 - delta - 1e-12


def sample_size(n: int, delta: float, Delta: float, C: float = 1.0) -> int:
    """ceil(C * (n + ln(1/Delta)) / delta^2), never more than the 2^n - 1 nonempty coalitions."""
    if not 0.0 < delta < 1.0:
        raise ParameterError(f"delta must lie in (0, 1), got {delta}")
    if not 0.0 < Delta < 1.0:
        raise ParameterError(f"confidence Delta must lie in (0, 1), got {Delta}")
    if C <= 0.0:
        raise ParameterError(f"sample constant C must be positive, got {C}")
    if n < 1:
        raise ParameterError(f"n must be >= 1, got {n}")
    m = math.ceil(C * (n + math.log(1.0 / Delta)) / delta ** 2 - 1e-9)
    return int(min(max(m, 1), (1 << n) - 1))


def sample_coalitions(n: int, m: int, seed: int) -> List[Coalition]:
    """
    m distinct nonempty coalitions, uniform without replacement, sorted by bitmask.
    Up to 20 participants the draw is a prefix of one seeded permutation, so a
    fixed seed gives nested samples as m grows.
    """
    if n < 1:
        raise ParameterError(f"n must be >= 1, got {n}")
    population = (1 << n) - 1
    if not 1 <= m <= population:
        raise ParameterError(f"m must lie in 1..{population} for n={n}, got {m}")

    rng = np.random.default_rng(seed)
    if n <= NESTED_SAMPLING_MAX_PARTICIPANTS:
        drawn = rng.permutation(population)[:m] + 1
    else:
        drawn = rng.choice(population, size=m, replace=False) + 1
    return [Coalition(int(bits), n) for bits in np.sort(drawn)]
