import logging
import warnings
from typing import List, Optional, Tuple

import numpy as np
import scipy.linalg
from scipy.optimize import linprog

from app.exceptions import ParameterError
from app.services.qp.model import (
    PSD_FLOOR,
    KktResiduals,
    QpMultipliers,
    QpSolution,
    QpStatus,
    QuadraticProgram,
)

logger = logging.getLogger(__name__)

RIDGE = 1e-9
DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 200000
LP_FEASIBILITY_TOL = 1e-10


def check_kkt(
    qp: QuadraticProgram,
    x: np.ndarray,
    multipliers: QpMultipliers,
    tol: Optional[float] = None,
) -> KktResiduals:
    """
    Infinity-norm KKT residuals of (x, multipliers) for qp.

    primal_ineq is the exact worst violation of Gx <= h and x >= lb. dual covers
    stationarity plus any negative inequality or bound multiplier. Bound
    multipliers on unbounded variables must be zero and count as complementarity.
    """
    qp.check_dimensions()
    x = np.asarray(x, dtype=np.float64)

    primal_eq = float(np.abs(qp.A_eq @ x - qp.b_eq).max(initial=0.0))
    finite = np.isfinite(qp.lb)
    primal_ineq = max(
        float(np.maximum(qp.G @ x - qp.h, 0.0).max(initial=0.0)),
        float(np.maximum(qp.lb[finite] - x[finite], 0.0).max(initial=0.0)),
    )

    stationarity = qp.Q @ x + qp.c + qp.A_eq.T @ multipliers.eq + qp.G.T @ multipliers.ineq - multipliers.lower
    dual = max(
        float(np.abs(stationarity).max(initial=0.0)),
        float(np.maximum(-multipliers.ineq, 0.0).max(initial=0.0)),
        float(np.maximum(-multipliers.lower, 0.0).max(initial=0.0)),
    )

    complementarity = max(
        float(np.abs(multipliers.ineq * (qp.h - qp.G @ x)).max(initial=0.0)),
        float(np.abs(multipliers.lower[finite] * (x[finite] - qp.lb[finite])).max(initial=0.0)),
        float(np.abs(multipliers.lower[~finite]).max(initial=0.0)),
    )

    residuals = KktResiduals(
        primal_eq=primal_eq,
        primal_ineq=primal_ineq,
        dual=dual,
        complementarity=complementarity,
    )
    if tol is not None and not residuals.within(tol):
        logger.debug("KKT residuals above %.1e: %s", tol, residuals.model_dump())
    return residuals


def _primal_violation(qp: QuadraticProgram, x: np.ndarray) -> float:
    residuals = check_kkt(qp, x, QpMultipliers.zeros(qp))
    return max(residuals.primal_eq, residuals.primal_ineq)


def _feasibility_phase(qp: QuadraticProgram) -> Tuple[np.ndarray, float]:
    """
    LP  min t  s.t.  Gx - t <= h,  |A_eq x - b_eq| <= t,  x >= lb,  t >= 0.
    Always solvable; t* is the smallest achievable max primal residual.
    """
    n = qp.n_vars
    blocks = [np.hstack([qp.G, -np.ones((qp.n_ineq, 1))])]
    rhs = [qp.h]
    if qp.n_eq:
        blocks += [np.hstack([qp.A_eq, -np.ones((qp.n_eq, 1))]), np.hstack([-qp.A_eq, -np.ones((qp.n_eq, 1))])]
        rhs += [qp.b_eq, -qp.b_eq]
    A_ub = np.vstack(blocks)
    b_ub = np.concatenate(rhs)
    bounds = [(float(v) if np.isfinite(v) else None, None) for v in qp.lb] + [(0.0, None)]
    cost = np.zeros(n + 1)
    cost[-1] = 1.0

    result = linprog(
        cost,
        A_ub=A_ub if A_ub.shape[0] else None,
        b_ub=b_ub if A_ub.shape[0] else None,
        bounds=bounds,
        method="highs",
        options={"primal_feasibility_tolerance": LP_FEASIBILITY_TOL, "dual_feasibility_tolerance": LP_FEASIBILITY_TOL},
    )
    if result.status != 0 or result.x is None:
        logger.warning("feasibility LP ended with status %s: %s", result.status, result.message)
        return np.zeros(n), float("inf")
    x = result.x[:n]
    return x, _primal_violation(qp, x)


def _null_basis(Q: np.ndarray, c: np.ndarray) -> Optional[np.ndarray]:
    """Basis of null(Q) when c is orthogonal to it, else None."""
    eigvals, eigvecs = np.linalg.eigh(Q)
    null = eigvecs[:, eigvals < RIDGE]
    if null.shape[1] == 0:
        return None
    scale = max(1.0, float(np.abs(c).max(initial=0.0)))
    if float(np.abs(null.T @ c).max()) > 1e-10 * scale:
        return None
    return null


def _solve_equality_qp(H: np.ndarray, g: np.ndarray, A: np.ndarray, r: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Step p and multipliers of   min 0.5 p'Hp + g'p  s.t.  A p = r
    from the KKT block system, LU with one refinement step, least squares if singular.
    """
    n, k = H.shape[0], A.shape[0]
    K = np.block([[H, A.T], [A, np.zeros((k, k))]])
    rhs = np.concatenate([-g, r])

    solution = None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            lu = scipy.linalg.lu_factor(K, check_finite=False)
            solution = scipy.linalg.lu_solve(lu, rhs, check_finite=False)
            solution = solution + scipy.linalg.lu_solve(lu, rhs - K @ solution, check_finite=False)
        except (np.linalg.LinAlgError, ValueError):
            solution = None
    if solution is None or not np.all(np.isfinite(solution)) or np.abs(K @ solution - rhs).max() > 1e-8 * max(
        1.0, np.abs(rhs).max()
    ):
        solution = np.linalg.lstsq(K, rhs, rcond=None)[0]
    return solution[:n], solution[n:]


def solve_qp(
    qp: QuadraticProgram,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    x0: Optional[np.ndarray] = None,
) -> QpSolution:
    """
    Convex QP by a feasibility LP followed by a primal active-set method.

    When Q is singular a ridge RIDGE * I centred on qp.ridge_center (origin by
    default) is added and reported; KKT residuals refer to the ridged program,
    the objective to the original one. Infeasible programs come back with
    status Infeasible and the LP's best max residual, never an exception.
    """
    qp.check_dimensions()
    if tol <= 0.0:
        raise ParameterError(f"tol must be positive, got {tol}")
    if max_iter < 1:
        raise ParameterError(f"max_iter must be >= 1, got {max_iter}")
    min_eig = qp.min_eigenvalue()
    if min_eig < PSD_FLOOR:
        raise ParameterError(f"Q is not positive semidefinite: smallest eigenvalue {min_eig:.3e}")

    n = qp.n_vars
    if n == 0:
        return QpSolution(x=np.zeros(0), objective=qp.constant, status=QpStatus.optimal)

    ridge = RIDGE if min_eig < RIDGE else 0.0
    center = qp.ridge_center if qp.ridge_center is not None else np.zeros(n)
    effective = qp.model_copy(update={"Q": qp.Q + ridge * np.eye(n), "c": qp.c - ridge * center})
    null = _null_basis(qp.Q, qp.c) if ridge else None

    start = None
    if x0 is not None:
        x0 = np.asarray(x0, dtype=np.float64).reshape(-1)
        if x0.shape[0] != n:
            raise ParameterError(f"x0 has {x0.shape[0]} entries, expected {n}")
        if _primal_violation(qp, x0) <= tol:
            start = x0.copy()
    infeasibility = 0.0
    if start is None:
        start, infeasibility = _feasibility_phase(qp)
        if infeasibility > tol:
            logger.debug("QP infeasible: feasibility phase left max residual %.3e", infeasibility)
            return QpSolution(
                x=start,
                objective=qp.objective(start),
                status=QpStatus.infeasible,
                kkt_residuals=check_kkt(qp, start, QpMultipliers.zeros(qp)),
                ridge=ridge,
                infeasibility=infeasibility,
            )

    # bounds become rows so the working set treats them like any other inequality
    finite = np.flatnonzero(np.isfinite(qp.lb))
    rows = np.vstack([qp.G, -np.eye(n)[finite]])
    limits = np.concatenate([qp.h, -qp.lb[finite]])
    m_ineq = qp.n_ineq

    x = start
    working: List[int] = []
    in_working = np.zeros(rows.shape[0], dtype=bool)
    lam_eq = np.zeros(qp.n_eq)
    lam_w = np.zeros(0)
    converged = False
    iterations = 0

    for iterations in range(1, max_iter + 1):
        gradient = qp.Q @ x + qp.c
        if null is not None:
            # c lies in range(Q), so any null-space component of the gradient is rounding noise
            gradient = gradient - null @ (null.T @ gradient)
        gradient = gradient + ridge * (x - center)

        active = rows[working]
        A_w = np.vstack([qp.A_eq, active])
        r_w = np.concatenate([qp.b_eq - qp.A_eq @ x, limits[working] - active @ x])
        p, lam = _solve_equality_qp(effective.Q, gradient, A_w, r_w)
        lam_eq, lam_w = lam[: qp.n_eq], lam[qp.n_eq:]

        if np.abs(p).max() <= 1e-12 * max(1.0, np.abs(x).max()):
            x = x + p
            if not working or lam_w.min() >= -tol:
                converged = True
                break
            drop = int(np.argmin(lam_w))
            in_working[working[drop]] = False
            del working[drop]
            continue

        step = rows @ p
        slack = np.maximum(limits - rows @ x, 0.0)
        blocking = np.flatnonzero(~in_working & (step > 1e-12 * np.abs(p).max()))
        alpha, block = 1.0, None
        if blocking.size:
            ratios = slack[blocking] / step[blocking]
            j = int(np.argmin(ratios))
            if ratios[j] < 1.0:
                alpha, block = float(ratios[j]), int(blocking[j])
        x = x + alpha * p
        if block is not None:
            working.append(block)
            in_working[block] = True

    ineq = np.zeros(rows.shape[0])
    if converged and working:
        ineq[working] = lam_w
    lower = np.zeros(n)
    lower[finite] = ineq[m_ineq:]
    multipliers = QpMultipliers(eq=lam_eq, ineq=ineq[:m_ineq], lower=lower)

    residuals = check_kkt(effective, x, multipliers, tol)
    status = QpStatus.optimal if converged and residuals.within(tol) else QpStatus.iteration_limit
    if status != QpStatus.optimal:
        logger.warning(
            "QP stopped after %d iterations without certifying optimality (worst KKT residual %.3e)",
            iterations,
            residuals.worst(),
        )
    else:
        logger.debug("QP optimal after %d iterations, |working set| = %d", iterations, len(working))

    return QpSolution(
        x=x,
        objective=qp.objective(x),
        status=status,
        kkt_residuals=residuals,
        multipliers=multipliers,
        ridge=ridge,
        iterations=iterations,
        infeasibility=infeasibility,
    )
