import itertools

import numpy as np
import pytest

from app.exceptions import ParameterError
from app.services.qp.model import QpMultipliers, QpStatus, QuadraticProgram
from app.services.qp.service import RIDGE, check_kkt, solve_qp


def _one_dim_example() -> QuadraticProgram:
    # (x - 1)^2 with x >= 2
    return QuadraticProgram(Q=[[2.0]], c=[-2.0], constant=1.0, lb=[2.0])


def _random_box_qp(rng, n):
    M = rng.normal(size=(n, n))
    lo = rng.uniform(-1.0, 0.0, size=n)
    hi = lo + rng.uniform(0.5, 2.0, size=n)
    return QuadraticProgram(
        Q=M @ M.T + 0.5 * np.eye(n),
        c=rng.normal(scale=3.0, size=n),
        G=np.eye(n),
        h=hi,
        lb=lo,
    )


def _projected_gradient(qp, iterations=5000):
    lo, hi = qp.lb, qp.h
    step = 1.0 / np.linalg.eigvalsh(qp.Q).max()
    x = np.clip(np.zeros(qp.n_vars), lo, hi)
    for _ in range(iterations):
        x = np.clip(x - step * (qp.Q @ x + qp.c), lo, hi)
    return qp.objective(x)


def _random_general_qp(rng):
    n = int(rng.integers(2, 5))
    m = int(rng.integers(1, 6))
    M = rng.normal(size=(n, n))
    feasible = rng.normal(size=n)
    G = rng.normal(size=(m, n))
    lb = np.where(rng.random(n) < 0.5, feasible - rng.uniform(0.0, 1.0, size=n), -np.inf)
    fields = dict(
        Q=M @ M.T + 0.3 * np.eye(n),
        c=rng.normal(scale=2.0, size=n),
        G=G,
        h=G @ feasible + rng.uniform(0.0, 0.5, size=m),
        lb=lb,
    )
    if rng.random() < 0.5:
        A = rng.normal(size=(1, n))
        fields.update(A_eq=A, b_eq=A @ feasible)
    return QuadraticProgram(**fields)


def _enumerated_optimum(qp):
    """Minimum objective over all KKT points of all candidate working sets."""
    n = qp.n_vars
    finite = np.flatnonzero(np.isfinite(qp.lb))
    rows = np.vstack([qp.G, -np.eye(n)[finite]])
    limits = np.concatenate([qp.h, -qp.lb[finite]])
    best = np.inf
    for size in range(0, min(n - qp.n_eq, rows.shape[0]) + 1):
        for working in itertools.combinations(range(rows.shape[0]), size):
            A = np.vstack([qp.A_eq, rows[list(working)]])
            b = np.concatenate([qp.b_eq, limits[list(working)]])
            k = A.shape[0]
            K = np.block([[qp.Q, A.T], [A, np.zeros((k, k))]])
            rhs = np.concatenate([-qp.c, b])
            solution = np.linalg.lstsq(K, rhs, rcond=None)[0]
            if np.abs(K @ solution - rhs).max() > 1e-9:
                continue
            x, lam = solution[:n], solution[n + qp.n_eq:]
            if lam.size and lam.min() < -1e-9:
                continue
            if (rows @ x - limits).max(initial=-np.inf) > 1e-9:
                continue
            best = min(best, qp.objective(x))
    return best


def test_active_lower_bound():
    solution = solve_qp(_one_dim_example())
    assert solution.status == QpStatus.optimal
    assert solution.x == pytest.approx([2.0], abs=1e-9)
    assert solution.objective == pytest.approx(1.0, abs=1e-9)
    assert solution.multipliers.lower == pytest.approx([2.0], abs=1e-8)


def test_unconstrained_minimum():
    solution = solve_qp(QuadraticProgram(Q=np.eye(2), c=[-1.0, -2.0]))
    assert solution.is_optimal
    assert solution.x == pytest.approx([1.0, 2.0], abs=1e-9)
    assert solution.ridge == 0.0


def test_box_qps_match_projected_gradient():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        qp = _random_box_qp(rng, int(rng.integers(1, 11)))
        solution = solve_qp(qp)
        assert solution.is_optimal
        assert solution.kkt_residuals.within(1e-8)
        assert solution.objective == pytest.approx(_projected_gradient(qp), abs=1e-6)


def test_general_qps_match_enumeration():
    rng = np.random.default_rng(77)
    for _ in range(60):
        qp = _random_general_qp(rng)
        solution = solve_qp(qp)
        assert solution.is_optimal
        assert solution.objective == pytest.approx(_enumerated_optimum(qp), abs=1e-7)

        residuals = check_kkt(qp, solution.x, solution.multipliers)
        assert residuals.primal_eq <= 1e-8
        assert residuals.primal_ineq <= 1e-8


def test_dropping_a_constraint_never_raises_the_optimum():
    rng = np.random.default_rng(5)
    for _ in range(30):
        qp = _random_general_qp(rng)
        relaxed = qp.model_copy(update={"G": qp.G[:-1], "h": qp.h[:-1]})
        assert solve_qp(relaxed).objective <= solve_qp(qp).objective + 1e-9


def test_solve_is_deterministic():
    qp = _random_general_qp(np.random.default_rng(9))
    assert np.array_equal(solve_qp(qp).x, solve_qp(qp).x)


def test_singular_objective_gets_ridge():
    qp = QuadraticProgram(Q=[[1.0, 1.0], [1.0, 1.0]], c=[-1.0, -1.0])
    solution = solve_qp(qp)
    assert solution.is_optimal
    assert solution.ridge == RIDGE
    assert solution.x == pytest.approx([0.5, 0.5], abs=1e-6)
    assert solution.objective == pytest.approx(-0.5, abs=1e-9)


def test_ridge_center_selects_nearest_optimum():
    qp = QuadraticProgram(Q=[[1.0, 1.0], [1.0, 1.0]], c=[-1.0, -1.0], ridge_center=[2.0, 0.0])
    solution = solve_qp(qp)
    # optimum set is the line x1 + x2 = 1; nearest point to (2, 0) is (1.5, -0.5)
    assert solution.x == pytest.approx([1.5, -0.5], abs=1e-6)


def test_infeasible_bounds_are_reported():
    qp = QuadraticProgram(Q=[[1.0]], c=[0.0], G=[[1.0]], h=[1.0], lb=[2.0])
    solution = solve_qp(qp)
    assert solution.status == QpStatus.infeasible
    assert solution.infeasibility == pytest.approx(1.0, abs=1e-8)


def test_infeasible_equalities_are_reported():
    qp = QuadraticProgram(Q=np.eye(2), c=[0.0, 0.0], A_eq=[[1.0, 1.0], [1.0, 1.0]], b_eq=[1.0, 2.0])
    solution = solve_qp(qp)
    assert solution.status == QpStatus.infeasible
    assert solution.infeasibility > 0.4


def test_iteration_limit():
    qp = QuadraticProgram(Q=np.eye(2), c=[-1.0, -2.0], lb=[0.0, 0.0])
    solution = solve_qp(qp, max_iter=1, x0=[5.0, 5.0])
    assert solution.status == QpStatus.iteration_limit
    assert solve_qp(qp, x0=[5.0, 5.0]).x == pytest.approx([1.0, 2.0], abs=1e-9)


def test_bad_inputs_raise():
    with pytest.raises(ParameterError):
        solve_qp(QuadraticProgram(Q=np.eye(3), c=[0.0, 0.0]))
    with pytest.raises(ParameterError):
        solve_qp(QuadraticProgram(Q=[[1.0, 0.0], [0.5, 1.0]], c=[0.0, 0.0]))
    with pytest.raises(ParameterError):
        solve_qp(QuadraticProgram(Q=[[-1.0]], c=[0.0]))
    with pytest.raises(ParameterError):
        solve_qp(_one_dim_example(), tol=0.0)
    with pytest.raises(ParameterError):
        solve_qp(QuadraticProgram(Q=np.eye(2), c=[0.0, 0.0], G=[[1.0, 0.0]], h=[1.0, 2.0]))


def test_kkt_at_optimum():
    qp = _one_dim_example()
    multipliers = QpMultipliers(eq=[], ineq=[], lower=[2.0])
    assert check_kkt(qp, np.array([2.0]), multipliers).within(1e-9)


def test_kkt_reports_exact_violation():
    residuals = check_kkt(_one_dim_example(), np.array([1.5]), QpMultipliers.zeros(_one_dim_example()))
    assert residuals.primal_ineq == pytest.approx(0.5, abs=1e-15)


@pytest.mark.parametrize("delta", [1e-3, 1e-2])
def test_kkt_stationarity_grows_linearly(delta):
    qp = _one_dim_example()
    multipliers = QpMultipliers(eq=[], ineq=[], lower=[2.0])
    residuals = check_kkt(qp, np.array([2.0 + delta]), multipliers)
    assert residuals.dual == pytest.approx(2.0 * delta, rel=1e-9)


def test_program_json_dump(tmp_path):
    qp = _random_general_qp(np.random.default_rng(3))
    path = tmp_path / "qp.json"
    qp.dump(str(path))
    restored = QuadraticProgram.from_json(path.read_text())
    assert np.array_equal(restored.lb, qp.lb)
    assert solve_qp(restored).objective == pytest.approx(solve_qp(qp).objective, abs=1e-12)
