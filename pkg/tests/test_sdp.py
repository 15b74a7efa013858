"""Tests for the interior-point SDP solver."""
import numpy as np
import pytest

from solver.sdp import SdpBuilder, SdpStatus, solve, verify
from utils.errors import ReasonCodes, SolverError, VerificationError


def _lambda_max_problem(c):
    builder = SdpBuilder()
    block = builder.add_block(c.shape[0], objective=c)
    builder.add_row({block: np.eye(c.shape[0])}, 1.0)
    return builder.build()


def test_lambda_max():
    """max tr(CX) over density matrices is the top eigenvalue."""
    p = _lambda_max_problem(np.diag([3.0, 1.0]))

    sol = solve(p)

    assert sol.status is SdpStatus.OPTIMAL
    assert sol.value == pytest.approx(3.0, abs=1e-7)
    assert sol.y[0] == pytest.approx(3.0, abs=1e-6)


def test_complex_hermitian_objective():
    """Imaginary off-diagonal objectives are handled: λ_max(σ_y) = 1."""
    p = _lambda_max_problem(np.array([[0.0, -1j], [1j, 0.0]]))

    sol = solve(p)

    assert sol.value == pytest.approx(1.0, abs=1e-7)
    x = sol.x[0]
    assert np.real(np.trace(x @ np.array([[0.0, -1j], [1j, 0.0]]))) == pytest.approx(1.0, abs=1e-6)


def test_linear_program_cone():
    """Scalar blocks behave as a nonnegative orthant."""
    builder = SdpBuilder()
    a = builder.add_scalar(1.0)
    b = builder.add_scalar(2.0)
    builder.add_row({a: 1.0, b: 1.0}, 1.0)

    sol = solve(builder.build())

    assert sol.value == pytest.approx(2.0, abs=1e-7)
    assert np.real(sol.x[b][0, 0]) == pytest.approx(1.0, abs=1e-6)


def test_fully_constrained_block():
    """With every entry fixed the only feasible point is returned."""
    target = np.array([[2.0, 0.5], [0.5, 1.0]])
    builder = SdpBuilder()
    block = builder.add_block(2, objective=np.eye(2))
    builder.add_row({block: [[1.0, 0.0], [0.0, 0.0]]}, target[0, 0])
    builder.add_row({block: [[0.0, 0.0], [0.0, 1.0]]}, target[1, 1])
    builder.add_row({block: [[0.0, 0.5], [0.5, 0.0]]}, target[0, 1])
    builder.add_row({block: [[0.0, -0.5j], [0.5j, 0.0]]}, 0.0)

    sol = solve(builder.build())

    assert sol.optimal
    assert np.allclose(sol.x[block], target, atol=1e-6)


def test_verify_accepts_solution():
    """An optimal solution passes the independent residual check."""
    p = _lambda_max_problem(np.diag([3.0, 1.0, -2.0]))
    sol = solve(p)

    check = verify(p, sol)

    assert check.ok
    assert check.weak_duality
    assert check.dual_objective >= check.primal_objective - 1e-7


def test_verify_rejects_negated_primal():
    """Flipping the sign of X breaks feasibility and positivity."""
    p = _lambda_max_problem(np.diag([3.0, 1.0]))
    sol = solve(p)
    sol.x = [-x for x in sol.x]

    check = verify(p, sol)

    assert not check.ok
    assert check.primal_psd_violation > 0.5


def test_require_optimal_checks_duality():
    """A dual vector that undercuts the primal value is refused."""
    sol = solve(_lambda_max_problem(np.diag([3.0, 1.0])))
    sol.y = sol.y - 10.0

    with pytest.raises(VerificationError) as exc_info:
        sol.require_optimal("test SDP")

    assert exc_info.value.reason == ReasonCodes.VERIFICATION_FAILED


def test_require_optimal_accepts_certified_solution():
    """An untouched optimal solution passes the duality check."""
    sol = solve(_lambda_max_problem(np.diag([3.0, 1.0])))

    assert sol.require_optimal("test SDP") is sol


def test_objective_scaling():
    """Scaling the objective scales the optimum."""
    c = np.array([[1.0, 0.3], [0.3, -0.5]])

    base = solve(_lambda_max_problem(c)).value
    scaled = solve(_lambda_max_problem(10 * c)).value

    assert scaled == pytest.approx(10 * base, rel=1e-7)


def test_deterministic():
    """Two solves of the same problem agree exactly."""
    p = _lambda_max_problem(np.diag([0.2, 0.7, 0.1]))

    first, second = solve(p), solve(p)

    assert first.iterations == second.iterations
    assert np.array_equal(first.y, second.y)


def test_dependent_row_dropped():
    """A repeated consistent row is removed and gets a zero multiplier."""
    builder = SdpBuilder()
    block = builder.add_block(2, objective=np.diag([3.0, 1.0]))
    builder.add_row({block: np.eye(2)}, 1.0)
    builder.add_row({block: 2 * np.eye(2)}, 2.0)

    sol = solve(builder.build())

    assert sol.optimal
    assert len(sol.dropped_rows) == 1
    assert sol.y[sol.dropped_rows[0]] == 0.0
    assert sol.value == pytest.approx(3.0, abs=1e-7)


def test_inconsistent_rows_degenerate():
    """Contradictory dependent rows are reported as degenerate."""
    builder = SdpBuilder()
    block = builder.add_block(2, objective=np.eye(2))
    builder.add_row({block: np.eye(2)}, 1.0)
    builder.add_row({block: np.eye(2)}, 2.0)

    sol = solve(builder.build())

    assert sol.status is SdpStatus.DEGENERATE
    with pytest.raises(SolverError) as exc_info:
        sol.require_optimal("test SDP")
    assert exc_info.value.reason == ReasonCodes.SOLVER_DEGENERATE


def test_iteration_cap_reported():
    """Stopping early yields MAX_ITERATIONS and require_optimal raises."""
    p = _lambda_max_problem(np.diag([3.0, 1.0]))

    sol = solve(p, max_iter=1)

    assert sol.status is SdpStatus.MAX_ITERATIONS
    with pytest.raises(SolverError) as exc_info:
        sol.require_optimal()
    assert exc_info.value.reason == ReasonCodes.SOLVER_MAX_ITERATIONS


def test_matches_cvxpy():
    """Cross-check a mixed SDP/LP problem against cvxpy."""
    cp = pytest.importorskip("cvxpy")
    c = np.array([[1.0, 0.5 - 0.2j], [0.5 + 0.2j, -0.3]])
    builder = SdpBuilder()
    block = builder.add_block(2, objective=c)
    s = builder.add_scalar(0.4)
    builder.add_row({block: np.eye(2), s: 1.0}, 1.0)
    builder.add_row({block: np.diag([1.0, 0.0])}, 0.3)

    ours = solve(builder.build()).value

    x = cp.Variable((2, 2), hermitian=True)
    t = cp.Variable(nonneg=True)
    problem = cp.Problem(
        cp.Maximize(cp.real(cp.trace(c @ x)) + 0.4 * t),
        [x >> 0, cp.real(cp.trace(x)) + t == 1, cp.real(x[0, 0]) == 0.3],
    )
    problem.solve()
    assert ours == pytest.approx(problem.value, abs=1e-4)
