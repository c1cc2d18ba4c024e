import numpy as np
import pytest

from faultprint import optim
from oracles import lp_vertex_objective, random_bounded_lp


def simple_qp():
    return optim.ConvexProblem(
        P=np.array([[2.0]]),
        q=np.zeros(1),
        A=np.array([[1.0]]),
        l=np.array([1.0]),
        u=np.array([np.inf]),
    )


def l1_equation_lp(r: float) -> optim.ConvexProblem:
    """min |z1| + |z2| s.t. 2 z1 + z2 = r, in epigraph form [z1, z2, t1, t2]."""
    A = np.array(
        [
            [-1.0, 0.0, 1.0, 0.0],
            [1.0, 0.0, 1.0, 0.0],
            [0.0, -1.0, 0.0, 1.0],
            [0.0, 1.0, 0.0, 1.0],
            [2.0, 1.0, 0.0, 0.0],
        ]
    )
    l = np.array([0.0, 0.0, 0.0, 0.0, r])
    u = np.array([np.inf, np.inf, np.inf, np.inf, r])
    return optim.ConvexProblem.linear(np.array([0.0, 0.0, 1.0, 1.0]), A, l, u)


def test_textbook_qp():
    solution = optim.solve(simple_qp())
    assert solution.status is optim.SolveStatus.OPTIMAL
    assert solution.z[0] == pytest.approx(1.0, abs=1e-8)
    assert solution.objective == pytest.approx(1.0, abs=1e-8)


def test_l1_solution_concentrates_on_largest_coefficient():
    for r in (4.0, -3.0, 0.5):
        solution = optim.solve(l1_equation_lp(r))
        assert solution.status is optim.SolveStatus.OPTIMAL
        # minimal L1 solution of one equation uses only the max-|coefficient| coordinate
        assert solution.z[0] == pytest.approx(r / 2.0, abs=1e-6)
        assert solution.z[1] == pytest.approx(0.0, abs=1e-6)
        assert solution.objective == pytest.approx(abs(r) / 2.0, abs=1e-6)


def test_random_lps_match_vertex_enumeration_oracle():
    rng = np.random.default_rng(2024)
    for _ in range(40):
        q, A, l, u = random_bounded_lp(rng)
        problem = optim.ConvexProblem.linear(q, A, l, u)
        solution = optim.solve(problem)
        assert solution.status is optim.SolveStatus.OPTIMAL
        oracle = lp_vertex_objective(q, A, l, u)
        assert oracle is not None
        assert solution.objective == pytest.approx(oracle, abs=1e-5)


def test_box_qp_matches_analytic_clip():
    rng = np.random.default_rng(7)
    for _ in range(40):
        n = int(rng.integers(2, 9))
        diag = rng.uniform(0.4, 4.0, n)
        q = rng.normal(scale=2.0, size=n)
        lo = rng.uniform(-2.0, 0.0, n)
        hi = rng.uniform(0.1, 2.0, n)
        problem = optim.ConvexProblem(P=np.diag(diag), q=q, A=np.eye(n), l=lo, u=hi)
        solution = optim.solve(problem)
        assert solution.status is optim.SolveStatus.OPTIMAL
        assert np.abs(solution.z - np.clip(-q / diag, lo, hi)).max() < 1e-6


def test_kkt_residuals_on_hand_built_optimum():
    problem = simple_qp()
    kkt = optim.kkt_residuals(problem, np.array([1.0]), np.array([-2.0]))
    assert max(kkt) <= 1e-12


def test_kkt_residuals_flag_perturbed_solution():
    problem = simple_qp()
    kkt = optim.kkt_residuals(problem, np.array([1.1]), np.array([-2.0]))
    assert max(kkt.dual, kkt.primal, kkt.complementarity) > 1e-3


def test_kkt_residuals_dimension_check():
    with pytest.raises(ValueError):
        optim.kkt_residuals(simple_qp(), np.zeros(2), np.zeros(1))


def test_optimal_status_implies_certified_kkt():
    rng = np.random.default_rng(12)
    for _ in range(30):
        q, A, l, u = random_bounded_lp(rng)
        solution = optim.solve(optim.ConvexProblem.linear(q, A, l, u))
        assert solution.status is optim.SolveStatus.OPTIMAL
        kkt = optim.kkt_residuals(
            optim.ConvexProblem.linear(q, A, l, u), solution.z, solution.y
        )
        assert kkt.primal <= 10.0 * solution.kkt_tol.primal
        assert kkt.dual <= 10.0 * solution.kkt_tol.dual
        assert kkt.complementarity <= 10.0 * solution.kkt_tol.complementarity


def test_removing_a_constraint_never_increases_optimum():
    rng = np.random.default_rng(21)
    for _ in range(30):
        n = int(rng.integers(2, 6))
        m = int(rng.integers(2, 6))
        root = rng.normal(size=(n, n))
        P = root @ root.T + 0.5 * np.eye(n)
        q = rng.normal(size=n)
        A = rng.normal(size=(m, n))
        x0 = rng.normal(size=n)
        l = A @ x0 - rng.uniform(0.1, 1.0, m)
        u = A @ x0 + rng.uniform(0.1, 1.0, m)
        full = optim.solve(optim.ConvexProblem(P=P, q=q, A=A, l=l, u=u))
        drop = int(rng.integers(m))
        keep = [i for i in range(m) if i != drop]
        reduced = optim.solve(
            optim.ConvexProblem(P=P, q=q, A=A[keep], l=l[keep], u=u[keep])
        )
        assert full.status is optim.SolveStatus.OPTIMAL
        assert reduced.status is optim.SolveStatus.OPTIMAL
        assert reduced.objective <= full.objective + 1e-6


def test_solve_is_deterministic():
    rng = np.random.default_rng(5)
    q, A, l, u = random_bounded_lp(rng)
    problem = optim.ConvexProblem.linear(q, A, l, u)
    a = optim.solve(problem)
    b = optim.solve(problem)
    assert np.array_equal(a.z, b.z)
    assert np.array_equal(a.y, b.y)
    assert a.iterations == b.iterations
    assert a.objective == b.objective


def test_infeasible_problem_is_reported():
    problem = optim.ConvexProblem.linear(
        np.array([0.0]),
        np.array([[1.0], [1.0]]),
        l=np.array([-np.inf, 1.0]),
        u=np.array([-1.0, np.inf]),
    )
    solution = optim.solve(problem)
    assert solution.status is optim.SolveStatus.INFEASIBLE


def test_max_iters_is_not_silent():
    # one iteration cannot converge from a cold start on a shifted problem
    problem = optim.ConvexProblem.linear(
        np.array([1.0, 1.0]),
        np.vstack([np.eye(2), np.array([[1.0, 1.0]])]),
        l=np.array([1.0, 1.0, 2.5]),
        u=np.array([4.0, 4.0, 6.0]),
    )
    solution = optim.solve(problem, max_iters=1)
    assert solution.status is optim.SolveStatus.MAX_ITERS


def test_problem_validation():
    with pytest.raises(ValueError):
        optim.ConvexProblem(
            P=np.array([[1.0, 2.0], [0.0, 1.0]]),
            q=np.zeros(2),
            A=np.eye(2),
            l=np.zeros(2),
            u=np.ones(2),
        )
    with pytest.raises(ValueError):
        optim.ConvexProblem(
            P=np.array([[-1.0]]), q=np.zeros(1), A=np.eye(1), l=np.zeros(1), u=np.ones(1)
        )
    with pytest.raises(ValueError):
        optim.ConvexProblem.linear(
            np.zeros(1), np.eye(1), l=np.array([2.0]), u=np.array([1.0])
        )


def test_dump_and_load_round_trip(tmp_path):
    problem = l1_equation_lp(3.0)
    path = tmp_path / "problem.txt"
    optim.dump_problem(problem, path)
    loaded = optim.load_problem(path)
    assert np.array_equal(loaded.P, problem.P)
    assert np.array_equal(loaded.q, problem.q)
    assert np.array_equal(loaded.A, problem.A)
    assert np.array_equal(loaded.l, problem.l)
    assert np.array_equal(loaded.u, problem.u)


def test_audit_collects_solve_records():
    with optim.audit_solves() as records:
        optim.solve(simple_qp())
        optim.solve(l1_equation_lp(1.0))
    assert len(records) == 2
    assert all(rec.status is optim.SolveStatus.OPTIMAL for rec in records)
