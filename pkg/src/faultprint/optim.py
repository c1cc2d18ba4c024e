"""Dense operator-splitting solver for QPs and LPs in two-sided form.

Problems are ``minimize 0.5 z'Pz + q'z subject to l <= Az <= u`` with P
symmetric positive semidefinite (P = 0 gives an LP).  One alternating-
direction iteration with over-relaxation covers both cases; converged
solutions are polished on the active set and certified by independently
recomputed KKT residuals before they may be reported as optimal.

Problem sizes here are small (tens of variables), so all linear algebra is
dense and each solver instance is single-threaded; run solves concurrently
for throughput.
"""

from __future__ import annotations

import contextlib
import enum
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.linalg import cho_factor, cho_solve, lu_factor, lu_solve, qr

DEFAULT_TOL_ABS = 1e-7
DEFAULT_TOL_REL = 1e-7
DEFAULT_MAX_ITERS = 20_000

_SIGMA = 1e-6  # x-step regularization
_ALPHA = 1.6  # over-relaxation
_RHO_INITIAL = 0.1
_RHO_MIN, _RHO_MAX = 1e-6, 1e6
_RHO_EQUALITY_BOOST = 1e3
_EQUALITY_GAP = 1e-9
_CHECK_INTERVAL = 25
_ADAPT_INTERVAL = 100  # doubles after every update so iterates can settle
_ADAPT_TRIGGER = 5.0
_INFEAS_TOL = 1e-7
_POLISH_REG = 1e-6
_POLISH_REFINE_STEPS = 3
_EARLY_POLISH_WINDOW = 1e3  # try polishing within 3 orders of the target
_EARLY_POLISH_INTERVAL = 100


class SolveStatus(enum.Enum):
    OPTIMAL = "optimal"
    MAX_ITERS = "max_iters"
    INFEASIBLE = "infeasible"


class KktResiduals(NamedTuple):
    primal: float
    dual: float
    complementarity: float


class KktTolerances(NamedTuple):
    primal: float
    dual: float
    complementarity: float


@dataclass(frozen=True)
class ConvexProblem:
    """Standard-form problem data; validated once at construction."""

    P: np.ndarray
    q: np.ndarray
    A: np.ndarray
    l: np.ndarray
    u: np.ndarray

    def __post_init__(self) -> None:
        P = np.ascontiguousarray(self.P, dtype=float)
        q = np.ascontiguousarray(self.q, dtype=float)
        A = np.ascontiguousarray(self.A, dtype=float)
        l = np.ascontiguousarray(self.l, dtype=float)
        u = np.ascontiguousarray(self.u, dtype=float)
        n = q.shape[0]
        if P.shape != (n, n):
            raise ValueError(f"P must be {n}x{n}, got {P.shape}")
        if A.ndim != 2 or A.shape[1] != n:
            raise ValueError(f"A must have {n} columns, got {A.shape}")
        m = A.shape[0]
        if l.shape != (m,) or u.shape != (m,):
            raise ValueError("l and u must match the constraint row count")
        if np.any(l > u):
            raise ValueError("constraint bounds require l <= u elementwise")
        if np.any(np.isposinf(l)) or np.any(np.isneginf(u)):
            raise ValueError("l must be < +inf and u > -inf")
        if not np.isfinite(P).all() or not np.isfinite(q).all() or not np.isfinite(A).all():
            raise ValueError("P, q, A must be finite")
        if P.any():
            if not np.allclose(P, P.T, atol=1e-10):
                raise ValueError("P must be symmetric")
            scale = max(1.0, float(np.abs(P).max()))
            if np.linalg.eigvalsh(P).min() < -1e-9 * scale:
                raise ValueError("P must be positive semidefinite")
        for name, arr in (("P", P), ("q", q), ("A", A), ("l", l), ("u", u)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @staticmethod
    def linear(q: np.ndarray, A: np.ndarray, l: np.ndarray, u: np.ndarray) -> "ConvexProblem":
        q = np.asarray(q, dtype=float)
        return ConvexProblem(P=np.zeros((q.shape[0], q.shape[0])), q=q, A=A, l=l, u=u)

    @property
    def n_vars(self) -> int:
        return self.q.shape[0]

    @property
    def n_constraints(self) -> int:
        return self.A.shape[0]

    def objective(self, z: np.ndarray) -> float:
        return float(0.5 * z @ self.P @ z + self.q @ z)


@dataclass(frozen=True)
class Solution:
    z: np.ndarray
    y: np.ndarray
    objective: float
    status: SolveStatus
    iterations: int
    kkt: KktResiduals
    kkt_tol: KktTolerances


# Optional per-process sinks receiving a record for every completed solve.
_audit_sinks: list[list] = []


class SolveRecord(NamedTuple):
    status: SolveStatus
    iterations: int
    objective: float
    kkt: KktResiduals
    kkt_tol: KktTolerances


@contextlib.contextmanager
def audit_solves():
    """Collect a :class:`SolveRecord` for every solve inside the block."""
    records: list[SolveRecord] = []
    _audit_sinks.append(records)
    try:
        yield records
    finally:
        _audit_sinks.remove(records)


def kkt_residuals(problem: ConvexProblem, z, y: np.ndarray | None = None) -> KktResiduals:
    """Recompute KKT residual norms from scratch, independent of the solver.

    Accepts either a Solution or an explicit primal/dual pair.  Dual
    convention: y_i >= 0 may push only on the upper bound of row i and
    y_i <= 0 only on the lower bound; stationarity reads Pz + q + A'y = 0.
    """
    if y is None:
        z, y = z.z, z.y
    z = np.asarray(z, dtype=float)
    y = np.asarray(y, dtype=float)
    if z.shape != (problem.n_vars,) or y.shape != (problem.n_constraints,):
        raise ValueError("solution dimensions do not match the problem")
    az = problem.A @ z
    below = np.clip(problem.l - az, 0.0, None)
    above = np.clip(az - problem.u, 0.0, None)
    primal = float(np.max(below + above, initial=0.0))

    dual = float(np.abs(problem.P @ z + problem.q + problem.A.T @ y).max(initial=0.0))

    y_up = np.clip(y, 0.0, None)
    y_lo = np.clip(-y, 0.0, None)
    # On an infinite bound any push from the dual is itself the violation.
    comp_up = y_up.copy()
    finite_u = np.isfinite(problem.u)
    comp_up[finite_u] *= np.abs(problem.u - az)[finite_u]
    comp_lo = y_lo.copy()
    finite_l = np.isfinite(problem.l)
    comp_lo[finite_l] *= np.abs(az - problem.l)[finite_l]
    comp = float(max(np.max(comp_up, initial=0.0), np.max(comp_lo, initial=0.0)))
    return KktResiduals(primal=primal, dual=dual, complementarity=comp)


def kkt_tolerances(
    problem: ConvexProblem,
    z: np.ndarray,
    y: np.ndarray,
    tol_abs: float,
    tol_rel: float,
) -> KktTolerances:
    """Residual tolerances scaled the way the convergence test scales them."""
    az = problem.A @ z
    eps_pri = tol_abs + tol_rel * max(
        np.abs(az).max(initial=0.0), np.abs(z).max(initial=0.0)
    )
    eps_dua = tol_abs + tol_rel * max(
        np.abs(problem.P @ z).max(initial=0.0),
        np.abs(problem.A.T @ y).max(initial=0.0),
        np.abs(problem.q).max(initial=0.0),
    )
    eps_comp = max(1.0, np.abs(y).max(initial=0.0)) * eps_pri
    return KktTolerances(primal=eps_pri, dual=eps_dua, complementarity=eps_comp)


def _rho_vector(problem: ConvexProblem, base: float) -> np.ndarray:
    rho = np.full(problem.n_constraints, base)
    equality = (problem.u - problem.l) <= _EQUALITY_GAP
    rho[equality] = np.clip(base * _RHO_EQUALITY_BOOST, _RHO_MIN, _RHO_MAX)
    loose = np.isneginf(problem.l) & np.isposinf(problem.u)
    rho[loose] = _RHO_MIN
    return rho


def _factorize_scaled(P_s: np.ndarray, A: np.ndarray, rho: np.ndarray):
    K = P_s + _SIGMA * np.eye(P_s.shape[0]) + (A.T * rho) @ A
    return cho_factor(K, lower=True, check_finite=False)


def _primal_infeasibility_certificate(problem: ConvexProblem, dy: np.ndarray) -> bool:
    norm = np.abs(dy).max(initial=0.0)
    if norm <= 1e-12:
        return False
    v = dy / norm
    if np.abs(problem.A.T @ v).max(initial=0.0) > _INFEAS_TOL:
        return False
    v_up = np.clip(v, 0.0, None)
    v_lo = np.clip(v, None, 0.0)
    if np.any((v_up > _INFEAS_TOL) & np.isposinf(problem.u)):
        return False
    if np.any((v_lo < -_INFEAS_TOL) & np.isneginf(problem.l)):
        return False
    gap = float(
        np.sum(np.where(np.isfinite(problem.u), problem.u, 0.0) * v_up)
        + np.sum(np.where(np.isfinite(problem.l), problem.l, 0.0) * v_lo)
    )
    return gap < -_INFEAS_TOL


def _dual_infeasibility_certificate_scaled(
    problem: ConvexProblem, P_s: np.ndarray, q_s: np.ndarray, dx: np.ndarray
) -> bool:
    norm = np.abs(dx).max(initial=0.0)
    if norm <= 1e-12:
        return False
    v = dx / norm
    if q_s @ v > -_INFEAS_TOL:
        return False
    if np.abs(P_s @ v).max(initial=0.0) > _INFEAS_TOL:
        return False
    av = problem.A @ v
    if np.any((av > _INFEAS_TOL) & np.isfinite(problem.u)):
        return False
    if np.any((av < -_INFEAS_TOL) & np.isfinite(problem.l)):
        return False
    return True


def _active_set_solve(
    problem: ConvexProblem,
    y: np.ndarray,
    lower_active: np.ndarray,
    upper_active: np.ndarray,
    preferred: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray] | None:
    """Equality-solve with the given rows pinned to their bounds.

    Degenerate guesses can pin more (possibly contradictory) rows than there
    are variables; a pivoted QR keeps a linearly independent subset, with
    pivot priority given by dual magnitude so noise-level duals are the ones
    dropped.  ``preferred`` rows (from a repair round) outrank everything.
    """
    n = problem.n_vars
    active = np.concatenate([lower_active, upper_active])
    is_lower = np.concatenate(
        [np.ones(lower_active.shape[0], bool), np.zeros(upper_active.shape[0], bool)]
    )
    a_red = problem.A[active]
    bounds = np.concatenate([problem.l[lower_active], problem.u[upper_active]])

    if active.shape[0]:
        strength = np.abs(y[active])
        weights = np.clip(strength / max(strength.max(initial=0.0), 1e-300), 1e-6, None)
        if preferred is not None and preferred.size:
            weights[np.isin(active, preferred)] = 1e6
        _, r_diag, pivots = qr(a_red.T * weights, mode="economic", pivoting=True)
        diag = np.abs(np.diag(r_diag))
        cutoff = diag.max(initial=0.0) * 1e-12
        rank = int((diag > cutoff).sum())
        keep = np.sort(pivots[:rank])
        active, is_lower = active[keep], is_lower[keep]
        a_red, bounds = a_red[keep], bounds[keep]
    k = active.shape[0]

    size = n + k
    kkt = np.zeros((size, size))
    kkt[:n, :n] = problem.P + _POLISH_REG * np.eye(n)
    if k:
        kkt[:n, n:] = a_red.T
        kkt[n:, :n] = a_red
        kkt[n:, n:] = -_POLISH_REG * np.eye(k)
    rhs = np.concatenate([-problem.q, bounds])
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")  # singular reduced systems are handled
            factor = lu_factor(kkt, check_finite=False)
            sol = lu_solve(factor, rhs, check_finite=False)
    except (ValueError, np.linalg.LinAlgError):
        return None
    if not np.isfinite(sol).all():
        return None

    # Iterative refinement against the unregularized KKT system.
    kkt_exact = kkt.copy()
    kkt_exact[:n, :n] -= _POLISH_REG * np.eye(n)
    if k:
        kkt_exact[n:, n:] += _POLISH_REG * np.eye(k)
    for _ in range(_POLISH_REFINE_STEPS):
        residual = rhs - kkt_exact @ sol
        sol = sol + lu_solve(factor, residual, check_finite=False)

    if not np.isfinite(sol).all():
        return None
    x_pol = sol[:n]
    y_pol = np.zeros(problem.n_constraints)
    y_pol[active] = sol[n:]
    # Enforce the sign convention; wrong-signed duals mean a bad active set.
    y_pol[active[is_lower]] = np.minimum(y_pol[active[is_lower]], 0.0)
    y_pol[active[~is_lower]] = np.maximum(y_pol[active[~is_lower]], 0.0)
    return x_pol, y_pol


def _polish(
    problem: ConvexProblem, x: np.ndarray, y: np.ndarray
) -> tuple[np.ndarray, np.ndarray] | None:
    """Re-solve on the active set guessed from dual signs; None on failure.

    A wrong guess shows up as bound violations at the re-solved point; up to
    two repair rounds add the violated rows and try again.  The caller still
    accepts the result only if independent residuals improve.
    """
    # A dual pushing on an infinite bound is iterate noise, never active.
    lower = (y < 0) & np.isfinite(problem.l)
    upper = (y > 0) & np.isfinite(problem.u)
    best = None
    best_score = np.inf
    preferred = np.empty(0, dtype=int)
    for _ in range(3):
        result = _active_set_solve(
            problem, y, np.flatnonzero(lower), np.flatnonzero(upper), preferred
        )
        if result is None:
            break
        kkt = kkt_residuals(problem, *result)
        score = max(kkt)
        if score < best_score:
            best, best_score = result, score
        az = problem.A @ result[0]
        scale = 1.0 + np.abs(az).max(initial=0.0)
        below = problem.l - az > 1e-9 * scale
        above = az - problem.u > 1e-9 * scale
        violated = np.flatnonzero(below | above)
        if not violated.size or np.isin(violated, preferred).all():
            break
        lower, upper = lower | below, upper | above
        preferred = np.union1d(preferred, violated)
    return best


def solve(
    problem: ConvexProblem,
    tol_abs: float = DEFAULT_TOL_ABS,
    tol_rel: float = DEFAULT_TOL_REL,
    max_iters: int = DEFAULT_MAX_ITERS,
) -> Solution:
    """Solve the problem; the result is a pure function of its arguments.

    Optimality is declared only when independently recomputed KKT residuals
    pass within 10x the scaled convergence tolerances; otherwise the status
    reports iteration exhaustion.  A divergence certificate (infeasible or
    unbounded problem) is reported as infeasible, never silently.
    """
    if tol_abs <= 0 or tol_rel < 0:
        raise ValueError("tolerances must be positive")
    n, m = problem.n_vars, problem.n_constraints
    A = problem.A
    # Normalize the objective so large penalty weights cannot unbalance the
    # iteration; primal iterates are unaffected, duals scale by 1/cost.
    cost = max(
        1.0,
        float(np.abs(problem.q).max(initial=0.0)),
        float(np.abs(problem.P).max(initial=0.0)),
    )
    P_s = problem.P / cost
    q_s = problem.q / cost
    base_rho = _RHO_INITIAL
    rho = _rho_vector(problem, base_rho)
    factor = _factorize_scaled(P_s, A, rho)

    x = np.zeros(n)
    z = np.zeros(m)
    y = np.zeros(m)
    dx = np.zeros(n)
    dy = np.zeros(m)

    status = SolveStatus.MAX_ITERS
    iterations = max_iters
    infeasible_streak = 0
    adapt_interval = _ADAPT_INTERVAL
    adapt_due = adapt_interval
    polish_due = 0
    for it in range(1, max_iters + 1):
        rhs = _SIGMA * x - q_s + A.T @ (rho * z - y)
        x_tilde = cho_solve(factor, rhs, check_finite=False)
        z_tilde = A @ x_tilde

        x_new = _ALPHA * x_tilde + (1.0 - _ALPHA) * x
        w = _ALPHA * z_tilde + (1.0 - _ALPHA) * z
        v = w + y / rho
        z_new = np.clip(v, problem.l, problem.u)
        y_new = y + rho * (w - z_new)

        dx = x_new - x
        dy = y_new - y
        x, z, y = x_new, z_new, y_new

        if it % _CHECK_INTERVAL == 0 or it == max_iters:
            ax = A @ x
            pri = np.abs(ax - z).max(initial=0.0)
            eps_pri = tol_abs + tol_rel * max(
                np.abs(ax).max(initial=0.0), np.abs(z).max(initial=0.0)
            )
            px = P_s @ x
            aty = A.T @ y
            dua = np.abs(px + q_s + aty).max(initial=0.0)
            eps_dua = tol_abs + tol_rel * max(
                np.abs(px).max(initial=0.0),
                np.abs(aty).max(initial=0.0),
                np.abs(q_s).max(initial=0.0),
            )
            if pri <= eps_pri and dua <= eps_dua:
                status = SolveStatus.OPTIMAL
                iterations = it
                break
            # Degenerate problems crawl near the optimum; an active-set
            # re-solve from a close-enough iterate finishes them exactly.
            pri_scale = max(
                np.abs(ax).max(initial=0.0), np.abs(z).max(initial=0.0), 1e-12
            )
            dua_scale = max(
                np.abs(px).max(initial=0.0),
                np.abs(aty).max(initial=0.0),
                np.abs(q_s).max(initial=0.0),
                1e-12,
            )
            if (
                it >= polish_due
                and pri <= max(_EARLY_POLISH_WINDOW * eps_pri, 1e-3 * pri_scale)
                and dua <= max(_EARLY_POLISH_WINDOW * eps_dua, 1e-3 * dua_scale)
            ):
                polish_due = it + _EARLY_POLISH_INTERVAL
                early = _polish(problem, x, y * cost)
                if early is not None:
                    kkt_early = kkt_residuals(problem, *early)
                    tol_early = kkt_tolerances(problem, *early, tol_abs, tol_rel)
                    if (
                        kkt_early.primal <= tol_early.primal
                        and kkt_early.dual <= tol_early.dual
                        and kkt_early.complementarity <= tol_early.complementarity
                    ):
                        solution = Solution(
                            z=early[0],
                            y=early[1],
                            objective=problem.objective(early[0]),
                            status=SolveStatus.OPTIMAL,
                            iterations=it,
                            kkt=kkt_early,
                            kkt_tol=tol_early,
                        )
                        _record(solution)
                        return solution
            # A transient noise direction can mimic a divergence certificate;
            # only two consecutive confirming checks count.
            if _primal_infeasibility_certificate(problem, dy) or (
                _dual_infeasibility_certificate_scaled(problem, P_s, q_s, dx)
            ):
                infeasible_streak += 1
                if infeasible_streak >= 2:
                    status = SolveStatus.INFEASIBLE
                    iterations = it
                    break
            else:
                infeasible_streak = 0
            if it >= adapt_due:
                adapt_due = it + adapt_interval
                # residual balancing on iterate-scaled norms
                ratio = float(np.sqrt((pri / pri_scale) / max(dua / dua_scale, 1e-30)))
                if ratio > _ADAPT_TRIGGER or ratio < 1.0 / _ADAPT_TRIGGER:
                    ratio = float(np.clip(ratio, 0.01, 100.0))
                    base_rho = float(np.clip(base_rho * ratio, _RHO_MIN, _RHO_MAX))
                    rho = _rho_vector(problem, base_rho)
                    factor = _factorize_scaled(P_s, A, rho)
                    adapt_interval *= 2
                    adapt_due = it + adapt_interval

    y = y * cost  # undo objective normalization on the duals

    if status is SolveStatus.INFEASIBLE:
        kkt = kkt_residuals(problem, x, y)
        tol = kkt_tolerances(problem, x, y, tol_abs, tol_rel)
        solution = Solution(
            z=x, y=y, objective=np.inf, status=status, iterations=iterations,
            kkt=kkt, kkt_tol=tol,
        )
        _record(solution)
        return solution

    if status is SolveStatus.OPTIMAL:
        kkt = kkt_residuals(problem, x, y)
        polished = _polish(problem, x, y)
        if polished is not None:
            kkt_pol = kkt_residuals(problem, *polished)
            if max(kkt_pol) <= max(max(kkt), 1e-30):
                x, y = polished
                kkt = kkt_pol
        tol = kkt_tolerances(problem, x, y, tol_abs, tol_rel)
        certified = (
            kkt.primal <= 10.0 * tol.primal
            and kkt.dual <= 10.0 * tol.dual
            and kkt.complementarity <= 10.0 * tol.complementarity
        )
        if not certified:
            status = SolveStatus.MAX_ITERS
    else:
        kkt = kkt_residuals(problem, x, y)
        tol = kkt_tolerances(problem, x, y, tol_abs, tol_rel)

    solution = Solution(
        z=x,
        y=y,
        objective=problem.objective(x),
        status=status,
        iterations=iterations,
        kkt=kkt,
        kkt_tol=tol,
    )
    _record(solution)
    return solution


def _record(solution: Solution) -> None:
    if _audit_sinks:
        record = SolveRecord(
            status=solution.status,
            iterations=solution.iterations,
            objective=solution.objective,
            kkt=solution.kkt,
            kkt_tol=solution.kkt_tol,
        )
        for sink in _audit_sinks:
            sink.append(record)


def dump_problem(problem: ConvexProblem, path) -> None:
    """Plain-text dump (dimensions, then P, q, A, l, u rows) for debugging."""
    def fmt(row) -> str:
        return " ".join(repr(float(v)) for v in np.atleast_1d(row))

    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{problem.n_vars} {problem.n_constraints}\n")
        for row in problem.P:
            fh.write(fmt(row) + "\n")
        fh.write(fmt(problem.q) + "\n")
        for row in problem.A:
            fh.write(fmt(row) + "\n")
        fh.write(fmt(problem.l) + "\n")
        fh.write(fmt(problem.u) + "\n")


def load_problem(path) -> ConvexProblem:
    """Read a problem written by :func:`dump_problem`."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [line.strip() for line in fh if line.strip()]
    if not lines:
        raise ValueError(f"{path}: empty problem dump")
    try:
        n, m = (int(tok) for tok in lines[0].split())
        rows = [np.array([float(tok) for tok in line.split()]) for line in lines[1:]]
    except ValueError:
        raise ValueError(f"{path}: malformed problem dump") from None
    expected = n + 1 + m + 2
    if len(rows) != expected:
        raise ValueError(f"{path}: expected {expected} data rows, found {len(rows)}")
    P = np.vstack(rows[:n]) if n else np.zeros((0, 0))
    q = rows[n]
    A = np.vstack(rows[n + 1 : n + 1 + m]) if m else np.zeros((0, n))
    l, u = rows[n + 1 + m], rows[n + 2 + m]
    return ConvexProblem(P=P, q=q, A=A, l=l, u=u)
