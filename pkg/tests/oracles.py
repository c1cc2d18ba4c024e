"""Independent oracles the tests check the library against.

These deliberately use different algorithms from the code under test:
brute-force vertex enumeration instead of operator splitting, normal
equations instead of orthogonal factorizations.
"""

from __future__ import annotations

import itertools

import numpy as np


def lp_vertex_objective(q, A, l, u, feas_tol=1e-8):
    """Optimal value of min q'x s.t. l <= Ax <= u by enumerating vertices.

    Requires a bounded feasible region (every vertex is the intersection of
    n one-sided constraints).  Returns None when no feasible vertex exists.
    """
    q = np.asarray(q, dtype=float)
    A = np.asarray(A, dtype=float)
    n = A.shape[1]
    G_rows, h_vals = [], []
    for i in range(A.shape[0]):
        if np.isfinite(u[i]):
            G_rows.append(A[i])
            h_vals.append(u[i])
        if np.isfinite(l[i]):
            G_rows.append(-A[i])
            h_vals.append(-l[i])
    G = np.asarray(G_rows)
    h = np.asarray(h_vals)

    best = None
    scale = 1.0 + np.abs(h).max(initial=0.0)
    for subset in itertools.combinations(range(G.shape[0]), n):
        Gs = G[list(subset)]
        hs = h[list(subset)]
        if abs(np.linalg.det(Gs)) < 1e-10:
            continue
        x = np.linalg.solve(Gs, hs)
        if np.all(G @ x <= h + feas_tol * scale):
            value = float(q @ x)
            if best is None or value < best:
                best = value
    return best


def normal_equations_fit(inputs: np.ndarray, response: np.ndarray) -> np.ndarray:
    """Least-squares coefficients (with intercept) via the normal equations."""
    design = np.hstack([inputs, np.ones((inputs.shape[0], 1))])
    gram = design.T @ design
    return np.linalg.solve(gram, design.T @ response)


def random_bounded_lp(rng: np.random.Generator, max_extra_rows: int = 4):
    """A random feasible LP whose feasible set is a bounded polytope.

    Box rows on every variable guarantee boundedness; extra random rows are
    shifted to keep a known interior point feasible.
    """
    n = int(rng.integers(2, 5))
    extra = int(rng.integers(1, min(max_extra_rows, 8 - n) + 1))
    x0 = rng.uniform(-1.0, 1.0, n)
    rows = [np.eye(n)[i] for i in range(n)]
    lows = list(x0 - rng.uniform(0.5, 2.0, n))
    highs = list(x0 + rng.uniform(0.5, 2.0, n))
    for _ in range(extra):
        a = rng.normal(size=n)
        slack_lo = rng.uniform(0.2, 2.0)
        slack_hi = rng.uniform(0.2, 2.0)
        rows.append(a)
        lows.append(float(a @ x0 - slack_lo))
        highs.append(float(a @ x0 + slack_hi))
    q = rng.normal(size=n)
    return q, np.vstack(rows), np.array(lows), np.array(highs)
