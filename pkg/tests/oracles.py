"""Independent verification oracles for the QP solver tests.

Deliberately share no code with the solver: the KKT checker works from
the optimality conditions directly, and the reference solver is plain
projected gradient ascent on the dual (with Nesterov momentum), which
only needs P to be invertible.
"""

import numpy as np


def kkt_satisfied(problem, x, y, tol=1e-6):
    """Stationarity, primal feasibility and complementary slackness."""
    P, q, A, lower, upper = problem.P, problem.q, problem.A, problem.lower, problem.upper
    station = np.max(np.abs(P @ x + q + A.T @ y), initial=0.0)
    if station > tol:
        return False, f"stationarity {station:.3e}"
    if problem.m == 0:
        return True, "ok"
    ax = A @ x
    if np.any(ax < lower - tol) or np.any(ax > upper + tol):
        return False, "primal infeasibility"
    for i in range(problem.m):
        if upper[i] - lower[i] < 1e-12:
            continue  # equality row: slackness vacuous
        y_up = max(y[i], 0.0)
        y_lo = max(-y[i], 0.0)
        scale = (1.0 + abs(y[i])) * (1.0 + abs(ax[i]))
        if np.isfinite(upper[i]) and y_up * (upper[i] - ax[i]) > tol * scale:
            return False, f"slackness upper row {i}"
        if not np.isfinite(upper[i]) and y_up > tol:
            return False, f"positive dual on unbounded row {i}"
        if np.isfinite(lower[i]) and y_lo * (ax[i] - lower[i]) > tol * scale:
            return False, f"slackness lower row {i}"
        if not np.isfinite(lower[i]) and y_lo > tol:
            return False, f"negative dual on unbounded row {i}"
    return True, "ok"


def projected_gradient_solve(problem, iterations=60000):
    """Brute-force reference: projected gradient ascent on the dual.

    The combined multiplier vector holds a free block for equality rows
    and nonnegative blocks for finite upper/lower bounds; x recovers as
    x = -P^-1 (q + A^T y).  Plain Nesterov-accelerated projected gradient
    with adaptive restart, stopped early once the multipliers freeze.
    """
    P, q, A, lower, upper = problem.P, problem.q, problem.A, problem.lower, problem.upper
    m = problem.m
    P_inv = np.linalg.inv(P)
    if m == 0:
        return -P_inv @ q

    eq = (upper - lower) < 1e-12
    up_rows = np.where(np.isfinite(upper) & ~eq)[0]
    lo_rows = np.where(np.isfinite(lower) & ~eq)[0]
    eq_rows = np.where(eq)[0]
    # stacked constraint directions: equality rows (free), upper rows
    # (multiplier >= 0), lower rows as -a_i x >= -l (multiplier >= 0)
    C = np.vstack([A[eq_rows], A[up_rows], -A[lo_rows]])
    d = np.concatenate([upper[eq_rows], upper[up_rows], -lower[lo_rows]])
    k_eq = len(eq_rows)
    k = C.shape[0]

    G = C @ P_inv @ C.T
    L = float(np.max(np.linalg.eigvalsh(G))) if k else 1.0
    step = 1.0 / max(L, 1e-12)

    def project(lam):
        out = lam.copy()
        out[k_eq:] = np.maximum(out[k_eq:], 0.0)
        return out

    def gradient(lam):
        x = -P_inv @ (q + C.T @ lam)
        return C @ x - d

    lam = np.zeros(k)
    mu = lam.copy()
    t_k = 1.0
    for it in range(iterations):
        g = gradient(mu)
        new_lam = project(mu + step * g)
        if float(g @ (new_lam - lam)) < 0.0:  # adaptive restart
            t_k = 1.0
            mu = lam.copy()
            g = gradient(mu)
            new_lam = project(mu + step * g)
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_k * t_k))
        mu = new_lam + ((t_k - 1.0) / t_next) * (new_lam - lam)
        moved = float(np.max(np.abs(new_lam - lam), initial=0.0))
        lam = new_lam
        t_k = t_next
        if it % 50 == 49 and moved <= 1e-15 * max(1.0, float(np.max(np.abs(lam)))):
            break
    return -P_inv @ (q + C.T @ lam)


def random_strictly_convex_problem(rng, n_max=12, m_max=24):
    """Feasible-by-construction random problem with optional equality rows."""
    from quadbelt.qp import QpProblem

    n = int(rng.integers(2, n_max + 1))
    m = int(rng.integers(1, m_max + 1))
    G = rng.normal(size=(n, n))
    P = G @ G.T + (0.3 + rng.uniform()) * np.eye(n)
    q = rng.normal(size=n)
    A = rng.normal(size=(m, n))
    x_feas = rng.normal(size=n)
    ax = A @ x_feas
    lower = np.empty(m)
    upper = np.empty(m)
    for i in range(m):
        kind = rng.uniform()
        if kind < 0.15:
            lower[i] = upper[i] = ax[i]  # equality row
        elif kind < 0.45:
            lower[i] = -np.inf
            upper[i] = ax[i] + rng.uniform(0.05, 1.5)
        elif kind < 0.75:
            lower[i] = ax[i] - rng.uniform(0.05, 1.5)
            upper[i] = np.inf
        else:
            lower[i] = ax[i] - rng.uniform(0.05, 1.5)
            upper[i] = ax[i] + rng.uniform(0.05, 1.5)
    return QpProblem(P=P, q=q, A=A, lower=lower, upper=upper)
