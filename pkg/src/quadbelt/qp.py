"""Dense convex QP solver and the ground-reaction-force problem builder.

Solves

    min  0.5 x^T P x + q^T x   s.t.  l <= A x <= u

with an operator-splitting (ADMM) iteration: alternate a regularized KKT
solve with a projection onto the box, plus dual ascent.  Equality rows
(l == u) get a much larger penalty weight, and a final active-set polish
solves the KKT system of the identified active constraints directly, so
equality rows (swing feet) come back satisfied to solver precision rather
than to the ADMM tolerance.

Everything is deterministic: no randomness, fixed iteration schedule,
pure float64 array math.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from quadbelt.primitives import Primitive

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(f):
            return f

        return wrap(args[0]) if args and callable(args[0]) else wrap


class QpStatus(enum.Enum):
    SOLVED = "solved"
    MAX_ITERATIONS = "max_iterations"
    INFEASIBLE = "infeasible"


@dataclass(frozen=True)
class QpProblem:
    """Standard-form problem; equality rows use lower == upper."""

    P: np.ndarray
    q: np.ndarray
    A: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        P = np.ascontiguousarray(self.P, dtype=float)
        q = np.ascontiguousarray(self.q, dtype=float)
        A = np.ascontiguousarray(self.A, dtype=float).reshape(-1, P.shape[0])
        lower = np.ascontiguousarray(self.lower, dtype=float)
        upper = np.ascontiguousarray(self.upper, dtype=float)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        n = P.shape[0]
        if P.shape != (n, n) or q.shape != (n,):
            raise ValueError("inconsistent P/q dimensions")
        if np.max(np.abs(P - P.T), initial=0.0) > 1e-10:
            raise ValueError("P must be symmetric")
        m = A.shape[0]
        if lower.shape != (m,) or upper.shape != (m,):
            raise ValueError("inconsistent constraint dimensions")
        if np.any(lower > upper):
            raise ValueError("lower bound exceeds upper bound")

    @property
    def n(self) -> int:
        return self.P.shape[0]

    @property
    def m(self) -> int:
        return self.A.shape[0]

    def objective(self, x: np.ndarray) -> float:
        return float(0.5 * x @ self.P @ x + self.q @ x)


@dataclass(frozen=True)
class QpSolution:
    x: np.ndarray
    y: np.ndarray  # constraint duals
    status: QpStatus
    iterations: int
    primal_residual: float
    dual_residual: float


@dataclass(frozen=True)
class QpSettings:
    tolerance: float = 1e-6
    max_iterations: int = 4000
    rho: float = 0.1
    rho_eq_scale: float = 1e3
    sigma: float = 1e-6
    alpha: float = 1.6
    check_every: int = 10
    polish: bool = True
    infeasibility_tol: float = 1e-10


@dataclass(frozen=True)
class QpWeights:
    """Diagonals of the acceleration-error and force-regularization costs."""

    q_weight: np.ndarray = field(
        default_factory=lambda: np.array([1.0, 1.0, 10.0, 20.0, 20.0, 5.0])
    )
    r_weight: np.ndarray = field(default_factory=lambda: np.full(12, 1e-4))

    def __post_init__(self):
        object.__setattr__(self, "q_weight", np.asarray(self.q_weight, dtype=float))
        object.__setattr__(self, "r_weight", np.asarray(self.r_weight, dtype=float))
        if self.q_weight.shape != (6,) or self.r_weight.shape != (12,):
            raise ValueError("q_weight must be length 6, r_weight length 12")
        if np.any(self.q_weight < 0) or np.any(self.r_weight < 0):
            raise ValueError("weights must be nonnegative")
        if not np.any(self.q_weight > 0):
            raise ValueError("at least one q_weight entry must be positive")


def _admm_impl(P, q, A, lower, upper, x0, y0, rho0, eq_scale, sigma, alpha,
               max_iter, tol, check_every, inf_tol):
    n = P.shape[0]
    m = A.shape[0]

    rho = np.full(m, rho0)
    for i in range(m):
        if upper[i] - lower[i] < 1e-12:
            rho[i] = rho0 * eq_scale

    x = x0.copy()
    y = y0.copy()
    z = A @ x
    for i in range(m):
        z[i] = min(max(z[i], lower[i]), upper[i])

    # reduced linear system: (P + sigma I + A^T diag(rho) A) x~ =
    # sigma x - q + A^T (rho z - y); then z~ = A x~.
    K = P + sigma * np.eye(n) + A.T @ (rho[:, None] * A)
    K_inv = np.linalg.inv(K)

    rp = np.inf
    rd = np.inf
    status = 1  # max_iterations
    it = 0
    y_prev_chk = y.copy()

    for it in range(1, max_iter + 1):
        rhs = sigma * x - q + A.T @ (rho * z - y)
        xt = K_inv @ rhs
        zt = A @ xt

        x = alpha * xt + (1.0 - alpha) * x
        zc = alpha * zt + (1.0 - alpha) * z
        z_new = zc + y / rho
        for i in range(m):
            z_new[i] = min(max(z_new[i], lower[i]), upper[i])
        y = y + rho * (zc - z_new)
        z = z_new

        if it % check_every == 0 or it == max_iter:
            ax = A @ x
            rp = 0.0
            for i in range(m):
                v = abs(ax[i] - z[i])
                if v > rp:
                    rp = v
            grad = P @ x + q + A.T @ y
            rd = 0.0
            for i in range(n):
                v = abs(grad[i])
                if v > rd:
                    rd = v
            if rp <= tol and rd <= tol:
                status = 0  # solved
                break

            # primal infeasibility certificate on the dual increment
            dy = y - y_prev_chk
            dy_norm = 0.0
            for i in range(m):
                v = abs(dy[i])
                if v > dy_norm:
                    dy_norm = v
            if dy_norm > inf_tol:
                v = dy / dy_norm
                atv = A.T @ v
                atv_norm = 0.0
                for i in range(n):
                    w = abs(atv[i])
                    if w > atv_norm:
                        atv_norm = w
                support = 0.0
                ok = True
                for i in range(m):
                    vp = max(v[i], 0.0)
                    vm = min(v[i], 0.0)
                    if vp > 1e-12 and upper[i] == np.inf:
                        ok = False
                        break
                    if vm < -1e-12 and lower[i] == -np.inf:
                        ok = False
                        break
                    if vp > 1e-12:
                        support += upper[i] * vp
                    if vm < -1e-12:
                        support += lower[i] * vm
                if ok and atv_norm <= 1e-6 and support <= -1e-6:
                    status = 2  # infeasible
                    break
            y_prev_chk = y.copy()

            # residual balancing: rescale the penalty and refactor
            if rp > 10.0 * rd and rp > tol:
                rho = rho * 5.0
                for i in range(m):
                    if rho[i] > 1e7:
                        rho[i] = 1e7
                K = P + sigma * np.eye(n) + A.T @ (rho[:, None] * A)
                K_inv = np.linalg.inv(K)
            elif rd > 10.0 * rp and rd > tol:
                rho = rho / 5.0
                for i in range(m):
                    if rho[i] < 1e-8:
                        rho[i] = 1e-8
                K = P + sigma * np.eye(n) + A.T @ (rho[:, None] * A)
                K_inv = np.linalg.inv(K)

    return x, y, z, it, rp, rd, status


def _polish_impl(P, q, A, lower, upper, x, y, tol):
    """Re-solve on the active set; keep the result only if it is better.

    Active rows (bounds touched with the matching dual sign, plus all
    equality rows) are treated as equalities and the stationarity system
    is solved directly, which pins them to linear-solver precision.
    Returns (x, y, rp, rd, accepted).
    """
    n = P.shape[0]
    m = A.shape[0]
    ax = A @ x
    act = np.zeros(m, dtype=np.int64)
    vals = np.zeros(m)
    k = 0
    for i in range(m):
        eq = upper[i] - lower[i] < 1e-12
        on_lower = (ax[i] - lower[i] < tol * 10.0) and y[i] < 0.0
        on_upper = (upper[i] - ax[i] < tol * 10.0) and y[i] > 0.0
        if eq or on_lower or on_upper:
            act[k] = i
            vals[k] = lower[i] if (eq or on_lower) else upper[i]
            k += 1
    if k == 0:
        return x, y, np.inf, np.inf, False

    kkt = np.zeros((n + k, n + k))
    kkt[:n, :n] = P
    for j in range(k):
        i = act[j]
        for c in range(n):
            kkt[c, n + j] = A[i, c]
            kkt[n + j, c] = A[i, c]
        kkt[n + j, n + j] = -1e-12  # tiny regularization for redundant rows
    rhs = np.zeros(n + k)
    rhs[:n] = -q
    rhs[n:] = vals[:k]
    sol = np.linalg.solve(kkt, rhs)
    x_p = sol[:n]
    y_p = np.zeros(m)
    for j in range(k):
        y_p[act[j]] = sol[n + j]

    ax_p = A @ x_p
    rp_p = 0.0
    for i in range(m):
        if ax_p[i] < lower[i] - tol or ax_p[i] > upper[i] + tol:
            return x, y, np.inf, np.inf, False
        v = ax_p[i]
        if v < lower[i]:
            r = lower[i] - v
        elif v > upper[i]:
            r = v - upper[i]
        else:
            r = 0.0
        if r > rp_p:
            rp_p = r
    grad = P @ x_p + q + A.T @ y_p
    rd_p = 0.0
    for i in range(n):
        v = abs(grad[i])
        if v > rd_p:
            rd_p = v
    return x_p, y_p, rp_p, rd_p, True


def _force_rows(mu, fz_min, swing, as_printed):
    """Constraint arrays for the force QP; layout fixed per swing mask."""
    m = 0
    for i in range(4):
        m += 3 if swing[i] else 5
    A = np.zeros((m, 12))
    lo = np.zeros(m)
    hi = np.zeros(m)
    r = 0
    for i in range(4):
        ix = 3 * i
        iy = 3 * i + 1
        iz = 3 * i + 2
        if swing[i]:
            for j in range(3):
                A[r, ix + j] = 1.0
                lo[r] = 0.0
                hi[r] = 0.0
                r += 1
            continue
        A[r, iz] = 1.0
        lo[r] = fz_min
        hi[r] = np.inf
        r += 1
        for t in range(2):
            it = ix + t
            if as_printed:
                A[r, iz] = 1.0
                A[r, it] = -mu
                lo[r] = -np.inf
                hi[r] = 0.0
                r += 1
                A[r, iz] = 1.0
                A[r, it] = mu
                lo[r] = 0.0
                hi[r] = np.inf
                r += 1
            else:
                A[r, it] = 1.0
                A[r, iz] = -mu
                lo[r] = -np.inf
                hi[r] = 0.0
                r += 1
                A[r, it] = 1.0
                A[r, iz] = mu
                lo[r] = 0.0
                hi[r] = np.inf
                r += 1
    return A, lo, hi


if _HAVE_NUMBA:
    _admm_core = njit(cache=True)(_admm_impl)
    _polish_core = njit(cache=True)(_polish_impl)
    _force_rows_core = njit(cache=True)(_force_rows)
else:  # pragma: no cover
    _admm_core = _admm_impl
    _polish_core = _polish_impl
    _force_rows_core = _force_rows


def _force_qp_fast_impl(M, b, q_weight, r_weight, mu, fz_min, swing, as_printed,
                        x0, y0, rho0, eq_scale, sigma, alpha, max_iter, tol,
                        check_every, inf_tol):
    """Fused build + ADMM + polish for the control-tick force QP."""
    MQ = M.T * q_weight
    P = 2.0 * (MQ @ M)
    for i in range(12):
        P[i, i] += 2.0 * r_weight[i]
    P = 0.5 * (P + P.T)
    q = -2.0 * (MQ @ b)
    A, lo, hi = _force_rows_core(mu, fz_min, swing, as_printed)

    x, y, z, iters, rp, rd, status = _admm_core(
        P, q, A, lo, hi, x0, y0, rho0, eq_scale, sigma, alpha,
        max_iter, tol, check_every, inf_tol,
    )
    if status != 2:
        x_p, y_p, rp_p, rd_p, ok = _polish_core(P, q, A, lo, hi, x, y, tol)
        if ok and (max(rp_p, rd_p) <= max(rp, rd) or (rp_p <= tol and rd_p <= tol)):
            x, y, rp, rd = x_p, y_p, rp_p, rd_p
            if rp <= tol and rd <= tol:
                status = 0
    # objective value of the assembled standard form (constant term excluded)
    obj = 0.5 * (x @ (P @ x)) + q @ x
    return x, y, iters, rp, rd, status, obj


if _HAVE_NUMBA:
    _force_qp_core = njit(cache=True)(_force_qp_fast_impl)
else:  # pragma: no cover
    _force_qp_core = _force_qp_fast_impl


def solve(
    problem: QpProblem,
    settings: QpSettings = QpSettings(),
    warm_start: QpSolution | None = None,
) -> QpSolution:
    """Solve the QP; deterministic for identical problem and settings."""
    n, m = problem.n, problem.m
    if m == 0:
        x = np.linalg.solve(problem.P + settings.sigma * np.eye(n), -problem.q)
        rd = float(np.max(np.abs(problem.P @ x + problem.q), initial=0.0))
        return QpSolution(x, np.zeros(0), QpStatus.SOLVED, 0, 0.0, rd)

    if warm_start is not None and warm_start.x.shape == (n,) and warm_start.y.shape == (m,):
        x0, y0 = warm_start.x.copy(), warm_start.y.copy()
    else:
        x0, y0 = np.zeros(n), np.zeros(m)

    x, y, z, iters, rp, rd, code = _admm_core(
        problem.P,
        problem.q,
        problem.A,
        problem.lower,
        problem.upper,
        x0,
        y0,
        settings.rho,
        settings.rho_eq_scale,
        settings.sigma,
        settings.alpha,
        settings.max_iterations,
        settings.tolerance,
        settings.check_every,
        settings.infeasibility_tol,
    )
    status = (QpStatus.SOLVED, QpStatus.MAX_ITERATIONS, QpStatus.INFEASIBLE)[code]

    if status is not QpStatus.INFEASIBLE and settings.polish:
        x_p, y_p, rp_p, rd_p, ok = _polish_core(
            problem.P, problem.q, problem.A, problem.lower, problem.upper, x, y, settings.tolerance
        )
        if ok and (
            max(rp_p, rd_p) <= max(rp, rd)
            or (rp_p <= settings.tolerance and rd_p <= settings.tolerance)
        ):
            x, y, rp, rd = x_p, y_p, rp_p, rd_p
            if rp <= settings.tolerance and rd <= settings.tolerance:
                status = QpStatus.SOLVED

    return QpSolution(x, y, status, int(iters), float(rp), float(rd))


@dataclass
class ForceQpResult:
    """Fast-path result: flat force vector plus solver certificate."""

    forces: np.ndarray  # (12,)
    duals: np.ndarray
    status: QpStatus
    iterations: int
    primal_residual: float
    dual_residual: float
    objective: float  # standard-form value, constant term excluded


class ForceQpSolver:
    """Warm-started solver for the per-tick force allocation.

    One instance per controller; holds the previous solution as the warm
    start (reset when the contact configuration changes, since the dual
    layout follows the stance mask).
    """

    def __init__(self, weights: QpWeights, settings: QpSettings = QpSettings(),
                 friction_as_printed: bool = False):
        self.weights = weights
        self.settings = settings
        self.friction_as_printed = friction_as_printed
        self._warm_x = np.zeros(12)
        self._warm_y = np.zeros(0)
        self._warm_mask: tuple[bool, ...] | None = None

    def reset(self) -> None:
        self._warm_x = np.zeros(12)
        self._warm_y = np.zeros(0)
        self._warm_mask = None

    def solve(self, M: np.ndarray, accel_target: np.ndarray, gravity_aug: np.ndarray,
              primitive: Primitive, friction_mu: float, fz_min: float) -> ForceQpResult:
        swing = np.array(primitive.feet, dtype=np.bool_)
        m_rows = int(np.sum(np.where(swing, 3, 5)))
        if self._warm_mask != primitive.feet or self._warm_y.shape[0] != m_rows:
            y0 = np.zeros(m_rows)
        else:
            y0 = self._warm_y
        b = np.ascontiguousarray(gravity_aug + accel_target)
        s = self.settings
        x, y, iters, rp, rd, code, obj = _force_qp_core(
            np.ascontiguousarray(M), b,
            self.weights.q_weight, self.weights.r_weight,
            float(friction_mu), float(fz_min), swing, self.friction_as_printed,
            self._warm_x, y0, s.rho, s.rho_eq_scale, s.sigma, s.alpha,
            s.max_iterations, s.tolerance, s.check_every, s.infeasibility_tol,
        )
        status = (QpStatus.SOLVED, QpStatus.MAX_ITERATIONS, QpStatus.INFEASIBLE)[code]
        self._warm_x = x
        self._warm_y = y
        self._warm_mask = primitive.feet
        return ForceQpResult(x, y, status, int(iters), float(rp), float(rd), float(obj))


def build_force_qp(
    accel_target: np.ndarray,
    M: np.ndarray,
    gravity_aug: np.ndarray,
    primitive: Primitive,
    weights: QpWeights,
    friction_mu: float,
    fz_min: float,
    friction_as_printed: bool = False,
) -> QpProblem:
    """Assemble the stance-force allocation QP.

    Objective  ||M f - g_aug - accel_target||_Q + ||f||_R  in standard
    form.  Stance feet get a minimum-normal-force row plus four friction
    pyramid rows |f_x| <= mu f_z, |f_y| <= mu f_z; swing feet are pinned
    to zero by equality rows.  ``friction_as_printed`` swaps in the
    literal (inverted) text form of the pyramid for comparison runs.
    """
    b = np.asarray(gravity_aug, dtype=float) + np.asarray(accel_target, dtype=float)
    Q = np.diag(weights.q_weight)
    P = 2.0 * (M.T @ Q @ M + np.diag(weights.r_weight))
    P = 0.5 * (P + P.T)
    q = -2.0 * (M.T @ (weights.q_weight * b))

    rows: list[np.ndarray] = []
    lo: list[float] = []
    hi: list[float] = []
    for i in range(4):
        ix, iy, iz = 3 * i, 3 * i + 1, 3 * i + 2
        if primitive.feet[i]:  # swing: f_i = 0
            for j in (ix, iy, iz):
                r = np.zeros(12)
                r[j] = 1.0
                rows.append(r)
                lo.append(0.0)
                hi.append(0.0)
            continue
        r = np.zeros(12)
        r[iz] = 1.0
        rows.append(r)
        lo.append(fz_min)
        hi.append(np.inf)
        if friction_as_printed:
            # literal text: -mu f_x <= f_z <= mu f_x (and same with f_y)
            for it in (ix, iy):
                r = np.zeros(12)
                r[iz] = 1.0
                r[it] = -friction_mu
                rows.append(r)
                lo.append(-np.inf)
                hi.append(0.0)
                r = np.zeros(12)
                r[iz] = 1.0
                r[it] = friction_mu
                rows.append(r)
                lo.append(0.0)
                hi.append(np.inf)
        else:
            for it in (ix, iy):
                r = np.zeros(12)
                r[it] = 1.0
                r[iz] = -friction_mu
                rows.append(r)
                lo.append(-np.inf)
                hi.append(0.0)
                r = np.zeros(12)
                r[it] = 1.0
                r[iz] = friction_mu
                rows.append(r)
                lo.append(0.0)
                hi.append(np.inf)

    A = np.stack(rows) if rows else np.zeros((0, 12))
    return QpProblem(P=P, q=q, A=A, lower=np.array(lo), upper=np.array(hi))


def force_qp_cost(
    f_flat: np.ndarray,
    accel_target: np.ndarray,
    M: np.ndarray,
    gravity_aug: np.ndarray,
    weights: QpWeights,
) -> float:
    """Eq-style objective value (with its constant term) at a force vector."""
    resid = M @ f_flat - np.asarray(gravity_aug) - np.asarray(accel_target)
    return float(resid @ (weights.q_weight * resid) + f_flat @ (weights.r_weight * f_flat))


def dump_problem(problem: QpProblem) -> str:
    """Deterministic text dump (row-major, shortest round-trip decimals)."""
    out = [f"n {problem.n}", f"m {problem.m}"]

    def emit(tag, arr):
        flat = np.asarray(arr).reshape(-1)
        out.append(tag + " " + " ".join(repr(float(v)) for v in flat))

    emit("P", problem.P)
    emit("q", problem.q)
    emit("A", problem.A)
    emit("lower", problem.lower)
    emit("upper", problem.upper)
    return "\n".join(out) + "\n"
