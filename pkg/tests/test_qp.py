import numpy as np
import pytest

from quadbelt.dynamics import BodyPose, FootForces, PhysicalParams, RobotState, build_M
from quadbelt.primitives import primitive_table
from quadbelt.qp import (
    ForceQpSolver,
    QpProblem,
    QpSettings,
    QpStatus,
    QpWeights,
    build_force_qp,
    dump_problem,
    force_qp_cost,
    solve,
)

from .oracles import kkt_satisfied, projected_gradient_solve, random_strictly_convex_problem

PARAMS = PhysicalParams()
PRIMS = primitive_table()


def default_state():
    return RobotState(
        pose=BodyPose(np.array([0.0, 0.0, 0.40]), np.zeros(3)),
        twist=np.zeros(6),
        foot_positions=PARAMS.default_foot_positions,
    )


class TestSolveBasics:
    def test_unconstrained_identity(self):
        prob = QpProblem(P=np.eye(3), q=np.zeros(3), A=np.zeros((0, 3)), lower=np.zeros(0), upper=np.zeros(0))
        sol = solve(prob)
        assert sol.status is QpStatus.SOLVED
        assert np.allclose(sol.x, 0.0, atol=1e-9)

    def test_single_upper_bound_analytic(self):
        # min 0.5|x|^2 - 2 x1  s.t. x1 <= 1  ->  x = (1, 0), dual y = 1
        prob = QpProblem(
            P=np.eye(2),
            q=np.array([-2.0, 0.0]),
            A=np.array([[1.0, 0.0]]),
            lower=np.array([-np.inf]),
            upper=np.array([1.0]),
        )
        sol = solve(prob)
        assert sol.status is QpStatus.SOLVED
        assert np.allclose(sol.x, [1.0, 0.0], atol=1e-7)
        assert sol.y[0] == pytest.approx(1.0, abs=1e-6)

    def test_equality_matches_kkt_linear_solve(self):
        rng = np.random.default_rng(10)
        for _ in range(20):
            n = int(rng.integers(2, 9))
            k = int(rng.integers(1, n))
            G = rng.normal(size=(n, n))
            P = G @ G.T + np.eye(n)
            q = rng.normal(size=n)
            A = rng.normal(size=(k, n))
            b = rng.normal(size=k)
            prob = QpProblem(P=P, q=q, A=A, lower=b, upper=b)
            sol = solve(prob)
            assert sol.status is QpStatus.SOLVED
            kkt = np.block([[P, A.T], [A, np.zeros((k, k))]])
            direct = np.linalg.solve(kkt, np.concatenate([-q, b]))
            assert np.max(np.abs(sol.x - direct[:n])) <= 1e-8

    def test_detects_infeasible(self):
        # x >= 1 and x <= -1 simultaneously
        prob = QpProblem(
            P=np.eye(1),
            q=np.zeros(1),
            A=np.array([[1.0], [1.0]]),
            lower=np.array([1.0, -np.inf]),
            upper=np.array([np.inf, -1.0]),
        )
        sol = solve(prob)
        assert sol.status is QpStatus.INFEASIBLE

    def test_deterministic_bitwise(self):
        prob = random_strictly_convex_problem(np.random.default_rng(42))
        a = solve(prob)
        b = solve(prob)
        assert np.array_equal(a.x, b.x)
        assert a.iterations == b.iterations

    def test_validation_rejects_asymmetric(self):
        P = np.eye(2)
        P[0, 1] = 1e-3
        with pytest.raises(ValueError):
            QpProblem(P=P, q=np.zeros(2), A=np.zeros((0, 2)), lower=np.zeros(0), upper=np.zeros(0))

    def test_validation_rejects_crossed_bounds(self):
        with pytest.raises(ValueError):
            QpProblem(
                P=np.eye(1),
                q=np.zeros(1),
                A=np.ones((1, 1)),
                lower=np.array([1.0]),
                upper=np.array([0.0]),
            )


class TestSolveAgainstOracles:
    def test_random_problems_pass_kkt_and_match_projected_gradient(self):
        rng = np.random.default_rng(123)
        for _ in range(60):
            prob = random_strictly_convex_problem(rng)
            sol = solve(prob)
            assert sol.status is QpStatus.SOLVED, sol
            ok, why = kkt_satisfied(prob, sol.x, sol.y, tol=1e-6)
            assert ok, why
            ref = projected_gradient_solve(prob, iterations=30000)
            assert np.max(np.abs(sol.x - ref)) <= 1e-5

    def test_warm_start_converges_same_solution(self):
        rng = np.random.default_rng(5)
        prob = random_strictly_convex_problem(rng)
        cold = solve(prob)
        warm = solve(prob, warm_start=cold)
        assert np.max(np.abs(cold.x - warm.x)) <= 1e-6


class TestForceQp:
    def test_all_swing_forces_zero(self):
        state = default_state()
        M = build_M(state, PARAMS)
        prim = type(PRIMS[0])(id=99, name="AllSwing", feet=(True, True, True, True))
        prob = build_force_qp(np.zeros(6), M, PARAMS.gravity_aug, prim, QpWeights(), 0.6, 5.0)
        sol = solve(prob)
        assert sol.status is QpStatus.SOLVED
        assert np.max(np.abs(sol.x)) <= 1e-8

    def test_stand_gravity_compensation_matches_least_squares_oracle(self):
        # R -> 0 and no active inequality: solution is the Q-weighted
        # least-squares force, which for symmetric feet is mg/4 vertical
        state = default_state()
        M = build_M(state, PARAMS)
        weights = QpWeights(r_weight=np.full(12, 1e-12))
        prob = build_force_qp(np.zeros(6), M, PARAMS.gravity_aug, PRIMS[0], weights, 0.6, 5.0)
        sol = solve(prob)
        assert sol.status is QpStatus.SOLVED
        f = sol.x.reshape(4, 3)
        expected_fz = PARAMS.weight / 4.0
        sq = np.sqrt(weights.q_weight)
        ref, *_ = np.linalg.lstsq((sq[:, None] * M), sq * PARAMS.gravity_aug, rcond=None)
        assert np.allclose(sol.x, ref, atol=1e-6)
        assert np.allclose(f[:, 2], expected_fz, atol=1e-5)
        assert np.max(np.abs(f[:, :2])) <= 1e-6

    def test_zero_mu_kills_tangential(self):
        state = default_state()
        M = build_M(state, PARAMS)
        accel = np.array([1.0, -0.5, 0.0, 0.1, 0.0, 0.2])
        prob = build_force_qp(accel, M, PARAMS.gravity_aug, PRIMS[0], QpWeights(), 0.0, 5.0)
        sol = solve(prob)
        f = sol.x.reshape(4, 3)
        assert np.max(np.abs(f[:, :2])) <= 1e-8

    def test_every_primitive_zeroes_swing_feet(self):
        rng = np.random.default_rng(17)
        state = default_state()
        M = build_M(state, PARAMS)
        for prim in PRIMS:
            accel = rng.uniform(-2, 2, 6)
            prob = build_force_qp(accel, M, PARAMS.gravity_aug, prim, QpWeights(), 0.6, 5.0)
            sol = solve(prob)
            f = sol.x.reshape(4, 3)
            for i in range(4):
                if prim.feet[i]:
                    assert np.max(np.abs(f[i])) <= 1e-8
                else:
                    assert f[i, 2] >= 5.0 - 1e-8

    def test_friction_respected_under_aggressive_targets(self):
        rng = np.random.default_rng(31)
        state = default_state()
        M = build_M(state, PARAMS)
        mu = 0.6
        for prim in PRIMS[:5]:
            accel = rng.uniform(-8, 8, 6)
            prob = build_force_qp(accel, M, PARAMS.gravity_aug, prim, QpWeights(), mu, 5.0)
            sol = solve(prob)
            f = sol.x.reshape(4, 3)
            for i in range(4):
                if not prim.feet[i]:
                    assert abs(f[i, 0]) <= mu * f[i, 2] + 1e-8
                    assert abs(f[i, 1]) <= mu * f[i, 2] + 1e-8
                    assert f[i, 2] >= 5.0 - 1e-8

    def test_friction_as_printed_flag_changes_rows(self):
        state = default_state()
        M = build_M(state, PARAMS)
        a = build_force_qp(np.zeros(6), M, PARAMS.gravity_aug, PRIMS[0], QpWeights(), 0.6, 5.0)
        b = build_force_qp(
            np.zeros(6), M, PARAMS.gravity_aug, PRIMS[0], QpWeights(), 0.6, 5.0, friction_as_printed=True
        )
        assert not np.array_equal(a.A, b.A)

    def test_cost_matches_expanded_objective(self):
        state = default_state()
        M = build_M(state, PARAMS)
        weights = QpWeights()
        accel = np.array([0.5, 0.0, -1.0, 0.0, 0.3, 0.0])
        prob = build_force_qp(accel, M, PARAMS.gravity_aug, PRIMS[1], weights, 0.6, 5.0)
        sol = solve(prob)
        b = PARAMS.gravity_aug + accel
        const = float(b @ (weights.q_weight * b))
        assert force_qp_cost(sol.x, accel, M, PARAMS.gravity_aug, weights) == pytest.approx(
            prob.objective(sol.x) + const, abs=1e-8
        )


class TestFastPath:
    """The fused warm-started solver must agree with build_force_qp + solve."""

    def test_matches_reference_objective_and_swing_rows(self):
        rng = np.random.default_rng(99)
        fast = ForceQpSolver(QpWeights())
        state = default_state()
        for k in range(40):
            feet = PARAMS.default_foot_positions + rng.uniform(-0.05, 0.05, (4, 3))
            state = RobotState(pose=state.pose, twist=np.zeros(6), foot_positions=feet)
            M = build_M(state, PARAMS)
            accel = rng.uniform(-3, 3, 6)
            prim = PRIMS[k % 9]
            res = fast.solve(M, accel, PARAMS.gravity_aug, prim, 0.6, 5.0)
            prob = build_force_qp(accel, M, PARAMS.gravity_aug, prim, QpWeights(), 0.6, 5.0)
            ref = solve(prob)
            assert res.status is QpStatus.SOLVED
            assert prob.objective(res.forces) == pytest.approx(prob.objective(ref.x), abs=1e-7, rel=1e-9)
            f = res.forces.reshape(4, 3)
            for i in range(4):
                if prim.feet[i]:
                    assert np.max(np.abs(f[i])) <= 1e-8

    def test_deterministic_across_instances(self):
        state = default_state()
        M = build_M(state, PARAMS)
        accel = np.array([0.3, -0.2, 0.5, 0.0, 0.1, -0.4])
        runs = []
        for _ in range(2):
            fast = ForceQpSolver(QpWeights())
            out = []
            for prim in PRIMS:
                out.append(fast.solve(M, accel, PARAMS.gravity_aug, prim, 0.6, 5.0).forces)
            runs.append(np.stack(out))
        assert np.array_equal(runs[0], runs[1])


class TestDump:
    def test_round_trips_values(self):
        prob = random_strictly_convex_problem(np.random.default_rng(3))
        text = dump_problem(prob)
        lines = dict(l.split(" ", 1) for l in text.strip().splitlines())
        P2 = np.array([float(v) for v in lines["P"].split()]).reshape(prob.n, prob.n)
        assert np.array_equal(P2, prob.P)
        assert int(lines["n"]) == prob.n
