import numpy as np
import pytest

from bessmpc.horizon import (
    ControllerConfig,
    ControlSchedule,
    HorizonForecast,
    StorageState,
    build_qp,
    condense_dynamics,
    evaluate_objective,
    extract_schedule,
)
from bessmpc.qp import QpStatus, solve_qp

from conftest import make_paper_config


class TestControllerConfig:
    def test_scalar_weights_broadcast(self):
        cfg = make_paper_config(n_slots=4)
        assert cfg.alpha.shape == (4,)
        assert np.all(cfg.beta == 5.0)

    def test_vector_weights(self):
        cfg = make_paper_config(n_slots=3, beta=[1.0, 2.0, 3.0])
        assert cfg.beta.tolist() == [1.0, 2.0, 3.0]

    @pytest.mark.parametrize("bad", [
        dict(theta=0.0),
        dict(n_slots=0),
        dict(gamma=0.0),
        dict(alpha=-1.0),
        dict(beta=[1.0, 2.0]),       # wrong length for 24 slots
        dict(ps_min=7.0),            # crosses ps_max=6
        dict(x_ref=13.0),            # outside [0, 12]
    ])
    def test_invalid_configs_rejected(self, bad):
        with pytest.raises(ValueError):
            make_paper_config(**bad)

    def test_truncated_shortens_weights(self):
        cfg = make_paper_config(beta=np.arange(24.0))
        short = cfg.truncated(5)
        assert short.n_slots == 5
        assert short.beta.tolist() == [0.0, 1.0, 2.0, 3.0, 4.0]
        assert cfg.truncated(24) is cfg

    def test_storage_state_bounds(self):
        cfg = make_paper_config()
        StorageState(0.0).require_within(cfg)
        with pytest.raises(ValueError, match="outside"):
            StorageState(12.5).require_within(cfg)


class TestCondenseDynamics:
    def test_zero_flow_holds_state(self):
        base, gain = condense_dynamics(6.0, make_paper_config(n_slots=2))
        assert (base + gain @ np.zeros(2)).tolist() == [6.0, 6.0]

    def test_discharge_recurrence(self):
        base, gain = condense_dynamics(6.0, make_paper_config(n_slots=2))
        x = base + gain @ np.array([6.0, 6.0])
        assert x == pytest.approx([5.5, 5.0])

    def test_charging_accumulates(self):
        base, gain = condense_dynamics(0.0, make_paper_config(n_slots=3))
        x = base + gain @ np.array([-6.0, -6.0, -6.0])
        assert x == pytest.approx([0.5, 1.0, 1.5])


class TestBuildQp:
    def test_single_slot_blocks(self):
        cfg = make_paper_config(n_slots=1)
        built = build_qp(6.0, HorizonForecast([50.0], [0.0]), cfg)
        p = built.problem
        # Hand expansion of the cost: p_gen^2 + 5*(theta*p_sto)^2.
        assert p.H == pytest.approx(np.diag([2.0, 2.0 * 5.0 / 144.0]))
        assert p.f == pytest.approx([0.0, 0.0])
        assert p.A_eq.tolist() == [[1.0, 1.0]]
        assert p.b_eq.tolist() == [50.0]
        assert built.objective_offset == 0.0

    def test_horizon_dimensions(self):
        cfg = make_paper_config()
        built = build_qp(6.0, HorizonForecast(np.full(24, 50.0), np.zeros(24)), cfg)
        assert built.problem.n == 48
        assert built.problem.A_eq.shape == (24, 48)
        assert built.problem.A_ineq.shape == (48, 48)  # upper + lower SoC rows

    def test_free_soc_and_zero_beta_decouple(self):
        cfg = make_paper_config(n_slots=6, beta=0.0, x_min=-np.inf, x_max=np.inf,
                                x_ref=6.0)
        built = build_qp(6.0, HorizonForecast(np.full(6, 50.0), np.zeros(6)), cfg)
        assert built.problem.A_ineq.shape[0] == 0
        off_diag = built.problem.H - np.diag(np.diag(built.problem.H))
        assert np.max(np.abs(off_diag)) == 0.0

    def test_rejects_x0_outside_bounds(self):
        cfg = make_paper_config(n_slots=1)
        with pytest.raises(ValueError, match="outside"):
            build_qp(-0.5, HorizonForecast([50.0], [0.0]), cfg)

    def test_rejects_length_mismatch(self):
        cfg = make_paper_config(n_slots=2)
        with pytest.raises(ValueError, match="slots"):
            build_qp(6.0, HorizonForecast([50.0], [0.0]), cfg)

    def test_objective_consistency_random_schedules(self):
        # QP quadratic form plus the recorded constant equals the slot-wise
        # cost for arbitrary (not only feasible) schedules.
        rng = np.random.default_rng(11)
        for _ in range(10):
            n = int(rng.integers(1, 8))
            cfg = make_paper_config(
                n_slots=n, alpha=rng.uniform(0.1, 2.0, n),
                beta=rng.uniform(0.0, 8.0, n), gamma=rng.uniform(0.5, 2.0, n))
            x0 = rng.uniform(0.0, 12.0)
            fc = HorizonForecast(rng.uniform(-20, 60, n), np.zeros(n))
            built = build_qp(x0, fc, cfg)
            u = rng.normal(size=2 * n) * 10
            sched = ControlSchedule(p_gen=u[:n], p_sto=u[n:], x_traj=np.zeros(n))
            direct = evaluate_objective(sched, x0, cfg)
            via_qp = built.problem.objective(u) + built.objective_offset
            assert via_qp == pytest.approx(direct, rel=1e-9, abs=1e-9)


class TestEvaluateObjective:
    def test_zero_schedule_at_reference(self):
        cfg = make_paper_config(n_slots=4)
        sched = ControlSchedule(np.zeros(4), np.zeros(4), np.full(4, 6.0))
        assert evaluate_objective(sched, 6.0, cfg) == 0.0

    def test_single_slot_hand_value(self):
        cfg = make_paper_config(n_slots=1)
        sched = ControlSchedule(np.array([44.0]), np.array([6.0]), np.array([5.5]))
        # 44^2 + 5 * (5.5 - 6)^2
        assert evaluate_objective(sched, 6.0, cfg) == pytest.approx(1937.25)

    def test_pure_generation_cost(self):
        cfg = make_paper_config(n_slots=2)
        sched = ControlSchedule(np.array([50.0, 50.0]), np.zeros(2), np.full(2, 6.0))
        assert evaluate_objective(sched, 6.0, cfg) == pytest.approx(5000.0)


class TestExtractSchedule:
    def _solve(self, x0, fc, cfg):
        built = build_qp(x0, fc, cfg)
        return solve_qp(built.problem), built

    def test_single_slot_solution(self):
        cfg = make_paper_config(n_slots=1)
        sol, built = self._solve(6.0, HorizonForecast([50.0], [0.0]), cfg)
        sched = extract_schedule(sol, built)
        assert sched.p_gen == pytest.approx([44.0], abs=1e-7)
        assert sched.p_sto == pytest.approx([6.0], abs=1e-7)
        assert sched.x_traj == pytest.approx([5.5], abs=1e-8)

    def test_zero_net_demand_gives_zero_schedule(self):
        cfg = make_paper_config(n_slots=4)
        sol, built = self._solve(6.0, HorizonForecast(np.zeros(4), np.zeros(4)), cfg)
        sched = extract_schedule(sol, built)
        assert np.all(sched.p_gen == 0.0)
        assert np.all(sched.p_sto == 0.0)

    def test_discharges_toward_reference_from_above(self):
        cfg = make_paper_config(n_slots=2)
        sol, built = self._solve(7.0, HorizonForecast(np.zeros(2), np.zeros(2)), cfg)
        sched = extract_schedule(sol, built)
        assert np.all(sched.p_sto > 0.0)

    def test_rejects_non_optimal_solution(self):
        cfg = make_paper_config(n_slots=1)
        built = build_qp(6.0, HorizonForecast([1e7], [0.0]), cfg)
        sol = solve_qp(built.problem)
        assert sol.status == QpStatus.INFEASIBLE
        with pytest.raises(ValueError, match="infeasible"):
            extract_schedule(sol, built)


class TestHorizonProperties:
    def test_balance_exactness(self):
        rng = np.random.default_rng(21)
        cfg = make_paper_config(n_slots=12)
        for _ in range(5):
            fc = HorizonForecast(rng.uniform(0, 60, 12), rng.uniform(0, 5, 12))
            built = build_qp(rng.uniform(1, 11), fc, cfg)
            sched = extract_schedule(solve_qp(built.problem), built)
            err = np.abs(sched.p_gen + sched.p_sto - fc.net_demand)
            assert np.max(err) <= 1e-6

    def test_reference_fixed_point(self):
        for n in (1, 5, 24):
            cfg = make_paper_config(n_slots=n)
            built = build_qp(6.0, HorizonForecast(np.zeros(n), np.zeros(n)), cfg)
            sched = extract_schedule(solve_qp(built.problem), built)
            assert np.all(sched.p_gen == 0.0)
            assert np.all(sched.p_sto == 0.0)
            assert np.all(sched.x_traj == 6.0)

    def test_weight_scaling_leaves_argmin(self):
        # Both cost terms scaled by 7: the objective scales, the argmin
        # does not.  (Scaling gamma as well would square the factor on the
        # generation term and genuinely move the optimum.)
        cfg = make_paper_config(n_slots=8)
        scaled = make_paper_config(n_slots=8, alpha=7.0, beta=35.0, gamma=1.0)
        fc = HorizonForecast(np.linspace(30, 70, 8), np.zeros(8))
        a = extract_schedule(solve_qp(build_qp(3.0, fc, cfg).problem),
                             build_qp(3.0, fc, cfg))
        b = extract_schedule(solve_qp(build_qp(3.0, fc, scaled).problem),
                             build_qp(3.0, fc, scaled))
        assert np.allclose(a.p_sto, b.p_sto, atol=1e-8)
        assert np.allclose(a.p_gen, b.p_gen, atol=1e-8)

    def test_decoupling_without_soc_terms(self):
        # beta = 0 and free SoC: each slot reduces to clipping the net
        # demand onto the storage box.
        cfg = make_paper_config(n_slots=6, beta=0.0, x_min=-np.inf, x_max=np.inf)
        demand = np.array([50.0, -3.0, 4.0, 80.0, 0.0, -20.0])
        built = build_qp(6.0, HorizonForecast(demand, np.zeros(6)), cfg)
        sched = extract_schedule(solve_qp(built.problem), built)
        expected_ps = np.clip(demand, -6.0, 6.0)
        assert np.allclose(sched.p_sto, expected_ps, atol=1e-7)
        assert np.allclose(sched.p_gen, demand - expected_ps, atol=1e-7)
