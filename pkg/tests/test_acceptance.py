"""Acceptance suite: one test per headline criterion, stated tolerances.

Run with ``pytest -s tests/test_acceptance.py`` to see one PASS line per
criterion.  Expensive closed-loop runs are shared through module-scoped
fixtures; the kernel JIT is warmed up before anything is timed.
"""

import dataclasses
import time

import numpy as np
import pytest

from bessmpc.cli import preset
from bessmpc.horizon import HorizonForecast, build_qp
from bessmpc.oracle import solve_qp_oracle
from bessmpc.qp import QpStatus, kkt_residual, solve_qp
from bessmpc.scenarios import Profile
from bessmpc.sim import run_closed_loop

from conftest import make_paper_config, random_feasible_qp

SLOT = 1.0 / 12


def materialized(rc):
    return rc.scenario.materialize(rc.controller.theta, rc.duration_slots,
                                   rc.controller.n_slots)


def run_preset(name, with_baseline=False, **overrides):
    rc = preset(name, overrides)
    load, res = materialized(rc)
    result = run_closed_loop(load, res, rc.controller, rc.x_init_mwh,
                             n_steps=rc.duration_slots)
    if not with_baseline:
        return result
    base_cfg = dataclasses.replace(rc.controller, ps_min=0.0, ps_max=0.0)
    baseline = run_closed_loop(load, res, base_cfg, rc.x_init_mwh,
                               n_steps=rc.duration_slots)
    return result, baseline


@pytest.fixture(scope="module", autouse=True)
def warm_kernels():
    # First call JIT-compiles the kernels; keep that out of timed sections.
    cfg = make_paper_config(n_slots=24)
    load = Profile(0.0, SLOT, np.full(26, 50.0))
    run_closed_loop(load, None, cfg, x_init=6.0, n_steps=2)


@pytest.fixture(scope="module")
def tc1_flat_timed():
    t0 = time.perf_counter()
    result = run_preset("testcase1", amplitude=0.0)
    return result, time.perf_counter() - t0


@pytest.fixture(scope="module")
def tc1_by_amplitude():
    return {amp: run_preset("testcase1", amplitude=amp)
            for amp in (0.1, 0.2, 0.3, 0.4, 0.5)}


@pytest.fixture(scope="module")
def tc1_by_horizon():
    return {hor: run_preset("testcase1", amplitude=0.2, horizon=hor)
            for hor in (1, 12, 24)}


@pytest.fixture(scope="module")
def tc2_by_amplitude():
    return {amp: run_preset("testcase2", amplitude=amp)
            for amp in (0.25, 0.5, 1.0)}


@pytest.fixture(scope="module")
def tc3_with_baseline():
    return run_preset("testcase3", with_baseline=True)


def test_criterion_1_steady_state_soc_and_runtime(tc1_flat_timed):
    result, elapsed = tc1_flat_timed
    soc_at_3h = result.x[35]  # post-slot SoC; slot 35 ends at t = 3.0 h
    assert soc_at_3h == pytest.approx(5.767, abs=0.15)
    assert elapsed < 5.0
    print(f"\nACCEPTANCE 1 PASS: steady-state SoC {soc_at_3h:.3f} MWh "
          f"(5.767 +/- 0.15), 24 h run in {elapsed:.2f} s (< 5 s)")


def test_criterion_2_peak_mitigation(tc1_by_amplitude):
    # Assessed over the 3-7 pm peak window; the cold-start charge at hour 0
    # intentionally raises plant power above base demand and is test 1's
    # studied transient, not its mitigation claim.
    lines = []
    for amp, r in sorted(tc1_by_amplitude.items()):
        t = r.times_h()
        window = np.where((t >= 15.0) & (t <= 19.0))[0]
        peak_pg = np.max(r.p_gen[window])
        peak_demand = np.max(r.p_load[window])
        ramp_pg = np.max(np.abs(np.diff(r.p_gen[window])))
        ramp_demand = np.max(np.abs(np.diff(r.p_load[window])))
        assert peak_pg < peak_demand
        assert ramp_pg < ramp_demand
        lines.append(f"{int(amp*100)}%: peak {peak_pg:.2f}<{peak_demand:.2f}, "
                     f"ramp {ramp_pg:.3f}<{ramp_demand:.3f}")
    print("\nACCEPTANCE 2 PASS: " + "; ".join(lines))


def test_criterion_3_horizon_study(tc1_by_horizon):
    peaks = {hor: float(np.max(r.p_gen)) for hor, r in tc1_by_horizon.items()}
    devs = {hor: float(np.max(np.abs(r.x - r.x_ref)))
            for hor, r in tc1_by_horizon.items()}
    for longer, shorter in ((24, 12), (12, 1)):
        assert (peaks[longer] <= peaks[shorter] - 1e-6
                or peaks[longer] == peaks[shorter])
    assert devs[1] > devs[12]
    assert devs[1] > devs[24]
    print(f"\nACCEPTANCE 3 PASS: peak p_gen {peaks[1]:.2f} >= {peaks[12]:.2f} >= "
          f"{peaks[24]:.2f} MW; max SoC deviation largest for 1-slot horizon "
          f"({devs[1]:.2f} vs {devs[12]:.2f}/{devs[24]:.2f} MWh)")


def test_criterion_4_res_absorption(tc2_by_amplitude):
    lines = []
    for amp, r in sorted(tc2_by_amplitude.items()):
        t = r.times_h()
        peak_slot = int(np.argmax(r.p_res))
        deepest_charge_slot = int(np.argmin(r.p_sto))
        assert abs(deepest_charge_slot - peak_slot) <= 2
        window = (t >= 16.0) & (t <= 18.0)
        var_pg = np.max(r.p_gen[window]) - np.min(r.p_gen[window])
        var_res = np.max(r.p_res[window]) - np.min(r.p_res[window])
        assert var_pg < var_res
        lines.append(f"{int(amp*100)}%: absorb@{deepest_charge_slot} "
                     f"(peak {peak_slot}), var {var_pg:.2f}<{var_res:.2f}")
    print("\nACCEPTANCE 4 PASS: " + "; ".join(lines))


def test_criterion_5_solver_matches_oracle_and_certifies():
    rng = np.random.default_rng(20240512)
    worst_u = 0.0
    worst_obj = 0.0
    for _ in range(200):
        problem, _ = random_feasible_qp(rng)
        sol = solve_qp(problem)
        ora = solve_qp_oracle(problem)
        assert sol.status == QpStatus.OPTIMAL
        assert ora.status == QpStatus.OPTIMAL
        du = float(np.max(np.abs(sol.u_star - ora.u_star)))
        dobj = abs(sol.objective - ora.objective)
        assert du <= 1e-4
        assert dobj <= 1e-6
        worst_u = max(worst_u, du)
        worst_obj = max(worst_obj, dobj)

    # Artifact-built horizon QPs: certified KKT residual at 1e-6,
    # re-verified through the independent residual evaluation.
    checked = 0
    for name, amp in (("testcase1", 0.5), ("testcase2", 1.0), ("testcase3", None)):
        overrides = {} if amp is None else {"amplitude": amp}
        rc = preset(name, overrides)
        load, res = materialized(rc)
        for start in (0, 120, 204):
            window = HorizonForecast(load.values[start:start + 24],
                                     res.values[start:start + 24])
            for x0 in (0.0, 3.0, 6.0, 11.5):
                built = build_qp(x0, window, rc.controller)
                sol = solve_qp(built.problem, tol=1e-6)
                assert sol.status == QpStatus.OPTIMAL
                recheck = kkt_residual(built.problem, sol.u_star, sol.lam_eq,
                                       sol.mu_ineq, sol.mu_lb, sol.mu_ub)
                assert recheck <= 1e-6
                checked += 1
    print(f"\nACCEPTANCE 5 PASS: 200 random QPs within 1e-4/1e-6 of oracle "
          f"(worst {worst_u:.2e}/{worst_obj:.2e}); {checked} horizon QPs "
          f"certified at 1e-6")


def test_criterion_6_iteration_time(tc1_flat_timed):
    result, _ = tc1_flat_timed
    mean_s = float(np.mean(result.solve_times))
    assert mean_s <= 0.064
    print(f"\nACCEPTANCE 6 PASS: mean iteration (build+solve+extract) "
          f"{mean_s * 1e3:.2f} ms <= 64 ms for the 24-slot horizon")


def test_criterion_7_invariant_suite(tc1_flat_timed, tc1_by_amplitude,
                                     tc1_by_horizon, tc2_by_amplitude,
                                     tc3_with_baseline):
    runs = [tc1_flat_timed[0]]
    runs += list(tc1_by_amplitude.values())
    runs += list(tc1_by_horizon.values())
    runs += list(tc2_by_amplitude.values())
    runs += list(tc3_with_baseline)
    cfg = preset("testcase1").controller
    for r in runs:
        recursion = r.x_init - SLOT * np.cumsum(r.p_sto)
        assert np.max(np.abs(r.x - recursion)) <= 1e-9
        assert np.max(np.abs(r.p_gen + r.p_sto - (r.p_load - r.p_res))) <= 1e-6
        assert np.all(r.p_sto >= -6.0 - 1e-9) and np.all(r.p_sto <= 6.0 + 1e-9)
        assert np.all(r.x >= cfg.x_min - 1e-9) and np.all(r.x <= cfg.x_max + 1e-9)
        assert np.all(r.p_gen >= cfg.pg_min) and np.all(r.p_gen <= cfg.pg_max)

    # Equilibrium: zero net demand from the reference never moves.
    eq_cfg = make_paper_config(n_slots=24)
    eq = run_closed_loop(Profile(0.0, SLOT, np.zeros(72)), None, eq_cfg, x_init=6.0)
    assert np.all(eq.p_gen == 0.0) and np.all(eq.p_sto == 0.0) and np.all(eq.x == 6.0)

    # No-storage degeneration is exact.
    ns_cfg = make_paper_config(n_slots=24, ps_min=0.0, ps_max=0.0)
    load = Profile(0.0, SLOT, np.linspace(30.0, 60.0, 72))
    ns = run_closed_loop(load, None, ns_cfg, x_init=6.0)
    assert np.array_equal(ns.p_gen, load.values[:72])
    assert np.all(ns.x == 6.0)
    print(f"\nACCEPTANCE 7 PASS: balance/SoC-recursion/bounds hold on "
          f"{len(runs)} closed-loop runs; equilibrium and no-storage "
          f"degeneration exact")


def test_criterion_8_realistic_day_smoothing(tc3_with_baseline):
    result, baseline = tc3_with_baseline
    ramp = float(np.max(np.abs(np.diff(result.p_gen))))
    ramp_base = float(np.max(np.abs(np.diff(baseline.p_gen))))
    assert ramp < ramp_base
    end_gap = abs(result.x[-1] - result.x_ref)
    assert end_gap <= 0.5
    print(f"\nACCEPTANCE 8 PASS: max p_gen ramp {ramp:.3f} < baseline "
          f"{ramp_base:.3f} MW; end-of-day SoC within {end_gap:.3f} MWh "
          f"of reference (<= 0.5)")
