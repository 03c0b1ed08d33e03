"""Closed-loop receding-horizon simulation.

Each slot: measure the state of charge, build and solve the horizon QP
against the forecast window, apply the first control to the storage plant
(the same integrator used for prediction; no plant/model mismatch), then
advance.  Windows that would run past the end of the scenario shrink to
the remaining data.
"""

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .horizon import (
    ControlSchedule,
    ControllerConfig,
    HorizonForecast,
    StorageState,
    build_qp,
    evaluate_objective,
    extract_schedule,
)
from .qp import QpStatus, solve_qp
from .scenarios import Profile

SOC_TOL_MWH = 1e-9
BALANCE_TOL_MW = 1e-6

# forecast_policy(values, start, length) -> window of `length` entries.
ForecastPolicy = Callable[[np.ndarray, int, int], np.ndarray]


class SocBoundViolation(RuntimeError):
    """The applied storage flow would push the SoC outside its bounds."""


class InfeasibleStepError(RuntimeError):
    """A horizon QP had no feasible dispatch."""

    def __init__(self, step: int, detail: str):
        super().__init__(f"infeasible dispatch at step {step}: {detail}")
        self.step = step
        self.detail = detail


@dataclass
class SimulationResult:
    """Per-slot closed-loop trajectories and timing."""

    t: np.ndarray                  # slot indices
    p_load: np.ndarray             # MW
    p_res: np.ndarray              # MW
    p_gen: np.ndarray              # MW
    p_sto: np.ndarray              # MW, positive = discharge
    x: np.ndarray                  # MWh, post-slot state of charge
    solve_times: np.ndarray        # seconds per iteration (build+solve+extract)
    objective_per_step: np.ndarray
    x_init: float = 0.0
    x_ref: float = 0.0
    slot_hours: float = 1.0
    start_hour: float = 0.0

    @property
    def n_steps(self) -> int:
        return self.t.shape[0]

    def times_h(self) -> np.ndarray:
        return self.start_hour + self.slot_hours * self.t


def perfect_foresight(values: np.ndarray, start: int, length: int) -> np.ndarray:
    """Default forecast policy: the realized profile slice itself."""
    return values[start:start + length]


def apply_to_plant(x: float, p_sto: float, cfg: ControllerConfig) -> float:
    """Integrate one slot of storage flow; asserts the SoC bounds.

    Bounds are checked, not clamped: the controller constrains the
    predicted trajectory, so a violation here is a controller bug and is
    surfaced as :class:`SocBoundViolation`.
    """
    x_new = x - cfg.theta * p_sto
    if x_new < cfg.x_min - SOC_TOL_MWH or x_new > cfg.x_max + SOC_TOL_MWH:
        raise SocBoundViolation(
            f"flow {p_sto} MW drives SoC to {x_new} MWh, outside "
            f"[{cfg.x_min}, {cfg.x_max}] MWh")
    # Snap sub-tolerance float dust onto the bound (saturating controls
    # land exactly on it in exact arithmetic).
    return float(min(max(x_new, cfg.x_min), cfg.x_max))


def mpc_step(x0: float, window: HorizonForecast, cfg: ControllerConfig,
             tol: float = 1e-6):
    """One receding-horizon iteration: solve the window, return the plan.

    Returns ``(p_gen0, p_sto0, schedule)``; the loop applies only the
    first-slot controls and re-optimizes at the next step, the rest of
    the schedule is exposed for logging.
    """
    if window.n_slots != cfg.n_slots:
        raise ValueError(f"window has {window.n_slots} slots, config expects {cfg.n_slots}")
    built = build_qp(x0, window, cfg)
    sol = solve_qp(built.problem, tol=tol)
    if sol.status == QpStatus.INFEASIBLE:
        raise InfeasibleStepError(0, sol.message)
    if sol.status != QpStatus.OPTIMAL:
        raise RuntimeError(f"QP not certified: {sol.message}")
    sched = extract_schedule(sol, built)
    return float(sched.p_gen[0]), float(sched.p_sto[0]), sched


def run_closed_loop(load: Profile, res: Profile | None, cfg: ControllerConfig,
                    x_init: float, n_steps: int | None = None,
                    forecast_policy: ForecastPolicy | None = None) -> SimulationResult:
    """Simulate the controller against full-length scenario profiles.

    ``load`` and ``res`` must be sampled at ``cfg.theta`` (``res=None``
    means no renewable generation).  Windows are perfect-foresight slices
    of the scenario by default; pass ``forecast_policy`` to inject errors.
    Near the end of the data the horizon shrinks to the remaining slots.
    Raises :class:`InfeasibleStepError` with the step index if any window
    has no feasible dispatch.
    """
    if abs(load.slot_hours - cfg.theta) > 1e-12 * max(1.0, cfg.theta):
        raise ValueError(f"load profile slot {load.slot_hours} h does not match theta {cfg.theta} h")
    load_values = load.values
    if res is None:
        res_values = np.zeros_like(load_values)
    else:
        if abs(res.slot_hours - cfg.theta) > 1e-12 * max(1.0, cfg.theta):
            raise ValueError(f"res profile slot {res.slot_hours} h does not match theta {cfg.theta} h")
        if res.values.shape != load_values.shape:
            raise ValueError("load and res profiles must have equal length")
        res_values = res.values

    total = load_values.shape[0]
    if n_steps is None:
        n_steps = total
    if not 1 <= n_steps <= total:
        raise ValueError(f"n_steps {n_steps} outside scenario length {total}")
    StorageState(x_init).require_within(cfg)
    policy = perfect_foresight if forecast_policy is None else forecast_policy

    p_gen = np.zeros(n_steps)
    p_sto = np.zeros(n_steps)
    x_log = np.zeros(n_steps)
    solve_times = np.zeros(n_steps)
    objectives = np.zeros(n_steps)

    storage_pinned_off = cfg.ps_min == 0.0 and cfg.ps_max == 0.0

    x = float(x_init)
    for k in range(n_steps):
        m = min(cfg.n_slots, total - k)
        cfg_k = cfg.truncated(m)
        window = HorizonForecast(policy(load_values, k, m), policy(res_values, k, m))

        t0 = time.perf_counter()
        if storage_pinned_off:
            # With the storage box pinned at zero the horizon problem is
            # fully determined; run it directly so the degenerate case
            # stays bit-exact.
            sched = ControlSchedule(p_gen=window.net_demand.copy(),
                                    p_sto=np.zeros(m),
                                    x_traj=np.full(m, x))
            pg0, ps0 = float(sched.p_gen[0]), 0.0
            if np.any(sched.p_gen < cfg.pg_min) or np.any(sched.p_gen > cfg.pg_max):
                raise InfeasibleStepError(k, "net demand outside plant bounds with storage disabled")
        else:
            try:
                pg0, ps0, sched = mpc_step(x, window, cfg_k)
            except InfeasibleStepError as err:
                raise InfeasibleStepError(k, err.detail) from None
        solve_times[k] = time.perf_counter() - t0
        objectives[k] = evaluate_objective(sched, x, cfg_k)

        net = load_values[k] - res_values[k]
        if abs(pg0 + ps0 - net) > BALANCE_TOL_MW:
            raise RuntimeError(
                f"balance violated by {pg0 + ps0 - net:.3e} MW at step {k}")

        x = apply_to_plant(x, ps0, cfg)
        p_gen[k] = pg0
        p_sto[k] = ps0
        x_log[k] = x

    return SimulationResult(
        t=np.arange(n_steps), p_load=load_values[:n_steps].copy(),
        p_res=res_values[:n_steps].copy(), p_gen=p_gen, p_sto=p_sto, x=x_log,
        solve_times=solve_times, objective_per_step=objectives,
        x_init=float(x_init), x_ref=float(cfg.x_ref), slot_hours=cfg.theta,
        start_hour=load.start_hour)


def _max_abs_ramp(v: np.ndarray) -> float:
    return float(np.max(np.abs(np.diff(v)))) if v.shape[0] > 1 else 0.0


def compute_metrics(r: SimulationResult, baseline: SimulationResult) -> dict[str, float]:
    """Headline numbers for a run against its no-storage baseline.

    Peak plant power with and without storage, the peak reduction in
    percent, worst one-slot plant ramp for both, RMS and max SoC
    deviation from the reference and solve-time statistics.
    """
    if r.n_steps != baseline.n_steps:
        raise ValueError("run and baseline must have equal length")
    peak = float(np.max(r.p_gen))
    peak_base = float(np.max(baseline.p_gen))
    reduction = 100.0 * (peak_base - peak) / peak_base if peak_base > 0 else 0.0
    dev = r.x - r.x_ref
    return {
        "peak_p_gen_mw": peak,
        "baseline_peak_p_gen_mw": peak_base,
        "peak_reduction_pct": reduction,
        "max_ramp_p_gen_mw": _max_abs_ramp(r.p_gen),
        "baseline_max_ramp_p_gen_mw": _max_abs_ramp(baseline.p_gen),
        "soc_rms_dev_mwh": float(np.sqrt(np.mean(dev ** 2))),
        "soc_max_dev_mwh": float(np.max(np.abs(dev))),
        "solve_time_mean_ms": float(np.mean(r.solve_times) * 1e3),
        "solve_time_max_ms": float(np.max(r.solve_times) * 1e3),
    }
