"""Builds the per-slot dispatch QP from state of charge, forecasts and config.

The decision vector stacks the plant and storage setpoints over the
horizon, ``u = (p_gen[0..N), p_sto[0..N))`` with positive ``p_sto``
meaning discharge.  State of charge is condensed out: substituting the
integrator ``x[t] = x0 - theta * sum(p_sto[:t+1])`` into the objective
leaves a dense lower-triangular coupling on the storage block and turns
the SoC bounds into inequality rows on ``p_sto``.
"""

import dataclasses
from dataclasses import dataclass

import numpy as np

from .qp import QpProblem, QpSolution, QpStatus

BALANCE_TOL_MW = 1e-6


def _weight_vector(value, n, name, minimum, strict):
    v = np.asarray(value, dtype=float)
    if v.ndim == 0:
        v = np.full(n, float(v))
    if v.shape != (n,):
        raise ValueError(f"{name} must be a scalar or a length-{n} vector, got shape {v.shape}")
    if strict and not np.all(v > minimum):
        raise ValueError(f"{name} must be > {minimum} in every slot")
    if not strict and not np.all(v >= minimum):
        raise ValueError(f"{name} must be >= {minimum} in every slot")
    return v


@dataclass
class ControllerConfig:
    """Weights, bounds and timing for the dispatch objective.

    ``theta`` is the slot length in hours (5 minutes -> 1/12 h; the slot
    energy of a 6 MW flow is then 0.5 MWh, which keeps MW and MWh
    consistent in the SoC recursion).  ``alpha``, ``beta`` and ``gamma``
    accept scalars or per-slot vectors of length ``n_slots``.
    """

    theta: float
    n_slots: int
    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    x_ref: float
    pg_min: float
    pg_max: float
    ps_min: float
    ps_max: float
    x_min: float
    x_max: float

    def __post_init__(self):
        if self.theta <= 0:
            raise ValueError("theta must be positive (hours per slot)")
        self.n_slots = int(self.n_slots)
        if self.n_slots < 1:
            raise ValueError("n_slots must be at least 1")
        self.alpha = _weight_vector(self.alpha, self.n_slots, "alpha", 0.0, strict=False)
        self.beta = _weight_vector(self.beta, self.n_slots, "beta", 0.0, strict=False)
        self.gamma = _weight_vector(self.gamma, self.n_slots, "gamma", 0.0, strict=True)
        if self.pg_min > self.pg_max:
            raise ValueError("pg_min must not exceed pg_max")
        if self.ps_min > self.ps_max:
            raise ValueError("ps_min must not exceed ps_max")
        if not (self.x_min <= self.x_ref <= self.x_max):
            raise ValueError("x_ref must lie within [x_min, x_max]")

    def truncated(self, m: int) -> "ControllerConfig":
        """Copy with the horizon shortened to ``m`` slots (shrinking window)."""
        if m == self.n_slots:
            return self
        if not 1 <= m <= self.n_slots:
            raise ValueError(f"cannot truncate horizon {self.n_slots} to {m}")
        return dataclasses.replace(self, n_slots=m, alpha=self.alpha[:m],
                                   beta=self.beta[:m], gamma=self.gamma[:m])


@dataclass
class HorizonForecast:
    """Foreseen bus demand and aggregated RES output over one window, MW."""

    p_load: np.ndarray
    p_res: np.ndarray

    def __post_init__(self):
        self.p_load = np.atleast_1d(np.asarray(self.p_load, dtype=float))
        self.p_res = np.atleast_1d(np.asarray(self.p_res, dtype=float))
        if self.p_load.shape != self.p_res.shape or self.p_load.ndim != 1:
            raise ValueError("p_load and p_res must be 1-d vectors of equal length")
        if np.any(self.p_res < 0):
            raise ValueError("p_res must be non-negative")

    @property
    def n_slots(self) -> int:
        return self.p_load.shape[0]

    @property
    def net_demand(self) -> np.ndarray:
        return self.p_load - self.p_res


@dataclass
class StorageState:
    """Battery state of charge, MWh."""

    x: float

    def require_within(self, cfg: ControllerConfig):
        if not (cfg.x_min <= self.x <= cfg.x_max):
            raise ValueError(
                f"state of charge {self.x} MWh outside [{cfg.x_min}, {cfg.x_max}] MWh")


@dataclass
class ControlSchedule:
    """Open-loop optimal plan over one horizon window."""

    p_gen: np.ndarray
    p_sto: np.ndarray
    x_traj: np.ndarray


@dataclass
class HorizonQp:
    """Standard-form QP plus the bookkeeping needed to interpret it.

    ``objective_offset`` is the control-independent constant dropped when
    the SoC deviation term is expanded, so that the full dispatch cost
    equals ``qp objective + objective_offset``.
    """

    problem: QpProblem
    objective_offset: float
    x0: float
    cfg: ControllerConfig
    forecast: HorizonForecast


def condense_dynamics(x0: float, cfg: ControllerConfig):
    """Affine map from storage flows to the SoC trajectory.

    Returns ``(base, gain)`` with ``x_traj = base + gain @ p_sto``; the
    gain is the negatively scaled all-ones lower triangle, so discharging
    (positive flow) lowers the state of charge.
    """
    n = cfg.n_slots
    base = np.full(n, float(x0))
    gain = -cfg.theta * np.tril(np.ones((n, n)))
    return base, gain


def build_qp(x0: float, fc: HorizonForecast, cfg: ControllerConfig) -> HorizonQp:
    """Assemble the dispatch QP for one horizon window.

    Decision vector ``u = (p_gen, p_sto)``, n = 2N.  Per-slot power
    balance becomes the equality block, SoC bounds become inequality rows
    through the condensation map, and the power limits form the box.
    Raises ValueError when the forecast length does not match the config
    or when ``x0`` falls outside the SoC bounds (a data error, since the
    bounds only constrain slots inside the horizon).
    """
    if fc.n_slots != cfg.n_slots:
        raise ValueError(f"forecast has {fc.n_slots} slots, config expects {cfg.n_slots}")
    StorageState(x0).require_within(cfg)

    n = cfg.n_slots
    base, gain = condense_dynamics(x0, cfg)
    ag = cfg.alpha * cfg.gamma
    dev = x0 - cfg.x_ref

    h = np.zeros((2 * n, 2 * n))
    h[:n, :n] = np.diag(2.0 * ag)
    h[n:, n:] = 2.0 * gain.T @ np.diag(cfg.beta) @ gain

    f = np.zeros(2 * n)
    f[n:] = 2.0 * dev * (gain.T @ cfg.beta)

    a_eq = np.hstack([np.eye(n), np.eye(n)])
    b_eq = fc.net_demand.copy()

    # SoC rows: upper bound block first, then lower; rows exist only for
    # finite bounds so that beta = 0 with free SoC stays a pure box QP.
    rows = []
    rhs = []
    if np.isfinite(cfg.x_max):
        rows.append(np.hstack([np.zeros((n, n)), gain]))
        rhs.append(np.full(n, cfg.x_max - x0))
    if np.isfinite(cfg.x_min):
        rows.append(np.hstack([np.zeros((n, n)), -gain]))
        rhs.append(np.full(n, x0 - cfg.x_min))
    a_ineq = np.vstack(rows) if rows else None
    b_ineq = np.concatenate(rhs) if rhs else None

    u_min = np.concatenate([np.full(n, cfg.pg_min), np.full(n, cfg.ps_min)])
    u_max = np.concatenate([np.full(n, cfg.pg_max), np.full(n, cfg.ps_max)])

    problem = QpProblem(H=h, f=f, A_eq=a_eq, b_eq=b_eq,
                        A_ineq=a_ineq, b_ineq=b_ineq, u_min=u_min, u_max=u_max)
    offset = float(np.sum(cfg.beta) * dev * dev)
    return HorizonQp(problem=problem, objective_offset=offset, x0=float(x0),
                     cfg=cfg, forecast=fc)


def evaluate_objective(sched: ControlSchedule, x0: float, cfg: ControllerConfig) -> float:
    """Dispatch cost of a schedule, recomputed slot by slot.

    Independent scalar evaluation of the cost (generation term plus SoC
    deviation term with the SoC integrated step by step); used to
    cross-check the quadratic form assembled by :func:`build_qp`.
    """
    n = cfg.n_slots
    if sched.p_gen.shape != (n,) or sched.p_sto.shape != (n,):
        raise ValueError("schedule length does not match the config horizon")
    total = 0.0
    x = float(x0)
    for t in range(n):
        total += cfg.alpha[t] * cfg.gamma[t] * sched.p_gen[t] ** 2
        x -= cfg.theta * sched.p_sto[t]
        total += cfg.beta[t] * (x - cfg.x_ref) ** 2
    return total


def extract_schedule(sol: QpSolution, built: HorizonQp) -> ControlSchedule:
    """Split a solved QP into plant/storage schedules plus the SoC path.

    Requires an optimal solution; verifies the per-slot balance and box
    bounds before returning, since a violation here means a solver bug
    rather than bad input.
    """
    if sol.status != QpStatus.OPTIMAL:
        raise ValueError(f"cannot extract a schedule from a {sol.status.value} solution")
    n = built.cfg.n_slots
    p_gen = sol.u_star[:n].copy()
    p_sto = sol.u_star[n:].copy()
    base, gain = condense_dynamics(built.x0, built.cfg)
    x_traj = base + gain @ p_sto

    cfg = built.cfg
    balance_err = np.max(np.abs(p_gen + p_sto - built.forecast.net_demand))
    if balance_err > BALANCE_TOL_MW:
        raise RuntimeError(f"balance violated by {balance_err:.3e} MW in an optimal solution")
    tol = BALANCE_TOL_MW
    if (np.any(p_gen < cfg.pg_min - tol) or np.any(p_gen > cfg.pg_max + tol)
            or np.any(p_sto < cfg.ps_min - tol) or np.any(p_sto > cfg.ps_max + tol)
            or np.any(x_traj < cfg.x_min - tol) or np.any(x_traj > cfg.x_max + tol)):
        raise RuntimeError("bound violated in an optimal solution")
    return ControlSchedule(p_gen=p_gen, p_sto=p_sto, x_traj=x_traj)
