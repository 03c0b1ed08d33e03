import numpy as np
import pytest

from bessmpc import ControllerConfig, QpProblem


def make_paper_config(n_slots=24, **overrides):
    """Reference controller setup: 12 MWh / 6 MW storage, 5-minute slots."""
    kw = dict(theta=1.0 / 12, n_slots=n_slots, alpha=1.0, beta=5.0, gamma=1.0,
              x_ref=6.0, pg_min=-1e6, pg_max=1e6, ps_min=-6.0, ps_max=6.0,
              x_min=0.0, x_max=12.0)
    kw.update(overrides)
    return ControllerConfig(**kw)


def random_feasible_qp(rng):
    """Small PD instance with finite boxes, feasible by construction.

    Feasibility comes from planting a point: equality right-hand sides hit
    it exactly, inequality ones leave non-negative slack (occasionally
    zero, so active-at-start cases occur too).

    Returns ``(problem, planted_point)``.
    """
    n = int(rng.integers(1, 5))
    m = rng.normal(size=(n, n))
    h = m.T @ m + np.eye(n) * (0.3 + rng.random())
    f = rng.normal(size=n) * 2.0
    lo = rng.uniform(-3.0, 0.0, size=n)
    hi = rng.uniform(0.2, 3.0, size=n)
    u_feas = rng.uniform(lo, hi)
    m_eq = int(rng.integers(0, min(3, n + 1)))
    a_eq = rng.normal(size=(m_eq, n)) if m_eq else None
    b_eq = (a_eq @ u_feas) if m_eq else None
    m_in = int(rng.integers(0, 3))
    a_in = rng.normal(size=(m_in, n)) if m_in else None
    b_in = (a_in @ u_feas + rng.uniform(0.0, 1.5, size=m_in)) if m_in else None
    problem = QpProblem(H=h, f=f, A_eq=a_eq, b_eq=b_eq, A_ineq=a_in, b_ineq=b_in,
                        u_min=lo, u_max=hi)
    return problem, u_feas


@pytest.fixture
def paper_config():
    return make_paper_config
