"""Receding-horizon battery dispatch: QP controller, simulator, scenarios."""

from ._kernels import BACKEND as KERNEL_BACKEND
from .horizon import (
    ControllerConfig,
    ControlSchedule,
    HorizonForecast,
    HorizonQp,
    StorageState,
    build_qp,
    condense_dynamics,
    evaluate_objective,
    extract_schedule,
)
from .oracle import solve_qp_oracle
from .qp import QpProblem, QpSolution, QpStatus, kkt_residual, solve_qp
from .scenarios import (
    GaussianPeakSpec,
    InsufficientCoverageError,
    NonMonotoneTimestampsError,
    Profile,
    ProfileError,
    ProfileParseError,
    gaussian_peak_profile,
    load_csv_profile,
    res_peak_profile,
)
from .sim import (
    InfeasibleStepError,
    SimulationResult,
    SocBoundViolation,
    apply_to_plant,
    compute_metrics,
    mpc_step,
    run_closed_loop,
)

__version__ = "0.1.0"

__all__ = [
    "KERNEL_BACKEND",
    "ControllerConfig",
    "ControlSchedule",
    "HorizonForecast",
    "HorizonQp",
    "StorageState",
    "build_qp",
    "condense_dynamics",
    "evaluate_objective",
    "extract_schedule",
    "solve_qp_oracle",
    "QpProblem",
    "QpSolution",
    "QpStatus",
    "kkt_residual",
    "solve_qp",
    "GaussianPeakSpec",
    "InsufficientCoverageError",
    "NonMonotoneTimestampsError",
    "Profile",
    "ProfileError",
    "ProfileParseError",
    "gaussian_peak_profile",
    "load_csv_profile",
    "res_peak_profile",
    "InfeasibleStepError",
    "SimulationResult",
    "SocBoundViolation",
    "apply_to_plant",
    "compute_metrics",
    "mpc_step",
    "run_closed_loop",
    "__version__",
]
