"""Dense convex QP solver with equality, inequality and box constraints.

Problems are of the form::

    min  0.5 u' H u + f' u
    s.t. A_eq u  = b_eq
         A_ineq u <= b_ineq
         u_min <= u <= u_max

H must be positive definite on the null space of the equality rows (it is
outright positive definite for every problem this package constructs).
``solve_qp`` runs a two-phase primal active-set method on top of the
kernels in :mod:`bessmpc._kernels` and certifies the result through
:func:`kkt_residual`, which is an independent numpy implementation of the
first-order optimality checks.
"""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import _kernels


class QpStatus(Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    ITERATION_LIMIT = "iteration_limit"


def _as_matrix(a, n, name):
    if a is None:
        return np.zeros((0, n))
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a.reshape(1, -1)
    if a.ndim != 2 or a.shape[1] != n:
        raise ValueError(f"{name} must be a matrix with {n} columns, got shape {a.shape}")
    return np.ascontiguousarray(a)


def _as_vector(v, m, name):
    if v is None:
        return np.zeros(0)
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if v.shape != (m,):
        raise ValueError(f"{name} must have length {m}, got shape {v.shape}")
    return np.ascontiguousarray(v)


@dataclass
class QpProblem:
    """Standard-form dense QP data.  Missing constraint blocks may be None."""

    H: np.ndarray
    f: np.ndarray
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    A_ineq: np.ndarray | None = None
    b_ineq: np.ndarray | None = None
    u_min: np.ndarray | None = None
    u_max: np.ndarray | None = None

    def __post_init__(self):
        self.f = np.ascontiguousarray(np.atleast_1d(np.asarray(self.f, dtype=float)))
        n = self.f.shape[0]
        self.H = np.ascontiguousarray(np.asarray(self.H, dtype=float).reshape(n, n))
        self.A_eq = _as_matrix(self.A_eq, n, "A_eq")
        self.b_eq = _as_vector(self.b_eq, self.A_eq.shape[0], "b_eq")
        self.A_ineq = _as_matrix(self.A_ineq, n, "A_ineq")
        self.b_ineq = _as_vector(self.b_ineq, self.A_ineq.shape[0], "b_ineq")
        self.u_min = (np.full(n, -np.inf) if self.u_min is None
                      else np.ascontiguousarray(np.asarray(self.u_min, dtype=float).reshape(n)))
        self.u_max = (np.full(n, np.inf) if self.u_max is None
                      else np.ascontiguousarray(np.asarray(self.u_max, dtype=float).reshape(n)))

    @property
    def n(self) -> int:
        return self.f.shape[0]

    def validate(self):
        """Raise ValueError when the problem data violates its invariants."""
        if not np.all(np.isfinite(self.H)) or not np.all(np.isfinite(self.f)):
            raise ValueError("H and f must be finite")
        sym_err = np.max(np.abs(self.H - self.H.T)) if self.n else 0.0
        if sym_err > 1e-9 * (1.0 + np.max(np.abs(self.H))):
            raise ValueError(f"H must be symmetric (asymmetry {sym_err:.3e})")
        if not np.all(np.isfinite(self.A_eq)) or not np.all(np.isfinite(self.b_eq)):
            raise ValueError("equality constraint data must be finite")
        if not np.all(np.isfinite(self.A_ineq)):
            raise ValueError("A_ineq must be finite")
        if np.any(self.u_min > self.u_max):
            raise ValueError("u_min must not exceed u_max")
        if np.any(np.isnan(self.u_min)) or np.any(np.isnan(self.u_max)):
            raise ValueError("bounds must not be NaN")

    def objective(self, u) -> float:
        u = np.asarray(u, dtype=float)
        return float(0.5 * u @ self.H @ u + self.f @ u)


@dataclass
class QpSolution:
    u_star: np.ndarray
    objective: float
    kkt_residual: float
    status: QpStatus
    lam_eq: np.ndarray = field(default_factory=lambda: np.zeros(0))
    mu_ineq: np.ndarray = field(default_factory=lambda: np.zeros(0))
    mu_lb: np.ndarray = field(default_factory=lambda: np.zeros(0))
    mu_ub: np.ndarray = field(default_factory=lambda: np.zeros(0))
    iterations: int = 0
    message: str = ""


def kkt_residual(p: QpProblem, u, lam_eq=None, mu_ineq=None, mu_lb=None, mu_ub=None) -> float:
    """Infinity norm of the first-order optimality violations at ``u``.

    Covers stationarity of the Lagrangian, primal feasibility of all
    constraint families, complementary slackness products and multiplier
    sign violations.  Omitted multipliers default to zero.
    """
    n = p.n
    u = np.asarray(u, dtype=float).reshape(n)
    lam_eq = np.zeros(p.A_eq.shape[0]) if lam_eq is None else np.asarray(lam_eq, dtype=float)
    mu_ineq = np.zeros(p.A_ineq.shape[0]) if mu_ineq is None else np.asarray(mu_ineq, dtype=float)
    mu_lb = np.zeros(n) if mu_lb is None else np.asarray(mu_lb, dtype=float)
    mu_ub = np.zeros(n) if mu_ub is None else np.asarray(mu_ub, dtype=float)

    parts = [0.0]

    stat = p.H @ u + p.f + p.A_eq.T @ lam_eq + p.A_ineq.T @ mu_ineq + mu_ub - mu_lb
    if stat.size:
        parts.append(np.max(np.abs(stat)))

    if p.b_eq.size:
        parts.append(np.max(np.abs(p.A_eq @ u - p.b_eq)))

    s_in = p.A_ineq @ u - p.b_ineq
    finite_in = np.isfinite(p.b_ineq)
    if s_in.size:
        s_fin = np.where(finite_in, s_in, 0.0)
        parts.append(np.max(np.maximum(s_fin, 0.0)))
        # A multiplier on a vacuous (infinite-rhs) row is itself a violation.
        comp = np.abs(mu_ineq * s_fin) + np.where(finite_in, 0.0, np.abs(mu_ineq))
        parts.append(np.max(comp))

    fin_lo = np.isfinite(p.u_min)
    fin_hi = np.isfinite(p.u_max)
    lo = np.where(fin_lo, p.u_min - u, 0.0)
    hi = np.where(fin_hi, u - p.u_max, 0.0)
    if n:
        parts.append(np.max(np.maximum(lo, 0.0)))
        parts.append(np.max(np.maximum(hi, 0.0)))
        parts.append(np.max(np.abs(mu_lb * lo) + np.where(fin_lo, 0.0, np.abs(mu_lb))))
        parts.append(np.max(np.abs(mu_ub * hi) + np.where(fin_hi, 0.0, np.abs(mu_ub))))

    for mu in (mu_ineq, mu_lb, mu_ub):
        if mu.size:
            parts.append(np.max(np.maximum(-mu, 0.0)))

    return float(max(parts))


def _normalize_rows(a, b):
    """Scale each row of (a, b) to unit infinity norm; returns the scales."""
    scales = np.ones(a.shape[0])
    for i in range(a.shape[0]):
        c = np.max(np.abs(a[i]))
        if c > 0:
            a[i] /= c
            if np.isfinite(b[i]):
                b[i] /= c
            scales[i] = c
    return scales


def _infeasibility_report(p: QpProblem, u) -> tuple[float, str]:
    """Largest constraint violation at ``u`` and a human-readable culprit."""
    worst = 0.0
    label = "none"
    if p.b_eq.size:
        r = np.abs(p.A_eq @ u - p.b_eq)
        i = int(np.argmax(r))
        if r[i] > worst:
            worst, label = float(r[i]), f"equality row {i}"
    if p.b_ineq.size:
        s = p.A_ineq @ u - p.b_ineq
        s = np.where(np.isfinite(p.b_ineq), s, -np.inf)
        i = int(np.argmax(s))
        if s[i] > worst:
            worst, label = float(s[i]), f"inequality row {i}"
    lo = p.u_min - u
    hi = u - p.u_max
    for arr, name in ((lo, "lower bound"), (hi, "upper bound")):
        arr = np.where(np.isfinite(arr), arr, -np.inf)
        i = int(np.argmax(arr))
        if arr[i] > worst:
            worst, label = float(arr[i]), f"{name} on u[{i}]"
    return worst, label


def solve_qp(p: QpProblem, tol: float = 1e-6, max_iter: int | None = None) -> QpSolution:
    """Solve ``p`` to a certified KKT residual below ``tol``.

    Returns the unique minimizer when the feasible set is nonempty,
    ``QpStatus.INFEASIBLE`` when phase 1 cannot find a point satisfying all
    constraints within ``tol``, and ``QpStatus.ITERATION_LIMIT`` when the
    active-set loop fails to certify within ``max_iter`` (which signals a
    bug or pathological scaling, not an expected outcome).  Deterministic:
    identical inputs produce identical outputs.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    p.validate()
    n = p.n

    if max_iter is None:
        n_bound_rows = int(np.sum(np.isfinite(p.u_min)) + np.sum(np.isfinite(p.u_max)))
        max_iter = max(10 * (n + p.A_ineq.shape[0] + n_bound_rows), 10)
    max_iter = int(max_iter)
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")

    def infeasible(u_full, detail=""):
        worst, label = _infeasibility_report(p, u_full)
        msg = detail or f"no feasible point within tolerance; worst violation {worst:.3e} at {label}"
        return QpSolution(u_star=u_full, objective=np.nan, kkt_residual=np.inf,
                          status=QpStatus.INFEASIBLE, message=msg)

    # Variables pinned by equal bounds are substituted out up front; this
    # also removes the degenerate opposing box rows they would create.
    fixed = p.u_min == p.u_max
    free = ~fixed
    u_fix = np.where(fixed, p.u_min, 0.0)
    nf = int(np.sum(free))

    H_r = np.ascontiguousarray(p.H[np.ix_(free, free)])
    f_r = np.ascontiguousarray(p.f[free] + p.H[np.ix_(free, fixed)] @ u_fix[fixed])
    lb = np.ascontiguousarray(p.u_min[free])
    ub = np.ascontiguousarray(p.u_max[free])

    def keep_rows(a, b, equality):
        """Reduce rows to free columns; empty rows become consistency checks."""
        a_r = a[:, free]
        b_r = b - a[:, fixed] @ u_fix[fixed]
        keep = np.zeros(a.shape[0], dtype=bool)
        for i in range(a.shape[0]):
            if not np.isfinite(b_r[i]):
                if equality:
                    raise ValueError("b_eq must be finite")
                continue  # unbounded inequality row is vacuous
            if np.max(np.abs(a_r[i]), initial=0.0) == 0.0:
                bad = abs(b_r[i]) if equality else max(-b_r[i], 0.0)
                if bad > tol * (1.0 + abs(b[i] if np.isfinite(b[i]) else 0.0)):
                    return None, None, i
                continue
            keep[i] = True
        return np.ascontiguousarray(a_r[keep]), np.ascontiguousarray(b_r[keep]), keep

    eq_res = keep_rows(p.A_eq, p.b_eq, equality=True)
    if eq_res[0] is None:
        return infeasible(u_fix, f"equality row {eq_res[2]} is unsatisfiable with the fixed variables")
    A_eq_r, b_eq_r, eq_keep = eq_res
    in_res = keep_rows(p.A_ineq, p.b_ineq, equality=False)
    if in_res[0] is None:
        return infeasible(u_fix, f"inequality row {in_res[2]} is unsatisfiable with the fixed variables")
    A_in_r, b_in_r, in_keep = in_res

    if nf == 0:
        sol = QpSolution(u_star=u_fix, objective=p.objective(u_fix), kkt_residual=0.0,
                         status=QpStatus.OPTIMAL, lam_eq=np.zeros(p.A_eq.shape[0]),
                         mu_ineq=np.zeros(p.A_ineq.shape[0]))
        _assign_fixed_bound_multipliers(p, sol, fixed)
        sol.kkt_residual = kkt_residual(p, u_fix, sol.lam_eq, sol.mu_ineq, sol.mu_lb, sol.mu_ub)
        if sol.kkt_residual > tol:
            sol.status = QpStatus.INFEASIBLE if sol.kkt_residual == np.inf else sol.status
        return sol

    eq_scale = _normalize_rows(A_eq_r, b_eq_r)
    in_scale = _normalize_rows(A_in_r, b_in_r)

    b_mag = 1.0
    for arr in (b_eq_r, b_in_r):
        if arr.size:
            b_mag = max(b_mag, float(np.max(np.abs(arr))))
    accept_tol = tol * b_mag
    target_tol = 1e-12 * b_mag

    u0, viol, ok = _kernels.phase1(A_eq_r, b_eq_r, A_in_r, b_in_r, lb, ub,
                                   accept_tol, target_tol)
    if not ok:
        u_full = u_fix.copy()
        u_full[free] = u0
        return infeasible(u_full)

    # Inequality rows and finite bounds share one stacked matrix in phase 2.
    fin_lo = np.where(np.isfinite(lb))[0]
    fin_hi = np.where(np.isfinite(ub))[0]
    m_in = A_in_r.shape[0]
    g_rows = m_in + fin_hi.size + fin_lo.size
    G = np.zeros((g_rows, nf))
    h = np.zeros(g_rows)
    G[:m_in] = A_in_r
    h[:m_in] = b_in_r
    for c, j in enumerate(fin_hi):
        G[m_in + c, j] = 1.0
        h[m_in + c] = ub[j]
    off = m_in + fin_hi.size
    for c, j in enumerate(fin_lo):
        G[off + c, j] = -1.0
        h[off + c] = -lb[j]

    u_r, lam_r, mu_r, iters, code = _kernels.active_set(
        H_r, f_r, A_eq_r, b_eq_r, G, h, u0, max_iter)

    u_full = u_fix.copy()
    u_full[free] = u_r

    lam_eq = np.zeros(p.A_eq.shape[0])
    lam_eq[eq_keep] = lam_r / eq_scale
    mu_ineq = np.zeros(p.A_ineq.shape[0])
    mu_ineq[in_keep] = mu_r[:m_in] / in_scale
    mu_lb = np.zeros(n)
    mu_ub = np.zeros(n)
    free_idx = np.where(free)[0]
    for c, j in enumerate(fin_hi):
        mu_ub[free_idx[j]] = mu_r[m_in + c]
    for c, j in enumerate(fin_lo):
        mu_lb[free_idx[j]] = mu_r[off + c]

    sol = QpSolution(u_star=u_full, objective=p.objective(u_full), kkt_residual=np.inf,
                     status=QpStatus.ITERATION_LIMIT, lam_eq=lam_eq, mu_ineq=mu_ineq,
                     mu_lb=mu_lb, mu_ub=mu_ub, iterations=iters)
    _assign_fixed_bound_multipliers(p, sol, fixed)
    sol.kkt_residual = kkt_residual(p, u_full, sol.lam_eq, sol.mu_ineq, sol.mu_lb, sol.mu_ub)
    if code == _kernels.AS_CONVERGED and sol.kkt_residual <= tol:
        sol.status = QpStatus.OPTIMAL
    elif code == _kernels.AS_SINGULAR_KKT:
        sol.message = "singular working-set KKT system (is H positive definite on the equality null space?)"
    else:
        sol.message = f"not certified: kkt residual {sol.kkt_residual:.3e} after {iters} iterations"
    return sol


def _assign_fixed_bound_multipliers(p: QpProblem, sol: QpSolution, fixed):
    """Give pinned variables the bound multipliers that close stationarity."""
    if sol.mu_lb.size == 0:
        sol.mu_lb = np.zeros(p.n)
    if sol.mu_ub.size == 0:
        sol.mu_ub = np.zeros(p.n)
    if not np.any(fixed):
        return
    stat = (p.H @ sol.u_star + p.f + p.A_eq.T @ sol.lam_eq
            + p.A_ineq.T @ sol.mu_ineq + sol.mu_ub - sol.mu_lb)
    for j in np.where(fixed)[0]:
        if stat[j] >= 0:
            sol.mu_lb[j] += stat[j]
        else:
            sol.mu_ub[j] -= stat[j]
