"""Dense QP kernels: phase-1 feasibility search and a primal active-set loop.

The two functions below are written as plain numpy code and compiled with
numba's ``@njit`` at import time.  Setting the environment variable
``BESSMPC_NUMBA=0`` (or ``false``/``off``/``no``) selects the uncompiled
pure-numpy path instead; the same happens automatically when numba is not
installed.  Both paths execute the identical source, so results agree.

All inputs must be contiguous float64 arrays with unit-scaled constraint
rows; :mod:`bessmpc.qp` owns validation, row normalization and the mapping
back to user-facing multipliers.  Kernels signal outcomes through status
codes instead of exceptions (except for numpy's own ``LinAlgError``, which
the wrapper catches).
"""

import os

import numpy as np

# Phase-2 return codes.
AS_CONVERGED = 0
AS_ITERATION_LIMIT = 1
AS_SINGULAR_KKT = 2


def numba_requested() -> bool:
    flag = os.environ.get("BESSMPC_NUMBA", "1").strip().lower()
    return flag not in ("0", "false", "off", "no")


def _phase1_impl(a_eq, b_eq, a_in, b_in, lb, ub, accept_tol, target_tol):
    """Find a point satisfying A_eq u = b_eq, A_in u <= b_in, lb <= u <= ub.

    Minimizes the squared constraint violation over the box by alternating
    projected-gradient sweeps with an exact least-squares polish on the
    currently identified piece (frozen bounds + active/violated rows).
    Returns ``(u, viol, ok)`` where ``viol`` is the final infinity-norm
    violation of the non-box constraints and ``ok`` says whether it is
    within ``accept_tol``.  The polish is what pushes equality residuals to
    near machine precision; phase 2 preserves whatever residual it is
    handed, so ``target_tol`` must be well below the final KKT tolerance.
    """
    n = lb.shape[0]
    m_eq = a_eq.shape[0]
    m_in = a_in.shape[0]

    u = np.minimum(np.maximum(np.zeros(n), lb), ub)
    if m_eq == 0 and m_in == 0:
        return u, 0.0, True

    # Gradient Lipschitz bound for phi(u) = 0.5*|r_eq|^2 + 0.5*|max(s,0)|^2.
    lip = np.sum(a_eq * a_eq) + np.sum(a_in * a_in)
    if lip <= 0.0:
        lip = 1.0
    step = 1.0 / lip

    bnd_eps = 1e-12
    act_eps = 1e-9

    best_u = u.copy()
    best_viol = np.inf
    stall = 0

    for _outer in range(80):
        r_eq = a_eq @ u - b_eq
        s_in = a_in @ u - b_in
        viol = 0.0
        if m_eq:
            viol = np.max(np.abs(r_eq))
        if m_in:
            viol = max(viol, np.max(s_in))
        viol = max(viol, 0.0)

        if viol < best_viol - 1e-16:
            best_viol = viol
            best_u = u.copy()
            stall = 0
        else:
            stall += 1

        if viol <= target_tol or stall > 6:
            break

        grad = a_eq.T @ r_eq + a_in.T @ np.maximum(s_in, 0.0)

        # Exact polish: least squares on free coordinates against the
        # equality rows plus active or violated inequality rows.
        frozen = ((u - lb <= bnd_eps) & (grad > 0.0)) | ((ub - u <= bnd_eps) & (grad < 0.0))
        free_idx = np.where(~frozen)[0]
        if free_idx.shape[0] > 0:
            act_idx = np.where(s_in > -act_eps)[0]
            mat = np.concatenate((a_eq[:, free_idx], a_in[act_idx][:, free_idx]))
            rhs = np.concatenate((-r_eq, -s_in[act_idx]))
            du, _res, _rank, _sv = np.linalg.lstsq(mat, rhs)
            u_try = u.copy()
            u_try[free_idx] = np.minimum(np.maximum(u[free_idx] + du, lb[free_idx]),
                                         ub[free_idx])
            viol_try = 0.0
            if m_eq:
                viol_try = np.max(np.abs(a_eq @ u_try - b_eq))
            if m_in:
                viol_try = max(viol_try, np.max(a_in @ u_try - b_in))
            viol_try = max(viol_try, 0.0)
            if viol_try < viol:
                u = u_try
                continue

        # Projected-gradient sweeps; cheap descent that re-identifies the
        # piece when the polish guess was wrong.
        for _t in range(30):
            r_eq = a_eq @ u - b_eq
            s_in = a_in @ u - b_in
            grad = a_eq.T @ r_eq + a_in.T @ np.maximum(s_in, 0.0)
            u_new = np.minimum(np.maximum(u - step * grad, lb), ub)
            moved = np.max(np.abs(u_new - u))
            u = u_new
            if moved <= 1e-16:
                break

    return best_u, best_viol, best_viol <= accept_tol


def _active_set_impl(h_mat, f, a_eq, b_eq, g_mat, h_vec, u0, max_iter):
    """Primal active-set loop for min 0.5 u'Hu + f'u on a feasible start.

    Equalities stay in every working set; inequality rows of ``g_mat`` are
    added when they block a step and dropped on a negative multiplier
    (most negative first, lowest index on ties).  Each subproblem is the
    dense KKT system of the working set, solved by LU; H only needs to be
    positive definite on the null space of the equality rows.

    Returns ``(u, lam_eq, mu, iterations, code)`` with ``mu`` over all rows
    of ``g_mat`` (zero off the working set).
    """
    n = u0.shape[0]
    m_eq = a_eq.shape[0]
    m = g_mat.shape[0]

    u = u0.copy()
    work = np.zeros(m, dtype=np.bool_)
    lam_eq = np.zeros(m_eq)
    mu = np.zeros(m)

    for it in range(max_iter):
        grad = h_mat @ u + f
        w_idx = np.where(work)[0]
        k = w_idx.shape[0]
        g_work = g_mat[w_idx]

        dim = n + m_eq + k
        kkt = np.zeros((dim, dim))
        rhs = np.zeros(dim)
        kkt[:n, :n] = h_mat
        kkt[n:n + m_eq, :n] = a_eq
        kkt[:n, n:n + m_eq] = a_eq.T
        kkt[n + m_eq:, :n] = g_work
        kkt[:n, n + m_eq:] = g_work.T
        rhs[:n] = -grad

        try:
            sol = np.linalg.solve(kkt, rhs)
        except Exception:
            return u, lam_eq, mu, it + 1, AS_SINGULAR_KKT

        p = sol[:n]
        p_inf = np.max(np.abs(p)) if n else 0.0
        u_inf = np.max(np.abs(u)) if n else 0.0

        if p_inf <= 1e-11 * (1.0 + u_inf):
            lam_eq = sol[n:n + m_eq]
            mu[:] = 0.0
            mu[w_idx] = sol[n + m_eq:]
            g_inf = np.max(np.abs(grad)) if n else 0.0
            mu_min = np.min(mu[w_idx]) if k else 0.0
            if mu_min >= -1e-9 * (1.0 + g_inf):
                mu = np.maximum(mu, 0.0)
                return u, lam_eq, mu, it + 1, AS_CONVERGED
            # w_idx is sorted, argmin takes the first minimum: the most
            # negative multiplier with lowest row index leaves the set.
            drop = w_idx[np.argmin(mu[w_idx])]
            work[drop] = False
            continue

        # Ratio test against rows not in the working set.
        gp = g_mat @ p
        gu = g_mat @ u
        open_rows = (~work) & (gp > 1e-13 * (1.0 + p_inf))
        alpha = 1.0
        blocker = -1
        if np.any(open_rows):
            idx = np.where(open_rows)[0]
            steps = np.maximum(h_vec[idx] - gu[idx], 0.0) / gp[idx]
            j = np.argmin(steps)
            if steps[j] < alpha:
                alpha = steps[j]
                blocker = idx[j]

        u = u + alpha * p
        if blocker >= 0:
            work[blocker] = True

    return u, lam_eq, mu, max_iter, AS_ITERATION_LIMIT


_phase1_py = _phase1_impl
_active_set_py = _active_set_impl

if numba_requested():
    try:
        import numba

        _jit = numba.njit(cache=True, fastmath=False)
        phase1 = _jit(_phase1_impl)
        active_set = _jit(_active_set_impl)
        BACKEND = "numba"
    except ImportError:
        phase1 = _phase1_impl
        active_set = _active_set_impl
        BACKEND = "numpy"
else:
    phase1 = _phase1_impl
    active_set = _active_set_impl
    BACKEND = "numpy"
