"""Brute-force QP oracle for testing: exhaustive grid refinement.

Independent of the active-set kernels by construction: equalities are
eliminated through a null-space parameterization, the remaining box is
searched on a uniform grid whose spacing is halved around the incumbent
until it drops below ``r_final``, and the face identified by the grid is
then polished exactly by enumerating nearby active sets and verifying
full KKT optimality of each candidate.  Slow and only for small problems,
but it cannot share a bug with the production solver's iteration logic.
"""

from itertools import combinations

import numpy as np

from .qp import QpProblem, QpSolution, QpStatus, kkt_residual

MAX_ORACLE_DIM = 4


def solve_qp_oracle(p: QpProblem, r_final: float = 1e-5) -> QpSolution:
    """Grid-refinement solve of ``p``; requires n <= 4 and finite boxes.

    The returned point is within O(r_final) of the minimizer by Lipschitz
    continuity of the quadratic on the box; the active-set enumeration at
    the end makes it exact whenever one of the candidate faces passes an
    independent KKT check (the generic case).
    """
    p.validate()
    n = p.n
    if n > MAX_ORACLE_DIM:
        raise ValueError(f"oracle handles n <= {MAX_ORACLE_DIM} only, got n={n}")
    if not (np.all(np.isfinite(p.u_min)) and np.all(np.isfinite(p.u_max))):
        raise ValueError("oracle requires finite box bounds")

    m_eq = p.A_eq.shape[0]
    if m_eq:
        u_part, _res, rank, _sv = np.linalg.lstsq(p.A_eq, p.b_eq, rcond=None)
        if np.max(np.abs(p.A_eq @ u_part - p.b_eq)) > 1e-8 * (1.0 + np.max(np.abs(p.b_eq))):
            return _infeasible(p, u_part, "inconsistent equality system")
        _u, _s, vt = np.linalg.svd(p.A_eq)
        z = vt[rank:].T  # orthonormal null-space basis, n x k
    else:
        u_part = np.zeros(n)
        z = np.eye(n)
    k = z.shape[1]

    # All remaining constraints in reduced coordinates y: G y <= d.
    G = np.vstack([p.A_ineq @ z, z, -z])
    d = np.concatenate([p.b_ineq - p.A_ineq @ u_part,
                        p.u_max - u_part,
                        -(p.u_min - u_part)])
    finite = np.isfinite(d)
    G, d = G[finite], d[finite]
    row_norm = np.maximum(np.linalg.norm(G, axis=1), 1e-30)

    Hz = z.T @ p.H @ z
    fz = z.T @ (p.H @ u_part + p.f)

    if k == 0:
        if np.max(-d, initial=0.0) > 1e-8 * (1.0 + np.max(np.abs(d), initial=0.0)):
            return _infeasible(p, u_part, "equality solution violates inequalities")
        return _finish(p, u_part)

    half_box = np.linalg.norm((p.u_max - p.u_min) / 2.0)
    off_center = np.linalg.norm(np.clip(u_part, p.u_min, p.u_max) - u_part)
    radius = half_box + off_center + 1e-9

    offsets_1d = np.arange(-4, 5, dtype=float)  # 9 points per axis
    mesh = np.meshgrid(*([offsets_1d] * k), indexing="ij")
    unit_pts = np.stack([g.ravel() for g in mesh], axis=1)  # (9^k, k)

    center = np.zeros(k)
    spacing = max(radius / 4.0, r_final)
    sqrt_k = np.sqrt(k)
    expansions = 0
    completed = False
    for _level in range(400):
        pts = center + spacing * unit_pts
        resid = G @ pts.T - d[:, None]
        # Prefer strictly feasible grid points; fall back to points whose
        # violation fits inside one grid cell, which keeps sets thinner
        # than the grid reachable without letting the incumbent drift
        # into infeasible territory when it does not have to.
        slack = row_norm * spacing * sqrt_k
        feas = np.all(resid <= 0.0, axis=0)
        if not np.any(feas):
            feas = np.all(resid <= slack[:, None], axis=0)
        if not np.any(feas):
            # Widen the window around the incumbent.  A bounded budget
            # keeps an empty feasible set from ping-ponging forever
            # between expansion and refinement.
            expansions += 1
            if expansions > 40:
                break
            spacing *= 2.0
            continue
        cand = pts[feas]
        vals = 0.5 * np.einsum("ij,jk,ik->i", cand, Hz, cand) + cand @ fz
        center = cand[int(np.argmin(vals))]
        if spacing <= r_final:
            completed = True
            break
        spacing /= 2.0

    y = _polish_faces(Hz, fz, G, d, row_norm, center, spacing)
    viol = float(np.max(G @ y - d, initial=0.0))
    limit = max(float(np.max(10.0 * row_norm * r_final * sqrt_k)),
                1e-8 * (1.0 + float(np.max(np.abs(d)))))
    if not completed or viol > limit:
        return _infeasible(p, u_part + z @ y, "no feasible point found by grid refinement")
    return _finish(p, u_part + z @ y)


def _polish_faces(Hz, fz, G, d, row_norm, y, spacing):
    """Exact finish: enumerate active-set candidates near the grid point.

    Every subset of the rows that are close to active at ``y`` defines one
    equality-KKT candidate; a candidate is accepted only if it passes a
    full first-order optimality check, which for a convex problem means it
    is the true minimizer.  Returns the grid point unchanged when no
    candidate passes.
    """
    k = y.shape[0]
    m = G.shape[0]
    resid = G @ y - d
    margin = np.maximum(8.0 * row_norm * spacing * np.sqrt(k), 1e-7 * (1.0 + np.abs(d)))
    near = np.where(resid >= -margin)[0]
    if near.size > 10:
        near = near[np.argsort(resid[near])[::-1][:10]]

    best_y = _try_active_sets(Hz, fz, G, d, k, sorted(near.tolist()))
    if best_y is None and _subset_count(m, k) <= 4096:
        # The incumbent can sit on the wrong side of a shallow boundary;
        # these problems are tiny, so enumerate every face instead.
        best_y = _try_active_sets(Hz, fz, G, d, k, list(range(m)))
    return y if best_y is None else best_y


def _subset_count(m, k):
    total = 0
    binom = 1
    for size in range(min(m, k) + 1):
        total += binom
        binom = binom * (m - size) // (size + 1)
    return total


def _try_active_sets(Hz, fz, G, d, k, rows):
    scale = 1.0 + np.max(np.abs(fz), initial=0.0) + np.max(np.abs(d), initial=0.0)
    best_y = None
    best_val = np.inf
    for size in range(min(len(rows), k) + 1):
        for subset in combinations(rows, size):
            idx = np.array(subset, dtype=int)
            ga, da = G[idx], d[idx]
            dim = k + idx.size
            kkt = np.zeros((dim, dim))
            kkt[:k, :k] = Hz
            kkt[:k, k:] = ga.T
            kkt[k:, :k] = ga
            rhs = np.concatenate([-fz, da])
            sol, _res, _rank, _sv = np.linalg.lstsq(kkt, rhs, rcond=None)
            y_c, mu = sol[:k], sol[k:]
            if not np.all(np.isfinite(y_c)):
                continue
            stationarity = Hz @ y_c + fz + ga.T @ mu
            if np.max(np.abs(stationarity), initial=0.0) > 1e-8 * scale:
                continue
            if np.min(mu, initial=0.0) < -1e-8 * scale:
                continue
            if np.max(G @ y_c - d, initial=0.0) > 1e-9 * scale:
                continue
            val = 0.5 * y_c @ Hz @ y_c + fz @ y_c
            if val < best_val:
                best_val = val
                best_y = y_c
    return best_y


def _finish(p: QpProblem, u) -> QpSolution:
    """Package the oracle point; multipliers recovered by least squares."""
    n = p.n
    grad = p.H @ u + p.f
    cols = []
    kinds = []
    tol_act = 1e-7 * (1.0 + float(np.max(np.abs(u), initial=0.0)))
    for i in range(p.A_eq.shape[0]):
        cols.append(p.A_eq[i])
        kinds.append(("eq", i))
    for i in range(p.A_ineq.shape[0]):
        if np.isfinite(p.b_ineq[i]) and p.A_ineq[i] @ u - p.b_ineq[i] >= -tol_act:
            cols.append(p.A_ineq[i])
            kinds.append(("in", i))
    for j in range(n):
        if np.isfinite(p.u_max[j]) and u[j] - p.u_max[j] >= -tol_act:
            e = np.zeros(n); e[j] = 1.0
            cols.append(e)
            kinds.append(("ub", j))
        if np.isfinite(p.u_min[j]) and p.u_min[j] - u[j] >= -tol_act:
            e = np.zeros(n); e[j] = -1.0
            cols.append(e)
            kinds.append(("lb", j))

    lam_eq = np.zeros(p.A_eq.shape[0])
    mu_ineq = np.zeros(p.A_ineq.shape[0])
    mu_lb = np.zeros(n)
    mu_ub = np.zeros(n)
    if cols:
        mat = np.stack(cols, axis=1)
        coef, _res, _rank, _sv = np.linalg.lstsq(mat, -grad, rcond=None)
        for (kind, i), c in zip(kinds, coef):
            if kind == "eq":
                lam_eq[i] = c
            elif kind == "in":
                mu_ineq[i] = max(c, 0.0)
            elif kind == "ub":
                mu_ub[i] = max(c, 0.0)
            else:
                mu_lb[i] = max(c, 0.0)

    res = kkt_residual(p, u, lam_eq, mu_ineq, mu_lb, mu_ub)
    return QpSolution(u_star=u, objective=p.objective(u), kkt_residual=res,
                      status=QpStatus.OPTIMAL, lam_eq=lam_eq, mu_ineq=mu_ineq,
                      mu_lb=mu_lb, mu_ub=mu_ub)


def _infeasible(p: QpProblem, u, msg: str) -> QpSolution:
    return QpSolution(u_star=np.asarray(u, dtype=float), objective=np.nan,
                      kkt_residual=np.inf, status=QpStatus.INFEASIBLE, message=msg)
