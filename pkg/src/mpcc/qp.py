"""Dense convex QP solver: dual active-set method of Goldfarb and Idnani.

Solves

    min  0.5 x'Gx + a'x
    s.t. C_eq x  = b_eq
         C_in x >= b_in

with G symmetric positive definite.  Starts from the unconstrained minimum
(always dual feasible), adds the most violated constraint, and takes mixed
primal/dual steps until primal feasible.  Equalities are inserted first with
free-signed multipliers and are never dropped.

The active-set factors are maintained incrementally: W = G^{-1} N holds the
Newton directions of the active normals N, and M = N' W is the small dual
Schur complement, so each step costs one triangular solve in the full space
plus a solve against M.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import QpInfeasibleError

#: Constraint violation below this is treated as satisfied.
FEAS_TOL = 1e-9
#: Curvature z'n below this means the new normal lies in the active span.
SPAN_TOL = 1e-11
#: Dual direction entries below this never block a step.
BLOCK_TOL = 1e-12


@dataclass(frozen=True)
class QpResult:
    x: np.ndarray
    mu_eq: np.ndarray    # free-signed equality multipliers
    mu_in: np.ndarray    # non-negative inequality multipliers
    iterations: int
    active_in: tuple[int, ...]

    def objective(self, G: np.ndarray, a: np.ndarray) -> float:
        return float(0.5 * self.x @ G @ self.x + a @ self.x)


def _factor_with_ridge(G: np.ndarray):
    """Cholesky of G, adding an escalating ridge if it is numerically singular."""
    ridge = 0.0
    base = max(float(np.mean(np.abs(np.diag(G)))), 1e-12)
    for attempt in range(4):
        try:
            return cho_factor(G + ridge * np.eye(G.shape[0]), lower=True)
        except np.linalg.LinAlgError:
            ridge = base * (1e-10 if ridge == 0.0 else 0.0) + ridge * 100.0
    raise QpInfeasibleError("QP Hessian is not positive definite")


def solve_qp(G: np.ndarray, a: np.ndarray,
             C_eq: np.ndarray | None = None, b_eq: np.ndarray | None = None,
             C_in: np.ndarray | None = None, b_in: np.ndarray | None = None,
             max_iter: int | None = None) -> QpResult:
    """Solve the QP; raises QpInfeasibleError when no feasible point exists."""
    G = np.asarray(G, dtype=float)
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    C_eq = np.zeros((0, n)) if C_eq is None else np.asarray(C_eq, dtype=float)
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float)
    C_in = np.zeros((0, n)) if C_in is None else np.asarray(C_in, dtype=float)
    b_in = np.zeros(0) if b_in is None else np.asarray(b_in, dtype=float)
    p, m = C_eq.shape[0], C_in.shape[0]
    if max_iter is None:
        max_iter = 100 + 20 * (n + p + m)

    # row normalization keeps the violation comparison scale-free
    def _normalize(C, b):
        if C.shape[0] == 0:
            return C, b, np.ones(0)
        nrm = np.linalg.norm(C, axis=1)
        nrm = np.where(nrm > 0.0, nrm, 1.0)
        return C / nrm[:, None], b / nrm, nrm

    C_eq, b_eq, nrm_eq = _normalize(C_eq, b_eq)
    C_in, b_in, nrm_in = _normalize(C_in, b_in)

    low = _factor_with_ridge(G)
    x = -cho_solve(low, a)

    # active set state
    Nm = np.zeros((n, 0))      # active normals, one column each
    W = np.zeros((n, 0))       # G^{-1} Nm
    M = np.zeros((0, 0))       # Nm' W
    u = np.zeros(0)            # multipliers in insertion order
    meta: list[tuple[str, int, float]] = []   # (kind, original row, sign)
    eq_added = np.zeros(p, dtype=bool)
    in_active = np.zeros(m, dtype=bool)

    def _drop(j: int) -> None:
        nonlocal Nm, W, M, u
        kind, orig, _ = meta[j]
        if kind == "in":
            in_active[orig] = False
        Nm = np.delete(Nm, j, axis=1)
        W = np.delete(W, j, axis=1)
        M = np.delete(np.delete(M, j, axis=0), j, axis=1)
        u = np.delete(u, j)
        meta.pop(j)

    iterations = 0
    while True:
        iterations += 1
        if iterations > max_iter:
            raise QpInfeasibleError("active-set iteration limit exceeded")

        # pick the most violated constraint; equalities take priority
        n_plus = b_plus = None
        kind = orig = sign = None
        if not eq_added.all():
            idx = np.flatnonzero(~eq_added)
            s = C_eq[idx] @ x - b_eq[idx]
            j = idx[int(np.argmax(np.abs(s)))]
            sj = float(C_eq[j] @ x - b_eq[j])
            sign = -1.0 if sj > 0.0 else 1.0
            n_plus, b_plus = sign * C_eq[j], sign * b_eq[j]
            kind, orig = "eq", int(j)
        elif m:
            s = C_in @ x - b_in
            s[in_active] = 0.0
            j = int(np.argmin(s))
            if s[j] < -FEAS_TOL:
                n_plus, b_plus = C_in[j], b_in[j]
                kind, orig, sign = "in", j, 1.0
        if n_plus is None:
            break

        u_plus = 0.0
        while True:
            iterations += 1
            if iterations > max_iter:
                raise QpInfeasibleError("active-set iteration limit exceeded")
            w_plus = cho_solve(low, n_plus)
            if Nm.shape[1]:
                r = np.linalg.solve(M, Nm.T @ w_plus)
                zdir = w_plus - W @ r
            else:
                r = np.zeros(0)
                zdir = w_plus
            ztn = float(zdir @ n_plus)
            s_plus = float(n_plus @ x - b_plus)

            # blocking constraints: active inequalities whose multiplier hits 0
            t1, blocker = np.inf, -1
            for j, (kj, _, _) in enumerate(meta):
                if kj == "in" and r[j] > BLOCK_TOL:
                    tj = u[j] / r[j]
                    if tj < t1:
                        t1, blocker = tj, j

            if ztn <= SPAN_TOL:
                # new normal in span of active set: pure dual step or failure
                if not np.isfinite(t1):
                    if kind == "eq" and abs(s_plus) <= 10.0 * FEAS_TOL:
                        eq_added[orig] = True  # redundant but consistent equality
                        break
                    raise QpInfeasibleError("constraints are inconsistent")
                u = u - t1 * r
                u_plus += t1
                _drop(blocker)
                continue

            t2 = -s_plus / ztn
            t = min(t1, t2)
            if not np.isfinite(t):
                raise QpInfeasibleError("unbounded dual step")
            x = x + t * zdir
            if u.shape[0]:
                u = u - t * r
            u_plus += t
            if t == t2:
                Nm = np.hstack([Nm, n_plus[:, None]])
                col = Nm.T @ w_plus
                W = np.hstack([W, w_plus[:, None]])
                M = np.block([[M, col[:-1, None]], [col[None, :-1], col[-1]]]) \
                    if M.size else np.array([[col[-1]]])
                u = np.append(u, u_plus)
                meta.append((kind, orig, sign))
                if kind == "eq":
                    eq_added[orig] = True
                else:
                    in_active[orig] = True
                break
            _drop(blocker)

    mu_eq = np.zeros(p)
    mu_in = np.zeros(m)
    for j, (kj, orig, sign) in enumerate(meta):
        if kj == "eq":
            mu_eq[orig] = sign * u[j] / nrm_eq[orig]
        else:
            mu_in[orig] = u[j] / nrm_in[orig]
    active = tuple(sorted(orig for kj, orig, _ in meta if kj == "in"))
    return QpResult(x=x, mu_eq=mu_eq, mu_in=mu_in,
                    iterations=iterations, active_in=active)
