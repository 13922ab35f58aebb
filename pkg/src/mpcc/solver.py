"""SQP solver: damped BFGS Hessian, L1-penalty line search, active-set QP.

Two problem flavours share the same outer loop:

* generic dense problems exposing objective/gradient and optional equality,
  inequality, and bound structure (used for small reference problems and
  solver tests);
* horizon optimal-control problems (``is_ocp = True``) whose dynamics
  defects are eliminated by condensing, so each QP is solved in the input
  space only.  Stage inequality rows and state bounds are mapped through the
  sensitivity matrix of the linearized dynamics.

All internal iterations run in diagonally scaled variables; tolerances and
the reported KKT residual refer to that scaled space.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from types import SimpleNamespace

import numpy as np

from .errors import QpInfeasibleError

logger = logging.getLogger(__name__)
from .qp import solve_qp

_ELASTIC_LINEAR = 1e4
_ELASTIC_QUAD = 1e2
_STEP_FLOOR = 1e-12

# trust region on the scaled input step: keeps the QP from proposing moves
# far outside the validity of the local model when the quasi-Newton matrix
# underestimates curvature (e.g. right after new penalty terms activate).
# The floor sits well below the typical accepted step so that regimes where
# the linearisation is only trustworthy locally (tyres at the friction
# limit pressed against a hard constraint) still make crawling progress
# instead of bailing out; stagnation detection guards the exit there.
_TR_INIT = 8.0
_TR_MIN = 1e-3
_TR_MAX = 1e3
# below this scaled step norm the merit function cannot certify progress
# against evaluation noise; such steps are taken unconditionally
_TINY_STEP = 1e-3


@dataclass(frozen=True)
class SolverSettings:
    """Knobs of the SQP iteration; defaults suit the horizon problems."""

    max_iterations: int = 120
    kkt_tolerance: float = 1e-4
    constraint_tolerance: float = 1e-6
    initial_hessian_scale: float = 1.0
    #: wall-clock cap per solve; insurance against pathological steps in a
    #: closed loop (the returned best iterate is still usable).  None = off.
    time_budget: float | None = 0.5
    armijo_c1: float = 1e-4
    backtrack_factor: float = 0.5
    max_backtracks: int = 25
    penalty_margin: float = 1.0

    def __post_init__(self) -> None:
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.kkt_tolerance <= 0.0 or self.constraint_tolerance <= 0.0:
            raise ValueError("tolerances must be positive")
        if self.initial_hessian_scale <= 0.0:
            raise ValueError("initial_hessian_scale must be positive")


@dataclass(frozen=True)
class HorizonSolution:
    """Result of one solve; states/inputs are physical, residuals scaled."""

    z: np.ndarray
    states: np.ndarray | None
    inputs: np.ndarray | None
    objective: float
    kkt_residual: float
    constraint_violation: float
    iterations: int
    solve_time: float
    status: str
    merit_history: tuple[float, ...]
    hessian: np.ndarray | None = field(default=None, repr=False, compare=False)
    gn_baseline: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def ok(self) -> bool:
        return self.status == "converged"


def bfgs_update(B: np.ndarray, s: np.ndarray, y: np.ndarray,
                damping: float = 0.2) -> np.ndarray:
    """Powell-damped BFGS update; keeps B symmetric positive definite.

    When the curvature s'y falls below ``damping * s'Bs`` the gradient
    difference is blended with Bs so the update never destroys positive
    definiteness.  Steps with negligible norm leave B untouched.
    """
    s = np.asarray(s, dtype=float)
    y = np.asarray(y, dtype=float)
    if float(s @ s) < _STEP_FLOOR**2 or not np.all(np.isfinite(y)):
        return B
    Bs = B @ s
    sBs = float(s @ Bs)
    if sBs <= 0.0:
        return B
    sy = float(s @ y)
    if sy < damping * sBs:
        theta = (1.0 - damping) * sBs / (sBs - sy)
        y = theta * y + (1.0 - theta) * Bs
        sy = float(s @ y)
    if not (np.isfinite(sy) and sy > 0.0):
        return B
    Bn = B - np.outer(Bs, Bs) / sBs + np.outer(y, y) / sy
    return 0.5 * (Bn + Bn.T)


def solve(problem, settings: SolverSettings | None = None,
          warm: HorizonSolution | None = None) -> HorizonSolution:
    """Run the SQP iteration on ``problem`` from its initial guess.

    For horizon problems ``warm`` reuses the quasi-Newton matrix learned by
    the previous solve (the shifted starting trajectory comes from assembling
    the problem with that solution).  For dense problems ``warm`` reuses the
    previous solution vector as the starting point verbatim.
    """
    settings = settings if settings is not None else SolverSettings()
    t0 = time.perf_counter()
    if getattr(problem, "is_ocp", False):
        B_seed = warm.hessian if warm is not None else None
        G_seed = warm.gn_baseline if warm is not None else None
        return _solve_ocp(problem, settings, t0, B_seed, G_seed)
    if warm is not None:
        problem = _WarmStarted(problem, np.asarray(warm.z, dtype=float))
    return _solve_dense(problem, settings, t0)


class _WarmStarted:
    """Proxy replacing only the initial guess of a problem."""

    def __init__(self, inner, z0):
        self._inner = inner
        self._z0 = z0

    def __getattr__(self, name):
        return getattr(self._inner, name)

    def initial_guess(self):
        lb = getattr(self._inner, "lb", None)
        if lb is None:
            return self._z0.copy()
        return np.clip(self._z0, lb, self._inner.ub)


# ---------------------------------------------------------------------------
# condensed optimal-control path


def _eval_ocp(prob, zh, sz, sx, su, si, with_jac: bool):
    z = sz * zh
    N, nx, nu = prob.N, prob.nx, prob.nu
    f = prob.objective(z)
    dh = prob.defects(z).reshape(N, nx) / sx
    if not with_jac:
        cin = prob.ineq(z) / si
        return SimpleNamespace(f=f, dh=dh, cin=cin)
    g = prob.gradient(z) * sz
    Ad, Bd = prob.dyn_jacobians(z)
    Adh = Ad * (sx[None, None, :] / sx[None, :, None])
    Bdh = Bd * (su[None, None, :] / sx[None, :, None])
    cin_raw, Jx, Ju, _ = prob.ineq_stage_jac(z)
    cin = cin_raw / si
    Jxh = (Jx * sx[None, :]) / si[:, None]
    Juh = (Ju * su[None, :]) / si[:, None]
    return SimpleNamespace(
        f=f, dh=dh, cin=cin,
        g=g, gu=g[:N * nu].reshape(N, nu), gx=g[N * nu:].reshape(N, nx),
        Adh=Adh, Bdh=Bdh,
        Jxh3=Jxh.reshape(N, -1, nx), Juh3=Juh.reshape(N, -1, nu))


def _viol(dh, cin) -> tuple[float, float]:
    """(inf-norm, 1-norm) of constraint violation in scaled space."""
    pos = np.maximum(cin, 0.0)
    v_inf = max(float(np.max(np.abs(dh), initial=0.0)),
                float(np.max(pos, initial=0.0)))
    v_l1 = float(np.sum(np.abs(dh)) + np.sum(pos))
    return v_inf, v_l1


def _condense(Adh, Bdh, dh):
    """Eliminate the defect equalities: p_x = Gam q + gam for dynamics-feasible steps."""
    N, nx = dh.shape
    nu = Bdh.shape[2]
    Gam = np.zeros((N, nx, N * nu))
    gam = np.zeros((N, nx))
    for k in range(N):
        if k == 0:
            gam[0] = -dh[0]
        else:
            Gam[k] = Adh[k] @ Gam[k - 1]
            gam[k] = Adh[k] @ gam[k - 1] - dh[k]
        Gam[k][:, k * nu:(k + 1) * nu] += Bdh[k]
    return Gam, gam


def _grad_lagrangian_ocp(E, lam, mu3):
    """g + J_eq' lam + J_in' mu in scaled space (constant bound terms omitted)."""
    gx = E.gx + lam + np.einsum("kri,kr->ki", E.Jxh3, mu3)
    gx[:-1] -= np.einsum("kij,ki->kj", E.Adh[1:], lam[1:])
    gu = E.gu - np.einsum("kij,ki->kj", E.Bdh, lam) \
        + np.einsum("kri,kr->ki", E.Juh3, mu3)
    return np.concatenate([gu.ravel(), gx.ravel()])


def _psd_stage_blocks(M: np.ndarray, N: int, nx: int, nu: int) -> np.ndarray:
    """Project a per-stage block-diagonal symmetric matrix onto the PSD cone.

    Off-block entries are zero by construction, so the projection reduces to
    clipping negative eigenvalues of each small input/state block.
    """
    out = np.zeros_like(M)
    Nq = N * nu
    for k in range(N):
        for lo, hi in ((k * nu, (k + 1) * nu),
                       (Nq + k * nx, Nq + (k + 1) * nx)):
            blk = M[lo:hi, lo:hi]
            if not np.any(blk):
                continue
            w, V = np.linalg.eigh(0.5 * (blk + blk.T))
            np.clip(w, 0.0, None, out=w)
            out[lo:hi, lo:hi] = (V * w) @ V.T
    return out


def _solve_ocp(prob, st: SolverSettings, t0: float,
               B_seed: np.ndarray | None = None,
               G_seed: np.ndarray | None = None) -> HorizonSolution:
    N, nx, nu = prob.N, prob.nx, prob.nu
    Nq, n = N * nu, prob.n
    sz = np.asarray(prob.var_scale, dtype=float)
    su, sx = sz[:nu], sz[Nq:Nq + nx]
    si = np.asarray(prob.ineq_scale, dtype=float)
    lb, ub = prob.lb / sz, prob.ub / sz
    zh = np.clip(prob.initial_guess() / sz, lb, ub)

    xlo = np.flatnonzero(np.isfinite(lb[Nq:]))
    xhi = np.flatnonzero(np.isfinite(ub[Nq:]))
    ulo = np.flatnonzero(np.isfinite(lb[:Nq]))
    uhi = np.flatnonzero(np.isfinite(ub[:Nq]))
    n_stage = len(prob.ineq_scale)

    def fresh_gn(zh_at: np.ndarray) -> np.ndarray | None:
        if not hasattr(prob, "cost_hessian"):
            return None
        Hgn = prob.cost_hessian(zh_at * sz)
        return sz[:, None] * Hgn * sz[None, :]

    G_base = fresh_gn(zh)
    if B_seed is not None and not (
            np.all(np.isfinite(B_seed)) and float(np.max(np.abs(B_seed))) < 1e10
            and G_seed is not None and np.all(np.isfinite(G_seed))):
        # a numerically rotten carry poisons every subsequent solve; fall
        # back to the fresh Gauss-Newton seed instead
        B_seed = G_seed = None
    if (B_seed is not None and B_seed.shape == (n, n)
            and G_seed is not None and G_seed.shape == (n, n)
            and G_base is not None):
        # Curvature learned by the previous control step's solve, topped up
        # with any cost curvature that activated since (e.g. an obstacle
        # entering the horizon): add the PSD part of the Gauss-Newton delta
        # so the first QP step is already restrained in the new directions.
        dG = _psd_stage_blocks(G_base - G_seed, N, nx, nu)
        B = B_seed + dG
        G_base = G_seed + dG
    elif G_base is not None:
        # Seed with the Gauss-Newton cost curvature (scaled space) so the
        # first QP step already reflects the quadratic penalty structure;
        # BFGS refines from there within the solve.
        B = st.initial_hessian_scale * (G_base + np.eye(n))
    else:
        B = st.initial_hessian_scale * np.eye(n)
    nu_pen = 0.0
    merit_hist: list[float] = []
    status = "max_iter"
    pending = None
    qp_count = 0
    last_reset = 0
    reject_streak = 0
    tr = _TR_INIT
    best_kkt = np.inf
    best_viol = np.inf
    best_z = None
    least_viol = np.inf
    least_viol_kkt = np.inf
    least_viol_z = None
    since_best = 0
    kkt_last = np.inf
    viol_last = np.inf

    for _ in range(st.max_iterations):
        E = _eval_ocp(prob, zh, sz, sx, su, si, with_jac=True)
        if pending is not None:
            s_step, lam_p, mu3_p, gL_old = pending
            # curvature pairs from micro-steps are evaluation noise
            if float(np.max(np.abs(s_step))) >= 1e-6:
                B = bfgs_update(
                    B, s_step, _grad_lagrangian_ocp(E, lam_p, mu3_p) - gL_old)
            pending = None

        Gam, gam = _condense(E.Adh, E.Bdh, E.dh)
        GamF = Gam.reshape(N * nx, Nq)
        gamF = gam.ravel()

        Buu = B[:Nq, :Nq]
        Bux = B[:Nq, Nq:]
        Bxx = B[Nq:, Nq:]
        BxG = Bxx @ GamF
        T = Bux @ GamF
        H = Buu + T + T.T + GamF.T @ BxG
        H = 0.5 * (H + H.T)
        gc = E.g[:Nq] + Bux @ gamF + GamF.T @ (E.g[Nq:] + Bxx @ gamF)

        # inequality rows mapped into the input space
        A_stage = np.einsum("kri,kij->krj", E.Jxh3, Gam)
        for k in range(N):
            A_stage[k, :, k * nu:(k + 1) * nu] += E.Juh3[k]
        A_stage = A_stage.reshape(n_stage, Nq)
        b_stage = E.cin + np.einsum("kri,ki->kr", E.Jxh3, gam).ravel()

        zx, zu = zh[Nq:], zh[:Nq]
        C_rows = [-A_stage,
                  GamF[xlo], -GamF[xhi]]
        b_rows = [b_stage,
                  lb[Nq:][xlo] - zx[xlo] - gamF[xlo],
                  zx[xhi] + gamF[xhi] - ub[Nq:][xhi]]
        eye_u = np.eye(Nq)
        C_rows += [eye_u[ulo], -eye_u[uhi]]
        b_rows += [np.maximum(lb[:Nq][ulo] - zu[ulo], -tr),
                   np.maximum(zu[uhi] - ub[:Nq][uhi], -tr)]
        C_in = np.vstack(C_rows)
        b_in = np.concatenate(b_rows)
        bnd_var = np.concatenate([Nq + xlo, Nq + xhi, ulo, uhi])
        bnd_sign = np.concatenate([-np.ones(xlo.size), np.ones(xhi.size),
                                   -np.ones(ulo.size), np.ones(uhi.size)])

        try:
            res = solve_qp(H, gc, C_in=C_in, b_in=b_in)
            q, mu_all = res.x, res.mu_in
        except QpInfeasibleError:
            try:
                q, mu_all = _elastic_qp(H, gc, C_in, b_in, relax=slice(0, n_stage))
            except QpInfeasibleError:
                status = "infeasible"
                break
        qp_count += 1

        mu3 = mu_all[:n_stage].reshape(N, -1)
        nu_net = np.zeros(n)
        np.add.at(nu_net, bnd_var, bnd_sign * mu_all[n_stage:])
        p_x = GamF @ q + gamF
        ph = np.concatenate([q, p_x])

        # Equality multipliers by backward recursion, two estimates: the
        # QP-consistent one (folds the curvature-times-step term in, small
        # residual at healthy near-optimal steps) and the adjoint one (zeroes
        # the state rows exactly, free of any quasi-Newton floor when the QP
        # wanders along a flat direction).  Either is a valid certificate,
        # so the reported residual is the better of the two.
        Bp = B @ ph
        r_base = E.gx + np.einsum("kri,kr->ki", E.Jxh3, mu3) \
            + nu_net[Nq:].reshape(N, nx)
        lam = np.zeros((N, nx))
        lam_hat = np.zeros((N, nx))
        r_x = r_base + Bp[Nq:].reshape(N, nx)
        lam[N - 1] = -r_x[N - 1]
        lam_hat[N - 1] = -r_base[N - 1]
        for k in range(N - 2, -1, -1):
            lam[k] = -r_x[k] + E.Adh[k + 1].T @ lam[k + 1]
            lam_hat[k] = -r_base[k] + E.Adh[k + 1].T @ lam_hat[k + 1]

        stat = _grad_lagrangian_ocp(E, lam, mu3) + nu_net
        stat_hat = _grad_lagrangian_ocp(E, lam_hat, mu3) + nu_net
        slack = np.where(bnd_sign > 0, ub[bnd_var] - zh[bnd_var],
                         zh[bnd_var] - lb[bnd_var])
        comp = max(float(np.max(np.abs(mu3.ravel() * E.cin), initial=0.0)),
                   float(np.max(np.abs(mu_all[n_stage:] * slack), initial=0.0)))
        viol_inf, viol_l1 = _viol(E.dh, E.cin)
        kkt_last = max(min(float(np.max(np.abs(stat))),
                           float(np.max(np.abs(stat_hat)))), comp)
        viol_last = viol_inf
        if viol_last <= st.constraint_tolerance and kkt_last < best_kkt:
            best_kkt, best_z, best_viol = kkt_last, zh.copy(), viol_last
            since_best = 0
        else:
            since_best += 1
        if viol_last < least_viol or (viol_last == least_viol
                                      and kkt_last < least_viol_kkt):
            # least-violating iterate, kept for exits where the problem turns
            # out (locally) infeasible and feasibility was never reached
            least_viol, least_viol_kkt = viol_last, kkt_last
            least_viol_z = zh.copy()
        if kkt_last <= st.kkt_tolerance and viol_last <= st.constraint_tolerance:
            status = "converged"
            break
        if st.time_budget is not None and time.perf_counter() - t0 > st.time_budget:
            status = "time_out"
            break
        if since_best >= 15:
            # The residual has stopped improving.  Three shapes of plateau
            # end here: within a whisker of stationarity; merit flat for the
            # whole window with proposals shrunk to noise (active-set
            # flapping on a kink); and merit flat while infeasible — a
            # stationary point of the penalty function for a (locally)
            # infeasible problem, where further iterations only churn
            # multiplier estimates.  The last is reported as "stalled" so
            # callers know the returned plan is best-effort, not feasible.
            recent = merit_hist[-15:]
            flat = (len(recent) == 15
                    and max(recent) - min(recent)
                    <= 1e-6 * (1.0 + abs(recent[-1])))
            if best_kkt <= 10.0 * st.kkt_tolerance or (
                    flat and float(np.max(np.abs(ph))) <= 0.05):
                status = ("max_iter"
                          if viol_last <= st.constraint_tolerance
                          else "stalled")
                break

        # The exact-penalty weight needs to dominate the multipliers of the
        # constraints the merit actually penalises: defects and stage
        # inequalities.  The adjoint equality estimate avoids the
        # curvature-times-step term (which would inflate the weight by the
        # length of whatever step the QP just proposed), and bound-row duals
        # are excluded because bounds are satisfied by construction and can
        # spike arbitrarily when the trust region pinches them.
        mult_inf = max(float(np.max(np.abs(lam_hat), initial=0.0)),
                       float(np.max(mu_all[:n_stage], initial=0.0)))
        nu_pen = max(nu_pen, 1.1 * mult_inf + st.penalty_margin)
        phi0 = E.f + nu_pen * viol_l1
        merit_hist.append(phi0)
        D = float(E.g @ ph) - nu_pen * viol_l1

        accepted = False
        alpha = 1.0
        gL0 = _grad_lagrangian_ocp(E, lam, mu3)
        # predicted decrease below the merit's float resolution: the line
        # search cannot certify progress any more, take the full step
        merit_floor = 16.0 * np.finfo(float).eps * (1.0 + abs(phi0))
        if ((-merit_floor <= D <= 0.0 and viol_l1 <= st.constraint_tolerance)
                or float(np.max(np.abs(ph))) < _TINY_STEP):
            pending = (ph, lam, mu3, gL0)
            zh = zh + ph
            accepted = True
        else:
            for _ in range(st.max_backtracks):
                zt = zh + alpha * ph
                Et = _eval_ocp(prob, zt, sz, sx, su, si, with_jac=False)
                _, vt = _viol(Et.dh, Et.cin)
                phit = Et.f + nu_pen * vt
                ok = phit <= phi0 + st.armijo_c1 * alpha * D if D < 0.0 \
                    else phit < phi0
                if ok:
                    pending = (zt - zh, lam, mu3, gL0)
                    zh = zt
                    accepted = True
                    break
                # Second-order correction: shift the trial states so the
                # defects this step length introduces cancel (inputs held);
                # without it the penalty term vetoes steps whose only flaw
                # is quadratic constraint curvature.
                gam_c = np.empty_like(Et.dh)
                gam_c[0] = -Et.dh[0]
                for k in range(1, N):
                    gam_c[k] = E.Adh[k] @ gam_c[k - 1] - Et.dh[k]
                zc = np.clip(
                    zt + np.concatenate([np.zeros(Nq), gam_c.ravel()]),
                    lb, ub)
                Ec = _eval_ocp(prob, zc, sz, sx, su, si, with_jac=False)
                _, vc = _viol(Ec.dh, Ec.cin)
                phic = Ec.f + nu_pen * vc
                okc = phic <= phi0 + st.armijo_c1 * alpha * D if D < 0.0 \
                    else phic < phi0
                if okc:
                    pending = (zc - zh, lam, mu3, gL0)
                    zh = zc
                    accepted = True
                    break
                alpha *= st.backtrack_factor
        if logger.isEnabledFor(logging.DEBUG):
            logger.debug(
                "it=%-3d f=%-12.6g viol=%-9.3g kkt=%-9.3g nu=%-9.3g D=%-10.3g "
                "alpha=%-9.3g |p|=%-9.3g tr=%-8.3g", qp_count, E.f, viol_inf,
                kkt_last, nu_pen, D, alpha if accepted else 0.0,
                float(np.max(np.abs(ph))), tr)
        if float(np.max(np.abs(ph))) < _STEP_FLOOR:
            status = "max_iter"
            break
        if not accepted:
            reject_streak += 1
            if reject_streak >= 2 and G_base is not None \
                    and qp_count - last_reset >= 3:
                # Even a tightened region cannot rescue this matrix: its
                # curvature no longer matches the landscape.  Restart from
                # cost curvature at the current iterate.
                G_base = fresh_gn(zh)
                B = st.initial_hessian_scale * (G_base + np.eye(n))
                pending = None
                last_reset = qp_count
                tr = _TR_INIT
                reject_streak = 0
                continue
            if tr <= _TR_MIN:
                status = "max_iter"
                break
            # the merit rejected even heavily backtracked steps: retry from
            # the same point with a tighter region instead of giving up
            tr = max(_TR_MIN, 0.25 * tr)
            continue
        reject_streak = 0
        if alpha >= 0.25:
            tr = min(_TR_MAX, 2.0 * tr)
        elif alpha < 0.1:
            # realized step was a sliver of the proposal: shrink the region
            # toward the scale the merit actually accepted
            tr = max(_TR_MIN, 4.0 * alpha * tr)

    if status != "converged":
        if best_z is not None and (viol_last > st.constraint_tolerance
                                   or best_kkt < kkt_last):
            # flagged exit: hand back the best feasible iterate seen, not
            # the last point the iteration happened to wander to
            zh, kkt_last, viol_last = best_z, best_kkt, best_viol
        elif best_z is None and least_viol_z is not None \
                and least_viol < viol_last:
            # never feasible: the least-violating iterate is the most useful
            # plan this solve can offer
            zh, kkt_last, viol_last = least_viol_z, least_viol_kkt, least_viol
    z = sz * zh
    U, Xs = prob.split(z)
    merit_hist.append(_final_merit(prob, z, sz, sx, si, nu_pen))
    return HorizonSolution(
        z=z, states=Xs.copy(), inputs=U.copy(),
        objective=float(prob.objective(z)),
        kkt_residual=kkt_last, constraint_violation=viol_last, hessian=B,
        gn_baseline=G_base,
        iterations=qp_count, solve_time=time.perf_counter() - t0,
        status=status, merit_history=tuple(merit_hist))


def _final_merit(prob, z, sz, sx, si, nu_pen) -> float:
    N, nx = prob.N, prob.nx
    dh = prob.defects(z).reshape(N, nx) / sx
    cin = prob.ineq(z) / si
    return float(prob.objective(z)) + nu_pen * _viol(dh, cin)[1]


def _elastic_qp(H, gc, C_in, b_in, relax: slice):
    """Retry an infeasible QP with one shared slack on the relaxable rows."""
    nq = H.shape[0]
    He = np.zeros((nq + 1, nq + 1))
    He[:nq, :nq] = H
    He[nq, nq] = _ELASTIC_QUAD
    ge = np.concatenate([gc, [_ELASTIC_LINEAR]])
    Ce = np.zeros((C_in.shape[0] + 1, nq + 1))
    Ce[:-1, :nq] = C_in
    Ce[relax, nq] = 1.0
    Ce[-1, nq] = 1.0  # slack stays non-negative
    be = np.concatenate([b_in, [0.0]])
    res = solve_qp(He, ge, C_in=Ce, b_in=be)
    return res.x[:nq], res.mu_in[:-1]


# ---------------------------------------------------------------------------
# generic dense path


def _eval_dense(prob, zh, sz, se, si, with_jac: bool):
    z = sz * zh
    f = prob.objective(z)
    ceq = prob.eq(z) / se if se.size else np.zeros(0)
    cin = prob.ineq(z) / si if si.size else np.zeros(0)
    if not with_jac:
        return SimpleNamespace(f=f, ceq=ceq, cin=cin)
    g = prob.gradient(z) * sz
    Je = (prob.eq_jac(z) * sz[None, :]) / se[:, None] if se.size else np.zeros((0, zh.size))
    Ji = (prob.ineq_jac(z) * sz[None, :]) / si[:, None] if si.size else np.zeros((0, zh.size))
    return SimpleNamespace(f=f, ceq=ceq, cin=cin, g=g, Je=Je, Ji=Ji)


def _viol_dense(ceq, cin) -> tuple[float, float]:
    pos = np.maximum(cin, 0.0)
    v_inf = max(float(np.max(np.abs(ceq), initial=0.0)),
                float(np.max(pos, initial=0.0)))
    v_l1 = float(np.sum(np.abs(ceq)) + np.sum(pos))
    return v_inf, v_l1


def _solve_dense(prob, st: SolverSettings, t0: float) -> HorizonSolution:
    if not (hasattr(prob, "eq") and hasattr(prob, "ineq")):
        return _solve_dense(_with_defaults(prob), st, t0)
    n = prob.n
    sz = np.asarray(getattr(prob, "var_scale", np.ones(n)), dtype=float)
    z_ref = prob.initial_guess()
    se = np.asarray(getattr(prob, "eq_scale", np.ones(len(prob.eq(z_ref)))), dtype=float)
    si = np.asarray(getattr(prob, "ineq_scale", np.ones(len(prob.ineq(z_ref)))), dtype=float)
    lb = np.asarray(getattr(prob, "lb", np.full(n, -np.inf)), dtype=float) / sz
    ub = np.asarray(getattr(prob, "ub", np.full(n, np.inf)), dtype=float) / sz
    zh = np.clip(prob.initial_guess() / sz, lb, ub)
    ilo = np.flatnonzero(np.isfinite(lb))
    ihi = np.flatnonzero(np.isfinite(ub))

    B = st.initial_hessian_scale * np.eye(n)
    nu_pen = 0.0
    merit_hist: list[float] = []
    status = "max_iter"
    pending = None
    qp_count = 0
    kkt_last = np.inf
    viol_last = np.inf

    for _ in range(st.max_iterations):
        E = _eval_dense(prob, zh, sz, se, si, with_jac=True)
        if pending is not None:
            s_step, lam_p, mu_p, gL_old = pending
            gL_new = E.g + E.Je.T @ lam_p + E.Ji.T @ mu_p
            B = bfgs_update(B, s_step, gL_new - gL_old)
            pending = None

        m_in = E.cin.size
        eye = np.eye(n)
        C_in = np.vstack([-E.Ji, eye[ilo], -eye[ihi]]) if (m_in or ilo.size or ihi.size) \
            else np.zeros((0, n))
        b_in = np.concatenate([E.cin, lb[ilo] - zh[ilo], zh[ihi] - ub[ihi]])
        try:
            res = solve_qp(B, E.g, C_eq=E.Je if E.ceq.size else None,
                           b_eq=-E.ceq if E.ceq.size else None,
                           C_in=C_in if C_in.shape[0] else None,
                           b_in=b_in if C_in.shape[0] else None)
            p, lam_qp, mu_all = res.x, res.mu_eq, res.mu_in
        except QpInfeasibleError:
            status = "infeasible"
            break
        qp_count += 1

        lam = -lam_qp
        mu = mu_all[:m_in]
        nu_net = np.zeros(n)
        np.add.at(nu_net, ilo, -mu_all[m_in:m_in + ilo.size])
        np.add.at(nu_net, ihi, mu_all[m_in + ilo.size:])

        stat = E.g + E.Je.T @ lam + E.Ji.T @ mu + nu_net
        slack = np.concatenate([zh[ilo] - lb[ilo], ub[ihi] - zh[ihi]])
        comp = max(float(np.max(np.abs(mu * E.cin), initial=0.0)),
                   float(np.max(np.abs(mu_all[m_in:] * slack), initial=0.0)))
        viol_inf, viol_l1 = _viol_dense(E.ceq, E.cin)
        kkt_last = max(float(np.max(np.abs(stat))), comp)
        viol_last = viol_inf
        if kkt_last <= st.kkt_tolerance and viol_last <= st.constraint_tolerance:
            status = "converged"
            break
        if st.time_budget is not None and time.perf_counter() - t0 > st.time_budget:
            status = "time_out"
            break

        mult_inf = max(float(np.max(np.abs(lam), initial=0.0)),
                       float(np.max(mu_all, initial=0.0)))
        nu_pen = max(nu_pen, 1.1 * mult_inf + st.penalty_margin)
        phi0 = E.f + nu_pen * viol_l1
        merit_hist.append(phi0)
        D = float(E.g @ p) - nu_pen * viol_l1

        accepted = False
        merit_floor = 16.0 * np.finfo(float).eps * (1.0 + abs(phi0))
        if -merit_floor <= D <= 0.0 and viol_l1 <= st.constraint_tolerance:
            pending = (p, lam, mu, E.g + E.Je.T @ lam + E.Ji.T @ mu)
            zh = zh + p
            accepted = True
        else:
            alpha = 1.0
            for _ in range(st.max_backtracks):
                zt = zh + alpha * p
                Et = _eval_dense(prob, zt, sz, se, si, with_jac=False)
                _, vt = _viol_dense(Et.ceq, Et.cin)
                phit = Et.f + nu_pen * vt
                ok = phit <= phi0 + st.armijo_c1 * alpha * D if D < 0.0 else phit < phi0
                if ok:
                    gL_old = E.g + E.Je.T @ lam + E.Ji.T @ mu
                    pending = (alpha * p, lam, mu, gL_old)
                    zh = zt
                    accepted = True
                    break
                alpha *= st.backtrack_factor
        if not accepted or float(np.max(np.abs(p))) < _STEP_FLOOR:
            status = "max_iter"
            break

    z = sz * zh
    Ef = _eval_dense(prob, zh, sz, se, si, with_jac=False)
    merit_hist.append(Ef.f + nu_pen * _viol_dense(Ef.ceq, Ef.cin)[1])
    return HorizonSolution(
        z=z, states=None, inputs=None, objective=float(prob.objective(z)),
        kkt_residual=kkt_last, constraint_violation=viol_last,
        iterations=qp_count, solve_time=time.perf_counter() - t0,
        status=status, merit_history=tuple(merit_hist))


class _with_defaults:
    """Adapter giving a bare problem empty constraint structure."""

    def __init__(self, inner):
        self._inner = inner
        self.n = inner.n
        for name in ("lb", "ub", "var_scale", "eq_scale", "ineq_scale"):
            if hasattr(inner, name):
                setattr(self, name, getattr(inner, name))

    def initial_guess(self):
        return self._inner.initial_guess()

    def objective(self, z):
        return self._inner.objective(z)

    def gradient(self, z):
        return self._inner.gradient(z)

    def eq(self, z):
        if hasattr(self._inner, "eq"):
            return self._inner.eq(z)
        return np.zeros(0)

    def eq_jac(self, z):
        if hasattr(self._inner, "eq_jac"):
            return self._inner.eq_jac(z)
        return np.zeros((0, self.n))

    def ineq(self, z):
        if hasattr(self._inner, "ineq"):
            return self._inner.ineq(z)
        return np.zeros(0)

    def ineq_jac(self, z):
        if hasattr(self._inner, "ineq_jac"):
            return self._inner.ineq_jac(z)
        return np.zeros((0, self.n))
