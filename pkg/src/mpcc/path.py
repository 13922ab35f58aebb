"""Reference path geometry: sampled centreline, contouring errors, distances.

A path is a table of samples (s, X, Y, psi, kappa) parameterized by arc
length.  Positions interpolate with a cubic spline, heading and curvature
linearly; lookups clamp to [0, total_length].  Contouring/lag errors follow
the rotated-displacement form, so no per-stage projection is ever needed by
the controller.  Projection (for the Frenet baseline and for diagnostics) is
a coarse grid search refined by golden section.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import AmbiguousProjectionError, PathValidationError

#: Maximum allowed sample spacing (m).
MAX_SPACING = 1.0

#: Tangent/heading consistency tolerance at samples.
TANGENT_TOL = 1e-2

_CSV_HEADER = ["s", "X", "Y", "psi", "kappa"]

_INV_GOLD = (np.sqrt(5.0) - 1.0) / 2.0


class ReferencePath:
    """Arc-length sampled path with spline position and linear heading lookup."""

    def __init__(self, s, X, Y, psi, kappa, v_des: float = 0.0):
        s = np.asarray(s, dtype=float)
        X = np.asarray(X, dtype=float)
        Y = np.asarray(Y, dtype=float)
        psi = np.asarray(psi, dtype=float)
        kappa = np.asarray(kappa, dtype=float)
        if not (s.shape == X.shape == Y.shape == psi.shape == kappa.shape) or s.ndim != 1:
            raise PathValidationError("sample columns must be 1-d and equally sized")
        if s.size < 4:
            raise PathValidationError("need at least 4 samples")
        if abs(s[0]) > 1e-12:
            raise PathValidationError("arc length must start at 0")
        ds = np.diff(s)
        if np.any(ds <= 0.0):
            raise PathValidationError("arc length must be strictly increasing")
        if np.any(ds > MAX_SPACING * (1.0 + 1e-9)):
            raise PathValidationError(f"sample spacing must not exceed {MAX_SPACING} m")
        if np.any(np.abs(np.diff(psi)) > np.pi):
            raise PathValidationError("heading must be unwrapped (no 2*pi jumps)")

        self.s = s.copy()
        self.X = X.copy()
        self.Y = Y.copy()
        self.psi = psi.copy()
        self.kappa = kappa.copy()
        self.v_des = float(v_des)
        for arr in (self.s, self.X, self.Y, self.psi, self.kappa):
            arr.flags.writeable = False

        self._spl_x = CubicSpline(self.s, self.X)
        self._spl_y = CubicSpline(self.s, self.Y)
        self._spl_dx = self._spl_x.derivative()
        self._spl_dy = self._spl_y.derivative()
        self._psi_slope = np.diff(self.psi) / ds

        tx = self._spl_dx(self.s)
        ty = self._spl_dy(self.s)
        err = np.hypot(tx - np.cos(self.psi), ty - np.sin(self.psi))
        if np.max(err) > TANGENT_TOL:
            raise PathValidationError(
                f"heading inconsistent with position tangent (max dev {np.max(err):.4f})")

    @property
    def total_length(self) -> float:
        return float(self.s[-1])

    def _clamp(self, theta):
        return np.clip(theta, 0.0, self.total_length)

    def lookup(self, theta):
        """Pose and curvature at progress theta (clamped): (Xt, Yt, Psit, kappat)."""
        th = self._clamp(np.asarray(theta, dtype=float))
        Xt = self._spl_x(th)
        Yt = self._spl_y(th)
        Pt = np.interp(th, self.s, self.psi)
        Kt = np.interp(th, self.s, self.kappa)
        if np.ndim(theta) == 0:
            return float(Xt), float(Yt), float(Pt), float(Kt)
        return Xt, Yt, Pt, Kt

    def lookup_with_derivatives(self, theta):
        """Pose plus d/ds of position and heading, for gradient assembly.

        Returns (Xt, Yt, Psit, dXt, dYt, dPsit); heading slope is the
        piecewise-constant slope of the linear interpolant.
        """
        theta = np.asarray(theta, dtype=float)
        th = self._clamp(theta)
        seg = np.clip(np.searchsorted(self.s, th, side="right") - 1, 0, self.s.size - 2)
        Xt = self._spl_x(th)
        Yt = self._spl_y(th)
        Pt = np.interp(th, self.s, self.psi)
        # clamped lookups are constant, so their sensitivities vanish
        inside = (theta >= 0.0) & (theta <= self.total_length)
        dXt = np.where(inside, self._spl_dx(th), 0.0)
        dYt = np.where(inside, self._spl_dy(th), 0.0)
        dPt = np.where(inside, self._psi_slope[seg], 0.0)
        return Xt, Yt, Pt, dXt, dYt, dPt

    def to_csv(self, fileobj) -> None:
        """Write the sample table with the canonical header."""
        w = csv.writer(fileobj, lineterminator="\n")
        w.writerow(_CSV_HEADER)
        for row in zip(self.s, self.X, self.Y, self.psi, self.kappa):
            w.writerow([format(v, ".17g") for v in row])


def load_path_csv(fileobj, v_des: float = 0.0) -> ReferencePath:
    """Load a path table written by ``ReferencePath.to_csv``; validates on build."""
    if isinstance(fileobj, (str, bytes)):
        fileobj = io.StringIO(fileobj.decode() if isinstance(fileobj, bytes) else fileobj)
    reader = csv.reader(fileobj)
    header = next(reader, None)
    if header != _CSV_HEADER:
        raise PathValidationError(f"expected header {','.join(_CSV_HEADER)}")
    rows = [[float(v) for v in row] for row in reader if row]
    if not rows:
        raise PathValidationError("empty path table")
    cols = np.array(rows, dtype=float).T
    return ReferencePath(*cols, v_des=v_des)


@dataclass(frozen=True)
class Obstacle:
    """Static circular obstacle."""

    X: float
    Y: float
    radius: float

    def __post_init__(self) -> None:
        if self.radius <= 0.0:
            raise ValueError("obstacle radius must be positive")


@dataclass(frozen=True)
class TrackSpec:
    """Drivable corridor: centreline plus constant width."""

    centerline: ReferencePath
    width: float

    def __post_init__(self) -> None:
        if self.width <= 0.0:
            raise ValueError("track width must be positive")


def contouring_lag_errors(X, Y, theta, path: ReferencePath):
    """Rotated-displacement approximations of the lateral and progress error.

    e_con =  sin(Psit)*(X - Xt) - cos(Psit)*(Y - Yt)
    e_lag = -cos(Psit)*(X - Xt) - sin(Psit)*(Y - Yt)

    evaluated at the reference pose for progress theta.  Invariant under rigid
    motions applied to path and vehicle together.
    """
    Xt, Yt, Pt, _ = path.lookup(theta)
    dX = np.asarray(X, dtype=float) - Xt
    dY = np.asarray(Y, dtype=float) - Yt
    sp, cp = np.sin(Pt), np.cos(Pt)
    e_con = sp * dX - cp * dY
    e_lag = -cp * dX - sp * dY
    if np.ndim(X) == 0 and np.ndim(theta) == 0:
        return float(e_con), float(e_lag)
    return e_con, e_lag


def v2o_distance_cartesian(X, Y, obstacle: Obstacle, r_veh: float):
    """Bumper-to-bumper Euclidean distance between vehicle and obstacle circles."""
    d = np.hypot(np.asarray(X, dtype=float) - obstacle.X,
                 np.asarray(Y, dtype=float) - obstacle.Y)
    out = d - obstacle.radius - r_veh
    if np.ndim(X) == 0 and np.ndim(Y) == 0:
        return float(out)
    return out


def v2o_distance_frenet(s_v, d_v, s_o, d_o, r_obs: float, r_veh: float):
    """Circle distance measured in Frenet coordinates (arc/normal plane).

    Overestimates the Cartesian distance on curved reference lines because the
    arc separation replaces the chord.
    """
    sep = np.hypot(np.asarray(s_v, dtype=float) - s_o,
                   np.asarray(d_v, dtype=float) - d_o)
    out = sep - r_obs - r_veh
    if np.ndim(s_v) == 0 and np.ndim(d_v) == 0:
        return float(out)
    return out


def _golden_min(fun, lo: float, hi: float, tol: float = 1e-10) -> float:
    """Deterministic golden-section minimizer on [lo, hi]."""
    a, b = lo, hi
    c = b - _INV_GOLD * (b - a)
    d = a + _INV_GOLD * (b - a)
    fc, fd = fun(c), fun(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INV_GOLD * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_GOLD * (b - a)
            fd = fun(d)
    return 0.5 * (a + b)


def project_to_path(X: float, Y: float, path: ReferencePath,
                    coarse_step: float = 1.0) -> tuple[float, float]:
    """Closest-point projection of (X, Y) onto the path.

    Returns (s_star, d) with d the signed lateral offset (positive to the
    left of the tangent).  Coarse grid search at ``coarse_step`` followed by
    golden-section refinement.  Raises AmbiguousProjectionError when two
    refined local minima are closer than 1e-3 m in distance but more than
    1 m apart in arc length.
    """
    L = path.total_length
    grid = np.arange(0.0, L + coarse_step, coarse_step)
    grid[-1] = min(grid[-1], L)
    px = path._spl_x(grid)
    py = path._spl_y(grid)
    d2 = (px - X) ** 2 + (py - Y) ** 2

    def dist2(s):
        return (path._spl_x(s) - X) ** 2 + (path._spl_y(s) - Y) ** 2

    # local minima of the coarse profile (endpoints included)
    n = d2.size
    cand = [i for i in range(n)
            if (i == 0 or d2[i] <= d2[i - 1]) and (i == n - 1 or d2[i] <= d2[i + 1])]
    best_coarse = float(np.sqrt(d2.min()))
    refined = []
    for i in cand:
        if np.sqrt(d2[i]) > best_coarse + 2.0 * coarse_step:
            continue
        lo = grid[max(i - 1, 0)]
        hi = grid[min(i + 1, n - 1)]
        s_star = _golden_min(dist2, float(lo), float(hi))
        refined.append((float(np.sqrt(dist2(s_star))), float(s_star)))

    refined.sort()
    d_best, s_best = refined[0]
    for d_other, s_other in refined[1:]:
        if d_other - d_best < 1e-3 and abs(s_other - s_best) > 1.0:
            raise AmbiguousProjectionError(
                f"projections at s={s_best:.3f} and s={s_other:.3f} are equally close")

    Xt, Yt, Pt, _ = path.lookup(s_best)
    d_signed = -np.sin(Pt) * (X - Xt) + np.cos(Pt) * (Y - Yt)
    return s_best, float(d_signed)


def v2e_distance(X: float, Y: float, track: TrackSpec, r_veh: float) -> tuple[float, float]:
    """Distances of the vehicle circle to the left and right track edges.

    Uses the signed offset from projection onto the centreline:
    D_left = W/2 - d - r_veh, D_right = W/2 + d - r_veh.  Negative means the
    vehicle circle crosses that edge.
    """
    _, d = project_to_path(X, Y, track.centerline)
    half = 0.5 * track.width
    return half - d - r_veh, half + d - r_veh


def straight_path(length: float, spacing: float = 0.5, y: float = 0.0,
                  v_des: float = 0.0) -> ReferencePath:
    """Straight path along +X at constant lateral offset y."""
    n = max(int(np.ceil(length / spacing)) + 1, 4)
    s = np.linspace(0.0, length, n)
    return ReferencePath(s, s, np.full(n, y), np.zeros(n), np.zeros(n), v_des=v_des)


def circle_path(radius: float, arc_length: float, spacing: float = 0.5,
                ccw: bool = True, v_des: float = 0.0) -> ReferencePath:
    """Circular arc starting at the origin with initial heading +X."""
    if radius <= 0.0:
        raise ValueError("radius must be positive")
    n = max(int(np.ceil(arc_length / spacing)) + 1, 8)
    s = np.linspace(0.0, arc_length, n)
    sign = 1.0 if ccw else -1.0
    ang = s / radius
    X = radius * np.sin(ang)
    Y = sign * radius * (1.0 - np.cos(ang))
    psi = sign * ang
    kappa = np.full(n, sign / radius)
    return ReferencePath(s, X, Y, psi, kappa, v_des=v_des)


def path_from_dense_xy(x_dense, y_dense, spacing: float = 0.5,
                       v_des: float = 0.0) -> ReferencePath:
    """Build an arc-length parameterized path from a dense Cartesian polyline.

    The input must already be smooth at the sub-spacing scale; heading and
    curvature come from finite differences on the dense data before
    resampling at the uniform spacing.
    """
    x = np.asarray(x_dense, dtype=float)
    y = np.asarray(y_dense, dtype=float)
    ds = np.hypot(np.diff(x), np.diff(y))
    s = np.concatenate([[0.0], np.cumsum(ds)])
    dx = np.gradient(x, s)
    dy = np.gradient(y, s)
    psi = np.unwrap(np.arctan2(dy, dx))
    kappa = np.gradient(psi, s)

    L = s[-1]
    n = max(int(np.ceil(L / spacing)) + 1, 4)
    sg = np.linspace(0.0, L, n)
    return ReferencePath(
        sg,
        np.interp(sg, s, x),
        np.interp(sg, s, y),
        np.interp(sg, s, psi),
        np.interp(sg, s, kappa),
        v_des=v_des,
    )
