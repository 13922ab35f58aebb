"""Path geometry tests: lookup accuracy, error rotation invariance, distances,
projection, CSV round trips.  Oracles are closed-form circle/line geometry."""

import io
import math

import numpy as np
import pytest

from mpcc.errors import AmbiguousProjectionError, PathValidationError
from mpcc.path import (
    Obstacle,
    ReferencePath,
    TrackSpec,
    circle_path,
    contouring_lag_errors,
    load_path_csv,
    path_from_dense_xy,
    project_to_path,
    straight_path,
    v2e_distance,
    v2o_distance_cartesian,
    v2o_distance_frenet,
)


def u_turn_path():
    """Straight, half circle of radius 5, straight back: two parallel legs."""
    t1 = np.linspace(0.0, 40.0, 801)
    leg1 = np.column_stack([t1, np.zeros_like(t1)])
    ang = np.linspace(-0.5 * np.pi, 0.5 * np.pi, 301)[1:]
    arc = np.column_stack([40.0 + 5.0 * np.cos(ang), 5.0 + 5.0 * np.sin(ang)])
    t2 = np.linspace(40.0, 0.0, 801)[1:]
    leg2 = np.column_stack([t2, np.full_like(t2, 10.0)])
    xy = np.vstack([leg1, arc, leg2])
    return path_from_dense_xy(xy[:, 0], xy[:, 1], spacing=0.5)


# ---------------------------------------------------------------------------
# construction and lookup


def test_lookup_exact_at_samples():
    p = circle_path(20.0, 60.0, spacing=0.5)
    for i in (0, 7, 33, p.s.size - 1):
        Xt, Yt, Pt, Kt = p.lookup(p.s[i])
        assert Xt == pytest.approx(p.X[i], abs=1e-12)
        assert Yt == pytest.approx(p.Y[i], abs=1e-12)
        assert Pt == pytest.approx(p.psi[i], abs=1e-12)
        assert Kt == pytest.approx(p.kappa[i], abs=1e-12)


def test_lookup_circle_midpoint_accuracy():
    R = 20.0
    p = circle_path(R, 80.0, spacing=0.5)
    mids = 0.5 * (p.s[:-1] + p.s[1:])
    Xt, Yt, _, _ = p.lookup(mids)
    X_true = R * np.sin(mids / R)
    Y_true = R * (1.0 - np.cos(mids / R))
    assert np.max(np.hypot(Xt - X_true, Yt - Y_true)) <= 1e-4


def test_lookup_clamps():
    p = straight_path(50.0)
    Xt, Yt, _, _ = p.lookup(80.0)
    assert (Xt, Yt) == (50.0, 0.0)
    Xt, _, _, _ = p.lookup(-5.0)
    assert Xt == 0.0


def test_validation_errors():
    n = 10
    s = np.linspace(0.0, 9.0, n)
    z = np.zeros(n)
    with pytest.raises(PathValidationError):  # spacing over 1 m
        ReferencePath(np.linspace(0, 20, n), np.linspace(0, 20, n), z, z, z)
    with pytest.raises(PathValidationError):  # non-monotone s
        bad = s.copy(); bad[4] = bad[3]
        ReferencePath(bad, s, z, z, z)
    with pytest.raises(PathValidationError):  # wrapped heading
        psi = z.copy(); psi[5:] = 2.0 * np.pi
        ReferencePath(s, s, z, psi, z)
    with pytest.raises(PathValidationError):  # heading inconsistent with tangent
        ReferencePath(s, s, z, np.full(n, 0.5), z)
    with pytest.raises(PathValidationError):  # s must start at zero
        ReferencePath(s + 1.0, s, z, z, z)


# ---------------------------------------------------------------------------
# contouring / lag errors


def test_errors_zero_on_path():
    p = straight_path(100.0)
    e_con, e_lag = contouring_lag_errors(30.0, 0.0, 30.0, p)
    assert e_con == pytest.approx(0.0, abs=1e-12)
    assert e_lag == pytest.approx(0.0, abs=1e-12)


def test_errors_pure_lateral_and_longitudinal():
    p = straight_path(100.0)
    # 1 m to the left of the reference point
    e_con, e_lag = contouring_lag_errors(30.0, 1.0, 30.0, p)
    assert e_con == pytest.approx(-1.0, abs=1e-12)
    assert e_lag == pytest.approx(0.0, abs=1e-12)
    # 2 m ahead along the tangent
    e_con, e_lag = contouring_lag_errors(32.0, 0.0, 30.0, p)
    assert e_con == pytest.approx(0.0, abs=1e-12)
    assert e_lag == pytest.approx(-2.0, abs=1e-12)


def test_errors_rigid_motion_invariance():
    rng = np.random.default_rng(4)
    base = circle_path(25.0, 70.0, spacing=0.5)
    for _ in range(20):
        ang = rng.uniform(-np.pi, np.pi)
        tx, ty = rng.uniform(-100, 100, 2)
        c, s = math.cos(ang), math.sin(ang)
        Xr = c * base.X - s * base.Y + tx
        Yr = s * base.X + c * base.Y + ty
        rot = ReferencePath(base.s, Xr, Yr, base.psi + ang, base.kappa)
        X0, Y0 = rng.uniform(0, 40), rng.uniform(-10, 10)
        th = rng.uniform(0, 70)
        e0 = contouring_lag_errors(X0, Y0, th, base)
        X1 = c * X0 - s * Y0 + tx
        Y1 = s * X0 + c * Y0 + ty
        e1 = contouring_lag_errors(X1, Y1, th, rot)
        assert e1[0] == pytest.approx(e0[0], abs=1e-12)
        assert e1[1] == pytest.approx(e0[1], abs=1e-12)


# ---------------------------------------------------------------------------
# distances


def test_v2o_cartesian_examples():
    obs = Obstacle(3.0, 4.0, 1.0)
    assert v2o_distance_cartesian(0.0, 0.0, obs, 1.0) == pytest.approx(3.0, abs=1e-12)
    # touching circles
    assert v2o_distance_cartesian(0.0, 0.0, Obstacle(2.0, 0.0, 1.0), 1.0) == pytest.approx(0.0, abs=1e-12)
    # overlap is negative
    assert v2o_distance_cartesian(0.0, 0.0, Obstacle(1.0, 0.0, 1.0), 1.0) < 0.0


def test_v2o_frenet_chord_gap():
    R, ds = 20.0, 20.0
    chord = 2.0 * R * math.sin(ds / (2.0 * R))
    frenet = v2o_distance_frenet(0.0, 0.0, ds, 0.0, 1.0, 1.2)
    cart = chord - 1.0 - 1.2
    assert frenet - cart == pytest.approx(ds - chord, abs=1e-12)
    assert frenet - cart == pytest.approx(0.822978, abs=5e-7)


def test_frenet_dominates_cartesian_on_circle():
    R = 15.0
    r_obs, r_veh = 1.0, 1.2
    s_obs = 20.0
    obs_ang = s_obs / R
    obs = Obstacle(R * math.sin(obs_ang), R * (1.0 - math.cos(obs_ang)), r_obs)
    svs = np.linspace(0.0, s_obs, 101)
    for sv in svs:
        xv, yv = R * math.sin(sv / R), R * (1.0 - math.cos(sv / R))
        d_cart = v2o_distance_cartesian(xv, yv, obs, r_veh)
        d_fre = v2o_distance_frenet(sv, 0.0, s_obs, 0.0, r_obs, r_veh)
        gap = d_fre - d_cart
        ds = s_obs - sv
        assert gap >= -1e-12
        assert gap <= ds**3 / (24.0 * R * R) + 1e-12


# ---------------------------------------------------------------------------
# projection


def test_project_straight():
    p = straight_path(100.0)
    s, d = project_to_path(30.2, 4.0, p)
    assert s == pytest.approx(30.2, abs=1e-6)
    assert d == pytest.approx(4.0, abs=1e-6)


def test_project_circle():
    R = 20.0
    p = circle_path(R, 0.75 * np.pi * R, spacing=0.5)
    ang = np.pi / 6.0
    # point at polar angle 30 deg, radius 22, measured from the circle centre (0, R)
    X = 22.0 * math.sin(ang)
    Y = R - 22.0 * math.cos(ang)
    s, d = project_to_path(X, Y, p)
    assert s == pytest.approx(R * ang, abs=1e-5)
    assert d == pytest.approx(-2.0, abs=1e-5)


def test_project_reconstruction_identity():
    rng = np.random.default_rng(9)
    p = circle_path(20.0, 60.0, spacing=0.5)
    for _ in range(25):
        s0 = rng.uniform(2.0, 58.0)
        d0 = rng.uniform(-3.0, 3.0)
        Xt, Yt, Pt, _ = p.lookup(s0)
        X = Xt - d0 * math.sin(Pt)
        Y = Yt + d0 * math.cos(Pt)
        s, d = project_to_path(X, Y, p)
        assert s == pytest.approx(s0, abs=1e-5)
        assert d == pytest.approx(d0, abs=1e-6)


def test_project_ambiguous():
    p = u_turn_path()
    with pytest.raises(AmbiguousProjectionError):
        project_to_path(20.0, 5.0, p)
    # off the midline the projection is well defined again
    s, d = project_to_path(20.0, 1.0, p)
    assert s == pytest.approx(20.0, abs=1e-3)
    assert d == pytest.approx(1.0, abs=1e-3)


# ---------------------------------------------------------------------------
# edges


def test_v2e_examples():
    track = TrackSpec(centerline=straight_path(200.0), width=7.0)
    left, right = v2e_distance(50.0, 0.0, track, 1.2)
    assert left == pytest.approx(2.3, abs=1e-9)
    assert right == pytest.approx(2.3, abs=1e-9)
    left, right = v2e_distance(50.0, 1.0, track, 1.2)
    assert left == pytest.approx(1.3, abs=1e-9)
    assert right == pytest.approx(3.3, abs=1e-9)
    # crossing the left edge goes negative
    left, _ = v2e_distance(50.0, 3.0, track, 1.2)
    assert left < 0.0


# ---------------------------------------------------------------------------
# CSV round trip


def test_csv_round_trip():
    p = circle_path(20.0, 40.0, spacing=0.5, v_des=17.0)
    buf = io.StringIO()
    p.to_csv(buf)
    text = buf.getvalue()
    assert text.splitlines()[0] == "s,X,Y,psi,kappa"
    q = load_path_csv(io.StringIO(text), v_des=17.0)
    np.testing.assert_array_equal(p.s, q.s)
    np.testing.assert_array_equal(p.X, q.X)
    np.testing.assert_array_equal(p.Y, q.Y)
    np.testing.assert_array_equal(p.psi, q.psi)
    np.testing.assert_array_equal(p.kappa, q.kappa)


def test_csv_rejects_bad_header():
    with pytest.raises(PathValidationError):
        load_path_csv(io.StringIO("s,x,y,psi,k\n0,0,0,0,0\n"))
