import numpy as np
import pytest

from fringelab.errors import ParseError, ValidationError
from fringelab.scene import (
    ArrayGeometry,
    TargetTrajectory,
    circle_trajectory,
    expected_shifts,
    kinematics_at,
    line_trajectory,
    load_ground_truth,
    path_geometry,
    spiral_trajectory,
    write_ground_truth,
)

GEOM = ArrayGeometry.standard(carrier_hz=40e9, baseline_lambdas=20.0)


def test_standard_geometry_numbers():
    assert GEOM.wavelength_m == pytest.approx(7.49481145e-3, rel=1e-8)
    assert GEOM.baseline_m == pytest.approx(20 * GEOM.wavelength_m)
    (x1, y1), (x2, y2) = GEOM.rx_xy_m
    assert x1 > 0 > x2 and y1 == y2 == 0.0
    assert x1 == pytest.approx(-x2)


def test_geometry_validation():
    with pytest.raises(ValidationError):
        ArrayGeometry(carrier_hz=-1.0, baseline_m=0.1)
    with pytest.raises(ValidationError):
        ArrayGeometry(carrier_hz=40e9, baseline_m=0.0)


def test_trajectory_validation():
    with pytest.raises(ValidationError):
        TargetTrajectory(1, [0.0], [0.0], [1.0])
    with pytest.raises(ValidationError):
        TargetTrajectory(1, [0.0, 0.0], [0.0, 0.0], [1.0, 1.0])
    with pytest.raises(ValidationError):
        TargetTrajectory(1, [0.0, 1.0], [0.0, np.nan], [1.0, 1.0])
    with pytest.raises(ValidationError):
        TargetTrajectory(1, [0.0, 1.0], [0.0, 0.0], [1.0, 1.0], amplitude=0.0)


def test_position_at_outside_span():
    traj = line_trajectory(1, (0.0, 5.0), (0.0, 0.0), duration_s=2.0)
    with pytest.raises(ValidationError):
        traj.position_at(-0.1)
    with pytest.raises(ValidationError):
        traj.position_at(2.1)


def test_ranges_match_hypot():
    traj = line_trajectory(3, (0.3, 5.0), (0.1, -0.2), duration_s=4.0)
    t = 1.7
    x, y = traj.position_at(t)
    r_tx, ranges, thetas = path_geometry(traj, GEOM, t)
    assert r_tx == pytest.approx(np.hypot(x, y))
    for (ax, ay), r, th in zip(GEOM.rx_xy_m, ranges, thetas):
        assert r == pytest.approx(np.hypot(x - ax, y - ay))
        assert th == pytest.approx(np.arctan2(x - ax, y - ay))


def test_bearing_sign_convention():
    # target on the +x side of broadside has positive bearing
    traj = line_trajectory(1, (1.0, 5.0), (0.0, 0.0), duration_s=1.0)
    st = kinematics_at(traj, GEOM, 0.5)
    assert st.theta_rad[0] > 0 and st.theta_rad[1] > 0


def test_delay_consistency():
    traj = line_trajectory(1, (0.2, 6.0), (0.0, -0.4), duration_s=3.0)
    st = kinematics_at(traj, GEOM, 1.25)
    for i in range(2):
        assert st.tau_s[i] * 299_792_458.0 == pytest.approx(st.range_tx_m + st.range_m[i])


def test_doppler_oracle_approaching():
    # head-on approach at 0.5 m/s from far away: f_D = 2 v / lambda = 133.4256 Hz
    traj = line_trajectory(1, (0.0, 50.0), (0.0, -0.5), duration_s=4.0, rate_hz=240.0)
    fd, _ = expected_shifts(traj, GEOM, 2.0)
    assert fd == pytest.approx(2 * 0.5 / GEOM.wavelength_m, rel=1e-4)
    assert fd == pytest.approx(133.4256, abs=0.02)
    assert fd > 0  # approaching targets have positive Doppler

    receding = line_trajectory(1, (0.0, 50.0), (0.0, 0.5), duration_s=4.0, rate_hz=240.0)
    fd_r, _ = expected_shifts(receding, GEOM, 2.0)
    assert fd_r == pytest.approx(-fd, rel=1e-6)


def test_omega_oracle_circle():
    # tangential speed 0.36 m/s on a 5 m circle: omega = 0.072 rad/s
    traj = circle_trajectory(1, (0.0, 0.0), radius_m=5.0, omega_radps=0.072,
                             duration_s=8.0, rate_hz=240.0,
                             start_angle_rad=-0.288)
    st = kinematics_at(traj, GEOM, 4.0)
    # per-antenna rates differ from the center rate at order baseline/range
    assert st.omega_radps[0] == pytest.approx(0.072, rel=1e-3)
    assert st.omega_radps[1] == pytest.approx(0.072, rel=1e-3)
    speed = 5.0 * 0.072
    assert speed == pytest.approx(0.36)


def test_interferometric_oracle():
    # omega = 0.072 rad/s on a 20-lambda baseline: 1.44 Hz near broadside
    traj = circle_trajectory(1, (0.0, 0.0), radius_m=5.0, omega_radps=0.072,
                             duration_s=8.0, rate_hz=240.0, start_angle_rad=-0.288)
    _, fi = expected_shifts(traj, GEOM, 4.0)
    assert fi == pytest.approx(1.44, abs=1e-3)

    neg = circle_trajectory(1, (0.0, 0.0), radius_m=5.0, omega_radps=-0.053,
                            duration_s=8.0, rate_hz=240.0, start_angle_rad=0.212)
    _, fi_neg = expected_shifts(neg, GEOM, 4.0)
    assert fi_neg == pytest.approx(-1.06, abs=1e-3)


def test_interferometric_model_matches_doppler_difference():
    # the fringe term approximates the difference of the per-antenna
    # Dopplers to first order in baseline / range
    traj = spiral_trajectory(1, range0_m=6.0, bearing0_rad=-0.2, v_radial_mps=0.4,
                             omega_radps=0.09, duration_s=8.0, rate_hz=240.0)
    t = np.linspace(0.5, 7.5, 15)
    st = kinematics_at(traj, GEOM, t)
    exact = 2 * (np.asarray(st.v_radial_mps[0]) - np.asarray(st.v_radial_mps[1])) / GEOM.wavelength_m
    _, model = expected_shifts(traj, GEOM, t, bearing_threshold_rad=0.0)
    assert np.allclose(model, exact, rtol=0.03, atol=0.03)


def test_obliquity_beyond_threshold():
    traj = circle_trajectory(1, (0.0, 0.0), radius_m=5.0, omega_radps=0.08,
                             duration_s=10.0, rate_hz=240.0, start_angle_rad=0.3)
    st = kinematics_at(traj, GEOM, 5.0)
    th = st.theta_rad[0]
    assert abs(th) > 0.2
    _, fi = expected_shifts(traj, GEOM, 5.0)
    lam = GEOM.wavelength_m
    assert fi == pytest.approx(st.omega_radps[0] * GEOM.baseline_m / lam * np.cos(th), rel=1e-9)
    # inside the cone the obliquity factor is dropped
    _, fi0 = expected_shifts(traj, GEOM, 5.0, bearing_threshold_rad=1.0)
    assert fi0 == pytest.approx(st.omega_radps[0] * GEOM.baseline_m / lam, rel=1e-9)


def test_time_reversal_antisymmetry():
    rng = np.random.default_rng(7)
    t = np.linspace(0.0, 6.0, 721)
    x = 0.4 * np.sin(0.7 * t) + 0.05 * np.cos(1.3 * t)
    y = 5.0 + 0.3 * np.sin(0.4 * t + 1.0)
    fwd = TargetTrajectory(1, t, x, y)
    rev = TargetTrajectory(1, t, x[::-1].copy(), y[::-1].copy())
    q = rng.uniform(0.0, 6.0, 40)
    sf = kinematics_at(fwd, GEOM, q)
    sr = kinematics_at(rev, GEOM, 6.0 - q)
    for i in range(2):
        assert np.allclose(sf.v_radial_mps[i], -sr.v_radial_mps[i], atol=1e-9)
        assert np.allclose(sf.omega_radps[i], -sr.omega_radps[i], atol=1e-9)
        assert np.allclose(sf.range_m[i], sr.range_m[i], atol=1e-12)


def test_angle_wrap_behind_array():
    # path crossing the -y axis must not produce 2*pi jumps in omega
    traj = circle_trajectory(1, (0.0, 0.0), radius_m=5.0, omega_radps=0.5,
                             duration_s=14.0, rate_hz=240.0, start_angle_rad=np.pi - 1.0)
    t = np.linspace(0.5, 13.5, 200)
    st = kinematics_at(traj, GEOM, t)
    # a wrap bug would show up as jumps of order 2*pi / diff step
    assert np.allclose(st.omega_radps[0], 0.5, rtol=0.02)


def test_edge_one_sided_differences():
    traj = line_trajectory(1, (0.0, 8.0), (0.0, -0.5), duration_s=2.0)
    st0 = kinematics_at(traj, GEOM, 0.0)
    st1 = kinematics_at(traj, GEOM, 2.0)
    for st in (st0, st1):
        assert st.v_radial_mps[0] == pytest.approx(0.5, rel=1e-4)


def test_smoothed_trajectory():
    t = np.linspace(0, 1, 101)
    const = TargetTrajectory(1, t, np.full_like(t, 0.3), np.full_like(t, 5.0))
    sm = const.smoothed(9)
    assert sm.x_m == pytest.approx(const.x_m, abs=1e-12)
    rng = np.random.default_rng(0)
    noisy = TargetTrajectory(1, t, 0.3 + rng.normal(0, 0.01, t.size), np.full_like(t, 5.0))
    sm = noisy.smoothed(25)
    assert np.std(sm.x_m[20:-20]) < np.std(noisy.x_m[20:-20])
    assert noisy.smoothed(1).x_m == pytest.approx(noisy.x_m)


def test_truth_roundtrip(tmp_path):
    t1 = line_trajectory(1, (0.1, 7.0), (0.0, -0.5), duration_s=2.0, rate_hz=120.0)
    t2 = circle_trajectory(4, (0.0, 0.0), 5.0, 0.072, duration_s=2.0, rate_hz=120.0)
    path = tmp_path / "truth.csv"
    write_ground_truth(path, [t2, t1])
    back = load_ground_truth(path)
    assert [tr.target_id for tr in back] == [1, 4]
    assert np.array_equal(back[0].t_s, t1.t_s)
    assert np.array_equal(back[0].x_m, t1.x_m)
    assert np.array_equal(back[1].y_m, t2.y_m)


def test_truth_parsing_comments_and_header(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("# comment\nt,target_id,x,y\n0.0,1,0.0,5.0\n\n0.5,1,0.1,4.9\n")
    trajs = load_ground_truth(p)
    assert len(trajs) == 1 and trajs[0].t_s.size == 2


def test_truth_parse_errors(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("0.0,1,0.0\n")
    with pytest.raises(ParseError, match="line 1"):
        load_ground_truth(p)
    p.write_text("0.0,1,0.0,5.0\nx,1,0.1,4.9\n")
    with pytest.raises(ParseError, match="line 2"):
        load_ground_truth(p)
    p.write_text("0.0,1,0.0,5.0\n0.0,1,0.1,4.9\n")
    with pytest.raises(ParseError, match="does not increase"):
        load_ground_truth(p)
    p.write_text("# only comments\n")
    with pytest.raises(ValidationError):
        load_ground_truth(p)


def test_truth_interleaved_targets(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("0.0,2,1.0,5.0\n0.0,1,0.0,5.0\n0.5,2,1.0,4.9\n0.5,1,0.1,4.9\n")
    trajs = load_ground_truth(p)
    assert [tr.target_id for tr in trajs] == [1, 2]


def test_spiral_range_guard():
    with pytest.raises(ValidationError):
        spiral_trajectory(1, range0_m=2.0, bearing0_rad=0.0, v_radial_mps=0.5,
                          omega_radps=0.0, duration_s=8.0)


def test_scalar_and_array_queries():
    traj = line_trajectory(1, (0.0, 6.0), (0.1, -0.3), duration_s=3.0)
    st = kinematics_at(traj, GEOM, 1.0)
    assert isinstance(st.v_radial_mps[0], float)
    sa = kinematics_at(traj, GEOM, np.array([1.0, 2.0]))
    assert sa.v_radial_mps[0].shape == (2,)
    assert sa.v_radial_mps[0][0] == pytest.approx(st.v_radial_mps[0])
