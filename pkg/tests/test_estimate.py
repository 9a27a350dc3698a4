import numpy as np
import pytest

from fringelab.decomp import DecompConfig, decompose_and_correlate
from fringelab.dsp import StftConfig, TimeFrequencyMap, stft
from fringelab.errors import ValidationError
from fringelab.estimate import (EstimateSeries, peak_track, smooth, stats,
                                to_omega)
from fringelab.scene import ArrayGeometry, kinematics_at, spiral_trajectory
from fringelab.synth import WaveformConfig, synthesize

GEOM = ArrayGeometry.standard()


def tone_map(f_hz, duration_s=4.0, fs=1920.0):
    t = np.arange(int(round(duration_s * fs))) / fs
    x = np.exp(2j * np.pi * f_hz * t)
    cfg = StftConfig(window_len=1024, fft_len=8192, overlap=960)
    return stft(x, fs, cfg)


def flat_series(f_hz, n=100, hop_s=1 / 30.0):
    t = np.arange(n) * hop_s
    f = np.full(n, float(f_hz))
    return EstimateSeries(t, f, np.full(n, np.nan), np.ones(n, dtype=bool))


def test_peak_track_constant_tone():
    series = peak_track(tone_map(1.44))
    assert series.n_valid == series.n_frames
    assert np.all(np.abs(series.f_hz - 1.44) < 0.05)
    assert np.all(np.isnan(series.omega_radps))


def test_peak_track_silent_response():
    tf = TimeFrequencyMap(np.arange(5) / 30.0, np.linspace(-10, 10, 64),
                          np.zeros((5, 64)))
    series = peak_track(tf)
    assert series.n_valid == 0
    assert np.all(np.isnan(series.f_hz))


def test_peak_track_floor_marks_weak_tail_invalid():
    freq = np.linspace(-10, 10, 64)
    vals = np.zeros((20, 64))
    vals[:10, 40] = 1.0
    vals[10:, 40] = 10.0 ** (-30.0 / 20.0)  # 30 dB down, floor is -20 dB
    series = peak_track(TimeFrequencyMap(np.arange(20) / 30.0, freq, vals))
    assert np.all(series.valid[:10])
    assert not np.any(series.valid[10:])


def test_peak_track_scale_invariant():
    rng = np.random.default_rng(11)
    vals = rng.uniform(0.0, 1.0, (12, 48))
    vals[3] *= 0.01  # below floor
    freq = np.linspace(-20, 20, 48)
    t = np.arange(12) / 30.0
    a = peak_track(TimeFrequencyMap(t, freq, vals))
    b = peak_track(TimeFrequencyMap(t, freq, vals * 7.3))
    assert np.array_equal(a.valid, b.valid)
    assert np.allclose(a.f_hz[a.valid], b.f_hz[b.valid], atol=1e-9)


def test_peak_track_rejects_empty():
    with pytest.raises(ValidationError):
        peak_track(TimeFrequencyMap(np.array([]), np.array([]),
                                    np.zeros((0, 0))))


def test_smooth_constant_series_unchanged():
    series = flat_series(1.44)
    out = smooth(series, 60)
    assert np.allclose(out.f_hz, 1.44, atol=1e-12)
    assert np.array_equal(out.valid, series.valid)


def test_smooth_window_one_is_identity():
    rng = np.random.default_rng(0)
    series = flat_series(0.0, n=50)
    series.f_hz[:] = rng.normal(size=50)
    out = smooth(series, 1)
    # cumsum-based averaging leaves rounding at the 1e-15 level
    assert np.allclose(out.f_hz, series.f_hz, atol=1e-12)


def test_smooth_noise_reduction_sqrt_window():
    # white noise: smoothed std should drop by ~sqrt(60) away from edges
    rng = np.random.default_rng(42)
    series = flat_series(0.0, n=1000)
    series.f_hz[:] = rng.normal(0.0, 1.0, 1000)
    out = smooth(series, 60)
    interior = out.f_hz[60:-60]
    expect = 1.0 / np.sqrt(60.0)
    assert np.std(interior) == pytest.approx(expect, rel=0.25)


def test_smooth_skips_invalid_frames():
    series = flat_series(1.0, n=9)
    series.valid[4] = False
    series.f_hz[4] = np.nan
    out = smooth(series, 3)
    assert np.allclose(out.f_hz[out.valid], 1.0)
    assert not out.valid[4] and np.isnan(out.f_hz[4])


def test_smooth_conserves_window_weighted_mean():
    # each sample appears in exactly as many windows as its own window
    # holds samples (odd widths), so that weighted mean is conserved
    rng = np.random.default_rng(5)
    n, w = 101, 7
    series = flat_series(0.0, n=n)
    series.f_hz[:] = rng.uniform(-3, 3, n)
    out = smooth(series, w)
    idx = np.arange(n)
    lo = np.maximum(idx - (w - 1) // 2, 0)
    hi = np.minimum(idx + w // 2, n - 1)
    weights = (hi - lo + 1).astype(float)
    assert np.sum(weights * out.f_hz) == pytest.approx(
        np.sum(weights * series.f_hz), rel=1e-12)


def test_to_omega_small_angle_oracle():
    # omega = f * lambda / D with D = 20 lambda: 1.44 Hz -> 0.072 rad/s
    series = flat_series(1.44, n=10)
    out = to_omega(series, GEOM)
    assert np.allclose(out.omega_radps, 0.072, rtol=1e-12)
    out = to_omega(flat_series(-1.06, n=10), GEOM)
    assert np.allclose(out.omega_radps, -0.053, rtol=1e-12)
    out = to_omega(flat_series(0.0, n=10), GEOM)
    assert np.allclose(out.omega_radps, 0.0)


def test_to_omega_linear_in_frequency():
    rng = np.random.default_rng(2)
    series = flat_series(0.0, n=40)
    series.f_hz[:] = rng.uniform(-5, 5, 40)
    scaled = EstimateSeries(series.frame_time_s, 3.7 * series.f_hz,
                            series.omega_radps, series.valid)
    a = to_omega(series, GEOM)
    b = to_omega(scaled, GEOM)
    assert np.allclose(b.omega_radps, 3.7 * a.omega_radps, rtol=1e-12)


def test_to_omega_obliquity():
    n = 4
    series = flat_series(1.44, n=n)
    theta = np.array([0.0, 0.1, 0.5, 1.58])
    out = to_omega(series, GEOM, bearing_rad=theta)
    # below threshold: small-angle form
    assert out.omega_radps[0] == pytest.approx(0.072, rel=1e-12)
    assert out.omega_radps[1] == pytest.approx(0.072, rel=1e-12)
    assert out.omega_radps[2] == pytest.approx(0.072 / np.cos(0.5), rel=1e-12)
    # nearly endfire: conversion would amplify noise 100x, flagged instead
    assert not out.valid[3] and np.isnan(out.omega_radps[3])


def test_to_omega_bearing_shape_checked():
    with pytest.raises(ValidationError):
        to_omega(flat_series(1.0, n=5), GEOM, bearing_rad=np.zeros(4))


def test_stats_identical_series():
    t = np.linspace(0.0, 8.0, 200)
    series = EstimateSeries(t, np.full(200, 1.44), np.full(200, 0.072),
                            np.ones(200, dtype=bool))
    st = stats(series, np.array([0.0, 8.0]), np.array([0.072, 0.072]))
    assert st.mu_true_radps == st.mu_est_radps
    assert st.mu_est_radps == pytest.approx(0.072, abs=1e-15)
    assert st.std_radps == pytest.approx(0.0, abs=1e-15)
    assert st.n_valid_frames == 200


def test_stats_fixed_offset():
    rng = np.random.default_rng(9)
    tt = np.linspace(0.0, 8.0, 400)
    tw = 0.05 + 0.01 * np.sin(tt)
    frame_t = np.linspace(0.5, 7.5, 120)
    truth_at_frames = np.interp(frame_t, tt, tw)
    b = 0.013
    est = truth_at_frames + b
    series = EstimateSeries(frame_t, est * 20.0 / GEOM.wavelength_m, est,
                            np.ones(120, dtype=bool))
    st = stats(series, tt, tw)
    assert st.mu_est_radps - st.mu_true_radps == pytest.approx(b, abs=1e-12)
    assert st.std_radps == pytest.approx(np.std(est, ddof=1), rel=1e-12)


def test_stats_requires_overlap():
    series = flat_series(1.44, n=10)
    with pytest.raises(ValidationError):
        stats(series, np.array([100.0, 200.0]), np.array([0.0, 0.0]))
    series.valid[:] = False
    with pytest.raises(ValidationError):
        stats(series, np.array([0.0, 10.0]), np.array([0.0, 0.0]))


def test_stats_time_translation_symmetry():
    rng = np.random.default_rng(7)
    tt = np.linspace(0.0, 8.0, 100)
    tw = rng.uniform(-0.1, 0.1, 100)
    frame_t = np.linspace(1.0, 7.0, 60)
    est = rng.uniform(-0.1, 0.1, 60)
    series = EstimateSeries(frame_t, est, est, np.ones(60, dtype=bool))
    shifted = EstimateSeries(frame_t + 5.0, est, est, np.ones(60, dtype=bool))
    a = stats(series, tt, tw)
    b = stats(shifted, tt + 5.0, tw)
    assert a.mu_true_radps == pytest.approx(b.mu_true_radps, rel=1e-12)
    assert a.mu_est_radps == b.mu_est_radps
    assert a.std_radps == b.std_radps


def test_series_csv_round_trip(tmp_path):
    series = flat_series(1.44, n=6)
    series.valid[2] = False
    series.f_hz[2] = np.nan
    out = to_omega(series, GEOM)
    path = tmp_path / "track.csv"
    out.to_csv(path)
    back = EstimateSeries.from_csv(path)
    assert np.array_equal(back.frame_time_s, out.frame_time_s)
    assert np.array_equal(back.f_hz, out.f_hz, equal_nan=True)
    assert np.array_equal(back.omega_radps, out.omega_radps, equal_nan=True)
    assert np.array_equal(back.valid, out.valid)


def test_series_csv_rejects_bad_header(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("time,freq\n0,1\n")
    with pytest.raises(ValidationError):
        EstimateSeries.from_csv(p)


def test_estimate_chain_single_target():
    """Synthesize -> decompose -> track -> smooth -> convert -> stats."""
    traj = spiral_trajectory(1, range0_m=6.0, bearing0_rad=-0.072 * 2.0,
                             v_radial_mps=0.5, omega_radps=0.072,
                             duration_s=4.0)
    cap = synthesize([traj], GEOM, WaveformConfig(duration_s=4.0, snr_db=None))
    cfg = DecompConfig()
    frame_t = cfg.stft.frame_times(cap.n_samples, cap.sample_rate_hz)
    expected = np.array([
        kinematics_at(traj, GEOM, t).v_radial_mps[0] * 2.0 / GEOM.wavelength_m
        for t in frame_t])
    dec = decompose_and_correlate(cap, 1, cfg, mode="known",
                                  expected_doppler_hz=expected)
    series = peak_track(dec.track_map(0))
    series = to_omega(series, GEOM)
    series = smooth(series, 60)
    assert series.valid_fraction() > 0.9
    truth = np.array([kinematics_at(traj, GEOM, t).omega_radps[0]
                      for t in frame_t])
    st = stats(series, frame_t, truth)
    # residual bias is the shared-mask clipping, a few percent of the fringe
    assert abs(st.mu_est_radps - st.mu_true_radps) <= 0.01
    assert st.std_radps <= 0.01
