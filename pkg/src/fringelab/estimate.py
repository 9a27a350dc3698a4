"""Angular-velocity estimation from decomposed interferometric responses.

Turns a per-target time-frequency response into a fringe-frequency track,
optionally smooths it, converts frequency to angular velocity through the
array geometry, and summarizes the result against ground truth.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, replace

import numpy as np

from .dsp import refine_peak
from .errors import ValidationError
from .scene import ArrayGeometry
from ._util import moving_average

log = logging.getLogger(__name__)

SERIES_HEADER = ("frame_time_s", "f_hz", "omega_radps", "valid")

# Beyond this bearing magnitude the obliquity factor is applied when
# converting frequency to angular velocity; inside it cos(theta) ~ 1.
BEARING_THRESHOLD_RAD = 0.2

# Obliquity factors smaller than this would amplify estimate noise by more
# than 20x; such frames are marked invalid instead of converted.
MIN_OBLIQUITY = 0.05


@dataclass
class EstimateSeries:
    """Per-frame fringe frequency and angular velocity for one track.

    Invalid frames carry nan in both value columns.
    """

    frame_time_s: np.ndarray
    f_hz: np.ndarray
    omega_radps: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        self.frame_time_s = np.asarray(self.frame_time_s, dtype=float)
        self.f_hz = np.asarray(self.f_hz, dtype=float)
        self.omega_radps = np.asarray(self.omega_radps, dtype=float)
        self.valid = np.asarray(self.valid, dtype=bool)
        n = self.frame_time_s.size
        for name in ("f_hz", "omega_radps", "valid"):
            if getattr(self, name).shape != (n,):
                raise ValidationError(f"{name} must have shape ({n},)")

    @property
    def n_frames(self) -> int:
        return self.frame_time_s.size

    @property
    def n_valid(self) -> int:
        return int(np.count_nonzero(self.valid))

    def valid_fraction(self) -> float:
        return self.n_valid / self.n_frames if self.n_frames else 0.0

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(",".join(SERIES_HEADER) + "\n")
            for t, f, w, v in zip(self.frame_time_s, self.f_hz,
                                  self.omega_radps, self.valid):
                fh.write(f"{float(t)!r},{float(f)!r},{float(w)!r},{int(v)}\n")

    @classmethod
    def from_csv(cls, path) -> "EstimateSeries":
        with open(path) as fh:
            header = fh.readline().strip().split(",")
            if tuple(header) != SERIES_HEADER:
                raise ValidationError(f"unexpected header {header}")
            rows = [line.strip().split(",") for line in fh if line.strip()]
        if any(len(r) != 4 for r in rows):
            raise ValidationError("malformed series row")
        cols = list(zip(*rows)) if rows else [[]] * 4
        return cls(np.array(cols[0], dtype=float),
                   np.array(cols[1], dtype=float),
                   np.array(cols[2], dtype=float),
                   np.array(cols[3], dtype=float).astype(bool))


@dataclass
class EstimateStats:
    """Summary of one estimated track against interpolated truth."""

    mu_true_radps: float
    mu_est_radps: float
    std_radps: float
    n_valid_frames: int

    def to_dict(self) -> dict:
        return {
            "mu_true_radps": self.mu_true_radps,
            "mu_est_radps": self.mu_est_radps,
            "std_radps": self.std_radps,
            "n_valid_frames": self.n_valid_frames,
        }

    def to_json(self, path, **extra) -> None:
        payload = {**self.to_dict(), **extra}
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")


def peak_track(resp, floor_db: float = -20.0) -> EstimateSeries:
    """Track the strongest spectral peak of a response over time.

    Per frame the max-magnitude bin is refined with quadratic 3-bin
    interpolation. Frames whose peak magnitude falls more than
    ``-floor_db`` below the global maximum (voltage ratio, so -20 dB is a
    factor of 10) are marked invalid. A silent response yields a series
    with zero valid frames rather than an error.
    """
    mags = np.abs(np.asarray(resp.values))
    if mags.ndim != 2 or mags.size == 0:
        raise ValidationError("response must be a non-empty 2-D map")
    freq = np.asarray(resp.freq_hz, dtype=float)
    times = np.asarray(resp.frame_time_s, dtype=float)

    peak_idx = np.argmax(mags, axis=1)
    peak_mag = mags[np.arange(mags.shape[0]), peak_idx]
    global_max = float(peak_mag.max())
    floor = global_max * 10.0 ** (floor_db / 20.0)

    f = np.full(mags.shape[0], np.nan)
    valid = np.zeros(mags.shape[0], dtype=bool)
    if global_max > 0.0:
        for i in range(mags.shape[0]):
            if peak_mag[i] < floor or peak_mag[i] == 0.0:
                continue
            f[i], _ = refine_peak(freq, mags[i], int(peak_idx[i]))
            valid[i] = True
    return EstimateSeries(times, f, np.full_like(f, np.nan), valid)


def smooth(series: EstimateSeries, window_frames: int = 60) -> EstimateSeries:
    """Moving-average the series over valid frames only.

    Centered window, truncated at the edges; invalid frames neither
    contribute nor change.
    """
    if window_frames < 1:
        raise ValidationError(f"window_frames must be >= 1, got {window_frames}")
    if series.n_frames > 1:
        hop = float(np.median(np.diff(series.frame_time_s)))
        log.debug("smoothing over %d frames (%.2f s at %.1f frames/s)",
                  window_frames, window_frames * hop, 1.0 / hop)
    f = moving_average(np.where(series.valid, series.f_hz, 0.0),
                       window_frames, series.valid)
    w = moving_average(np.where(series.valid, series.omega_radps, 0.0),
                       window_frames, series.valid)
    f = np.where(series.valid, f, np.nan)
    w = np.where(series.valid, w, np.nan)
    return EstimateSeries(series.frame_time_s, f, w, series.valid.copy())


def to_omega(series: EstimateSeries, geom: ArrayGeometry,
             bearing_rad=None) -> EstimateSeries:
    """Convert fringe frequency to angular velocity: omega = f * lambda / D.

    The small-angle form is the default. When per-frame bearings are
    supplied the obliquity factor cos(bearing) is divided out for frames
    beyond BEARING_THRESHOLD_RAD from broadside; frames where the factor
    drops below MIN_OBLIQUITY are marked invalid.
    """
    scale = geom.wavelength_m / geom.baseline_m
    omega = series.f_hz * scale
    valid = series.valid.copy()
    if bearing_rad is not None:
        theta = np.asarray(bearing_rad, dtype=float)
        if theta.shape != series.frame_time_s.shape:
            raise ValidationError("bearing_rad must align with the frame axis")
        obliq = np.where(np.abs(theta) > BEARING_THRESHOLD_RAD,
                         np.cos(theta), 1.0)
        usable = np.abs(obliq) >= MIN_OBLIQUITY
        omega = np.where(usable, omega / np.where(usable, obliq, 1.0), np.nan)
        valid &= usable
    omega = np.where(valid, omega, np.nan)
    return replace(series, omega_radps=omega, valid=valid)


def stats(series: EstimateSeries, truth_t_s, truth_omega_radps) -> EstimateStats:
    """Compare estimated angular velocity with interpolated ground truth.

    Truth is sampled at the valid frame times by linear interpolation;
    mu_true is its mean, mu_est and std (sample, ddof 1) come from the
    estimates. Frames outside the truth time span do not count as overlap.
    """
    tt = np.asarray(truth_t_s, dtype=float)
    tw = np.asarray(truth_omega_radps, dtype=float)
    if tt.ndim != 1 or tt.size < 2 or tt.shape != tw.shape:
        raise ValidationError("truth series must be 1-D with >= 2 samples")
    inside = (series.frame_time_s >= tt[0]) & (series.frame_time_s <= tt[-1])
    use = series.valid & inside
    n = int(np.count_nonzero(use))
    if n == 0:
        raise ValidationError("no valid frames overlap the truth time span")
    t_use = series.frame_time_s[use]
    est = series.omega_radps[use]
    mu_true = float(np.mean(np.interp(t_use, tt, tw)))
    mu_est = float(np.mean(est))
    std = float(np.std(est, ddof=1)) if n > 1 else 0.0
    return EstimateStats(mu_true, mu_est, std, n)
