"""Spectral analysis: short-time transforms, DC removal, and the
conjugate-product interferometric response."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import signal

from .errors import ValidationError
from .synth import IqCapture


@dataclass
class StftConfig:
    """Analysis window settings.

    Frame magnitudes are normalized by the window sum, so a bin-centered
    unit tone peaks at 1.0 regardless of window choice.
    """

    window_len: int = 1024
    fft_len: int = 1024
    overlap: int = 960
    window: str = "hann"

    def __post_init__(self):
        if self.window_len < 2:
            raise ValidationError(f"window_len must be >= 2, got {self.window_len}")
        if not 0 <= self.overlap < self.window_len:
            raise ValidationError(
                f"overlap must be in [0, window_len), got {self.overlap}")
        if self.fft_len < self.window_len:
            raise ValidationError(
                f"fft_len {self.fft_len} shorter than window_len {self.window_len}")
        try:
            signal.get_window(self.window, self.window_len, fftbins=True)
        except ValueError:
            raise ValidationError(f"unknown window {self.window!r}") from None

    @property
    def hop(self) -> int:
        return self.window_len - self.overlap

    def taps(self) -> np.ndarray:
        return signal.get_window(self.window, self.window_len, fftbins=True)

    def frame_starts(self, n_samples: int) -> np.ndarray:
        if n_samples < self.window_len:
            raise ValidationError(
                f"signal of {n_samples} samples is shorter than the "
                f"{self.window_len}-sample analysis window")
        return np.arange(0, n_samples - self.window_len + 1, self.hop)

    def frame_times(self, n_samples: int, sample_rate_hz: float, t0_s: float = 0.0) -> np.ndarray:
        """Window-center times of each frame."""
        starts = self.frame_starts(n_samples)
        return t0_s + (starts + (self.window_len - 1) / 2.0) / sample_rate_hz


@dataclass
class TimeFrequencyMap:
    """Complex short-time spectra on a DC-centered frequency axis."""

    frame_time_s: np.ndarray
    freq_hz: np.ndarray
    values: np.ndarray          # (n_frames, n_bins) complex
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.frame_time_s = np.asarray(self.frame_time_s, dtype=float)
        self.freq_hz = np.asarray(self.freq_hz, dtype=float)
        self.values = np.asarray(self.values)
        if self.values.shape != (self.frame_time_s.size, self.freq_hz.size):
            raise ValidationError("values shape must be (n_frames, n_bins)")

    @property
    def n_frames(self) -> int:
        return int(self.frame_time_s.size)

    @property
    def bin_width_hz(self) -> float:
        return float(self.freq_hz[1] - self.freq_hz[0])

    def magnitude(self) -> np.ndarray:
        return np.abs(self.values)

    def magnitude_db(self, floor: float = 1e-15) -> np.ndarray:
        return 20.0 * np.log10(np.maximum(np.abs(self.values), floor))

    def band(self, f_lo_hz: float, f_hi_hz: float) -> "TimeFrequencyMap":
        """View restricted to [f_lo_hz, f_hi_hz]."""
        if not f_lo_hz < f_hi_hz:
            raise ValidationError("band bounds must satisfy f_lo < f_hi")
        keep = (self.freq_hz >= f_lo_hz) & (self.freq_hz <= f_hi_hz)
        if not np.any(keep):
            raise ValidationError("band contains no bins")
        return TimeFrequencyMap(self.frame_time_s, self.freq_hz[keep],
                                self.values[:, keep], dict(self.meta))

    def to_csv(self, path) -> None:
        """Long-form dump: frame_time_s,freq_hz,magnitude_db,phase_rad."""
        mag_db = self.magnitude_db()
        phase = np.angle(self.values)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("frame_time_s,freq_hz,magnitude_db,phase_rad\n")
            for i in range(self.n_frames):
                t = float(self.frame_time_s[i])
                for j in range(self.freq_hz.size):
                    fh.write(f"{t!r},{float(self.freq_hz[j])!r},"
                             f"{float(mag_db[i, j]):.4f},{float(phase[i, j]):.6f}\n")

    def save(self, path) -> None:
        """Compact binary (npz) with a small JSON sidecar."""
        path = Path(path)
        np.savez(path, frame_time_s=self.frame_time_s, freq_hz=self.freq_hz,
                 values=self.values.astype(np.complex64))
        sidecar = {
            "format": "tf-map-npz",
            "n_frames": self.n_frames,
            "n_bins": int(self.freq_hz.size),
            "bin_width_hz": self.bin_width_hz,
        }
        sidecar.update({k: v for k, v in self.meta.items() if isinstance(v, (int, float, str))})
        with open(path.with_suffix(path.suffix + ".json"), "w", encoding="utf-8", newline="\n") as fh:
            json.dump(sidecar, fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "TimeFrequencyMap":
        with np.load(path) as data:
            return cls(frame_time_s=data["frame_time_s"], freq_hz=data["freq_hz"],
                       values=data["values"].astype(np.complex128))


def stft(values, sample_rate_hz: float, cfg: StftConfig | None = None,
         t0_s: float = 0.0) -> TimeFrequencyMap:
    """Sliding-window DFT of a complex signal, DC-centered.

    Frames advance by window_len - overlap samples; a trailing partial
    window is dropped. Values are scaled by 1 / sum(window).
    """
    cfg = cfg or StftConfig()
    x = np.asarray(values)
    if x.ndim != 1:
        raise ValidationError("stft expects a 1-D signal")
    starts = cfg.frame_starts(x.size)
    win = cfg.taps()
    frames = np.lib.stride_tricks.sliding_window_view(x, cfg.window_len)[starts] * win
    spec = np.fft.fft(frames, n=cfg.fft_len, axis=1) / win.sum()
    spec = np.fft.fftshift(spec, axes=1)
    freq = np.fft.fftshift(np.fft.fftfreq(cfg.fft_len, d=1.0 / sample_rate_hz))
    times = cfg.frame_times(x.size, sample_rate_hz, t0_s)
    return TimeFrequencyMap(frame_time_s=times, freq_hz=freq, values=spec)


def highpass(values, sample_rate_hz: float, cutoff_hz: float = 1.0, order: int = 3,
             zero_phase: bool = False) -> np.ndarray:
    """Butterworth high-pass, causal by default.

    The causal filter matches streaming use and leaves a settling
    transient at the start of the record; zero_phase runs
    forward-backward instead.
    """
    if not 0 < cutoff_hz < sample_rate_hz / 2:
        raise ValidationError(
            f"cutoff_hz must lie in (0, {sample_rate_hz / 2:g}), got {cutoff_hz}")
    if order < 1:
        raise ValidationError(f"order must be >= 1, got {order}")
    sos = signal.butter(order, cutoff_hz, btype="highpass", fs=sample_rate_hz, output="sos")
    x = np.asarray(values)
    if zero_phase:
        return signal.sosfiltfilt(sos, x)
    return signal.sosfilt(sos, x)


def highpass_capture(capture: IqCapture, cutoff_hz: float = 1.0, order: int = 3,
                     zero_phase: bool = False) -> IqCapture:
    """High-pass both channels of a capture."""
    return IqCapture(
        sample_rate_hz=capture.sample_rate_hz,
        t0_s=capture.t0_s,
        ch1=highpass(capture.ch1, capture.sample_rate_hz, cutoff_hz, order, zero_phase),
        ch2=highpass(capture.ch2, capture.sample_rate_hz, cutoff_hz, order, zero_phase),
        meta=dict(capture.meta),
    )


def conjugate_product(x1, x2) -> np.ndarray:
    """Elementwise x1 * conj(x2), symmetric under swapping the inputs.

    Built from separate real multiplies and adds: the fused complex
    multiply loops pair the partial products with an fma in one order
    only, so x2 * conj(x1) can drift a unit in the last place away from
    conj(x1 * conj(x2)). Here swapping the channels conjugates the
    product bit for bit.
    """
    x1 = np.asarray(x1, dtype=np.complex128)
    x2 = np.asarray(x2, dtype=np.complex128)
    a, b = x1.real, x1.imag
    c, d = x2.real, x2.imag
    out = np.empty(np.broadcast(x1, x2).shape, dtype=np.complex128)
    out.real = a * c + b * d
    out.imag = b * c - a * d
    return out


def interferometric_response(capture: IqCapture, cfg: StftConfig | None = None,
                             zero_pad: int = 8) -> TimeFrequencyMap:
    """Short-time spectrum of ch1 * conj(ch2).

    The conjugate product concentrates each target's energy near its
    fringe-crossing frequency but, with multiple targets present, also
    contains intermodulation lines at pairwise Doppler differences.
    zero_pad multiplies the FFT length to refine the frequency sampling
    of the slow fringe lines.
    """
    cfg = cfg or StftConfig()
    if int(zero_pad) < 1:
        raise ValidationError(f"zero_pad must be >= 1, got {zero_pad}")
    padded = replace(cfg, fft_len=cfg.window_len * int(zero_pad))
    product = conjugate_product(capture.ch1, capture.ch2)
    return stft(product, capture.sample_rate_hz, padded, t0_s=capture.t0_s)


def refine_peak(freq_hz, magnitude, index: int) -> tuple[float, float]:
    """Parabolic interpolation of a sampled spectral peak.

    Fits a parabola to log magnitude at the peak bin and its neighbors.
    Returns (frequency, linear magnitude) of the vertex; bins at the array
    edge come back unrefined.
    """
    freq_hz = np.asarray(freq_hz, dtype=float)
    mag = np.asarray(magnitude, dtype=float)
    k = int(index)
    if not 0 <= k < mag.size:
        raise ValidationError(f"peak index {index} out of range")
    if k == 0 or k == mag.size - 1:
        return float(freq_hz[k]), float(mag[k])
    tiny = 1e-300
    alpha, beta, gamma = (np.log10(max(mag[k - 1], tiny)),
                          np.log10(max(mag[k], tiny)),
                          np.log10(max(mag[k + 1], tiny)))
    denom = alpha - 2.0 * beta + gamma
    if denom >= 0.0:
        # not locally concave; leave the sample untouched
        return float(freq_hz[k]), float(mag[k])
    delta = 0.5 * (alpha - gamma) / denom
    delta = float(np.clip(delta, -0.5, 0.5))
    step = freq_hz[1] - freq_hz[0]
    peak_log = beta - 0.25 * (alpha - gamma) * delta
    return float(freq_hz[k] + delta * step), float(10.0 ** peak_log)
