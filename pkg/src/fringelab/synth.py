"""Two-channel baseband IQ synthesis for point-target scenes.

Each target contributes amplitude * gain(theta_i) * exp(-j 2 pi f_c tau_i(t))
on receive channel i, where tau_i is the round-trip delay through that
antenna. Receiver noise, a DC bias, and common platform vibration are
optional impairments layered on top.
"""

from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .scene import ArrayGeometry, TargetTrajectory, path_geometry

SIDECAR_FORMAT = "iq-f32le-interleaved"


@dataclass
class AntennaPattern:
    """Receive element pattern over bearing.

    kind "gaussian" is a Gaussian beam whose power falls to half at
    beamwidth_deg / 2 off broadside; "isotropic" has unit gain everywhere.
    """

    kind: str = "gaussian"
    beamwidth_deg: float = 30.0

    def __post_init__(self):
        if self.kind not in ("gaussian", "isotropic"):
            raise ValidationError(f"unknown pattern kind {self.kind!r}")
        if not self.beamwidth_deg > 0:
            raise ValidationError(f"beamwidth_deg must be positive, got {self.beamwidth_deg}")

    def gain(self, theta_rad):
        """Voltage gain toward the given bearing."""
        th = np.asarray(theta_rad, dtype=float)
        if self.kind == "isotropic":
            return np.ones_like(th)
        bw = np.deg2rad(self.beamwidth_deg)
        power = np.exp(-np.log(2.0) * (2.0 * th / bw) ** 2)
        return np.sqrt(power)


@dataclass
class WaveformConfig:
    """Sampling and impairment settings for one capture."""

    sample_rate_hz: float = 1920.0
    duration_s: float = 8.0
    snr_db: float | None = 20.0         # None disables noise
    dc_offset: complex = 0.01 + 0.0j    # additive bias, both channels
    rng_seed: int = 0
    vibration_tones: tuple = ()          # (freq_hz, amplitude_rad) pairs

    def __post_init__(self):
        if not self.sample_rate_hz > 0:
            raise ValidationError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")
        if not self.duration_s > 0:
            raise ValidationError(f"duration_s must be positive, got {self.duration_s}")
        for tone in self.vibration_tones:
            if len(tone) != 2 or not tone[0] > 0:
                raise ValidationError(f"vibration tone must be (freq_hz > 0, amplitude_rad), got {tone!r}")

    @property
    def n_samples(self) -> int:
        return int(round(self.sample_rate_hz * self.duration_s))


@dataclass
class IqCapture:
    """Complex baseband samples of both receive channels."""

    sample_rate_hz: float
    t0_s: float
    ch1: np.ndarray
    ch2: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.ch1 = np.asarray(self.ch1, dtype=np.complex128)
        self.ch2 = np.asarray(self.ch2, dtype=np.complex128)
        if self.ch1.ndim != 1 or self.ch1.shape != self.ch2.shape:
            raise ValidationError("channels must be 1-D arrays of equal length")
        if not self.sample_rate_hz > 0:
            raise ValidationError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")

    @property
    def n_samples(self) -> int:
        return int(self.ch1.size)

    @property
    def t_s(self) -> np.ndarray:
        return self.t0_s + np.arange(self.n_samples) / self.sample_rate_hz


def synthesize(trajectories, geometry: ArrayGeometry, waveform: WaveformConfig,
               pattern: AntennaPattern | None = None) -> IqCapture:
    """Render the two-channel capture of a point-target scene.

    Targets are accumulated in ascending target-id order, so a noise-free,
    bias-free capture is the exact sample-wise sum of the single-target
    captures. Noise power is set relative to the strongest single-target
    mean power on channel 1 (relative to unit power when the scene is
    empty). The same seed always yields the same samples.
    """
    if pattern is None:
        pattern = AntennaPattern()
    trajs = sorted(trajectories, key=lambda tr: tr.target_id)
    if len({tr.target_id for tr in trajs}) != len(trajs):
        raise ValidationError("duplicate target ids in scene")

    n = waveform.n_samples
    if n < 1:
        raise ValidationError("capture would contain no samples")
    t = np.arange(n) / waveform.sample_rate_hz
    lo_needed, hi_needed = 0.0, float(t[-1])
    for tr in trajs:
        lo, hi = tr.span_s
        if lo > lo_needed or hi < hi_needed:
            raise ValidationError(
                f"target {tr.target_id}: trajectory span [{lo:g}, {hi:g}] does not cover "
                f"capture [{lo_needed:g}, {hi_needed:g}]")

    ch = [np.zeros(n, dtype=np.complex128), np.zeros(n, dtype=np.complex128)]
    strongest = 0.0
    min_range = np.inf
    for tr in trajs:
        r_tx, ranges, thetas = path_geometry(tr, geometry, t)
        min_range = min(min_range, float(r_tx.min()),
                        float(min(r.min() for r in ranges)))
        for i in range(2):
            tau = (r_tx + ranges[i]) / 299_792_458.0
            contrib = tr.amplitude * pattern.gain(thetas[i]) * np.exp(
                -2j * np.pi * geometry.carrier_hz * tau)
            ch[i] += contrib
            if i == 0:
                strongest = max(strongest, float(np.mean(np.abs(contrib) ** 2)))

    if trajs and min_range < 10.0 * geometry.baseline_m:
        warnings.warn(
            f"closest approach {min_range:.3g} m is under ten baselines; "
            "far-field assumptions degrade", stacklevel=2)

    for freq_hz, amp_rad in waveform.vibration_tones:
        common = np.exp(1j * amp_rad * np.sin(2 * np.pi * freq_hz * t))
        ch[0] *= common
        ch[1] *= common

    if waveform.snr_db is not None:
        ref_power = strongest if trajs else 1.0
        noise_power = ref_power / 10.0 ** (waveform.snr_db / 10.0)
        sigma = np.sqrt(noise_power / 2.0)
        rng = np.random.default_rng(waveform.rng_seed)
        for i in range(2):
            ch[i] += sigma * (rng.standard_normal(n) + 1j * rng.standard_normal(n))

    dc = complex(waveform.dc_offset)
    if dc != 0:
        ch[0] += dc
        ch[1] += dc

    meta = {
        "seed": int(waveform.rng_seed),
        "snr_db": None if waveform.snr_db is None else float(waveform.snr_db),
        "n_targets": len(trajs),
    }
    return IqCapture(sample_rate_hz=waveform.sample_rate_hz, t0_s=0.0,
                     ch1=ch[0], ch2=ch[1], meta=meta)


def apply_channel_imbalance(capture: IqCapture, gain: float = 1.0,
                            phase_rad: float = 0.0) -> IqCapture:
    """Scale channel 2 by a gain and phase mismatch."""
    if not gain > 0:
        raise ValidationError(f"gain must be positive, got {gain}")
    factor = gain * np.exp(1j * phase_rad)
    return IqCapture(sample_rate_hz=capture.sample_rate_hz, t0_s=capture.t0_s,
                     ch1=capture.ch1.copy(), ch2=capture.ch2 * factor,
                     meta=dict(capture.meta))


def _interleave(capture: IqCapture) -> np.ndarray:
    out = np.empty((capture.n_samples, 4), dtype="<f4")
    out[:, 0] = capture.ch1.real
    out[:, 1] = capture.ch1.imag
    out[:, 2] = capture.ch2.real
    out[:, 3] = capture.ch2.imag
    return out


def write_capture(capture: IqCapture, bin_path, sidecar_path=None) -> None:
    """Write interleaved little-endian float32 [I1 Q1 I2 Q2] plus a JSON
    sidecar describing the layout. Output is byte-for-byte reproducible."""
    bin_path = Path(bin_path)
    if sidecar_path is None:
        sidecar_path = bin_path.with_suffix(bin_path.suffix + ".json")
    _interleave(capture).tofile(bin_path)
    sidecar = {
        "format": SIDECAR_FORMAT,
        "channels": 2,
        "sample_rate_hz": float(capture.sample_rate_hz),
        "t0_s": float(capture.t0_s),
        "n_samples": capture.n_samples,
    }
    sidecar.update(capture.meta)
    with open(sidecar_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_capture(bin_path, sidecar_path=None) -> IqCapture:
    """Load a capture written by write_capture."""
    bin_path = Path(bin_path)
    if sidecar_path is None:
        sidecar_path = bin_path.with_suffix(bin_path.suffix + ".json")
    try:
        with open(sidecar_path, "r", encoding="utf-8") as fh:
            sidecar = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{sidecar_path}: invalid sidecar JSON: {exc}") from None
    if sidecar.get("format") != SIDECAR_FORMAT:
        raise ValidationError(f"{sidecar_path}: unknown format {sidecar.get('format')!r}")
    for key in ("sample_rate_hz", "t0_s", "n_samples"):
        if key not in sidecar:
            raise ValidationError(f"{sidecar_path}: missing key {key!r}")
    n = int(sidecar["n_samples"])
    raw = np.fromfile(bin_path, dtype="<f4")
    if raw.size != 4 * n:
        raise ValidationError(
            f"{bin_path}: expected {4 * n} float32 values, found {raw.size}")
    raw = raw.reshape(n, 4).astype(np.float64)
    meta = {k: v for k, v in sidecar.items()
            if k not in ("format", "channels", "sample_rate_hz", "t0_s", "n_samples")}
    return IqCapture(
        sample_rate_hz=float(sidecar["sample_rate_hz"]),
        t0_s=float(sidecar["t0_s"]),
        ch1=raw[:, 0] + 1j * raw[:, 1],
        ch2=raw[:, 2] + 1j * raw[:, 3],
        meta=meta,
    )


def write_capture_csv(capture: IqCapture, path) -> None:
    """Plain-text dump (t_s,i1,q1,i2,q2) for eyeballing small captures."""
    t = capture.t_s
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("t_s,i1,q1,i2,q2\n")
        for k in range(capture.n_samples):
            fh.write(f"{float(t[k])!r},{float(capture.ch1[k].real)!r},{float(capture.ch1[k].imag)!r},"
                     f"{float(capture.ch2[k].real)!r},{float(capture.ch2[k].imag)!r}\n")


def file_digest(path) -> str:
    """SHA-256 hex digest of a file, for reproducibility checks."""
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
