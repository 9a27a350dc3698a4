"""Closed-form line model of the conjugate-product spectrum.

For N targets with slowly varying kinematics, the product of the two
channel spectra concentrates into discrete lines: N self lines at each
target's fringe-crossing frequency, plus N*(N-1) intermodulation lines
offset by pairwise Doppler differences. The decomposed response keeps
only the self lines.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .scene import ArrayGeometry
from .synth import AntennaPattern

SMALL_ANGLE_LIMIT_RAD = 0.35


@dataclass
class PointState:
    """Instantaneous target state referenced to receive antenna 1.

    v_radial_mps must be the antenna-1 radial velocity (approach
    positive); for fast tangential motion it differs noticeably from the
    array-center value, and feeding the center value shifts every
    modeled Doppler by the tangential projection."""

    v_radial_mps: float           # approach positive
    omega_radps: float
    bearing_rad: float = 0.0
    amplitude: float = 1.0

    def __post_init__(self):
        if not self.amplitude > 0:
            raise ValidationError(f"amplitude must be positive, got {self.amplitude}")


@dataclass
class SpectralLine:
    """One discrete line of the product spectrum."""

    freq_hz: float
    amplitude: complex
    kind: str                     # "self" | "cross"
    n: int                        # channel-1 target index
    k: int                        # channel-2 target index


def small_angle_ok(bearing_rad, limit_rad: float = SMALL_ANGLE_LIMIT_RAD):
    """True where the bearing keeps the small-angle fringe model accurate."""
    return np.abs(np.asarray(bearing_rad)) <= limit_rad


def _doppler_hz(state: PointState, geom: ArrayGeometry) -> float:
    return 2.0 * state.v_radial_mps / geom.wavelength_m


def _fringe_hz(state: PointState, geom: ArrayGeometry) -> float:
    lam = geom.wavelength_m
    return state.omega_radps * geom.baseline_m / lam * np.cos(state.bearing_rad)


def full_response_lines(states, geom: ArrayGeometry,
                        pattern: AntennaPattern | None = None) -> list[SpectralLine]:
    """All N^2 lines of the two-channel conjugate product.

    Line (n, k) sits at the Doppler difference of targets n and k plus
    target k's fringe frequency, weighted by both element gains. The same
    bearing is used for both elements, a far-field simplification.
    """
    states = list(states)
    if pattern is None:
        pattern = AntennaPattern(kind="isotropic")
    gains = [float(pattern.gain(s.bearing_rad)) for s in states]
    lines = []
    for n, sn in enumerate(states):
        for k, sk in enumerate(states):
            freq = (_doppler_hz(sn, geom) - _doppler_hz(sk, geom)) + _fringe_hz(sk, geom)
            amp = sn.amplitude * sk.amplitude * gains[n] * np.conj(gains[k])
            lines.append(SpectralLine(
                freq_hz=float(freq),
                amplitude=complex(amp),
                kind="self" if n == k else "cross",
                n=n, k=k,
            ))
    return lines


def decomposed_response_lines(states, geom: ArrayGeometry,
                              pattern: AntennaPattern | None = None) -> list[SpectralLine]:
    """The N self lines that survive per-target decomposition."""
    return [line for line in full_response_lines(states, geom, pattern)
            if line.kind == "self"]


def line_counts(n_targets: int) -> tuple[int, int]:
    """(self, cross) line counts for an N-target scene."""
    if n_targets < 0:
        raise ValidationError(f"n_targets must be >= 0, got {n_targets}")
    return n_targets, n_targets * (n_targets - 1)


def rasterize_lines(lines, freq_hz, kernel: str = "nearest",
                    magnitude: bool = False) -> np.ndarray:
    """Accumulate lines onto a uniform frequency axis.

    kernel "nearest" drops each line into its closest bin; "triangle"
    splits it linearly between the two straddling bins, which makes the
    raster move continuously as a line frequency changes. Lines outside
    the axis are dropped. With magnitude=True the absolute line weights
    are accumulated instead of complex amplitudes.
    """
    freq = np.asarray(freq_hz, dtype=float)
    if freq.ndim != 1 or freq.size < 2:
        raise ValidationError("freq_hz must be a 1-D axis with >= 2 bins")
    step = freq[1] - freq[0]
    if kernel not in ("nearest", "triangle"):
        raise ValidationError(f"unknown kernel {kernel!r}")
    out = np.zeros(freq.size, dtype=float if magnitude else complex)
    lo, hi = freq[0], freq[-1]
    for line in lines:
        w = abs(line.amplitude) if magnitude else line.amplitude
        pos = (line.freq_hz - lo) / step
        if kernel == "nearest":
            k = int(round(pos))
            if 0 <= k < freq.size and lo - step / 2 <= line.freq_hz <= hi + step / 2:
                out[k] += w
        else:
            if pos < 0.0 or pos > freq.size - 1:
                continue
            k = int(np.floor(pos))
            frac = pos - k
            out[k] += w * (1.0 - frac)
            if k + 1 < freq.size:
                out[k + 1] += w * frac
    return out
