"""Per-target decomposition of the two-channel spectra.

Instead of correlating the full channels (which mixes every target pair
into intermodulation lines), each frame's spectra are masked down to one
target's Doppler support, returned to the time domain, and only then
conjugate-multiplied. Matching supports across the two channels either
share one window (detection on the combined power, no association step)
or are detected per antenna and paired by a global-nearest-neighbor
assignment.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from .dsp import StftConfig, TimeFrequencyMap, conjugate_product, refine_peak
from .errors import ValidationError
from .synth import IqCapture


@dataclass
class DecompConfig:
    """Decomposition chain settings."""

    stft: StftConfig = field(default_factory=StftConfig)
    zero_pad: int = 8                    # product-spectrum FFT multiplier
    mask_width_hz: float = 10.0          # Doppler window passband
    mask_scope: str = "shared"           # "shared" | "per-antenna"
    taper: str = "rect"                  # mask edge profile: "rect" | "tukey"
    gate_hz: float = 5.0                 # antenna 1 <-> 2 association gate
    track_gate_hz: float = 5.0           # frame-to-frame continuation gate
    detection_floor_snr_db: float = 10.0  # window peak vs frame median power
    guard_bins: int = 2                  # detection spacing beyond the window width
    ghost_rel_db: float = 30.0           # detected peak vs strongest window

    def __post_init__(self):
        if int(self.zero_pad) < 1:
            raise ValidationError(f"zero_pad must be >= 1, got {self.zero_pad}")
        if not self.mask_width_hz > 0:
            raise ValidationError(f"mask_width_hz must be positive, got {self.mask_width_hz}")
        if self.mask_scope not in ("shared", "per-antenna"):
            raise ValidationError(f"unknown mask_scope {self.mask_scope!r}")
        if self.taper not in ("rect", "tukey"):
            raise ValidationError(f"unknown taper {self.taper!r}")
        if int(self.guard_bins) < 0:
            raise ValidationError(f"guard_bins must be >= 0, got {self.guard_bins}")
        for name in ("gate_hz", "track_gate_hz"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be positive")


class Window(NamedTuple):
    """A contiguous bin window on the DC-centered axis (inclusive ends)."""

    lo: int
    hi: int
    center_hz: float
    peak_hz: float
    power: float


class AssociationResult(NamedTuple):
    pairs: list
    unmatched_a: list
    unmatched_b: list
    total_cost: float


def best_windows(power, n_windows: int, width_bins: int, guard_bins: int = 0) -> list[int]:
    """Start indices of fixed-width windows that maximize total captured
    power, keeping at least guard_bins empty bins between windows.

    Dynamic program over start positions, exact for this placement
    problem; ties resolve toward lower start indices. Returned starts are
    ascending. The guard keeps the leakage shoulder of a strong line from
    being picked up as a separate window right next door.
    """
    p = np.asarray(power, dtype=float)
    if p.ndim != 1:
        raise ValidationError("power must be 1-D")
    w = int(width_bins)
    g = int(guard_bins)
    n = int(n_windows)
    if w < 1:
        raise ValidationError(f"width_bins must be >= 1, got {width_bins}")
    if g < 0:
        raise ValidationError(f"guard_bins must be >= 0, got {guard_bins}")
    if n < 0:
        raise ValidationError(f"n_windows must be >= 0, got {n_windows}")
    if n == 0:
        return []
    stride = w + g
    if (n - 1) * stride + w > p.size:
        raise ValidationError(
            f"cannot place {n} windows of {w} bins (guard {g}) in {p.size} bins")

    csum = np.concatenate(([0.0], np.cumsum(p)))
    wp = csum[w:] - csum[:-w]            # wp[s]: power of window starting at s
    S = wp.size
    NEG = -np.inf
    # dp[j][s]: best total using j windows all starting at >= s
    dp = np.zeros((n + 1, S + stride))
    dp[1:, :] = NEG
    for j in range(1, n + 1):
        cand = wp + dp[j - 1, stride:stride + S]
        dp[j, :S] = np.maximum.accumulate(cand[::-1])[::-1]

    starts = []
    s, j = 0, n
    while j > 0:
        cand_here = wp[s] + dp[j - 1, s + stride]
        if cand_here == dp[j, s]:
            starts.append(s)
            s += stride
            j -= 1
        else:
            s += 1
    return starts


def _window_from_bins(power, freq_hz, lo: int, hi: int) -> Window:
    seg = power[lo:hi + 1]
    k = lo + int(np.argmax(seg))
    peak_hz, _ = refine_peak(freq_hz, np.sqrt(np.maximum(power, 0.0)), k)
    center = 0.5 * (freq_hz[lo] + freq_hz[hi])
    return Window(lo=lo, hi=hi, center_hz=float(center), peak_hz=float(peak_hz),
                  power=float(seg.sum()))


def detect_targets(power, freq_hz, n_targets: int, mask_width_hz: float,
                   guard_bins: int = 0) -> list[Window]:
    """Best non-overlapping Doppler windows of one frame, ascending in
    frequency."""
    freq = np.asarray(freq_hz, dtype=float)
    bin_w = freq[1] - freq[0]
    w = max(1, int(round(mask_width_hz / bin_w)))
    starts = best_windows(power, n_targets, w, guard_bins)
    return [_window_from_bins(power, freq, s, s + w - 1) for s in starts]


def associate_frequencies(freqs_a, freqs_b, gate_hz: float = np.inf) -> AssociationResult:
    """Pair two frequency lists by global-nearest-neighbor assignment.

    Minimizes the summed absolute frequency difference over one-to-one
    pairings; pairs whose distance exceeds gate_hz are discarded after
    the assignment. total_cost sums the kept pair distances.
    """
    fa = np.asarray(freqs_a, dtype=float)
    fb = np.asarray(freqs_b, dtype=float)
    if fa.size == 0 or fb.size == 0:
        return AssociationResult([], list(range(fa.size)), list(range(fb.size)), 0.0)
    cost = np.abs(fa[:, None] - fb[None, :])
    rows, cols = linear_sum_assignment(cost)
    pairs = []
    for i, j in zip(rows, cols):
        if cost[i, j] <= gate_hz:
            pairs.append((int(i), int(j)))
    matched_a = {i for i, _ in pairs}
    matched_b = {j for _, j in pairs}
    return AssociationResult(
        pairs=pairs,
        unmatched_a=[i for i in range(fa.size) if i not in matched_a],
        unmatched_b=[j for j in range(fb.size) if j not in matched_b],
        total_cost=float(sum(cost[i, j] for i, j in pairs)),
    )


@dataclass
class TrackResponse:
    """Decomposed product spectra of one target track."""

    track_id: int
    values: np.ndarray           # (n_frames, n_bins) complex, zero when invalid
    valid: np.ndarray            # (n_frames,) bool
    window_center_hz: np.ndarray  # Doppler window peak per frame, nan when invalid


@dataclass
class DecomposedResponse:
    """Intermodulation-free interferometric responses, one per track."""

    frame_time_s: np.ndarray
    freq_hz: np.ndarray
    tracks: list
    associations: list
    mode: str
    mask_scope: str

    @property
    def n_frames(self) -> int:
        return int(self.frame_time_s.size)

    def combined(self) -> TimeFrequencyMap:
        """Sum of the per-track responses on the shared axis."""
        total = np.zeros((self.n_frames, self.freq_hz.size), dtype=complex)
        for tr in self.tracks:
            total += tr.values
        return TimeFrequencyMap(self.frame_time_s, self.freq_hz, total,
                                meta={"mode": self.mode})

    def track_map(self, track_id: int) -> TimeFrequencyMap:
        for tr in self.tracks:
            if tr.track_id == track_id:
                return TimeFrequencyMap(self.frame_time_s, self.freq_hz, tr.values,
                                        meta={"track": track_id, "mode": self.mode})
        raise ValidationError(f"no track {track_id}")

    def write_associations(self, path) -> None:
        """One JSON object per frame."""
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for rec in self.associations:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")


def _mask_weights(n_bins: int, lo: int, hi: int, taper: str) -> np.ndarray:
    w = np.zeros(n_bins)
    w[lo:hi + 1] = 1.0
    if taper == "tukey":
        width = hi - lo + 1
        ramp = max(1, width // 4)
        edge = 0.5 * (1.0 - np.cos(np.pi * (np.arange(ramp) + 1) / (ramp + 1)))
        w[lo:lo + ramp] = edge
        w[hi - ramp + 1:hi + 1] = edge[::-1]
    return w


def _nearest_bin(freq_hz: np.ndarray, f: float) -> int:
    step = freq_hz[1] - freq_hz[0]
    k = int(round((f - freq_hz[0]) / step))
    return min(max(k, 0), freq_hz.size - 1)


def decompose_and_correlate(capture: IqCapture, n_targets: int,
                            cfg: DecompConfig | None = None, mode: str = "known",
                            expected_doppler_hz=None) -> DecomposedResponse:
    """Per-target interferometric responses of a two-channel capture.

    mode "known" centers each target's Doppler window on the provided
    expected_doppler_hz (n_frames, n_targets), e.g. derived from ground
    truth. mode "detected" finds the windows from the spectra alone and
    carries target identity frame to frame by nearest-neighbor gating on
    the window peaks.

    A window whose peak power stays below the frame's median power plus
    the configured margin marks that target's frame invalid; overlapping
    windows (targets within a mask width in Doppler) are processed as-is,
    which degrades those frames toward the plain correlated response.
    """
    cfg = cfg or DecompConfig()
    if mode not in ("known", "detected"):
        raise ValidationError(f"unknown mode {mode!r}")
    if n_targets < 0:
        raise ValidationError(f"n_targets must be >= 0, got {n_targets}")

    scfg = cfg.stft
    fs = capture.sample_rate_hz
    starts = scfg.frame_starts(capture.n_samples)
    frame_time = scfg.frame_times(capture.n_samples, fs, capture.t0_s)
    n_frames = starts.size
    win = scfg.taps()
    L = scfg.fft_len
    L_pad = L * int(cfg.zero_pad)
    freq = np.fft.fftshift(np.fft.fftfreq(L, d=1.0 / fs))
    freq_pad = np.fft.fftshift(np.fft.fftfreq(L_pad, d=1.0 / fs))
    bin_w = fs / L
    w_bins = max(1, int(round(cfg.mask_width_hz / bin_w)))
    norm = float(np.sum(win ** 2))

    if mode == "known":
        if expected_doppler_hz is None:
            raise ValidationError("mode 'known' requires expected_doppler_hz")
        expected = np.asarray(expected_doppler_hz, dtype=float)
        if expected.ndim == 1 and n_targets == 1:
            expected = expected[:, None]
        if expected.shape != (n_frames, n_targets):
            raise ValidationError(
                f"expected_doppler_hz shape {expected.shape} does not match "
                f"(n_frames={n_frames}, n_targets={n_targets})")
        half = 0.45 * fs
        if n_targets and np.any(np.abs(expected) > half):
            raise ValidationError("expected Doppler outside the sampled band")

    view1 = np.lib.stride_tricks.sliding_window_view(capture.ch1, scfg.window_len)
    view2 = np.lib.stride_tricks.sliding_window_view(capture.ch2, scfg.window_len)

    values = np.zeros((n_targets, n_frames, L_pad), dtype=complex)
    valid = np.zeros((n_targets, n_frames), dtype=bool)
    centers = np.full((n_targets, n_frames), np.nan)
    associations = []
    floor_lin = 10.0 ** (cfg.detection_floor_snr_db / 10.0)
    last_peak = np.full(n_targets, np.nan)   # detected-mode track memory

    for fi, s0 in enumerate(starts):
        spec1 = np.fft.fftshift(np.fft.fft(view1[s0] * win, n=L))
        spec2 = np.fft.fftshift(np.fft.fft(view2[s0] * win, n=L))
        p1 = np.abs(spec1) ** 2
        p2 = np.abs(spec2) ** 2
        combined = p1 + p2
        floor = float(np.median(combined)) * floor_lin

        # windows[t] = (win_for_ch1, win_for_ch2) or None when the target
        # has no usable support this frame
        windows: list = [None] * n_targets
        rec = {"frame_index": int(fi), "frame_time_s": round(float(frame_time[fi]), 6)}

        if mode == "known":
            for t in range(n_targets):
                k = _nearest_bin(freq, expected[fi, t])
                lo = k - (w_bins - 1) // 2
                lo = min(max(lo, 0), L - w_bins)
                wdw = _window_from_bins(combined, freq, lo, lo + w_bins - 1)
                windows[t] = (wdw, wdw)
            rec["expected_hz"] = [round(float(x), 6) for x in expected[fi]]
            rec["pairs"] = [[t, t] for t in range(n_targets)]
        elif cfg.mask_scope == "shared":
            found = detect_targets(combined, freq, n_targets, cfg.mask_width_hz,
                                   cfg.guard_bins)
            order = _assign_tracks(found, last_peak, cfg.track_gate_hz)
            for t, widx in enumerate(order):
                if widx is not None:
                    windows[t] = (found[widx], found[widx])
            rec["antenna1_hz"] = [round(w.peak_hz, 6) for w in found]
            rec["antenna2_hz"] = rec["antenna1_hz"]
            rec["pairs"] = [[i, i] for i in range(len(found))]
        else:
            found1 = detect_targets(p1, freq, n_targets, cfg.mask_width_hz,
                                    cfg.guard_bins)
            found2 = detect_targets(p2, freq, n_targets, cfg.mask_width_hz,
                                    cfg.guard_bins)
            assoc = associate_frequencies([w.peak_hz for w in found1],
                                          [w.peak_hz for w in found2],
                                          gate_hz=cfg.gate_hz)
            paired = [(found1[i], found2[j]) for i, j in assoc.pairs]
            order = _assign_tracks([p[0] for p in paired], last_peak, cfg.track_gate_hz)
            for t, widx in enumerate(order):
                if widx is not None:
                    windows[t] = paired[widx]
            rec["antenna1_hz"] = [round(w.peak_hz, 6) for w in found1]
            rec["antenna2_hz"] = [round(w.peak_hz, 6) for w in found2]
            rec["pairs"] = [[int(i), int(j)] for i, j in assoc.pairs]

        strongest = 0.0
        for pair in windows:
            if pair is not None:
                strongest = max(strongest, float(np.max(combined[pair[0].lo:pair[0].hi + 1])))
        ghost_floor = strongest * 10.0 ** (-cfg.ghost_rel_db / 10.0)

        track_recs = []
        for t in range(n_targets):
            if windows[t] is None:
                track_recs.append({"track": t, "valid": False})
                continue
            w1, w2 = windows[t]
            peak_power = float(np.max(combined[w1.lo:w1.hi + 1]))
            ok = peak_power >= floor
            if mode == "detected":
                # leakage shoulders of a strong line are not extra targets
                ok = ok and peak_power >= ghost_floor
            if ok:
                m1 = spec1 * _mask_weights(L, w1.lo, w1.hi, cfg.taper)
                m2 = spec2 * _mask_weights(L, w2.lo, w2.hi, cfg.taper)
                x1 = np.fft.ifft(np.fft.ifftshift(m1))
                x2 = np.fft.ifft(np.fft.ifftshift(m2))
                prod = conjugate_product(x1, x2)
                values[t, fi] = np.fft.fftshift(np.fft.fft(prod, n=L_pad)) / norm
                valid[t, fi] = True
                centers[t, fi] = w1.peak_hz
                if mode == "detected":
                    last_peak[t] = w1.peak_hz
            track_recs.append({
                "track": t,
                "valid": bool(ok),
                "center_hz": round(w1.peak_hz, 6),
            })
        rec["tracks"] = track_recs
        associations.append(rec)

    tracks = [TrackResponse(track_id=t, values=values[t], valid=valid[t],
                            window_center_hz=centers[t])
              for t in range(n_targets)]
    return DecomposedResponse(frame_time_s=frame_time, freq_hz=freq_pad,
                              tracks=tracks, associations=associations,
                              mode=mode, mask_scope=cfg.mask_scope)


def _assign_tracks(found, last_peak, gate_hz: float):
    """Map detected windows onto persistent track slots.

    Tracks with no history yet grab the remaining windows in ascending
    frequency order, which fixes the initial identity assignment.
    Returns, per track, the index into found or None.
    """
    n = last_peak.size
    order: list = [None] * n
    if not found:
        return order
    peaks = [w.peak_hz for w in found]
    seeded = [t for t in range(n) if np.isfinite(last_peak[t])]
    if seeded:
        assoc = associate_frequencies([last_peak[t] for t in seeded], peaks,
                                      gate_hz=gate_hz)
        for i, j in assoc.pairs:
            order[seeded[i]] = j
    taken = {j for j in order if j is not None}
    free_windows = [j for j in np.argsort(peaks) if j not in taken]
    fresh = [t for t in range(n) if order[t] is None and not np.isfinite(last_peak[t])]
    for t, j in zip(fresh, free_windows):
        order[t] = int(j)
    return order
