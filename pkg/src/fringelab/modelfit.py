"""Model-based parameter recovery from an observed product spectrum.

Fits per-target (radial velocity, angular velocity) pairs by matching the
closed-form line model against a measured magnitude spectrum: coarse
exhaustive grid search over joint parameter cells, then derivative-free
coordinate descent with step halving. Gradient methods fare poorly here;
the loss surface is a field of narrow wells, one per line permutation.

The product spectrum only constrains Doppler differences, so the common
radial-velocity offset of all targets is a flat direction (and for a
single target the radial velocity does not enter at all). Supplying a
per-channel Doppler magnitude spectrum pins it; without one the fit
settles on the lexicographically smallest equivalent cell and a warning
is issued.
"""

from __future__ import annotations

import heapq
import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .scene import ArrayGeometry

MAX_TARGETS = 3  # loss term count grows as N^2


@dataclass
class FitConfig:
    """Grid extents are (min, max, step); endpoints inclusive."""

    v_grid: tuple = (-1.0, 1.0, 0.1)
    omega_grid: tuple = (-0.12, 0.12, 0.01)
    max_refine_sweeps: int = 80
    refine_tol: float = 1e-4
    n_starts: int = 12

    def __post_init__(self):
        for name in ("v_grid", "omega_grid"):
            lo, hi, step = getattr(self, name)
            if not step > 0:
                raise ValidationError(f"{name} step must be > 0, got {step}")
            if hi < lo:
                raise ValidationError(f"{name} range is empty: ({lo}, {hi})")
        if self.max_refine_sweeps < 0:
            raise ValidationError("max_refine_sweeps must be >= 0")
        if not self.refine_tol > 0:
            raise ValidationError("refine_tol must be > 0")
        if self.n_starts < 1:
            raise ValidationError("n_starts must be >= 1")

    def v_values(self) -> np.ndarray:
        lo, hi, step = self.v_grid
        return np.arange(lo, hi + step / 2, step)

    def omega_values(self) -> np.ndarray:
        lo, hi, step = self.omega_grid
        return np.arange(lo, hi + step / 2, step)


@dataclass
class FitResult:
    params: list          # [(v_radial_mps, omega_radps)] sorted by v, omega
    loss: float
    loss_history: list = field(default_factory=list)
    n_grid_evaluations: int = 0
    used_doppler: bool = False
    grid: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "params": [{"v_radial_mps": v, "omega_radps": w}
                       for v, w in self.params],
            "loss": self.loss,
            "loss_history": self.loss_history,
            "n_grid_evaluations": self.n_grid_evaluations,
            "used_doppler": self.used_doppler,
            "grid": self.grid,
        }


def _mainlobe_weight(x: float) -> float:
    # hann window transform in bin units, peak normalized: sinc(x)/(1-x^2)
    if abs(abs(x) - 1.0) < 1e-9:
        return 0.5
    if x == 0.0:
        return 1.0
    px = math.pi * x
    return abs(math.sin(px) / px / (1.0 - x * x))


class _Spectrum:
    """Magnitude spectrum prepared for sparse line scoring.

    kernel "triangle" matches the dense model rasterizer (2-bin split);
    "mainlobe" spreads each line with the analysis-window lobe shape and
    belongs on measured spectra sampled at native bin spacing.
    """

    def __init__(self, freq_hz, magnitude, label: str, kernel: str = "triangle"):
        if kernel not in ("triangle", "mainlobe"):
            raise ValidationError(f"unknown line kernel {kernel!r}")
        self.freq = np.asarray(freq_hz, dtype=float)
        self.mag = np.asarray(magnitude, dtype=float)
        if self.freq.ndim != 1 or self.freq.size < 2:
            raise ValidationError(f"{label} axis must be 1-D with >= 2 bins")
        if self.mag.shape != self.freq.shape:
            raise ValidationError(f"{label} magnitude must match its axis")
        if not np.any(self.mag > 0):
            raise ValidationError(f"{label} spectrum is identically zero")
        self.lo = float(self.freq[0])
        self.step = float(self.freq[1] - self.freq[0])
        self.size = self.freq.size
        self.energy = float(np.dot(self.mag, self.mag))
        self.kernel = kernel

    def line_loss(self, lines) -> float:
        """L2 distance to the best-scaled sparse line raster.

        With the triangle kernel the bin splitting matches the dense
        rasterizer, so a spectrum generated from the same lines scores
        (numerically) zero.
        """
        bins: dict[int, float] = {}
        for f, w in lines:
            pos = (f - self.lo) / self.step
            if pos < 0.0 or pos > self.size - 1:
                continue
            k = int(pos)  # pos >= 0 here, truncation is floor
            frac = pos - k
            if self.kernel == "triangle":
                bins[k] = bins.get(k, 0.0) + w * (1.0 - frac)
                if k + 1 < self.size:
                    bins[k + 1] = bins.get(k + 1, 0.0) + w * frac
            else:
                for j in range(-1, 3):
                    b = k + j
                    if 0 <= b < self.size:
                        bins[b] = bins.get(b, 0.0) + w * _mainlobe_weight(j - frac)
        dot = 0.0
        m2 = 0.0
        for k, v in bins.items():
            dot += self.mag[k] * v
            m2 += v * v
        if m2 <= 0.0:
            return self.energy
        return self.energy - dot * dot / m2


def _product_lines(params, lam: float, baseline_m: float):
    """(freq, weight) pairs of the N^2 product lines, unit amplitudes."""
    dopp = [2.0 * v / lam for v, _ in params]
    fringe = [w * baseline_m / lam for _, w in params]
    lines = []
    for n in range(len(params)):
        for k in range(len(params)):
            lines.append((dopp[n] - dopp[k] + fringe[k], 1.0))
    return lines


def _doppler_lines(params, lam: float):
    return [(2.0 * v / lam, 1.0) for v, _ in params]


def candidate_loss(params, product: _Spectrum, geom: ArrayGeometry,
                   doppler: _Spectrum | None = None,
                   fringe: _Spectrum | None = None) -> float:
    """Loss of one parameter set; invariant under target permutation.

    fringe, when given, is a finer-resolution cut of the product spectrum
    scored against the same line model; it sharpens the angular-velocity
    estimate, and when the cut spans the intermodulation lines it also
    decides which angular velocity belongs to which radial velocity
    (their sub-bin positions are the only pairing evidence, and coarse
    rebinning erases it). Lines outside the cut are simply dropped, so a
    narrow band around zero still works and leaves the radial-velocity
    search basin wide.
    """
    ordered = sorted(params)
    lam = geom.wavelength_m
    lines = _product_lines(ordered, lam, geom.baseline_m)
    loss = product.line_loss(lines)
    if doppler is not None:
        loss += doppler.line_loss(_doppler_lines(ordered, lam))
    if fringe is not None:
        loss += fringe.line_loss(lines)
    return loss


def fit(freq_hz, magnitude, n_targets: int, geom: ArrayGeometry,
        cfg: FitConfig | None = None, *,
        doppler_freq_hz=None, doppler_magnitude=None,
        fringe_freq_hz=None, fringe_magnitude=None,
        fringe_kernel: str = "mainlobe") -> FitResult:
    """Recover (v_radial, omega) per target from a magnitude spectrum.

    Exhaustive search over unordered combinations of grid cells, then
    coordinate descent from each of the cfg.n_starts best cells, halving
    both step sizes when a full sweep makes no progress, until they drop
    below cfg.refine_tol. The coarse landscape rewards pairings whose
    velocity quantization error is cancelled by a wrong fringe split, so
    a single start can converge on a basin with the fringe offsets
    traded between targets; the result with the lowest final loss wins
    and its loss history (non-increasing by construction) is returned.

    The optional fringe spectrum is an un-rebinned view of the product
    spectrum: on the coarse raster the near-carrier lines share a bin
    and leave omega entangled with the radial-velocity quantization
    error, so the native-resolution term pins each target's fringe
    offset, and when it spans the intermodulation lines it also decides
    which omega belongs to which radial velocity. fringe_kernel
    defaults to the analysis-window lobe shape expected of measured
    data; synthetic line rasters should pass "triangle" to match their
    generator.
    """
    if cfg is None:
        cfg = FitConfig()
    if not 1 <= n_targets <= MAX_TARGETS:
        raise ValidationError(
            f"n_targets must be in [1, {MAX_TARGETS}], got {n_targets}")
    product = _Spectrum(freq_hz, magnitude, "product")
    doppler = None
    fringe = None
    if fringe_magnitude is not None:
        if fringe_freq_hz is None:
            raise ValidationError("fringe_magnitude needs fringe_freq_hz")
        fringe = _Spectrum(fringe_freq_hz, fringe_magnitude, "fringe",
                           kernel=fringe_kernel)
    if doppler_magnitude is not None:
        if doppler_freq_hz is None:
            raise ValidationError("doppler_magnitude needs doppler_freq_hz")
        doppler = _Spectrum(doppler_freq_hz, doppler_magnitude, "doppler")
    else:
        warnings.warn(
            "no Doppler spectrum supplied; the common radial-velocity "
            "offset is unconstrained by the product spectrum",
            stacklevel=2)

    cells = [(float(v), float(w))
             for v in cfg.v_values() for w in cfg.omega_values()]
    # bounded max-heap on negated loss keeps the n_starts best cells
    # without storing the whole combination list
    heap = []
    n_evals = 0
    for combo in itertools.combinations_with_replacement(cells, n_targets):
        loss = candidate_loss(combo, product, geom, doppler, fringe)
        n_evals += 1
        item = (-loss, n_evals, combo)
        if len(heap) < cfg.n_starts:
            heapq.heappush(heap, item)
        elif item > heap[0]:
            heapq.heapreplace(heap, item)

    best_params = None
    best_loss = np.inf
    best_history = None
    # ascending coarse loss; ties broken by evaluation order
    for neg_loss, _, combo in sorted(heap, reverse=True):
        params, loss, history = _descend(
            combo, -neg_loss, product, geom, doppler, fringe, cfg)
        if loss < best_loss:
            best_loss = loss
            best_params = params
            best_history = history

    return FitResult(
        params=sorted(tuple(p) for p in best_params),
        loss=best_loss,
        loss_history=best_history,
        n_grid_evaluations=n_evals,
        used_doppler=doppler is not None,
        grid={"v_grid": list(cfg.v_grid), "omega_grid": list(cfg.omega_grid)},
    )


def _descend(start, start_loss, product, geom, doppler, fringe, cfg):
    """Coordinate descent from one grid cell; returns (params, loss, history)."""
    params = [list(p) for p in start]
    best_loss = start_loss
    history = [best_loss]
    v_step = cfg.v_grid[2]
    w_step = cfg.omega_grid[2]
    for _ in range(cfg.max_refine_sweeps):
        if v_step < cfg.refine_tol and w_step < cfg.refine_tol:
            break
        improved = False
        for i in range(len(params)):
            for coord, step in ((0, v_step), (1, w_step)):
                base = params[i][coord]
                for trial in (base + step, base - step):
                    params[i][coord] = trial
                    loss = candidate_loss([tuple(p) for p in params],
                                          product, geom, doppler, fringe)
                    if loss < best_loss:
                        best_loss = loss
                        base = trial
                        improved = True
                params[i][coord] = base
        history.append(best_loss)
        if not improved:
            v_step /= 2.0
            w_step /= 2.0
    return params, best_loss, history
