"""Plan-view kinematics for a two-element interferometric receiver.

Geometry is two dimensional. The transmitter sits midway between the two
receive antennas, broadside is the +y axis, and bearings are measured from
broadside, positive toward +x (clockwise seen from above). Antenna 1 is on
the +x side, so a target circling clockwise has positive angular velocity
and produces a positive fringe-crossing frequency.

Radial velocity is approach positive: it is minus half the round-trip
range rate, which makes the baseband Doppler of a target equal to
2 * v_radial / wavelength with no extra sign.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np

from ._util import moving_average
from .errors import ParseError, ValidationError

C_MPS = 299_792_458.0

TRUTH_HEADER = ("t", "target_id", "x", "y")


@dataclass
class ArrayGeometry:
    """Two receive antennas on the x axis with a co-located transmitter."""

    carrier_hz: float
    baseline_m: float
    center_xy_m: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if not self.carrier_hz > 0:
            raise ValidationError(f"carrier_hz must be positive, got {self.carrier_hz}")
        if not self.baseline_m > 0:
            raise ValidationError(f"baseline_m must be positive, got {self.baseline_m}")

    @property
    def wavelength_m(self) -> float:
        return C_MPS / self.carrier_hz

    @property
    def tx_xy_m(self) -> tuple[float, float]:
        return self.center_xy_m

    @property
    def rx_xy_m(self) -> tuple[tuple[float, float], tuple[float, float]]:
        """Receive positions, antenna 1 first (on the +x side)."""
        cx, cy = self.center_xy_m
        h = 0.5 * self.baseline_m
        return ((cx + h, cy), (cx - h, cy))

    @classmethod
    def standard(cls, carrier_hz: float = 40e9, baseline_lambdas: float = 20.0,
                 center_xy_m: tuple[float, float] = (0.0, 0.0)) -> "ArrayGeometry":
        """Geometry with the baseline given in carrier wavelengths."""
        if not baseline_lambdas > 0:
            raise ValidationError(f"baseline_lambdas must be positive, got {baseline_lambdas}")
        wavelength = C_MPS / carrier_hz
        return cls(carrier_hz=carrier_hz, baseline_m=baseline_lambdas * wavelength,
                   center_xy_m=center_xy_m)


@dataclass
class TargetTrajectory:
    """Sampled plan-view path of one point target."""

    target_id: int
    t_s: np.ndarray
    x_m: np.ndarray
    y_m: np.ndarray
    amplitude: float = 1.0

    def __post_init__(self):
        self.t_s = np.asarray(self.t_s, dtype=float)
        self.x_m = np.asarray(self.x_m, dtype=float)
        self.y_m = np.asarray(self.y_m, dtype=float)
        if self.t_s.ndim != 1 or self.t_s.size < 2:
            raise ValidationError(f"target {self.target_id}: need at least two samples")
        if self.x_m.shape != self.t_s.shape or self.y_m.shape != self.t_s.shape:
            raise ValidationError(f"target {self.target_id}: t_s, x_m, y_m shapes differ")
        for name, arr in (("t_s", self.t_s), ("x_m", self.x_m), ("y_m", self.y_m)):
            if not np.all(np.isfinite(arr)):
                raise ValidationError(f"target {self.target_id}: non-finite {name}")
        if np.any(np.diff(self.t_s) <= 0):
            raise ValidationError(
                f"target {self.target_id}: timestamps must be strictly increasing")
        if not self.amplitude > 0:
            raise ValidationError(f"target {self.target_id}: amplitude must be positive")

    @property
    def span_s(self) -> tuple[float, float]:
        return float(self.t_s[0]), float(self.t_s[-1])

    def position_at(self, t_s):
        """Linearly interpolated position; t outside the span is an error."""
        t = np.asarray(t_s, dtype=float)
        lo, hi = self.span_s
        if np.any(t < lo) or np.any(t > hi):
            raise ValidationError(
                f"target {self.target_id}: time outside trajectory span [{lo:g}, {hi:g}]")
        return np.interp(t, self.t_s, self.x_m), np.interp(t, self.t_s, self.y_m)

    def smoothed(self, width: int) -> "TargetTrajectory":
        """Moving-average copy, for taming jitter in captured paths."""
        if int(width) < 1:
            raise ValidationError(f"smoothing width must be >= 1, got {width}")
        return TargetTrajectory(
            target_id=self.target_id,
            t_s=self.t_s.copy(),
            x_m=moving_average(self.x_m, width),
            y_m=moving_average(self.y_m, width),
            amplitude=self.amplitude,
        )


class KinematicState(NamedTuple):
    """Per-antenna kinematics of one target at the query times.

    Two-element tuples are indexed by antenna (0 is antenna 1, on the +x
    side). Entries are floats for scalar queries, arrays otherwise.
    """

    t_s: object
    range_tx_m: object
    range_m: tuple
    theta_rad: tuple
    v_radial_mps: tuple
    omega_radps: tuple
    tau_s: tuple


class ExpectedShifts(NamedTuple):
    doppler_hz: object
    interferometric_hz: object


def path_geometry(traj: TargetTrajectory, geom: ArrayGeometry, t_s):
    """Ranges and bearings of a target at given times.

    Returns (range_tx, [range_1, range_2], [theta_1, theta_2]) where
    bearings are measured from broadside at each receive antenna.
    """
    x, y = traj.position_at(t_s)
    txx, txy = geom.tx_xy_m
    r_tx = np.hypot(x - txx, y - txy)
    ranges = []
    thetas = []
    for ax, ay in geom.rx_xy_m:
        ranges.append(np.hypot(x - ax, y - ay))
        thetas.append(np.arctan2(x - ax, y - ay))
    eps = 1e-9
    if np.any(r_tx < eps) or any(np.any(r < eps) for r in ranges):
        raise ValidationError(f"target {traj.target_id}: path passes through an antenna")
    return r_tx, ranges, thetas


def _wrap_angle(a):
    return np.arctan2(np.sin(a), np.cos(a))


def kinematics_at(traj: TargetTrajectory, geom: ArrayGeometry, t_s,
                  diff_step_s: float | None = None) -> KinematicState:
    """Finite-difference kinematics of a target at the query times.

    Central differences with the stencil clamped to the trajectory span,
    so queries at the ends degrade to one-sided differences. The default
    step is the median sample spacing of the trajectory.
    """
    scalar = np.ndim(t_s) == 0
    t = np.atleast_1d(np.asarray(t_s, dtype=float))
    lo, hi = traj.span_s
    if diff_step_s is None:
        diff_step_s = float(np.median(np.diff(traj.t_s)))
    h = float(diff_step_s)
    if not h > 0:
        raise ValidationError(f"diff_step_s must be positive, got {diff_step_s}")

    tp = np.minimum(t + h, hi)
    tm = np.maximum(t - h, lo)
    r_tx, rng, th = path_geometry(traj, geom, t)
    r_tx_p, rng_p, th_p = path_geometry(traj, geom, tp)
    r_tx_m, rng_m, th_m = path_geometry(traj, geom, tm)
    dt = tp - tm
    tx_rate = (r_tx_p - r_tx_m) / dt

    v_r, omega, tau = [], [], []
    for i in range(2):
        rx_rate = (rng_p[i] - rng_m[i]) / dt
        v_r.append(-0.5 * (tx_rate + rx_rate))
        omega.append(_wrap_angle(th_p[i] - th_m[i]) / dt)
        tau.append((r_tx + rng[i]) / C_MPS)

    def pick(a):
        return float(a[0]) if scalar else a

    return KinematicState(
        t_s=pick(t),
        range_tx_m=pick(r_tx),
        range_m=tuple(pick(r) for r in rng),
        theta_rad=tuple(pick(a) for a in th),
        v_radial_mps=tuple(pick(v) for v in v_r),
        omega_radps=tuple(pick(w) for w in omega),
        tau_s=tuple(pick(x) for x in tau),
    )


def expected_shifts(traj: TargetTrajectory, geom: ArrayGeometry, t_s,
                    diff_step_s: float | None = None,
                    bearing_threshold_rad: float = 0.2) -> ExpectedShifts:
    """Model placement of a target's spectral content.

    Doppler is 2 * v_radial / wavelength at antenna 1. The fringe term is
    omega * baseline / wavelength, picking up a cos(theta) obliquity
    factor once the bearing leaves the near-broadside cone.
    """
    st = kinematics_at(traj, geom, t_s, diff_step_s)
    lam = geom.wavelength_m
    fd = 2.0 * np.asarray(st.v_radial_mps[0]) / lam
    th = np.asarray(st.theta_rad[0])
    om = np.asarray(st.omega_radps[0])
    obliquity = np.where(np.abs(th) < bearing_threshold_rad, 1.0, np.cos(th))
    fi = om * geom.baseline_m / lam * obliquity
    if np.ndim(t_s) == 0:
        return ExpectedShifts(float(fd), float(fi))
    return ExpectedShifts(fd, fi)


def load_ground_truth(path) -> list[TargetTrajectory]:
    """Parse a ground-truth CSV with columns t,target_id,x,y.

    Lines starting with '#' are comments; one header row is tolerated.
    Per-target timestamps must be strictly increasing in file order.
    Returns trajectories sorted by target id.
    """
    rows: dict[int, list[tuple[float, float, float]]] = {}
    last_seen: dict[int, tuple[float, int]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = [p.strip() for p in line.split(",")]
            if tuple(parts) == TRUTH_HEADER:
                continue
            if len(parts) != 4:
                raise ParseError(
                    f"expected 4 columns t,target_id,x,y, got {len(parts)}", line=lineno)
            try:
                t = float(parts[0])
                tid = int(parts[1])
                x = float(parts[2])
                y = float(parts[3])
            except ValueError:
                raise ParseError(f"could not parse row {parts!r}", line=lineno) from None
            if not (np.isfinite(t) and np.isfinite(x) and np.isfinite(y)):
                raise ParseError("non-finite value", line=lineno)
            prev = last_seen.get(tid)
            if prev is not None and t <= prev[0]:
                raise ParseError(
                    f"target {tid}: time {t:g} does not increase past line {prev[1]}",
                    line=lineno)
            last_seen[tid] = (t, lineno)
            rows.setdefault(tid, []).append((t, x, y))
    if not rows:
        raise ValidationError(f"{path}: no data rows")
    out = []
    for tid in sorted(rows):
        arr = np.asarray(rows[tid], dtype=float)
        out.append(TargetTrajectory(target_id=tid, t_s=arr[:, 0], x_m=arr[:, 1], y_m=arr[:, 2]))
    return out


def write_ground_truth(path, trajectories: Iterable[TargetTrajectory]) -> None:
    """Inverse of load_ground_truth; full float precision, one target block
    after another."""
    trajs = sorted(trajectories, key=lambda tr: tr.target_id)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# plan-view target positions\n")
        fh.write(",".join(TRUTH_HEADER) + "\n")
        for traj in trajs:
            for t, x, y in zip(traj.t_s, traj.x_m, traj.y_m):
                fh.write(f"{float(t)!r},{traj.target_id},{float(x)!r},{float(y)!r}\n")


def _time_base(duration_s: float, rate_hz: float) -> np.ndarray:
    if not duration_s > 0:
        raise ValidationError(f"duration_s must be positive, got {duration_s}")
    if not rate_hz > 0:
        raise ValidationError(f"rate_hz must be positive, got {rate_hz}")
    n = int(round(duration_s * rate_hz))
    return np.arange(n + 1) / rate_hz


def line_trajectory(target_id: int, start_xy_m, velocity_mps, duration_s: float,
                    rate_hz: float = 120.0, amplitude: float = 1.0) -> TargetTrajectory:
    """Constant-velocity straight path."""
    t = _time_base(duration_s, rate_hz)
    return TargetTrajectory(
        target_id=target_id,
        t_s=t,
        x_m=start_xy_m[0] + velocity_mps[0] * t,
        y_m=start_xy_m[1] + velocity_mps[1] * t,
        amplitude=amplitude,
    )


def circle_trajectory(target_id: int, center_xy_m, radius_m: float, omega_radps: float,
                      duration_s: float, rate_hz: float = 120.0, amplitude: float = 1.0,
                      start_angle_rad: float = 0.0) -> TargetTrajectory:
    """Circular path; the position angle is measured like a bearing (from
    +y, positive toward +x), so positive omega is clockwise from above."""
    if not radius_m > 0:
        raise ValidationError(f"radius_m must be positive, got {radius_m}")
    t = _time_base(duration_s, rate_hz)
    ang = start_angle_rad + omega_radps * t
    return TargetTrajectory(
        target_id=target_id,
        t_s=t,
        x_m=center_xy_m[0] + radius_m * np.sin(ang),
        y_m=center_xy_m[1] + radius_m * np.cos(ang),
        amplitude=amplitude,
    )


def spiral_trajectory(target_id: int, range0_m: float, bearing0_rad: float,
                      v_radial_mps: float, omega_radps: float, duration_s: float,
                      rate_hz: float = 120.0, amplitude: float = 1.0) -> TargetTrajectory:
    """Constant approach speed and constant bearing rate about the array
    center. v_radial_mps > 0 approaches, per the global sign convention."""
    t = _time_base(duration_s, rate_hz)
    r = range0_m - v_radial_mps * t
    if np.any(r <= 0):
        raise ValidationError(
            f"target {target_id}: range reaches zero within duration {duration_s:g} s")
    ang = bearing0_rad + omega_radps * t
    return TargetTrajectory(
        target_id=target_id,
        t_s=t,
        x_m=r * np.sin(ang),
        y_m=r * np.cos(ang),
        amplitude=amplitude,
    )
