"""Scenario files: declarative simulation + processing configs in TOML.

A scenario bundles everything a run needs: array geometry, waveform and
noise settings, antenna pattern, target trajectories, and processing
parameters. Unknown keys are rejected rather than ignored so that a typo
cannot silently change an experiment. Unit-bearing keys carry the unit in
their name.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # 3.10
    import tomli as tomllib

import numpy as np

from .errors import ValidationError
from .scene import (ArrayGeometry, TargetTrajectory, circle_trajectory,
                    line_trajectory, load_ground_truth, spiral_trajectory)
from .synth import AntennaPattern, WaveformConfig

SCHEMA_VERSION = 1

_GEOMETRY_KEYS = {"carrier_hz", "baseline_lambdas", "baseline_m", "center_xy_m"}
_WAVEFORM_KEYS = {"sample_rate_hz", "duration_s", "snr_db", "dc_offset",
                  "rng_seed"}
_PATTERN_KEYS = {"kind", "beamwidth_deg"}
_TARGET_KEYS = {
    "line": {"id", "kind", "start_xy_m", "velocity_mps", "amplitude"},
    "circle": {"id", "kind", "center_xy_m", "radius_m", "omega_radps",
               "phase0_deg", "amplitude"},
    "spiral": {"id", "kind", "range0_m", "bearing0_deg", "v_radial_mps",
               "omega_radps", "amplitude"},
    "csv": {"id", "kind", "path"},
}
_PROCESSING_KEYS = {
    "mode", "mask_scope", "window_len", "overlap", "zero_pad",
    "mask_width_hz", "floor_db", "smooth_frames", "highpass_hz",
    "highpass_order", "truth_rate_hz", "truth_smooth_samples", "gate_hz",
    "detection_floor_snr_db", "guard_bins", "ghost_rel_db",
    "obliquity_from_truth",
}
_TOP_KEYS = {"schema_version", "name", "geometry", "waveform", "pattern",
             "targets", "processing"}


@dataclass
class ProcessingConfig:
    mode: str = "known"             # known | detected
    mask_scope: str = "shared"
    window_len: int = 1024
    overlap: int = 960
    zero_pad: int = 8
    mask_width_hz: float = 10.0
    floor_db: float = -20.0
    smooth_frames: int = 60
    highpass_hz: float = 1.0
    highpass_order: int = 3
    truth_rate_hz: float = 120.0
    truth_smooth_samples: int = 5
    gate_hz: float = 5.0
    detection_floor_snr_db: float = 10.0
    guard_bins: int = 2
    ghost_rel_db: float = 30.0
    obliquity_from_truth: bool = False

    def __post_init__(self):
        if self.mode not in ("known", "detected"):
            raise ValidationError(f"mode must be known|detected, got {self.mode!r}")

    def stft_config(self):
        from .dsp import StftConfig
        return StftConfig(window_len=self.window_len,
                          fft_len=self.window_len, overlap=self.overlap)

    def decomp_config(self):
        from .decomp import DecompConfig
        return DecompConfig(
            stft=self.stft_config(),
            zero_pad=self.zero_pad,
            mask_width_hz=self.mask_width_hz,
            mask_scope=self.mask_scope,
            gate_hz=self.gate_hz,
            track_gate_hz=self.gate_hz,
            detection_floor_snr_db=self.detection_floor_snr_db,
            guard_bins=self.guard_bins,
            ghost_rel_db=self.ghost_rel_db,
        )


@dataclass
class Scenario:
    name: str
    geometry: ArrayGeometry
    waveform: WaveformConfig
    pattern: AntennaPattern
    target_specs: list
    processing: ProcessingConfig
    source_path: Path | None = None
    file_sha256: str = ""

    @property
    def n_targets(self) -> int:
        return len(self.target_specs)

    def trajectories(self) -> list[TargetTrajectory]:
        """Build target trajectories at the configured truth rate."""
        rate = self.processing.truth_rate_hz
        dur = self.waveform.duration_s
        out = []
        for spec in self.target_specs:
            kind = spec["kind"]
            tid = spec["id"]
            amp = spec.get("amplitude", 1.0)
            if kind == "line":
                out.append(line_trajectory(tid, spec["start_xy_m"],
                                           spec["velocity_mps"], dur,
                                           rate_hz=rate, amplitude=amp))
            elif kind == "circle":
                out.append(circle_trajectory(
                    tid, spec["center_xy_m"], spec["radius_m"],
                    spec["omega_radps"], dur, rate_hz=rate, amplitude=amp,
                    start_angle_rad=np.deg2rad(spec.get("phase0_deg", 0.0))))
            elif kind == "spiral":
                out.append(spiral_trajectory(
                    tid, spec["range0_m"],
                    np.deg2rad(spec.get("bearing0_deg", 0.0)),
                    spec["v_radial_mps"], spec["omega_radps"], dur,
                    rate_hz=rate, amplitude=amp))
            else:
                path = spec["path"]
                loaded = {t.target_id: t for t in load_ground_truth(path)}
                if tid not in loaded:
                    raise ValidationError(
                        f"{path}: no trajectory with id {tid}")
                out.append(loaded[tid])
        return out


def _reject_unknown(table: dict, allowed: set, where: str) -> None:
    extra = sorted(set(table) - allowed)
    if extra:
        raise ValidationError(f"scenario: unknown key {where}.{extra[0]}")


def _pair(value, where: str) -> tuple:
    if (not isinstance(value, (list, tuple)) or len(value) != 2
            or not all(isinstance(v, (int, float)) for v in value)):
        raise ValidationError(f"scenario: {where} must be a [x, y] pair")
    return float(value[0]), float(value[1])


def load_scenario(path) -> Scenario:
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"scenario file not found: {path}")
    raw = path.read_bytes()
    try:
        doc = tomllib.loads(raw.decode("utf-8"))
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as e:
        raise ValidationError(f"{path}: {e}") from e

    _reject_unknown(doc, _TOP_KEYS, "top level")
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ValidationError(
            f"scenario schema_version must be {SCHEMA_VERSION}, got {version!r}")

    g = doc.get("geometry", {})
    _reject_unknown(g, _GEOMETRY_KEYS, "geometry")
    carrier = float(g.get("carrier_hz", 40.0e9))
    if "baseline_m" in g and "baseline_lambdas" in g:
        raise ValidationError(
            "scenario: give geometry.baseline_m or baseline_lambdas, not both")
    center = _pair(g.get("center_xy_m", (0.0, 0.0)), "geometry.center_xy_m")
    if "baseline_m" in g:
        geom = ArrayGeometry(carrier_hz=carrier,
                             baseline_m=float(g["baseline_m"]),
                             center_xy_m=center)
    else:
        geom = ArrayGeometry.standard(
            carrier_hz=carrier,
            baseline_lambdas=float(g.get("baseline_lambdas", 20.0)),
            center_xy_m=center)

    w = doc.get("waveform", {})
    _reject_unknown(w, _WAVEFORM_KEYS, "waveform")
    dc = w.get("dc_offset", (0.01, 0.0))
    dc = complex(*_pair(dc, "waveform.dc_offset"))
    snr = w.get("snr_db")
    waveform = WaveformConfig(
        sample_rate_hz=float(w.get("sample_rate_hz", 1920.0)),
        duration_s=float(w.get("duration_s", 8.0)),
        snr_db=None if snr is None else float(snr),
        dc_offset=dc,
        rng_seed=int(w.get("rng_seed", 0)),
    )

    p = doc.get("pattern", {})
    _reject_unknown(p, _PATTERN_KEYS, "pattern")
    pattern = AntennaPattern(kind=p.get("kind", "gaussian"),
                             beamwidth_deg=float(p.get("beamwidth_deg", 30.0)))

    specs = []
    seen_ids = set()
    for i, t in enumerate(doc.get("targets", [])):
        kind = t.get("kind")
        if kind not in _TARGET_KEYS:
            raise ValidationError(
                f"scenario: targets[{i}].kind must be one of "
                f"{sorted(_TARGET_KEYS)}, got {kind!r}")
        _reject_unknown(t, _TARGET_KEYS[kind], f"targets[{i}]")
        spec = dict(t)
        spec["id"] = int(t.get("id", i + 1))
        if spec["id"] in seen_ids:
            raise ValidationError(f"scenario: duplicate target id {spec['id']}")
        seen_ids.add(spec["id"])
        if kind == "line":
            spec["start_xy_m"] = _pair(t.get("start_xy_m"), f"targets[{i}].start_xy_m")
            spec["velocity_mps"] = _pair(t.get("velocity_mps"), f"targets[{i}].velocity_mps")
        elif kind == "circle":
            spec["center_xy_m"] = _pair(t.get("center_xy_m"), f"targets[{i}].center_xy_m")
        elif kind == "csv":
            ref = (path.parent / t["path"]).resolve()
            if not ref.exists():
                raise ValidationError(f"scenario: trajectory file not found: {ref}")
            spec["path"] = ref
        specs.append(spec)

    pr = doc.get("processing", {})
    _reject_unknown(pr, _PROCESSING_KEYS, "processing")
    processing = ProcessingConfig(**pr)

    return Scenario(
        name=str(doc.get("name", path.stem)),
        geometry=geom,
        waveform=waveform,
        pattern=pattern,
        target_specs=specs,
        processing=processing,
        source_path=path,
        file_sha256=hashlib.sha256(raw).hexdigest(),
    )
