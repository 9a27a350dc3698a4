"""Command-line front end tying simulation and processing together.

Subcommands:
  simulate   render a scenario to an IQ capture + ground-truth CSV
  process    run the decomposition chain on a capture, write estimates,
             stats, associations, and figures
  oracle     print the closed-form line lists for a scenario at time t
  fit        recover (v_radial, omega) per target from a capture frame
  eval       score an estimate series against ground truth

Exit codes: 0 success, 1 pipeline failure, 2 input validation failure.
The default output directory comes from --out, then $FRINGELAB_OUT,
then the working directory.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .decomp import associate_frequencies, decompose_and_correlate
from .dsp import highpass_capture, interferometric_response, stft
from .errors import PipelineError, ValidationError
from .estimate import EstimateSeries, peak_track, smooth, stats, to_omega
from .model import decomposed_response_lines, full_response_lines, PointState
from .modelfit import FitConfig, fit as run_fit
from .scenario import load_scenario
from .scene import kinematics_at, load_ground_truth, write_ground_truth
from .synth import file_digest, read_capture, synthesize, write_capture


def _out_dir(args) -> Path:
    out = args.out or os.environ.get("FRINGELAB_OUT") or "."
    p = Path(out)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _stage(name: str, fn, *a, **kw):
    try:
        return fn(*a, **kw)
    except (ValidationError, PipelineError):
        raise
    except Exception as e:
        raise PipelineError(name, str(e)) from e


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _processing_overrides(sc, args):
    proc = sc.processing
    if getattr(args, "mode", None):
        proc = replace(proc, mode=args.mode)
    if getattr(args, "mask_width_hz", None) is not None:
        proc = replace(proc, mask_width_hz=args.mask_width_hz)
    if getattr(args, "floor_db", None) is not None:
        proc = replace(proc, floor_db=args.floor_db)
    if getattr(args, "smooth_frames", None) is not None:
        proc = replace(proc, smooth_frames=args.smooth_frames)
    if getattr(args, "zero_pad", None) is not None:
        proc = replace(proc, zero_pad=args.zero_pad)
    return proc


def cmd_simulate(args) -> int:
    sc = load_scenario(args.scenario)
    wf = sc.waveform
    if args.seed is not None:
        wf = replace(wf, rng_seed=args.seed)
    trajs = sc.trajectories()
    cap = _stage("synthesize", synthesize, trajs, sc.geometry, wf, sc.pattern)
    cap.meta.update({
        "scenario": sc.name,
        "scenario_sha256": sc.file_sha256,
        "carrier_hz": sc.geometry.carrier_hz,
        "baseline_m": sc.geometry.baseline_m,
    })
    out = _out_dir(args)
    cap_path = out / "capture.iq"
    _stage("write", write_capture, cap, cap_path)
    truth_path = out / "truth.csv"
    _stage("write", write_ground_truth, truth_path, trajs)
    print(f"wrote {cap_path} ({cap.n_samples} samples, "
          f"{len(trajs)} targets, seed {wf.rng_seed})")
    print(f"wrote {truth_path}")
    return 0


def _pair_tracks(dec, expected_doppler: np.ndarray, mode: str):
    """Map track index -> trajectory index (or None)."""
    n_tracks = len(dec.tracks)
    n_targets = expected_doppler.shape[1]
    if mode == "known":
        return {k: (k if k < n_targets else None) for k in range(n_tracks)}
    centers, live = [], []
    for tr in dec.tracks:
        c = tr.window_center_hz[tr.valid]
        if c.size:
            centers.append(float(np.mean(c)))
            live.append(tr.track_id)
    means = [float(np.mean(expected_doppler[:, j])) for j in range(n_targets)]
    res = associate_frequencies(centers, means)
    pairing = {k: None for k in range(n_tracks)}
    for i, j in res.pairs:
        pairing[live[i]] = j
    return pairing


def cmd_process(args) -> int:
    sc = load_scenario(args.scenario)
    proc = _processing_overrides(sc, args)
    cap_path = Path(args.capture)
    cap = _stage("read", read_capture, cap_path)
    fs = cap.sample_rate_hz

    truth_path = Path(args.truth) if args.truth else cap_path.parent / "truth.csv"
    if not truth_path.exists():
        raise ValidationError(f"ground-truth file not found: {truth_path}")
    trajs = load_ground_truth(truth_path)
    trajs = [t.smoothed(proc.truth_smooth_samples) for t in trajs]

    out = _out_dir(args)
    hp = _stage("highpass", highpass_capture, cap,
                cutoff_hz=proc.highpass_hz, order=proc.highpass_order)

    stft_cfg = proc.stft_config()
    ch1_map = _stage("stft", stft, hp.ch1, fs, stft_cfg, t0_s=cap.t0_s)
    ch2_map = _stage("stft", stft, hp.ch2, fs, stft_cfg, t0_s=cap.t0_s)
    product_map = _stage("product", interferometric_response, hp, stft_cfg,
                         zero_pad=proc.zero_pad)
    ch1_map.save(out / "channel1_map.npz")
    ch2_map.save(out / "channel2_map.npz")
    product_map.save(out / "product_map.npz")

    frame_t = stft_cfg.frame_times(cap.n_samples, fs, cap.t0_s)
    kins = [_stage("truth", kinematics_at, tr, sc.geometry, frame_t)
            for tr in trajs]
    lam = sc.geometry.wavelength_m
    expected = (np.stack([2.0 * k.v_radial_mps[0] / lam for k in kins], axis=1)
                if kins else np.zeros((frame_t.size, 0)))

    dec = _stage("decompose", decompose_and_correlate, hp, len(trajs),
                 proc.decomp_config(), mode=proc.mode,
                 expected_doppler_hz=expected if proc.mode == "known" else None)
    dec.write_associations(out / "associations.jsonl")

    pairing = _pair_tracks(dec, expected, proc.mode)
    hop_s = stft_cfg.hop / fs
    track_rows = []
    stats_rows = []
    for tr in dec.tracks:
        tid = tr.track_id
        raw = _stage("estimate", peak_track, dec.track_map(tid),
                     floor_db=proc.floor_db)
        traj_idx = pairing.get(tid)
        bearing = None
        if proc.obliquity_from_truth and traj_idx is not None:
            bearing = kins[traj_idx].theta_rad[0]
        raw = _stage("estimate", to_omega, raw, sc.geometry, bearing)
        smoothed = _stage("estimate", smooth, raw, proc.smooth_frames)
        raw.to_csv(out / f"track{tid}_estimates.csv")
        smoothed.to_csv(out / f"track{tid}_estimates_smoothed.csv")

        row = {
            "track_id": tid,
            "target_id": (trajs[traj_idx].target_id
                          if traj_idx is not None else None),
            "n_frames": raw.n_frames,
            "valid_fraction": raw.valid_fraction(),
            "raw": None,
            "smoothed": None,
        }
        if traj_idx is not None:
            truth_omega = kins[traj_idx].omega_radps[0]
            for label, series in (("raw", raw), ("smoothed", smoothed)):
                try:
                    st = stats(series, frame_t, truth_omega)
                    row[label] = st.to_dict()
                except ValidationError:
                    row[label] = None
        stats_rows.append(row)
        track_rows.append({
            "track_id": tid,
            "raw": raw,
            "smoothed": smoothed,
            "truth_omega_radps": (kins[traj_idx].omega_radps[0]
                                  if traj_idx is not None else None),
        })

    _write_json(out / "stats.json", {
        "scenario": sc.name,
        "scenario_sha256": sc.file_sha256,
        "capture_sha256": file_digest(cap_path),
        "mode": proc.mode,
        "mask_scope": proc.mask_scope,
        "n_targets": len(trajs),
        "smooth_frames": proc.smooth_frames,
        "smooth_equivalent_s": proc.smooth_frames * hop_s,
        "tracks": stats_rows,
    })
    _write_json(out / "run.json", {
        "command": "process",
        "version": __version__,
        "mode": proc.mode,
        "zero_pad": proc.zero_pad,
        "mask_width_hz": proc.mask_width_hz,
        "floor_db": proc.floor_db,
        "smooth_frames": proc.smooth_frames,
        "scenario_sha256": sc.file_sha256,
        "capture_sha256": file_digest(cap_path),
    })

    from . import report
    _stage("figures", report.save_spectrogram_figure,
           out / "spectrogram.png", ch1_map, ch2_map, product_map)
    _stage("figures", report.save_decomposition_figure,
           out / "decomposition.png", dec)
    _stage("figures", report.save_estimates_figure,
           out / "estimates.png", track_rows)

    for row in stats_rows:
        sm = row["smoothed"]
        if sm:
            print(f"track {row['track_id']} -> target {row['target_id']}: "
                  f"mu_true={sm['mu_true_radps']:+.4f} "
                  f"mu_est={sm['mu_est_radps']:+.4f} "
                  f"std={sm['std_radps']:.4f} rad/s "
                  f"({row['valid_fraction']:.0%} valid)")
        else:
            print(f"track {row['track_id']}: no overlapping truth")
    print(f"outputs in {out}")
    return 0


def cmd_oracle(args) -> int:
    sc = load_scenario(args.scenario)
    trajs = sc.trajectories()
    states = []
    for tr in trajs:
        k = _stage("oracle", kinematics_at, tr, sc.geometry, args.t)
        states.append(PointState(
            v_radial_mps=float(k.v_radial_mps[0]),
            omega_radps=float(k.omega_radps[0]),
            bearing_rad=float(k.theta_rad[0]),
            amplitude=tr.amplitude,
        ))
    def rows(lines):
        return [{
            "freq_hz": ln.freq_hz,
            "magnitude": abs(ln.amplitude),
            "phase_rad": float(np.angle(ln.amplitude)),
            "kind": ln.kind, "n": ln.n, "k": ln.k,
        } for ln in lines]
    payload = {
        "t_s": args.t,
        "scenario": sc.name,
        "full": rows(full_response_lines(states, sc.geometry, sc.pattern)),
        "decomposed": rows(decomposed_response_lines(states, sc.geometry,
                                                     sc.pattern)),
    }
    text = json.dumps(payload, indent=2, sort_keys=True)
    print(text)
    if args.out:
        path = _out_dir(args) / "oracle.json"
        path.write_text(text + "\n", encoding="utf-8")
    return 0


def _rebin(freq: np.ndarray, mag: np.ndarray, factor: int):
    n = (freq.size // factor) * factor
    f = freq[:n].reshape(-1, factor).mean(axis=1)
    m = mag[:n].reshape(-1, factor).mean(axis=1)
    return f, m


def cmd_fit(args) -> int:
    sc = load_scenario(args.scenario)
    proc = sc.processing
    cap = _stage("read", read_capture, Path(args.capture))
    fs = cap.sample_rate_hz
    hp = _stage("highpass", highpass_capture, cap,
                cutoff_hz=proc.highpass_hz, order=proc.highpass_order)
    stft_cfg = proc.stft_config()
    product = _stage("product", interferometric_response, hp, stft_cfg,
                     zero_pad=1)
    frame_t = product.frame_time_s
    t = args.t if args.t is not None else float(frame_t[frame_t.size // 2])
    idx = int(np.argmin(np.abs(frame_t - t)))

    ch1 = _stage("stft", stft, hp.ch1, fs, stft_cfg, t0_s=cap.t0_s)
    ch2 = _stage("stft", stft, hp.ch2, fs, stft_cfg, t0_s=cap.t0_s)
    dop_mag = 0.5 * (np.abs(ch1.values[idx]) + np.abs(ch2.values[idx]))

    native = product.bin_width_hz
    factor = max(1, int(round(args.bin_hz / native)))
    pf, pm = _rebin(product.freq_hz, product.magnitude()[idx], factor)
    df, dm = _rebin(ch1.freq_hz, dop_mag, factor)

    # native-resolution term: pins omega, and across the intermodulation
    # lines it carries the only evidence of which omega belongs to which
    # v_radial (rebinning erases their sub-bin offsets). Default is the
    # whole axis; --fringe-band-hz narrows it to the band around zero.
    if args.fringe_band_hz is not None:
        fine = product.band(-args.fringe_band_hz, args.fringe_band_hz)
    else:
        fine = product

    bin_hz = factor * native
    lam = sc.geometry.wavelength_m
    v_step = 0.45 * bin_hz * lam  # keeps the coarse search within one bin
    cfg = FitConfig(v_grid=(-args.v_max, args.v_max, v_step),
                    omega_grid=(-args.omega_max, args.omega_max, 0.02))
    result = _stage("fit", run_fit, pf, pm, sc.n_targets, sc.geometry, cfg,
                    doppler_freq_hz=df, doppler_magnitude=dm,
                    fringe_freq_hz=fine.freq_hz,
                    fringe_magnitude=fine.magnitude()[idx])

    payload = {
        "frame_time_s": float(frame_t[idx]),
        "bin_hz": bin_hz,
        "scenario": sc.name,
        **result.to_dict(),
    }
    out = _out_dir(args)
    _write_json(out / "fit.json", payload)
    for p in result.params:
        print(f"v_radial={p[0]:+.4f} m/s  omega={p[1]:+.5f} rad/s")
    print(f"loss {result.loss:.6g} after {len(result.loss_history) - 1} sweeps; "
          f"wrote {out / 'fit.json'}")
    return 0


def cmd_eval(args) -> int:
    sc = load_scenario(args.scenario)
    series = EstimateSeries.from_csv(args.series)
    truth_path = Path(args.truth)
    if not truth_path.exists():
        raise ValidationError(f"ground-truth file not found: {truth_path}")
    trajs = {t.target_id: t for t in load_ground_truth(truth_path)}
    tid = args.target_id if args.target_id is not None else min(trajs)
    if tid not in trajs:
        raise ValidationError(f"no target {tid} in {truth_path}")
    traj = trajs[tid].smoothed(sc.processing.truth_smooth_samples)
    k = _stage("truth", kinematics_at, traj, sc.geometry, series.frame_time_s)
    st = stats(series, series.frame_time_s, k.omega_radps[0])
    payload = {"target_id": tid, "series": str(args.series), **st.to_dict()}
    text = json.dumps(payload, indent=2, sort_keys=True)
    print(text)
    if args.out:
        (_out_dir(args) / "eval.json").write_text(text + "\n", encoding="utf-8")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fringelab",
        description="Two-element interferometric radar simulation and "
                    "angular-velocity estimation.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, scenario_required=True):
        p.add_argument("--scenario", required=scenario_required,
                       help="scenario TOML file")
        p.add_argument("--out", default=None,
                       help="output directory (default $FRINGELAB_OUT or .)")

    p = sub.add_parser("simulate", help="render a scenario to an IQ capture")
    add_common(p)
    p.add_argument("--seed", type=int, default=None,
                   help="override the scenario RNG seed")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("process", help="run the decomposition chain")
    p.add_argument("capture", help="capture binary from simulate")
    add_common(p)
    p.add_argument("--truth", default=None,
                   help="ground-truth CSV (default: truth.csv next to capture)")
    p.add_argument("--mode", choices=("known", "detected"), default=None)
    p.add_argument("--mask-width-hz", type=float, default=None)
    p.add_argument("--floor-db", type=float, default=None)
    p.add_argument("--smooth-frames", type=int, default=None)
    p.add_argument("--zero-pad", type=int, default=None)
    p.set_defaults(func=cmd_process)

    p = sub.add_parser("oracle", help="closed-form line lists at time t")
    add_common(p)
    p.add_argument("--t", type=float, required=True, help="scene time (s)")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("fit", help="model-based parameter recovery")
    p.add_argument("capture", help="capture binary from simulate")
    add_common(p)
    p.add_argument("--t", type=float, default=None,
                   help="frame time to fit (default: capture midpoint)")
    p.add_argument("--v-max", type=float, default=0.6,
                   help="radial-velocity search half range (m/s)")
    p.add_argument("--omega-max", type=float, default=0.1,
                   help="angular-velocity search half range (rad/s)")
    p.add_argument("--bin-hz", type=float, default=7.5,
                   help="comparison bin width (native bins are grouped)")
    p.add_argument("--fringe-band-hz", type=float, default=None,
                   help="restrict the native-resolution term to this half "
                        "width around zero (default: full axis)")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("eval", help="score an estimate series against truth")
    p.add_argument("series", help="estimate CSV from process")
    add_common(p)
    p.add_argument("--truth", required=True, help="ground-truth CSV")
    p.add_argument("--target-id", type=int, default=None)
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except PipelineError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
