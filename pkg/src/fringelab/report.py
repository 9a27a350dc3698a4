"""Figure rendering for the processing pipeline.

All figures are rendered headless to PNG with fixed size, dpi, and
metadata so that repeated runs produce identical bytes.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_SAVE_KW = {"dpi": 110, "metadata": {"Software": "fringelab"}}


def _tf_panel(ax, tfmap, title: str, band_hz=None, floor_db: float = -60.0):
    m = tfmap
    if band_hz is not None:
        m = m.band(*band_hz)
    db = m.magnitude_db()
    top = float(db.max()) if db.size else 0.0
    ax.imshow(db.T, origin="lower", aspect="auto",
              vmin=top + floor_db, vmax=top, cmap="magma",
              extent=(m.frame_time_s[0], m.frame_time_s[-1],
                      m.freq_hz[0], m.freq_hz[-1]),
              interpolation="nearest")
    ax.set_title(title, fontsize=10)
    ax.set_xlabel("time (s)")
    ax.set_ylabel("frequency (Hz)")


def save_spectrogram_figure(path, ch1_map, ch2_map, product_map,
                            doppler_band_hz=None, fringe_band_hz=(-40.0, 40.0)):
    """Channel spectrograms beside the conjugate-product map."""
    fig, axes = plt.subplots(1, 3, figsize=(13, 4), constrained_layout=True)
    _tf_panel(axes[0], ch1_map, "channel 1", band_hz=doppler_band_hz)
    _tf_panel(axes[1], ch2_map, "channel 2", band_hz=doppler_band_hz)
    _tf_panel(axes[2], product_map, "conjugate product", band_hz=fringe_band_hz)
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def save_decomposition_figure(path, decomposed, band_hz=(-40.0, 40.0)):
    """One panel per reconstructed per-target response."""
    tracks = decomposed.tracks
    n = max(len(tracks), 1)
    fig, axes = plt.subplots(1, n, figsize=(4.5 * n, 4),
                             constrained_layout=True, squeeze=False)
    if not tracks:
        axes[0][0].set_axis_off()
        axes[0][0].text(0.5, 0.5, "no tracks", ha="center", va="center")
    for ax, tr in zip(axes[0], tracks):
        _tf_panel(ax, decomposed.track_map(tr.track_id),
                  f"track {tr.track_id}", band_hz=band_hz)
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def save_estimates_figure(path, rows):
    """Angular-velocity tracks against truth.

    rows: list of dicts with keys track_id, raw, smoothed (EstimateSeries)
    and optionally truth_omega_radps aligned to the frame axis.
    """
    fig, ax = plt.subplots(figsize=(8, 4.5), constrained_layout=True)
    colors = plt.rcParams["axes.prop_cycle"].by_key()["color"]
    for i, row in enumerate(rows):
        c = colors[i % len(colors)]
        raw = row["raw"]
        sm = row["smoothed"]
        ax.plot(raw.frame_time_s, raw.omega_radps, color=c, alpha=0.25, lw=0.8)
        ax.plot(sm.frame_time_s, sm.omega_radps, color=c, lw=1.8,
                label=f"track {row['track_id']}")
        truth = row.get("truth_omega_radps")
        if truth is not None:
            ax.plot(raw.frame_time_s, truth, color=c, ls="--", lw=1.0)
    if rows:
        ax.legend(loc="best", fontsize=9)
    ax.set_xlabel("time (s)")
    ax.set_ylabel("angular velocity (rad/s)")
    ax.grid(True, alpha=0.3)
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
