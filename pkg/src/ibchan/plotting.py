"""Figure rendering for estimates, models, sweeps, and field maps.

Everything renders through the Agg backend straight to files; nothing
here opens a window.  Figures are presentation only: the delimited data
files written next to them carry the exact numbers.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "plot_cir",
    "plot_pdp",
    "plot_gain",
    "plot_field_maps",
]

_DB_FLOOR = -140.0


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_cir(estimate, path, max_taps: int = 256) -> None:
    """Stem plot of the leading impulse-response taps.

    Args:
        estimate: ChannelEstimate.
        path: output image file.
        max_taps: only the leading portion is drawn; estimates are
            period-long and the tail is visual noise.
    """
    n = min(max_taps, len(estimate.taps))
    delays_us = estimate.delay_axis[:n] * 1e6
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.stem(delays_us, estimate.taps[:n], basefmt="k-")
    ax.set_xlabel("delay (us)")
    ax.set_ylabel("tap amplitude (V/V)")
    ax.set_title(f"impulse response, {estimate.frames_averaged} frame(s) averaged")
    ax.grid(True, alpha=0.3)
    _finish(fig, path)


def plot_pdp(pdp, path, max_taps: int = 256) -> None:
    """Power delay profile in dB relative to the strongest tap."""
    n = min(max_taps, len(pdp.power))
    ref = np.max(pdp.power)
    with np.errstate(divide="ignore"):
        level = 10.0 * np.log10(pdp.power[:n] / ref) if ref > 0 \
            else np.full(n, _DB_FLOOR)
    level = np.maximum(level, _DB_FLOOR)
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(pdp.delay_axis[:n] * 1e6, level, drawstyle="steps-mid")
    ax.set_xlabel("delay (us)")
    ax.set_ylabel("relative power (dB)")
    ax.set_title("power delay profile")
    ax.grid(True, alpha=0.3)
    _finish(fig, path)


def plot_gain(path, curves, points=None, title="channel gain") -> None:
    """Gain magnitude vs frequency on a log axis.

    Args:
        path: output image file.
        curves: list of (label, freqs_hz, gain_db) line traces.
        points: optional (freqs_hz, gain_db) scatter of discrete samples.
        title: axes title.
    """
    fig, ax = plt.subplots(figsize=(7, 4))
    for label, freqs, gain_db in curves:
        freqs = np.asarray(freqs, dtype=np.float64)
        gain_db = np.maximum(np.asarray(gain_db, dtype=np.float64), _DB_FLOOR)
        keep = freqs > 0
        ax.semilogx(freqs[keep], gain_db[keep], label=label)
    if points is not None:
        pf, pg = points
        ax.semilogx(pf, pg, "o", color="k", label="samples", zorder=5)
    ax.set_xlabel("frequency (Hz)")
    ax.set_ylabel("gain (dB)")
    ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    if len(curves) > 1 or points is not None:
        ax.legend()
    _finish(fig, path)


def plot_field_maps(solution, potential_path, efield_path) -> None:
    """Potential and field-magnitude maps of a 2D solve.

    Args:
        solution: FieldSolution.
        potential_path: image file for Re(V).
        efield_path: image file for |E| (log color scale).
    """
    g = solution.grid
    x_mm = g.x_centers * 1e3
    y_mm = g.y_centers * 1e3
    for data, label, path, log in (
            (solution.potential.real, "Re V (V)", potential_path, False),
            (solution.e_field, "|E| (V/m)", efield_path, True)):
        fig, ax = plt.subplots(figsize=(8, 3))
        shown = np.log10(np.maximum(data, 1e-30)) if log else data
        mesh = ax.pcolormesh(x_mm, y_mm, shown, shading="nearest",
                             cmap="RdBu_r" if not log else "viridis")
        fig.colorbar(mesh, ax=ax,
                     label=f"log10 {label}" if log else label)
        ax.set_xlabel("x (mm)")
        ax.set_ylabel("depth (mm)")
        ax.set_title(f"{solution.frequency:g} Hz")
        ax.invert_yaxis()
        _finish(fig, path)
