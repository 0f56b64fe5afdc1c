"""Static SVG figures: parity trace, PSD with fit, rate vs power, rate vs time.

Figures are built on :class:`matplotlib.figure.Figure` directly so no global
pyplot state is touched. Inputs are copied before drawing.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Mapping, Optional, Sequence

import matplotlib
import numpy as np
from matplotlib.figure import Figure

from .fitkit import LorentzianFit, PowerLawFit
from .paritysim import ParityTrace
from .spectral import Spectrum, log_binned, smooth_for_display, toggle_transform

logger = logging.getLogger(__name__)

_SVG_METADATA = {"Date": None, "Creator": None}


def _save(fig: Figure, path) -> Path:
    path = Path(path)
    with matplotlib.rc_context({"svg.hashsalt": "parityscope", "svg.fonttype": "none"}):
        fig.savefig(path, format="svg", metadata=_SVG_METADATA)
    logger.info("wrote %s", path)
    return path


def plot_trace(trace: ParityTrace, path, sigma: float = 10.0, max_points: int = 20_000) -> Path:
    """Smoothed toggle sequence over time, shaded where the parity is odd.

    Shading uses the hidden parity when the trace carries it.
    """
    if len(trace) < 2:
        raise ValueError("trace too short to plot")
    n = min(len(trace), max_points + 1)
    m = np.array(trace.m[:n], dtype=float)
    toggles = toggle_transform(m, trace.dt)
    smooth = smooth_for_display(toggles, sigma=sigma)
    t_ms = np.arange(len(smooth)) * trace.dt * 1e3
    parity = np.array(trace.true_parity[: len(smooth)] if trace.true_parity is not None else [])

    fig = Figure(figsize=(7, 3))
    ax = fig.add_subplot()
    if parity.size:
        ax.fill_between(t_ms, 0, 1, where=parity.astype(bool), step="post", color="tab:orange",
                        alpha=0.2, lw=0, label="odd parity")
    ax.plot(t_ms, smooth, color="tab:blue", lw=0.8, label="smoothed toggles")
    ax.set_xlabel("time (ms)")
    ax.set_ylabel("toggle fraction")
    ax.set_ylim(-0.05, 1.05)
    ax.legend(loc="upper right", fontsize="small")
    fig.tight_layout()
    return _save(fig, path)


def plot_psd(spectrum: Spectrum, fit: Optional[LorentzianFit], path, bins_per_decade: int = 20) -> Path:
    """Log-log PSD, log-binned for legibility, with the fitted Lorentzian sum.

    A dashed ``1/f**2`` guide is drawn through the fit above its corner.
    """
    if len(spectrum.freqs) < 3:
        raise ValueError("spectrum is empty")
    fb, pb, _ = log_binned(spectrum, bins_per_decade)
    fig = Figure(figsize=(5, 4))
    ax = fig.add_subplot()
    ax.loglog(fb, pb, ".", ms=3, color="0.4", label="data")
    if fit is not None:
        f = np.logspace(np.log10(fb[0]), np.log10(fb[-1]), 400)
        ax.loglog(f, fit.evaluate(f), color="tab:red", lw=1.5,
                  label=f"fit, rate = {fit.rate:.4g} Hz")
        corner = fit.rate / np.pi
        hi = f[f > 3 * corner]
        if hi.size > 1:
            a = fit.evaluate(hi[:1])[0] * hi[0] ** 2
            ax.loglog(hi, a / hi ** 2, "--", color="tab:red", lw=0.8, label="1/f^2")
    ax.set_xlabel("frequency (Hz)")
    ax.set_ylabel("PSD (1/Hz)")
    ax.legend(fontsize="small")
    fig.tight_layout()
    return _save(fig, path)


def _series_plot(series, path, xlabel, xscale, fit_key, x_transform=lambda x: x):
    if not series or all(len(s.get("x", ())) == 0 for s in series.values()):
        raise ValueError("no data to plot")
    fig = Figure(figsize=(5, 4))
    ax = fig.add_subplot()
    colors = matplotlib.rcParams["axes.prop_cycle"].by_key()["color"]
    for i, (label, s) in enumerate(series.items()):
        x = np.array(s["x"], dtype=float)
        y = np.array(s["y"], dtype=float)
        if x.size == 0:
            continue
        c = colors[i % len(colors)]
        yerr = np.array(s["yerr"], dtype=float) if s.get("yerr") is not None else None
        ax.errorbar(x_transform(x), y, yerr=yerr, fmt="o", ms=4, color=c, label=label)
        fit: Optional[PowerLawFit] = s.get(fit_key)
        if fit is not None:
            lo = x[x > 0].min() if xscale == "log" else x.min()
            xf = (np.logspace(np.log10(lo), np.log10(x.max()), 200) if xscale == "log"
                  else np.linspace(x.min(), x.max(), 200))
            ax.plot(x_transform(xf), fit.evaluate(xf), "--", color=c)
    ax.set_xscale(xscale)
    ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("tunneling rate (Hz)")
    ax.legend(fontsize="small")
    fig.tight_layout()
    return _save(fig, path)


def plot_rate_vs_power(series: Mapping[str, dict], path) -> Path:
    """One series per material: ``{"x": powers_W, "y": rates, "yerr": ..., "fit": PowerLawFit}``."""
    return _series_plot(series, path, "radiator power (nW)", "linear", "fit",
                        x_transform=lambda x: x * 1e9)


def plot_rate_vs_time(series: Mapping[str, dict], path) -> Path:
    """One series per material: ``{"x": days, "y": rates, "yerr": ..., "fit": PowerLawFit}``."""
    return _series_plot(series, path, "time since cooldown (days)", "log", "fit")


def records_series(records: Sequence, x_attr: str = "t_days") -> dict:
    """Group campaign records into plot series keyed by material."""
    out: dict = {}
    for r in records:
        s = out.setdefault(r.material, {"x": [], "y": [], "yerr": []})
        s["x"].append(getattr(r, x_attr))
        s["y"].append(r.gamma0)
        s["yerr"].append(r.gamma0_err)
    return out
