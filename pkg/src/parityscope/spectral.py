"""Toggle transform, one-sided periodograms and spectrum averaging.

The periodogram is taken of the raw toggle sequence: no window, no
detrending. Densities follow ``PSD_k = dt**2 / T * |X_k|**2`` with interior
bins doubled, so ``sum(psd) * df`` equals the mean power of the sequence.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.ndimage import gaussian_filter1d, uniform_filter1d

from .paritysim import ParityTrace


@dataclass
class ToggleTrace:
    """Toggle indicators ``d_i = |m_{i+1} - m_i|``."""

    d: np.ndarray
    dt: float

    def __len__(self):
        return len(self.d)


@dataclass
class Spectrum:
    """One-sided power spectral density on a uniform grid starting at 0 Hz."""

    freqs: np.ndarray
    psd: np.ndarray
    duration: float
    n_averaged: int = 1

    def __post_init__(self):
        self.freqs = np.asarray(self.freqs, dtype=float)
        self.psd = np.asarray(self.psd, dtype=float)
        if self.freqs.shape != self.psd.shape or self.freqs.ndim != 1:
            raise ValueError("freqs and psd must be 1-D arrays of equal length")

    @property
    def df(self) -> float:
        return float(self.freqs[1] - self.freqs[0])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["freq_hz", "psd"])
            for f, p in zip(self.freqs.tolist(), self.psd.tolist()):
                w.writerow([repr(f), repr(p)])

    def to_json(self) -> dict:
        return {
            "duration_s": self.duration,
            "n_averaged": self.n_averaged,
            "df_hz": self.df,
            "freq_hz": self.freqs.tolist(),
            "psd": self.psd.tolist(),
        }

    @classmethod
    def from_json(cls, d: dict) -> "Spectrum":
        return cls(np.asarray(d["freq_hz"]), np.asarray(d["psd"]), d["duration_s"], d.get("n_averaged", 1))

    @classmethod
    def read_csv(cls, path, duration: float | None = None) -> "Spectrum":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        freqs, psd = data[:, 0], data[:, 1]
        if duration is None:
            duration = 1.0 / (freqs[1] - freqs[0])
        return cls(freqs, psd, duration)


def toggle_transform(trace: ParityTrace | Sequence[int], dt: float | None = None) -> ToggleTrace:
    """Absolute first difference of assigned states."""
    if isinstance(trace, ParityTrace):
        m, dt = trace.m, trace.dt
    else:
        m = np.asarray(trace, dtype=np.uint8)
        if dt is None:
            dt = 1.0
    if len(m) < 2:
        raise ValueError("toggle transform needs at least two shots")
    m = m.astype(np.int8, copy=False)
    d = np.abs(np.diff(m)).astype(np.uint8)
    return ToggleTrace(d=d, dt=dt)


def periodogram(d: ToggleTrace | np.ndarray, dt: float | None = None) -> Spectrum:
    """One-sided, duration-normalized periodogram of a toggle sequence."""
    if isinstance(d, ToggleTrace):
        x, dt = np.asarray(d.d, dtype=float), d.dt
    else:
        x = np.asarray(d, dtype=float)
        if dt is None:
            raise ValueError("dt is required for bare arrays")
    n = len(x)
    if n < 64:
        raise ValueError(f"periodogram needs at least 64 samples, got {n}")
    duration = n * dt
    spec = np.fft.rfft(x)
    psd = (dt * dt / duration) * (spec.real ** 2 + spec.imag ** 2)
    if n % 2 == 0:
        psd[1:-1] *= 2.0
    else:
        psd[1:] *= 2.0
    freqs = np.fft.rfftfreq(n, dt)
    return Spectrum(freqs=freqs, psd=psd, duration=duration)


def aggregate_spectra(spectra: Sequence[Spectrum]) -> Spectrum:
    """Average spectra on the finest input grid, truncated at the lowest Nyquist.

    Each input is linearly interpolated onto the common grid before the mean.
    """
    spectra = list(spectra)
    if not spectra:
        raise ValueError("no spectra to aggregate")
    if len(spectra) == 1:
        s = spectra[0]
        return Spectrum(s.freqs.copy(), s.psd.copy(), s.duration, s.n_averaged)
    df = min(s.df for s in spectra)
    f_max = min(s.freqs[-1] for s in spectra)
    n_bins = int(np.floor(f_max / df * (1 + 1e-12))) + 1
    grid = np.arange(n_bins) * df
    # fixed summation order keeps the result independent of input order
    order = sorted(range(len(spectra)), key=lambda i: (spectra[i].df, spectra[i].duration,
                                                       spectra[i].psd.sum()))
    acc = np.zeros(n_bins)
    for i in order:
        s = spectra[i]
        if len(s.freqs) == n_bins and np.allclose(s.freqs, grid, rtol=0, atol=df * 1e-9):
            acc += s.psd
        else:
            acc += np.interp(grid, s.freqs, s.psd)
    return Spectrum(freqs=grid, psd=acc / len(spectra),
                    duration=float(np.mean([s.duration for s in spectra])),
                    n_averaged=len(spectra))


def averaged_spectrum(traces: Sequence[ParityTrace]) -> Spectrum:
    """Toggle, periodogram and average a batch of traces."""
    return aggregate_spectra([periodogram(toggle_transform(t)) for t in traces])


def smooth_for_display(d: ToggleTrace | np.ndarray, mode: str = "gaussian",
                       sigma: float = 10.0, width: int = 1) -> np.ndarray:
    """Smoothed toggle sequence for plotting only.

    ``mode`` is ``"gaussian"`` (kernel width ``sigma`` samples) or
    ``"moving_average"`` (``width`` samples).
    """
    x = np.asarray(d.d if isinstance(d, ToggleTrace) else d, dtype=float)
    if mode == "gaussian":
        if not sigma > 0:
            raise ValueError("sigma must be positive")
        return gaussian_filter1d(x, sigma, mode="nearest")
    if mode == "moving_average":
        if int(width) != width or width < 1:
            raise ValueError("width must be an integer >= 1")
        if width == 1:
            return x.copy()
        return uniform_filter1d(x, int(width), mode="nearest")
    raise ValueError(f"unknown smoothing mode {mode!r}")


def log_binned(spectrum: Spectrum, bins_per_decade: int = 20, f_min: float | None = None):
    """Mean PSD in log-spaced frequency bands (DC excluded); for plots and initial guesses."""
    f = spectrum.freqs[1:]
    p = spectrum.psd[1:]
    lo = f[0] if f_min is None else max(f_min, f[0])
    edges = np.logspace(np.log10(lo), np.log10(f[-1]), int(np.ceil(np.log10(f[-1] / lo) * bins_per_decade)) + 1)
    edges[0], edges[-1] = lo, f[-1]
    idx = np.searchsorted(edges, f, side="right") - 1
    idx[idx == len(edges) - 1] = len(edges) - 2
    keep = idx >= 0
    counts = np.bincount(idx[keep], minlength=len(edges) - 1)
    fsum = np.bincount(idx[keep], weights=f[keep], minlength=len(edges) - 1)
    psum = np.bincount(idx[keep], weights=p[keep], minlength=len(edges) - 1)
    ok = counts > 0
    return fsum[ok] / counts[ok], psum[ok] / counts[ok], counts[ok]
