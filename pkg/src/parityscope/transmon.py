"""Offset-charge-sensitive transmon spectra.

The Cooper-pair-box Hamiltonian is tridiagonal in the charge basis,

    H = sum_n 4 E_C (n - n_g')^2 |n><n| - E_J/2 sum_n (|n+1><n| + h.c.),

with ``n_g' = n_g`` for even and ``n_g + 1/2`` for odd charge parity.
Energies are in GHz (E/h).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigvalsh_tridiagonal

from .errors import TruncationError

CONVERGENCE_GHZ = 1e-6  # 1 kHz
_MAX_DIM = 1025


@dataclass(frozen=True)
class TransmonParams:
    ej: float
    ec: float
    dim: int = 31

    def __post_init__(self):
        # ej == 0 is the bare charging-energy limit
        if not self.ej >= 0 or not self.ec > 0:
            raise ValueError("ej must be >= 0 and ec > 0")
        if int(self.dim) != self.dim or self.dim < 5 or self.dim % 2 == 0:
            raise ValueError(f"dim must be an odd integer >= 5, got {self.dim}")


@dataclass
class ParitySpectrum:
    ng_grid: np.ndarray
    f_even: np.ndarray
    f_odd: np.ndarray
    dispersion: float  # MHz

    @property
    def delta_f(self) -> np.ndarray:
        """|f_even - f_odd| in MHz."""
        return np.abs(self.f_even - self.f_odd) * 1e3

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["ng", "f_even_ghz", "f_odd_ghz", "delta_f_mhz"])
            for row in zip(self.ng_grid.tolist(), self.f_even.tolist(), self.f_odd.tolist(),
                           self.delta_f.tolist()):
                w.writerow([repr(v) for v in row])


def _levels(ej, ec, ng, dim, n_levels):
    half = dim // 2
    n = np.arange(-half, half + 1, dtype=float)
    diag = 4.0 * ec * (n - ng) ** 2
    off = np.full(dim - 1, -ej / 2.0)
    return eigvalsh_tridiagonal(diag, off, select="i", select_range=(0, n_levels - 1))


def _effective_ng(ng, parity):
    if parity not in ("even", "odd"):
        raise ValueError(f"parity must be 'even' or 'odd', got {parity!r}")
    ng = float(ng)
    if not np.isfinite(ng):
        raise ValueError("ng must be finite")
    shifted = ng + (0.5 if parity == "odd" else 0.0)
    # fold into [-1/2, 1/2): the spectrum is 1-periodic and the truncated basis is symmetric about 0
    return shifted - np.floor(shifted + 0.5)


def diagonalize_cpb(params: TransmonParams, ng: float, parity: str = "even",
                    n_levels: int = 3, auto_converge: bool = True) -> np.ndarray:
    """Lowest ``n_levels`` eigenenergies (GHz), ascending.

    With ``auto_converge`` the basis grows until the lowest three levels move
    by less than 1 kHz when ``dim`` increases by 4; otherwise a
    :class:`TruncationError` is raised if that check fails at ``params.dim``.
    """
    if n_levels < 3:
        n_levels = 3
    ng_eff = _effective_ng(ng, parity)
    dim = params.dim
    while True:
        if dim < n_levels + 2:
            dim = n_levels + 2 + (n_levels + 1) % 2
        levels = _levels(params.ej, params.ec, ng_eff, dim, n_levels)
        bigger = _levels(params.ej, params.ec, ng_eff, dim + 4, n_levels)
        if np.max(np.abs(levels[:3] - bigger[:3])) < CONVERGENCE_GHZ:
            return levels
        if not auto_converge:
            raise TruncationError(f"charge basis dim={dim} not converged to 1 kHz")
        dim = 2 * dim + 1
        if dim > _MAX_DIM:
            raise TruncationError("charge basis did not converge below the size limit")


def qubit_frequency(params: TransmonParams, ng: float, parity: str = "even") -> float:
    e = diagonalize_cpb(params, ng, parity)
    return float(e[1] - e[0])


def parity_frequencies(params: TransmonParams, n_grid_points: int = 256) -> ParitySpectrum:
    """Even and odd qubit frequencies over one period of offset charge."""
    if n_grid_points < 32:
        raise ValueError("n_grid_points must be >= 32")
    ng = np.arange(n_grid_points) / n_grid_points
    f_even = np.array([qubit_frequency(params, x, "even") for x in ng])
    f_odd = np.array([qubit_frequency(params, x, "odd") for x in ng])
    # f_odd(0) = f_even(1/2), so both charge-dispersion extrema are on the grid
    both = np.concatenate([f_even, f_odd])
    dispersion = float((both.max() - both.min()) * 1e3)
    return ParitySpectrum(ng_grid=ng, f_even=f_even, f_odd=f_odd, dispersion=dispersion)


def anharmonicity(params: TransmonParams, ng: float = 0.25) -> float:
    """``f12 - f01`` in GHz at offset charge ``ng`` (even parity)."""
    e = diagonalize_cpb(params, ng)
    return float((e[2] - e[1]) - (e[1] - e[0]))


def fraction_delta_f_below(spectrum: ParitySpectrum, threshold: float) -> float:
    """Fraction of offset charges with parity splitting ``<= threshold`` MHz.

    Uses trapezoidal accumulation of the indicator over the periodic grid,
    with linear interpolation of the crossing points inside each cell.
    """
    if threshold < 0:
        raise ValueError("threshold must be non-negative")
    return fraction_below_on_grid(spectrum.ng_grid, spectrum.delta_f, threshold)


def fraction_below_on_grid(ng, values, threshold: float) -> float:
    """Measure of ``{n_g : values(n_g) <= threshold}`` for samples on a 1-periodic grid."""
    ng = np.asarray(ng, dtype=float)
    values = np.asarray(values, dtype=float)
    x = np.append(ng, ng[0] + 1.0)
    y = np.append(values, values[0])
    span = x[-1] - x[0]
    total = 0.0
    for x0, x1, y0, y1 in zip(x[:-1], x[1:], y[:-1], y[1:]):
        below0, below1 = y0 <= threshold, y1 <= threshold
        width = x1 - x0
        if below0 and below1:
            total += width
        elif below0 != below1:
            # linear crossing within the cell
            frac = (threshold - y0) / (y1 - y0) if y1 != y0 else 0.5
            frac = min(max(frac, 0.0), 1.0)
            total += width * (frac if below0 else 1.0 - frac)
    return float(total / span)
