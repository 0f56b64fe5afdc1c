"""Quasiparticle density under black-body illumination from a resistive radiator.

Chain of relations, all in SI units:

* radiator temperature from Joule power and a Wiedemann-Franz conductance
  ``G = G~ T``: ``T = sqrt(P / G~)`` when the bath is much colder,
* emitted power ``sigma A T**4`` (Stefan-Boltzmann),
* generation ``g = eps sigma A (P / G~)**2``,
* steady state of ``dx/dt = g - s x - r x**2``,
* tunneling rate ``k_tunnel * x`` plus an optional base rate.

Densities are dimensionless; ``k_tunnel`` carries the conversion to Hz.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

STEFAN_BOLTZMANN = 5.670374419e-8  # W m^-2 K^-4


@dataclass(frozen=True)
class QpModelParams:
    s: float
    r: float
    eps: float = 1.0
    area: float = 1.2566e-5
    gtilde: float = 1.0
    sigma_sb: float = STEFAN_BOLTZMANN
    t_bath: float = 0.0

    def __post_init__(self):
        if self.s < 0 or self.r < 0 or (self.s == 0 and self.r == 0):
            raise ValueError("s and r must be >= 0 and not both zero")
        if not 0.0 <= self.eps <= 1.0:
            raise ValueError("eps must lie in [0, 1]")
        if not self.area > 0 or not self.gtilde > 0:
            raise ValueError("area and gtilde must be positive")
        if self.t_bath < 0:
            raise ValueError("t_bath must be >= 0")


@dataclass(frozen=True)
class RadiatorParams:
    """Resistive wire radiator; SI units."""

    length: float = 0.02
    diameter: float = 0.2e-3
    resistance: float = 2.0

    def __post_init__(self):
        if min(self.length, self.diameter, self.resistance) <= 0:
            raise ValueError("radiator dimensions and resistance must be positive")

    @property
    def area(self) -> float:
        """Lateral surface ``pi d l``."""
        return math.pi * self.diameter * self.length

    def power(self, current):
        """Joule power ``I**2 R`` for a current in A."""
        return np.asarray(current, dtype=float) ** 2 * self.resistance


def radiator_temperature(power_w, gtilde: float, t_bath: float = 0.0, exact: bool = False):
    """Radiator temperature in K.

    By default the cold-bath limit ``sqrt(P / G~)``. With ``exact`` the full
    balance ``P = G~ T (T - T_b)`` is solved instead.
    """
    p = np.asarray(power_w, dtype=float)
    if np.any(p < 0):
        raise ValueError("power must be non-negative")
    if not gtilde > 0:
        raise ValueError("gtilde must be positive")
    if exact:
        t = 0.5 * (t_bath + np.sqrt(t_bath * t_bath + 4.0 * p / gtilde))
    else:
        t = np.sqrt(p / gtilde)
    return float(t) if np.ndim(t) == 0 else t


def calibrate_gtilde(power_w: float, temperature: float) -> float:
    """Conductance coefficient that puts the radiator at ``temperature`` for ``power_w``."""
    if not power_w > 0 or not temperature > 0:
        raise ValueError("power and temperature must be positive")
    return power_w / temperature ** 2


def radiated_power(area: float, temperature, sigma_sb: float = STEFAN_BOLTZMANN):
    """Stefan-Boltzmann emission ``sigma A T**4`` in W."""
    t = np.asarray(temperature, dtype=float)
    if area < 0 or np.any(t < 0):
        raise ValueError("area and temperature must be non-negative")
    out = sigma_sb * area * t ** 4
    return float(out) if np.ndim(out) == 0 else out


def generation_rate(power_w, params: QpModelParams):
    """Pair-breaking generation ``eps sigma A (P / G~)**2``."""
    p = np.asarray(power_w, dtype=float)
    if np.any(p < 0):
        raise ValueError("power must be non-negative")
    g = params.eps * params.sigma_sb * params.area * (p / params.gtilde) ** 2
    return float(g) if np.ndim(g) == 0 else g


def steady_state_density(g, s: float, r: float):
    """Non-negative root of ``g - s x - r x**2 = 0``.

    Written as ``2 g / (s + sqrt(s**2 + 4 r g))`` so that neither limit
    loses precision to cancellation.
    """
    g_arr = np.asarray(g, dtype=float)
    if np.any(g_arr < 0):
        raise ValueError("generation rate must be non-negative")
    if s < 0 or r < 0:
        raise ValueError("s and r must be non-negative")
    if s == 0 and r == 0:
        if np.any(g_arr > 0):
            raise ValueError("no steady state without trapping or recombination")
        return 0.0 if np.ndim(g_arr) == 0 else np.zeros_like(g_arr)
    den = s + np.sqrt(s * s + 4.0 * r * g_arr)
    with np.errstate(invalid="ignore", divide="ignore"):
        x = np.where(g_arr > 0, 2.0 * g_arr / den, 0.0)
    return float(x) if np.ndim(x) == 0 else x


def predicted_rate_curve(powers: Sequence[float], params: QpModelParams, k_tunnel: float,
                         base_rate: float = 0.0) -> np.ndarray:
    """Tunneling rate (Hz) against radiator power (W)."""
    p = np.asarray(powers, dtype=float)
    if np.any(p < 0):
        raise ValueError("powers must be non-negative")
    x = steady_state_density(generation_rate(p, params), params.s, params.r)
    return base_rate + k_tunnel * np.asarray(x, dtype=float)


def log_log_slope(powers, rates, base_rate: float = 0.0) -> float:
    """Least-squares slope of ``log(rate - base)`` against ``log(power)``."""
    p = np.asarray(powers, dtype=float)
    y = np.asarray(rates, dtype=float) - base_rate
    return float(np.polyfit(np.log(p), np.log(y), 1)[0])
