"""Least-squares kernel and the model fits used by the analysis chain.

:func:`nls_fit` is a bounded Levenberg-Marquardt minimizer. The model fits
built on it are

* :func:`fit_lorentzian_sum`: Lorentzian mixture plus white floor on a PSD,
  fitted to ``log(psd)``; the lowest corner is the parity switching rate,
* :func:`fit_two_tone_ramsey`: decaying two-tone cosine,
* :func:`fit_power_law`: ``base + amplitude * P**n`` with multiplicative noise,
* :func:`fit_time_decay`: ``rate_1day * t**(-p)``,
* :func:`linear_regression`: ordinary least squares with a slope flag.

Lorentzians are written ``A * G / (G**2 + (pi f)**2)``; with that form the
corner ``G`` of a symmetric telegraph signal equals its flip rate.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import nnls
from scipy.signal import find_peaks

from .errors import ConvergenceError, DegenerateToneError, SingularJacobianError
from .spectral import Spectrum, log_binned

logger = logging.getLogger(__name__)


# -- Levenberg-Marquardt --------------------------------------------------------

@dataclass
class NlsResult:
    params: np.ndarray
    covariance: np.ndarray
    residual_norm: float
    n_iter: int
    converged: bool
    message: str
    n_points: int = 0

    @property
    def uncertainties(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))


def _numeric_jacobian(model, x, p, f0, lb, ub):
    jac = np.empty((len(f0), len(p)))
    for j in range(len(p)):
        h = 1e-7 * max(abs(p[j]), 1e-3)
        step = p.copy()
        # stay inside the box
        if step[j] + h > ub[j]:
            h = -h
        step[j] += h
        jac[:, j] = (model(x, step) - f0) / h
    return jac


def nls_fit(model: Callable, x, y, p0, weights=None, bounds=None, jac: Optional[Callable] = None,
            max_iter: int = 200, xtol: float = 1e-10, ftol: float = 1e-12,
            raise_on_failure: bool = True) -> NlsResult:
    """Minimize ``sum(w * (y - model(x, p))**2)`` within box ``bounds``.

    Parameters
    ----------
    model : callable
        ``model(x, p) -> array`` shaped like ``y``.
    x, y : array_like
        Data. ``len(y)`` must be at least the number of parameters.
    p0 : array_like
        Starting point; must lie inside ``bounds``.
    weights : array_like, optional
        Per-point weights (inverse variances). Defaults to ones.
    bounds : (lower, upper), optional
        Sequences of per-parameter limits; ``+-inf`` for none.
    jac : callable, optional
        ``jac(x, p) -> (len(y), len(p))`` derivative of the model. A forward
        difference is used when omitted.

    Returns
    -------
    NlsResult
        Covariance is ``s**2 (J^T W J)^-1`` with ``s**2`` the reduced chi-square.

    Raises
    ------
    ConvergenceError
        No convergence within ``max_iter`` iterations.
    SingularJacobianError
        The Jacobian at the optimum is rank deficient.
    """
    y = np.asarray(y, dtype=float)
    p = np.array(p0, dtype=float)
    n_par = len(p)
    if len(y) < n_par:
        raise ValueError(f"need at least {n_par} points, got {len(y)}")
    w = np.ones_like(y) if weights is None else np.asarray(weights, dtype=float)
    sw = np.sqrt(w)
    if bounds is None:
        lb = np.full(n_par, -np.inf)
        ub = np.full(n_par, np.inf)
    else:
        lb = np.asarray(bounds[0], dtype=float)
        ub = np.asarray(bounds[1], dtype=float)
    if np.any(p < lb) or np.any(p > ub):
        raise ValueError("initial parameters outside bounds")

    def evaluate(params):
        f = np.asarray(model(x, params), dtype=float)
        r = sw * (y - f)
        return f, r, 0.5 * float(r @ r)

    f, r, cost = evaluate(p)
    if not np.isfinite(cost):
        raise ValueError("model is not finite at the initial parameters")

    def jacobian(params, fvals):
        jm = jac(x, params) if jac is not None else _numeric_jacobian(model, x, params, fvals, lb, ub)
        return sw[:, None] * np.asarray(jm, dtype=float)

    J = jacobian(p, f)
    A = J.T @ J
    g = J.T @ r
    lam = 1e-3
    nu = 2.0
    converged = cost == 0.0
    message = "exact fit" if converged else ""
    it = 0
    while not converged and it < max_iter:
        it += 1
        # parameters pinned at a bound with the gradient pointing outward stay fixed
        free = ~(((p <= lb) & (g < 0)) | ((p >= ub) & (g > 0)))
        if not np.any(free):
            converged, message = True, "all parameters at bounds"
            break
        scale = np.maximum(np.diag(A)[free], 1e-300)
        delta = np.zeros(n_par)
        try:
            delta[free] = np.linalg.solve(A[np.ix_(free, free)] + lam * np.diag(scale), g[free])
        except np.linalg.LinAlgError:
            lam *= nu
            nu *= 2
            continue
        p_new = np.clip(p + delta, lb, ub)
        delta = p_new - p
        f_new, r_new, cost_new = evaluate(p_new)
        predicted = float(delta @ g - 0.5 * delta @ A @ delta)
        actual = cost - cost_new
        if np.isfinite(cost_new) and actual > 0:
            rho = actual / predicted if predicted > 0 else 1.0
            small_step = np.linalg.norm(delta) <= xtol * (np.linalg.norm(p) + xtol)
            small_change = actual <= ftol * cost
            p, f, r, cost = p_new, f_new, r_new, cost_new
            J = jacobian(p, f)
            A = J.T @ J
            g = J.T @ r
            lam *= max(1.0 / 3.0, 1.0 - (2.0 * rho - 1.0) ** 3)
            nu = 2.0
            if cost == 0.0:
                converged, message = True, "exact fit"
            elif small_step:
                converged, message = True, "relative step below xtol"
            elif small_change:
                converged, message = True, "relative residual change below ftol"
        else:
            if np.linalg.norm(delta) <= xtol * (np.linalg.norm(p) + xtol):
                converged, message = True, "relative step below xtol"
                break
            lam *= nu
            nu *= 2.0
            if lam > 1e30:
                converged, message = True, "no further descent possible"

    rank = np.linalg.matrix_rank(J)
    if rank < n_par:
        if raise_on_failure:
            raise SingularJacobianError(f"Jacobian rank {rank} < {n_par} parameters")
        cov = np.full((n_par, n_par), np.inf)
    else:
        dof = len(y) - n_par
        s2 = 2.0 * cost / dof if dof > 0 else (0.0 if cost == 0 else np.inf)
        cov = s2 * np.linalg.pinv(A)
    result = NlsResult(params=p, covariance=cov, residual_norm=math.sqrt(2.0 * cost),
                       n_iter=it, converged=converged,
                       message=message or "maximum iterations reached", n_points=len(y))
    if not converged and raise_on_failure:
        err = ConvergenceError(f"no convergence after {max_iter} iterations")
        err.result = result
        raise err
    return result


# -- Lorentzian mixture -----------------------------------------------------------

@dataclass
class LorentzianFit:
    """Lorentzian mixture fitted to a PSD.

    ``components`` holds ``(amplitude, corner_hz)`` pairs in ascending corner
    order; :attr:`rate` is the lowest corner.
    """

    components: list
    noise_floor: float
    covariance: np.ndarray
    residual_norm: float
    corner_errors: list = field(default_factory=list)
    flags: list = field(default_factory=list)
    n_iter: int = 0
    fit_range: tuple = (0.0, 0.0)

    @property
    def rate(self) -> float:
        return self.components[0][1]

    @property
    def rate_error(self) -> float:
        return self.corner_errors[0] if self.corner_errors else float("nan")

    def evaluate(self, freqs) -> np.ndarray:
        return lorentzian_sum(freqs, self.components, self.noise_floor)

    def to_json(self) -> dict:
        return {
            "rate_hz": self.rate,
            "rate_err_hz": self.rate_error,
            "components": [{"amplitude": a, "corner_hz": g, "corner_err_hz": e}
                           for (a, g), e in zip(self.components, self.corner_errors)],
            "noise_floor": self.noise_floor,
            "residual_norm": self.residual_norm,
            "n_iter": self.n_iter,
            "flags": list(self.flags),
            "fit_range_hz": list(self.fit_range),
        }


def lorentzian_sum(freqs, components, floor=0.0) -> np.ndarray:
    f2 = (np.pi * np.asarray(freqs, dtype=float)) ** 2
    out = np.full_like(f2, float(floor))
    for amp, corner in components:
        out += amp * corner / (corner * corner + f2)
    return out


def telegraph_psd(freqs, rate, low=0.0, high=1.0) -> np.ndarray:
    """One-sided PSD of a symmetric telegraph between ``low`` and ``high`` flipping at ``rate``."""
    amp = 2.0 * ((high - low) / 2.0) ** 2
    return lorentzian_sum(freqs, [(amp, rate)])


def _log_lorentz_model(k):
    def model(f2, theta):
        amps = np.exp(theta[:k])
        corners = np.exp(theta[k:2 * k])
        s = np.full_like(f2, math.exp(theta[2 * k]))
        for a, g in zip(amps, corners):
            s += a * g / (g * g + f2)
        return np.log(s)

    def jac(f2, theta):
        amps = np.exp(theta[:k])
        corners = np.exp(theta[k:2 * k])
        floor = math.exp(theta[2 * k])
        s = np.full_like(f2, floor)
        cols = np.empty((len(f2), 2 * k + 1))
        for i, (a, g) in enumerate(zip(amps, corners)):
            den = g * g + f2
            comp = a * g / den
            s += comp
            cols[:, i] = comp
            cols[:, k + i] = a * g * (f2 - g * g) / (den * den)
        cols[:, 2 * k] = floor
        return cols / s[:, None]

    return model, jac


def _init_grid(fb, pb, counts, k, lo, hi, n_grid=14):
    """Rank corner triples from a log grid; amplitudes by non-negative least squares."""
    grid = np.geomspace(lo, hi, n_grid)
    f2 = (np.pi * fb) ** 2
    wrow = 1.0 / pb
    basis = np.column_stack([g / (g * g + f2) for g in grid])
    ones = np.ones_like(fb)
    logp = np.log(pb)
    best = []
    for combo in itertools.combinations(range(n_grid), k):
        M = np.column_stack([basis[:, combo], ones]) * wrow[:, None]
        coef, _ = nnls(M, np.ones_like(fb))
        model = M @ coef / wrow
        if np.any(model <= 0):
            continue
        cost = float(np.sum(counts * (np.log(model) - logp) ** 2))
        best.append((cost, combo, coef))
    best.sort(key=lambda t: t[0])
    return grid, best


def fit_lorentzian_sum(spectrum: Spectrum, k: int = 3, f_min: Optional[float] = None,
                       f_max: Optional[float] = None, n_starts: int = 5,
                       min_significance: float = 0.02) -> LorentzianFit:
    """Fit up to ``k`` Lorentzians plus a white floor to ``log(psd)``.

    The DC bin is excluded. Starting corners come from a log-spaced grid
    between ``max(2 df, 3e-5 f_nyq)`` and ``f_nyq``; the best grid points are
    refined on the log-binned spectrum and the winner is polished on every bin.

    A component count is rejected when two corners lie within 5% of each
    other, when a component never contributes more than ``min_significance``
    of the model, or when the fit does not converge. Among the accepted
    counts ``<= k`` the one with the lowest Bayesian information criterion
    is returned; every rejection is recorded in :attr:`LorentzianFit.flags`.
    """
    if not 1 <= k <= 4:
        raise ValueError("k must be between 1 and 4")
    freqs, psd = spectrum.freqs, spectrum.psd
    sel = freqs > 0
    if f_min is not None:
        sel &= freqs >= f_min
    if f_max is not None:
        sel &= freqs <= f_max
    sel &= psd > 0
    f, p = freqs[sel], psd[sel]
    if len(f) < 10 * k:
        raise ValueError(f"need at least {10 * k} bins above DC, got {len(f)}")

    f_nyq = f[-1]
    df = f[1] - f[0]
    lo = max(2.0 * df, 3e-5 * f_nyq)
    hi = f_nyq
    fb, pb, counts = log_binned(Spectrum(np.r_[0.0, f], np.r_[0.0, p], 1.0),
                                bins_per_decade=24, f_min=f[0])
    logp = np.log(p)
    f2 = (np.pi * f) ** 2

    flags: list = []
    accepted = []
    last_error = None
    for kk in range(k, 0, -1):
        if len(fb) < 2 * kk + 2:
            continue
        coarse = _coarse_fit(f, p, fb, pb, counts, kk, lo, hi, n_starts)
        if coarse is None:
            flags.append(f"k={kk}: no coarse convergence")
            continue
        problem = _component_problem(coarse[0], kk, fb, min_significance)
        if problem:
            flags.append(f"k={kk}: {problem}")
            continue
        theta0, lb, ub = coarse
        model, jac = _log_lorentz_model(kk)
        res = nls_fit(model, f2, logp, theta0, bounds=(lb, ub), jac=jac, raise_on_failure=False)
        if not res.converged:
            flags.append(f"k={kk}: no convergence ({res.message})")
            last_error = res
            continue
        problem = _component_problem(res.params, kk, f, min_significance)
        if problem:
            flags.append(f"k={kk}: {problem}")
            continue
        n = len(f)
        bic = n * math.log(res.residual_norm ** 2 / n) + (2 * kk + 1) * math.log(n)
        accepted.append((bic, kk, res))
        # a lower count can only win on the penalty; one extra candidate suffices
        if len(accepted) == 2:
            break
    if not accepted:
        err = ConvergenceError("Lorentzian fit did not converge for any component count")
        err.result = last_error
        raise err
    bic, kk, res = min(accepted, key=lambda t: t[0])
    if kk < k:
        flags.append(f"selected k={kk}")
    for msg in flags:
        logger.debug("lorentzian fit: %s", msg)
    fit = _to_fit(res, kk)
    fit.flags = flags
    fit.fit_range = (float(f[0]), float(f[-1]))
    return fit


def _component_problem(theta, k, f, min_significance):
    if k == 1:
        return None
    amps = np.exp(theta[:k])
    corners = np.sort(np.exp(theta[k:2 * k]))
    if np.any(corners[1:] / corners[:-1] < 1.05):
        return "degenerate corners"
    f2 = (np.pi * np.asarray(f)) ** 2
    comps = [a * g / (g * g + f2) for a, g in zip(amps, np.exp(theta[k:2 * k]))]
    total = np.sum(comps, axis=0) + math.exp(theta[2 * k])
    if min(np.max(c / total) for c in comps) < min_significance:
        return "insignificant component"
    return None


def _coarse_fit(f, p, fb, pb, counts, k, lo, hi, n_starts):
    model, jac = _log_lorentz_model(k)
    grid, ranked = _init_grid(fb, pb, counts, k, lo, hi)
    scale = float(np.median(p))
    lb = np.r_[np.full(k, math.log(scale * 1e-12 * lo)), np.full(k, math.log(lo / 4)),
               math.log(scale * 1e-9)]
    ub = np.r_[np.full(k, math.log(scale * 1e12 * hi)), np.full(k, math.log(4 * hi)),
               math.log(scale * 1e6)]
    best = None
    for _, combo, coef in ranked[:n_starts]:
        amps = np.maximum(coef[:k], scale * 1e-6 * grid[list(combo)])
        theta0 = np.r_[np.log(amps), np.log(grid[list(combo)]), math.log(max(coef[k], scale * 1e-8))]
        theta0 = np.clip(theta0, lb, ub)
        res = nls_fit(model, (np.pi * fb) ** 2, np.log(pb), theta0, weights=counts,
                      bounds=(lb, ub), jac=jac, raise_on_failure=False, max_iter=300)
        if res.converged and (best is None or res.residual_norm < best.residual_norm):
            best = res
    if best is None:
        return None
    return best.params, lb, ub


def _to_fit(res, k):
    theta = res.params
    amps = np.exp(theta[:k])
    corners = np.exp(theta[k:2 * k])
    order = np.argsort(corners)
    cov = res.covariance
    corner_err = [float(corners[i] * math.sqrt(max(cov[k + i, k + i], 0.0))) for i in order]
    return LorentzianFit(
        components=[(float(amps[i]), float(corners[i])) for i in order],
        noise_floor=float(math.exp(theta[2 * k])),
        covariance=cov,
        residual_norm=res.residual_norm,
        corner_errors=corner_err,
        n_iter=res.n_iter,
    )


# -- two-tone Ramsey ------------------------------------------------------------------

@dataclass
class RamseyFit:
    """Two-tone Ramsey fit; frequencies in MHz, times in us."""

    f_e: float
    f_o: float
    t2_star: float
    amplitude: float
    offset: float
    phase: float
    uncertainties: dict

    @property
    def delta_f(self) -> float:
        return abs(self.f_e - self.f_o)

    def to_json(self) -> dict:
        return {"f_e_mhz": self.f_e, "f_o_mhz": self.f_o, "delta_f_mhz": self.delta_f,
                "t2_star_us": self.t2_star, "amplitude": self.amplitude, "offset": self.offset,
                "phase": self.phase, "uncertainties": self.uncertainties}


def _ramsey_model(t, p):
    amp, fe, fo, t2, phase, off = p
    return amp * np.exp(-t / t2) * 0.5 * (np.cos(2 * np.pi * fe * t + phase)
                                          + np.cos(2 * np.pi * fo * t + phase)) + off


def fit_two_tone_ramsey(times, signal) -> RamseyFit:
    """Fit ``A exp(-t/T2*) (cos(2 pi f_e t + phi) + cos(2 pi f_o t + phi)) / 2 + c``.

    Starting frequencies are the two largest peaks of the zero-padded FFT.
    No ordering between ``f_e`` and ``f_o`` is enforced; the lower start
    peak is labelled ``f_e``.
    """
    t = np.asarray(times, dtype=float)
    s = np.asarray(signal, dtype=float)
    if len(t) < 50 or len(t) != len(s):
        raise ValueError("need at least 50 samples of equal-length times and signal")
    steps = np.diff(t)
    if np.any(steps <= 0):
        raise ValueError("times must be ascending")
    dt = float(np.median(steps))
    span = t[-1] - t[0]
    bin_width = 1.0 / span

    centered = s - s.mean()
    pad = 8
    spec = np.abs(np.fft.rfft(centered, n=pad * len(s)))
    fgrid = np.fft.rfftfreq(pad * len(s), dt)
    peaks, _ = find_peaks(spec)
    if len(peaks) < 2:
        raise DegenerateToneError("fewer than two spectral peaks")
    top = peaks[np.argsort(spec[peaks])[::-1][:2]]
    f1, f2 = sorted(fgrid[top])
    if f2 - f1 < 2 * bin_width:
        raise DegenerateToneError(
            f"tones {f1:.4g} and {f2:.4g} MHz are closer than two FFT bins ({2 * bin_width:.3g} MHz)")
    if span * abs(f2 - f1) < 2:
        raise ValueError("trace spans fewer than two beat periods")

    t0 = t - t[0]
    env = np.abs(centered)
    amp0 = max(2 * np.percentile(env[: max(5, len(env) // 10)], 95), 1e-12)
    # decay guess from envelope falloff between first and last fifth
    q = max(len(env) // 5, 5)
    e1, e2 = np.sqrt(np.mean(centered[:q] ** 2)), np.sqrt(np.mean(centered[-q:] ** 2))
    t2_0 = span / max(math.log(max(e1 / max(e2, 1e-12), 1.0001)), 0.1)
    t2_0 = float(np.clip(t2_0, 2 * dt, 50 * span))

    best = None
    for phase0 in np.linspace(-np.pi, np.pi, 8, endpoint=False):
        p0 = np.array([amp0, f1, f2, t2_0, phase0, s.mean()])
        lb = [0.0, 0.0, 0.0, dt / 10, -4 * np.pi, -np.inf]
        ub = [np.inf, 0.5 / dt, 0.5 / dt, 1e3 * span, 4 * np.pi, np.inf]
        try:
            res = nls_fit(lambda x, p: _ramsey_model(x, p), t0, s, p0, bounds=(lb, ub))
        except (ConvergenceError, SingularJacobianError):
            continue
        if best is None or res.residual_norm < best.residual_norm:
            best = res
    if best is None:
        raise ConvergenceError("two-tone Ramsey fit failed from every starting phase")
    amp, fe, fo, t2, phase, off = best.params
    err = best.uncertainties
    # phase is referenced to times[0]
    phase = (phase + np.pi) % (2 * np.pi) - np.pi
    names = ["amplitude", "f_e", "f_o", "t2_star", "phase", "offset"]
    return RamseyFit(f_e=float(fe), f_o=float(fo), t2_star=float(t2), amplitude=float(amp),
                     offset=float(off), phase=float(phase),
                     uncertainties={n: float(e) for n, e in zip(names, err)})


# -- power laws -------------------------------------------------------------------------

@dataclass
class PowerLawFit:
    """``rate = base + amplitude * x**exponent`` with 1-sigma uncertainties.

    For time decays ``base`` is zero, ``x`` is days since cooldown and
    ``exponent`` is negative; ``amplitude`` is then the rate at one day.
    """

    base: float
    amplitude: float
    exponent: float
    uncertainties: dict
    residual_norm: float = 0.0
    covariance: Optional[np.ndarray] = None

    @property
    def decay_exponent(self) -> float:
        return -self.exponent

    def evaluate(self, x) -> np.ndarray:
        return self.base + self.amplitude * np.asarray(x, dtype=float) ** self.exponent

    def to_json(self) -> dict:
        return {"base": self.base, "amplitude": self.amplitude, "exponent": self.exponent,
                "uncertainties": self.uncertainties, "residual_norm": self.residual_norm}


def _log_weights(y, rate_errors):
    """Weights for log-rate residuals from absolute rate errors, or None."""
    if rate_errors is None:
        return None
    err = np.asarray(rate_errors, dtype=float)
    if err.shape != y.shape or np.any(~np.isfinite(err)) or np.any(err <= 0):
        raise ValueError("rate_errors must be positive, finite and match rates")
    return (y / err) ** 2


def _birge(cov, chi2_red):
    """Scale a covariance from known errors up by the reduced chi-square when it exceeds 1."""
    return cov * max(1.0, chi2_red)


def fit_power_law(powers, rates, rate_errors=None) -> PowerLawFit:
    """Fit ``base + A * P**n`` to rates with multiplicative scatter.

    Residuals are taken between logarithms of data and model. Powers are
    rescaled by their maximum internally; reported ``amplitude`` and its
    uncertainty refer to the original units.

    With ``rate_errors`` (1-sigma, Hz) the residuals are weighted by them and
    the covariance follows from those errors, scaled up by the reduced
    chi-square when the scatter is larger. Without them the scatter alone
    sets the uncertainties.
    """
    P = np.asarray(powers, dtype=float)
    y = np.asarray(rates, dtype=float)
    if len(P) != len(y):
        raise ValueError("powers and rates differ in length")
    w = _log_weights(y, rate_errors)
    if np.any(P < 0) or np.any(y <= 0):
        raise ValueError("powers must be >= 0 and rates > 0")
    if len(np.unique(P)) < 4:
        raise ValueError("need at least 4 distinct powers")
    p_scale = float(P.max())
    x = P / p_scale

    base0 = float(np.min(y[x == x.min()]))
    excess = y - 0.9 * base0
    pos = (x > 0) & (excess > 0)
    if pos.sum() >= 2:
        slope, icpt = np.polyfit(np.log(x[pos]), np.log(excess[pos]), 1)
    else:
        slope, icpt = 1.0, math.log(max(y.max() - base0, 1e-12))
    slope = float(np.clip(slope, 0.05, 10.0))

    def model(xx, th):
        base, log_a, n = th
        with np.errstate(divide="ignore"):
            return np.log(base + np.exp(log_a) * np.power(xx, n))

    lb = [0.0, -np.inf, 0.01]
    ub = [np.inf, np.inf, 20.0]
    starts = [np.array([0.9 * base0, icpt, slope]), np.array([0.5 * base0, icpt, 1.0]),
              np.array([0.9 * base0, icpt, 2.0])]
    best = None
    for th0 in starts:
        th0 = np.clip(th0, lb, ub)
        try:
            res = nls_fit(model, x, np.log(y), th0, weights=w, bounds=(lb, ub))
        except (ConvergenceError, SingularJacobianError) as exc:
            logger.debug("power-law start %s failed: %s", th0, exc)
            continue
        if best is None or res.residual_norm < best.residual_norm:
            best = res
    if best is None:
        raise ConvergenceError("power-law fit failed from every start")

    base, log_a, n = best.params
    cov = best.covariance
    if w is not None:
        dof = len(y) - 3
        chi2_red = best.residual_norm ** 2 / dof if dof > 0 else 0.0
        cov = _birge(cov / chi2_red, chi2_red) if chi2_red > 0 else cov
    a_scaled = math.exp(log_a)
    amplitude = a_scaled / p_scale ** n
    # log A = log_a - n log(p_scale)
    g = np.array([1.0, -math.log(p_scale)])
    var_log_amp = float(g @ cov[1:, 1:] @ g)
    unc = {"base": math.sqrt(max(cov[0, 0], 0.0)),
           "amplitude": amplitude * math.sqrt(max(var_log_amp, 0.0)),
           "exponent": math.sqrt(max(cov[2, 2], 0.0))}
    return PowerLawFit(base=float(base), amplitude=float(amplitude), exponent=float(n),
                       uncertainties=unc, residual_norm=best.residual_norm, covariance=cov)


def fit_time_decay(days, rates, rate_errors=None) -> PowerLawFit:
    """Fit ``rate_1 * t**(-p)`` by least squares on ``log(rate)`` against ``log(t)``.

    ``rate_errors`` switches to weighted least squares with the same
    uncertainty rule as :func:`fit_power_law`.
    """
    t = np.asarray(days, dtype=float)
    y = np.asarray(rates, dtype=float)
    if len(t) != len(y):
        raise ValueError("days and rates differ in length")
    if len(t) < 3:
        raise ValueError("need at least 3 time points")
    if np.any(t <= 0):
        raise ValueError("times since cooldown must be positive")
    if np.any(y <= 0):
        raise ValueError("rates must be positive")
    w = _log_weights(y, rate_errors)
    if w is not None:
        return _weighted_time_decay(np.log(t), np.log(y), w)
    lin = linear_regression(np.log(t), np.log(y))
    rate1 = math.exp(lin.intercept)
    return PowerLawFit(base=0.0, amplitude=rate1, exponent=lin.slope,
                       uncertainties={"base": 0.0, "amplitude": rate1 * lin.intercept_err,
                                      "exponent": lin.slope_err},
                       residual_norm=lin.residual_norm)


def _weighted_time_decay(lt, ly, w) -> PowerLawFit:
    X = np.column_stack([np.ones_like(lt), lt])
    A = X.T @ (w[:, None] * X)
    if np.linalg.matrix_rank(A) < 2:
        raise ValueError("times since cooldown are degenerate")
    icpt, slope = np.linalg.solve(A, X.T @ (w * ly))
    resid = ly - icpt - slope * lt
    chi2 = float(np.sum(w * resid ** 2))
    cov = _birge(np.linalg.inv(A), chi2 / (len(lt) - 2))
    rate1 = math.exp(icpt)
    return PowerLawFit(base=0.0, amplitude=rate1, exponent=float(slope),
                       uncertainties={"base": 0.0, "amplitude": rate1 * math.sqrt(cov[0, 0]),
                                      "exponent": math.sqrt(cov[1, 1])},
                       residual_norm=math.sqrt(chi2), covariance=cov)


# -- linear regression ----------------------------------------------------------------

@dataclass
class LinearFit:
    slope: float
    intercept: float
    slope_err: float
    intercept_err: float
    residual_norm: float
    qp_limited: bool

    def to_json(self) -> dict:
        return dict(slope=self.slope, intercept=self.intercept, slope_err=self.slope_err,
                    intercept_err=self.intercept_err, residual_norm=self.residual_norm,
                    qp_limited=self.qp_limited)


def linear_regression(x: Sequence[float], y: Sequence[float]) -> LinearFit:
    """OLS line with standard errors.

    ``qp_limited`` is set when the slope exceeds zero by more than two
    standard errors.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) != len(y):
        raise ValueError("x and y differ in length")
    n = len(x)
    if n < 3:
        raise ValueError("need at least 3 points")
    xm = x.mean()
    sxx = float(np.sum((x - xm) ** 2))
    if sxx <= 1e-300 * max(1.0, float(np.max(np.abs(x))) ** 2) or np.ptp(x) == 0:
        raise ValueError("x values are degenerate")
    slope = float(np.sum((x - xm) * (y - y.mean())) / sxx)
    intercept = float(y.mean() - slope * xm)
    resid = y - (intercept + slope * x)
    rss = float(resid @ resid)
    s2 = rss / (n - 2)
    slope_err = math.sqrt(s2 / sxx)
    intercept_err = math.sqrt(s2 * (1.0 / n + xm * xm / sxx))
    return LinearFit(slope=slope, intercept=intercept, slope_err=slope_err,
                     intercept_err=intercept_err, residual_norm=math.sqrt(rss),
                     qp_limited=bool(slope > 2.0 * slope_err))
