import numpy as np
import pytest
from scipy.optimize import least_squares

from parityscope.errors import ConvergenceError, DegenerateToneError, SingularJacobianError
from parityscope.fitkit import (fit_lorentzian_sum, fit_power_law, fit_time_decay,
                                fit_two_tone_ramsey, linear_regression, lorentzian_sum, nls_fit,
                                telegraph_psd)
from parityscope.paritysim import SimConfig, simulate_traces, synthesize_ramsey_signal
from parityscope.spectral import Spectrum, averaged_spectrum
from parityscope.transmon import TransmonParams, parity_frequencies

DT = 1.5e-6


def analytic_spectrum(components, floor=0.0, duration=1.0, dt=DT, scale=1.0):
    n = int(round(duration / dt))
    f = np.fft.rfftfreq(n, dt)
    return Spectrum(f * scale, lorentzian_sum(f, components, floor) / scale, duration)


# -- nls_fit ---------------------------------------------------------------------------

def test_nls_linear_exact():
    x = np.arange(1.0, 6.0)
    res = nls_fit(lambda x, p: p[0] * x, x, 2 * x, [1.0])
    assert res.params[0] == pytest.approx(2.0, abs=1e-12)
    assert res.residual_norm < 1e-12 and res.uncertainties[0] < 1e-9


def test_nls_quadratic_interpolates_three_points():
    x = np.array([-1.0, 0.5, 2.0])
    y = 1.5 - 0.5 * x + 2 * x ** 2
    res = nls_fit(lambda x, p: p[0] + p[1] * x + p[2] * x ** 2, x, y, [0.0, 0.0, 0.0])
    np.testing.assert_allclose(res.params, [1.5, -0.5, 2.0], atol=1e-9)
    assert res.residual_norm < 1e-9


def test_nls_lorentzian_noiseless():
    f = np.linspace(1, 5000, 400)
    y = 1.0 * 500 / (500 ** 2 + (np.pi * f) ** 2)

    def model(x, p):
        return p[0] * p[1] / (p[1] ** 2 + (np.pi * x) ** 2)

    res = nls_fit(model, f, y, [0.5, 300.0], weights=1 / y ** 2)
    np.testing.assert_allclose(res.params, [1.0, 500.0], rtol=1e-6)


def test_nls_matches_scipy_oracle():
    rng = np.random.default_rng(0)
    x = np.linspace(0, 4, 60)
    y = 3.0 * np.exp(-1.3 * x) + 0.2 + rng.normal(0, 0.02, x.size)

    def model(x, p):
        return p[0] * np.exp(-p[1] * x) + p[2]

    ours = nls_fit(model, x, y, [1.0, 0.5, 0.0])
    ref = least_squares(lambda p: model(x, p) - y, [1.0, 0.5, 0.0], xtol=1e-14, ftol=1e-14)
    np.testing.assert_allclose(ours.params, ref.x, rtol=1e-6)
    J = ref.jac
    s2 = 2 * ref.cost / (len(x) - 3)
    np.testing.assert_allclose(ours.uncertainties, np.sqrt(np.diag(s2 * np.linalg.inv(J.T @ J))), rtol=1e-3)


def test_nls_respects_bounds():
    x = np.linspace(0, 1, 20)
    y = -1.0 * x
    res = nls_fit(lambda x, p: p[0] * x, x, y, [1.0], bounds=([0.0], [10.0]))
    assert res.params[0] == 0.0


def test_nls_errors():
    x = np.linspace(0, 1, 10)
    with pytest.raises(SingularJacobianError):
        nls_fit(lambda x, p: p[0] * p[1] * x + 0 * x, x, 3 * x + 0.1 * np.sin(9 * x), [1.0, 1.0])
    with pytest.raises(ConvergenceError):
        nls_fit(lambda x, p: np.exp(p[0] * x), x, np.exp(3 * x) + 0.01 * np.cos(7 * x), [0.0], max_iter=1)
    with pytest.raises(ValueError):
        nls_fit(lambda x, p: p[0] * x, x[:1], x[:1], [1.0, 2.0])
    with pytest.raises(ValueError):
        nls_fit(lambda x, p: p[0] * x, x, x, [5.0], bounds=([0.0], [1.0]))


# -- Lorentzian mixture -------------------------------------------------------------------

def test_telegraph_form():
    f = np.array([0.0, 100.0])
    np.testing.assert_allclose(telegraph_psd(f, 460.0), 0.5 * 460 / (460 ** 2 + (np.pi * f) ** 2))


def test_lorentzian_analytic_telegraph():
    fit = fit_lorentzian_sum(analytic_spectrum([(0.5, 460.0)], floor=1e-9), k=3)
    assert fit.rate == pytest.approx(460.0, rel=0.01)
    corners = [c for _, c in fit.components]
    assert corners == sorted(corners)
    assert all(a >= 0 for a, _ in fit.components) and fit.noise_floor >= 0


def test_lorentzian_three_components():
    comps = [(0.5, 460.0), (2e-3, 1.2e4), (3e-2, 1.5e5)]
    fit = fit_lorentzian_sum(analytic_spectrum(comps, floor=1e-9), k=3)
    got = [c for _, c in fit.components]
    np.testing.assert_allclose(got, [460.0, 1.2e4, 1.5e5], rtol=1e-3)
    assert len(fit.corner_errors) == 3


def test_lorentzian_scale_equivariance():
    comps = [(0.5, 460.0), (2e-2, 2e4)]
    base = analytic_spectrum(comps, floor=1e-8)
    a = fit_lorentzian_sum(base, k=2)
    b = fit_lorentzian_sum(Spectrum(base.freqs, base.psd * 37.0, base.duration), k=2)
    np.testing.assert_allclose([c for _, c in b.components], [c for _, c in a.components], rtol=1e-6)
    np.testing.assert_allclose([x for x, _ in b.components], [37 * x for x, _ in a.components], rtol=1e-5)
    assert b.noise_floor == pytest.approx(37 * a.noise_floor, rel=1e-4)


def test_lorentzian_frequency_unit_equivariance():
    comps = [(0.5, 460.0), (2e-2, 2e4)]
    hz = analytic_spectrum(comps, floor=1e-8)
    khz = analytic_spectrum(comps, floor=1e-8, scale=1e-3)
    a = fit_lorentzian_sum(hz, k=2)
    b = fit_lorentzian_sum(khz, k=2)
    np.testing.assert_allclose([c for _, c in b.components], [1e-3 * c for _, c in a.components], rtol=1e-6)


def test_lorentzian_reduces_degenerate_components():
    fit = fit_lorentzian_sum(analytic_spectrum([(0.5, 800.0)], floor=1e-9), k=3)
    assert len(fit.components) < 3
    assert any("selected" in fl for fl in fit.flags)


def test_lorentzian_input_checks():
    s = analytic_spectrum([(0.5, 460.0)], duration=4e-5)
    with pytest.raises(ValueError):
        fit_lorentzian_sum(s, k=3)
    with pytest.raises(ValueError):
        fit_lorentzian_sum(analytic_spectrum([(0.5, 460.0)]), k=5)


def test_lorentzian_fit_json():
    fit = fit_lorentzian_sum(analytic_spectrum([(0.5, 460.0)], floor=1e-9), k=1)
    doc = fit.to_json()
    assert doc["rate_hz"] == fit.rate and len(doc["components"]) == 1


@pytest.mark.slow
def test_monte_carlo_calibration_1khz():
    cfg = SimConfig(gamma0=1000.0, t1=20e-6, t2=10e-6, readout_error=0.02,
                    n_shots=int(round(1 / DT)), seed=1)
    fit = fit_lorentzian_sum(averaged_spectrum(simulate_traces(cfg, 10)))
    assert 950 <= fit.rate <= 1050


# -- two-tone Ramsey ----------------------------------------------------------------------

def test_ramsey_recovers_tones():
    t = np.arange(0, 10, 0.01)
    sig = synthesize_ramsey_signal(2.5, 4.5, 10.0, t, noise_sd=0.1, seed=4, phase=0.3)
    fit = fit_two_tone_ramsey(t, sig.signal)
    assert fit.f_e == pytest.approx(2.5, rel=0.01)
    assert fit.f_o == pytest.approx(4.5, rel=0.01)
    assert fit.t2_star == pytest.approx(10.0, rel=0.3)
    assert fit.to_json()["delta_f_mhz"] == pytest.approx(2.0, rel=0.02)


def test_ramsey_degenerate_tones():
    t = np.arange(0, 10, 0.01)
    sig = synthesize_ramsey_signal(3.0, 3.0, 10.0, t, noise_sd=0.01, seed=1)
    with pytest.raises(DegenerateToneError):
        fit_two_tone_ramsey(t, sig.signal)


def test_ramsey_delta_f_stays_in_dispersion_range():
    spec = parity_frequencies(TransmonParams(20 * 0.465, 0.465), 64)
    t = np.arange(0, 10, 0.01)
    for i in range(0, 32, 4):
        df = spec.delta_f[i]
        if df < 1.0:
            continue
        sig = synthesize_ramsey_signal(4 - df / 2, 4 + df / 2, 10.0, t, noise_sd=0.05, seed=i)
        fit = fit_two_tone_ramsey(t, sig.signal)
        assert 0 <= fit.delta_f <= spec.dispersion
        assert fit.delta_f == pytest.approx(df, rel=0.02)


# -- power laws ------------------------------------------------------------------------------

POWERS = np.linspace(0, 2e-6, 10)


def power_data(base, n, noise, seed, amp_at_max=20.0):
    rng = np.random.default_rng(seed)
    amp = amp_at_max * base / POWERS.max() ** n
    clean = base + amp * POWERS ** n
    return clean * (1 + noise * rng.standard_normal(POWERS.size)), amp


def test_power_law_exact_linear():
    y, amp = power_data(461.0, 1.0, 0.0, 0)
    fit = fit_power_law(POWERS, y)
    assert fit.exponent == pytest.approx(1.0, abs=1e-6)
    assert fit.base == pytest.approx(461.0, rel=1e-6)
    assert fit.amplitude == pytest.approx(amp, rel=1e-5)


@pytest.mark.parametrize("n,noise,tol", [(1.4, 0.05, 0.15), (2.6, 0.10, 0.3)])
def test_power_law_noisy(n, noise, tol):
    hits = 0
    for seed in range(10):
        y, _ = power_data(461.0, n, noise, seed)
        hits += abs(fit_power_law(POWERS, y).exponent - n) <= tol
    assert hits >= 9


def test_power_law_coverage():
    inside = 0
    for seed in range(100):
        y, amp = power_data(461.0, 1.4, 0.05, 100 + seed)
        fit = fit_power_law(POWERS, y)
        inside += abs(fit.exponent - 1.4) <= fit.uncertainties["exponent"]
    assert inside >= 60


def test_power_law_input_checks():
    with pytest.raises(ValueError):
        fit_power_law([1, 1, 1, 1], [1, 2, 3, 4])
    with pytest.raises(ValueError):
        fit_power_law([0, 1, 2, 3], [1, -2, 3, 4])


def test_power_law_weighted_matches_unweighted_for_equal_relative_errors():
    y, _ = power_data(461.0, 1.4, 0.05, 3)
    plain = fit_power_law(POWERS, y)
    # errors far below the scatter: Birge inflation restores the scatter-based covariance
    tight = fit_power_law(POWERS, y, 1e-4 * y)
    assert tight.exponent == pytest.approx(plain.exponent, rel=1e-6)
    for name in ("base", "amplitude", "exponent"):
        assert tight.uncertainties[name] == pytest.approx(plain.uncertainties[name], rel=1e-4)
    # errors far above the scatter: uncertainties follow the quoted errors
    loose = fit_power_law(POWERS, y, 10.0 * y)
    assert loose.uncertainties["exponent"] > 50 * plain.uncertainties["exponent"]


def test_power_law_weighted_coverage():
    inside = 0
    rel = np.linspace(0.02, 0.15, POWERS.size)
    for seed in range(100):
        rng = np.random.default_rng(400 + seed)
        clean = 461.0 + 2e3 * (POWERS / POWERS.max()) ** 2.0
        y = clean * (1 + rel * rng.standard_normal(POWERS.size))
        fit = fit_power_law(POWERS, y, rel * clean)
        inside += abs(fit.exponent - 2.0) <= 2 * fit.uncertainties["exponent"]
    assert inside >= 90


def test_power_law_rejects_bad_errors():
    y, _ = power_data(461.0, 1.0, 0.0, 0)
    for errs in (np.zeros_like(y), np.full(y.size, np.nan), np.ones(y.size - 1)):
        with pytest.raises(ValueError):
            fit_power_law(POWERS, y, errs)


# -- time decay ------------------------------------------------------------------------------

DAYS = np.array([1, 2, 3, 5, 8, 13, 21, 30], dtype=float)


def test_time_decay_exact():
    fit = fit_time_decay(DAYS, 93.0 * DAYS ** -0.5)
    assert fit.decay_exponent == pytest.approx(0.5, abs=1e-12)
    assert fit.amplitude == pytest.approx(93.0, rel=1e-12)


def test_time_decay_noisy():
    rng = np.random.default_rng(3)
    y = 93.0 * DAYS ** -0.5 * (1 + 0.1 * rng.standard_normal(DAYS.size))
    assert fit_time_decay(DAYS, y).decay_exponent == pytest.approx(0.5, rel=0.1)


def test_time_decay_ratio():
    rng = np.random.default_rng(5)
    y = 48.0 * DAYS ** -0.4 * np.exp(0.05 * rng.standard_normal(DAYS.size))
    a = fit_time_decay(DAYS, 2 * y)
    b = fit_time_decay(DAYS, y)
    assert a.amplitude / b.amplitude == pytest.approx(2.0, rel=1e-12)
    assert 93.0 / 48.0 == pytest.approx(2.0, abs=0.1)


def test_time_decay_weighted():
    rng = np.random.default_rng(8)
    y = 93.0 * DAYS ** -0.5 * (1 + 0.05 * rng.standard_normal(DAYS.size))
    plain = fit_time_decay(DAYS, y)
    tight = fit_time_decay(DAYS, y, 1e-5 * y)
    assert tight.exponent == pytest.approx(plain.exponent, rel=1e-9)
    assert tight.uncertainties["exponent"] == pytest.approx(plain.uncertainties["exponent"], rel=1e-6)
    # a point with a large error barely moves the weighted fit
    y_out = y.copy()
    y_out[-1] *= 3
    errs = 0.05 * y_out
    errs[-1] = 100 * y_out[-1]
    assert fit_time_decay(DAYS, y_out, errs).decay_exponent == pytest.approx(
        fit_time_decay(DAYS[:-1], y[:-1]).decay_exponent, abs=0.01)


def test_time_decay_checks():
    with pytest.raises(ValueError):
        fit_time_decay([0, 1, 2], [1, 2, 3])
    with pytest.raises(ValueError):
        fit_time_decay([1, 2], [1, 2])


# -- linear regression ---------------------------------------------------------------------

def test_linear_exact():
    x = np.arange(5.0)
    fit = linear_regression(x, 3 * x + 1)
    assert (fit.slope, fit.intercept) == pytest.approx((3.0, 1.0))


def test_linear_flags():
    # the flag is a one-sided 2-sigma test: ~2.3% false positives under the null
    rng = np.random.default_rng(8)
    x = np.linspace(100, 2000, 20)
    false_pos = sum(linear_regression(x, 5e3 + rng.normal(0, 100, x.size)).qp_limited
                    for _ in range(400))
    detected = sum(linear_regression(x, 5e3 + 2.0 * x + rng.normal(0, 100, x.size)).qp_limited
                   for _ in range(100))
    assert false_pos <= 20 and detected == 100
    with pytest.raises(ValueError):
        linear_regression([1, 1, 1], [1, 2, 3])
