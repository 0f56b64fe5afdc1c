import copy
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from parityscope.fitkit import PowerLawFit, fit_lorentzian_sum
from parityscope.paritysim import SimConfig, simulate_parity_trace
from parityscope.plots import (plot_psd, plot_rate_vs_power, plot_rate_vs_time, plot_trace,
                               records_series)
from parityscope.spectral import averaged_spectrum

SVG_NS = "{http://www.w3.org/2000/svg}"


def dashed_paths(path):
    root = ET.parse(path).getroot()
    return [el for el in root.iter(f"{SVG_NS}path") if "stroke-dasharray" in el.get("style", "")]


@pytest.fixture(scope="module")
def trace():
    return simulate_parity_trace(SimConfig(gamma0=800.0, readout_error=0.02, n_shots=200_000, seed=3))


def test_trace_plot(tmp_path, trace):
    before = trace.m.copy()
    out = plot_trace(trace, tmp_path / "trace.svg")
    text = out.read_text()
    assert text.startswith("<?xml") and "odd parity" in text and "time (ms)" in text
    np.testing.assert_array_equal(trace.m, before)


def test_psd_plot_has_fit_and_asymptote(tmp_path, trace):
    spec = averaged_spectrum([trace])
    fit = fit_lorentzian_sum(spec, k=1)
    psd_before, fit_before = spec.psd.copy(), copy.deepcopy(fit.components)
    out = plot_psd(spec, fit, tmp_path / "psd.svg")
    text = out.read_text()
    assert "1/f^2" in text and "frequency (Hz)" in text
    assert len(dashed_paths(out)) >= 1
    np.testing.assert_array_equal(spec.psd, psd_before)
    assert fit.components == fit_before


def test_two_material_power_sweep(tmp_path):
    p = np.linspace(0, 8e-9, 6)
    fits = {"Nb": PowerLawFit(100.0, 2e19, 2.0, {}), "Ta": PowerLawFit(300.0, 5e9, 1.0, {})}
    series = {m: {"x": p.tolist(), "y": f.evaluate(p).tolist(), "yerr": [5.0] * 6, "fit": f}
              for m, f in fits.items()}
    snapshot = copy.deepcopy(series)
    out = plot_rate_vs_power(series, tmp_path / "power.svg")
    assert len(dashed_paths(out)) == 2
    assert "radiator power (nW)" in out.read_text()
    assert series.keys() == snapshot.keys()
    for m in series:
        assert series[m]["x"] == snapshot[m]["x"] and series[m]["y"] == snapshot[m]["y"]


def test_empty_inputs_raise_without_file(tmp_path):
    for func, arg in ((plot_rate_vs_power, {}), (plot_rate_vs_time, {"Nb": {"x": [], "y": []}}),
                      (plot_rate_vs_time, records_series([]))):
        target = tmp_path / "empty.svg"
        with pytest.raises(ValueError):
            func(arg, target)
        assert not target.exists()


def test_time_plot_is_deterministic(tmp_path):
    days = np.array([1.0, 2, 5, 10, 30])
    fit = PowerLawFit(0.0, 93.0, -0.5, {})
    series = {"Nb": {"x": days, "y": fit.evaluate(days), "fit": fit}}
    a = plot_rate_vs_time(series, tmp_path / "a.svg").read_bytes()
    b = plot_rate_vs_time(series, tmp_path / "b.svg").read_bytes()
    assert a == b
