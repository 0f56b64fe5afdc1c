"""Measurement records, configuration statistics and synthetic campaigns.

Records follow the CSV schema
``material,configuration,gamma0_hz,gamma0_err_hz,device,qubit,t_days``.
The shipped fixture (:func:`load_reference_records`) holds the reference
per-measurement filter-configuration data set.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import logging
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence, Union

import numpy as np

from . import __version__
from ._kernels import BACKEND
from .errors import RecordValidationError
from .fitkit import (LinearFit, PowerLawFit, fit_lorentzian_sum, fit_power_law, fit_time_decay,
                     linear_regression)
from .paritysim import SimConfig, simulate_traces
from .qpmodel import QpModelParams, RadiatorParams, predicted_rate_curve
from .spectral import averaged_spectrum

logger = logging.getLogger(__name__)

MATERIALS = ("Nb", "Ta")
RECORD_FIELDS = ("material", "configuration", "gamma0_hz", "gamma0_err_hz", "device", "qubit", "t_days")
COMBINED_LABEL = "Foam + filter"


@dataclass(frozen=True)
class MeasurementRecord:
    material: str
    configuration: str
    gamma0: float
    gamma0_err: float
    device: str
    qubit: str
    t_days: float
    original: Optional["MeasurementRecord"] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.material not in MATERIALS:
            raise ValueError(f"unknown material {self.material!r}")
        if not (math.isfinite(self.gamma0) and self.gamma0 > 0):
            raise ValueError(f"gamma0 must be positive, got {self.gamma0}")
        if not (math.isfinite(self.gamma0_err) and self.gamma0_err >= 0):
            raise ValueError(f"gamma0_err must be >= 0, got {self.gamma0_err}")
        if not (math.isfinite(self.t_days) and self.t_days > 0):
            raise ValueError(f"t_days must be positive, got {self.t_days}")

    def to_row(self) -> dict:
        return {"material": self.material, "configuration": self.configuration,
                "gamma0_hz": self.gamma0, "gamma0_err_hz": self.gamma0_err,
                "device": self.device, "qubit": self.qubit, "t_days": self.t_days}


# -- ingestion --------------------------------------------------------------------

def ingest_records(source: Union[str, os.PathLike, io.TextIOBase]) -> list[MeasurementRecord]:
    """Parse and validate a records CSV.

    ``source`` is a path or an open text stream. All malformed rows are
    collected and reported together with their line numbers.
    """
    if hasattr(source, "read"):
        text = source.read()
        name = getattr(source, "name", "<stream>")
    else:
        text = Path(source).read_text()
        name = str(source)
    if not text.strip():
        warnings.warn(f"{name}: empty records file", UserWarning, stacklevel=2)
        return []
    reader = csv.DictReader(io.StringIO(text))
    header = [h.strip() for h in (reader.fieldnames or [])]
    missing = [c for c in RECORD_FIELDS if c not in header]
    if missing:
        raise RecordValidationError([(1, f"missing columns: {', '.join(missing)}")])

    records, problems = [], []
    for row in reader:
        line = reader.line_num
        row = {k.strip(): (v or "").strip() for k, v in row.items() if k is not None}
        try:
            records.append(MeasurementRecord(
                material=row["material"],
                configuration=row["configuration"],
                gamma0=float(row["gamma0_hz"]),
                gamma0_err=float(row["gamma0_err_hz"]),
                device=row["device"],
                qubit=row["qubit"],
                t_days=float(row["t_days"]),
            ))
        except (ValueError, TypeError) as exc:
            problems.append((line, str(exc)))
    if problems:
        raise RecordValidationError(problems)
    if not records:
        warnings.warn(f"{name}: no records", UserWarning, stacklevel=2)
    return records


def load_reference_records() -> list[MeasurementRecord]:
    """The per-measurement filter-configuration data set shipped with the package."""
    with resources.files("parityscope.data").joinpath("app_e_records.csv").open() as fh:
        return ingest_records(fh)


def write_records_csv(records: Iterable[MeasurementRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=RECORD_FIELDS)
        w.writeheader()
        for r in records:
            w.writerow(r.to_row())


# -- configuration statistics -------------------------------------------------------------

@dataclass
class ConfigSummary:
    """Per (material, configuration) statistics of ``gamma0``.

    ``spread`` combines the scatter between records with their individual
    uncertainties, ``sqrt(var_pop(gamma0) + mean(gamma0_err**2))``; ``std``
    is the plain sample standard deviation (0 for one record).
    """

    material: str
    configuration: str
    mean_rate: float
    spread: float
    n: int
    std: float = 0.0

    def to_json(self) -> dict:
        return dataclasses.asdict(self)


def table_label(configuration: str) -> str:
    """Map combined foam-plus-filter variants onto one label."""
    if configuration.startswith("Foam +"):
        return COMBINED_LABEL
    return configuration


def summarize_configurations(records: Sequence[MeasurementRecord], grouping: str = "table",
                             weighted: bool = False) -> list[ConfigSummary]:
    """Group records by material and configuration and summarize each group.

    ``grouping="table"`` merges all ``"Foam + ..."`` variants into
    ``"Foam + filter"``; ``"raw"`` keeps labels as recorded. Means are
    unweighted unless ``weighted`` (inverse-variance). Group order follows
    first appearance.
    """
    if grouping not in ("table", "raw"):
        raise ValueError("grouping must be 'table' or 'raw'")
    groups: dict = {}
    for r in records:
        label = table_label(r.configuration) if grouping == "table" else r.configuration
        groups.setdefault((r.material, label), []).append(r)
    out = []
    for (material, label), rs in groups.items():
        rates = np.array([r.gamma0 for r in rs])
        errs = np.array([r.gamma0_err for r in rs])
        if len(rates) == 0:
            logger.info("skipping empty group %s / %s", material, label)
            continue
        if weighted and np.all(errs > 0):
            w = 1.0 / errs ** 2
            mean = float(np.sum(w * rates) / np.sum(w))
        else:
            mean = float(rates.mean())
        spread = math.sqrt(float(np.mean((rates - mean) ** 2) + np.mean(errs ** 2)))
        std = float(rates.std(ddof=1)) if len(rates) > 1 else 0.0
        out.append(ConfigSummary(material, label, mean, spread, len(rates), std))
    return out


@dataclass
class Comparison:
    material: str
    configuration: str
    baseline: str
    factor: float
    absolute_hz: float

    @property
    def factor_text(self) -> str:
        return format_factor(self.factor)

    @property
    def absolute_text(self) -> str:
        return format_khz(self.absolute_hz)

    def to_json(self) -> dict:
        d = dataclasses.asdict(self)
        d.update(factor_text=self.factor_text, absolute_khz_text=self.absolute_text)
        return d


def compare_configurations(summaries: Sequence[ConfigSummary], baseline: str = "No filter") -> list[Comparison]:
    """Reduction factor and absolute reduction of every configuration against ``baseline``."""
    base = {s.material: s for s in summaries if s.configuration == baseline}
    out = []
    for material in dict.fromkeys(s.material for s in summaries):
        if material not in base:
            raise KeyError(f"baseline {baseline!r} missing for {material}")
        b = base[material]
        for s in summaries:
            if s.material != material or s.configuration == baseline:
                continue
            out.append(Comparison(material, s.configuration, baseline,
                                  b.mean_rate / s.mean_rate, b.mean_rate - s.mean_rate))
    return out


def format_factor(x: float) -> str:
    """One decimal below 50, integer above."""
    return f"{x:.0f}" if x >= 50 else f"{x:.1f}"


def format_khz(hz: float) -> str:
    """Kilohertz with one decimal from 1 kHz up, two below."""
    khz = hz / 1e3
    return f"{khz:.1f}" if abs(khz) >= 1 else f"{khz:.2f}"


def format_table_value(mean: float, spread: float, exponent: Optional[int] = None) -> str:
    """``10^e x (m +- s)`` with two decimals; ``e`` defaults to ``max(2, floor(log10(mean)))``."""
    if exponent is None:
        exponent = max(2, int(math.floor(math.log10(mean))))
    scale = 10.0 ** exponent
    return f"10^{exponent} x ({mean / scale:.2f} +- {spread / scale:.2f})"


# -- time correction --------------------------------------------------------------------

def _decay_exponent(decay) -> float:
    if isinstance(decay, PowerLawFit):
        return decay.decay_exponent
    return float(decay)


def time_correct_records(records: Sequence[MeasurementRecord],
                         decay: Mapping[str, Union[PowerLawFit, float]],
                         t_ref: float = 1.0) -> list[MeasurementRecord]:
    """Extrapolate each record to ``t_ref`` days along its material's decay law.

    ``decay`` maps material to a :class:`PowerLawFit` from
    :func:`~parityscope.fitkit.fit_time_decay` or directly to the decay
    exponent ``p`` in ``rate ~ t**(-p)``. Corrected records carry
    ``t_days = t_ref`` and keep the input record in ``original``.
    """
    if not t_ref > 0:
        raise ValueError("t_ref must be positive")
    out = []
    for r in records:
        if r.t_days <= 0:
            raise ValueError("t_days must be positive")
        if r.material not in decay:
            raise KeyError(f"no decay law for {r.material}")
        factor = (r.t_days / t_ref) ** _decay_exponent(decay[r.material])
        out.append(dataclasses.replace(r, gamma0=r.gamma0 * factor, gamma0_err=r.gamma0_err * factor,
                                       t_days=t_ref, original=r.original or r))
    return out


# -- T1 correlation ------------------------------------------------------------------------

def correlate_t1(pairs: Sequence[tuple[MeasurementRecord, float]]) -> dict[str, LinearFit]:
    """Regress relaxation rate (1/s) on tunneling rate (Hz) separately per material."""
    by_material: dict = {}
    for record, relaxation_rate in pairs:
        by_material.setdefault(record.material, []).append((record.gamma0, relaxation_rate))
    out = {}
    for material, pts in by_material.items():
        if len(pts) < 3:
            raise ValueError(f"{material}: need at least 3 paired points, got {len(pts)}")
        x, y = zip(*pts)
        out[material] = linear_regression(x, y)
    return out


# -- synthetic campaigns ----------------------------------------------------------------------

@dataclass
class CampaignPlan:
    """What to sweep.

    ``kind`` selects the ground truth for each point:

    * ``"power"``: ``values`` are radiator powers in W (or currents in A when
      ``values_are_currents``), rates from the quasiparticle model;
    * ``"time"``: ``values`` are days since cooldown, rates
      ``decay_rate_1day * t**(-decay_exponent)``;
    * ``"configuration"``: ``labels`` name configurations and ``values`` are
      their prescribed rates in Hz.
    """

    kind: str
    values: Sequence[float]
    labels: Optional[Sequence[str]] = None
    material: str = "Nb"
    configuration: str = "synthetic"
    device: str = "S"
    qubit: str = "1"
    values_are_currents: bool = False
    decay_rate_1day: float = 93.0
    decay_exponent: float = 0.5
    t_days: float = 1.0
    n_traces: int = 10
    trace_duration: float = 1.0
    n_lorentzians: int = 3

    def __post_init__(self):
        if self.kind not in ("power", "time", "configuration"):
            raise ValueError(f"unknown plan kind {self.kind!r}")
        if len(self.values) == 0:
            raise ValueError("plan has no points")
        if self.kind == "configuration" and (self.labels is None or len(self.labels) != len(self.values)):
            raise ValueError("configuration plans need one label per value")
        if self.n_traces < 1 or not self.trace_duration > 0:
            raise ValueError("n_traces must be >= 1 and trace_duration > 0")


@dataclass
class Physics:
    """Ground-truth rate model for power sweeps."""

    params: QpModelParams
    k_tunnel: float
    base_rate: float = 0.0
    radiator: RadiatorParams = field(default_factory=RadiatorParams)

    def rates(self, powers) -> np.ndarray:
        return predicted_rate_curve(powers, self.params, self.k_tunnel, self.base_rate)


@dataclass
class CampaignResult:
    records: list
    truth: list
    fit: Optional[object]
    closure: dict
    failures: list
    manifest: dict

    def to_json(self) -> dict:
        return {
            "records": [r.to_row() for r in self.records],
            "truth_hz": self.truth,
            "fit": self.fit.to_json() if self.fit is not None else None,
            "closure": self.closure,
            "failures": self.failures,
            "manifest": self.manifest,
        }


def _point_seed(master: int, index: int) -> int:
    ss = np.random.SeedSequence(entropy=int(master) % 2**64, spawn_key=(1000 + int(index),))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _truth(plan: CampaignPlan, physics: Optional[Physics]):
    vals = np.asarray(plan.values, dtype=float)
    if plan.kind == "power":
        if physics is None:
            raise ValueError("power plans need a physics model")
        powers = physics.radiator.power(vals) if plan.values_are_currents else vals
        return powers, physics.rates(powers)
    if plan.kind == "time":
        if np.any(vals <= 0):
            raise ValueError("time points must be positive")
        return vals, plan.decay_rate_1day * vals ** (-plan.decay_exponent)
    return vals, vals.copy()


def _run_point(index, rate, plan, sim, master_seed):
    n_shots = int(round(plan.trace_duration / sim.dt))
    cfg = dataclasses.replace(sim, gamma0=float(rate), n_shots=n_shots,
                              seed=_point_seed(master_seed, index))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        traces = simulate_traces(cfg, plan.n_traces, threads=1)
    spectrum = averaged_spectrum(traces)
    fit = fit_lorentzian_sum(spectrum, k=plan.n_lorentzians)
    return fit


def config_hash(payload: dict) -> str:
    blob = json.dumps(payload, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()


def run_synthetic_campaign(plan: CampaignPlan, sim: SimConfig, physics: Optional[Physics] = None,
                           seed: int = 0, threads: Optional[int] = None) -> CampaignResult:
    """Simulate, analyze and fit every plan point, then fit the sweep.

    Each point gets its own seed derived from ``seed`` and its index, so the
    outcome does not depend on ``threads``. Failed points are recorded in
    ``failures`` and skipped.
    """
    xs, truth = _truth(plan, physics)
    n_workers = threads or int(os.environ.get("PARITYSCOPE_THREADS", "0") or 0) or (os.cpu_count() or 1)
    n_workers = max(1, min(n_workers, len(xs)))

    def work(i):
        try:
            return i, _run_point(i, truth[i], plan, sim, seed), None
        except Exception as exc:  # per-point failures do not stop the campaign
            logger.warning("campaign point %d failed: %s", i, exc)
            return i, None, f"{type(exc).__name__}: {exc}"

    if n_workers == 1:
        results = [work(i) for i in range(len(xs))]
    else:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(work, range(len(xs))))

    records, failures, fitted_x, fitted_rates, fitted_errs, point_json = [], [], [], [], [], []
    for i, fit, err in results:
        if fit is None:
            failures.append({"index": i, "error": err})
            continue
        label = plan.labels[i] if plan.kind == "configuration" else plan.configuration
        t_days = float(xs[i]) if plan.kind == "time" else plan.t_days
        err_hz = fit.rate_error if math.isfinite(fit.rate_error) else 0.0
        records.append(MeasurementRecord(plan.material, label, fit.rate, err_hz,
                                         plan.device, plan.qubit, t_days))
        fitted_x.append(float(xs[i]))
        fitted_rates.append(fit.rate)
        fitted_errs.append(err_hz)
        point_json.append({"index": i, "x": float(xs[i]), "truth_hz": float(truth[i]),
                           "rate_hz": fit.rate, "rate_err_hz": err_hz,
                           "relative_error": fit.rate / float(truth[i]) - 1.0})

    sweep_fit = None
    closure: dict = {"points": point_json}
    # per-point fit errors weight the sweep fit when every point has one
    errs = fitted_errs if fitted_errs and min(fitted_errs) > 0 else None
    try:
        if plan.kind == "power" and len(fitted_x) >= 4:
            sweep_fit = fit_power_law(fitted_x, fitted_rates, errs)
            reference = fit_power_law(xs, truth)
            closure["parameters"] = _closure(sweep_fit, reference)
        elif plan.kind == "time" and len(fitted_x) >= 3:
            sweep_fit = fit_time_decay(fitted_x, fitted_rates, errs)
            reference = PowerLawFit(0.0, plan.decay_rate_1day, -plan.decay_exponent, {})
            closure["parameters"] = _closure(sweep_fit, reference)
    except Exception as exc:
        failures.append({"index": None, "error": f"sweep fit: {type(exc).__name__}: {exc}"})

    payload = {"plan": dataclasses.asdict(plan), "sim": sim.to_dict(), "seed": seed,
               "physics": dataclasses.asdict(physics) if physics is not None else None}
    manifest = {"config_hash": config_hash(payload), "seed": seed,
                "versions": campaign_versions()}
    return CampaignResult(records=records, truth=[float(t) for t in truth], fit=sweep_fit,
                          closure=closure, failures=failures, manifest=manifest)


def _closure(fit: PowerLawFit, reference: PowerLawFit) -> dict:
    out = {}
    for name in ("base", "amplitude", "exponent"):
        value = getattr(fit, name)
        truth = getattr(reference, name)
        sigma = float(fit.uncertainties.get(name, float("nan")))
        if name == "base" and truth == 0 and value == 0:
            continue
        z = (value - truth) / sigma if sigma and math.isfinite(sigma) and sigma > 0 else float("nan")
        out[name] = {"fitted": value, "truth": truth, "sigma": sigma, "z": z,
                     "within_2sigma": bool(abs(z) <= 2) if math.isfinite(z) else False}
    return out


def campaign_versions() -> dict:
    import scipy

    return {"parityscope": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "kernel_backend": BACKEND}
