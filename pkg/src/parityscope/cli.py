"""Command-line front end.

Usage::

    parityscope COMMAND [--config PATH] [--out DIR] [--seed N] [--format {json,csv}]

The config file is a JSON object whose keys are the parameters of the chosen
command (see :data:`COMMAND_HELP`). Every run writes ``result.json`` and a
``manifest.json`` listing all outputs with their sha256 hashes. Exit status
is 0 on success, 2 for usage or config errors and 1 for runtime failures.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import logging
import math
import sys
import warnings
from pathlib import Path
from typing import Any, Callable, Optional

import numpy as np

from . import __version__
from . import campaign as cp
from . import plots
from .errors import ParityscopeError, RecordValidationError
from .fitkit import (fit_lorentzian_sum, fit_power_law, fit_time_decay, fit_two_tone_ramsey,
                     linear_regression)
from .paritysim import (SimConfig, read_trace_binary, read_trace_csv, simulate_traces,
                        write_trace_binary, write_trace_csv)
from .qpmodel import QpModelParams, RadiatorParams, log_log_slope, predicted_rate_curve
from .spectral import averaged_spectrum, toggle_transform
from .transmon import TransmonParams, fraction_delta_f_below, parity_frequencies

logger = logging.getLogger("parityscope")

STOCHASTIC = {"simulate", "analyze", "campaign"}

COMMAND_HELP = {
    "spectrum": "even/odd transmon frequencies over offset charge "
                "(ej, ec [GHz], dim, n_grid_points, threshold_mhz)",
    "simulate": "restless parity traces (sim: SimConfig fields, n_traces, trace_format: binary|csv)",
    "analyze": "toggle transform, averaged PSD and Lorentzian fit "
               "(traces: [paths] or sim + n_traces; k, f_min, f_max)",
    "fit": "standalone fits (kind: power_law|time_decay|ramsey|linear; x, y; optional yerr for "
           "power_law and time_decay)",
    "physics": "radiator quasiparticle model rates (model: QpModelParams fields, k_tunnel, "
               "base_rate, powers or currents)",
    "campaign": "synthetic sweep (plan: CampaignPlan fields, sim, physics)",
    "ingest": "validate a records CSV (records: path)",
    "report": "configuration summary and reductions (records: path, default shipped data; "
              "baseline, grouping, weighted)",
}


class ConfigError(Exception):
    """Invalid configuration at ``path`` (dotted field name)."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


# -- config helpers ------------------------------------------------------------------------

def _get(params: dict, key: str, path: str, default: Any = ..., kind: Optional[type] = None):
    if key not in params:
        if default is ...:
            raise ConfigError(_join(path, key), "required")
        return default
    value = params[key]
    if kind is not None and value is not None:
        ok = isinstance(value, kind) and not (kind in (int, float) and isinstance(value, bool))
        if kind is float and isinstance(value, int) and not isinstance(value, bool):
            ok = True
        if not ok:
            raise ConfigError(_join(path, key), f"expected {kind.__name__}, got {type(value).__name__}")
    return value


def _join(path: str, key) -> str:
    return f"{path}.{key}" if path else str(key)


def _section(params: dict, key: str, path: str, default: Any = ...) -> dict:
    value = _get(params, key, path, default)
    if not isinstance(value, dict):
        raise ConfigError(_join(path, key), "expected an object")
    return value


def _build(cls, data: dict, path: str, **extra):
    """Instantiate dataclass ``cls`` from ``data``, mapping errors to a field path."""
    if not isinstance(data, dict):
        raise ConfigError(path, "expected an object")
    names = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in names:
            raise ConfigError(_join(path, key), "unknown field")
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            if cls is SimConfig:
                return SimConfig.from_dict({**data, **extra})
            return cls(**data, **extra)
    except (TypeError, ValueError) as exc:
        msg = str(exc)
        for key in data:
            if msg.startswith(key) or f" {key} " in f" {msg} ":
                raise ConfigError(_join(path, key), msg) from None
        raise ConfigError(path, msg) from None


def _float_list(params: dict, key: str, path: str, default: Any = ...) -> np.ndarray:
    value = _get(params, key, path, default)
    if not isinstance(value, list) or not all(isinstance(v, (int, float)) and not isinstance(v, bool)
                                              for v in value):
        raise ConfigError(_join(path, key), "expected a list of numbers")
    return np.asarray(value, dtype=float)


def _finite(obj):
    """Replace non-finite floats by None so the JSON stays standard."""
    if isinstance(obj, dict):
        return {str(k): _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _finite(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps(obj) -> str:
    return json.dumps(_finite(obj), sort_keys=True, indent=2) + "\n"


# -- outputs -----------------------------------------------------------------------------

class Outputs:
    """Tracks files written during a run for the manifest."""

    def __init__(self, out_dir: Path, fmt: str):
        self.dir = out_dir
        self.fmt = fmt
        self.files: list[tuple[str, bool]] = []

    def path(self, name: str, plot: bool = False) -> Path:
        self.files.append((name, plot))
        return self.dir / name

    def write_text(self, name: str, text: str) -> Path:
        p = self.path(name)
        p.write_text(text)
        return p

    def table(self, stem: str, columns: list[str], rows: list[list], extra_json=None) -> Path:
        if self.fmt == "csv":
            p = self.path(f"{stem}.csv")
            with open(p, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(columns)
                for row in rows:
                    w.writerow([repr(v) if isinstance(v, float) else v for v in row])
            return p
        doc = {"columns": columns, "rows": rows}
        if extra_json:
            doc.update(extra_json)
        return self.write_text(f"{stem}.json", dumps(doc))

    def plot(self, name: str, func: Callable, *args) -> Optional[str]:
        """Render a plot; failures are logged and do not affect the analysis."""
        target = self.dir / name
        try:
            func(*args, target)
        except Exception as exc:  # plots are best effort
            logger.warning("plot %s skipped: %s", name, exc)
            return None
        self.files.append((name, True))
        return name

    def manifest(self, command: str, seed, config: dict) -> dict:
        entries = []
        run_hash = hashlib.sha256()
        for name, is_plot in self.files:
            digest = hashlib.sha256((self.dir / name).read_bytes()).hexdigest()
            entries.append({"file": name, "sha256": digest, "plot": is_plot})
            if not is_plot:
                run_hash.update(f"{name}:{digest}\n".encode())
        return {"command": command, "seed": seed, "parityscope_version": __version__,
                "config_sha256": cp.config_hash(config), "files": entries,
                "run_sha256": run_hash.hexdigest()}


# -- commands -------------------------------------------------------------------------------

def cmd_spectrum(params, seed, out: Outputs) -> dict:
    tp = _build(TransmonParams, {k: params[k] for k in ("ej", "ec", "dim") if k in params}, "")
    n_grid = _get(params, "n_grid_points", "", 256, int)
    threshold = _get(params, "threshold_mhz", "", 0.5, float)
    if n_grid < 32:
        raise ConfigError("n_grid_points", "must be >= 32")
    spec = parity_frequencies(tp, n_grid)
    frac = fraction_delta_f_below(spec, threshold)
    out.table("parity_spectrum", ["ng", "f_even_ghz", "f_odd_ghz", "delta_f_mhz"],
              [list(r) for r in zip(spec.ng_grid.tolist(), spec.f_even.tolist(), spec.f_odd.tolist(),
                                    spec.delta_f.tolist())])
    return {"ej_ghz": tp.ej, "ec_ghz": tp.ec, "dispersion_mhz": spec.dispersion,
            "threshold_mhz": threshold, "fraction_delta_f_below": frac}


def _sim_config(params, seed, path="sim"):
    return _build(SimConfig, _section(params, "sim", ""), path, **({"seed": seed} if seed is not None else {}))


def cmd_simulate(params, seed, out: Outputs) -> dict:
    cfg = _sim_config(params, seed)
    n_traces = _get(params, "n_traces", "", 1, int)
    fmt = _get(params, "trace_format", "", "binary", str)
    if n_traces < 1:
        raise ConfigError("n_traces", "must be >= 1")
    if fmt not in ("binary", "csv"):
        raise ConfigError("trace_format", "must be 'binary' or 'csv'")
    traces = simulate_traces(cfg, n_traces)
    summary = []
    for i, tr in enumerate(traces):
        name = f"trace_{i:03d}." + ("pstr" if fmt == "binary" else "csv")
        (write_trace_binary if fmt == "binary" else write_trace_csv)(tr, out.path(name))
        d = toggle_transform(tr).d
        summary.append({"file": name, "n_shots": len(tr), "toggle_fraction": float(d.mean()),
                        "hidden_flips": tr.flip_count() if tr.true_parity is not None else None})
    out.plot("trace.svg", plots.plot_trace, traces[0])
    return {"sim": cfg.to_dict(), "traces": summary}


def cmd_analyze(params, seed, out: Outputs) -> dict:
    if "traces" in params:
        paths = _get(params, "traces", "", kind=list)
        if not paths:
            raise ConfigError("traces", "empty list")
        traces = []
        for i, p in enumerate(paths):
            if not isinstance(p, str):
                raise ConfigError(f"traces.{i}", "expected a path")
            if not Path(p).exists():
                raise ConfigError(f"traces.{i}", f"no such file {p}")
            traces.append(read_trace_csv(p) if p.endswith(".csv") else read_trace_binary(p))
        source = {"traces": paths}
    else:
        cfg = _sim_config(params, seed)
        n_traces = _get(params, "n_traces", "", 10, int)
        if n_traces < 1:
            raise ConfigError("n_traces", "must be >= 1")
        traces = simulate_traces(cfg, n_traces)
        source = {"sim": cfg.to_dict(), "n_traces": n_traces}
    k = _get(params, "k", "", 3, int)
    if not 1 <= k <= 4:
        raise ConfigError("k", "must be between 1 and 4")
    spectrum = averaged_spectrum(traces)
    fit = fit_lorentzian_sum(spectrum, k=k, f_min=_get(params, "f_min", "", None, float),
                             f_max=_get(params, "f_max", "", None, float))
    out.table("spectrum", ["freq_hz", "psd"], [[f, p] for f, p in zip(spectrum.freqs.tolist(),
                                                                       spectrum.psd.tolist())],
              {"duration_s": spectrum.duration, "n_averaged": spectrum.n_averaged})
    out.plot("trace.svg", plots.plot_trace, traces[0])
    out.plot("psd.svg", plots.plot_psd, spectrum, fit)
    return {"source": source, "fit": fit.to_json(), "rate_hz": fit.rate, "rate_err_hz": fit.rate_error}


def cmd_fit(params, seed, out: Outputs) -> dict:
    kind = _get(params, "kind", "", kind=str)
    x = _float_list(params, "x", "")
    y = _float_list(params, "y", "")
    if len(x) != len(y):
        raise ConfigError("y", "length differs from x")
    yerr = _float_list(params, "yerr", "") if "yerr" in params else None
    if yerr is not None and (len(yerr) != len(y) or np.any(yerr <= 0)):
        raise ConfigError("yerr", "must be positive and match y in length")
    if yerr is not None and kind not in ("power_law", "time_decay"):
        raise ConfigError("yerr", f"not supported for {kind!r} fits")
    series = {"data": {"x": x, "y": y, "yerr": yerr}}
    if kind == "power_law":
        fit = series["data"]["fit"] = fit_power_law(x, y, yerr)
        out.plot("rate_vs_power.svg", plots.plot_rate_vs_power, series)
    elif kind == "time_decay":
        fit = series["data"]["fit"] = fit_time_decay(x, y, yerr)
        out.plot("rate_vs_time.svg", plots.plot_rate_vs_time, series)
    elif kind == "ramsey":
        fit = fit_two_tone_ramsey(x, y)
    elif kind == "linear":
        fit = linear_regression(x, y)
    else:
        raise ConfigError("kind", f"unknown fit kind {kind!r}")
    return {"kind": kind, "fit": fit.to_json()}


def _physics(params: dict, path: str) -> cp.Physics:
    model = _build(QpModelParams, _section(params, "model", path), _join(path, "model"))
    radiator = _build(RadiatorParams, _section(params, "radiator", path, {}), _join(path, "radiator"))
    k_tunnel = _get(params, "k_tunnel", path, kind=float)
    base = _get(params, "base_rate", path, 0.0, float)
    if not k_tunnel > 0:
        raise ConfigError(_join(path, "k_tunnel"), "must be positive")
    if base < 0:
        raise ConfigError(_join(path, "base_rate"), "must be >= 0")
    return cp.Physics(model, float(k_tunnel), float(base), radiator)


def cmd_physics(params, seed, out: Outputs) -> dict:
    phys = _physics(params, "")
    if "currents" in params:
        currents = _float_list(params, "currents", "")
        powers = phys.radiator.power(currents)
    else:
        powers = _float_list(params, "powers", "")
    if np.any(powers < 0):
        raise ConfigError("powers", "must be >= 0")
    rates = predicted_rate_curve(powers, phys.params, phys.k_tunnel, phys.base_rate)
    pos = powers > 0
    slope = log_log_slope(powers[pos], rates[pos], phys.base_rate) if pos.sum() >= 2 else None
    out.table("rate_curve", ["power_w", "rate_hz"], [[p, r] for p, r in zip(powers.tolist(), rates.tolist())])
    return {"powers_w": powers, "rates_hz": rates, "log_log_slope": slope}


def cmd_campaign(params, seed, out: Outputs) -> dict:
    plan = _build(cp.CampaignPlan, _section(params, "plan", ""), "plan")
    sim = _sim_config(params, None)
    physics = _physics(_section(params, "physics", ""), "physics") if "physics" in params else None
    if plan.kind == "power" and physics is None:
        raise ConfigError("physics", "required for power plans")
    result = cp.run_synthetic_campaign(plan, sim, physics, seed=seed)
    rows = [[r.material, r.configuration, r.gamma0, r.gamma0_err, r.device, r.qubit, r.t_days]
            for r in result.records]
    if out.fmt == "csv":
        cp.write_records_csv(result.records, out.path("records.csv"))
    else:
        out.table("records", list(cp.RECORD_FIELDS), rows)
    series = plots.records_series(result.records, "t_days")
    if plan.kind == "power":
        xs = [p["x"] for p in result.closure["points"]]
        if plan.values_are_currents:
            xs = physics.radiator.power(np.asarray(xs)).tolist()
        for s in series.values():
            s["x"] = xs
            s["fit"] = result.fit
        out.plot("rate_vs_power.svg", plots.plot_rate_vs_power, series)
    elif plan.kind == "time":
        for s in series.values():
            s["fit"] = result.fit
        out.plot("rate_vs_time.svg", plots.plot_rate_vs_time, series)
    doc = result.to_json()
    doc.pop("records")
    return doc


def _load_records(params, default_reference: bool):
    if "records" in params:
        path = _get(params, "records", "", kind=str)
        if not Path(path).exists():
            raise ConfigError("records", f"no such file {path}")
        return cp.ingest_records(path), path
    if default_reference:
        return cp.load_reference_records(), "reference"
    raise ConfigError("records", "required")


def cmd_ingest(params, seed, out: Outputs) -> dict:
    records, source = _load_records(params, default_reference=False)
    counts: dict = {}
    for r in records:
        counts[r.material] = counts.get(r.material, 0) + 1
    out.table("records", list(cp.RECORD_FIELDS), [list(r.to_row().values()) for r in records])
    return {"source": source, "n_records": len(records), "per_material": counts}


def cmd_report(params, seed, out: Outputs) -> dict:
    records, source = _load_records(params, default_reference=True)
    grouping = _get(params, "grouping", "", "table", str)
    if grouping not in ("table", "raw"):
        raise ConfigError("grouping", "must be 'table' or 'raw'")
    weighted = _get(params, "weighted", "", False, bool)
    baseline = _get(params, "baseline", "", "No filter", str)
    summaries = cp.summarize_configurations(records, grouping=grouping, weighted=weighted)
    try:
        comparisons = cp.compare_configurations(summaries, baseline)
    except KeyError as exc:
        raise ConfigError("baseline", str(exc).strip("'\"")) from None
    out.table("summary", ["material", "configuration", "mean_hz", "spread_hz", "n", "table_value"],
              [[s.material, s.configuration, s.mean_rate, s.spread, s.n,
                cp.format_table_value(s.mean_rate, s.spread)] for s in summaries])
    out.table("reductions", ["material", "configuration", "factor", "absolute_hz", "factor_text",
                             "absolute_khz_text"],
              [[c.material, c.configuration, c.factor, c.absolute_hz, c.factor_text, c.absolute_text]
               for c in comparisons])
    return {"source": source, "grouping": grouping, "weighted": weighted, "baseline": baseline,
            "summaries": [s.to_json() for s in summaries],
            "comparisons": [c.to_json() for c in comparisons]}


COMMANDS = {
    "spectrum": cmd_spectrum, "simulate": cmd_simulate, "analyze": cmd_analyze, "fit": cmd_fit,
    "physics": cmd_physics, "campaign": cmd_campaign, "ingest": cmd_ingest, "report": cmd_report,
}


# -- entry point ------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="parityscope", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)
    for name, help_text in COMMAND_HELP.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", type=Path, help="JSON parameter document")
        p.add_argument("--out", type=Path, default=Path("parityscope-out"), help="output directory")
        p.add_argument("--seed", type=int, help="master seed (overrides config 'seed')")
        p.add_argument("--format", choices=("json", "csv"), default="json", help="tabular output format")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def _read_config(path: Optional[Path]) -> dict:
    if path is None:
        return {}
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError("--config", f"no such file {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("--config", f"invalid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("", "config must be a JSON object")
    return doc


def run(command: str, config: dict, out_dir: Path, seed: Optional[int] = None, fmt: str = "json") -> dict:
    """Execute ``command`` and write its artifacts; returns the manifest."""
    if command not in COMMANDS:
        raise ConfigError("command", f"unknown command {command!r}")
    params = dict(config)
    cfg_seed = params.pop("seed", None)
    if cfg_seed is not None and (not isinstance(cfg_seed, int) or isinstance(cfg_seed, bool)):
        raise ConfigError("seed", "expected an integer")
    seed = seed if seed is not None else cfg_seed
    # analyze on recorded traces draws no random numbers
    stochastic = command in STOCHASTIC and not (command == "analyze" and "traces" in params)
    if stochastic and seed is None:
        raise ConfigError("seed", "required for stochastic commands (--seed or config 'seed')")
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        probe = out_dir / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigError("--out", f"not writable: {exc}") from None
    out = Outputs(out_dir, fmt)
    result = COMMANDS[command](params, seed, out)
    out.write_text("result.json", dumps({"command": command, "seed": seed, "result": result}))
    manifest = out.manifest(command, seed, {"command": command, "config": config, "seed": seed,
                                            "format": fmt})
    (out_dir / "manifest.json").write_text(dumps(manifest))
    return manifest


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = _read_config(args.config)
        manifest = run(args.command, config, args.out, args.seed, args.format)
    except ConfigError as exc:
        print(f"parityscope: invalid config: {exc}", file=sys.stderr)
        return 2
    except RecordValidationError as exc:
        print(f"parityscope: {exc}", file=sys.stderr)
        return 1
    except (ParityscopeError, ValueError, OSError, RuntimeError) as exc:
        print(f"parityscope: {args.command} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    print(json.dumps({"out": str(args.out), "run_sha256": manifest["run_sha256"]}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
