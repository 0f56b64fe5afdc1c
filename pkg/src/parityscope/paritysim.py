"""Restless charge-parity measurement simulator.

Each cycle of the protocol maps the hidden charge parity onto the qubit:
even parity toggles the qubit between ``|0>`` and ``|1>``, odd parity leaves
it untouched. Tunneling, relaxation, dephasing, gate and readout errors are
drawn once per cycle with probability ``1 - exp(-rate * dt)`` and applied in
that order by the Markov kernel in :mod:`parityscope._kernels`.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import struct
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ._kernels import run_chain
from .errors import UnusableOffsetChargeError

logger = logging.getLogger(__name__)

_MAGIC = b"PSTR"
_VERSION = 1
_HERALD_MARGIN = 4096


@dataclass(frozen=True)
class SimConfig:
    """Parameters of one simulated restless parity measurement.

    Times are in seconds and rates in Hz. ``t1`` or ``t2`` may be ``inf`` to
    switch the channel off.
    """

    gamma0: float
    t1: float = math.inf
    t2: float = math.inf
    readout_error: float = 0.0
    dt: float = 1.5e-6
    n_shots: int = 500_000
    seed: int = 0
    gate_error: float = 0.0
    gate_error_modulation: Optional[tuple[float, float]] = None
    heralded: bool = False
    start_parity: str = "even"

    def __post_init__(self):
        if not math.isfinite(self.gamma0) or self.gamma0 < 0:
            raise ValueError(f"gamma0 must be finite and >= 0, got {self.gamma0}")
        for name in ("t1", "t2"):
            value = getattr(self, name)
            if not value > 0:
                raise ValueError(f"{name} must be > 0, got {value}")
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ValueError(f"dt must be finite and > 0, got {self.dt}")
        if int(self.n_shots) != self.n_shots or self.n_shots < 2:
            raise ValueError(f"n_shots must be an integer >= 2, got {self.n_shots}")
        if not math.isfinite(self.n_shots * self.dt):
            raise ValueError("n_shots * dt overflows the representable duration")
        for name in ("readout_error", "gate_error"):
            value = getattr(self, name)
            if not 0.0 <= value < 1.0:
                raise ValueError(f"{name} must lie in [0, 1), got {value}")
        if self.gate_error_modulation is not None:
            depth, rate = self.gate_error_modulation
            if not 0.0 <= depth <= 1.0 or not rate > 0:
                raise ValueError("gate_error_modulation needs depth in [0, 1] and rate > 0")
            object.__setattr__(self, "gate_error_modulation", (float(depth), float(rate)))
        if self.start_parity not in ("even", "odd", "random"):
            raise ValueError(f"start_parity must be even, odd or random, got {self.start_parity!r}")
        if not -(2**63) <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in 64 bits")
        if self.gamma0 * self.dt > 0.1:
            warnings.warn(
                f"gamma0*dt = {self.gamma0 * self.dt:.3g} is not small; "
                "the per-cycle event model coarsens",
                RuntimeWarning,
                stacklevel=3,
            )

    @property
    def duration(self) -> float:
        return self.n_shots * self.dt

    def to_dict(self) -> dict:
        d = asdict(self)
        for name in ("t1", "t2"):
            if math.isinf(d[name]):
                d[name] = None
        if d["gate_error_modulation"] is not None:
            d["gate_error_modulation"] = list(d["gate_error_modulation"])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        d = dict(d)
        for name in ("t1", "t2"):
            if d.get(name) is None and name in d:
                d[name] = math.inf
        if d.get("gate_error_modulation") is not None:
            d["gate_error_modulation"] = tuple(d["gate_error_modulation"])
        return cls(**d)


@dataclass
class ParityTrace:
    """Assigned qubit states ``m`` from one restless run."""

    m: np.ndarray
    dt: float
    true_parity: Optional[np.ndarray] = None
    meta: Optional[SimConfig] = None

    def __post_init__(self):
        self.m = np.asarray(self.m, dtype=np.uint8)
        if self.m.ndim != 1:
            raise ValueError("m must be one-dimensional")
        if np.any(self.m > 1):
            raise ValueError("m must be binary")
        if self.true_parity is not None:
            self.true_parity = np.asarray(self.true_parity, dtype=np.uint8)
            if self.true_parity.shape != self.m.shape:
                raise ValueError("true_parity must match m in length")

    def __len__(self):
        return len(self.m)

    @property
    def duration(self) -> float:
        return len(self.m) * self.dt

    def flip_count(self) -> int:
        """Number of hidden parity flips (needs ``true_parity``)."""
        if self.true_parity is None:
            raise ValueError("trace has no hidden parity record")
        return int(np.count_nonzero(np.diff(self.true_parity)))


def _cycle_probability(rate: float, dt: float) -> float:
    if rate <= 0:
        return 0.0
    return -math.expm1(-rate * dt)


def trace_rng(seed: int, trace_index: int = 0) -> np.random.Generator:
    """Independent generator for trace ``trace_index`` of a run seeded with ``seed``."""
    ss = np.random.SeedSequence(entropy=int(seed) % 2**64, spawn_key=(int(trace_index),))
    return np.random.default_rng(ss)


def _sample_events(config: SimConfig, n: int, rng: np.random.Generator):
    dt = config.dt
    p_tun = _cycle_probability(config.gamma0, dt)
    p_dec = _cycle_probability(1.0 / config.t1, dt)
    p_deph = _cycle_probability(1.0 / config.t2, dt)

    u = rng.random((4, n))
    tunnel = (u[0] < p_tun).view(np.uint8)
    decay = (u[1] < p_dec).view(np.uint8)
    dephase = (u[2] < p_deph).view(np.uint8)
    readout = (u[3] < config.readout_error).view(np.uint8)
    dephase_bit = rng.integers(0, 2, size=n, dtype=np.uint8)

    if config.gate_error > 0:
        p_gate = np.full(n, config.gate_error)
        if config.gate_error_modulation is not None:
            depth, rate = config.gate_error_modulation
            t = np.arange(n) * dt
            p_gate *= 1.0 + depth * np.sin(2 * np.pi * rate * t)
            np.clip(p_gate, 0.0, 1.0, out=p_gate)
        gate = (rng.random(n) < p_gate).view(np.uint8)
    else:
        gate = np.zeros(n, dtype=np.uint8)
    return tunnel, decay, dephase, dephase_bit, gate, readout


def simulate_parity_trace(config: SimConfig, trace_index: int = 0) -> ParityTrace:
    """Simulate one restless parity trace.

    The result depends only on ``config`` and ``trace_index``.
    """
    rng = trace_rng(config.seed, trace_index)
    if config.start_parity == "random":
        parity0 = int(rng.integers(0, 2))
    else:
        parity0 = 0 if config.start_parity == "even" else 1

    n = config.n_shots + (_HERALD_MARGIN if config.heralded else 0)
    events = _sample_events(config, n, rng)
    m, parity = run_chain(*events, parity0=parity0, state0=0)

    if config.heralded:
        zeros = np.flatnonzero(m == 0)
        if len(zeros) == 0 or zeros[0] + 1 + config.n_shots > n:
            raise RuntimeError("heralding did not find a ground-state shot")
        start = zeros[0] + 1
        m = m[start:start + config.n_shots]
        parity = parity[start:start + config.n_shots]
    return ParityTrace(m=m, dt=config.dt, true_parity=parity, meta=config)


def _thread_count(requested: Optional[int] = None) -> int:
    cap = os.environ.get("PARITYSCOPE_THREADS")
    n = requested or os.cpu_count() or 1
    if cap:
        n = min(n, max(1, int(cap)))
    return max(1, n)


def simulate_traces(config: SimConfig, n_traces: int, threads: Optional[int] = None) -> list[ParityTrace]:
    """Simulate ``n_traces`` independent traces; order is by trace index."""
    if n_traces < 1:
        raise ValueError("n_traces must be >= 1")
    workers = min(_thread_count(threads), n_traces)
    if workers == 1:
        return [simulate_parity_trace(config, i) for i in range(n_traces)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda i: simulate_parity_trace(config, i), range(n_traces)))


# -- Ramsey calibration signal ------------------------------------------------

@dataclass
class RamseySignal:
    """Averaged two-tone Ramsey signal; times in us, frequencies in MHz."""

    times: np.ndarray
    signal: np.ndarray
    params: dict = field(default_factory=dict)


def synthesize_ramsey_signal(f_e: float, f_o: float, t2_star: float, times: Sequence[float],
                             noise_sd: float = 0.0, seed: int = 0, phase: float = 0.0,
                             amplitude: float = 1.0, offset: float = 0.0) -> RamseySignal:
    """Decaying two-tone cosine averaged over the two parities, plus white noise."""
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or len(times) < 2 or np.any(np.diff(times) <= 0):
        raise ValueError("times must be a strictly ascending 1-D grid")
    if not t2_star > 0:
        raise ValueError("t2_star must be positive")
    if noise_sd < 0:
        raise ValueError("noise_sd must be non-negative")
    envelope = amplitude * np.exp(-times / t2_star)
    s = envelope * 0.5 * (np.cos(2 * np.pi * f_e * times + phase)
                          + np.cos(2 * np.pi * f_o * times + phase)) + offset
    if noise_sd > 0:
        s = s + np.random.default_rng(seed).normal(0.0, noise_sd, size=len(times))
    params = dict(f_e=f_e, f_o=f_o, t2_star=t2_star, noise_sd=noise_sd, seed=seed,
                  phase=phase, amplitude=amplitude, offset=offset)
    return RamseySignal(times=times, signal=s, params=params)


def parity_wait_time(delta_f: float, floor: float = 0.5) -> float:
    """Wait between the two Ramsey pulses, in seconds, for splitting ``delta_f`` MHz.

    Raises :class:`UnusableOffsetChargeError` when ``delta_f`` is below ``floor``.
    """
    if not delta_f > 0:
        raise ValueError(f"delta_f must be positive, got {delta_f}")
    if delta_f < floor:
        raise UnusableOffsetChargeError(
            f"frequency splitting {delta_f} MHz is below the {floor} MHz floor")
    return 1.0 / (2.0 * delta_f * 1e6)


# -- serialization ------------------------------------------------------------

def write_trace_binary(trace: ParityTrace, path) -> None:
    """Write ``trace`` as: magic, version, header length, JSON header, shot count, packed bits."""
    header = {"dt": trace.dt}
    if trace.meta is not None:
        header["config"] = trace.meta.to_dict()
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<HI", _VERSION, len(blob)))
        fh.write(blob)
        fh.write(struct.pack("<Q", len(trace.m)))
        fh.write(np.packbits(trace.m).tobytes())


def read_trace_binary(path) -> ParityTrace:
    data = Path(path).read_bytes()
    if data[:4] != _MAGIC:
        raise ValueError(f"{path}: not a parity trace file")
    version, hlen = struct.unpack_from("<HI", data, 4)
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported trace format version {version}")
    pos = 10
    header = json.loads(data[pos:pos + hlen])
    pos += hlen
    (n,) = struct.unpack_from("<Q", data, pos)
    pos += 8
    bits = np.frombuffer(data, dtype=np.uint8, offset=pos)
    if len(bits) * 8 < n:
        raise ValueError(f"{path}: truncated bit array")
    m = np.unpackbits(bits)[:n]
    meta = SimConfig.from_dict(header["config"]) if "config" in header else None
    return ParityTrace(m=m, dt=header["dt"], meta=meta)


def write_trace_csv(trace: ParityTrace, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# dt={trace.dt!r}\n")
        w = csv.writer(fh)
        w.writerow(["shot_index", "m"])
        w.writerows(zip(range(len(trace.m)), trace.m.tolist()))


def read_trace_csv(path, dt: Optional[float] = None) -> ParityTrace:
    text = Path(path).read_text()
    lines = text.splitlines()
    if lines and lines[0].startswith("# dt="):
        dt = float(lines[0][5:]) if dt is None else dt
        lines = lines[1:]
    if dt is None:
        raise ValueError(f"{path}: dt not recorded; pass it explicitly")
    rows = list(csv.DictReader(io.StringIO("\n".join(lines))))
    m = np.array([int(r["m"]) for r in rows], dtype=np.uint8)
    return ParityTrace(m=m, dt=dt)
