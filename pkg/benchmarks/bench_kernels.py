"""Compare the compiled and pure-Python restless-chain kernels.

    python3 benchmarks/bench_kernels.py [--shots N] [--repeat R]

Both kernels run on identical pre-sampled event arrays; the script checks
that their outputs agree and reports the best-of-R wall time for each.
"""

import argparse
import importlib
import time

import numpy as np

from parityscope.paritysim import SimConfig, _sample_events, trace_rng


def _events(n_shots, seed=0):
    cfg = SimConfig(gamma0=460.0, t1=20e-6, t2=10e-6, readout_error=0.02, n_shots=n_shots, seed=seed)
    return _sample_events(cfg, n_shots, trace_rng(seed, 0))


def _best_time(func, events, repeat):
    best, out = float("inf"), None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = func(*events)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--shots", type=int, default=500_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    events = _events(args.shots)
    py = importlib.import_module("parityscope._kernels._chain_py")
    t_py, out_py = _best_time(py.run_chain, events, args.repeat)
    print(f"python  {args.shots:>9d} shots  {t_py * 1e3:9.2f} ms  {args.shots / t_py / 1e6:8.3f} Mshot/s")
    try:
        cy = importlib.import_module("parityscope._kernels._chain")
    except ImportError:
        print("cython  extension not built; skipped")
        return 0
    t_cy, out_cy = _best_time(cy.run_chain, events, args.repeat)
    print(f"cython  {args.shots:>9d} shots  {t_cy * 1e3:9.2f} ms  {args.shots / t_cy / 1e6:8.3f} Mshot/s")
    same = all(np.array_equal(a, b) for a, b in zip(out_py, out_cy))
    print(f"speedup {t_py / t_cy:.1f}x, outputs identical: {same}")
    return 0 if same else 1


if __name__ == "__main__":
    raise SystemExit(main())
