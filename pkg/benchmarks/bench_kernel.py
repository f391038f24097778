"""Wall-clock comparison of the compiled kernel and the numpy fallback.

    python3 benchmarks/bench_kernel.py [--grid 10x10] [--steps 20] [--workers 1 4]

Both backends run the same seeded input sequence; the script checks that
their state matrices are bit-identical before reporting timings.
"""

import argparse
import time

import numpy as np

from tdreservoir import BACKENDS, GridTopology, Reservoir, ReservoirConfig
from tdreservoir.tasks import gen_binary_sequence


def timed(cfg, u, backend, workers, repeats):
    best, X = float("inf"), None
    for _ in range(repeats):
        res = Reservoir(cfg, backend=backend, workers=workers)
        t0 = time.perf_counter()
        X = res.run_sequence(u)
        best = min(best, time.perf_counter() - t0)
    return best, X


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--grid", default="10x10")
    ap.add_argument("--steps", type=int, default=20, help="input steps (3000 micro-steps each)")
    ap.add_argument("--workers", type=int, nargs="+", default=[1])
    ap.add_argument("--repeats", type=int, default=3)
    a = ap.parse_args(argv)
    rows, cols = map(int, a.grid.lower().split("x"))
    cfg = ReservoirConfig(topology=GridTopology(rows, cols), seed=1)
    u = gen_binary_sequence(a.steps, 1).astype(np.float64)
    micro = a.steps * cfg.n_micro * cfg.n_neurons

    results = {}
    ref_t, ref_X = timed(cfg, u, "python", 1, a.repeats)
    results[("python", 1)] = ref_t
    if "compiled" in BACKENDS:
        for w in a.workers:
            t, X = timed(cfg, u, "compiled", w, a.repeats)
            if not np.array_equal(X, ref_X):
                raise SystemExit(f"compiled backend (workers={w}) disagrees with the python backend")
            results[("compiled", w)] = t
    else:
        print("compiled backend not built; timing the python backend only")

    print(f"grid {rows}x{cols}, {a.steps} input steps, {micro:,} neuron-updates")
    print(f"{'backend':<10}{'workers':>8}{'seconds':>10}{'Mupd/s':>10}{'speedup':>9}")
    for (name, w), t in results.items():
        print(f"{name:<10}{w:>8}{t:>10.3f}{micro / t / 1e6:>10.1f}{ref_t / t:>9.1f}")


if __name__ == "__main__":
    main()
