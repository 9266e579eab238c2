"""Time the compiled kernels against the numpy reference path.

Runs a few registry experiments on both backends at a common horizon,
reports wall time, steps/second, speedup, and the worst relative
disagreement of the parameter trajectories (the backends share the same
noise addresses, so trajectories agree to roughly float ulp scale).

Usage: python3 benchmarks/compare_backends.py [--t-end 50] [--seed 0]
"""

import argparse
import time

import numpy as np

from sdecal.backend import HAS_NUMBA
from sdecal.experiments import get_entry, run_experiment

CASES = ["ou-mean", "cubic-drift-vol", "multi-ou-independent",
         "mean-field", "autocov"]


def time_run(name: str, backend: str, t_end: float, seed: int):
    t0 = time.perf_counter()
    record, _ = run_experiment(name, seed=seed, t_end=t_end,
                               backend=backend, check=False)
    return time.perf_counter() - t0, record


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--t-end", type=float, default=50.0)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    if not HAS_NUMBA:
        raise SystemExit("numba is not importable; nothing to compare")

    print(f"{'experiment':24s} {'numba':>9s} {'numpy':>9s} "
          f"{'speedup':>8s} {'steps/s (numba)':>16s} {'max rel diff':>13s}")
    for name in CASES:
        entry = get_entry(name)
        n = entry.config(**entry.model_params).n_particles
        # warm pass compiles the kernel so the timed pass measures steady state
        run_experiment(name, seed=args.seed, t_end=1.0, backend="numba",
                       check=False)
        t_nb, rec_nb = time_run(name, "numba", args.t_end, args.seed)
        t_np, rec_np = time_run(name, "numpy", args.t_end, args.seed)
        scale = np.maximum(np.max(np.abs(rec_np.thetas), axis=0), 1.0)
        diff = np.max(np.abs(rec_nb.thetas - rec_np.thetas) / scale)
        steps = rec_nb.n_steps * n
        print(f"{name:24s} {t_nb:8.3f}s {t_np:8.3f}s "
              f"{t_np / t_nb:7.1f}x {steps / t_nb:15.3g} {diff:13.3g}")


if __name__ == "__main__":
    main()
