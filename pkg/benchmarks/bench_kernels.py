"""Compare the numba and pure-numpy paths of the loop kernels.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Prints one line per kernel and size with the best-of-``repeat`` wall time of
each path, their ratio and the largest absolute difference of the results.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from thermopatch.gibbs import pauli_strings
from thermopatch.kernels import numba, partial_trace_kernel, probe_table


def best_time(fn, repeat: int) -> float:
    fn()  # warm-up, includes compilation on the first numba call
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def random_state(d: int, rng: np.random.Generator) -> np.ndarray:
    g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if numba is None:
        print("numba is not installed; only the numpy path is available")
        return
    rng = np.random.default_rng(1)
    print(f"{'kernel':<14}{'size':<16}{'numpy [s]':>12}{'numba [s]':>12}{'ratio':>8}{'max diff':>12}")
    for keep, traced in ((2, 8), (5, 5), (8, 2), (6, 6)):
        rho = random_state(2 ** (keep + traced), rng).reshape(2**keep, 2**traced, 2**keep, 2**traced)
        a = partial_trace_kernel(rho, use_numba=False)
        b = partial_trace_kernel(rho, use_numba=True)
        tn = best_time(lambda: partial_trace_kernel(rho, use_numba=False), args.repeat)
        tj = best_time(lambda: partial_trace_kernel(rho, use_numba=True), args.repeat)
        print(f"{'partial_trace':<14}{f'{keep}+{traced} qubits':<16}{tn:>12.2e}{tj:>12.2e}{tn / tj:>8.2f}"
              f"{np.abs(a - b).max():>12.1e}")
    for na, nb in ((1, 1), (2, 2), (3, 3), (4, 4)):
        rho = random_state(2 ** (na + nb), rng).reshape(2**na, 2**nb, 2**na, 2**nb)
        pa = np.array([p for _, p in pauli_strings(na, 2)])
        pb = np.array([p for _, p in pauli_strings(nb, 2)])
        a = probe_table(rho, pa, pb, use_numba=False)
        b = probe_table(rho, pa, pb, use_numba=True)
        tn = best_time(lambda: probe_table(rho, pa, pb, use_numba=False), args.repeat)
        tj = best_time(lambda: probe_table(rho, pa, pb, use_numba=True), args.repeat)
        print(f"{'probe_table':<14}{f'{na}|{nb} qubits':<16}{tn:>12.2e}{tj:>12.2e}{tn / tj:>8.2f}"
              f"{np.abs(a - b).max():>12.1e}")


if __name__ == "__main__":
    main()
