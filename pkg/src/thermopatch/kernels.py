"""Loop-shaped numeric kernels with a numba path and a pure-numpy path.

The numba path is used when numba imports and the environment variable
``THERMOPATCH_NUMBA`` is not set to ``0``.  Both paths return identical
results up to floating-point summation order.
"""

from __future__ import annotations

import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

USE_NUMBA = numba is not None and os.environ.get("THERMOPATCH_NUMBA", "1") != "0"


def _ptrace_numpy(rho4: np.ndarray) -> np.ndarray:
    return np.einsum("itjt->ij", rho4)


def _probe_table_numpy(rho4: np.ndarray, probes_a: np.ndarray, probes_b: np.ndarray) -> np.ndarray:
    # rho4[a, b, a', b'];  tr[rho (P ⊗ Q)] = sum rho[a,b,a',b'] P[a',a] Q[b',b]
    return np.einsum("abcd,pca,qdb->pq", rho4, probes_a, probes_b, optimize=True)


if numba is not None:

    @numba.njit(cache=True)
    def _ptrace_jit(rho4):
        dk, dt = rho4.shape[0], rho4.shape[1]
        out = np.zeros((dk, dk), dtype=rho4.dtype)
        for i in range(dk):
            for j in range(dk):
                acc = rho4[i, 0, j, 0] * 0
                for t in range(dt):
                    acc += rho4[i, t, j, t]
                out[i, j] = acc
        return out

    @numba.njit(cache=True)
    def _probe_table_jit(rho4, probes_a, probes_b):
        da, db = rho4.shape[0], rho4.shape[1]
        na, nb = probes_a.shape[0], probes_b.shape[0]
        # contract the B legs first: half[q, a, a'] = sum_{b,b'} rho[a,b,a',b'] Q[b',b]
        half = np.zeros((nb, da, da), dtype=np.complex128)
        for q in range(nb):
            for a in range(da):
                for c in range(da):
                    acc = 0j
                    for b in range(db):
                        for d in range(db):
                            acc += rho4[a, b, c, d] * probes_b[q, d, b]
                    half[q, a, c] = acc
        out = np.zeros((na, nb), dtype=np.complex128)
        for p in range(na):
            for q in range(nb):
                acc = 0j
                for a in range(da):
                    for c in range(da):
                        acc += half[q, a, c] * probes_a[p, c, a]
                out[p, q] = acc
        return out


def partial_trace_kernel(rho4: np.ndarray, use_numba: bool | None = None) -> np.ndarray:
    """Trace the second leg pair of ``rho4[keep, traced, keep', traced']``."""
    jit = USE_NUMBA if use_numba is None else (use_numba and numba is not None)
    if jit:
        return _ptrace_jit(np.ascontiguousarray(rho4))
    return _ptrace_numpy(rho4)


def probe_table(rho4: np.ndarray, probes_a: np.ndarray, probes_b: np.ndarray,
                use_numba: bool | None = None) -> np.ndarray:
    """Expectation table ``E[p, q] = tr[rho (P_p ⊗ Q_q)]`` for a bipartite ``rho4``."""
    jit = USE_NUMBA if use_numba is None else (use_numba and numba is not None)
    if jit:
        return _probe_table_jit(
            np.ascontiguousarray(rho4, dtype=np.complex128),
            np.ascontiguousarray(probes_a, dtype=np.complex128),
            np.ascontiguousarray(probes_b, dtype=np.complex128),
        )
    return _probe_table_numpy(rho4, probes_a, probes_b)
