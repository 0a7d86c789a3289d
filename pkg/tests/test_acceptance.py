"""Acceptance criteria, one test each, every one printing a PASS/FAIL line."""

import math
import time

import numpy as np
import pytest

from conftest import ghz
from test_schedule import exp_fit, oracle_levels
from thermopatch.bp import IDENTITY_TOL, bp_decay_profile
from thermopatch.circuit import build_plan, run_plan
from thermopatch.gibbs import (
    CMI_STATS,
    chain_pairs,
    clustering_profile,
    covariance,
    gibbs_state,
    local_indistinguishability,
    markov_profile,
    shielded_tripartition,
)
from thermopatch.hamiltonian import PAULI, build_model
from thermopatch.lattice import make_lattice
from thermopatch.operators import Operator, partial_trace
from thermopatch.recovery import petz_map, recovery_error, union_compose
from thermopatch.schedule import depth_schedule, strictly_local_depth


@pytest.fixture
def verdict(capsys):
    def emit(name, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} {name}: {detail}")
        assert ok, detail

    return emit


def chain(model, n=10, **params):
    return build_model(model, params, make_lattice([n]))


def test_criterion_1_commuting_exactness(verdict):
    start = time.perf_counter()
    H = chain("classical_ising")
    worst = {"delta": 0.0, "gamma": 0.0, "petz": 0.0}
    for beta in (0.3, 0.8):
        prof = markov_profile(H, beta, None, [[0], [4], [2, 3]], [1, 2, 3, 4])
        worst["delta"] = max(worst["delta"], prof.values.max())
        prof = bp_decay_profile(H, beta, range(5), [1, 2, 3])
        worst["gamma"] = max(worst["gamma"], prof.values.max())
        rho = gibbs_state(H, beta)
        for a, b in (([4, 5], [3, 6]), ([4, 5], [2, 3, 6, 7]), ([0], [1])):
            c = [s for s in range(10) if s not in a + b]
            R = petz_map(partial_trace(rho, sorted(a + b)), a, b)
            worst["petz"] = max(worst["petz"], recovery_error(rho, a, b, c, R).trace_distance)
    elapsed = time.perf_counter() - start
    ok = worst["delta"] <= 1e-10 and worst["gamma"] <= 1e-10 and worst["petz"] <= 1e-9 and elapsed < 30
    verdict("criterion 1 (commuting exactness)", ok,
            f"max delta {worst['delta']:.2e}, max gamma {worst['gamma']:.2e}, "
            f"max Petz error {worst['petz']:.2e}, {elapsed:.1f} s (limit 30 s)")


def test_criterion_2_commuting_preparation(verdict):
    start = time.perf_counter()
    H = chain("classical_ising")
    _, rep = run_plan(build_plan(H, 0.5, 4, 1))
    elapsed = time.perf_counter() - start
    verdict("criterion 2 (end-to-end commuting preparation)", rep.distance <= 1e-7 and elapsed < 60,
            f"distance {rep.distance:.2e} (limit 1e-7), {elapsed:.1f} s (limit 60 s)")


def test_criterion_3_non_commuting_monotonicity(verdict):
    start = time.perf_counter()
    H = chain("transverse_field_ising", g=1.0)
    beta = 0.3
    lat = H.lattice
    X = lat.full()
    li, dist = [], []
    for ell in (1, 2, 3):
        a, b, c = shielded_tripartition(X, lat.region([0, 1]), ell)
        li.append(local_indistinguishability(H, beta, X, a, b, c))
        dist.append(run_plan(build_plan(H, beta, 7, ell))[1].distance)
    eps = clustering_profile(H, beta, None, chain_pairs(10, [1, 2, 3, 4, 5]))
    delta = markov_profile(H, beta, None, [[0], [5]], [1, 2, 3, 4])
    gamma = bp_decay_profile(H, beta, range(5), [0, 1, 2, 3, 4])
    rates = {name: p.fit.c2 if p.fit.fitted else float("nan")
             for name, p in (("eps", eps), ("delta", delta), ("gamma", gamma))}
    elapsed = time.perf_counter() - start
    ok = (li[0] > li[1] > li[2] and dist[0] > dist[1] > dist[2]
          and all(r > 0 for r in rates.values()) and elapsed < 300)
    verdict("criterion 3 (non-commuting monotonicity)", ok,
            f"local indistinguishability {[f'{v:.2e}' for v in li]}, distance {[f'{v:.2e}' for v in dist]}, "
            f"decay rates {', '.join(f'{k}={v:.3f}' for k, v in rates.items())}, {elapsed:.1f} s (limit 300 s)")


def test_criterion_4_transfer_matrix_oracle(verdict):
    n, beta = 10, 0.4
    rho = gibbs_state(chain("classical_ising", J=1.0), beta)
    worst = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            cov = covariance(rho, Operator([i], PAULI["Z"]), Operator([j], PAULI["Z"]))
            worst = max(worst, abs(cov - math.tanh(beta) ** (j - i)))
    verdict("criterion 4 (transfer-matrix oracle)", worst <= 1e-8, f"max deviation {worst:.2e} over 45 pairs")


def test_criterion_5_fawzi_renner_battery(verdict):
    rng = np.random.default_rng(2024)
    instances = []
    for _ in range(8):
        pa = rng.dirichlet(np.ones(2))
        pba = rng.dirichlet(np.ones(4), size=2)
        pcb = rng.dirichlet(np.ones(2), size=4)
        p = pa[:, None, None] * pba[:, :, None] * pcb[None, :, :]
        instances.append((Operator([0, 1, 2, 3], np.diag(p.ravel()).astype(complex)), [0], [1, 2], [3]))
    for n, (a, b, c) in ((3, ([0], [1], [2])), (4, ([0], [1], [2, 3])), (4, ([0, 1], [2], [3])),
                         (5, ([2], [1, 3], [0, 4])), (5, ([0], [1, 2], [3, 4])), (4, ([1], [0], [2, 3]))):
        instances.append((Operator(range(n), ghz(n)), a, b, c))
    for beta in (0.3, 1.0):
        rho = gibbs_state(chain("transverse_field_ising", 8, g=1.0), beta)
        for a, b in (([3], [2, 4]), ([3, 4], [2, 5]), ([0], [1]), ([4], [2, 3, 5, 6])):
            instances.append((rho, a, b, [s for s in range(8) if s not in a + b]))
    checks = {"converse": 0, "fidelity_bound": 0, "trace_bound": 0}
    for sigma, a, b, c in instances:
        R = petz_map(partial_trace(sigma, sorted(a + b)), a, b)
        rep = recovery_error(sigma, a, b, c, R)
        for k in checks:
            checks[k] += rep.fr_check[k]
    ssa = CMI_STATS.min_raw >= -1e-9
    ok = len(instances) >= 20 and checks["converse"] == len(instances) and ssa
    verdict("criterion 5 (Fawzi-Renner battery)", ok,
            f"{len(instances)} instances, converse held on {checks['converse']}, "
            f"fidelity bound on {checks['fidelity_bound']}, trace bound on {checks['trace_bound']} (reported), "
            f"min raw CMI so far {CMI_STATS.min_raw:.2e}")


def test_criterion_6_union_property(verdict):
    H = chain("transverse_field_ising", g=1.0)
    rho = gibbs_state(H, 0.3)
    a1, b1, a2, b2 = [2], [1, 3], [7], [6, 8]
    R1 = petz_map(partial_trace(rho, [1, 2, 3]), a1, b1)
    R2 = petz_map(partial_trace(rho, [6, 7, 8]), a2, b2)
    rest = [s for s in range(10) if s not in a1 + b1 + a2 + b2]
    e1 = recovery_error(rho, a1, b1, [s for s in range(10) if s not in a1 + b1], R1).trace_distance
    e2 = recovery_error(rho, a2, b2, [s for s in range(10) if s not in a2 + b2], R2).trace_distance
    both = recovery_error(rho, a1 + a2, sorted(b1 + b2), rest, union_compose(R1, R2)).trace_distance
    verdict("criterion 6 (union property)", both <= e1 + e2 + 1e-9,
            f"union error {both:.3e} <= {e1:.3e} + {e2:.3e}")


def test_criterion_7_belief_propagation(verdict):
    H = chain("transverse_field_ising", 8, g=1.0)
    prof = bp_decay_profile(H, 0.5, range(4), [0, 1, 2, 3])
    vals = prof.values
    residual = prof.extra["identity_residual"]
    above = vals[vals > prof.fit.floor]
    limit = 0.1 * np.abs(np.log(above)).max()
    monotone = bool(np.all(np.diff(vals) <= 0))
    ok = residual <= IDENTITY_TOL and monotone and prof.fit.fitted and prof.fit.c2 > 0 and prof.fit.residual < limit
    verdict("criterion 7 (belief-propagation identity and decay)", ok,
            f"identity residual {residual:.2e}, gamma {[f'{v:.2e}' for v in vals]}, "
            f"fit c2={prof.fit.c2:.3f} residual {prof.fit.residual:.3f} (limit {limit:.3f})")


def test_criterion_8_input_independence_and_schedule(verdict):
    H = chain("transverse_field_ising", g=1.0)
    plan = build_plan(H, 0.3, 7, 1)
    rng = np.random.default_rng(11)
    outs = []
    for _ in range(2):
        g = rng.normal(size=(1024, 4)) + 1j * rng.normal(size=(1024, 4))
        psi = g @ g.conj().T
        outs.append(run_plan(plan, Operator(range(10), psi / np.trace(psi).real))[0].matrix)
    gap = float(np.abs(np.linalg.eigvalsh(outs[0] - outs[1])).sum())
    mismatches = 0
    for D in (1, 2):
        for c1, c2, tau in ((1.0, 0.5, 0.01), (2.0, 1.0, 1e-3)):
            for k in range(4, 21):
                sched = depth_schedule(2**k, D, tau, [exp_fit(c1, c2)])
                levels, depth = oracle_levels(2**k, D, tau, c1, c2)
                mismatches += sched.levels != levels or sched.depth != depth
    local = 0
    for D in (1, 2):
        for k in range(4, 21):
            n = math.ceil(k * math.log(2) / -math.log(0.01) - 1e-12)
            local += strictly_local_depth(2**k, D, 0.01) != D * n
    ok = gap <= 1e-9 and mismatches == 0 and local == 0
    verdict("criterion 8 (input independence and depth schedule)", ok,
            f"output gap {gap:.2e}, schedule mismatches {mismatches}/136, strictly-local mismatches {local}/34")
