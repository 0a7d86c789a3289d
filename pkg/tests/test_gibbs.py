import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import ghz, random_density
from thermopatch.bp import bp_decay_profile
from thermopatch.gibbs import (
    CMI_STATS,
    GIBBS_CACHE,
    DecayProfile,
    StrongSubadditivityError,
    area_law_report,
    chain_pairs,
    clustering_profile,
    cmi,
    correlation_bracket,
    covariance,
    decay_fit,
    gibbs,
    gibbs_state,
    local_indistinguishability,
    local_indistinguishability_profile,
    markov_profile,
    mutual_information,
    profile_json,
    shielded_tripartition,
)
from thermopatch.hamiltonian import PAULI, LocalHamiltonian, build_model
from thermopatch.lattice import boundary_sites, make_lattice
from thermopatch.operators import Operator, identity, tensor


def z_at(site):
    return Operator([site], PAULI["Z"])


def transfer_matrix_zz(n, beta, J, h, i, j):
    """Connected <Z_i Z_j> of the open classical chain from transfer matrices."""
    s = np.array([1.0, -1.0])
    T = np.exp(beta * J * np.outer(s, s))
    F = np.diag(np.exp(beta * h * s))
    Zd = np.diag(s)

    def weight(inserts):
        v = np.ones(2) @ F
        if 0 in inserts:
            v = v @ Zd
        for k in range(1, n):
            v = v @ T @ F
            if k in inserts:
                v = v @ Zd
        return v.sum()

    z = weight(())
    return weight((i, j)) / z - weight((i,)) / z * weight((j,)) / z


# ---------------------------------------------------------------------- Gibbs states


def test_infinite_temperature_is_maximally_mixed():
    H = build_model("transverse_field_ising", {}, make_lattice([4]))
    rho = gibbs_state(H, 0.0)
    assert np.allclose(rho.matrix, np.eye(16) / 16, atol=1e-14)


def test_single_site_closed_form():
    beta, h = 0.7, 0.4
    H = LocalHamiltonian(make_lattice([1]), [((0,), h * PAULI["Z"])])
    expect = np.diag([math.exp(-beta * h), math.exp(beta * h)]) / (2 * math.cosh(beta * h))
    assert np.allclose(gibbs_state(H, beta).matrix, expect, atol=1e-14)


def test_commuting_split_factorizes():
    from scipy.linalg import expm

    H = build_model("classical_ising", {"h": 0.3}, make_lattice([4]))
    beta = 0.6
    V = H.boundary_terms([0, 1]).assemble(range(4)).matrix
    H0 = H.assemble().matrix - V
    assert np.allclose(expm(-beta * (H0 + V)), expm(-beta * H0) @ expm(-beta * V), atol=1e-10)


def test_restricted_state_support_and_cache():
    H = build_model("heisenberg", {}, make_lattice([6]))
    GIBBS_CACHE.clear()
    a = gibbs(H, 0.5, [1, 2, 3])
    b = gibbs(H, 0.5, (3, 2, 1))
    assert a is b
    assert a.state.support == (1, 2, 3)
    assert np.linalg.eigvalsh(a.state.matrix).min() > 0
    assert gibbs(H, 0.6, [1, 2, 3]) is not a


def test_cache_is_thread_safe():
    from concurrent.futures import ThreadPoolExecutor

    H = build_model("transverse_field_ising", {}, make_lattice([6]))
    GIBBS_CACHE.clear()
    with ThreadPoolExecutor(4) as pool:
        results = list(pool.map(lambda _: gibbs(H, 0.4), range(8)))
    assert all(r is results[0] for r in results)


# ---------------------------------------------------------------------- covariance and clustering


def test_covariance_trivial_cases(rng):
    prod = tensor(Operator([0], random_density(2, rng)), Operator([1], random_density(2, rng)))
    f = Operator([0], PAULI["X"])
    g = Operator([1], PAULI["Z"])
    assert covariance(prod, f, g) < 1e-14
    assert covariance(Operator([0, 1], ghz(2)), identity([0]), g) < 1e-14
    with pytest.raises(ValueError):
        covariance(prod, f, Operator([0], PAULI["Z"]))


@pytest.mark.parametrize("beta", [0.4, 0.9])
def test_zero_field_chain_matches_tanh(beta):
    n = 8
    H = build_model("classical_ising", {"J": 1.0, "h": 0.0}, make_lattice([n]))
    rho = gibbs_state(H, beta)
    for i in range(n):
        for j in range(i + 1, n):
            assert abs(covariance(rho, z_at(i), z_at(j)) - math.tanh(beta) ** (j - i)) < 1e-10


def test_field_chain_matches_transfer_matrix():
    n, beta, J, h = 7, 0.6, 0.8, 0.35
    H = build_model("classical_ising", {"J": J, "h": h}, make_lattice([n]))
    rho = gibbs_state(H, beta)
    for i, j in [(0, 1), (0, 6), (2, 5), (3, 4)]:
        assert abs(covariance(rho, z_at(i), z_at(j)) - abs(transfer_matrix_zz(n, beta, J, h, i, j))) < 1e-12


def test_clustering_bracket_on_classical_chain():
    n, beta = 8, 0.4
    H = build_model("classical_ising", {}, make_lattice([n]))
    prof = clustering_profile(H, beta, None, chain_pairs(n, [1, 2, 3, 4]))
    for (ell, up, _), lo in zip(prof.samples, prof.extra["lower"]):
        assert lo >= math.tanh(beta) ** ell - 1e-12
        assert lo <= up + 1e-12
    assert prof.fit.fitted and prof.fit.c2 > 0


def test_clustering_vanishes_at_infinite_temperature():
    H = build_model("heisenberg", {}, make_lattice([6]))
    prof = clustering_profile(H, 0.0, None, chain_pairs(6, [1, 2, 3]))
    assert np.all(prof.values < 1e-14)
    assert not prof.fit.fitted


def test_clustering_rejects_close_pairs():
    H = build_model("heisenberg", {}, make_lattice([6]))
    with pytest.raises(ValueError):
        clustering_profile(H, 0.3, None, {3: ([0], [1])})


def test_random_probes_respect_upper_bound(rng):
    H = build_model("transverse_field_ising", {"g": 1.0}, make_lattice([6]))
    rho = gibbs_state(H, 0.5)
    for a, b in [([0], [1]), ([0, 1], [3]), ([2], [4, 5])]:
        _, up = correlation_bracket(rho, a, b)
        for _ in range(5):
            f = random_hermitian_op(a, rng)
            g = random_hermitian_op(b, rng)
            bound = np.linalg.norm(f.matrix, 2) * np.linalg.norm(g.matrix, 2) * up
            assert covariance(rho, f, g) <= bound + 1e-12


def random_hermitian_op(sites, rng):
    d = 2 ** len(sites)
    g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return Operator(sites, (g + g.conj().T) / 2)


# ---------------------------------------------------------------------- entropies


def test_mutual_information_examples():
    assert abs(mutual_information(Operator([0, 1, 2], ghz(3)), [0]) - 2.0) < 1e-10
    assert mutual_information(Operator([0, 1], np.eye(4) / 4), [0]) < 1e-12
    prod = tensor(Operator([0], np.diag([0.3, 0.7])), Operator([1], np.diag([0.9, 0.1])))
    assert mutual_information(prod, [0], [1]) < 1e-12


def test_cmi_examples(rng):
    assert abs(cmi(Operator([0, 1, 2], ghz(3)), [0], [1], [2]) - 1.0) < 1e-10
    prod = tensor(tensor(Operator([0], random_density(2, rng)), Operator([1], random_density(2, rng))),
                  Operator([2], random_density(2, rng)))
    assert cmi(prod, [0], [1], [2]) == 0.0
    H = build_model("classical_ising", {"h": 0.2}, make_lattice([7]))
    rho = gibbs_state(H, 0.8)
    for ell in (1, 2, 3):
        assert cmi(rho, [3], list(range(3 - ell, 3)) + list(range(4, 4 + ell)),
                   [s for s in range(7) if abs(s - 3) > ell]) <= 1e-10
    with pytest.raises(ValueError):
        cmi(rho, [0], [0, 1], [2])


def test_cmi_with_empty_shield_is_mutual_information(rng):
    rho = Operator([0, 1, 2], random_density(8, rng))
    assert abs(cmi(rho, [0], [], [2]) - mutual_information(rho, [0], [2])) < 1e-12


@given(st.integers(0, 10_000), st.integers(1, 8))
def test_strong_subadditivity(seed, rank):
    rng = np.random.default_rng(seed)
    rho = Operator([0, 1, 2, 3], random_density(16, rng, rank))
    assert cmi(rho, [0], [1, 2], [3], raw=True) >= 0.0
    assert CMI_STATS.min_raw >= -1e-9


def test_strong_subadditivity_violation_raises(monkeypatch):
    import thermopatch.gibbs as g

    values = iter([0.0, 0.0, 1.0, 0.0])
    monkeypatch.setattr(g, "entropy", lambda rho, region: next(values))
    monkeypatch.setattr(g, "von_neumann_entropy", lambda rho: 0.0)
    before = CMI_STATS.min_raw
    with pytest.raises(StrongSubadditivityError):
        g.cmi(Operator([0, 1, 2], ghz(3)), [0], [1], [2])
    CMI_STATS.min_raw = before  # keep the suite-wide record about genuine states


def test_area_law_report():
    H = build_model("transverse_field_ising", {}, make_lattice([6]))
    rows = area_law_report(H, 0.5, [[0], [0, 1], [2, 3], list(range(6))])
    assert rows[-1]["mutual_information"] == 0.0
    assert rows[0]["boundary"] == 1 and rows[2]["boundary"] == 2
    assert all(r["mutual_information"] >= 0 for r in rows)
    assert rows[0]["mutual_information"] > 0


# ---------------------------------------------------------------------- Markov and local indistinguishability


def test_markov_profile_classical_is_zero():
    H = build_model("classical_ising", {"h": 0.3}, make_lattice([8]))
    prof = markov_profile(H, 0.8, None, [[0], [4]], [1, 2, 3])
    assert np.all(prof.values <= 1e-10)
    assert all(prof.extra["zero"])


def test_markov_profile_infinite_temperature():
    H = build_model("heisenberg", {}, make_lattice([6]))
    assert np.all(markov_profile(H, 0.0, None, [[2]], [1, 2]).values == 0)


def test_markov_profile_tfim_decreasing():
    H = build_model("transverse_field_ising", {"g": 1.0}, make_lattice([10]))
    prof = markov_profile(H, 0.3, None, [[0], [5]], [1, 2, 3])
    assert np.all(np.diff(prof.values) < 0)


def test_local_indistinguishability_trivial_cases():
    lat = make_lattice([6])
    H = build_model("transverse_field_ising", {}, lat)
    X = lat.full()
    assert local_indistinguishability(H, 0.5, X, [0, 1], [2, 3, 4, 5], []) == 0.0
    a, b, c = shielded_tripartition(X, lat.region([0]), 1)
    assert local_indistinguishability(H, 0.0, X, a, b, c) < 1e-14
    with pytest.raises(ValueError):
        local_indistinguishability(H, 0.5, X, [0], [2], [1, 3, 4, 5])


def test_local_indistinguishability_tfim_decays():
    H = build_model("transverse_field_ising", {"g": 1.0}, make_lattice([10]))
    prof = local_indistinguishability_profile(H, 0.3, None, [0, 1], [1, 2, 3, 4])
    assert np.all(np.diff(prof.values) < 0)
    assert prof.fit.fitted and prof.fit.c2 > 0


def test_commuting_indistinguishability_scales_with_full_length():
    """LHS tracks eps(ell) rather than eps(ell/2): its decay rate matches the clustering rate."""
    lat = make_lattice([10])
    H = build_model("classical_ising", {"h": 0.3}, lat)
    X = lat.full()
    beta = 0.8
    rho = gibbs_state(H, beta)
    lhs, eps = [], []
    for ell in range(1, 6):
        a, b, c = shielded_tripartition(X, lat.region([0]), ell)
        lhs.append((ell, local_indistinguishability(H, beta, X, a, b, c)))
        eps.append((ell, correlation_bracket(rho, a, c)[1] * len(boundary_sites(c, X))))
    K = max(v / e for (_, v), (_, e) in zip(lhs, eps))
    assert all(v <= K * e + 1e-15 for (_, v), (_, e) in zip(lhs, eps))
    rate_lhs, rate_eps = decay_fit(lhs).c2, decay_fit(eps).c2
    assert rate_lhs >= 0.9 * rate_eps, (K, rate_lhs, rate_eps)


def test_chain_inequality_with_calibrated_constant():
    n, beta = 10, 0.3
    H = build_model("transverse_field_ising", {"g": 1.0}, make_lattice([n]))
    rho = gibbs_state(H, beta)
    punctured = [s for s in range(n) if s != 5]
    rows = []
    for ell in (2, 4, 6):
        half = ell // 2
        cov = correlation_bracket(rho, [1], [1 + ell])[1]
        eps = correlation_bracket(gibbs_state(H, beta, punctured), [1], [1 + half])[1]
        gam = bp_decay_profile(H, beta, range(5), [float(half)]).values[0]
        rows.append((cov, 2 * eps + 5 * gam))
    K = rows[0][0] / rows[0][1]
    violations = [(c, K * r) for c, r in rows[1:] if c > K * r + 1e-12]
    assert not violations


# ---------------------------------------------------------------------- fits and profiles


def test_decay_fit_recovers_synthetic_parameters():
    fit = decay_fit([(ell, 0.7 * math.exp(-1.3 * ell)) for ell in range(1, 6)])
    assert abs(fit.c1 - 0.7) < 1e-6 and abs(fit.c2 - 1.3) < 1e-6 and fit.residual < 1e-10


def test_decay_fit_unfitted_cases():
    assert not decay_fit([(ell, 0.0) for ell in range(1, 6)]).fitted
    assert not decay_fit([(1, 0.5), (2, 0.1), (3, 1e-13)]).fitted


def test_decay_fit_tanh_samples():
    beta = 0.4
    fit = decay_fit([(ell, math.tanh(beta) ** ell) for ell in range(1, 8)])
    assert abs(fit.c2 + math.log(math.tanh(beta))) < 1e-6


def test_profile_validation_and_export():
    prof = DecayProfile("markov")
    prof.add(1, 0.5, "x")
    with pytest.raises(ValueError):
        prof.add(1, 0.2)
    with pytest.raises(ValueError):
        prof.add(2, -0.1)
    with pytest.raises(ValueError):
        DecayProfile("unknown")
    prof.add(2, 0.1)
    assert prof.to_csv().splitlines()[0] == "ell,value,context"
    assert '"kind": "markov"' in profile_json(prof)
