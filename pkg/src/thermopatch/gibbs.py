"""Restricted Gibbs states and the correlation diagnostics built on them:
covariances, clustering brackets, (conditional) mutual information, Markov
scans, local indistinguishability and exponential decay fits."""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
import threading
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .hamiltonian import PAULI, LocalHamiltonian
from .kernels import probe_table
from .lattice import Region, annulus, boundary_sites, distance
from .operators import (
    InvariantError,
    Operator,
    _sites,
    check_dim,
    eigh,
    entropy_of_spectrum,
    from_spectrum,
    partial_trace,
    reorder,
    tensor,
    trace_norm,
    von_neumann_entropy,
)

CMI_TOL = 1e-9
FIT_FLOOR = 1e-12


class StrongSubadditivityError(InvariantError):
    """A conditional mutual information came out below ``-CMI_TOL``."""


# ---------------------------------------------------------------------- Gibbs states


@dataclass(frozen=True)
class GibbsSpec:
    H: LocalHamiltonian
    beta: float
    X: tuple[int, ...]

    def __post_init__(self):
        if not math.isfinite(self.beta) or self.beta < 0:
            raise ValueError(f"inverse temperature must be finite and >= 0, got {self.beta}")
        object.__setattr__(self, "X", _sites(self.X))
        check_dim((self.H.site_dim,) * len(self.X))

    @property
    def key(self) -> tuple:
        return (self.H.digest, float(self.beta), self.X)


@dataclass(frozen=True)
class GibbsResult:
    state: Operator
    energies: np.ndarray
    log_partition: float


class _GibbsCache:
    def __init__(self):
        self._lock = threading.Lock()
        self._data: dict[tuple, GibbsResult] = {}
        self.hits = 0
        self.misses = 0

    def get_or_compute(self, spec: GibbsSpec) -> GibbsResult:
        key = spec.key
        with self._lock:
            hit = self._data.get(key)
            if hit is not None:
                self.hits += 1
                return hit
        result = _compute_gibbs(spec)
        with self._lock:
            self.misses += 1
            return self._data.setdefault(key, result)

    def clear(self) -> None:
        with self._lock:
            self._data.clear()
            self.hits = self.misses = 0


GIBBS_CACHE = _GibbsCache()


def _compute_gibbs(spec: GibbsSpec) -> GibbsResult:
    h = spec.H.assemble(spec.X)
    w, v = eigh(h.matrix)
    boltz = np.exp(-spec.beta * (w - w[0]))
    z = boltz.sum()
    rho = from_spectrum(w, v, boltz / z)
    rho = (rho + rho.conj().T) / 2
    return GibbsResult(
        state=h.with_matrix(rho),
        energies=w,
        log_partition=float(-spec.beta * w[0] + math.log(z)),
    )


def gibbs(H: LocalHamiltonian, beta: float, X=None) -> GibbsResult:
    X = _sites(X) if X is not None else tuple(range(H.lattice.n_sites))
    return GIBBS_CACHE.get_or_compute(GibbsSpec(H, beta, X))


def gibbs_state(H: LocalHamiltonian, beta: float, X=None) -> Operator:
    """``rho^X = exp(-beta H^X) / tr exp(-beta H^X)``."""
    return gibbs(H, beta, X).state


# ---------------------------------------------------------------------- covariance


def expectation(sigma: Operator, f: Operator) -> complex:
    """``tr[sigma f]`` for ``f`` supported inside ``sigma``'s support."""
    red = partial_trace(sigma, f.support)
    return complex(np.trace(red.matrix @ f.matrix))


def covariance(sigma: Operator, f: Operator, g: Operator) -> float:
    """``|tr[sigma f g] - tr[sigma f] tr[sigma g]|`` for disjointly supported ``f``, ``g``."""
    if set(f.support) & set(g.support):
        raise ValueError("covariance needs observables on disjoint regions")
    fg = tensor(f, g)
    return abs(expectation(sigma, fg) - expectation(sigma, f) * expectation(sigma, g))


def pauli_strings(n: int, max_weight: int = 2) -> list[tuple[str, np.ndarray]]:
    """Non-identity Pauli strings on ``n`` qubits with at most ``max_weight`` non-identity factors."""
    out = []
    for w in range(1, min(max_weight, n) + 1):
        for pos in itertools.combinations(range(n), w):
            for letters in itertools.product("XYZ", repeat=w):
                label = ["I"] * n
                for p, c in zip(pos, letters):
                    label[p] = c
                m = np.eye(1)
                for c in label:
                    m = np.kron(m, PAULI[c])
                out.append(("".join(label), m))
    return out


def correlation_bracket(sigma: Operator, a, b, max_weight: int = 2) -> tuple[float, float]:
    """Lower and upper bounds on ``sup Cov(f, g)`` over unit-norm ``f`` on ``a``, ``g`` on ``b``.

    Upper: ``||sigma_ab - sigma_a ⊗ sigma_b||_1``.  Lower: best Pauli-string
    pair of weight at most ``max_weight`` on each side (qubits only).
    """
    a, b = _sites(a), _sites(b)
    if set(a) & set(b):
        raise ValueError("regions must be disjoint")
    ab = partial_trace(sigma, sorted(a + b))
    ra, rb = partial_trace(ab, a), partial_trace(ab, b)
    upper = trace_norm(ab.matrix - tensor(ra, rb).matrix)
    if any(d != 2 for d in sigma.dims):
        return 0.0, upper
    # reorder ab as (a, b) so the probe table sees a bipartite tensor
    order = list(ab.support)
    perm = [order.index(s) for s in a + b]
    m = reorder(ab.matrix, ab.dims, perm)
    da, db = 2 ** len(a), 2 ** len(b)
    pa = np.array([p for _, p in pauli_strings(len(a), max_weight)])
    pb = np.array([p for _, p in pauli_strings(len(b), max_weight)])
    joint = probe_table(m.reshape(da, db, da, db), pa, pb)
    ea = np.einsum("ij,pji->p", ra.matrix, pa)
    eb = np.einsum("ij,pji->p", rb.matrix, pb)
    lower = float(np.abs(joint - np.outer(ea, eb)).max())
    return lower, upper


# ---------------------------------------------------------------------- profiles


@dataclass
class DecayFit:
    c1: float = float("nan")
    c2: float = float("nan")
    residual: float = float("nan")
    n_used: int = 0
    fitted: bool = False
    floor: float = FIT_FLOOR

    def __call__(self, ell) -> np.ndarray:
        return self.c1 * np.exp(-self.c2 * np.asarray(ell, dtype=float))

    def to_dict(self) -> dict:
        return {
            "c1": self.c1 if self.fitted else None,
            "c2": self.c2 if self.fitted else None,
            "residual": self.residual if self.fitted else None,
            "n_used": self.n_used,
            "fitted": self.fitted,
            "floor": self.floor,
        }


@dataclass
class DecayProfile:
    kind: str
    samples: list[tuple[float, float, str]] = field(default_factory=list)
    extra: dict = field(default_factory=dict)
    fit: DecayFit | None = None

    KINDS = ("clustering", "markov", "bp", "local_indist")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown profile kind {self.kind!r}")

    def add(self, ell: float, value: float, context: str = "") -> None:
        if self.samples and ell <= self.samples[-1][0]:
            raise ValueError("profile lengths must be strictly increasing")
        if value < 0:
            raise ValueError("profile values must be non-negative")
        self.samples.append((float(ell), float(value), context))

    @property
    def ells(self) -> np.ndarray:
        return np.array([s[0] for s in self.samples])

    @property
    def values(self) -> np.ndarray:
        return np.array([s[1] for s in self.samples])

    def fitted(self) -> "DecayProfile":
        self.fit = decay_fit(self)
        return self

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["ell", "value", "context"])
        for ell, value, ctx in self.samples:
            w.writerow([repr(ell), repr(value), ctx])
        return buf.getvalue()

    def fit_json(self) -> dict:
        fit = self.fit if self.fit is not None else decay_fit(self)
        return {"kind": self.kind, "fit": fit.to_dict(), **self.extra}


def decay_fit(profile: DecayProfile | Sequence[tuple[float, float]], floor: float = FIT_FLOOR) -> DecayFit:
    """Least-squares fit of ``log value = log c1 - c2 * ell`` over samples above ``floor``.

    ``residual`` is the root-mean-square residual in natural-log space.
    Fewer than three usable samples yield an unfitted result.
    """
    pts = profile.samples if isinstance(profile, DecayProfile) else list(profile)
    ells = np.array([p[0] for p in pts], dtype=float)
    vals = np.array([p[1] for p in pts], dtype=float)
    use = vals > floor
    if use.sum() < 3:
        return DecayFit(n_used=int(use.sum()), floor=floor)
    x, y = ells[use], np.log(vals[use])
    slope, intercept = np.polyfit(x, y, 1)
    res = y - (slope * x + intercept)
    return DecayFit(
        c1=float(math.exp(intercept)),
        c2=float(-slope),
        residual=float(np.sqrt(np.mean(res**2))),
        n_used=int(use.sum()),
        fitted=True,
        floor=floor,
    )


def clustering_profile(H: LocalHamiltonian, beta: float, X, pairs: dict, max_weight: int = 2) -> DecayProfile:
    """Bracket the uniform-clustering function at each separation.

    ``pairs`` maps ``ell -> (A, B)``; every pair must be at distance >= ell.
    The profile value is the certified upper bound; the Pauli lower bound is
    kept in ``profile.extra["lower"]``.
    """
    rho = gibbs_state(H, beta, X)
    prof = DecayProfile("clustering")
    lowers = []
    for ell in sorted(pairs):
        a, b = pairs[ell]
        ra = Region(H.lattice, _sites(a))
        rb = Region(H.lattice, _sites(b))
        if distance(ra, rb) < ell - 1e-9:
            raise ValueError(f"regions {ra} and {rb} are closer than ell={ell}")
        lo, up = correlation_bracket(rho, ra, rb, max_weight)
        prof.add(ell, up, f"A={list(ra.members)} B={list(rb.members)}")
        lowers.append(lo)
    prof.extra["lower"] = lowers
    return prof.fitted()


def chain_pairs(n: int, ells: Iterable[int], start: int = 0, size: int = 1) -> dict:
    """Blocks of ``size`` sites at the given separations along a chain."""
    out = {}
    for ell in ells:
        a = list(range(start, start + size))
        first = start + size - 1 + ell
        b = list(range(first, first + size))
        if b[-1] >= n:
            raise ValueError(f"separation {ell} does not fit in a chain of {n}")
        out[ell] = (a, b)
    return out


# ---------------------------------------------------------------------- entropies


class _CMIStats:
    def __init__(self):
        self._lock = threading.Lock()
        self.count = 0
        self.min_raw = math.inf

    def record(self, value: float) -> None:
        with self._lock:
            self.count += 1
            self.min_raw = min(self.min_raw, value)


CMI_STATS = _CMIStats()


def entropy(rho: Operator, region) -> float:
    region = _sites(region)
    if not region:
        return 0.0
    return von_neumann_entropy(partial_trace(rho, region))


def mutual_information(rho: Operator, a, b=None) -> float:
    """``I(A:B)`` in bits; ``b`` defaults to the rest of ``rho``'s support."""
    a = _sites(a)
    b = _sites(b) if b is not None else tuple(s for s in rho.support if s not in a)
    ab = tuple(sorted(a + b))
    sub = partial_trace(rho, ab)
    return max(entropy(sub, a) + entropy(sub, b) - von_neumann_entropy(sub), 0.0)


def cmi(rho: Operator, a, b, c, raw: bool = False) -> float:
    """``I(A:C|B) = S(AB) + S(BC) - S(B) - S(ABC)`` in bits.

    Values within ``CMI_TOL`` of zero are reported as exactly zero unless
    ``raw`` is set, in which case only negative rounding is cut off.
    Raises :class:`StrongSubadditivityError` below ``-CMI_TOL``.
    """
    a, b, c = _sites(a), _sites(b), _sites(c)
    if set(a) & set(b) or set(a) & set(c) or set(b) & set(c):
        raise ValueError("CMI regions must be disjoint")
    abc = tuple(sorted(a + b + c))
    sub = partial_trace(rho, abc)
    value = (
        entropy(sub, sorted(a + b))
        + entropy(sub, sorted(b + c))
        - entropy(sub, b)
        - von_neumann_entropy(sub)
    )
    CMI_STATS.record(value)
    if value < -CMI_TOL:
        raise StrongSubadditivityError(f"conditional mutual information {value} < -{CMI_TOL}")
    if raw:
        return max(value, 0.0)
    return value if value > CMI_TOL else 0.0


def area_law_report(H: LocalHamiltonian, beta: float, regions: Iterable) -> list[dict]:
    """``I(A:A^c)`` and ``I / |dA|`` for each region of the sweep."""
    rho = gibbs_state(H, beta)
    full = H.lattice.full()
    out = []
    for a in regions:
        ra = Region(H.lattice, _sites(a))
        rest = full - ra
        mi = mutual_information(rho, ra.members) if rest else 0.0
        edge = len(boundary_sites(ra, full))
        out.append({
            "A": list(ra.members),
            "mutual_information": mi,
            "boundary": edge,
            "per_boundary_site": mi / edge if edge else 0.0,
        })
    return out


# ---------------------------------------------------------------------- Markov scans


def shielded_tripartition(X: Region, a: Region, ell: int) -> tuple[Region, Region, Region]:
    """``(A, B, C)`` with ``B`` the width-``ell`` annulus of ``A`` inside ``X``."""
    b = annulus(a, ell, X)
    return a, b, X - a - b


def check_shield(a: Region, b: Region, c: Region, X: Region | None = None, ell: float | None = None) -> None:
    if not (a.isdisjoint(b) and a.isdisjoint(c) and b.isdisjoint(c)):
        raise ValueError("A, B, C must be disjoint")
    if X is not None and (a | b | c) != X:
        raise ValueError("A, B, C must partition X")
    if a and c:
        if a.lattice.adjacency[np.ix_(a.array, c.array)].any():
            raise ValueError("B does not shield A from C")
        if ell is not None and distance(a, c) < ell - 1e-9:
            raise ValueError(f"A and C are closer than ell={ell}")


def markov_profile(H: LocalHamiltonian, beta: float, X, family: Iterable, ells: Iterable[int]) -> DecayProfile:
    """``delta(ell) = max I(A:C|B)`` over the family with width-``ell`` shields.

    ``family`` lists the ``A`` regions; ``B`` is the ``ell``-annulus of ``A``
    inside ``X`` and ``C`` the rest of ``X``.  Samples keep sub-tolerance
    values (negative rounding cut to zero) so the fit sees the full decay;
    ``extra["zero"]`` flags the lengths whose maximum is below ``CMI_TOL``.
    """
    Xr = Region(H.lattice, _sites(X) if X is not None else range(H.lattice.n_sites))
    rho = gibbs_state(H, beta, Xr.members)
    family = [Region(H.lattice, _sites(a)) for a in family]
    prof = DecayProfile("markov")
    for ell in sorted(ells):
        best, where = 0.0, ""
        for a in family:
            a, b, c = shielded_tripartition(Xr, a, ell)
            check_shield(a, b, c, Xr)
            value = cmi(rho, a.members, b.members, c.members, raw=True)
            if value >= best:
                best, where = value, f"A={list(a.members)}"
        prof.add(ell, best, where)
    prof.extra["zero"] = [bool(v <= CMI_TOL) for v in prof.values]
    return prof.fitted()


def local_indistinguishability(H: LocalHamiltonian, beta: float, X, a, b, c, ell: float | None = None) -> float:
    """``|| tr_BC rho^X - tr_B rho^AB ||_1`` from two independent Gibbs states."""
    lat = H.lattice
    Xr = Region(lat, _sites(X))
    ra, rb, rc = (Region(lat, _sites(r)) for r in (a, b, c))
    check_shield(ra, rb, rc, Xr, ell)
    if not rc:
        return 0.0
    rho_x = gibbs_state(H, beta, Xr.members)
    rho_ab = gibbs_state(H, beta, (ra | rb).members)
    return trace_norm(partial_trace(rho_x, ra.members).matrix - partial_trace(rho_ab, ra.members).matrix)


def local_indistinguishability_profile(H: LocalHamiltonian, beta: float, X, a, ells: Iterable[int]) -> DecayProfile:
    Xr = Region(H.lattice, _sites(X) if X is not None else range(H.lattice.n_sites))
    ra = Region(H.lattice, _sites(a))
    prof = DecayProfile("local_indist")
    for ell in sorted(ells):
        a_, b_, c_ = shielded_tripartition(Xr, ra, ell)
        prof.add(ell, local_indistinguishability(H, beta, Xr, a_, b_, c_), f"|C|={len(c_)}")
    return prof.fitted()


def profile_json(profile: DecayProfile) -> str:
    return json.dumps(profile.fit_json(), indent=1, sort_keys=True)
