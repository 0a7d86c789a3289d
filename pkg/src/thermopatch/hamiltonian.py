"""Local Hamiltonians as lists of supported terms, built-in spin models and
the JSON model-file format."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .lattice import Lattice, Region
from .operators import Operator, _sites, check_dim, embed, is_hermitian

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

FILE_FORMAT = "thermopatch-hamiltonian"
PARAM_BOUND = 1e3


class ModelError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Term:
    sites: tuple[int, ...]
    matrix: np.ndarray

    @cached_property
    def norm(self) -> float:
        return float(np.linalg.norm(self.matrix, 2))


class LocalHamiltonian:
    """``H = sum_Z h^Z`` on a lattice with a uniform local dimension."""

    def __init__(self, lattice: Lattice, terms: Iterable[tuple[Sequence[int], np.ndarray]] | Iterable[Term],
                 site_dim: int = 2):
        self.lattice = lattice
        self.site_dim = int(site_dim)
        built = []
        for t in terms:
            sites, m = (t.sites, t.matrix) if isinstance(t, Term) else t
            sites = tuple(int(s) for s in sites)
            if list(sites) != sorted(set(sites)):
                raise ModelError(f"term sites must be sorted and distinct, got {sites}")
            if not sites or sites[-1] >= lattice.n_sites or sites[0] < 0:
                raise ModelError(f"term sites {sites} outside the lattice")
            m = np.asarray(m)
            d = self.site_dim ** len(sites)
            if m.shape != (d, d):
                raise ModelError(f"term on {sites} has shape {m.shape}, expected {(d, d)}")
            if not is_hermitian(m):
                raise ModelError(f"term on {sites} is not Hermitian")
            built.append(t if isinstance(t, Term) else Term(sites, m))
        self.terms: tuple[Term, ...] = tuple(built)

    def __repr__(self) -> str:
        return f"LocalHamiltonian({self.lattice!r}, n_terms={len(self.terms)})"

    def __len__(self) -> int:
        return len(self.terms)

    @cached_property
    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(repr((self.lattice.dims, self.lattice.periodic, self.site_dim)).encode())
        for t in self.terms:
            h.update(repr(t.sites).encode())
            h.update(np.ascontiguousarray(t.matrix, dtype=np.complex128).tobytes())
        return h.hexdigest()

    def __eq__(self, other: object) -> bool:
        return isinstance(other, LocalHamiltonian) and self.digest == other.digest

    def __hash__(self) -> int:
        return hash(self.digest)

    @property
    def range(self) -> float:
        """Largest Euclidean diameter of any term support."""
        e = self.lattice.euclidean
        return max((float(e[np.ix_(t.sites, t.sites)].max()) for t in self.terms), default=0.0)

    @property
    def max_locality(self) -> int:
        return max((len(t.sites) for t in self.terms), default=0)

    @property
    def is_real(self) -> bool:
        return all(not np.iscomplexobj(t.matrix) or not np.abs(t.matrix.imag).any() for t in self.terms)

    def term_norms(self) -> list[float]:
        return [t.norm for t in self.terms]

    def restrict(self, region) -> "LocalHamiltonian":
        """Terms whose support lies inside ``region``."""
        inside = set(_sites(region))
        return LocalHamiltonian(self.lattice, [t for t in self.terms if set(t.sites) <= inside], self.site_dim)

    def boundary_terms(self, region) -> "LocalHamiltonian":
        """Terms that intersect both ``region`` and its complement."""
        inside = set(_sites(region))
        return LocalHamiltonian(
            self.lattice,
            [t for t in self.terms if set(t.sites) & inside and set(t.sites) - inside],
            self.site_dim,
        )

    def without(self, other: "LocalHamiltonian") -> "LocalHamiltonian":
        drop = {id(t) for t in other.terms}
        return LocalHamiltonian(self.lattice, [t for t in self.terms if id(t) not in drop], self.site_dim)

    def assemble(self, region=None) -> Operator:
        """Dense ``H^X`` on ``X`` (default: the whole lattice)."""
        sites = _sites(region) if region is not None else tuple(range(self.lattice.n_sites))
        dims = (self.site_dim,) * len(sites)
        dim = check_dim(dims)
        dtype = float if self.is_real else complex
        out = np.zeros((dim, dim), dtype=dtype)
        inside = set(sites)
        for t in self.terms:
            if set(t.sites) <= inside:
                m = t.matrix.real if dtype is float else t.matrix
                out += embed(Operator(t.sites, m, self.site_dim), sites).matrix
        return Operator(sites, out, dims)

    # ------------------------------------------------------------------ file format

    def to_dict(self) -> dict:
        return {
            "format": FILE_FORMAT,
            "version": 1,
            "dims": list(self.lattice.dims),
            "periodic": list(self.lattice.periodic),
            "site_dim": self.site_dim,
            "terms": [
                {
                    "sites": list(t.sites),
                    "matrix": [[float(z.real), float(z.imag)] for z in np.asarray(t.matrix, dtype=complex).ravel()],
                }
                for t in self.terms
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "LocalHamiltonian":
        if doc.get("format") != FILE_FORMAT:
            raise ModelError(f"not a {FILE_FORMAT} document")
        lattice = Lattice(doc["dims"], doc.get("periodic", False))
        d = int(doc.get("site_dim", 2))
        terms = []
        for t in doc["terms"]:
            sites = tuple(t["sites"])
            flat = np.array([complex(re, im) for re, im in t["matrix"]])
            n = d ** len(sites)
            if flat.size != n * n:
                raise ModelError(f"term on {sites} carries {flat.size} entries, expected {n * n}")
            terms.append((sites, flat.reshape(n, n)))
        return cls(lattice, terms, d)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path) -> "LocalHamiltonian":
        return cls.from_dict(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------- models

MODELS = {
    "classical_ising": ("J", "h"),
    "transverse_field_ising": ("J", "g"),
    "heisenberg": ("J", "h"),
}
DEFAULT_PARAMS = {
    "classical_ising": {"J": 1.0, "h": 0.0},
    "transverse_field_ising": {"J": 1.0, "g": 1.0},
    "heisenberg": {"J": 1.0, "h": 0.0},
}


def _kron(*ms: np.ndarray) -> np.ndarray:
    out = np.eye(1)
    for m in ms:
        out = np.kron(out, m)
    return out


def _bond_and_field(name: str, p: dict) -> tuple[np.ndarray, np.ndarray]:
    X, Y, Z = PAULI["X"], PAULI["Y"], PAULI["Z"]
    if name == "classical_ising":
        return -p["J"] * _kron(Z, Z), -p["h"] * Z
    if name == "transverse_field_ising":
        return -p["J"] * _kron(Z, Z), -p["g"] * X
    return p["J"] * (_kron(X, X) + _kron(Y, Y) + _kron(Z, Z)), -p["h"] * Z


def build_model(name: str, params: dict | None, lattice: Lattice) -> LocalHamiltonian:
    """Nearest-neighbour spin-1/2 model with on-site fields folded into bonds.

    * ``classical_ising``: ``-J Z_i Z_j - h Z_i``
    * ``transverse_field_ising``: ``-J Z_i Z_j - g X_i``
    * ``heisenberg``: ``J (X X + Y Y + Z Z) - h Z_i``

    Each site's field goes into the lexicographically first bond containing
    it; a lattice without bonds gets one single-site term per site.
    """
    if name not in MODELS:
        raise ModelError(f"unknown model {name!r}; choose from {sorted(MODELS)}")
    p = dict(DEFAULT_PARAMS[name])
    for key, value in (params or {}).items():
        if key not in MODELS[name]:
            raise ModelError(f"model {name} has no parameter {key!r}")
        p[key] = value
    for key, value in p.items():
        value = float(value)
        if not math.isfinite(value) or abs(value) > PARAM_BOUND:
            raise ModelError(f"parameter {key}={value} outside [-{PARAM_BOUND}, {PARAM_BOUND}]")
        p[key] = value

    bond, field = _bond_and_field(name, p)
    edges = lattice.edges()
    terms = []
    if not edges:
        for s in range(lattice.n_sites):
            terms.append(((s,), field))
    else:
        placed = set()
        I2 = PAULI["I"]
        for i, j in edges:
            m = bond.copy()
            if i not in placed:
                m = m + _kron(field, I2)
                placed.add(i)
            if j not in placed:
                m = m + _kron(I2, field)
                placed.add(j)
            terms.append(((i, j), m))
    terms = [(s, m.real) if not np.abs(m.imag).any() else (s, m) for s, m in terms]
    return LocalHamiltonian(lattice, terms, 2)


def commutator_norm(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(a @ b - b @ a, 2))


def terms_commute(H: LocalHamiltonian, tol: float = 1e-12) -> bool:
    """True when every pair of overlapping terms commutes."""
    for k, s in enumerate(H.terms):
        for t in H.terms[k + 1:]:
            if not set(s.sites) & set(t.sites):
                continue
            sites = sorted(set(s.sites) | set(t.sites))
            a = embed(Operator(s.sites, s.matrix, H.site_dim), sites).matrix
            b = embed(Operator(t.sites, t.matrix, H.site_dim), sites).matrix
            if commutator_norm(a, b) > tol:
                return False
    return True
