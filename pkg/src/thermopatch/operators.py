"""Dense operators on tensor products of site Hilbert spaces.

An :class:`Operator` is a matrix together with the sorted tuple of lattice
sites it acts on.  The first site of the support is the most significant
tensor factor, so ``Z`` on site 0 embedded on sites ``(0, 1)`` is
``diag(1, 1, -1, -1)``.

All matrix functions go through a Hermitian eigendecomposition.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .kernels import partial_trace_kernel

MAX_DIM = 2**14
HERMITIAN_RTOL = 1e-12
PINV_RTOL = 1e-12
ENTROPY_CUTOFF = 1e-14


class DimensionCapError(ValueError):
    """The requested operator would exceed :data:`MAX_DIM`."""


class NotHermitianError(ValueError):
    pass


class InvariantError(AssertionError):
    """A hard numerical invariant was violated."""


def _sites(region) -> tuple[int, ...]:
    members = getattr(region, "members", region)
    return tuple(sorted(int(s) for s in members))


def check_dim(dims: Sequence[int]) -> int:
    total = int(np.prod(dims, dtype=np.int64)) if len(dims) else 1
    if total > MAX_DIM:
        raise DimensionCapError(f"Hilbert-space dimension {total} exceeds the cap {MAX_DIM}")
    return total


@dataclass(frozen=True, eq=False)
class Operator:
    support: tuple[int, ...]
    matrix: np.ndarray
    dims: tuple[int, ...]

    def __init__(self, support: Iterable[int], matrix, dims: Sequence[int] | int = 2):
        support = tuple(int(s) for s in getattr(support, "members", support))
        if list(support) != sorted(set(support)):
            raise ValueError("operator support must be sorted and duplicate-free")
        if isinstance(dims, (int, np.integer)):
            dims = (int(dims),) * len(support)
        dims = tuple(int(d) for d in dims)
        if len(dims) != len(support) or any(d < 2 for d in dims):
            raise ValueError("one local dimension >= 2 per support site is required")
        total = check_dim(dims)
        matrix = np.asarray(matrix)
        if matrix.shape != (total, total):
            raise ValueError(f"matrix shape {matrix.shape} does not match dimension {total}")
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "dims", dims)

    def __repr__(self) -> str:
        return f"Operator(support={list(self.support)}, dim={self.dim})"

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def dim_of(self, sites: Iterable[int]) -> int:
        lookup = dict(zip(self.support, self.dims))
        return int(np.prod([lookup[s] for s in sites], dtype=np.int64))

    def trace(self) -> complex:
        return complex(np.trace(self.matrix))

    def with_matrix(self, matrix) -> "Operator":
        return Operator(self.support, matrix, self.dims)

    def __add__(self, other: "Operator") -> "Operator":
        _same_space(self, other)
        return self.with_matrix(self.matrix + other.matrix)

    def __sub__(self, other: "Operator") -> "Operator":
        _same_space(self, other)
        return self.with_matrix(self.matrix - other.matrix)

    def __mul__(self, scalar) -> "Operator":
        return self.with_matrix(self.matrix * scalar)

    __rmul__ = __mul__

    def __matmul__(self, other: "Operator") -> "Operator":
        _same_space(self, other)
        return self.with_matrix(self.matrix @ other.matrix)

    def dagger(self) -> "Operator":
        return self.with_matrix(self.matrix.conj().T)

    def is_hermitian(self, rtol: float = HERMITIAN_RTOL) -> bool:
        return is_hermitian(self.matrix, rtol)


def _same_space(a: Operator, b: Operator) -> None:
    if a.support != b.support or a.dims != b.dims:
        raise ValueError(f"operators act on different spaces: {a.support} vs {b.support}")


def is_hermitian(m: np.ndarray, rtol: float = HERMITIAN_RTOL) -> bool:
    scale = np.linalg.norm(m)
    return bool(np.max(np.abs(m - m.conj().T), initial=0.0) <= rtol * max(scale, 1e-300))


def identity(support: Iterable[int], dims: Sequence[int] | int = 2) -> Operator:
    support = _sites(support)
    if isinstance(dims, (int, np.integer)):
        dims = (int(dims),) * len(support)
    return Operator(support, np.eye(check_dim(dims)), dims)


def maximally_mixed(support: Iterable[int], dims: Sequence[int] | int = 2) -> Operator:
    op = identity(support, dims)
    return op.with_matrix(op.matrix / op.dim)


# --------------------------------------------------------------------------
# index bookkeeping


def reorder(matrix: np.ndarray, dims: Sequence[int], perm: Sequence[int]) -> np.ndarray:
    """Reorder tensor factors: new factor ``k`` is old factor ``perm[k]``."""
    n = len(dims)
    if list(perm) == list(range(n)):
        return matrix
    t = matrix.reshape(tuple(dims) * 2)
    axes = list(perm) + [n + p for p in perm]
    new_dim = matrix.shape[0]
    return t.transpose(axes).reshape(new_dim, new_dim)


def _local_dim(op: Operator, default: int = 2) -> int:
    return op.dims[0] if op.dims else default


def embed(op: Operator, target, local_dim: int | None = None) -> Operator:
    """``op ⊗ 1`` on the sorted support ``target``."""
    target = _sites(target)
    extra = [s for s in target if s not in op.support]
    if len(extra) + len(op.support) != len(target):
        raise ValueError(f"support {op.support} is not contained in {target}")
    if not extra:
        return op
    d = local_dim if local_dim is not None else _local_dim(op)
    order = list(op.support) + extra
    dims = list(op.dims) + [d] * len(extra)
    check_dim(dims)
    big = np.kron(op.matrix, np.eye(int(np.prod([d] * len(extra)))))
    perm = [order.index(s) for s in target]
    return Operator(target, reorder(big, dims, perm), [dims[p] for p in perm])


def tensor(a: Operator, b: Operator) -> Operator:
    if set(a.support) & set(b.support):
        raise ValueError("tensor factors must have disjoint supports")
    order = list(a.support) + list(b.support)
    dims = list(a.dims) + list(b.dims)
    check_dim(dims)
    big = np.kron(a.matrix, b.matrix)
    target = sorted(order)
    perm = [order.index(s) for s in target]
    return Operator(target, reorder(big, dims, perm), [dims[p] for p in perm])


def partial_trace(rho: Operator, keep) -> Operator:
    """Reduced operator on ``keep`` (a subset of ``rho.support``)."""
    keep = _sites(keep)
    if not set(keep) <= set(rho.support):
        raise ValueError(f"cannot keep {keep}: not inside support {rho.support}")
    if keep == rho.support:
        return rho
    pos = {s: k for k, s in enumerate(rho.support)}
    kidx = [pos[s] for s in keep]
    tidx = [k for k in range(len(rho.support)) if k not in kidx]
    perm = kidx + tidx
    dk = int(np.prod([rho.dims[k] for k in kidx], dtype=np.int64))
    dt = rho.dim // dk
    m = reorder(rho.matrix, rho.dims, perm).reshape(dk, dt, dk, dt)
    return Operator(keep, partial_trace_kernel(m), [rho.dims[k] for k in kidx])


def trace_out(rho: Operator, sites) -> Operator:
    drop = set(_sites(sites))
    return partial_trace(rho, [s for s in rho.support if s not in drop])


# --------------------------------------------------------------------------
# matrix functions


def eigh(m: np.ndarray, check: bool = True) -> tuple[np.ndarray, np.ndarray]:
    if check and not is_hermitian(m):
        raise NotHermitianError("matrix is not Hermitian")
    return np.linalg.eigh((m + m.conj().T) / 2)


def from_spectrum(w: np.ndarray, v: np.ndarray, values: np.ndarray) -> np.ndarray:
    return (v * values) @ v.conj().T


def hermitian_function(op: Operator | np.ndarray, f: Callable[[np.ndarray], np.ndarray]):
    """Apply ``f`` to the eigenvalues of a Hermitian operator."""
    m = op.matrix if isinstance(op, Operator) else op
    w, v = eigh(m)
    out = from_spectrum(w, v, f(w))
    return op.with_matrix(out) if isinstance(op, Operator) else out


def psd_power(m: np.ndarray, power: complex, rtol: float = PINV_RTOL) -> np.ndarray:
    """``m**power`` for positive semidefinite ``m``, taken on the support.

    Eigenvalues at or below ``rtol * max eigenvalue`` are treated as exact
    zeros, which makes negative powers pseudo-inverses.
    """
    w, v = eigh(m)
    cut = rtol * max(w.max(initial=0.0), 0.0)
    keep = w > cut
    vals = np.zeros(w.shape, dtype=np.result_type(power, float))
    vals[keep] = w[keep] ** power
    return from_spectrum(w, v, vals)


def support_projector(m: np.ndarray, rtol: float = PINV_RTOL) -> np.ndarray:
    w, v = eigh(m)
    keep = (w > rtol * max(w.max(initial=0.0), 0.0)).astype(float)
    return from_spectrum(w, v, keep)


def sqrtm_psd(m: np.ndarray) -> np.ndarray:
    w, v = eigh(m)
    return from_spectrum(w, v, np.sqrt(np.clip(w, 0.0, None)))


# --------------------------------------------------------------------------
# norms, fidelity, entropy


def _mat(x) -> np.ndarray:
    return x.matrix if isinstance(x, Operator) else np.asarray(x)


def operator_norm(x) -> float:
    """Largest singular value, from a Hermitian eigensolve (much cheaper than an SVD)."""
    m = _mat(x)
    if m.size == 0:
        return 0.0
    if is_hermitian(m, 1e-10):
        return float(np.abs(np.linalg.eigvalsh((m + m.conj().T) / 2)).max())
    return float(np.sqrt(max(np.linalg.eigvalsh(m.conj().T @ m).max(), 0.0)))


def trace_norm(x) -> float:
    m = _mat(x)
    if is_hermitian(m, 1e-10):
        return float(np.abs(np.linalg.eigvalsh((m + m.conj().T) / 2)).sum())
    return float(np.linalg.svd(m, compute_uv=False).sum())


def norms(x) -> tuple[float, float]:
    """``(operator norm, trace norm)``."""
    s = np.linalg.svd(_mat(x), compute_uv=False)
    return float(s.max(initial=0.0)), float(s.sum())


def trace_distance(rho, sigma) -> float:
    """``||rho - sigma||_1`` (no factor 1/2)."""
    return trace_norm(_mat(rho) - _mat(sigma))


def fidelity(rho, sigma) -> float:
    """``F = ||sqrt(rho) sqrt(sigma)||_1``."""
    a, b = _mat(rho), _mat(sigma)
    if a.shape != b.shape:
        raise ValueError("fidelity needs operators of equal dimension")
    if isinstance(rho, Operator) and isinstance(sigma, Operator):
        _same_space(rho, sigma)
    s = np.linalg.svd(sqrtm_psd(a) @ sqrtm_psd(b), compute_uv=False)
    return float(min(s.sum(), 1.0))


def entropy_of_spectrum(w: np.ndarray) -> float:
    w = w[w > ENTROPY_CUTOFF]
    return float(-(w * np.log2(w)).sum()) + 0.0


def von_neumann_entropy(rho) -> float:
    """Entropy in bits."""
    m = _mat(rho)
    return entropy_of_spectrum(np.linalg.eigvalsh((m + m.conj().T) / 2))


def check_density(rho: Operator, tol: float = 1e-10) -> Operator:
    """Raise unless ``rho`` is Hermitian, unit trace and positive within ``tol``."""
    if not rho.is_hermitian():
        raise NotHermitianError("density operator is not Hermitian")
    tr = rho.trace()
    if abs(tr - 1) > tol:
        raise ValueError(f"density operator has trace {tr}")
    wmin = np.linalg.eigvalsh(rho.matrix).min()
    if wmin < -tol:
        raise ValueError(f"density operator has negative eigenvalue {wmin}")
    return rho


def pure_state(support: Iterable[int], vector, dims: Sequence[int] | int = 2) -> Operator:
    psi = np.asarray(vector, dtype=complex)
    psi = psi / np.linalg.norm(psi)
    return Operator(_sites(support), np.outer(psi, psi.conj()), dims)


def dump_binary(op: Operator, path) -> None:
    """Write the matrix as little-endian complex128, row-major."""
    np.ascontiguousarray(op.matrix, dtype="<c16").tofile(path)


def load_binary(path, support: Iterable[int], dims: Sequence[int] | int = 2) -> Operator:
    support = _sites(support)
    if isinstance(dims, (int, np.integer)):
        dims = (int(dims),) * len(support)
    d = check_dim(dims)
    return Operator(support, np.fromfile(path, dtype="<c16").reshape(d, d), dims)
