"""Petz and rotated-Petz recovery channels ``B -> AB``, their application to
states on larger supports, Fawzi-Renner style checks and disjoint unions."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .gibbs import CMI_TOL, cmi
from .operators import (
    InvariantError,
    Operator,
    _sites,
    check_dim,
    fidelity,
    partial_trace,
    psd_power,
    reorder,
    support_projector,
    trace_norm,
)

log = logging.getLogger(__name__)

TRACE_LOSS_FLAG = 1e-8
COMMUTE_TOL = 1e-12
CONVERSE_CONSTANT = 13.0
QUAD_RANGE = 20.0
QUAD_POINTS = 51


class RecoveryError(ValueError):
    pass


def rotation_density(t) -> np.ndarray:
    """``pi/2 (cosh(pi t) + 1)^{-1}``, a probability density on the real line."""
    t = np.asarray(t, dtype=float)
    return (np.pi / 2) / (np.cosh(np.pi * t) + 1)


def quadrature(points: int = QUAD_POINTS, half_width: float = QUAD_RANGE) -> tuple[np.ndarray, np.ndarray, float]:
    """Trapezoid nodes and weights for the rotation density.

    Returns ``(t, w, err)`` with ``w`` rescaled to sum to one and ``err`` the
    deviation of the raw trapezoid mass from one.
    """
    t = np.linspace(-half_width, half_width, points)
    h = t[1] - t[0]
    w = rotation_density(t) * h
    w[[0, -1]] *= 0.5
    raw = float(w.sum())
    return t, w / raw, abs(1.0 - raw)


def _sandwich(k: np.ndarray, rho: np.ndarray, kdim: int) -> np.ndarray:
    """``(K ⊗ 1) rho (K ⊗ 1)^dag`` where ``rho``'s leading factor has dimension ``kdim``."""
    r = rho.shape[0] // kdim
    rho4 = rho.reshape(kdim, r, kdim, r)
    left = np.tensordot(k, rho4, axes=([1], [0]))
    both = np.tensordot(left, k.conj(), axes=([2], [1]))
    out = k.shape[0]
    return both.transpose(0, 1, 3, 2).reshape(out * r, out * r)


@dataclass(frozen=True, eq=False)
class RecoveryChannel:
    """``X_B -> sum_k w_k L_k (M_k X_B M_k^dag ⊗ 1_A) L_k^dag``.

    ``L_k = sigma_AB^{(1+i t_k)/2}`` with ``AB`` ordered as ``erased + shield``
    and ``M_k = sigma_B^{-(1+i t_k)/2}`` taken on the support of ``sigma_B``.
    """

    sigma_ab: Operator
    erased: tuple[int, ...]
    shield: tuple[int, ...]
    rotation: Union[float, str]
    nodes: tuple[float, ...]
    weights: tuple[float, ...]
    lefts: tuple[np.ndarray, ...] = field(repr=False)
    rights: tuple[np.ndarray, ...] = field(repr=False)
    projector_b: np.ndarray = field(repr=False)
    quadrature_error: float = 0.0

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(sorted(self.erased + self.shield))

    @property
    def dims_erased(self) -> list[int]:
        return [self.sigma_ab.dims[self.sigma_ab.support.index(s)] for s in self.erased]

    @property
    def dims_shield(self) -> list[int]:
        return [self.sigma_ab.dims[self.sigma_ab.support.index(s)] for s in self.shield]

    def raw(self, state: Operator) -> Operator:
        """Unnormalized action on ``state`` (support contains ``shield``, excludes ``erased``)."""
        support = state.support
        if set(self.erased) & set(support):
            raise RecoveryError(f"state already contains erased sites {sorted(set(self.erased) & set(support))}")
        if not set(self.shield) <= set(support):
            raise RecoveryError(f"state support {support} does not contain the shield {self.shield}")
        if not self.erased:
            return state
        pos = {s: k for k, s in enumerate(support)}
        rest = [s for s in support if s not in set(self.shield)]
        order = list(self.shield) + rest
        dims = [state.dims[pos[s]] for s in order]
        m = reorder(state.matrix, state.dims, [pos[s] for s in order])
        db = int(np.prod(self.dims_shield, dtype=np.int64))
        da = int(np.prod(self.dims_erased, dtype=np.int64))
        check_dim([da] + dims)
        eye_a = np.eye(da)
        total = None
        for w, left, right in zip(self.weights, self.lefts, self.rights):
            y = _sandwich(right, m, db)
            z = _sandwich(left, np.kron(eye_a, y), da * db)
            total = w * z if total is None else total + w * z
        out_order = list(self.erased) + order
        out_dims = self.dims_erased + dims
        target = sorted(out_order)
        perm = [out_order.index(s) for s in target]
        total = reorder(total, out_dims, perm)
        return Operator(target, (total + total.conj().T) / 2, [out_dims[p] for p in perm])

    def on_shield(self, x: np.ndarray) -> Operator:
        """Action on an operator given as a matrix on ``shield`` (in the shield order)."""
        op = Operator(self.shield, x, self.dims_shield) if list(self.shield) == sorted(self.shield) else None
        if op is None:
            order = sorted(self.shield)
            perm = [self.shield.index(s) for s in order]
            op = Operator(order, reorder(x, self.dims_shield, perm), [self.dims_shield[p] for p in perm])
        if not self.erased:
            return op
        # no Hermitian symmetrization here: basis elements are not Hermitian
        pos = {s: k for k, s in enumerate(op.support)}
        m = reorder(op.matrix, op.dims, [pos[s] for s in self.shield])
        db = m.shape[0]
        da = int(np.prod(self.dims_erased, dtype=np.int64))
        total = sum(w * _sandwich(left, np.kron(np.eye(da), right @ m @ right.conj().T), da * db)
                    for w, left, right in zip(self.weights, self.lefts, self.rights))
        out_order = list(self.erased) + list(self.shield)
        out_dims = self.dims_erased + self.dims_shield
        target = sorted(out_order)
        perm = [out_order.index(s) for s in target]
        return Operator(target, reorder(total, out_dims, perm), [out_dims[p] for p in perm])


def petz_map(sigma_ab: Operator, A, B, t: Union[float, str] = 0.0) -> RecoveryChannel:
    """Rotated Petz map reconstructing ``A`` from ``B`` with reference ``sigma_ab``.

    ``t = 0`` gives the plain Petz map and ``t = "integrated"`` averages the
    rotated maps over the trapezoid grid of :func:`quadrature`.
    """
    A, B = _sites(A), _sites(B)
    if set(A) & set(B):
        raise RecoveryError("erased and shield regions must be disjoint")
    if not B and A:
        raise RecoveryError("cannot recover from an empty shield")
    ab = tuple(sorted(A + B))
    if not set(ab) <= set(sigma_ab.support):
        raise RecoveryError(f"reference support {sigma_ab.support} does not contain {ab}")
    sigma_ab = partial_trace(sigma_ab, ab)
    sigma_b = partial_trace(sigma_ab, B)
    order = list(A) + list(B)
    pos = {s: k for k, s in enumerate(ab)}
    s_ab = reorder(sigma_ab.matrix, sigma_ab.dims, [pos[s] for s in order])
    qerr = 0.0
    if isinstance(t, str):
        if t != "integrated":
            raise RecoveryError(f"unknown rotation {t!r}")
        nodes, weights, qerr = quadrature()
    else:
        nodes, weights = np.array([float(t)]), np.array([1.0])
    lefts, rights = [], []
    for tk in nodes:
        lefts.append(psd_power(s_ab, (1 + 1j * tk) / 2) if tk else psd_power(s_ab, 0.5))
        rights.append(psd_power(sigma_b.matrix, -(1 + 1j * tk) / 2) if tk else psd_power(sigma_b.matrix, -0.5))
    return RecoveryChannel(
        sigma_ab=sigma_ab,
        erased=A,
        shield=B,
        rotation=t,
        nodes=tuple(float(x) for x in nodes),
        weights=tuple(float(x) for x in weights),
        lefts=tuple(lefts),
        rights=tuple(rights),
        projector_b=support_projector(sigma_b.matrix),
        quadrature_error=qerr,
    )


@dataclass(frozen=True, eq=False)
class ComposedRecovery:
    """Channels with pairwise disjoint supports applied one after another."""

    channels: tuple
    commutation_gap: float = 0.0

    @property
    def erased(self) -> tuple[int, ...]:
        return tuple(sorted(s for c in self.channels for s in c.erased))

    @property
    def shield(self) -> tuple[int, ...]:
        return tuple(sorted(s for c in self.channels for s in c.shield))

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(sorted(self.erased + self.shield))

    def raw(self, state: Operator) -> Operator:
        for c in self.channels:
            state = c.raw(state)
        return state


Channel = Union[RecoveryChannel, ComposedRecovery]


def apply_recovery(R: Channel, state: Operator, return_loss: bool = False):
    """``(R ⊗ id)(state)`` renormalized to unit trace.

    The relative trace lost to the pseudo-inverse support is logged; losses
    above ``TRACE_LOSS_FLAG`` are reported at warning level.
    """
    out = R.raw(state)
    before = state.trace().real
    after = out.trace().real
    loss = abs(1.0 - after / before) if before else 0.0
    if loss > TRACE_LOSS_FLAG:
        log.warning("recovery on %s lost trace %.3e", R.erased, loss)
    else:
        log.debug("recovery on %s trace loss %.3e", R.erased, loss)
    if after > 0:
        out = out.with_matrix(out.matrix / after)
    return (out, loss) if return_loss else out


def choi_matrix(R: RecoveryChannel) -> np.ndarray:
    """``sum_ij R(|i><j|) ⊗ |i><j|`` with the output on ``A ∪ B`` (sorted) first."""
    db = int(np.prod(R.dims_shield, dtype=np.int64))
    blocks = []
    for i in range(db):
        row = []
        for j in range(db):
            e = np.zeros((db, db), dtype=complex)
            e[i, j] = 1.0
            row.append(R.on_shield(e).matrix)
        blocks.append(row)
    dout = blocks[0][0].shape[0]
    choi = np.zeros((dout * db, dout * db), dtype=complex)
    for i in range(db):
        for j in range(db):
            choi[i::db, j::db] = blocks[i][j]
    return choi


def channel_checks(R: RecoveryChannel) -> dict:
    """Smallest Choi eigenvalue and worst deviation of ``tr R(E_ij)`` from ``(Pi_B)_ji``."""
    choi = choi_matrix(R)
    min_eig = float(np.linalg.eigvalsh((choi + choi.conj().T) / 2).min())
    db = int(np.prod(R.dims_shield, dtype=np.int64))
    # the shield order of R may differ from sorted order; compare in shield order
    worst = 0.0
    for i in range(db):
        for j in range(db):
            e = np.zeros((db, db), dtype=complex)
            e[i, j] = 1.0
            tr = np.trace(R.on_shield(e).matrix)
            worst = max(worst, abs(tr - R.projector_b[j, i]))
    return {"choi_min_eigenvalue": min_eig, "trace_defect": float(worst)}


@dataclass
class RecoveryReport:
    trace_distance: float
    fidelity: float
    cmi: float
    fr_check: dict
    trace_loss: float

    @property
    def flagged(self) -> bool:
        return self.trace_loss > TRACE_LOSS_FLAG

    def to_dict(self) -> dict:
        return {
            "trace_distance": self.trace_distance,
            "fidelity": self.fidelity,
            "cmi": self.cmi,
            "fr_check": dict(self.fr_check),
            "trace_loss": self.trace_loss,
            "flagged": self.flagged,
        }


def converse_bound(d_ab: int, d1: float) -> float:
    return CONVERSE_CONSTANT * math.log2(d_ab) * math.sqrt(max(d1, 0.0))


def recovery_error(sigma: Operator, A, B, C, R: Channel) -> RecoveryReport:
    """Compare ``sigma`` with ``R(sigma_BC)`` and run the three entropy checks.

    The two lower bounds on the conditional mutual information are only
    guaranteed for some channel and are reported; the converse upper bound
    holds for every channel and raises :class:`InvariantError` when broken.
    """
    A, B, C = _sites(A), _sites(B), _sites(C)
    if tuple(sorted(A + B + C)) != sigma.support or len(set(A + B + C)) != len(A + B + C):
        raise RecoveryError("A, B, C must partition the support of sigma")
    if tuple(sorted(R.erased)) != A or not set(R.shield) <= set(B):
        raise RecoveryError("channel erased/shield regions do not match A and B")
    channels = R.channels if isinstance(R, ComposedRecovery) else (R,)
    for c in channels:
        ref = partial_trace(sigma, c.support).matrix
        if trace_norm(ref - c.sigma_ab.matrix) > 1e-10:
            raise RecoveryError("channel reference does not match the marginal of sigma")
    bc = partial_trace(sigma, sorted(B + C))
    rec, loss = apply_recovery(R, bc, return_loss=True)
    d1 = trace_norm(sigma.matrix - rec.matrix)
    f = fidelity(sigma, rec)
    info = cmi(sigma, A, B, C)
    d_ab = sigma.dim_of(A + B)
    lhs_i = -2 * math.log2(f) if f > 0 else math.inf
    checks = {
        "fidelity_bound": bool(info >= lhs_i - CMI_TOL),
        "trace_bound": bool(info >= d1**2 / (4 * math.log(2)) - CMI_TOL),
        "converse": bool(info <= converse_bound(d_ab, d1) + CMI_TOL),
    }
    if not checks["converse"]:
        raise InvariantError(f"converse bound violated: CMI {info} > {converse_bound(d_ab, d1)}")
    return RecoveryReport(d1, f, info, checks, loss)


def random_density(dims: Sequence[int], rng: np.random.Generator) -> np.ndarray:
    d = int(np.prod(dims, dtype=np.int64))
    g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def union_compose(R1: Channel, R2: Channel, seed: int = 0) -> ComposedRecovery:
    """Compose recoveries with disjoint supports, checking both orders agree."""
    if set(R1.support) & set(R2.support):
        raise RecoveryError("union of recoveries needs disjoint supports")
    parts1 = R1.channels if isinstance(R1, ComposedRecovery) else (R1,)
    parts2 = R2.channels if isinstance(R2, ComposedRecovery) else (R2,)
    shield = sorted(R1.shield + R2.shield)
    dims = []
    for s in shield:
        src = next(c for c in parts1 + parts2 if s in c.shield)
        dims.append(src.dims_shield[src.shield.index(s)])
    state = Operator(shield, random_density(dims, np.random.default_rng(seed)), dims)
    one = R2.raw(R1.raw(state)).matrix
    two = R1.raw(R2.raw(state)).matrix
    gap = trace_norm(one - two)
    if gap > COMMUTE_TOL:
        raise InvariantError(f"disjoint recoveries fail to commute ({gap:.2e})")
    return ComposedRecovery(parts1 + parts2, gap)


def rotation_comparison(sigma: Operator, A, B, C) -> dict:
    """Integrated rotated map against every single rotation on the quadrature grid.

    By convexity of the trace norm the integrated error never exceeds the
    weighted mean of the single-rotation errors; that ordering is enforced.
    Whether it also stays within ``quadrature_error`` of the best single
    rotation is only reported.
    """
    sigma_ab = partial_trace(sigma, sorted(_sites(A) + _sites(B)))
    integrated = petz_map(sigma_ab, A, B, "integrated")
    e_int = recovery_error(sigma, A, B, C, integrated).trace_distance
    singles = np.array([recovery_error(sigma, A, B, C, petz_map(sigma_ab, A, B, float(t))).trace_distance
                        for t in integrated.nodes])
    mean = float(np.dot(integrated.weights, singles))
    if e_int > mean + 1e-10:
        raise InvariantError(f"integrated error {e_int:.3e} exceeds the mean single-rotation error {mean:.3e}")
    best = int(np.argmin(singles))
    return {
        "integrated": e_int,
        "best_single": float(singles[best]),
        "best_rotation": integrated.nodes[best],
        "weighted_mean": mean,
        "gap": e_int - float(singles[best]),
        "quadrature_error": integrated.quadrature_error,
        "within_quadrature_error": bool(e_int <= singles[best] + integrated.quadrature_error),
    }
