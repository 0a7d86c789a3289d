"""The staged patching circuit: plans built from tilings, their execution on
dense full-lattice states, premise measurements and the 1-D specialization."""

from __future__ import annotations

import math
import random
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .bp import bp_operator_for_cut, localize
from .gibbs import correlation_bracket, gibbs_state, cmi
from .hamiltonian import LocalHamiltonian
from .lattice import GeometryError, Lattice, Region, Tiling, tiling_plan
from .operators import Operator, _sites, check_dim, maximally_mixed, partial_trace, tensor, trace_norm, trace_out
from .recovery import RecoveryChannel, apply_recovery, petz_map

PLAN_FORMAT = "thermopatch-plan"


@dataclass(frozen=True)
class ChannelSpec:
    """One channel of a stage.

    ``replace``: trace out ``erased`` and insert the marginal of ``rho^reference``.
    ``recover``: trace out ``erased`` and rebuild it from ``shield`` with the
    Petz map of ``rho^reference`` on ``erased + shield``.
    """

    kind: str
    erased: tuple[int, ...]
    shield: tuple[int, ...]
    reference: tuple[int, ...]

    def to_dict(self) -> dict:
        return {"kind": self.kind, "erased": list(self.erased), "shield": list(self.shield),
                "reference": list(self.reference)}

    @classmethod
    def from_dict(cls, d: dict) -> "ChannelSpec":
        return cls(d["kind"], tuple(d["erased"]), tuple(d["shield"]), tuple(d["reference"]))


@dataclass(frozen=True)
class Stage:
    name: str
    channels: tuple[ChannelSpec, ...]

    def to_dict(self) -> dict:
        return {"name": self.name, "channels": [c.to_dict() for c in self.channels]}


@dataclass
class CircuitPlan:
    H: LocalHamiltonian
    beta: float
    r: int
    ell: int
    tiling: Tiling
    stages: tuple[Stage, ...]

    @property
    def n_a(self) -> int:
        return len(self.tiling.stage_a)

    @property
    def n_b(self) -> int:
        return len(self.tiling.stage_b)

    def references(self) -> list[tuple[int, ...]]:
        """Every restricted Gibbs state the plan needs, in first-use order."""
        seen = []
        for st in self.stages:
            for ch in st.channels:
                if ch.reference not in seen:
                    seen.append(ch.reference)
        return seen

    def prefetch(self) -> None:
        for X in self.references():
            gibbs_state(self.H, self.beta, X)

    def to_dict(self) -> dict:
        return {
            "format": PLAN_FORMAT,
            "model": self.H.to_dict(),
            "beta": self.beta,
            "r": self.r,
            "ell": self.ell,
            "stages": [s.to_dict() for s in self.stages],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "CircuitPlan":
        if doc.get("format") != PLAN_FORMAT:
            raise ValueError(f"not a {PLAN_FORMAT} document")
        H = LocalHamiltonian.from_dict(doc["model"])
        plan = build_plan(H, doc["beta"], doc["r"], doc["ell"])
        stored = tuple(Stage(s["name"], tuple(ChannelSpec.from_dict(c) for c in s["channels"])) for s in doc["stages"])
        if stored != plan.stages:
            raise ValueError("stored stages do not match the plan rebuilt from its parameters")
        return plan


def _tile_channel(tile, reference: tuple[int, ...]) -> ChannelSpec:
    shield = _sites(tile.shield)
    kind = "recover" if shield else "replace"
    return ChannelSpec(kind, _sites(tile.core), shield, reference)


def build_plan(H: LocalHamiltonian, beta: float, r: int, ell: int) -> CircuitPlan:
    """Stage C replacement, stage B recoveries (2-D) and stage A recoveries.

    Stage A channels reference the full Gibbs state, stage B channels the
    Gibbs state of the lattice with every ``A_-`` removed and stage C
    inserts the Gibbs state of each remaining component.
    """
    lat = H.lattice
    tiling = tiling_plan(lat, r, ell)
    problems = tiling.violations()
    if problems:
        raise GeometryError("; ".join(problems))
    full = tuple(range(lat.n_sites))
    stages = []
    comps = tiling.stage_c.components()
    if comps:
        stages.append(Stage("C", tuple(ChannelSpec("replace", _sites(c), (), _sites(c)) for c in comps)))
    if tiling.stage_b:
        punctured = _sites(lat.full() - tiling.minus_a)
        stages.append(Stage("B", tuple(_tile_channel(t, punctured) for t in tiling.stage_b)))
    stages.append(Stage("A", tuple(_tile_channel(t, full) for t in tiling.stage_a)))
    for st in stages:
        for ch in st.channels:
            check_dim((H.site_dim,) * len(ch.reference))
    return CircuitPlan(H, float(beta), int(r), int(ell), tiling, tuple(stages))


# ---------------------------------------------------------------------- execution


@dataclass
class PreparationReport:
    distance: float
    stage_distances: list[tuple[str, float]]
    trace_losses: list[float]
    premises: dict = field(default_factory=dict)
    prefactor: float = float("nan")
    wall_clock: float = 0.0
    n_a: int = 0
    n_b: int = 0
    bound_label: str = "c D L^D (delta(ell) + eps(ell/2) + gamma(ell/2))"

    @property
    def premise_sum(self) -> float:
        p = self.premises
        if not p:
            return float("nan")
        return p["delta"] + p["epsilon"] + p["gamma"]

    def rhs(self, c: float = 1.0) -> float:
        return c * self.prefactor * self.premise_sum

    def to_dict(self) -> dict:
        return {
            "distance": self.distance,
            "stage_distances": [{"stage": s, "distance": d} for s, d in self.stage_distances],
            "max_trace_loss": max(self.trace_losses, default=0.0),
            "premises": dict(self.premises),
            "prefactor": self.prefactor,
            "rhs_unit_constant": self.rhs(1.0) if self.premises else None,
            "bound": self.bound_label,
            "n_a": self.n_a,
            "n_b": self.n_b,
            "wall_clock": self.wall_clock,
        }


class _Channels:
    """Lazily built Petz maps and replacement states for one plan."""

    def __init__(self, plan: CircuitPlan):
        self.plan = plan
        self._cache: dict = {}

    def reference(self, X) -> Operator:
        return gibbs_state(self.plan.H, self.plan.beta, X)

    def get(self, ch: ChannelSpec):
        hit = self._cache.get(ch)
        if hit is None:
            ref = self.reference(ch.reference)
            if ch.kind == "replace":
                hit = partial_trace(ref, ch.erased)
            else:
                hit = petz_map(partial_trace(ref, ch.erased + ch.shield), ch.erased, ch.shield)
            self._cache[ch] = hit
        return hit


def apply_channel(state: Operator, ch: ChannelSpec, built) -> tuple[Operator, float]:
    """Apply one stage channel; returns the new state and its relative trace loss."""
    rest = trace_out(state, ch.erased)
    if ch.kind == "replace":
        return tensor(rest, built), 0.0
    return apply_recovery(built, rest, return_loss=True)


def run_stages(plan: CircuitPlan, state: Operator, stages: Sequence[Stage], channels: _Channels | None = None,
               target: Operator | None = None, shuffle_seed: int | None = None):
    channels = channels if channels is not None else _Channels(plan)
    dists, losses = [], []
    rng = random.Random(shuffle_seed) if shuffle_seed is not None else None
    for st in stages:
        order = list(st.channels)
        if rng is not None:
            rng.shuffle(order)
        for ch in order:
            state, loss = apply_channel(state, ch, channels.get(ch))
            losses.append(loss)
        if target is not None:
            dists.append((st.name, trace_norm(state.matrix - target.matrix)))
    return state, dists, losses


def run_plan(plan: CircuitPlan, psi: Operator | None = None, premises: bool = False,
             shuffle_seed: int | None = None) -> tuple[Operator, PreparationReport]:
    """Execute the plan on ``psi`` (default: maximally mixed) and compare with the exact ``rho``."""
    start = time.perf_counter()
    lat = plan.H.lattice
    full = tuple(range(lat.n_sites))
    if psi is None:
        psi = maximally_mixed(full, plan.H.site_dim)
    if psi.support != full:
        raise ValueError("input state must live on the full lattice")
    plan.prefetch()
    rho = gibbs_state(plan.H, plan.beta)
    out, dists, losses = run_stages(plan, psi, plan.stages, target=rho, shuffle_seed=shuffle_seed)
    report = PreparationReport(
        distance=dists[-1][1],
        stage_distances=dists,
        trace_losses=losses,
        n_a=plan.n_a,
        n_b=plan.n_b,
        prefactor=lat.D * max(lat.dims) ** lat.D,
    )
    if premises:
        report.premises = measure_premises(plan)
    report.wall_clock = time.perf_counter() - start
    return out, report


def stage_a_check(plan: CircuitPlan) -> dict:
    """``||F_A(rho) - rho||_1`` next to the sum of the stage-A recovery errors."""
    channels = _Channels(plan)
    rho = gibbs_state(plan.H, plan.beta)
    stage = next(s for s in plan.stages if s.name == "A")
    out, _, _ = run_stages(plan, rho, [stage], channels)
    errors = []
    for ch in stage.channels:
        single, _ = apply_channel(rho, ch, channels.get(ch))
        errors.append(trace_norm(single.matrix - rho.matrix))
    return {"distance": trace_norm(out.matrix - rho.matrix), "channel_errors": errors, "bound": sum(errors)}


# ---------------------------------------------------------------------- premises


def plan_delta(plan: CircuitPlan) -> float:
    """Largest ``I(core : outside | shield)`` over the plan's recovery channels."""
    best = 0.0
    for st in plan.stages:
        for ch in st.channels:
            if ch.kind != "recover":
                continue
            outside = tuple(s for s in ch.reference if s not in set(ch.erased + ch.shield))
            if not outside:
                continue
            ref = gibbs_state(plan.H, plan.beta, ch.reference)
            best = max(best, cmi(ref, ch.erased, ch.shield, outside, raw=True))
    return best


def plan_epsilon(plan: CircuitPlan, separation: float) -> float:
    """Largest single-site correlation bracket (upper end) at the smallest distance ``>= separation``
    in each reference state of the plan."""
    lat = plan.H.lattice
    eu = lat.euclidean
    best = 0.0
    for X in plan.references():
        if len(X) < 2:
            continue
        ref = gibbs_state(plan.H, plan.beta, X)
        sub = eu[np.ix_(X, X)]
        admissible = sub[sub >= separation - 1e-9]
        if admissible.size == 0:
            continue
        d = admissible.min()
        for i, a in enumerate(X):
            for j in range(i + 1, len(X)):
                if abs(sub[i, j] - d) < 1e-9:
                    best = max(best, correlation_bracket(ref, [a], [X[j]], 1)[1])
    return best


def plan_gamma(plan: CircuitPlan, radius: float) -> float:
    """Normalized belief-propagation error for the cut through the middle of the first axis."""
    lat = plan.H.lattice
    left = [s for s in range(lat.n_sites) if lat.coords[s, 0] < lat.dims[0] // 2]
    if not left or len(left) == lat.n_sites:
        return 0.0
    bp = bp_operator_for_cut(plan.H, plan.beta, left)
    rho0 = gibbs_state(plan.H.without(plan.H.boundary_terms(left)), plan.beta).matrix
    eta, eta_l = bp.eta.matrix, localize(bp, radius).matrix
    exact = eta @ rho0 @ eta.conj().T
    approx = eta_l @ rho0 @ eta_l.conj().T
    return trace_norm(exact / np.trace(exact).real - approx / np.trace(approx).real)


def measure_premises(plan: CircuitPlan) -> dict:
    half = plan.ell / 2
    return {
        "ell": plan.ell,
        "delta": plan_delta(plan),
        "epsilon": plan_epsilon(plan, half),
        "gamma": plan_gamma(plan, half),
    }


# ---------------------------------------------------------------------- 1-D


def default_r(n: int, ell: int) -> int:
    return min(n, 2 * ell + 2)


def prepare_1d(H: LocalHamiltonian, beta: float, ell: int, psi: Operator | None = None, r: int | None = None,
               premises: bool = False) -> tuple[Operator, PreparationReport]:
    """Depth-two preparation of a chain: replace the gaps, then recover the intervals."""
    lat = H.lattice
    if lat.D != 1:
        raise GeometryError("prepare_1d needs a one-dimensional lattice")
    r = default_r(lat.n_sites, ell) if r is None else r
    plan = build_plan(H, beta, r, ell)
    out, report = run_plan(plan, psi, premises=premises)
    report.prefactor = float(plan.n_a)
    report.bound_label = "c N_X (eps(ell/2) + gamma(ell/2) + delta(ell))"
    return out, report


def ground_state_input(H: LocalHamiltonian) -> Operator:
    """Projector onto the lowest eigenvector of ``H`` on the full lattice."""
    h = H.assemble()
    w, v = np.linalg.eigh(h.matrix)
    vec = v[:, 0]
    return h.with_matrix(np.outer(vec, vec.conj()))
