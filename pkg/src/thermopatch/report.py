"""Run configuration, command implementations and the on-disk report format.

Every command returns a JSON-serializable payload; :func:`write_outputs`
stores it next to any CSV profile.  Payloads contain no timestamps or
timings, so equal configurations give byte-identical files.  Timings go to
a separate ``timing.json``.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .bp import bp_decay_profile
from .circuit import build_plan, default_r, ground_state_input, run_plan, stage_a_check
from .gibbs import (
    DecayFit,
    DecayProfile,
    clustering_profile,
    gibbs,
    local_indistinguishability_profile,
    markov_profile,
)
from .hamiltonian import LocalHamiltonian, build_model
from .lattice import Region, annulus, make_lattice
from .operators import Operator, partial_trace, trace_norm, von_neumann_entropy
from .recovery import channel_checks, petz_map, recovery_error
from .schedule import depth_schedule

COMMANDS = ("gibbs", "clustering", "markov", "bp", "recover", "prepare")


@dataclass
class RunConfig:
    command: str = "gibbs"
    model: str = "transverse_field_ising"
    params: dict = field(default_factory=dict)
    spec_file: str | None = None
    beta: float = 0.5
    dims: list = field(default_factory=lambda: [8])
    periodic: bool = False
    ells: list = field(default_factory=lambda: [1, 2, 3])
    r: int | None = None
    out: str = "thermopatch-out"
    seed: int = 0
    schedule_only: bool = False
    input_state: str = "mixed"
    target_error: float = 0.01
    schedule_L: int | None = None
    fit_c1: float = 1.0
    fit_c2: float = 1.0

    def validate(self) -> None:
        if self.command not in COMMANDS:
            raise ValueError(f"unknown command {self.command!r}")
        if not math.isfinite(self.beta) or self.beta < 0:
            raise ValueError(f"beta must be finite and >= 0, got {self.beta}")
        if not self.ells or any(int(e) != e or e < 0 for e in self.ells):
            raise ValueError("ell list must hold non-negative integers")
        if self.input_state not in ("mixed", "ground"):
            raise ValueError("input state must be 'mixed' or 'ground'")

    def hashed(self) -> dict:
        """Fields that determine the numeric output (the output directory does not)."""
        d = asdict(self)
        d.pop("out")
        if self.spec_file is not None:
            d["spec_file"] = hashlib.sha256(Path(self.spec_file).read_bytes()).hexdigest()
        return d

    @property
    def config_hash(self) -> str:
        blob = json.dumps(self.hashed(), sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()


def load_model(cfg: RunConfig) -> LocalHamiltonian:
    if cfg.spec_file:
        return LocalHamiltonian.load(cfg.spec_file)
    return build_model(cfg.model, cfg.params, make_lattice(cfg.dims, cfg.periodic))


def _axis_line(H: LocalHamiltonian) -> list[int]:
    """Sites along the first axis through the middle of the lattice."""
    lat = H.lattice
    if lat.D == 1:
        return list(range(lat.n_sites))
    mid = lat.dims[1] // 2
    return [lat.index((x, mid)) for x in range(lat.dims[0])]


def _center(H: LocalHamiltonian) -> int:
    lat = H.lattice
    return lat.index(tuple(d // 2 for d in lat.dims))


def _profile_payload(prof: DecayProfile) -> dict:
    return {"profile": [{"ell": e, "value": v, "context": c} for e, v, c in prof.samples], **prof.fit_json()}


# ---------------------------------------------------------------------- commands


def cmd_gibbs(cfg: RunConfig, H: LocalHamiltonian) -> tuple[dict, str | None]:
    res = gibbs(H, cfg.beta)
    p = np.clip(np.linalg.eigvalsh(res.state.matrix), 0.0, None)[::-1]
    payload = {
        "n_sites": H.lattice.n_sites,
        "dimension": res.state.dim,
        "ground_energy": float(res.energies[0]),
        "max_energy": float(res.energies[-1]),
        "log_partition": res.log_partition,
        "free_energy": -res.log_partition / cfg.beta if cfg.beta > 0 else None,
        "entropy_bits": von_neumann_entropy(res.state),
        "largest_populations": [float(x) for x in p[:8]],
        "mean_energy": float(np.real(np.trace(res.state.matrix @ H.assemble().matrix))),
    }
    return payload, None


def _random_unit_hermitian(d: int, rng: np.random.Generator) -> np.ndarray:
    g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    h = (g + g.conj().T) / 2
    return h / np.linalg.norm(h, 2)


def cmd_clustering(cfg: RunConfig, H: LocalHamiltonian) -> tuple[dict, str]:
    line = _axis_line(H)
    pairs = {}
    for ell in cfg.ells:
        if ell < 1 or ell >= len(line):
            raise ValueError(f"separation {ell} does not fit along a line of {len(line)} sites")
        pairs[ell] = ([line[0]], [line[ell]])
    prof = clustering_profile(H, cfg.beta, None, pairs)
    # duality spot-check with seeded random probes: Cov(f, g) <= ||f|| ||g|| * upper
    from .gibbs import covariance, gibbs_state
    rho = gibbs_state(H, cfg.beta)
    rng = np.random.default_rng(cfg.seed)
    spot = []
    for (ell, up, _), (a, b) in zip(prof.samples, [pairs[e] for e in sorted(pairs)]):
        worst = 0.0
        for _ in range(4):
            f = Operator(a, _random_unit_hermitian(2 ** len(a), rng))
            g = Operator(b, _random_unit_hermitian(2 ** len(b), rng))
            worst = max(worst, covariance(rho, f, g))
        spot.append({"ell": ell, "max_random_covariance": worst, "within_upper": bool(worst <= up + 1e-12)})
    payload = _profile_payload(prof)
    payload["random_probes"] = {"seed": cfg.seed, "per_ell": 4, "checks": spot}
    return payload, prof.to_csv()


def cmd_markov(cfg: RunConfig, H: LocalHamiltonian) -> tuple[dict, str]:
    family = sorted({0, _center(H)})
    prof = markov_profile(H, cfg.beta, None, [[a] for a in family], [e for e in cfg.ells if e >= 1])
    payload = _profile_payload(prof)
    payload["family"] = [[a] for a in family]
    return payload, prof.to_csv()


def cmd_bp(cfg: RunConfig, H: LocalHamiltonian) -> tuple[dict, str]:
    lat = H.lattice
    left = [s for s in range(lat.n_sites) if lat.coords[s, 0] < lat.dims[0] // 2]
    prof = bp_decay_profile(H, cfg.beta, left, cfg.ells)
    payload = _profile_payload(prof)
    payload["cut_sites"] = left
    return payload, prof.to_csv()


def cmd_recover(cfg: RunConfig, H: LocalHamiltonian) -> tuple[dict, str]:
    from .gibbs import gibbs_state
    rho = gibbs_state(H, cfg.beta)
    lat = H.lattice
    a = Region(lat, [_center(H)])
    rows = []
    for ell in cfg.ells:
        if ell < 1:
            continue
        b = annulus(a, ell, lat.full())
        c = lat.full() - a - b
        R = petz_map(partial_trace(rho, (a | b).members), a.members, b.members)
        rep = recovery_error(rho, a.members, b.members, c.members, R)
        row = {"ell": ell, "A": list(a.members), "B": list(b.members), **rep.to_dict()}
        if len(b) <= 4:
            row.update(channel_checks(R))
        rows.append(row)
    prof = DecayProfile("markov")
    for r in rows:
        prof.add(r["ell"], r["trace_distance"], f"|B|={len(r['B'])}")
    return {"recoveries": rows}, prof.to_csv()


def cmd_prepare(cfg: RunConfig, H: LocalHamiltonian) -> tuple[dict, str | None]:
    lat = H.lattice
    if cfg.schedule_only:
        L = cfg.schedule_L or max(lat.dims)
        fit = DecayFit(c1=cfg.fit_c1, c2=cfg.fit_c2, residual=0.0, n_used=0, fitted=True)
        sched = depth_schedule(L, lat.D, cfg.target_error, [fit])
        payload = {"schedule": sched.to_dict(), "fit": fit.to_dict()}
        if sched.feasible and L > 1:
            payload["depth_over_loglog"] = sched.depth / max(math.log(max(math.log(L), math.e)), 1.0)
        return payload, None
    ell = int(cfg.ells[0])
    r = cfg.r if cfg.r is not None else default_r(min(lat.dims), ell)
    plan = build_plan(H, cfg.beta, r, ell)
    psi = ground_state_input(H) if cfg.input_state == "ground" else None
    _, report = run_plan(plan, psi, premises=True)
    out = report.to_dict()
    out.pop("wall_clock")
    payload = {
        "plan": plan.to_dict(),
        "report": out,
        "stage_a_check": stage_a_check(plan),
        "input_state": cfg.input_state,
    }
    return payload, None


DISPATCH = {
    "gibbs": cmd_gibbs,
    "clustering": cmd_clustering,
    "markov": cmd_markov,
    "bp": cmd_bp,
    "recover": cmd_recover,
    "prepare": cmd_prepare,
}


def run(cfg: RunConfig) -> dict:
    """Validate, execute and write the outputs of one command; returns the JSON document."""
    cfg.validate()
    H = load_model(cfg)
    start = time.perf_counter()
    payload, csv_text = DISPATCH[cfg.command](cfg, H)
    elapsed = time.perf_counter() - start
    doc = {
        "artifact": "thermopatch",
        "version": __version__,
        "command": cfg.command,
        "config": cfg.hashed(),
        "config_hash": cfg.config_hash,
        "result": payload,
    }
    write_outputs(cfg, doc, csv_text, elapsed)
    return doc


def dumps(doc: dict) -> str:
    return json.dumps(doc, indent=1, sort_keys=True, default=_default) + "\n"


def _default(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, tuple):
        return list(x)
    raise TypeError(f"cannot serialize {type(x).__name__}")


def write_outputs(cfg: RunConfig, doc: dict, csv_text: str | None, elapsed: float) -> None:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{cfg.command}.json").write_text(dumps(doc))
    if csv_text is not None:
        (out / f"{cfg.command}.csv").write_text(csv_text)
    (out / "timing.json").write_text(json.dumps({"command": cfg.command, "seconds": elapsed}) + "\n")
