"""Depth arithmetic for the iterated (renormalized) patching construction and
for the strictly local variant.  Nothing here touches a quantum state."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Union

from .gibbs import DecayFit

TRIVIAL_ERROR = 2.0
MAX_LEVELS = 10_000


@dataclass(frozen=True)
class PowerLawFit:
    """``c / ell**p``."""

    c: float
    p: float

    def __call__(self, ell: float) -> float:
        return self.c * float(ell) ** (-self.p)


Fit = Union[DecayFit, PowerLawFit]


@dataclass
class Schedule:
    L: int
    D: int
    target_error: float
    levels: list[int] = field(default_factory=list)
    depth: int = 0
    feasible: bool = True
    reason: str = ""
    strictly_local_depth: int | None = None

    def to_dict(self) -> dict:
        return {
            "L": self.L,
            "D": self.D,
            "target_error": self.target_error,
            "levels": list(self.levels),
            "n_levels": max(len(self.levels) - 1, 0),
            "depth": self.depth,
            "feasible": self.feasible,
            "reason": self.reason,
            "strictly_local_depth": self.strictly_local_depth,
        }


def _decays(fit: Fit, D: int) -> str:
    if isinstance(fit, PowerLawFit):
        if not (fit.c > 0 and fit.p > D):
            return f"power law with exponent {fit.p} does not beat ell^-{D}"
        return ""
    if not fit.fitted or not math.isfinite(fit.c2) or fit.c2 <= 0 or fit.c1 <= 0:
        return "fit is not a decaying exponential"
    return ""


def _log_error(fits: Sequence[Fit], ell: float) -> float:
    """``log sum_k e_k(ell)`` computed without underflow."""
    logs = []
    for f in fits:
        if isinstance(f, PowerLawFit):
            logs.append(math.log(f.c) - f.p * math.log(ell))
        else:
            logs.append(math.log(f.c1) - f.c2 * ell)
    top = max(logs)
    return top + math.log(sum(math.exp(x - top) for x in logs))


def next_scale(ell: int, D: int, target_error: float, fits: Sequence[Fit], cap: int | None = None) -> int:
    """Largest side ``L'`` with ``D L'^D e(ell) <= target_error``, where ``e`` sums the fits.

    With ``cap`` set the result is ``min(L', cap)``, which avoids overflow
    for doubly exponential growth.
    """
    log_side = (math.log(target_error) - math.log(D) - _log_error(fits, ell)) / D
    if cap is not None and log_side >= math.log(cap):
        return cap
    return int(math.floor(math.exp(log_side) + 1e-9))


def stage_depth(D: int) -> int:
    """Stages of one patching layer: one per cell dimension plus the replacement stage."""
    return D + 1


def depth_schedule(L: int, D: int, target_error: float, fits: Sequence[Fit], base: int | None = None) -> Schedule:
    """Renormalization levels ``L_0 < L_1 < ... `` with ``L_{k+1} = next_scale(L_k)``.

    ``L_0`` is the smallest length whose next scale exceeds it (or ``base``).
    The schedule stops once ``L_k >= L`` (the last level is capped at ``L``);
    each level costs ``stage_depth(D)``.  A lattice no larger than ``L_0`` is
    prepared by one channel, depth 1.
    """
    if L < 1 or D < 1:
        raise ValueError("L and D must be positive")
    sched = Schedule(L=L, D=D, target_error=target_error)
    sched.strictly_local_depth = strictly_local_depth(L, D, target_error)
    if target_error >= TRIVIAL_ERROR:
        sched.reason = "target error is at least the trace-distance diameter"
        return sched
    if not fits:
        sched.feasible, sched.reason = False, "no decay fits supplied"
        return sched
    for f in fits:
        why = _decays(f, D)
        if why:
            sched.feasible, sched.reason = False, why
            return sched
    ell = base
    if ell is None:
        ell = 1
        while next_scale(ell, D, target_error, fits, cap=ell + 1) <= ell:
            ell += 1
            if ell > MAX_LEVELS:
                sched.feasible, sched.reason = False, "no length scale grows under the fits"
                return sched
    levels = [ell]
    if L <= ell:
        # a single channel covers the whole lattice
        sched.levels = levels
        sched.depth = 1
        return sched
    while levels[-1] < L:
        nxt = next_scale(levels[-1], D, target_error, fits, cap=L)
        if nxt <= levels[-1]:
            sched.feasible, sched.reason = False, f"scale stalls at {levels[-1]}"
            sched.levels = levels
            return sched
        levels.append(nxt)
    sched.levels = levels
    sched.depth = stage_depth(D) * (len(levels) - 1)
    return sched


def strictly_local_depth(L: int, D: int, target_error: float) -> int:
    """``D log L / |log eps|`` rounded up; zero when ``eps >= 1`` is met by doing nothing."""
    if target_error >= 1 or L <= 1:
        return 0
    ratio = math.log(L) / -math.log(target_error)
    return D * int(math.ceil(ratio - 1e-12))
