"""Finite square lattices, regions, distances and the staged tilings used by
the patching circuit.

Sites are enumerated row-major: for ``dims = (L0, L1)`` the site at
coordinates ``(x0, x1)`` has index ``x0 * L1 + x1``.  Region separation uses
the Euclidean metric; boundaries use nearest-neighbour adjacency; the
buffers of the tiling (inner cores, outer annuli) use the Chebyshev metric so
that the buffers of square tiles are concentric squares.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np


class GeometryError(ValueError):
    """Invalid lattice, region or tiling request."""


class Lattice:
    """A ``D``-dimensional finite square lattice, ``D`` in {1, 2}."""

    def __init__(self, dims: Sequence[int], periodic: bool | Sequence[bool] = False):
        dims = tuple(int(d) for d in dims)
        if len(dims) not in (1, 2):
            raise GeometryError(f"only 1D and 2D lattices are supported, got D={len(dims)}")
        if any(d < 1 for d in dims):
            raise GeometryError(f"side lengths must be positive, got {dims}")
        if isinstance(periodic, (bool, np.bool_)):
            periodic = (bool(periodic),) * len(dims)
        periodic = tuple(bool(p) for p in periodic)
        if len(periodic) != len(dims):
            raise GeometryError("one periodicity flag per axis is required")
        if len(dims) > 1 and any(periodic):
            raise GeometryError("periodic boundaries are only supported in 1D")
        if any(p and d < 3 for p, d in zip(periodic, dims)):
            raise GeometryError("a periodic axis needs at least 3 sites")
        self.dims = dims
        self.periodic = periodic

    def __repr__(self) -> str:
        return f"Lattice(dims={list(self.dims)}, periodic={list(self.periodic)})"

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Lattice) and (self.dims, self.periodic) == (other.dims, other.periodic)

    def __hash__(self) -> int:
        return hash((self.dims, self.periodic))

    @property
    def D(self) -> int:
        return len(self.dims)

    @property
    def n_sites(self) -> int:
        return int(np.prod(self.dims))

    @cached_property
    def coords(self) -> np.ndarray:
        """``(n_sites, D)`` integer coordinates in row-major order."""
        grids = np.meshgrid(*[np.arange(d) for d in self.dims], indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    def index(self, coord: Sequence[int]) -> int:
        return int(np.ravel_multi_index(tuple(coord), self.dims))

    def _axis_offsets(self) -> np.ndarray:
        delta = np.abs(self.coords[:, None, :] - self.coords[None, :, :])
        for axis, (length, wrap) in enumerate(zip(self.dims, self.periodic)):
            if wrap:
                delta[..., axis] = np.minimum(delta[..., axis], length - delta[..., axis])
        return delta

    @cached_property
    def euclidean(self) -> np.ndarray:
        return np.sqrt((self._axis_offsets() ** 2).sum(axis=-1))

    @cached_property
    def chebyshev(self) -> np.ndarray:
        return self._axis_offsets().max(axis=-1)

    @cached_property
    def adjacency(self) -> np.ndarray:
        return self._axis_offsets().sum(axis=-1) == 1

    def edges(self) -> list[tuple[int, int]]:
        """Nearest-neighbour bonds ``(i, j)`` with ``i < j``, lexicographically sorted."""
        i, j = np.nonzero(np.triu(self.adjacency))
        return sorted(zip(i.tolist(), j.tolist()))

    def region(self, members: Iterable[int]) -> "Region":
        return Region(self, members)

    def full(self) -> "Region":
        return Region(self, range(self.n_sites))

    def empty(self) -> "Region":
        return Region(self, ())

    def box(self, lo: Sequence[int], hi: Sequence[int]) -> "Region":
        """Sites with ``lo[k] <= x_k < hi[k]`` on every axis (no wrapping)."""
        c = self.coords
        mask = np.all((c >= np.asarray(lo)) & (c < np.asarray(hi)), axis=1)
        return Region(self, np.nonzero(mask)[0])


class Region:
    """A set of sites of one lattice, stored as a sorted tuple of indices."""

    __slots__ = ("lattice", "members")

    def __init__(self, lattice: Lattice, members: Iterable[int]):
        members = tuple(sorted({int(m) for m in members}))
        if members and (members[0] < 0 or members[-1] >= lattice.n_sites):
            raise GeometryError("region members outside the lattice")
        self.lattice = lattice
        self.members = members

    def __repr__(self) -> str:
        return f"Region({list(self.members)})"

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    def __contains__(self, site: int) -> bool:
        return site in self._set

    def __bool__(self) -> bool:
        return bool(self.members)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Region) and self.lattice == other.lattice and self.members == other.members

    def __hash__(self) -> int:
        return hash((self.lattice, self.members))

    @property
    def _set(self) -> frozenset[int]:
        return frozenset(self.members)

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.members, dtype=np.int64)

    def _same(self, other: "Region") -> None:
        if other.lattice != self.lattice:
            raise GeometryError("regions belong to different lattices")

    def __or__(self, other: "Region") -> "Region":
        self._same(other)
        return Region(self.lattice, self._set | other._set)

    def __and__(self, other: "Region") -> "Region":
        self._same(other)
        return Region(self.lattice, self._set & other._set)

    def __sub__(self, other: "Region") -> "Region":
        self._same(other)
        return Region(self.lattice, self._set - other._set)

    def complement(self, within: "Region | None" = None) -> "Region":
        ambient = within if within is not None else self.lattice.full()
        return ambient - self

    def issubset(self, other: "Region") -> bool:
        self._same(other)
        return self._set <= other._set

    def isdisjoint(self, other: "Region") -> bool:
        self._same(other)
        return self._set.isdisjoint(other._set)

    def components(self) -> list["Region"]:
        """Connected components under nearest-neighbour adjacency, ordered by smallest site."""
        adj = self.lattice.adjacency
        left = set(self.members)
        out = []
        while left:
            seed = min(left)
            stack, comp = [seed], {seed}
            left.discard(seed)
            while stack:
                s = stack.pop()
                for t in np.nonzero(adj[s])[0].tolist():
                    if t in left:
                        left.discard(t)
                        comp.add(t)
                        stack.append(t)
            out.append(Region(self.lattice, comp))
        return out


def make_lattice(dims: Sequence[int], periodic: bool | Sequence[bool] = False) -> Lattice:
    return Lattice(dims, periodic)


def _pair_block(a: Region, b: Region, metric: np.ndarray) -> np.ndarray:
    return metric[np.ix_(a.array, b.array)]


def distance(a: Region, b: Region) -> float:
    """Minimum Euclidean distance between the sites of two regions."""
    a._same(b)
    if not a or not b:
        raise GeometryError("distance is undefined for an empty region")
    return float(_pair_block(a, b, a.lattice.euclidean).min())


def chebyshev_distance(a: Region, b: Region) -> float:
    a._same(b)
    if not a or not b:
        raise GeometryError("distance is undefined for an empty region")
    return float(_pair_block(a, b, a.lattice.chebyshev).min())


def boundary_sites(c: Region, within: Region) -> Region:
    """Sites of ``c`` with a nearest neighbour in ``within \\ c``."""
    if not c.issubset(within):
        raise GeometryError("C must be contained in X")
    outside = within - c
    if not c or not outside:
        return c.lattice.empty()
    touching = _pair_block(c, outside, c.lattice.adjacency).any(axis=1)
    return Region(c.lattice, c.array[touching])


def annulus(a: Region, width: int, within: Region | None = None) -> Region:
    """Sites of ``within \\ a`` at Chebyshev distance at most ``width`` from ``a``."""
    if width < 1:
        raise GeometryError("annulus width must be >= 1")
    within = within if within is not None else a.lattice.full()
    if not a.issubset(within):
        raise GeometryError("A must be contained in X")
    outside = within - a
    if not a or not outside:
        return a.lattice.empty()
    near = (_pair_block(outside, a, a.lattice.chebyshev) <= width).any(axis=1)
    return Region(a.lattice, outside.array[near])


def core(a: Region, width: int, within: Region | None = None) -> Region:
    """Sites of ``a`` at Chebyshev distance more than ``width`` from ``within \\ a``.

    Sites of ``a`` that only face the lattice edge (or sites outside
    ``within``) keep their place in the core.
    """
    within = within if within is not None else a.lattice.full()
    outside = within - a
    if not a or not outside:
        return a
    far = (_pair_block(a, outside, a.lattice.chebyshev) > width).all(axis=1)
    return Region(a.lattice, a.array[far])


def ball(a: Region, radius: float) -> Region:
    """All lattice sites at Euclidean distance at most ``radius`` from ``a``."""
    if not a:
        return a
    near = (a.lattice.euclidean[:, a.array] <= radius + 1e-9).any(axis=1)
    return Region(a.lattice, np.nonzero(near)[0])


# --------------------------------------------------------------------------
# tilings


@dataclass(frozen=True)
class Tile:
    """Concentric triple ``minus ⊂ core ⊂ plus``.

    ``core`` is the region erased by the stage channel, ``plus \\ core`` is
    the shield it is recovered from and ``minus`` is the part of the lattice
    that is punctured for the following stage.
    """

    minus: Region
    core: Region
    plus: Region

    @property
    def shield(self) -> Region:
        return self.plus - self.core


@dataclass(frozen=True)
class Tiling:
    lattice: Lattice
    r: int
    ell: int
    stage_a: tuple[Tile, ...]
    stage_b: tuple[Tile, ...]
    stage_c: Region
    ambient_b: Region = field(repr=False)

    @property
    def minus_a(self) -> Region:
        out = self.lattice.empty()
        for t in self.stage_a:
            out = out | t.minus
        return out

    @property
    def minus_b(self) -> Region:
        out = self.lattice.empty()
        for t in self.stage_b:
            out = out | t.minus
        return out

    def violations(self) -> list[str]:
        """Check the tiling invariants exhaustively; an empty list means valid."""
        problems = []
        full = self.lattice.full()
        for stage, tiles, ambient in (("A", self.stage_a, full), ("B", self.stage_b, self.ambient_b)):
            for j, t in enumerate(tiles):
                if not (t.minus.issubset(t.core) and t.core.issubset(t.plus) and t.plus.issubset(ambient)):
                    problems.append(f"{stage}{j}: regions are not nested inside the ambient lattice")
                rest = ambient - t.core
                if t.minus and rest and distance(t.minus, rest) < self.ell:
                    problems.append(f"{stage}{j}: minus-region closer than ell to the outside of the tile")
                beyond = ambient - t.plus
                if t.core and beyond and distance(t.core, beyond) < self.ell:
                    problems.append(f"{stage}{j}: plus-region thinner than ell")
            for j in range(len(tiles)):
                for k in range(j + 1, len(tiles)):
                    if not tiles[j].plus.isdisjoint(tiles[k].plus):
                        problems.append(f"{stage}{j},{stage}{k}: plus-regions overlap")
        comps = self.stage_c.components()
        for j in range(len(comps)):
            for k in range(j + 1, len(comps)):
                if distance(comps[j], comps[k]) < self.ell - 1e-9:
                    problems.append(f"C components {j},{k} closer than ell")
        cover = [self.minus_a, self.minus_b, self.stage_c]
        union = cover[0] | cover[1] | cover[2]
        if union != full or sum(len(x) for x in cover) != self.lattice.n_sites:
            problems.append("minus-regions and C do not partition the lattice")
        return problems


def _segments(length: int, r: int, ell: int, periodic: bool) -> list[tuple[int, int]]:
    """Cut ``[0, length)`` into cells of side ``r``.

    A truncated last cell is merged into its neighbour when its erased core
    would be empty, i.e. when it is thinner than ``ell + 1`` next to one
    internal cut (open edge) or ``2 ell + 1`` between two internal cuts.
    """
    cuts = list(range(0, length, r)) + [length]
    segs = [(cuts[i], cuts[i + 1]) for i in range(len(cuts) - 1)]
    if len(segs) > 1:
        width = segs[-1][1] - segs[-1][0]
        need = 2 * ell + 1 if periodic else ell + 1
        if width < need:
            segs[-2:] = [(segs[-2][0], length)]
    return segs


def tiling_plan(lattice: Lattice, r: int, ell: int) -> Tiling:
    """Staged tiling for the patching circuit.

    Stage A: the lattice is cut into cells of side ``r``; each cell is the
    plus-region ``A_+`` of one tile, its core ``A`` sits ``ell`` inside the
    cell and ``A_-`` a further ``ell`` inside ``A``.  The plus-regions are
    disjoint by construction so the stage-A recoveries commute.

    Stage B (2D only): in ``X = lattice \\ A_-`` the strips between two
    neighbouring ``A_-`` squares are the plus-regions of the B tiles, with
    cores and minus-regions defined the same way inside ``X``.

    Stage C: whatever is left, ``X \\ B_-``.
    """
    r, ell = int(r), int(ell)
    if ell < 1:
        raise GeometryError("ell must be >= 1")
    if r <= 2 * ell:
        raise GeometryError(f"tile side r={r} must exceed 2*ell={2 * ell}")
    if r > min(lattice.dims):
        raise GeometryError(f"tile side r={r} exceeds the lattice side {min(lattice.dims)}")

    full = lattice.full()
    axis_segs = [_segments(d, r, ell, p) for d, p in zip(lattice.dims, lattice.periodic)]
    cells = []
    for combo in np.ndindex(*[len(s) for s in axis_segs]):
        lo = [axis_segs[k][c][0] for k, c in enumerate(combo)]
        hi = [axis_segs[k][c][1] for k, c in enumerate(combo)]
        cells.append(lattice.box(lo, hi))

    stage_a = []
    for cell in cells:
        a = core(cell, ell, full)
        stage_a.append(Tile(minus=core(a, ell, full), core=a, plus=cell))
    minus_a = lattice.empty()
    for t in stage_a:
        minus_a = minus_a | t.minus
    x = full - minus_a

    stage_b = []
    if lattice.D == 2 and x:
        # gap along axis k: the coordinate is outside the A_- extent of its cell on that axis
        extents = []
        for k, segs in enumerate(axis_segs):
            inside = np.zeros(lattice.dims[k], dtype=bool)
            for t, cell in zip(stage_a, cells):
                if t.minus:
                    inside[np.unique(lattice.coords[t.minus.array, k])] = True
            extents.append(inside)
        c = lattice.coords[x.array]
        gaps = np.stack([~extents[k][c[:, k]] for k in range(2)], axis=1)
        arm_sites = x.array[gaps.sum(axis=1) == 1]
        for arm in Region(lattice, arm_sites).components():
            b = core(arm, ell, x)
            if not b:
                continue
            stage_b.append(Tile(minus=core(b, ell, x), core=b, plus=arm))
    minus_b = lattice.empty()
    for t in stage_b:
        minus_b = minus_b | t.minus

    return Tiling(
        lattice=lattice,
        r=r,
        ell=ell,
        stage_a=tuple(stage_a),
        stage_b=tuple(stage_b),
        stage_c=x - minus_b,
        ambient_b=x,
    )
