import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from thermopatch.lattice import (
    GeometryError,
    Region,
    annulus,
    ball,
    boundary_sites,
    core,
    distance,
    make_lattice,
    tiling_plan,
)


def test_site_counts_and_adjacency():
    assert make_lattice([4, 4]).n_sites == 16
    open_chain = make_lattice([8])
    assert open_chain.n_sites == 8
    assert not open_chain.adjacency[0, 7]
    ring = make_lattice([8], periodic=True)
    assert ring.adjacency[0, 7]
    assert len(ring.edges()) == 8
    assert len(open_chain.edges()) == 7


def test_row_major_order():
    lat = make_lattice([3, 4])
    assert lat.index((1, 2)) == 6
    assert tuple(lat.coords[6]) == (1, 2)


@pytest.mark.parametrize("dims, periodic", [([2, 2, 2], False), ([0], False), ([4, 4], True), ([2], True)])
def test_bad_lattices(dims, periodic):
    with pytest.raises(GeometryError):
        make_lattice(dims, periodic)


def test_distance_examples():
    chain = make_lattice([5])
    assert distance(chain.region([1]), chain.region([2])) == 1
    sq = make_lattice([8, 8])
    a, b = sq.region([sq.index((0, 0))]), sq.region([sq.index((3, 4))])
    assert distance(a, b) == pytest.approx(5.0)
    assert distance(a, a) == 0
    with pytest.raises(GeometryError):
        distance(a, sq.empty())


def test_distance_wraps_on_ring():
    ring = make_lattice([10], periodic=True)
    assert distance(ring.region([0]), ring.region([9])) == 1
    assert distance(ring.region([0]), ring.region([5])) == 5


@given(st.lists(st.integers(0, 35), min_size=3, max_size=3))
def test_distance_symmetric_triangle(sites):
    lat = make_lattice([6, 6])
    a, b, c = (lat.region([s]) for s in sites)
    assert distance(a, b) == distance(b, a)
    assert distance(a, c) <= distance(a, b) + distance(b, c) + 1e-12


def test_boundary_examples():
    chain = make_lattice([8])
    right = chain.region(range(4, 8))
    assert boundary_sites(right, chain.full()).members == (4,)
    assert not boundary_sites(chain.full(), chain.full())
    sq = make_lattice([4, 4])
    block = sq.box((0, 0), (2, 2))
    got = boundary_sites(block, sq.full())
    # brute-force scan over neighbours
    expect = [s for s in block.members
              if any(abs(np.subtract(sq.coords[s], sq.coords[t])).sum() == 1
                     for t in range(16) if t not in block.members)]
    assert list(got.members) == expect
    assert len(got) == 3


@given(st.sets(st.integers(0, 24), min_size=1, max_size=24))
def test_boundary_sites_property(members):
    lat = make_lattice([5, 5])
    c = lat.region(members)
    b = boundary_sites(c, lat.full())
    assert b.issubset(c)
    rest = lat.full() - c
    for s in b.members:
        assert lat.adjacency[s, list(rest.members)].any()


def test_annulus_examples():
    chain = make_lattice([7])
    assert annulus(chain.region([3]), 1).members == (2, 4)
    assert annulus(chain.region([0]), 1).members == (1,)
    assert annulus(chain.region([3]), 50) == chain.full() - chain.region([3])
    sq = make_lattice([6, 6])
    block = sq.box((2, 2), (4, 4))
    ring = annulus(block, 1)
    assert len(ring) == 12
    brute = [s for s in range(36) if s not in block.members
             and min(max(abs(sq.coords[s] - sq.coords[t])) for t in block.members) <= 1]
    assert list(ring.members) == brute


def test_core_and_ball():
    chain = make_lattice([10])
    seg = chain.region(range(2, 8))
    assert core(seg, 1).members == (3, 4, 5, 6)
    assert core(chain.region(range(0, 4)), 1).members == (0, 1, 2)
    assert core(chain.full(), 3) == chain.full()
    assert ball(chain.region([4, 5]), 1).members == (3, 4, 5, 6)
    assert ball(chain.region([4, 5]), 0.5).members == (4, 5)


def test_tiling_1d_example():
    lat = make_lattice([12])
    t = tiling_plan(lat, 4, 1)
    assert len(t.stage_a) == 3
    assert not t.stage_b
    assert t.violations() == []
    gaps = lat.full() - t.minus_a
    assert t.stage_c == gaps
    comps = t.stage_c.components()
    assert [c.members for c in comps] == [(2, 3, 4, 5, 6, 7, 8, 9)]


def test_tiling_single_tile_2d():
    lat = make_lattice([6, 6])
    t = tiling_plan(lat, 6, 2)
    assert len(t.stage_a) == 1
    assert t.stage_a[0].plus == lat.full() and t.stage_a[0].core == lat.full()
    assert not t.stage_b and not t.stage_c


def test_tiling_2d_example():
    lat = make_lattice([12, 12])
    t = tiling_plan(lat, 6, 1)
    assert (len(t.stage_a), len(t.stage_b)) == (4, 4)
    assert t.violations() == []
    # the C remainder is the central cross between the four A_- blocks
    c = t.stage_c
    assert len(c.components()) == 1
    cross = [s for s in range(144)
             if all(2 <= v < 10 for v in lat.coords[s]) and any(4 <= v < 8 for v in lat.coords[s])]
    assert list(c.members) == cross


@pytest.mark.parametrize("r, ell", [(2, 1), (3, 0), (13, 1)])
def test_tiling_rejects(r, ell):
    with pytest.raises(GeometryError):
        tiling_plan(make_lattice([12]), r, ell)


@given(st.integers(5, 24), st.integers(1, 3), st.integers(3, 10), st.booleans())
def test_tiling_invariants_1d(n, ell, r, periodic):
    if r <= 2 * ell or r > n:
        return
    lat = make_lattice([n], periodic=periodic and n >= 3)
    t = tiling_plan(lat, r, ell)
    assert t.violations() == []


@given(st.integers(4, 14), st.integers(4, 14), st.integers(1, 2), st.integers(3, 7))
def test_tiling_invariants_2d(nx, ny, ell, r):
    if r <= 2 * ell or r > min(nx, ny):
        return
    t = tiling_plan(make_lattice([nx, ny]), r, ell)
    assert t.violations() == []
    for p, q in itertools.combinations(t.stage_a, 2):
        assert p.plus.isdisjoint(q.plus)


def test_region_algebra():
    lat = make_lattice([6])
    a, b = lat.region([0, 1, 2]), lat.region([2, 3])
    assert (a | b).members == (0, 1, 2, 3)
    assert (a & b).members == (2,)
    assert (a - b).members == (0, 1)
    assert a.complement().members == (3, 4, 5)
    assert lat.region([0, 1, 4]).components()[1].members == (4,)
    with pytest.raises(GeometryError):
        Region(lat, [6])
