import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rfim_glauber import lattice
from rfim_glauber.lattice import BAD, GOOD

from conftest import brute_force_edges


@pytest.mark.parametrize("n,d,verts,edges", [(1, 2, 9, 12), (0, 3, 1, 0), (2, 2, 25, 40)])
def test_make_box_counts(n, d, verts, edges):
    box = lattice.make_box(n, d)
    assert box.N == verts
    assert len(box.edges()) == edges
    assert len(brute_force_edges(box.coords)) == edges


def test_make_box_overflow_and_bad_args():
    with pytest.raises(OverflowError):
        lattice.make_box(10 ** 6, 4)
    with pytest.raises(ValueError):
        lattice.make_box(-1, 2)


def test_box_adjacency_matches_irregular_path():
    box = lattice.make_box(2, 3)
    same = lattice.Domain(box.coords[::-1].copy())
    assert np.array_equal(box.coords, same.coords)
    assert np.array_equal(box.neighbors, same.neighbors)


def test_ids_are_lexicographic():
    box = lattice.make_box(1, 2)
    assert box.vertices() == sorted(box.vertices())
    assert all(box.index(v) == i for i, v in enumerate(box.vertices()))


def test_domain_rejects_duplicates():
    with pytest.raises(ValueError):
        lattice.Domain([[0, 0], [0, 0]])


def test_domain_text_round_trip():
    dom = lattice.Domain([[0, 1], [2, -3], [5, 5]])
    assert lattice.Domain.from_text(dom.to_text()) == dom
    assert dom.to_text().splitlines()[0] == "2 3"


def test_ball_examples():
    box = lattice.make_box(2, 2)
    assert lattice.ball((1, 1), 0, box).vertices() == [(1, 1)]
    assert lattice.ball((0, 0), 1, box).N == 9
    assert lattice.ball((2, 2), 1, box).N == 4
    with pytest.raises(KeyError):
        lattice.ball((3, 0), 1, box)


def test_boundary_examples():
    box = lattice.make_box(3, 2)
    assert lattice.boundary(set(box.vertices()), box) == set()
    assert lattice.boundary({(0, 0)}, box) == {(1, 0), (-1, 0), (0, 1), (0, -1)}
    sq = {(0, 0), (0, 1), (1, 0), (1, 1)}
    assert len(lattice.boundary(sq, box)) == 8


@settings(max_examples=60, deadline=None)
@given(st.sets(st.tuples(st.integers(-2, 2), st.integers(-2, 2)), min_size=1, max_size=12))
def test_boundary_properties(A):
    box = lattice.make_box(2, 2)
    dA = lattice.boundary(A, box)
    assert not (dA & A)
    for w in dA:
        assert any(lattice.l1(w, a) == 1 for a in A)
        assert w in box


def test_is_cube_like_examples():
    B1 = [v for v in itertools.product(range(-1, 2), repeat=2)]
    assert lattice.is_cube_like(B1, 2)
    assert lattice.is_cube_like(B1 + [(2, 0)], 2)
    assert not lattice.is_cube_like([(1, 1), (-1, 1)], 2)


@pytest.mark.parametrize("n,d", [(0, 1), (1, 1), (2, 1), (1, 2), (2, 2), (1, 3), (2, 3)])
def test_nucleation_prefixes_cube_like(n, d):
    box = lattice.make_box(n, d)
    order = lattice.nucleation_order(box)
    assert order[0] == (0,) * d
    assert sorted(order) == box.vertices()
    for i in range(1, len(order) + 1):
        assert lattice.is_cube_like(order[:i], n)


def test_growth_order_on_rectangle():
    rect = lattice.make_rect((2, 3))
    order = lattice.growth_order(rect)
    assert order[:4] == [(0, 0), (0, 1), (1, 0), (1, 1)]
    assert sorted(order) == rect.vertices()
    # every new vertex after the first touches an earlier one
    for i in range(1, len(order)):
        assert any(lattice.l1(order[i], w) == 1 for w in order[:i])


@pytest.mark.parametrize("n,R,d,expected", [
    (4, 4, 2, [(a, b) for a in (-4, 0, 4) for b in (-4, 0, 4)]),
    (2, 5, 2, [(0, 0)]),
    (3, 2, 1, [(-2,), (0,), (2,)]),
])
def test_coarse_lattice_examples(n, R, d, expected):
    grid = lattice.coarse_lattice(lattice.make_box(n, d), R)
    assert grid.sites.vertices() == expected
    assert not grid.labelled


def test_coarse_lattice_empty_grid_error():
    dom = lattice.Domain([[1, 1], [1, 2]])
    with pytest.raises(lattice.EmptyCoarseGridError):
        lattice.coarse_lattice(dom, 5)


def _labelled(n, R, bad):
    grid = lattice.coarse_lattice(lattice.make_box(n, 2), R)
    good = np.array([v not in bad for v in grid.sites.vertices()])
    return grid.with_labels(good)


def test_r_star_cluster_examples():
    assert lattice.r_star_clusters(_labelled(8, 2, set()), BAD) == []
    two = lattice.r_star_clusters(_labelled(8, 2, {(0, 0), (2, 2)}), BAD)
    assert [len(c) for c in two] == [2]
    apart = lattice.r_clusters(_labelled(8, 2, {(0, 0), (2, 2)}), BAD)
    assert sorted(len(c) for c in apart) == [1, 1]


@settings(max_examples=40, deadline=None)
@given(st.lists(st.booleans(), min_size=81, max_size=81))
def test_clusters_match_flood_fill(flags):
    grid = lattice.coarse_lattice(lattice.make_box(8, 2), 2)
    labelled = grid.with_labels(np.array(flags))
    R = grid.R
    for label in (GOOD, BAD):
        sites = labelled.sites_with(label)
        star = lattice.flood_fill(sites, lambda a, b: lattice.linf(a, b) == R)
        plain = lattice.flood_fill(sites, lambda a, b: lattice.l1(a, b) == R)
        assert sorted(map(sorted, lattice.r_star_clusters(labelled, label))) == sorted(map(sorted, star))
        assert sorted(map(sorted, lattice.r_clusters(labelled, label))) == sorted(map(sorted, plain))
        got = lattice.r_star_clusters(labelled, label)
        assert sum(len(c) for c in got) == len(sites)
        for a, b in itertools.combinations(got, 2):
            assert min(lattice.linf(x, y) for x in a for y in b) > R


def test_duality_spot_check(rng):
    # Bad sites not *-connected are separated by an R-connected Good cluster
    grid = lattice.coarse_lattice(lattice.make_box(10, 2), 2)
    for _ in range(20):
        flags = rng.random(grid.sites.N) < 0.55
        lab = grid.with_labels(flags)
        bad = lab.r_star_clusters if False else lattice.r_star_clusters(lab, BAD)
        if len(bad) < 2:
            continue
        a, b = next(iter(bad[0])), next(iter(bad[1]))
        good = set(lab.sites_with(GOOD))
        # removing Good leaves a and b disconnected in the plain lattice of coarse sites
        region = [v for v in grid.sites.vertices() if v not in good]
        comps = lattice.flood_fill(region, lambda x, y: lattice.linf(x, y) == 2)
        assert not any(a in c and b in c for c in comps)


def test_coarse_grid_block_and_csv():
    grid = _labelled(4, 2, {(0, 0)})
    assert grid.label_of((0, 0)) == BAD
    assert grid.block((0, 0)).N == 25
    rows = grid.to_csv_rows()
    assert rows[0][0] == "-4 -4" and rows[0][1] == GOOD
