import numpy as np
import pytest

from rfim_glauber import blocks, exact, lattice, rfim
from rfim_glauber._rng import stream
from rfim_glauber.blocks import GoodBadParams
from rfim_glauber.lattice import BAD, GOOD
from rfim_glauber.rfim import ConfigError, FieldSpec, RfimInstance


def test_rho_and_scale_range():
    assert blocks.rho(2, 0.25, 1.0) == pytest.approx(0.5)
    assert blocks.rho(2, 0.0, 300.0) < 1e-250
    R0 = blocks.r_min_literal()
    assert blocks.r_range(R0)[0] <= blocks.r_range(R0)[1]
    with pytest.raises(ConfigError):
        blocks.r_range(R0 - 1)
    assert blocks.r_range(8, "desk") == (1, 1)
    with pytest.raises(ConfigError):
        blocks.r_range(8, "loose")


def test_all_weak_fields_make_sites_bad():
    dom = lattice.make_box(8, 2)
    grid = blocks.classify(dom, np.zeros(dom.N), GoodBadParams(1.0, 8, 0.1, mc_replicas=64, r_mode="desk"))
    assert grid.sites_with(GOOD) == []


def test_no_open_sites_make_sites_good():
    dom = lattice.make_box(8, 2)
    h = rfim.sample_field(FieldSpec("two_point", 1000.0, 1), dom)
    grid = blocks.classify(dom, h, GoodBadParams(300.0, 8, 0.0, mc_replicas=64, r_mode="desk"))
    assert grid.sites_with(BAD) == []


def test_bad_frequency_small_with_strong_fields():
    dom = lattice.make_box(9, 2)
    R = 9
    bad = total = 0
    for k in range(200):
        h = rfim.sample_field(FieldSpec("two_point", 3.0, k), dom)
        grid = blocks.classify(dom, h, GoodBadParams(2.0, R, 0.1, mc_replicas=128, r_mode="desk"), seed=k)
        bad += len(grid.sites_with(BAD))
        total += grid.sites.N
    p = bad / total
    assert p <= R ** -5 + 3 * np.sqrt(max(p * (1 - p), 1.0 / total) / total)


def test_ssm_variant_runs():
    dom = lattice.make_box(4, 2)
    h = rfim.sample_field(FieldSpec("two_point", 5.0, 2), dom)
    grid = blocks.classify(dom, h, GoodBadParams(1.0, 4, 0.2, variant="ssm", r_mode="desk", C_star=1.0))
    assert grid.labelled and grid.meta["variant"] == "ssm"


def _label(n, R, bad):
    dom = lattice.make_box(n, 2)
    sites = lattice.coarse_lattice(dom, R).sites.vertices()
    return blocks.label_grid(dom, R, [v not in bad for v in sites])


def test_bad_cluster_stats_examples():
    assert blocks.bad_cluster_stats(_label(8, 4, set()))["max"] == 0
    assert blocks.bad_cluster_stats(_label(8, 4, {(0, 0)}))["max"] == 1
    sq = {(0, 0), (4, 0), (0, 4), (4, 4)}
    st = blocks.bad_cluster_stats(_label(8, 4, sq))
    assert st["sizes"] == [4] and st["histogram"] == {4: 1}


def test_blocks_all_good():
    bs = blocks.build_blocks(_label(8, 8, set()))
    assert {b.kind for b in bs.blocks} == {"type1"}
    assert max(b.volume for b in bs.blocks) <= (8 // 4 + 1) ** 2


def test_blocks_all_bad():
    dom = lattice.make_box(8, 2)
    bs = blocks.build_blocks(blocks.label_grid(dom, 8, np.zeros(9, bool)))
    assert {b.kind for b in bs.blocks} == {"type2"}
    covered = np.zeros(dom.N, bool)
    for b in bs.blocks:
        covered[b.ids] = True
    assert covered.all()


def test_blocks_single_bad_cluster_volume():
    R = 8
    bs = blocks.build_blocks(_label(16, R, {(0, 0)}))
    L = 1
    assert max(b.volume for b in bs.blocks) <= R ** 2 * L
    rep = blocks.block_geometry_report(bs)
    assert rep.ok
    assert bs.to_csv().splitlines()[0] == "block-id,type,provenance,volume"


def test_geometry_interior_count():
    R = 16
    bs = blocks.build_blocks(_label(16, R, set()))
    rep = blocks.block_geometry_report(bs)
    assert rep.inside[bs.domain.index((0, 0))] >= (R / 4) ** 2
    assert rep.ok


def test_geometry_random_instances():
    rng = stream(3, "geo")
    for R in (8, 12, 16):
        for _ in range(4):
            n = 2 * R
            sites = lattice.coarse_lattice(lattice.make_box(n, 2), R).sites
            good = rng.random(sites.N) < 0.7
            bs = blocks.build_blocks(blocks.label_grid(lattice.make_box(n, 2), R, good))
            assert blocks.block_geometry_report(bs).ok


def test_single_block_ratio():
    dom = lattice.make_box(2, 2)
    inner = dom.indices(lattice.ball((0, 0), 1, dom))
    bs = blocks.BlockSet(dom, 8, [blocks.Block(np.arange(dom.N), "type1", ("all",))])
    rep = blocks.block_geometry_report(bs)
    assert np.all(rep.ratio == 0.0)
    bs = blocks.BlockSet(dom, 8, [blocks.Block(np.sort(inner), "type1", ("w", (0, 0)))])
    with pytest.raises(blocks.BlockCoverageError):
        blocks.block_geometry_report(bs)


def test_block_update_single_site_is_heat_bath():
    inst = rfim.box_instance(1, 2, 0.6, stream(1, "h").normal(size=9))
    sigma = np.array([1, -1, 1, 1, -1, -1, 1, 1, -1])
    rng = stream(2, "bu")
    o = inst.domain.index((0, 0))
    draws = np.array([blocks.block_update(inst, [o], sigma, rng)[o] for _ in range(20000)])
    p = rfim.conditional_plus_prob(inst, sigma, o)
    assert abs(np.mean(draws == 1) - p) < 3 * np.sqrt(p * (1 - p) / 20000)
    others = [i for i in range(9) if i != o]
    assert np.array_equal(blocks.block_update(inst, [o], sigma, rng)[others], sigma[others])


def test_block_update_whole_domain_is_gibbs():
    inst = RfimInstance(lattice.make_rect((2, 2)), 0.5, stream(2, "h").normal(size=4))
    g = exact.enumerate_gibbs(inst)
    rng = stream(3, "bu")
    sigma = np.ones(4, dtype=np.int64)
    codes = [exact.code_of(blocks.block_update(inst, np.arange(4), sigma, rng)) for _ in range(20000)]
    emp = np.bincount(codes, minlength=16) / len(codes)
    assert 0.5 * np.abs(emp - g.probs).sum() < 0.02


def test_block_update_needs_burn_in_above_cap():
    inst = rfim.box_instance(1, 2, 0.5, np.zeros(9))
    with pytest.raises(ConfigError):
        blocks.block_update(inst, np.arange(9), np.ones(9), stream(1, "x"), n_max=4)
    out = blocks.block_update(inst, np.arange(9), np.ones(9), stream(1, "x"), n_max=4, burn_in=5.0)
    assert set(np.unique(out)) <= {-1, 1}


def test_stationarity_drift():
    inst = rfim.box_instance(1, 1, 0.8, stream(4, "h").normal(size=3), +1)
    g = exact.enumerate_gibbs(inst)
    assert blocks.stationarity_drift(g, [[0, 1], [1, 2], [0]]) < 1e-10
    inst = RfimInstance(lattice.make_rect((2, 4)), 0.7, stream(5, "h").normal(size=8))
    g = exact.enumerate_gibbs(inst)
    assert blocks.stationarity_drift(g, [[0, 1, 2, 3], [2, 3, 4, 5], [4, 5, 6, 7]]) < 1e-10


def test_block_gap_single_block():
    inst = RfimInstance(lattice.make_rect((2, 2)), 0.9, stream(6, "h").normal(size=4))
    rep = blocks.block_dynamics_gap_check(inst, [np.arange(4)])
    assert rep.gap_B == pytest.approx(1.0, abs=1e-12) and rep.chi == 1
    assert rep.min_block_gap == pytest.approx(rep.gap_G, abs=1e-12)
    assert rep.ok


def test_block_gap_path_and_rectangle():
    path = RfimInstance(lattice.make_rect((4,)), 0.8, stream(7, "h").normal(size=4))
    assert blocks.block_dynamics_gap_check(path, [[0, 1, 2], [1, 2, 3]]).ok
    rect = RfimInstance(lattice.make_rect((2, 3)), 0.8, stream(8, "h").normal(size=6))
    dom = rect.domain
    left = [dom.index(v) for v in dom.vertices() if v[1] <= 1]
    right = [dom.index(v) for v in dom.vertices() if v[1] >= 1]
    rep = blocks.block_dynamics_gap_check(rect, [left, right])
    assert rep.ok and rep.chi == 2
    with pytest.raises(blocks.BlockCoverageError):
        blocks.block_dynamics_gap_check(rect, [left])


def test_hamming_probe():
    dom = lattice.make_box(2, 2)
    B = dom.indices(lattice.ball((0, 0), 1, dom))
    dB = lattice.boundary(set(dom.vertex(i) for i in B), dom)
    xi = {w: 1 for w in dB}
    y = sorted(dB)[0]
    zero = RfimInstance(dom, 0.0, stream(1, "h").normal(size=25))
    assert blocks.hamming_coupling_probe(zero, B, y, xi, 2000, seed=1).mean == 0.0
    strong = RfimInstance(dom, 0.2, rfim.sample_field(FieldSpec("two_point", 6.0, 2), dom))
    rep = blocks.hamming_coupling_probe(strong, B, y, xi, 10000, seed=2)
    assert rep.mean + 3 * rep.stderr < 0.1
    assert rep.order_breaches == 0


def test_hamming_probe_dominates_marginal_tv():
    dom = lattice.make_rect((4, 4))
    block = [dom.index(v) for v in [(1, 1), (1, 2), (2, 1), (2, 2)]]
    dB = lattice.boundary({dom.vertex(i) for i in block}, dom)
    xi = {w: (1 if sum(w) % 2 else -1) for w in dB}
    inst = RfimInstance(dom, 0.9, stream(9, "h").normal(size=16))
    rep = blocks.hamming_coupling_probe(inst, block, sorted(dB)[0], xi, 20000, seed=3)
    assert rep.mean + 3 * rep.stderr >= rep.marginal_tv_sum
    assert rep.order_breaches == 0
