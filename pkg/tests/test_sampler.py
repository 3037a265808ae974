import math

import numpy as np
import pytest

from rfim_glauber import exact, glauber, lattice, rfim, sampler
from rfim_glauber._rng import stream
from rfim_glauber.rfim import ConfigError, FieldSpec, RfimInstance
from rfim_glauber.sampler import PlantSpec, SamplerConfig


def test_single_site_is_exact():
    box = lattice.make_box(0, 2)
    h = np.array([0.35])
    codes = sampler.incremental_sample(box, 1.0, h, SamplerConfig(4.0, seed=1), runs=1000000)
    p = (1 + np.tanh(0.35)) / 2
    assert abs(codes.mean() - p) <= 3 * math.sqrt(p * (1 - p) / len(codes))


@pytest.mark.parametrize("k", [0, 7])
def test_beta_zero_gives_product_law(k):
    box = lattice.make_rect((2, 2))
    h = stream(1, "h").normal(size=4)
    codes = sampler.incremental_sample(box, 0.0, h, SamplerConfig(k_override=k, seed=2), runs=100000)
    g = exact.enumerate_gibbs(RfimInstance(box, 0.0, h))
    emp = glauber.empirical_law(codes, 4)
    assert 0.5 * np.abs(emp - g.probs).sum() < 0.02
    bits = (codes[:, None] >> np.arange(4)) & 1
    p = (1 + np.tanh(h)) / 2
    assert np.all(np.abs(bits.mean(0) - p) <= 3 * np.sqrt(p * (1 - p) / len(codes)))


def test_two_by_two_matches_gibbs():
    box = lattice.make_rect((2, 2))
    h = rfim.sample_field(FieldSpec("gaussian", 1.0, 3), box)
    cfg = SamplerConfig(6.0, seed=4)
    assert cfg.k_star(4) == 4096
    codes = sampler.incremental_sample(box, 0.5, h, cfg, runs=100000)
    g = exact.enumerate_gibbs(RfimInstance(box, 0.5, h))
    assert 0.5 * np.abs(glauber.empirical_law(codes, 4) - g.probs).sum() < 0.02


def test_sampler_reproducible_across_workers():
    box = lattice.make_box(1, 2)
    h = stream(5, "h").normal(size=9)
    a = sampler.incremental_sample(box, 0.5, h, SamplerConfig(k_override=50, seed=6), runs=40, n_workers=1)
    b = sampler.incremental_sample(box, 0.5, h, SamplerConfig(k_override=50, seed=6), runs=40, n_workers=2)
    assert np.array_equal(a, b)


def test_sampler_config_errors():
    with pytest.raises(ConfigError):
        SamplerConfig(0.0)
    with pytest.raises(ConfigError):
        SamplerConfig(1.0, k_override=-1)


def test_snapshot(tmp_path):
    box = lattice.make_box(1, 1)
    sampler.write_sample_snapshot(tmp_path / "s.txt", box, [1, -1, 1])
    assert (tmp_path / "s.txt").read_text().splitlines() == ["1 3", "-1 1", "0 -1", "1 1"]


def test_warm_start_ratio_beta_zero():
    box = lattice.make_box(1, 2)
    h = stream(2, "h").normal(size=9)
    for i in range(2, 10):
        assert sampler.warm_start_ratio(box, i, 0.0, h) == pytest.approx(1.0, abs=1e-12)


def test_warm_start_ratio_bound():
    box = lattice.make_box(1, 2)
    h = stream(3, "h").normal(size=9)
    beta = 0.7
    for i in range(2, 10):
        assert sampler.warm_start_ratio(box, i, beta, h) <= math.exp(4 * 2 * beta)


def test_warm_start_ratio_single_edge_closed_form():
    box = lattice.make_rect((2, 2))
    h = np.array([0.5, -0.5, 0.9, 0.1])
    order = lattice.growth_order(box)
    ho, hv = h[box.index(order[0])], h[box.index(order[1])]
    got = sampler.warm_start_ratio(box, 2, 0.3, h)
    assert got == pytest.approx(sampler.edge_ratio_closed_form(0.3, ho, hv), abs=1e-12)
    # closed form against a direct 4-state computation
    S = [(a, b) for a in (-1, 1) for b in (-1, 1)]
    w = {s: math.exp(0.3 * s[0] * s[1] + ho * s[0] + hv * s[1]) for s in S}
    Z = sum(w.values())
    prod = {s: math.exp(ho * s[0]) / (2 * math.cosh(ho)) * math.exp(hv * s[1]) / (2 * math.cosh(hv)) for s in S}
    assert got == pytest.approx(max(prod[s] / (w[s] / Z) for s in S), abs=1e-12)


def test_warm_start_errors():
    with pytest.raises(ValueError):
        sampler.warm_start_law(lattice.make_box(1, 2), 1, 0.3, np.zeros(9))


def test_tv_decay_examples():
    box = lattice.make_rect((2, 2))
    h = stream(4, "h").normal(size=4)
    inst, pi0 = sampler.warm_start_law(box, 4, 0.5, h)
    g = exact.enumerate_gibbs(inst)
    same = sampler.tv_decay_from_warm_start(inst, g.probs, [0, 5, 50])
    assert np.all(same.tv < 1e-13)
    curve = sampler.tv_decay_from_warm_start(inst, pi0, [0, 1, 2, 4, 8, 16, 32, 64])
    assert curve.tv[0] == pytest.approx(0.5 * np.abs(pi0 - g.probs).sum(), abs=1e-15)
    assert curve.monotone
    fitted = sampler.tv_decay_from_warm_start(inst, pi0, curve.ks, A=curve.A_fit)
    big = fitted.ks >= 2
    assert np.all(fitted.tv[big] <= fitted.envelope[big] + 1e-12)


def test_plant_quadrant_pattern():
    spec = PlantSpec(2, (0, 0))
    signs = sampler.boundary_signs(spec, 2)
    assert len(signs) == 12
    for z, s in signs.items():
        top_bottom = z[1] < 0 or z[1] > 2
        assert s == (1 if top_bottom else -1)


def test_plant_magnitudes():
    box = lattice.make_box(4, 2)
    spec = PlantSpec(3, (-1, -1), seed=2)
    base = rfim.sample_field(FieldSpec("gaussian", 1.0, 1), box)
    h = sampler.plant_griffiths_field(box, spec, base)
    inner = box.indices(spec.box(2))
    bnd = box.indices(sorted(sampler.boundary_signs(spec, 2)))
    assert np.all(np.abs(h[inner]) <= 1 / 9)
    assert np.all(np.abs(h[bnd]) >= 9)
    rest = np.setdiff1d(np.arange(box.N), np.concatenate([inner, bnd]))
    assert np.array_equal(h[rest], base[rest])
    with pytest.raises(ConfigError):
        PlantSpec(3, (0, 0), strong=2.0).magnitudes(2)
    with pytest.raises(ConfigError):
        sampler.plant_griffiths_field(box, PlantSpec(3, (2, 2)), base)


def test_strip_pattern_has_both_signs():
    signs = sampler.boundary_signs(PlantSpec(4, (0, 0, 0), pattern="strip"), 3)
    assert set(signs.values()) == {-1, 1}


def test_relaxation_beta_zero():
    inst = rfim.box_instance(1, 2, 0.0, np.zeros(9))
    o = inst.domain.index((0, 0))
    rep = sampler.relaxation_probe(inst, [o], dt=0.1, t_burn=5.0, n_samples=20000, replicas=40, seed=1)
    target = 0.05 / math.tanh(0.05)
    assert abs(rep.mean - target) <= 3 * rep.stderr
    assert abs(rep.mean - 1.0) <= 3 * rep.stderr + 1e-3


def test_relaxation_strong_site():
    # field well above the couplings, yet the site still flips (a frozen site has no τ)
    h = np.zeros(9)
    inst = rfim.box_instance(1, 2, 0.3, h)
    o = inst.domain.index((0, 0))
    h[o] = 1.5
    inst = inst.with_field(h)
    rep = sampler.relaxation_probe(inst, [o], dt=0.1, t_burn=20.0, n_samples=20000, replicas=20, seed=2)
    assert np.all(np.isfinite(rep.taus)) and rep.mean < 2


def test_frozen_region_has_no_tau():
    h = np.zeros(9)
    h[4] = 30.0
    inst = rfim.box_instance(1, 2, 0.3, h)
    rep = sampler.relaxation_probe(inst, [4], dt=0.1, t_burn=1.0, n_samples=200, replicas=2, seed=2)
    assert np.all(np.isnan(rep.taus))


def test_griffiths_small_run():
    res = sampler.griffiths_experiment(pairs=12, seed=3)
    assert res.ratio > res.threshold
    assert res.tau_planted.shape == (12,)
