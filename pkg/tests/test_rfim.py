import itertools

import numpy as np
import pytest

from rfim_glauber import exact, lattice, rfim
from rfim_glauber.rfim import ConfigError, FieldSpec, RfimInstance

from conftest import path_instance


def test_hamiltonian_examples():
    one = RfimInstance(lattice.make_box(0, 1), 0.0, [0.7])
    assert rfim.hamiltonian(one, [1]) == pytest.approx(-0.7, abs=1e-15)
    edge = path_instance(0.5, [0.0, 0.0])
    assert rfim.hamiltonian(edge, [1, 1]) == pytest.approx(-0.5, abs=1e-15)


def test_hamiltonian_three_path_longhand():
    beta, h, s = 0.3, [0.1, -0.2, 0.4], [1, -1, 1]
    longhand = -(beta * (s[0] * s[1] + s[1] * s[2])) - (h[0] * s[0] + h[1] * s[1] + h[2] * s[2])
    assert rfim.hamiltonian(path_instance(beta, h), s) == pytest.approx(longhand, abs=1e-14)


def test_hamiltonian_with_boundary_counts_boundary_edges():
    inst = path_instance(0.4, [0.0, 0.0], {(-1,): 1, (2,): -1})
    s = [1, 1]
    # internal edge +0.4, left boundary edge +0.4, right boundary edge -0.4
    assert rfim.hamiltonian(inst, s) == pytest.approx(-0.4, abs=1e-14)


def test_bad_inputs():
    with pytest.raises(ConfigError):
        RfimInstance(lattice.make_box(1, 1), -0.1, np.zeros(3))
    with pytest.raises(ValueError):
        RfimInstance(lattice.make_box(1, 1), 0.1, [0.0, np.inf, 0.0])
    with pytest.raises(ValueError):
        rfim.hamiltonian(path_instance(0.1, [0, 0]), [1, 0])
    with pytest.raises(ConfigError):
        FieldSpec("cauchy", 1.0)
    with pytest.raises(ConfigError):
        FieldSpec.parse("gaussian(x)")


def test_fieldspec_parse():
    assert FieldSpec.parse("gaussian(25)", 3) == FieldSpec("gaussian", 25.0, 3)
    assert FieldSpec.parse("zero").param == 0.0
    assert FieldSpec.parse("fixed(1,2)").values == (1.0, 2.0)


def test_sample_field_fixed_and_determinism():
    dom = lattice.make_box(1, 1)
    assert np.array_equal(rfim.sample_field(FieldSpec("fixed", values=(1.0, -2.0, 3.0)), dom), [1, -2, 3])
    a = rfim.sample_field(FieldSpec("gaussian", 1.0, 5), dom)
    b = rfim.sample_field(FieldSpec("gaussian", 1.0, 5), dom)
    assert np.array_equal(a, b)


def test_sample_field_statistics():
    dom = lattice.Domain(np.arange(100000).reshape(-1, 1))
    a = 2.0
    tp = rfim.sample_field(FieldSpec("two_point", a, 1), dom)
    assert set(np.unique(tp)) == {-a, a}
    assert abs(tp.mean()) <= 3 * a / np.sqrt(tp.size)
    g = rfim.sample_field(FieldSpec("gaussian", 4.0, 2), dom)
    assert abs(g.var() / 4.0 - 1) < 0.05
    u = rfim.sample_field(FieldSpec("uniform_symmetric", 3.0, 3), dom)
    assert np.abs(u).max() <= 3.0 and abs(u.var() / 3.0 - 1) < 0.05


def test_conditional_probs_examples():
    iso = RfimInstance(lattice.make_box(0, 2), 1.0, [0.0])
    assert rfim.conditional_plus_prob(iso, [1], 0) == 0.5
    free = path_instance(0.0, [0.3, -0.8, 0.1])
    for s in itertools.product((-1, 1), repeat=3):
        assert rfim.conditional_plus_prob(free, s, 1) == pytest.approx(1 / (1 + np.exp(1.6)), abs=1e-15)


def test_conditional_matches_gibbs_table(rng):
    dom = lattice.make_rect((2, 2))
    inst = RfimInstance(dom, 0.7, rng.normal(size=4))
    g = exact.enumerate_gibbs(inst)
    S = g.spins()
    for v in range(4):
        for code in range(16):
            s = S[code]
            flipped = code ^ (1 << v)
            plus, minus = (code, flipped) if s[v] == 1 else (flipped, code)
            oracle = g.probs[plus] / (g.probs[plus] + g.probs[minus])
            assert rfim.conditional_plus_prob(inst, s, v) == pytest.approx(oracle, abs=1e-13)
            assert rfim.conditional_minus_prob(inst, s, v) == pytest.approx(1 - oracle, abs=1e-13)


def test_pin_fold_in_identity():
    inst = rfim.box_instance(2, 2, 0.6, np.zeros(25))
    A = [v for v in inst.domain.vertices() if max(map(abs, v)) <= 1]
    pinned = rfim.pin_constant(inst, A, +1)
    deg = {v: sum(1 for w in lattice._zd_neighbors(v) if max(map(abs, w)) == 2) for v in A}
    for v in A:
        assert pinned.h_eff[pinned.domain.index(v)] == pytest.approx(0.6 * deg[v])


def test_pin_whole_domain_is_identity():
    inst = rfim.box_instance(1, 2, 0.6, np.linspace(-1, 1, 9), boundary_spin=-1)
    same = rfim.pin(inst, inst.domain.vertices(), {})
    assert same.domain == inst.domain
    assert np.allclose(same.h_eff, inst.h_eff)


def test_pin_center_matches_conditional(rng):
    inst = rfim.box_instance(1, 2, 0.8, rng.normal(size=9))
    g = exact.enumerate_gibbs(inst)
    tau = {w: int(rng.choice([-1, 1])) for w in lattice.boundary({(0, 0)}, inst.domain)}
    pinned = rfim.pin(inst, [(0, 0)], tau)
    S = g.spins()
    mask = np.ones(len(S), bool)
    for w, s in tau.items():
        mask &= S[:, inst.domain.index(w)] == s
    c = inst.domain.index((0, 0))
    oracle = g.probs[mask & (S[:, c] == 1)].sum() / g.probs[mask].sum()
    assert exact.enumerate_gibbs(pinned).plus_prob(0) == pytest.approx(oracle, abs=1e-13)


def test_pin_requires_full_boundary():
    inst = rfim.box_instance(1, 2, 0.8, np.zeros(9))
    with pytest.raises(ValueError):
        rfim.pin(inst, [(0, 0)], {(1, 0): 1})


def test_field_snapshot_round_trip(tmp_path):
    dom = lattice.make_box(1, 2)
    spec = FieldSpec("gaussian", 2.5, 17)
    h = rfim.sample_field(spec, dom)
    p = tmp_path / "field.txt"
    rfim.write_field_snapshot(p, dom, h, spec)
    dom2, h2, spec2 = rfim.read_field_snapshot(p)
    assert dom2 == dom and spec2 == spec
    assert np.array_equal(h, h2)
