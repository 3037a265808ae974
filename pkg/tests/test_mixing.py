import itertools

import numpy as np
import pytest

from rfim_glauber import exact, lattice, mixing, rfim
from rfim_glauber._rng import stream
from rfim_glauber.mixing import McParams
from rfim_glauber.rfim import FieldSpec, RfimInstance


def transfer_center_plus(beta, s_b, side=5):
    """P(center = +) on a side×side grid, zero field, boundary spin s_b; row transfer matrix."""
    rows = np.array(list(itertools.product((-1, 1), repeat=side)), float)
    intra = beta * (rows[:, :-1] * rows[:, 1:]).sum(1)
    ends = beta * s_b * (rows[:, 0] + rows[:, -1])
    top = beta * s_b * rows.sum(1)
    T = np.exp(beta * rows @ rows.T)
    w = np.exp(intra + ends)
    c = side // 2
    vals = []
    for mark in (True, False):
        v = w * np.exp(top)
        for r in range(1, side):
            v = (v @ T) * w
            if mark and r == c:
                v = v * (rows[:, c] > 0)
        vals.append((v * np.exp(top)).sum())
    return vals[0] / vals[1]


def test_delta_beta_zero_and_free_boundary():
    inst = rfim.box_instance(2, 2, 0.0, np.linspace(-1, 1, 25))
    assert mixing.delta(inst, (0, 0), 1).value == 0.0
    inst = rfim.box_instance(1, 2, 0.8, np.zeros(9))
    assert mixing.delta(inst, (0, 0), 1).value == 0.0


def test_delta_low_temperature_matches_transfer_matrix():
    inst = rfim.box_instance(3, 2, 1.0, np.zeros(49))
    got = mixing.delta(inst, (0, 0), 2).value
    oracle = transfer_center_plus(1.0, +1) - transfer_center_plus(1.0, -1)
    assert got == pytest.approx(oracle, abs=1e-12)
    assert got > 0.9


def test_delta_monotone_in_ell(rng):
    inst = rfim.box_instance(3, 2, 0.6, rng.normal(size=49))
    vals = [mixing.delta(inst, (0, 0), ell).value for ell in range(0, 3)]
    assert all(a >= b - 1e-12 for a, b in zip(vals, vals[1:]))


def test_delta_mc_consistent_with_exact(rng):
    inst = rfim.box_instance(2, 2, 0.5, rng.normal(size=25))
    ex = mixing.delta(inst, (0, 0), 1).value
    mc = mixing.delta(inst, (0, 0), 1, "coupled-mc", McParams(30.0, 4000), seed=3)
    # coupling disagreement upper-bounds the TV
    assert mc.value >= ex - 3 * mc.stderr
    assert mc.value - ex < 0.05


def test_delta_errors():
    inst = rfim.box_instance(1, 2, 0.5, np.zeros(9))
    with pytest.raises(ValueError):
        mixing.delta(inst, (0, 0), 1, method="gibbs")


def test_wsm_scan_beta_zero():
    scan = mixing.wsm_scan(FieldSpec("gaussian", 1.0), 0.0, [1, 2], 3)
    assert np.all(scan.means == 0.0)
    assert scan.fit is None and "slope: undefined" in scan.fit_block()


def test_wsm_scan_subcritical_decay():
    scan = mixing.wsm_scan(FieldSpec("two_point", 0.0), 0.3, [1, 2, 3], 1)
    assert np.all(np.diff(scan.means) < 0)
    assert scan.fit.slope < 0
    assert scan.to_csv().splitlines()[0] == "r,mean,stderr,replicas,method"


def test_wsm_scan_strong_disorder_mc():
    scan = mixing.wsm_scan(FieldSpec("gaussian", 25.0), 1.0, [1, 2, 3], 20, method="coupled-mc",
                           mc=McParams(20.0, 500), seed=2)
    assert scan.fit.slope < 0


def _ssm_bruteforce(beta, h, ell, w_idx):
    """3-site interval [0,1,2]; exterior sites -1 and 3; TV at w over the pinned pair."""
    B = [(0,), (1,), (2,)]
    ext = [(-1,), (3,)]
    w = B[w_idx]
    best = 0.0
    for j, z in enumerate(ext):
        if abs(z[0] - w[0]) != ell:
            continue
        other = ext[1 - j]
        for xi in (-1, 1):
            probs = []
            for zs in (-1, 1):
                bnd = {z: zs, other: xi}
                probs.append(exact.enumerate_gibbs(RfimInstance(lattice.make_rect((3,)), beta, h, bnd)).plus_prob(w_idx))
            best = max(best, abs(probs[1] - probs[0]))
    return best


@pytest.mark.parametrize("ell,w_idx", [(1, 0), (2, 0), (3, 0), (2, 1)])
def test_ssm_exhaustive_interval(ell, w_idx):
    h = np.array([0.3, -0.5, 0.2])
    B = lattice.make_rect((3,))
    res = mixing.ssm_functional(lambda v: h[B.index(v)] if v in B else 0.0, 0.7, B, B.vertex(w_idx), ell)
    assert res.exhaustive
    assert res.value == pytest.approx(_ssm_bruteforce(0.7, h, ell, w_idx), abs=1e-13)


def test_ssm_beta_zero():
    B = lattice.make_box(1, 2)
    res = mixing.ssm_functional(lambda v: 0.4, 0.0, B, (0, 0), 2)
    assert res.value == pytest.approx(0.0, abs=1e-15)


def test_ssm_strong_fields_confine_disagreement():
    B = lattice.make_box(1, 2)
    spec = FieldSpec("two_point", 4.0, 5)
    h = rfim.sample_field(spec, lattice.make_box(3, 2))
    big = lattice.make_box(3, 2)

    def h_of(v):
        return h[big.index(v)]

    vals = [mixing.ssm_functional(h_of, 0.5, B, (0, 0), ell).value for ell in (2, 3)]
    assert vals[1] <= vals[0]
    # fit e^{-ℓ/C} through the two points; a positive C means decay
    assert vals[0] < 0.05 and vals[1] < vals[0]


def test_ssm_random_candidates_are_lower_bound():
    B = lattice.make_rect((3, 3))
    h = stream(2, "h").normal(size=100)
    h_of = lambda v: h[(v[0] + 5) * 10 + (v[1] + 5)]
    full = mixing.ssm_functional(h_of, 0.6, B, (1, 1), 3, exhaustive_limit=16)
    part = mixing.ssm_functional(h_of, 0.6, B, (1, 1), 3, exhaustive_limit=4, n_random=8)
    assert full.exhaustive and not part.exhaustive
    assert part.value <= full.value + 1e-13


def test_domination_examples(rng):
    zero = rfim.box_instance(1, 2, 0.0, rng.normal(size=9))
    rep = mixing.cov_delta_domination(zero)
    assert rep.ok and abs(rep.min_cov) < 1e-15
    inst = rfim.box_instance(1, 2, 0.5, rng.normal(size=9))
    rep = mixing.cov_delta_domination(inst)
    assert rep.ok and rep.checks > 0 and rep.min_cov >= -1e-12


def test_inclusive_rule_counterexample():
    # B_1 of a site in a two-site path covers the domain, so δ(u, 1) = 0 < Cov = tanh β
    inst = RfimInstance(lattice.make_rect((2,)), 0.5, np.zeros(2))
    assert mixing.delta(inst, (0,), 1).value == 0.0
    rep = mixing.cov_delta_domination(inst, ell_rule="inclusive")
    assert not rep.ok
    u, v, ell, c, dl = rep.violations[0]
    assert ell == 1 and c == pytest.approx(np.tanh(0.5), abs=1e-14) and dl == 0.0
    assert mixing.cov_delta_domination(inst).ok
