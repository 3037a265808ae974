"""Acceptance suite: one function per criterion, each returning an Outcome.

Every criterion derives its randomness from ``stream(seed, "acceptance", k)``
so a run is reproducible from the master seed alone.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import blocks, exact, glauber, lattice, mixing, sampler, sloc
from ._rng import stream
from .rfim import FieldSpec, RfimInstance, pin, sample_field


@dataclass
class Outcome:
    number: int
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0
    budget: float = float("inf")
    data: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.passed and self.seconds <= self.budget

    def line(self) -> str:
        tag = "PASS" if self.ok else "FAIL"
        if math.isinf(self.budget):
            timing = f"{self.seconds:.1f}s"
        else:
            over = "" if self.seconds <= self.budget else " over budget"
            timing = f"{self.seconds:.1f}s of {self.budget:.0f}s{over}"
        return f"[{tag}] criterion {self.number} ({self.name}): {self.detail}; {timing}"


# -- random instance helpers ----------------------------------------------------

_HOSTS = {1: (6, 1), 2: (2, 2), 3: (1, 3)}


def _connected_subset(host: lattice.Domain, size: int, rng) -> list:
    """Random connected vertex set grown from a random start."""
    start = host.vertex(int(rng.integers(host.N)))
    chosen = [start]
    seen = {start}
    while len(chosen) < size:
        front = sorted({w for v in chosen for w in lattice._zd_neighbors(v) if w in host and w not in seen})
        if not front:
            break
        w = front[int(rng.integers(len(front)))]
        seen.add(w)
        chosen.append(w)
    return chosen


def random_instance(rng, d: int, n_max: int, beta_max: float, connected: Optional[bool] = None) -> RfimInstance:
    """Pinned RFIM on a random subset of a small box, gaussian(1) field, random boundary."""
    n, _ = _HOSTS[d]
    host = lattice.make_box(n, d)
    size = int(rng.integers(1, n_max + 1))
    if connected is None:
        connected = bool(rng.random() < 0.5)
    if connected:
        A = _connected_subset(host, size, rng)
    else:
        A = [host.vertex(int(i)) for i in rng.choice(host.N, size, replace=False)]
    h = rng.standard_normal(host.N)
    base = RfimInstance(host, float(rng.uniform(0.0, beta_max)), h)
    tau = {w: int(rng.choice([-1, 1])) for w in lattice.boundary(set(A), host)}
    return pin(base, A, tau)


def _timed(number: int, name: str, budget: float, fn: Callable[[], tuple]) -> Outcome:
    t0 = time.perf_counter()
    passed, detail, data = fn()
    return Outcome(number, name, bool(passed), detail, time.perf_counter() - t0, budget, data)


# -- 1. exactness core ------------------------------------------------------------

def heat_bath_rate_residual(g: exact.ExactGibbs, inst: RfimInstance, L: np.ndarray) -> float:
    """max |L(σ, σ^i) − P(σ_i ↦ −σ_i | rest)| with the conditional from local fields."""
    S = exact.spin_table(g.N).astype(np.float64)
    nbr = inst.domain.neighbors
    worst = 0.0
    codes = np.arange(1 << g.N)
    for i in range(g.N):
        m = np.full(len(codes), inst.h_eff[i])
        for j in nbr[i]:
            if j >= 0:
                m += inst.beta * S[:, j]
        target = -S[:, i]
        rate = 1.0 / (1.0 + np.exp(-2.0 * target * m))
        worst = max(worst, float(np.max(np.abs(L[codes, codes ^ (1 << i)] - rate))))
    return worst


def criterion_1(seed: int = 0, n_instances: int = 200, n_gap: int = 20) -> Outcome:
    def body():
        rng = stream(seed, "acceptance", 1)
        db = rate = norm = 0.0
        for k in range(n_instances):
            inst = random_instance(rng, int(rng.integers(1, 4)), 12, 1.5)
            g = exact.enumerate_gibbs(inst)
            L = exact.generator(g)
            db = max(db, exact.detailed_balance_residual(g, L))
            rate = max(rate, heat_bath_rate_residual(g, inst, L))
            norm = max(norm, abs(float(g.probs.sum()) - 1.0))
        gap_err = 0.0
        for k in range(n_gap):
            inst = random_instance(rng, int(rng.integers(1, 4)), 8, 1.5)
            g = exact.enumerate_gibbs(inst)
            if g.N < 2:
                continue
            gap_err = max(gap_err, abs(exact.spectral_gap(g).gap - exact.variational_gap(g, rng)))
        ok = db < 1e-12 and rate < 1e-12 and norm < 1e-12 and gap_err < 1e-9
        detail = (f"max DB residual {db:.2e}, heat-bath rate residual {rate:.2e}, "
                  f"|sum p - 1| {norm:.2e}, gap vs variational {gap_err:.2e}")
        return ok, detail, {"db": db, "rate": rate, "norm": norm, "gap_err": gap_err}

    return _timed(1, "exactness core", 120, body)


# -- 2. FKG / monotonicity -------------------------------------------------------

def _raised_boundary(inst: RfimInstance, rng) -> RfimInstance:
    hi = {w: (1 if s < 0 and rng.random() < 0.5 else s) for w, s in inst.boundary.items()}
    return RfimInstance(inst.domain, inst.beta, inst.h, hi)


def increasing_functions(N: int, rng, count: int) -> np.ndarray:
    """Rows of increasing functions on codes: up-set indicators and positive spin sums."""
    codes = np.arange(1 << N, dtype=np.int64)
    S = exact.spin_table(N).astype(np.float64)
    out = []
    for k in range(count):
        if k % 2 == 0:
            gens = rng.integers(0, 1 << N, size=int(rng.integers(1, 4)))
            f = np.zeros(len(codes), dtype=bool)
            for gcode in gens:
                f |= (codes & gcode) == gcode
            out.append(f.astype(np.float64))
        else:
            out.append(S @ rng.uniform(0.0, 1.0, N))
    return np.array(out)


def criterion_2(seed: int = 0, n_pairs: int = 100, sequences: int = 10, n_events: int = 1000,
                n_cov: int = 100) -> Outcome:
    def body():
        rng = stream(seed, "acceptance", 2)
        order = coal = events = 0
        for k in range(n_pairs):
            lo = random_instance(rng, int(rng.integers(1, 4)), 12, 1.5, connected=True)
            # odd pairs share one law and test coalescence; even pairs raise the boundary
            hi = lo if k % 2 else _raised_boundary(lo, rng)
            w = glauber.order_watch(lo, hi, n_events, sequences, seed=int(rng.integers(2 ** 62)))
            order += w["order_breaches"]
            coal += w["coalescence_breaches"] or 0
            events += w["events"]
        min_cov = np.inf
        for k in range(n_cov):
            inst = random_instance(rng, int(rng.integers(1, 4)), 10, 1.5)
            g = exact.enumerate_gibbs(inst)
            F = increasing_functions(g.N, rng, 12)
            m = F @ g.probs
            C = (F * g.probs) @ F.T - np.outer(m, m)
            min_cov = min(min_cov, float(C.min()))
        ok = order == 0 and coal == 0 and events >= 10 ** 6 and min_cov >= -1e-12
        detail = (f"{events} coupled events, {order} order breaches, {coal} coalescence breaches, "
                  f"min increasing-pair covariance {min_cov:.2e}")
        return ok, detail, {"events": events, "order": order, "coal": coal, "min_cov": min_cov}

    return _timed(2, "FKG and monotone coupling", 300, body)


# -- 3. covariance domination ----------------------------------------------------

def criterion_3(seed: int = 0, n_instances: int = 200) -> Outcome:
    def body():
        rng = stream(seed, "acceptance", 3)
        checks = 0
        bad = []
        for k in range(n_instances):
            inst = random_instance(rng, int(rng.integers(1, 3)), 12, 1.0, connected=True)
            rep = mixing.cov_delta_domination(inst, ell_rule="strict", tol=1e-12)
            checks += rep.checks
            bad.extend(rep.violations)
        detail = f"{checks} (pair, radius) checks, {len(bad)} violations"
        return not bad, detail, {"checks": checks, "violations": bad[:10]}

    return _timed(3, "covariance domination by boundary influence", 300, body)


# -- 4. stochastic localization --------------------------------------------------

def tilt_identity_tv(inst: RfimInstance, times, trajectories: int, seed: int) -> float:
    """max TV between the tilted Gibbs table and the direct Bayes posterior."""
    g0 = exact.enumerate_gibbs(inst)
    worst = 0.0
    for r in range(trajectories):
        traj = sloc.sl_trajectory(inst, times, "exact", seed, r)
        for k, t in enumerate(traj.times):
            tilted = exact.enumerate_gibbs(traj.tilted(k)).probs
            worst = max(worst, 0.5 * float(np.abs(tilted - sloc.bayes_posterior(g0, traj.y[k], t)).sum()))
    return worst


def criterion_4(seed: int = 0, replicas: int = 10_000) -> Outcome:
    def body():
        rng = stream(seed, "acceptance", 4)
        fs = FieldSpec("gaussian", 1.0)
        sq = lattice.make_rect((2, 2))
        small = RfimInstance(sq, 0.5, sample_field(fs.with_seed(seed), sq))
        box = lattice.make_box(1, 2)
        mid = RfimInstance(box, 0.6, sample_field(fs.with_seed(seed + 1), box))
        A = rng.random(1 << small.N) < 0.5
        mag_small = exact.spin_table(small.N).sum(axis=1).astype(float)
        mag_mid = exact.spin_table(mid.N).sum(axis=1).astype(float)
        rep = sloc.martingale_check(small, A, sloc.DEFAULT_TIMES, replicas, seed)
        rep.extend(sloc.variance_decay_check(small, mag_small, sloc.DEFAULT_TIMES, replicas, seed))
        rep.extend(sloc.supermartingale_checks(mid, (-1, -1), 1, mag_mid, (0.0, 0.5, 1.0, 2.0), replicas, seed))
        tv = 0.0
        for N in range(1, 7):
            d = int(rng.integers(1, 3))
            dom = lattice.Domain(_connected_subset(lattice.make_box(3, d), N, rng), d=d)
            inst = RfimInstance(dom, float(rng.uniform(0, 1.5)), rng.standard_normal(dom.N))
            tv = max(tv, tilt_identity_tv(inst, sloc.DEFAULT_TIMES, 20, seed))
        fails = [r for r in rep.rows if r[5] == "fail"]
        zs = [abs(v) for k, v in rep.notes.items() if k.startswith("z@")]
        ok = not fails and tv < 1e-10
        detail = (f"{len(rep.rows)} statistical rows, {len(fails)} failing, max |z| {max(zs):.2f}, "
                  f"tilt-vs-Bayes TV {tv:.2e}")
        return ok, detail, {"report": rep, "tilt_tv": tv, "fails": fails}

    return _timed(4, "stochastic localization structure", 900, body)


# -- 5. sampler ------------------------------------------------------------------

SAMPLER_CASES = (("2x2", lambda: lattice.make_rect((2, 2)), 6.0), ("3x3", lambda: lattice.make_box(1, 2), 4.0))


def criterion_5(seed: int = 0, runs: int = 100_000, beta: float = 0.5, draws: int = 3, n_workers=None) -> Outcome:
    def body():
        rows = []
        worst_tv = 0.0
        worst_ratio = 0.0
        for name, make, c_star in SAMPLER_CASES:
            dom = make()
            bound = math.exp(4 * dom.d * beta)
            for k in range(draws):
                h = sample_field(FieldSpec("gaussian", 1.0, seed=seed + k), dom)
                cfg = sampler.SamplerConfig(C_star=c_star, seed=int(stream(seed, "acceptance", 5, name, k).integers(2 ** 62)))
                codes = sampler.incremental_sample(dom, beta, h, cfg, runs, n_workers)
                g = exact.enumerate_gibbs(RfimInstance(dom, beta, h))
                tv = 0.5 * float(np.abs(glauber.empirical_law(codes, dom.N) - g.probs).sum())
                ratio = max(sampler.warm_start_ratio(dom, i, beta, h) for i in range(2, dom.N + 1))
                worst_tv = max(worst_tv, tv)
                worst_ratio = max(worst_ratio, ratio / bound)
                rows.append((name, k, cfg.k_star(dom.N), tv, ratio, bound))
        ok = worst_tv < 0.02 and worst_ratio <= 1.0 + 1e-9
        detail = f"worst TV {worst_tv:.4f} over {len(rows)} fields, worst warm-start ratio / bound {worst_ratio:.3f}"
        return ok, detail, {"rows": rows}

    return _timed(5, "incremental sampler", 1200, body)


# -- 6. block machinery ----------------------------------------------------------

def block_fixtures(seed: int = 0) -> list:
    """(name, instance, blocks) for the three dense-spectrum fixtures."""
    rng = stream(seed, "block-fixtures")
    out = []
    path = lattice.make_rect((4,))
    out.append(("path4", RfimInstance(path, 0.8, rng.standard_normal(4)), [[0, 1, 2], [1, 2, 3]]))
    rect = lattice.make_rect((2, 3))
    left = [rect.index(v) for v in rect if v[1] <= 1]
    right = [rect.index(v) for v in rect if v[1] >= 1]
    out.append(("rect2x3", RfimInstance(rect, 0.7, rng.standard_normal(6)), [left, right]))
    box = lattice.make_rect((3, 3))
    whole = list(range(box.N))
    out.append(("whole3x3", RfimInstance(box, 0.5, rng.standard_normal(9)), [whole]))
    return out


def geometry_instances(count: int, seed: int, radii=(8, 12, 16)):
    """Classified block sets on Λ_{2R}, d = 2, with strong uniform fields."""
    for k in range(count):
        R = radii[k % len(radii)]
        dom = lattice.make_box(2 * R, 2)
        h = sample_field(FieldSpec("uniform_symmetric", 300.0, seed=seed * 1000 + k), dom)
        params = blocks.GoodBadParams(K=1.0, R=R, beta=0.02, mc_replicas=512, r_mode="desk")
        grid = blocks.classify(dom, h, params, seed=seed + k)
        yield R, grid, blocks.build_blocks(grid)


def criterion_6(seed: int = 0, n_geometry: int = 50) -> Outcome:
    def body():
        gap_rows = []
        drift = 0.0
        for name, inst, bl in block_fixtures(seed):
            rep = blocks.block_dynamics_gap_check(inst, bl, tol=1e-9)
            gap_rows.append((name, rep))
            drift = max(drift, blocks.stationarity_drift(exact.enumerate_gibbs(inst), bl))
        rng = stream(seed, "acceptance", 6)
        for k in range(5):
            inst = random_instance(rng, 2, 8, 1.0)
            ids = np.arange(inst.N)
            bl = [ids[: max(1, inst.N // 2 + 1)], ids[inst.N // 2:]]
            drift = max(drift, blocks.stationarity_drift(exact.enumerate_gibbs(inst), bl))
        worst = 0.0
        for R, grid, bs in geometry_instances(n_geometry, seed):
            geo = blocks.block_geometry_report(bs)
            worst = max(worst, geo.max_ratio / geo.bound)
        gaps_ok = all(rep.ok for _, rep in gap_rows)
        ok = gaps_ok and drift < 1e-10 and worst <= 1.0
        slack = min(rep.gap_G - rep.rhs for _, rep in gap_rows)
        detail = (f"block-gap inequality on {len(gap_rows)} fixtures (min slack {slack:.3e}), "
                  f"kernel drift {drift:.2e}, worst geometry ratio / bound {worst:.3f} on {n_geometry} instances")
        return ok, detail, {"gaps": gap_rows, "drift": drift, "geometry": worst}

    return _timed(6, "block machinery", 600, body)


# -- 7. weak spatial mixing trend ------------------------------------------------

def criterion_7(seed: int = 0, replicas: int = 200, mc: Optional[mixing.McParams] = None, n_workers=None) -> Outcome:
    def body():
        radii = [1, 2, 3]
        vals = np.array([mixing.wsm_delta(np.zeros((2 * r + 1) ** 2), 0.3, r, 2) for r in radii])
        fit = mixing.fit_decay(radii, vals, np.zeros(3))[0]
        exact_ok = bool(np.all(np.diff(vals) < 0)) and fit.slope < -0.2
        scan = mixing.wsm_scan(FieldSpec("gaussian", 25.0), 1.0, radii, replicas, 2, "coupled-mc",
                               mc or mixing.McParams(t_burn=20.0, replicas=1000), seed, n_workers)
        mc_ok = (scan.fit is not None and bool(np.all(np.diff(scan.means) < 0))
                 and scan.fit.slope + 3 * scan.fit.slope_se < 0)
        mc_slope = scan.fit.slope if scan.fit else float("nan")
        mc_se = scan.fit.slope_se if scan.fit else float("nan")
        detail = (f"exact delta {np.array2string(vals, precision=4)} slope {fit.slope:.3f}; "
                  f"MC means {np.array2string(scan.means, precision=4)} slope {mc_slope:.3f} +- {mc_se:.3f}")
        return exact_ok and mc_ok, detail, {"exact": vals, "scan": scan}

    return _timed(7, "weak spatial mixing trend", 900, body)


# -- 8. Griffiths slowdown ---------------------------------------------------------

def criterion_8(seed: int = 0, pairs: int = 200, n_workers=None, **kw) -> Outcome:
    def body():
        res = sampler.griffiths_experiment(pairs=pairs, seed=seed, n_workers=n_workers, **kw)
        detail = (f"tau ratio {res.ratio:.2f} +- {res.ratio_se:.2f} (lower 3-sigma {res.lower:.2f}, "
                  f"threshold {res.threshold:g}) over {len(res.tau_typical)} pairs")
        return res.ok, detail, {"result": res}

    return _timed(8, "Griffiths slowdown witness", 1800, body)


# -- 9. reproducibility ------------------------------------------------------------

def criterion_9(seed: int = 0, workers=(1, 3)) -> Outcome:
    from . import cli

    def body():
        mismatched = []
        count = 0
        for cfg in cli.reproducibility_configs():
            runs = [cli.execute(cli.parse_config_text(cfg), seed, w).artifacts for w in workers]
            for name in runs[0]:
                if not name.endswith(".csv"):
                    continue
                count += 1
                if any(r.get(name) != runs[0][name] for r in runs[1:]):
                    mismatched.append(name)
        detail = f"{count} CSV artifacts compared across worker counts {list(workers)}, {len(mismatched)} differ"
        return not mismatched and count > 0, detail, {"mismatched": mismatched}

    return _timed(9, "reproducibility across worker counts", float("inf"), body)


CRITERIA = {1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5,
            6: criterion_6, 7: criterion_7, 8: criterion_8, 9: criterion_9}


def run_all(seed: int = 0, only=None, echo: Callable[[str], None] = print) -> list:
    out = []
    for k, fn in CRITERIA.items():
        if only and k not in only:
            continue
        res = fn(seed=seed)
        echo(res.line())
        out.append(res)
    return out
