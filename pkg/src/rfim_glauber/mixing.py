"""Spatial-mixing functionals.

δ(u, ℓ) is the total variation between the laws of σ_u under + and − pinning
of the exterior vertex boundary of B_ℓ(u) ∩ Λ.  Scans average δ over fresh
field draws and fit log-mean against the radius.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import exact, lattice, parallel
from ._rng import stream
from .glauber import coupled_disagreement
from .lattice import Domain, ball, make_box
from .rfim import FieldSpec, RfimInstance, box_instance, pin_constant, sample_field
from .stats import LineFit, mean_se, ols

EPS_FLOOR = 1e-12
METHODS = ("exact", "coupled-mc")


@dataclass
class DeltaEstimate:
    u: tuple
    ell: int
    value: float
    method: str
    stderr: float = 0.0


@dataclass
class McParams:
    t_burn: float = 50.0
    replicas: int = 2000


def _pinned_pair(inst: RfimInstance, u, ell: int):
    B = ball(u, ell, inst.domain)
    dB = lattice.boundary(set(B), inst.domain)
    if not dB:
        return None
    return pin_constant(inst, list(B), -1), pin_constant(inst, list(B), +1)


def _coupled_delta(minus: RfimInstance, plus: RfimInstance, i: int, mc: McParams, seed: int, tag):
    N = minus.N
    counts, _ = coupled_disagreement(minus, plus, -np.ones(N, np.int64), np.ones(N, np.int64),
                                     mc.t_burn, mc.replicas, seed, tag)
    p = counts[i] / mc.replicas
    return float(p), float(np.sqrt(max(p * (1 - p), 0.0) / mc.replicas))


def delta(inst: RfimInstance, u, ell: int, method: str = "exact", mc: Optional[McParams] = None,
          seed: int = 0) -> DeltaEstimate:
    """Boundary influence at u from the exterior boundary of B_ℓ(u) ∩ Λ."""
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    u = tuple(int(x) for x in u)
    pair = _pinned_pair(inst, u, ell)
    if pair is None:
        return DeltaEstimate(u, ell, 0.0, method)
    minus, plus = pair
    i = minus.domain.index(u)
    if method == "exact":
        try:
            val = exact.site_plus_prob(plus, i) - exact.site_plus_prob(minus, i)
        except exact.TooLargeError as exc:
            raise exact.TooLargeError(f"ball B_{ell}({u}) is too large for exact δ") from exc
        return DeltaEstimate(u, ell, float(min(1.0, max(0.0, val))), method)
    val, se = _coupled_delta(minus, plus, i, mc or McParams(), seed, ("delta",) + u + (ell,))
    return DeltaEstimate(u, ell, val, method, se)


def wsm_delta(h, beta: float, r: int, d: int, method: str = "exact", mc: Optional[McParams] = None,
              seed: int = 0, tag=("wsm",)) -> float:
    """δ at the origin of B_r with ± pinned on its exterior boundary in Z^d."""
    plus = box_instance(r, d, beta, h, +1)
    minus = box_instance(r, d, beta, h, -1)
    o = plus.domain.index((0,) * d)
    if method == "exact":
        return exact.site_plus_prob(plus, o) - exact.site_plus_prob(minus, o)
    return _coupled_delta(minus, plus, o, mc or McParams(), seed, tag)[0]


# -- scans ----------------------------------------------------------------------

@dataclass
class DecayScan:
    radii: list
    means: np.ndarray
    stderrs: np.ndarray
    replicas: int
    method: str
    spec: str
    beta: float
    values: Optional[np.ndarray] = None
    fit: Optional[LineFit] = None
    fit_note: str = ""
    meta: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        rows = ["r,mean,stderr,replicas,method"]
        for r, m, s in zip(self.radii, self.means, self.stderrs):
            rows.append(f"{r},{m:.17g},{s:.17g},{self.replicas},{self.method}")
        return "\n".join(rows) + "\n"

    def fit_block(self) -> str:
        f = self.fit
        if f is None:
            return f"slope: undefined\nnote: {self.fit_note}\n"
        return (f"slope: {f.slope:.17g}\nintercept: {f.intercept:.17g}\nr2: {f.r2:.17g}\n"
                f"slope_se: {f.slope_se:.17g}\nC_hat: {f.c_hat:.17g}\n")


def fit_decay(radii, means, stderrs):
    """OLS of log(mean + ε) on r over radii with nonzero mean.

    Slope standard error propagates se_i/mean_i through the fit.
    """
    radii = np.asarray(radii, float)
    means = np.asarray(means, float)
    keep = means > 0
    if keep.sum() < 2:
        return None, "fewer than two radii with nonzero mean"
    y = np.log(means[keep] + EPS_FLOOR)
    y_se = np.asarray(stderrs, float)[keep] / (means[keep] + EPS_FLOOR)
    return ols(radii[keep], y, y_se), ""


def wsm_scan(spec: FieldSpec, beta: float, radii: Sequence[int], replicas: int, d: int = 2,
             method: str = "exact", mc: Optional[McParams] = None, seed: int = 0, n_workers=None) -> DecayScan:
    """Mean over fresh field draws of δ(o, r) for each radius."""
    radii = [int(r) for r in radii]
    cells = [(r, k) for r in radii for k in range(replicas)]

    def work(lo, hi):
        out = []
        for r, k in cells[lo:hi]:
            dom = make_box(r, d)
            fseed = int(stream(seed, "wsm-field", r, k).integers(2 ** 63))
            h = sample_field(spec.with_seed(fseed), dom) if spec.random else sample_field(spec, dom)
            out.append(wsm_delta(h, beta, r, d, method, mc, seed, ("wsm", r, k)))
        return out

    vals = np.array([x for part in parallel.map_ranges(work, len(cells), n_workers) for x in part])
    vals = vals.reshape(len(radii), replicas)
    ms = [mean_se(row) for row in vals]
    means = np.array([m for m, _ in ms])
    ses = np.array([s for _, s in ms])
    fit, note = fit_decay(radii, means, ses)
    return DecayScan(radii, means, ses, replicas, method, spec.describe(), beta, vals, fit, note,
                     {"d": d, "seed": seed})


# -- strong spatial mixing ------------------------------------------------------

def _inter_counts(B: Domain) -> np.ndarray:
    S = exact.spin_table(B.N).astype(np.int64)
    inter = np.zeros(len(S), dtype=np.int64)
    for a, b in B.edges():
        inter += S[:, a] * S[:, b]
    return inter


def _plus_probs(B: Domain, hB, beta: float, C: np.ndarray, xis: np.ndarray, w: int, chunk: int = 2048):
    """P(σ_w = +1) on B for each boundary configuration row of ``xis``."""
    S = exact.spin_table(B.N).astype(np.float64)
    inter = beta * _inter_counts(B)
    wplus = S[:, w] > 0
    out = np.empty(len(xis))
    for lo in range(0, len(xis), chunk):
        H = hB[None, :] + beta * (xis[lo:lo + chunk] @ C.T)
        lw = H @ S.T + inter[None, :]
        lw -= lw.max(axis=1, keepdims=True)
        p = np.exp(lw)
        out[lo:lo + chunk] = p[:, wplus].sum(axis=1) / p.sum(axis=1)
    return out


def _all_configs(k: int) -> np.ndarray:
    return exact.spin_table(k).astype(np.float64)


@dataclass
class SsmResult:
    value: float
    exhaustive: bool
    n_candidates: int
    argmax: Optional[tuple] = None


def ssm_functional(h_of, beta: float, B: Domain, w, ell: int, rng: Optional[np.random.Generator] = None,
                   exhaustive_limit: int = 16, n_random: int = 32) -> SsmResult:
    """max over z ∈ ∂B with d(w, z) = ℓ and over ξ on ∂B∖z of the TV at w.

    ``h_of`` maps a vertex to its field value (used on B and, for the sign(h)
    candidate, on ∂B).  ∂B is the exterior boundary of B in Z^d and d the ℓ1
    graph distance.  Above ``exhaustive_limit`` free boundary spins the max is
    over {all-plus, all-minus, sign(h), n_random random ξ} and is a lower bound.
    """
    w = tuple(int(x) for x in w)
    dB = sorted(lattice.exterior_boundary(B))
    zs = [j for j, z in enumerate(dB) if lattice.l1(w, z) == ell]
    if not zs:
        return SsmResult(0.0, True, 0)
    hB = np.array([h_of(v) for v in B])
    C = np.zeros((B.N, len(dB)))
    for j, z in enumerate(dB):
        for nb in lattice._zd_neighbors(z):
            i = B.index(nb, missing=-1)
            if i >= 0:
                C[i, j] = 1.0
    wi = B.index(w)
    m = len(dB)
    if m - 1 <= exhaustive_limit:
        xis = _all_configs(m)
        p = _plus_probs(B, hB, beta, C, xis, wi)
        best, arg = 0.0, None
        codes = np.arange(1 << m)
        for j in zs:
            lo = codes[((codes >> j) & 1) == 0]
            diff = np.abs(p[lo | (1 << j)] - p[lo])
            k = int(np.argmax(diff))
            if diff[k] > best:
                best, arg = float(diff[k]), (dB[j], int(lo[k]))
        return SsmResult(best, True, 1 << (m - 1), arg)
    rng = rng or stream(0, "ssm-candidates")
    sgn = np.array([1.0 if h_of(z) >= 0 else -1.0 for z in dB])
    cands = [np.ones(m), -np.ones(m), sgn] + [rng.choice([-1.0, 1.0], m) for _ in range(n_random)]
    best, arg = 0.0, None
    for j in zs:
        X = np.array(cands)
        Xp, Xm = X.copy(), X.copy()
        Xp[:, j], Xm[:, j] = 1.0, -1.0
        diff = np.abs(_plus_probs(B, hB, beta, C, Xp, wi) - _plus_probs(B, hB, beta, C, Xm, wi))
        k = int(np.argmax(diff))
        if diff[k] > best:
            best, arg = float(diff[k]), (dB[j], k)
    return SsmResult(best, False, len(cands), arg)


# -- covariance domination -----------------------------------------------------

@dataclass
class DominationReport:
    checks: int
    violations: list
    min_cov: float
    rule: str

    @property
    def ok(self) -> bool:
        return not self.violations


def cov_delta_domination(inst: RfimInstance, pairs=None, ell_rule: str = "strict", tol: float = 1e-12) -> DominationReport:
    """Check 0 ≤ Cov(σ_u, σ_v) ≤ δ(u, ℓ) + tol.

    ``strict`` uses 0 ≤ ℓ < d∞(u, v), the range on which the exterior boundary of
    B_ℓ(u) separates u from v.  ``inclusive`` also tries ℓ = d∞(u, v).
    """
    if ell_rule not in ("strict", "inclusive"):
        raise ValueError("ell_rule must be 'strict' or 'inclusive'")
    g = exact.enumerate_gibbs(inst)
    cov = exact.covariance(g)
    N = inst.N
    if pairs is None:
        pairs = [(a, b) for a in range(N) for b in range(N) if a != b]
    cache = {}
    viol = []
    checks = 0
    min_cov = np.inf
    for a, b in pairs:
        u, v = inst.domain.vertex(a), inst.domain.vertex(b)
        dist = lattice.linf(u, v)
        top = dist if ell_rule == "inclusive" else dist - 1
        c = float(cov[a, b])
        min_cov = min(min_cov, c)
        for ell in range(0, top + 1):
            key = (a, ell)
            if key not in cache:
                cache[key] = delta(inst, u, ell).value
            dl = cache[key]
            checks += 1
            if c < -tol or c > dl + tol:
                viol.append((u, v, ell, c, dl))
    return DominationReport(checks, viol, float(min_cov), ell_rule)
