"""Coarse graining into Good/Bad sites and block dynamics.

Classification (anti-concentration variant): with ω^h_x = 1{|h_x| ≤ K} and
η i.i.d. Ber(ρ), a coarse site v is Good when for every w ∈ B_v and every r in
the configured scale range the Wilson upper bound on
P(|C_w(ω^h ∨ η)| ≥ r | ω^h) is at most e^{−r}.  The SSM variant bounds the
worst boundary influence on radius-1 boxes around each w instead.

Blocks follow the two-type construction: small balls near Good sites and
translates of the neighbourhoods of Bad R-*-clusters.  Block radii use
⌊R/8⌋; distance thresholds 3R/4 and R/2 are compared as real numbers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import linalg, ndimage

from . import exact, lattice
from ._rng import stream
from .glauber import monotone_sample_pair
from .lattice import CoarseGrid, Domain
from .mixing import ssm_functional
from .rfim import ConfigError, RfimInstance, pin
from .stats import mean_se, wilson_upper

VARIANTS = ("anticoncentration", "ssm")
R_MODES = ("literal", "desk")


def rho(d: int, beta: float, K: float) -> float:
    a = 2 * d * beta - K
    # e^a / (e^a + e^-a), evaluated stably
    return float(1.0 / (1.0 + np.exp(-2.0 * a)))


def r_range(R: int, mode: str = "literal") -> tuple:
    """Integer scales r with (ln R)² ≤ r ≤ R/8.

    ``literal`` rounds (ln R)² up and R/8 down and rejects an empty range.
    ``desk`` clamps the lower end to ⌊R/8⌋ (at least 1) so small R stay usable.
    """
    lo = math.ceil(math.log(R) ** 2)
    hi = R // 8
    if mode == "literal":
        if lo > hi:
            raise ConfigError(f"empty scale range [{lo}, {hi}] for R={R}; need R >= {r_min_literal()}")
        return lo, hi
    if mode == "desk":
        hi = max(hi, 1)
        return min(lo, hi), hi
    raise ConfigError(f"unknown scale mode {mode!r}")


def r_min_literal() -> int:
    """Least R for which the literal scale range is nonempty."""
    R = 2
    while math.ceil(math.log(R) ** 2) > R // 8:
        R += 1
    return R


@dataclass(frozen=True)
class GoodBadParams:
    K: float
    R: int
    beta: float
    variant: str = "anticoncentration"
    mc_replicas: int = 4096
    r_mode: str = "literal"
    C_star: float = 1.0
    z: float = 3.0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}")
        if self.R < 2:
            raise ConfigError("R must be at least 2")
        if self.mc_replicas < 1:
            raise ConfigError("mc_replicas must be positive")

    def rho(self, d: int) -> float:
        return rho(d, self.beta, self.K)


def _grid_shape(domain: Domain) -> tuple:
    if not domain.is_box:
        raise ValueError("coarse graining is implemented for boxes")
    return (2 * domain.box_radius + 1,) * domain.d


def _cluster_tail_counts(open_h: np.ndarray, p_eta: float, scales, M: int, seed: int, chunk: int = 256):
    """counts[k, x] = #{η draws with |C_x| ≥ scales[k]} over M draws."""
    shape = open_h.shape
    d = open_h.ndim
    structure = ndimage.generate_binary_structure(d, 1)
    counts = np.zeros((len(scales),) + shape, dtype=np.int64)
    g = stream(seed, "eta")
    done = 0
    while done < M:
        m = min(chunk, M - done)
        eta = g.random((m,) + shape) < p_eta
        omega = eta | open_h[None]
        for j in range(m):
            lab, nlab = ndimage.label(omega[j], structure=structure)
            sizes = np.bincount(lab.ravel(), minlength=nlab + 1)
            sizes[0] = 0
            sz = sizes[lab]
            for k, r in enumerate(scales):
                counts[k] += sz >= r
        done += m
    return counts


def classify(domain: Domain, h, params: GoodBadParams, seed: int = 0) -> CoarseGrid:
    """Good/Bad labels on Λ_n ∩ RZ^d with per-site margins."""
    grid = lattice.coarse_lattice(domain, params.R)
    h = np.asarray(h, dtype=float)
    if params.variant == "anticoncentration":
        return _classify_ac(grid, h, params, seed)
    return _classify_ssm(grid, h, params)


def _classify_ac(grid: CoarseGrid, h, params: GoodBadParams, seed: int) -> CoarseGrid:
    dom = grid.domain
    shape = _grid_shape(dom)
    lo, hi = r_range(params.R, params.r_mode)
    scales = list(range(lo, hi + 1))
    p = params.rho(dom.d)
    open_h = (np.abs(h) <= params.K).reshape(shape)
    counts = _cluster_tail_counts(open_h, p, scales, params.mc_replicas, seed)
    counts = counts.reshape(len(scales), -1)
    good = np.zeros(grid.sites.N, dtype=bool)
    margin = np.zeros(grid.sites.N)
    for i in range(grid.sites.N):
        W = dom.indices(grid.block(grid.sites.vertex(i)))
        worst = np.inf
        for k, r in enumerate(scales):
            ub = wilson_upper(counts[k, W], params.mc_replicas, params.z)
            worst = min(worst, float(np.min(np.exp(-r) - ub)))
        good[i] = worst >= 0
        margin[i] = worst
    return grid.with_labels(good, margin, variant="anticoncentration", rho=p, K=params.K,
                            replicas=params.mc_replicas, scales=(lo, hi), r_mode=params.r_mode, seed=seed)


def _classify_ssm(grid: CoarseGrid, h, params: GoodBadParams) -> CoarseGrid:
    dom = grid.domain
    if dom.d != 2:
        raise ConfigError("the SSM variant is supported for d=2 only")
    box_r = 1
    lo = math.ceil(math.log(params.R) ** 2)
    hi = min(2 * box_r, params.R // 4)
    if params.r_mode == "desk":
        lo = min(lo, hi)
    if hi < 1 or lo > hi:
        raise ConfigError(f"empty distance range [{lo}, {hi}] for the SSM variant at R={params.R}")
    hmap = {dom.vertex(i): float(h[i]) for i in range(dom.N)}

    def h_of(v):
        return hmap.get(v, 0.0)

    cache = {}

    def site_margin(w):
        if w not in cache:
            B = lattice.ball(w, box_r, dom)
            worst = np.inf
            for ell in range(lo, hi + 1):
                res = ssm_functional(h_of, params.beta, B, w, ell)
                worst = min(worst, np.exp(-ell / params.C_star) - res.value)
            cache[w] = worst
        return cache[w]

    good = np.zeros(grid.sites.N, dtype=bool)
    margin = np.zeros(grid.sites.N)
    for i in range(grid.sites.N):
        worst = min(site_margin(w) for w in grid.block(grid.sites.vertex(i)))
        good[i] = worst >= 0
        margin[i] = worst
    return grid.with_labels(good, margin, variant="ssm", C_star=params.C_star, box_radius=box_r,
                            scales=(lo, hi), r_mode=params.r_mode)


def label_grid(domain: Domain, R: int, good) -> CoarseGrid:
    """Coarse grid with labels supplied directly (planted patterns, tests)."""
    return lattice.coarse_lattice(domain, R).with_labels(np.asarray(good, dtype=bool), variant="given")


def bad_cluster_stats(grid: CoarseGrid) -> dict:
    clusters = lattice.r_star_clusters(grid, lattice.BAD)
    sizes = [len(c) for c in clusters]
    hist = {}
    for s in sizes:
        hist[s] = hist.get(s, 0) + 1
    return {"clusters": clusters, "sizes": sizes, "histogram": dict(sorted(hist.items())),
            "max": max(sizes) if sizes else 0}


# -- block construction -------------------------------------------------------

@dataclass
class Block:
    ids: np.ndarray
    kind: str  # "type1" | "type2"
    provenance: tuple

    @property
    def volume(self) -> int:
        return len(self.ids)


@dataclass
class BlockSet:
    domain: Domain
    R: int
    blocks: list
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.blocks)

    def to_csv(self) -> str:
        rows = ["block-id,type,provenance,volume"]
        for k, b in enumerate(self.blocks):
            prov = " ".join(str(x) for x in _flatten(b.provenance))
            rows.append(f"{k},{b.kind},{prov},{b.volume}")
        return "\n".join(rows) + "\n"


def _flatten(t):
    for x in t:
        if isinstance(x, (tuple, list)):
            yield from _flatten(x)
        else:
            yield x


def _linf_to_set(coords: np.ndarray, targets: np.ndarray) -> np.ndarray:
    if len(targets) == 0:
        return np.full(len(coords), np.inf)
    out = np.full(len(coords), np.inf)
    for lo in range(0, len(coords), 4096):
        c = coords[lo:lo + 4096]
        out[lo:lo + 4096] = np.abs(c[:, None, :] - targets[None, :, :]).max(axis=2).min(axis=1)
    return out


def build_blocks(grid: CoarseGrid) -> BlockSet:
    if not grid.labelled:
        raise ValueError("grid is unlabelled")
    dom = grid.domain
    R = grid.R
    r8 = R // 8
    good = np.array(grid.sites_with(lattice.GOOD), dtype=np.int64).reshape(-1, dom.d)
    blocks = []
    dist_good = _linf_to_set(dom.coords, good)
    for i in np.flatnonzero(dist_good <= 0.75 * R):
        w = dom.vertex(int(i))
        blocks.append(Block(dom.indices(lattice.ball(w, r8, dom)), "type1", ("w", w)))
    n = dom.box_radius
    ext = lattice.make_box(n + r8, dom.d)
    dist_good_ext = _linf_to_set(ext.coords, good)
    clusters = lattice.r_star_clusters(grid, lattice.BAD)
    for ci, C in enumerate(clusters):
        cc = np.array(sorted(C), dtype=np.int64)
        near = _linf_to_set(ext.coords, cc) <= R
        base = ext.coords[near & (dist_good_ext > 0.5 * R)]
        if len(base) == 0:
            continue
        for a in np.ndindex(*(2 * r8 + 1,) * dom.d):
            shift = np.array(a) - r8
            moved = base + shift
            inside = np.all(np.abs(moved) <= n, axis=1)
            if not inside.any():
                continue
            ids = np.sort(np.array([dom.index(c) for c in moved[inside]], dtype=np.int64))
            blocks.append(Block(ids, "type2", ("C", ci, tuple(int(x) for x in shift))))
    return BlockSet(dom, R, blocks, {"bad_clusters": len(clusters)})


class BlockCoverageError(RuntimeError):
    """A vertex is covered by no block."""


@dataclass
class GeometryReport:
    inside: np.ndarray
    on_boundary: np.ndarray
    ratio: np.ndarray
    max_ratio: float
    bound: float
    chi: int

    @property
    def ok(self) -> bool:
        return self.max_ratio <= self.bound

    def to_csv(self, domain: Domain) -> str:
        rows = ["coords,inside,boundary,ratio"]
        for i in range(domain.N):
            c = " ".join(str(x) for x in domain.vertex(i))
            rows.append(f"{c},{self.inside[i]},{self.on_boundary[i]},{self.ratio[i]:.17g}")
        return "\n".join(rows) + "\n"


def block_geometry_report(bs: BlockSet) -> GeometryReport:
    """Per-vertex |{i: w ∈ ∂B_i}| / |{i: w ∈ B_i}| and χ = max_w |{i: w ∈ B_i}|."""
    dom = bs.domain
    nbr = dom.neighbors
    inside = np.zeros(dom.N, dtype=np.int64)
    onb = np.zeros(dom.N, dtype=np.int64)
    for b in bs.blocks:
        mask = np.zeros(dom.N, dtype=bool)
        mask[b.ids] = True
        inside += mask
        nb = nbr[b.ids].ravel()
        nb = np.unique(nb[nb >= 0])
        onb[nb[~mask[nb]]] += 1
    if np.any(inside == 0):
        miss = [dom.vertex(i) for i in np.flatnonzero(inside == 0)[:5]]
        raise BlockCoverageError(f"vertices covered by no block, e.g. {miss}")
    ratio = onb / inside
    bound = 32 * dom.d * 2 ** dom.d / bs.R
    return GeometryReport(inside, onb, ratio, float(ratio.max()), float(bound), int(inside.max()))


def type2_separation(bs: BlockSet) -> float:
    """Least ℓ∞ distance between type-2 blocks of distinct clusters (inf if none)."""
    by_c = {}
    for b in bs.blocks:
        if b.kind == "type2":
            by_c.setdefault(b.provenance[1], []).append(b.ids)
    keys = sorted(by_c)
    coords = bs.domain.coords
    best = np.inf
    for i, a in enumerate(keys):
        A = coords[np.unique(np.concatenate(by_c[a]))]
        for bkey in keys[i + 1:]:
            Bc = coords[np.unique(np.concatenate(by_c[bkey]))]
            best = min(best, float(_linf_to_set(A, Bc).min()))
    return best


# -- block dynamics ---------------------------------------------------------------

def block_update(inst: RfimInstance, block_ids, sigma, rng: np.random.Generator, n_max: int = exact.N_MAX,
                 burn_in: Optional[float] = None) -> np.ndarray:
    """Resample σ on the block from its conditional law given the rest."""
    from .glauber import simulate

    ids = np.asarray(block_ids, dtype=np.int64)
    sigma = np.asarray(sigma, dtype=np.int64)
    dom = inst.domain
    inblock = np.zeros(dom.N, dtype=bool)
    inblock[ids] = True
    B = [dom.vertex(i) for i in ids]
    dB = lattice.boundary(set(B), dom)
    tau = {w: int(sigma[dom.index(w)]) for w in dB}
    sub = pin(inst, B, tau)
    out = sigma.copy()
    sub_ids = np.array([sub.domain.index(v) for v in B])
    if sub.N <= n_max:
        g = exact.enumerate_gibbs(sub, n_max)
        code = int(g.sample(rng, 1)[0])
        cfg = exact.config_of(code, sub.N)
    else:
        if burn_in is None:
            raise ConfigError("block exceeds the exact cap; a Glauber burn-in length is required")
        start = np.array([sigma[dom.index(v)] for v in sub.domain])
        cfg = simulate(sub, start, burn_in, 1, int(rng.integers(2 ** 62)), "block")[0][0]
    out[ids] = cfg[sub_ids]
    return out


def block_kernel(g: exact.ExactGibbs, block_ids) -> np.ndarray:
    """Dense kernel of exact conditional resampling on a block."""
    N = g.N
    bmask = 0
    for i in block_ids:
        bmask |= 1 << int(i)
    codes = np.arange(1 << N, dtype=np.int64)
    key = codes & ~bmask
    p = g.probs
    Z = np.bincount(key, weights=p, minlength=1 << N)
    same = key[:, None] == key[None, :]
    return np.where(same, p[None, :] / Z[key][:, None], 0.0)


def _sym_gap(g: exact.ExactGibbs, L: np.ndarray) -> float:
    sq = np.sqrt(g.probs)
    S = L * sq[:, None] / sq[None, :]
    S = 0.5 * (S + S.T)
    w = linalg.eigh(-S, eigvals_only=True)
    return float(w[1])


def block_dynamics_gap(g: exact.ExactGibbs, blocks) -> float:
    """Gap of the generator Σ_i (K_i − I) (rate 1 per block)."""
    M = 1 << g.N
    L = np.zeros((M, M))
    for b in blocks:
        L += block_kernel(g, b) - np.eye(M)
    return _sym_gap(g, L)


def discrete_block_kernel(g: exact.ExactGibbs, blocks) -> np.ndarray:
    """Uniform-block discrete chain; its gap is the continuous gap over the block count."""
    return sum(block_kernel(g, b) for b in blocks) / len(blocks)


def worst_block_gap(inst: RfimInstance, block_ids) -> float:
    """inf over boundary spins of the Glauber gap of the pinned block."""
    dom = inst.domain
    B = [dom.vertex(int(i)) for i in block_ids]
    dB = sorted(lattice.boundary(set(B), dom))
    best = np.inf
    for code in range(1 << len(dB)):
        tau = {w: (1 if (code >> k) & 1 else -1) for k, w in enumerate(dB)}
        sub = pin(inst, B, tau)
        best = min(best, exact.spectral_gap(exact.enumerate_gibbs(sub)).gap)
    return float(best)


@dataclass
class BlockGapReport:
    gap_G: float
    gap_B: float
    min_block_gap: float
    chi: int
    rhs: float
    tol: float

    @property
    def ok(self) -> bool:
        return self.gap_G >= self.rhs - self.tol


def block_dynamics_gap_check(inst: RfimInstance, blocks, tol: float = 1e-9) -> BlockGapReport:
    """gap_G ≥ χ^{-1} gap_B min_i inf_φ gap_{B_i} on a dense-spectrum instance."""
    if inst.N > 10:
        raise exact.TooLargeError("dense block check needs N <= 10")
    blocks = [np.asarray(b, dtype=np.int64) for b in blocks]
    cover = np.zeros(inst.N, dtype=np.int64)
    for b in blocks:
        cover[b] += 1
    if np.any(cover == 0):
        raise BlockCoverageError("blocks do not cover the domain")
    g = exact.enumerate_gibbs(inst)
    gap_G = exact.spectral_gap(g).gap
    gap_B = block_dynamics_gap(g, blocks)
    mg = min(worst_block_gap(inst, b) for b in blocks)
    chi = int(cover.max())
    return BlockGapReport(gap_G, gap_B, mg, chi, gap_B * mg / chi, tol)


def stationarity_drift(g: exact.ExactGibbs, blocks) -> float:
    """TV between μ and μK for the uniform-block kernel (and each block kernel)."""
    worst = 0.0
    p = g.probs
    for b in blocks:
        worst = max(worst, 0.5 * float(np.abs(p @ block_kernel(g, b) - p).sum()))
    worst = max(worst, 0.5 * float(np.abs(p @ discrete_block_kernel(g, blocks) - p).sum()))
    return worst


# -- Hamming coupling probe ------------------------------------------------------

@dataclass
class HammingReport:
    mean: float
    stderr: float
    replicas: int
    order_breaches: int
    marginal_tv_sum: float
    descriptive_bound: float


def hamming_coupling_probe(inst: RfimInstance, block_ids, y, xi: dict, replicas: int, seed: int = 0,
                           R: Optional[int] = None) -> HammingReport:
    """Monotone coupling of μ_B^ξ and μ_B^{ξ^y}; E[d_H] with its exact lower bound.

    ``xi`` assigns spins to ∂B (within the domain); y must be one of those sites.
    """
    dom = inst.domain
    B = [dom.vertex(int(i)) for i in block_ids]
    dB = lattice.boundary(set(B), dom)
    y = tuple(int(v) for v in y)
    if y not in dB:
        raise ValueError(f"{y} is not on the block boundary")
    lo_tau = {w: int(xi[w]) for w in dB}
    hi_tau = dict(lo_tau)
    lo_tau[y], hi_tau[y] = -1, +1
    lo, hi = pin(inst, B, lo_tau), pin(inst, B, hi_tau)
    a, b = monotone_sample_pair(lo, hi, replicas, seed)
    diff = a ^ b
    dh = np.array([bin(int(x)).count("1") for x in diff])
    sa = exact.spin_table(lo.N)
    breaches = int(np.sum(np.any(sa[a] > sa[b], axis=1)))
    ga, gb = exact.enumerate_gibbs(lo), exact.enumerate_gibbs(hi)
    tv_sum = sum(abs(ga.plus_prob(i) - gb.plus_prob(i)) for i in range(lo.N))
    m, se = mean_se(dh)
    Rv = R if R is not None else 8
    desc = math.log(Rv) ** 2 + len(B) * math.exp(-Rv / 8)
    return HammingReport(m, se, replicas, breaches, float(tv_sum), desc)
