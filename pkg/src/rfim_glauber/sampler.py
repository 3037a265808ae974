"""Incremental-domain sampler, warm-start diagnostics and planted slow regions.

The sampler grows Λ_n along the nucleation order.  Stage i starts from the
stage i−1 output joined with an independent draw of the new spin from its
single-site law, then runs k* = N^{C*} discrete heat-bath steps of the
free-boundary measure on the first i vertices.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import _kernels as K
from . import exact, lattice, parallel
from ._rng import kernel_seeds, stream
from .glauber import heatbath_table
from .lattice import Domain
from .rfim import ConfigError, FieldSpec, RfimInstance, sample_field
from .stats import batch_means_tau, mean_se


@dataclass(frozen=True)
class SamplerConfig:
    C_star: float = 4.0
    k_override: Optional[int] = None
    seed: int = 0
    validate: bool = False

    def __post_init__(self):
        if not self.C_star > 0:
            raise ConfigError("C* must be positive")
        if self.k_override is not None and self.k_override < 0:
            raise ConfigError("step override must be non-negative")

    def k_star(self, N: int) -> int:
        if self.k_override is not None:
            return int(self.k_override)
        return int(round(N ** self.C_star))


def _order_ids(box: Domain) -> np.ndarray:
    return box.indices(lattice.growth_order(box))


def incremental_sample(box: Domain, beta: float, h, cfg: SamplerConfig, runs: int = 1, n_workers=None) -> np.ndarray:
    """Configuration codes of ``runs`` independent outputs (bit i = spin of vertex id i)."""
    if box.N > 62:
        raise ConfigError("codes are 64-bit; use sample_states for larger boxes")
    inst = RfimInstance(box, beta, h)
    nbr = np.ascontiguousarray(box.neighbors, dtype=np.int64)
    ptab = heatbath_table(inst)
    order = _order_ids(box)
    ks = np.full(box.N, cfg.k_star(box.N), dtype=np.int64)
    ks[0] = 0

    def work(lo, hi):
        return K.incremental_batch(nbr, ptab, order, ks, kernel_seeds(cfg.seed, "incremental", lo, hi))

    return np.concatenate(parallel.map_ranges(work, runs, n_workers))


def write_sample_snapshot(path, box: Domain, sigma) -> None:
    lines = [f"{box.d} {box.N}"]
    for i in range(box.N):
        lines.append(" ".join(str(x) for x in box.vertex(i)) + f" {int(sigma[i])}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


# -- warm starts -------------------------------------------------------------------

def prefix_instance(box: Domain, i: int, beta: float, h) -> RfimInstance:
    """Free-boundary measure on the first i vertices of the nucleation order."""
    order = lattice.growth_order(box)[:i]
    sub = box.subdomain(order)
    hv = np.array([h[box.index(v)] for v in sub])
    return RfimInstance(sub, beta, hv)


def warm_start_law(box: Domain, i: int, beta: float, h):
    """(μ_{Λ^(i)}, law of μ_{Λ^(i−1)} ⊗ μ_{v_i}) as a probability table over stage-i codes."""
    if i < 2:
        raise ValueError("warm starts begin at stage 2")
    order = lattice.growth_order(box)
    cur = prefix_instance(box, i, beta, h)
    prev = prefix_instance(box, i - 1, beta, h)
    j = cur.domain.index(order[i - 1])
    c = np.arange(1 << cur.N, dtype=np.int64)
    c_prev = (c & ((1 << j) - 1)) | ((c >> (j + 1)) << j)
    hv = float(cur.h[j])
    s = np.where((c >> j) & 1, 1.0, -1.0)
    log_single = hv * s - np.logaddexp(hv, -hv)
    g_prev = exact.enumerate_gibbs(prev)
    return cur, np.exp(g_prev.logp[c_prev] + log_single)


def warm_start_ratio(box: Domain, i: int, beta: float, h) -> float:
    """max_σ (μ_{Λ^(i−1)} ⊗ μ_{v_i})(σ) / μ_{Λ^(i)}(σ)."""
    cur, pi0 = warm_start_law(box, i, beta, h)
    g = exact.enumerate_gibbs(cur)
    return float(np.exp(np.max(np.log(pi0) - g.logp)))


def edge_ratio_closed_form(beta: float, h_o: float, h_v: float) -> float:
    z2 = 2 * math.exp(beta) * math.cosh(h_o + h_v) + 2 * math.exp(-beta) * math.cosh(h_o - h_v)
    return math.exp(beta) * z2 / (4 * math.cosh(h_o) * math.cosh(h_v))


@dataclass
class TvCurve:
    ks: np.ndarray
    tv: np.ndarray
    monotone: bool
    envelope: Optional[np.ndarray] = None
    A_fit: Optional[float] = None
    params: dict = field(default_factory=dict)


def discrete_kernel(g: exact.ExactGibbs) -> np.ndarray:
    """One uniform-site heat-bath step: P = I + L/N."""
    return np.eye(1 << g.N) + exact.generator(g) / g.N


def tv_decay_from_warm_start(inst: RfimInstance, pi0, ks: Sequence[int], A: float = 1.0, p: int = 1,
                             M: Optional[float] = None) -> TvCurve:
    """Exact d_TV(π_0 P^k, μ) on a k grid, with the descriptive M (A^{2p} log k / k)^{1/(2p−1)} envelope."""
    g = exact.enumerate_gibbs(inst)
    P = discrete_kernel(g)
    pi = np.asarray(pi0, dtype=float)
    ks = np.asarray(sorted(int(k) for k in ks))
    out = np.empty(len(ks))
    cur, k_now = pi.copy(), 0
    for j, k in enumerate(ks):
        while k_now < k:
            cur = cur @ P
            k_now += 1
        out[j] = 0.5 * np.abs(cur - g.probs).sum()
    mono = bool(np.all(np.diff(out) <= 1e-13))
    if M is None:
        M = float(np.max(pi / g.probs))
    big = ks >= 2
    env = np.full(len(ks), np.nan)
    env[big] = M * (A ** (2 * p) * np.log(ks[big]) / ks[big]) ** (1.0 / (2 * p - 1))
    a_fit = None
    if big.any():
        need = (out[big] / M) ** (2 * p - 1) * ks[big] / np.log(ks[big])
        a_fit = float(np.max(need) ** (1.0 / (2 * p)))
    return TvCurve(ks, out, mono, env, a_fit, {"A": A, "p": p, "M": M})


# -- planted regions --------------------------------------------------------------

PATTERNS = ("quadrant", "strip")


@dataclass(frozen=True)
class PlantSpec:
    m: int
    corner: tuple
    pattern: str = "quadrant"
    strong: Optional[float] = None
    weak: Optional[float] = None
    eps: float = 0.25
    seed: int = 0

    def __post_init__(self):
        if self.m < 1:
            raise ConfigError("m must be >= 1")
        if self.pattern not in PATTERNS:
            raise ConfigError(f"unknown pattern {self.pattern!r}")

    def magnitudes(self, d: int) -> tuple:
        strong = float(self.m ** d) if self.strong is None else float(self.strong)
        weak = 1.0 / self.m ** d if self.weak is None else float(self.weak)
        if strong < self.m ** d or weak > 1.0 / self.m ** d:
            raise ConfigError("planted magnitudes violate strong >= m^d, weak <= 1/m^d")
        return strong, weak

    def box(self, d: int) -> list:
        c = tuple(int(x) for x in self.corner)
        if len(c) != d:
            raise ConfigError("corner has the wrong dimension")
        return [tuple(ci + a for ci, a in zip(c, off)) for off in np.ndindex(*(self.m + 1,) * d)]


def boundary_signs(spec: PlantSpec, d: int) -> dict:
    """ζ_m on the exterior boundary of the planted box."""
    B = spec.box(d)
    dB = sorted(lattice.exterior_boundary(B))
    lo = np.array(spec.corner)
    hi = lo + spec.m
    out = {}
    for z in dB:
        x = np.array(z)
        if spec.pattern == "quadrant":
            if d != 2:
                raise ConfigError("the quadrant pattern is two-dimensional")
            vertical = x[1] < lo[1] or x[1] > hi[1]
            out[z] = 1 if vertical else -1
        else:
            rel = x[d - 1] - lo[d - 1]
            out[z] = 1 if spec.m / 2 <= rel <= spec.m / 2 + spec.eps * spec.m else -1
    return out


def plant_griffiths_field(box: Domain, spec: PlantSpec, base) -> np.ndarray:
    """Base field outside the planted box; strong signed field on its boundary, weak inside."""
    d = box.d
    strong, weak = spec.magnitudes(d)
    B = spec.box(d)
    signs = boundary_signs(spec, d)
    for v in list(B) + list(signs):
        if v not in box:
            raise ConfigError("planted box and its boundary must fit inside the domain")
    h = np.array(base, dtype=float)
    g = stream(spec.seed, "plant")
    for v in B:
        h[box.index(v)] = g.uniform(-weak, weak)
    for z, s in signs.items():
        h[box.index(z)] = s * strong
    return h


# -- relaxation probes ----------------------------------------------------------

@dataclass
class RelaxationSummary:
    taus: np.ndarray
    mean: float
    stderr: float
    params: dict = field(default_factory=dict)


def relaxation_taus(inst: RfimInstance, region_ids, dt: float, t_burn: float, n_samples: int, replicas: int,
                    seed: int, tag="relax", n_batches: int = 20, init=None, n_workers=None) -> np.ndarray:
    nbr = np.ascontiguousarray(inst.domain.neighbors, dtype=np.int64)
    ptab = heatbath_table(inst)
    region = np.asarray(region_ids, dtype=np.int64)
    start = np.ones(inst.N, dtype=np.int64) if init is None else np.asarray(init, dtype=np.int64)

    def work(lo, hi):
        seeds = kernel_seeds(seed, tag, lo, hi)
        return [batch_means_tau(K.relaxation_series(nbr, ptab, start, t_burn, dt, n_samples, region, int(s)), dt, n_batches)
                for s in seeds]

    return np.array([x for part in parallel.map_ranges(work, replicas, n_workers) for x in part])


def relaxation_probe(inst: RfimInstance, region_ids, dt: float = 0.1, t_burn: float = 50.0, n_samples: int = 20000,
                     replicas: int = 20, seed: int = 0, n_batches: int = 20, n_workers=None) -> RelaxationSummary:
    """Integrated autocorrelation time of the region magnetisation (batch means)."""
    taus = relaxation_taus(inst, region_ids, dt, t_burn, n_samples, replicas, seed, n_batches=n_batches,
                           n_workers=n_workers)
    m, se = mean_se(taus)
    return RelaxationSummary(taus, m, se, {"dt": dt, "t_burn": t_burn, "n_samples": n_samples,
                                           "n_batches": n_batches, "estimator": "batch-means"})


@dataclass
class GriffithsResult:
    tau_typical: np.ndarray
    tau_planted: np.ndarray
    ratio: float
    ratio_se: float
    threshold: float

    @property
    def lower(self) -> float:
        return self.ratio - 3.0 * self.ratio_se

    @property
    def ok(self) -> bool:
        return self.lower >= self.threshold


def griffiths_experiment(n: int = 8, m: int = 3, beta: float = 1.0, base: FieldSpec = FieldSpec("gaussian", 25.0),
                         pairs: int = 200, dt: float = 2.5, t_burn: float = 200.0, n_samples: int = 8000,
                         seed: int = 0, threshold: float = 5.0, n_batches: int = 20, n_workers=None) -> GriffithsResult:
    """Paired typical/planted relaxation times of the planted-box magnetisation in Λ_n (d = 2)."""
    box = lattice.make_box(n, 2)
    corner = (-(m // 2), -(m // 2))
    region = box.indices(PlantSpec(m, corner).box(2))

    def work(lo, hi):
        out = []
        for r in range(lo, hi):
            fs = int(stream(seed, "griffiths-field", r).integers(2 ** 62))
            h = sample_field(base.with_seed(fs), box)
            hp = plant_griffiths_field(box, PlantSpec(m, corner, seed=fs), h)
            pair = []
            for tag, field_ in (("typ", h), ("plant", hp)):
                inst = RfimInstance(box, beta, field_)
                pair.append(relaxation_taus(inst, region, dt, t_burn, n_samples, 1, seed, (tag, r),
                                            n_batches=n_batches, n_workers=1)[0])
            out.append(pair)
        return out

    res = np.array([x for part in parallel.map_ranges(work, pairs, n_workers) for x in part])
    typ, pl = res[:, 0], res[:, 1]
    mt, st = mean_se(typ)
    mp, sp = mean_se(pl)
    cov = np.cov(typ, pl, ddof=1)[0, 1] / len(typ)
    ratio = mp / mt
    var = ratio ** 2 * (sp ** 2 / mp ** 2 + st ** 2 / mt ** 2 - 2 * cov / (mp * mt))
    return GriffithsResult(typ, pl, float(ratio), float(np.sqrt(max(var, 0.0))), threshold)
