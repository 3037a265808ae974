"""Continuous-time heat-bath Glauber dynamics and its couplings.

A single chain is realised by superposition: holding times Exp(N), a uniform
site, and a uniform u; the site becomes +1 iff u < P(σ_v = +1 | rest).
Coupled chains share every (time, site, u) triple.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels as K
from . import exact, parallel
from ._rng import kernel_seeds, stream
from .lattice import ball
from .rfim import RfimInstance, conditional_plus_prob
from .stats import wilson_interval


def heatbath_table(inst: RfimInstance) -> np.ndarray:
    return K.plus_table(inst.h_eff, inst.beta, inst.domain.d)


def _nbr(inst: RfimInstance) -> np.ndarray:
    return np.ascontiguousarray(inst.domain.neighbors, dtype=np.int64)


@dataclass
class ChainState:
    inst: RfimInstance
    sigma: np.ndarray
    rng: np.random.Generator
    t: float = 0.0
    events: int = 0
    log: Optional[list] = None

    @classmethod
    def start(cls, inst, sigma, seed: int, replica: int = 0, record: bool = False):
        s = np.array(sigma, dtype=np.int64)
        return cls(inst, s, stream(seed, "chain", replica), log=[] if record else None)


def step(chain: ChainState) -> ChainState:
    """Advance one event in place and return the chain."""
    N = chain.inst.N
    chain.t += chain.rng.exponential(1.0 / N)
    v = int(chain.rng.integers(N))
    u = chain.rng.random()
    p = conditional_plus_prob(chain.inst, chain.sigma, v)
    chain.sigma[v] = 1 if u < p else -1
    if chain.log is not None:
        chain.log.append((chain.events, chain.t, v, int(chain.sigma[v])))
    chain.events += 1
    return chain


def run(chain: ChainState, t_end: float) -> ChainState:
    """Run events while their times stay ≤ t_end (the overshooting draw is discarded).

    The chain's clock is set to t_end afterwards; by memorylessness the law is
    unaffected.
    """
    N = chain.inst.N
    while True:
        dt = chain.rng.exponential(1.0 / N)
        if chain.t + dt > t_end:
            chain.t = t_end
            return chain
        chain.t += dt
        v = int(chain.rng.integers(N))
        u = chain.rng.random()
        chain.sigma[v] = 1 if u < conditional_plus_prob(chain.inst, chain.sigma, v) else -1
        if chain.log is not None:
            chain.log.append((chain.events, chain.t, v, int(chain.sigma[v])))
        chain.events += 1


def trajectory_csv(chain: ChainState) -> str:
    rows = ["event-index,time,site-id,new-spin"]
    rows += [f"{i},{t:.17g},{v},{s}" for i, t, v, s in (chain.log or [])]
    return "\n".join(rows) + "\n"


def simulate(inst: RfimInstance, init, t_end: float, replicas: int, seed: int, tag="sim", n_workers=None):
    """Final states (replicas, N) and event counts of independent chains."""
    nbr, ptab = _nbr(inst), heatbath_table(inst)
    init = np.asarray(init, dtype=np.int64)
    if init.ndim == 1:
        init = np.broadcast_to(init, (replicas, inst.N))

    def work(lo, hi):
        return K.chain_batch(nbr, ptab, np.ascontiguousarray(init[lo:hi]), float(t_end), kernel_seeds(seed, tag, lo, hi))

    parts = parallel.map_ranges(work, replicas, n_workers)
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


# -- couplings ----------------------------------------------------------------

def _same_model(a: RfimInstance, b: RfimInstance):
    if a.domain != b.domain or a.beta != b.beta or not np.array_equal(a.h, b.h):
        raise ValueError("coupled chains need the same domain, β and field")


@dataclass
class CouplingState:
    """Two chains driven by one event stream; boundaries may differ."""

    first: RfimInstance
    second: RfimInstance
    s1: np.ndarray
    s2: np.ndarray
    rng: np.random.Generator
    mode: str = "grand"
    t: float = 0.0
    active: Optional[np.ndarray] = None

    def __post_init__(self):
        _same_model(self.first, self.second)
        if self.mode not in ("grand", "monotone"):
            raise ValueError(f"unknown coupling mode {self.mode!r}")
        self.s1 = np.array(self.s1, dtype=np.int64)
        self.s2 = np.array(self.s2, dtype=np.int64)
        if self.mode == "monotone":
            if np.any(self.s1 > self.s2) or not boundary_leq(self.first, self.second):
                raise ValueError("monotone mode needs ordered starts and boundaries")

    def disagreement(self) -> np.ndarray:
        return np.flatnonzero(self.s1 != self.s2)


def boundary_leq(a: RfimInstance, b: RfimInstance) -> bool:
    keys = set(a.boundary) | set(b.boundary)
    if set(a.boundary) != set(b.boundary):
        return False
    return all(a.boundary[k] <= b.boundary[k] for k in keys)


def run_coupled(c: CouplingState, t_end: float) -> CouplingState:
    N = c.first.N
    while True:
        dt = c.rng.exponential(1.0 / N)
        if c.t + dt > t_end:
            c.t = t_end
            return c
        c.t += dt
        v = int(c.rng.integers(N))
        u = c.rng.random()
        if c.active is not None and not c.active[v]:
            continue
        c.s1[v] = 1 if u < conditional_plus_prob(c.first, c.s1, v) else -1
        c.s2[v] = 1 if u < conditional_plus_prob(c.second, c.s2, v) else -1


def coupled_disagreement(first: RfimInstance, second: RfimInstance, init1, init2, t_end: float,
                         replicas: int, seed: int, tag="coupled", active=None, n_workers=None):
    """Per-site disagreement counts at t_end and the number of coalesced replicas."""
    _same_model(first, second)
    nbr = _nbr(first)
    p1, p2 = heatbath_table(first), heatbath_table(second)
    i1 = np.asarray(init1, dtype=np.int64)
    i2 = np.asarray(init2, dtype=np.int64)
    act = np.ones(first.N, dtype=np.int64) if active is None else np.asarray(active, dtype=np.int64)

    def work(lo, hi):
        return K.coupled_batch(nbr, p1, p2, i1, i2, act, float(t_end), kernel_seeds(seed, tag, lo, hi))

    parts = parallel.map_ranges(work, replicas, n_workers)
    counts = sum(p[0] for p in parts)
    return counts, int(sum(p[1] for p in parts))


@dataclass
class CoalescenceReport:
    t: float
    replicas: int
    counts: np.ndarray
    p: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    bound: float
    bound_upper: float
    variant: str = "full"
    meta: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        rows = ["site-id,disagree-count,replicas"]
        rows += [f"{i},{int(c)},{self.replicas}" for i, c in enumerate(self.counts)]
        return "\n".join(rows) + "\n"


def coalescence_tv_bound(inst: RfimInstance, t: float, replicas: int, seed: int,
                         ball_radius: Optional[int] = None, n_workers=None) -> CoalescenceReport:
    """Σ_v P(Y⁺_v ≠ Y⁻_v) under the grand coupling from all-plus and all-minus.

    By monotonicity this bounds the worst-start total variation at time t.
    With ``ball_radius`` the chains for site v only update inside B_r(v).
    """
    N = inst.N
    plus = np.ones(N, dtype=np.int64)
    minus = -plus
    if ball_radius is None:
        counts, _ = coupled_disagreement(inst, inst, minus, plus, t, replicas, seed, "coalesce", n_workers=n_workers)
        variant = "full"
    else:
        counts = np.zeros(N, dtype=np.int64)
        for v in range(N):
            B = ball(inst.domain.vertex(v), ball_radius, inst.domain)
            act = np.zeros(N, dtype=np.int64)
            act[inst.domain.indices(B)] = 1
            c, _ = coupled_disagreement(inst, inst, minus, plus, t, replicas, seed, ("ball", v),
                                        active=act, n_workers=n_workers)
            counts[v] = c[v]
        variant = f"ball({ball_radius})"
    p = counts / replicas
    lo, hi = wilson_interval(counts, replicas)
    return CoalescenceReport(t, replicas, counts, p, lo, hi, float(p.sum()), float(hi.sum()), variant)


def order_watch(first: RfimInstance, second: RfimInstance, n_events: int, sequences: int, seed: int):
    """Run coupled event sequences from random ordered starts and count breaches.

    Coalescence must persist only when both chains share one law; for
    distinct boundaries merged chains may split again, so that count is
    reported as None.
    """
    _same_model(first, second)
    if not boundary_leq(first, second):
        raise ValueError("boundaries must be ordered")
    t1, t2 = heatbath_table(first), heatbath_table(second)
    ob, cb, tot, ce = K.coupled_watch(_nbr(first), t1, t2, int(n_events), kernel_seeds(seed, "watch", 0, sequences))
    same = bool(np.array_equal(t1, t2))
    return {"order_breaches": int(ob), "coalescence_breaches": int(cb) if same else None, "events": int(tot),
            "coalesced_events": int(ce)}


# -- sequential monotone sampling ----------------------------------------------

def prefix_tables(g: exact.ExactGibbs) -> list:
    """tables[i][c] = P(σ_i = +1 | σ_0..σ_{i-1} encoded by c)."""
    p = g.probs
    N = g.N
    out = []
    for i in range(N):
        m_i = p.reshape(1 << (N - i), 1 << i).sum(axis=0)
        m_next = p.reshape(1 << (N - i - 1), 1 << (i + 1)).sum(axis=0)
        out.append(m_next[1 << i:] / m_i)
    return out


def sequential_sample(tables: list, uniforms: np.ndarray) -> np.ndarray:
    """Codes sampled site by site from prefix tables with given uniforms (S, N)."""
    S, N = uniforms.shape
    code = np.zeros(S, dtype=np.int64)
    for i in range(N):
        plus = uniforms[:, i] < tables[i][code]
        code |= plus.astype(np.int64) << i
    return code


def monotone_sample_pair(lo_inst: RfimInstance, hi_inst: RfimInstance, size: int, seed: int):
    """Pairs (σ^τ, σ^τ') with shared uniforms; σ^τ ≤ σ^τ' when τ ≤ τ'.

    Returns two arrays of configuration codes.
    """
    _same_model(lo_inst, hi_inst)
    if not boundary_leq(lo_inst, hi_inst):
        raise ValueError("boundaries are not ordered")
    ta = prefix_tables(exact.enumerate_gibbs(lo_inst))
    tb = prefix_tables(exact.enumerate_gibbs(hi_inst))
    u = stream(seed, "monotone-pair").random((size, lo_inst.N))
    return sequential_sample(ta, u), sequential_sample(tb, u)


def empirical_law(codes: np.ndarray, N: int) -> np.ndarray:
    return np.bincount(codes, minlength=1 << N) / len(codes)


def states_to_codes(states: np.ndarray) -> np.ndarray:
    bits = (np.asarray(states) > 0).astype(np.int64)
    return (bits << np.arange(bits.shape[1], dtype=np.int64)).sum(axis=1)
