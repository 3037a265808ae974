"""Exact small-system oracle.

Configuration code convention: bit i of the code is the spin of vertex id i,
with +1 <-> bit 1.  Probabilities are built from log-weights and normalised by
log-sum-exp.

Besides full enumeration this module offers a frontier (sweep) elimination
for single-site marginals and log-partition functions of domains whose
lexicographic frontier stays narrow, e.g. 7x7 boxes.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import linalg, optimize
from scipy.special import logsumexp

from .rfim import RfimInstance

N_MAX = 20
N_SPEC = 14
W_MAX = 22


class TooLargeError(ValueError):
    """System exceeds the exact-computation cap."""


def spin_table(N: int) -> np.ndarray:
    """(2^N, N) int8 array of ±1 spins, row c = configuration code c."""
    codes = np.arange(1 << N, dtype=np.int64)[:, None]
    bits = (codes >> np.arange(N, dtype=np.int64)) & 1
    return (2 * bits - 1).astype(np.int8)


def code_of(sigma) -> int:
    s = np.asarray(sigma)
    return int(np.sum((s > 0).astype(np.int64) << np.arange(len(s), dtype=np.int64)))


def config_of(code: int, N: int) -> np.ndarray:
    return np.array([1 if (code >> i) & 1 else -1 for i in range(N)], dtype=np.int64)


def log_weights(inst: RfimInstance, S: Optional[np.ndarray] = None) -> np.ndarray:
    """−H(σ_c) for every code c."""
    if S is None:
        S = spin_table(inst.N)
    Sf = S.astype(np.float64)
    lw = Sf @ inst.h_eff
    e = inst.domain.edges()
    if len(e) and inst.beta != 0.0:
        inter = np.zeros(len(S), dtype=np.int64)
        for u, v in e:
            inter += S[:, u] * S[:, v]
        lw += inst.beta * inter
    return lw


@dataclass
class ExactGibbs:
    inst: RfimInstance
    logp: np.ndarray
    logZ: float

    @property
    def N(self) -> int:
        return self.inst.N

    @property
    def probs(self) -> np.ndarray:
        return np.exp(self.logp)

    def spins(self) -> np.ndarray:
        return spin_table(self.N)

    def plus_prob(self, i: int) -> float:
        p = self.probs
        mask = ((np.arange(len(p)) >> i) & 1).astype(bool)
        return float(p[mask].sum())

    def magnetization(self) -> np.ndarray:
        return self.probs @ self.spins().astype(float)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Configuration codes drawn from the table."""
        return rng.choice(len(self.logp), size=size, p=self.probs / self.probs.sum())

    def to_csv(self) -> str:
        rows = ["config-code,log-prob"]
        rows += [f"{c},{lp:.17g}" for c, lp in enumerate(self.logp)]
        return "\n".join(rows) + "\n"


def enumerate_gibbs(inst: RfimInstance, n_max: int = N_MAX) -> ExactGibbs:
    if inst.N > n_max:
        raise TooLargeError(f"N={inst.N} exceeds the exact cap {n_max}")
    lw = log_weights(inst)
    logZ = float(logsumexp(lw))
    return ExactGibbs(inst, lw - logZ, logZ)


def tv_site_marginal(g1: ExactGibbs, g2: ExactGibbs, v) -> float:
    v = tuple(int(x) for x in v)
    i1 = g1.inst.domain.index(v, missing=-1)
    i2 = g2.inst.domain.index(v, missing=-1)
    if i1 < 0 or i2 < 0:
        raise ValueError(f"vertex {v} not in both domains")
    return abs(g1.plus_prob(i1) - g2.plus_prob(i2))


def tv_full(g1: ExactGibbs, g2: ExactGibbs) -> float:
    if g1.N != g2.N:
        raise ValueError("tables have different sizes")
    return 0.5 * float(np.abs(g1.probs - g2.probs).sum())


def mean(g: ExactGibbs, phi) -> float:
    return float(np.dot(g.probs, np.asarray(phi, dtype=float)))


def variance(g: ExactGibbs, phi) -> float:
    phi = np.asarray(phi, dtype=float)
    p = g.probs
    m = np.dot(p, phi)
    return float(np.dot(p, (phi - m) ** 2))


def covariance(g: ExactGibbs) -> np.ndarray:
    S = g.spins().astype(float)
    p = g.probs
    m = p @ S
    return (S * p[:, None]).T @ S - np.outer(m, m)


def _flip_pairs(N: int, i: int) -> tuple:
    c = np.arange(1 << N, dtype=np.int64)
    lo = c[((c >> i) & 1) == 0]
    return lo, lo | (1 << i)


def dirichlet_form(g: ExactGibbs, phi) -> float:
    """Σ over unordered single-flip pairs of μμ'/(μ+μ') (φ−φ')²."""
    phi = np.asarray(phi, dtype=float)
    p = g.probs
    total = 0.0
    for i in range(g.N):
        a, b = _flip_pairs(g.N, i)
        w = p[a] * p[b] / (p[a] + p[b])
        total += float(np.sum(w * (phi[a] - phi[b]) ** 2))
    return total


# -- generator and spectrum ---------------------------------------------------

RATES = ("heat-bath", "metropolis")


def _pair_rates(pa, pb, rates):
    """Rates a->b and b->a for a single-flip pair."""
    if rates == "heat-bath":
        return pb / (pa + pb), pa / (pa + pb)
    if rates == "metropolis":
        return np.minimum(1.0, pb / pa), np.minimum(1.0, pa / pb)
    raise ValueError(f"unknown rates {rates!r}")


def generator(g: ExactGibbs, rates: str = "heat-bath", n_spec: int = N_SPEC) -> np.ndarray:
    """Dense generator L (rows sum to zero) of single-site dynamics."""
    if g.N > n_spec:
        raise TooLargeError(f"N={g.N} exceeds the spectral cap {n_spec}")
    M = 1 << g.N
    L = np.zeros((M, M))
    p = g.probs
    for i in range(g.N):
        a, b = _flip_pairs(g.N, i)
        rab, rba = _pair_rates(p[a], p[b], rates)
        L[a, b] = rab
        L[b, a] = rba
    L[np.diag_indices(M)] = -L.sum(axis=1)
    return L


def symmetrized_generator(g: ExactGibbs, rates: str = "heat-bath", n_spec: int = N_SPEC) -> np.ndarray:
    """D^{1/2} L D^{-1/2}, built directly from pair weights."""
    if g.N > n_spec:
        raise TooLargeError(f"N={g.N} exceeds the spectral cap {n_spec}")
    M = 1 << g.N
    S = np.zeros((M, M))
    diag = np.zeros(M)
    p = g.probs
    for i in range(g.N):
        a, b = _flip_pairs(g.N, i)
        rab, rba = _pair_rates(p[a], p[b], rates)
        # reversible rates: sqrt(μ_a/μ_b) L(a,b) = sqrt(L(a,b) L(b,a))
        S[a, b] = S[b, a] = np.sqrt(rab * rba)
        diag[a] -= rab
        diag[b] -= rba
    S[np.diag_indices(M)] = diag
    return S


def generator_dirichlet(g: ExactGibbs, phi, L: np.ndarray) -> float:
    """−<φ, Lφ>_μ for an arbitrary generator L."""
    phi = np.asarray(phi, dtype=float)
    return float(-np.dot(g.probs * phi, L @ phi))


def detailed_balance_residual(g: ExactGibbs, L: Optional[np.ndarray] = None) -> float:
    """max |μ(σ)L(σ,σ') − μ(σ')L(σ',σ)| over single-flip pairs."""
    p = g.probs
    worst = 0.0
    for i in range(g.N):
        a, b = _flip_pairs(g.N, i)
        if L is None:
            rab, rba = _pair_rates(p[a], p[b], "heat-bath")
        else:
            rab, rba = L[a, b], L[b, a]
        worst = max(worst, float(np.max(np.abs(p[a] * rab - p[b] * rba))))
    return worst


@dataclass
class GeneratorSpectrum:
    eigenvalues: np.ndarray  # of −L, ascending
    gap: float
    vectors: Optional[np.ndarray] = None  # columns φ_k = D^{-1/2} u_k

    def to_csv(self) -> str:
        return "eigenvalue\n" + "\n".join(f"{x:.17g}" for x in self.eigenvalues) + "\n"


def spectral_gap(g: ExactGibbs, rates: str = "heat-bath", n_spec: int = N_SPEC, vectors: bool = False) -> GeneratorSpectrum:
    S = symmetrized_generator(g, rates, n_spec)
    if vectors:
        w, U = linalg.eigh(-S)
        phis = U / np.sqrt(g.probs)[:, None]
    else:
        w = linalg.eigh(-S, eigvals_only=True)
        phis = None
    gap = float(w[1]) if len(w) > 1 else float("nan")
    return GeneratorSpectrum(w, gap, phis)


def variational_gap(g: ExactGibbs, rng: np.random.Generator, starts: int = 3) -> float:
    """min E(φ,φ)/Var(φ) by L-BFGS from random starts; independent of the eigensolver."""
    p = g.probs
    N = g.N
    pairs = [_flip_pairs(N, i) for i in range(N)]
    wts = [p[a] * p[b] / (p[a] + p[b]) for a, b in pairs]

    def f(phi):
        E = 0.0
        gE = np.zeros_like(phi)
        for (a, b), w in zip(pairs, wts):
            diff = phi[a] - phi[b]
            E += np.sum(w * diff * diff)
            t = 2.0 * w * diff
            gE[a] += t  # a (and b) hold distinct codes for one flip direction
            gE[b] -= t
        m = np.dot(p, phi)
        c = phi - m
        V = np.dot(p, c * c)
        gV = 2.0 * p * c
        val = E / V
        return val, (gE - val * gV) / V

    # optimise over ψ = √p φ so the metric is the identity; raw φ is badly scaled when p spans decades
    sq = np.sqrt(p)

    def f_psi(psi):
        val, grad = f(psi / sq)
        return val, grad / sq

    best = np.inf
    for _ in range(starts):
        x0 = rng.standard_normal(len(p))
        res = optimize.minimize(f_psi, x0, jac=True, method="L-BFGS-B",
                                options={"maxiter": 20000, "ftol": 1e-16, "gtol": 1e-13})
        best = min(best, float(res.fun))
    return best


def transition_matrix(g: ExactGibbs, t: float, spec: Optional[GeneratorSpectrum] = None) -> np.ndarray:
    """P_t = exp(tL) via the symmetric eigendecomposition."""
    if spec is None or spec.vectors is None:
        spec = spectral_gap(g, vectors=True)
    sq = np.sqrt(g.probs)
    U = spec.vectors * sq[:, None]
    Pt = (U * np.exp(-t * spec.eigenvalues)) @ U.T
    return Pt * (sq[None, :] / sq[:, None])


def worst_start_tv(g: ExactGibbs, t: float, spec: Optional[GeneratorSpectrum] = None) -> float:
    Pt = transition_matrix(g, t, spec)
    return float(0.5 * np.abs(Pt - g.probs[None, :]).sum(axis=1).max())


# -- frontier elimination -----------------------------------------------------

def _frontier_logz(inst: RfimInstance, clamp: dict) -> float:
    """log Σ_σ exp(−H(σ)) with spins in ``clamp`` held fixed (id -> ±1)."""
    N = inst.N
    nbr = inst.domain.neighbors
    he = inst.h_eff
    beta = inst.beta
    last_nb = np.where(nbr >= 0, nbr, -1).max(axis=1)
    coup = np.exp(beta * np.array([[1.0, -1.0], [-1.0, 1.0]]))
    table = np.ones(())
    axes: list = []
    logscale = 0.0
    for v in range(N):
        f = np.exp(np.array([-he[v], he[v]]) - abs(he[v]))
        logscale += abs(he[v])
        if v in clamp:
            f = f * (np.array([0.0, 1.0]) if clamp[v] > 0 else np.array([1.0, 0.0]))
        table = table[..., None] * f
        for w in nbr[v]:
            if 0 <= w < v:
                ax = axes.index(int(w))
                shape = [1] * (len(axes) + 1)
                shape[ax] = 2
                shape[-1] = 2
                table = table * coup.reshape(shape)
        axes.append(v)
        if len(axes) > W_MAX:
            raise TooLargeError(f"frontier width exceeds {W_MAX}")
        done = [k for k, w in enumerate(axes) if last_nb[w] <= v]
        if done:
            table = table.sum(axis=tuple(done))
            axes = [w for k, w in enumerate(axes) if k not in done]
        s = float(table.max())
        if s <= 0.0:
            return -np.inf
        table = table / s
        logscale += np.log(s)
    return logscale + float(np.log(table.sum()))


def log_partition(inst: RfimInstance) -> float:
    if inst.N <= 12:
        return float(logsumexp(log_weights(inst)))
    return _frontier_logz(inst, {})


def site_plus_prob(inst: RfimInstance, i: int) -> float:
    """P(σ_i = +1), by enumeration for small N and frontier elimination otherwise."""
    if inst.N <= 12:
        return enumerate_gibbs(inst).plus_prob(i)
    lp = _frontier_logz(inst, {i: 1})
    lm = _frontier_logz(inst, {i: -1})
    return float(1.0 / (1.0 + np.exp(lm - lp)))
