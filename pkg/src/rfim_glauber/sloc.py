"""Stochastic localization of an RFIM measure.

The tilt process is simulated through its exact representation
y_t = t σ* + B_t with σ* ~ ν_0 independent of the Brownian motion B, so the
tilted measure ν_t is the RFIM with field h + y_t.  The checks below average
exact functionals of ν_t over many trajectories.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from . import _kernels as K
from . import exact, lattice
from ._rng import kernel_seeds, stream
from .glauber import heatbath_table, states_to_codes
from .rfim import ConfigError, RfimInstance, pin_constant

DEFAULT_TIMES = (0.0, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0)


def tilted_field(h, y):
    """Field of ν_t given the tilt y_t."""
    return np.asarray(h) + np.asarray(y)


def _check_times(times) -> np.ndarray:
    t = np.asarray(times, dtype=float)
    if t.ndim != 1 or len(t) == 0 or t[0] != 0.0 or np.any(np.diff(t) <= 0):
        raise ValueError("time grid must start at 0 and increase strictly")
    return t


def _source(source):
    """Normalise the σ* source to ('exact', None) or ('glauber', burn_in)."""
    if source == "exact":
        return "exact", None
    if isinstance(source, (tuple, list)) and len(source) == 2 and source[0] == "glauber":
        if source[1] is None or not np.isfinite(source[1]) or source[1] <= 0:
            raise ConfigError("glauber σ* source needs a positive burn-in length")
        return "glauber", float(source[1])
    if source == "glauber" or (isinstance(source, (tuple, list)) and source and source[0] == "glauber"):
        raise ConfigError("glauber σ* source needs a recorded burn-in length")
    raise ConfigError(f"unknown σ* source {source!r}")


@dataclass
class SLTrajectory:
    base: RfimInstance
    sigma_star: np.ndarray
    times: np.ndarray
    y: np.ndarray  # (K+1, N)
    source: tuple = ("exact", None)

    def tilted(self, k: int) -> RfimInstance:
        return RfimInstance(self.base.domain, self.base.beta, tilted_field(self.base.h, self.y[k]), self.base.boundary)


def _draw_stars(inst: RfimInstance, replicas: int, seed: int, source) -> np.ndarray:
    kind, burn = _source(source)
    if kind == "exact":
        g = exact.enumerate_gibbs(inst)
        u = np.array([stream(seed, "sl-star", r).random() for r in range(replicas)])
        cdf = np.cumsum(g.probs)
        cdf[-1] = 1.0
        codes = np.searchsorted(cdf, u, side="right")
        return exact.spin_table(inst.N)[codes].astype(np.int64)
    nbr = np.ascontiguousarray(inst.domain.neighbors, dtype=np.int64)
    init = np.ones((replicas, inst.N), dtype=np.int64)
    states, _ = K.chain_batch(nbr, heatbath_table(inst), init, burn, kernel_seeds(seed, "sl-burn", 0, replicas))
    return states


def _draw_noise(times: np.ndarray, N: int, replicas: int, seed: int) -> np.ndarray:
    dt = np.diff(times)
    out = np.zeros((replicas, len(times), N))
    for r in range(replicas):
        g = stream(seed, "sl-noise", r)
        inc = g.standard_normal((len(dt), N)) * np.sqrt(dt)[:, None]
        out[r, 1:] = np.cumsum(inc, axis=0)
    return out


def sl_batch(inst: RfimInstance, times, replicas: int, seed: int, source="exact"):
    """σ* (R, N) and tilts y (R, K+1, N); replica r is reproducible on its own."""
    t = _check_times(times)
    stars = _draw_stars(inst, replicas, seed, source)
    y = t[None, :, None] * stars[:, None, :] + _draw_noise(t, inst.N, replicas, seed)
    return stars, y


def sl_trajectory(inst: RfimInstance, times, source="exact", seed: int = 0, replica: int = 0) -> SLTrajectory:
    t = _check_times(times)
    stars, y = sl_batch(inst, t, replica + 1, seed, source)
    return SLTrajectory(inst, stars[replica], t, y[replica], _source(source))


def bayes_posterior(g0: exact.ExactGibbs, y, t: float) -> np.ndarray:
    """ν_0(σ) exp(<y, σ> − t|σ|²/2), normalised; written without the tilted instance."""
    N = g0.N
    logp = g0.logp.copy()
    for c in range(1 << N):
        s = exact.config_of(c, N)
        logp[c] += float(np.dot(y, s)) - 0.5 * t * float(np.dot(s, s))
    return np.exp(logp - logsumexp(logp))


# -- vectorised exact functionals of ν_t --------------------------------------

def _tilted_logp(lw0: np.ndarray, S: np.ndarray, h: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """(R, 2^N) normalised log-probabilities of ν_t for tilts Y (R, N)."""
    shift = tilted_field(h[None, :], Y) - h[None, :]
    lw = lw0[None, :] + shift @ S.T
    return lw - logsumexp(lw, axis=1, keepdims=True)


@dataclass
class SLReport:
    rows: list = field(default_factory=list)  # (t, statistic, mean, stderr, replicas, verdict)
    notes: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(r[5] != "fail" for r in self.rows)

    def add(self, t, stat, m, se, n, verdict):
        self.rows.append((float(t), stat, float(m), float(se), int(n), verdict))

    def to_csv(self) -> str:
        out = ["t,statistic,mean,stderr,replicas,verdict"]
        out += [f"{t:.17g},{s},{m:.17g},{se:.17g},{n},{v}" for t, s, m, se, n, v in self.rows]
        return "\n".join(out) + "\n"

    def extend(self, other: "SLReport"):
        self.rows.extend(other.rows)
        self.notes.update(other.notes)
        return self


def _mse(x):
    x = np.asarray(x, float)
    return float(x.mean()), float(x.std(ddof=1) / np.sqrt(len(x))) if len(x) > 1 else 0.0


def _prepare(inst, times, replicas, seed, source):
    t = _check_times(times)
    S = exact.spin_table(inst.N).astype(np.float64)
    g0 = exact.enumerate_gibbs(inst)
    lw0 = exact.log_weights(inst)
    _, Y = sl_batch(inst, t, replicas, seed, source)
    return t, S, g0, lw0, Y


def martingale_check(inst: RfimInstance, A, times=DEFAULT_TIMES, replicas: int = 10000, seed: int = 0,
                     source="exact", z_max: float = 3.0) -> SLReport:
    """ν_t(A) averaged over trajectories against ν_0(A); A is a boolean mask over codes."""
    A = np.asarray(A, dtype=bool)
    t, S, g0, lw0, Y = _prepare(inst, times, replicas, seed, source)
    target = float(g0.probs[A].sum())
    rep = SLReport(notes={"nu0_A": target})
    for k, tk in enumerate(t):
        P = np.exp(_tilted_logp(lw0, S, inst.h_eff, Y[:, k]))
        vals = P[:, A].sum(axis=1)
        m, se = _mse(vals)
        # at t = 0 every replica equals ν_0(A) and se is rounding noise
        z = 0.0 if se < 1e-12 else (m - target) / se
        verdict = "pass" if abs(m - target) <= z_max * se + 1e-12 else "fail"
        rep.add(tk, "nu_t(A)", m, se, replicas, verdict)
        rep.notes[f"z@{tk:g}"] = z
    return rep


def _variances(P, phi):
    m = P @ phi
    return P @ (phi ** 2) - m ** 2


def variance_decay_check(inst: RfimInstance, phi, times=DEFAULT_TIMES, replicas: int = 10000, seed: int = 0,
                         source="exact", z_max: float = 3.0) -> SLReport:
    """E[Var_{ν_t}(φ)] nonincreasing: paired one-sided test on consecutive times."""
    phi = np.asarray(phi, dtype=float)
    t, S, g0, lw0, Y = _prepare(inst, times, replicas, seed, source)
    rep = SLReport()
    prev = None
    series = []
    for k, tk in enumerate(t):
        V = _variances(np.exp(_tilted_logp(lw0, S, inst.h_eff, Y[:, k])), phi)
        m, se = _mse(V)
        series.append(m)
        if prev is None:
            verdict = "pass"
        else:
            dm, dse = _mse(V - prev)
            verdict = "pass" if dm <= z_max * dse + 1e-12 else "fail"
        rep.add(tk, "E[Var(phi)]", m, se, replicas, verdict)
        prev = V
    series = np.array(series)
    pos = series > 0
    if pos.sum() >= 2:
        rep.notes["log_var_slope"] = float(np.polyfit(t[pos], np.log(series[pos]), 1)[0])
    return rep


def _ball_delta_batch(inst: RfimInstance, u, ell: int, Ytk: np.ndarray) -> np.ndarray:
    """δ_t(u, ℓ) for each tilt row, exactly on the pinned ball."""
    B = lattice.ball(u, ell, inst.domain)
    if not lattice.boundary(set(B), inst.domain):
        return np.zeros(len(Ytk))
    idx = inst.domain.indices(B)
    out = []
    for s in (+1, -1):
        pinned = pin_constant(inst, list(B), s)
        Sb = exact.spin_table(pinned.N).astype(np.float64)
        lw = exact.log_weights(pinned)
        P = np.exp(_tilted_logp(lw, Sb, pinned.h, Ytk[:, idx]))
        out.append(P[:, Sb[:, pinned.domain.index(u)] > 0].sum(axis=1))
    return np.clip(out[0] - out[1], 0.0, 1.0)


def _dirichlet_batch(P: np.ndarray, phi: np.ndarray, N: int) -> np.ndarray:
    tot = np.zeros(P.shape[0])
    for i in range(N):
        a, b = exact._flip_pairs(N, i)
        w = P[:, a] * P[:, b] / (P[:, a] + P[:, b])
        tot += (w * (phi[a] - phi[b]) ** 2).sum(axis=1)
    return tot


def supermartingale_checks(inst: RfimInstance, u, ell: int, phi, times=DEFAULT_TIMES, replicas: int = 10000,
                           seed: int = 0, source="exact", z_max: float = 3.0) -> SLReport:
    """One-sided tests E[δ_t] ≤ δ_0 and E[E_{ν_t}(φ,φ)] ≤ E_{ν_0}(φ,φ)."""
    phi = np.asarray(phi, dtype=float)
    u = tuple(int(x) for x in u)
    t, S, g0, lw0, Y = _prepare(inst, times, replicas, seed, source)
    rep = SLReport()
    d0 = float(_ball_delta_batch(inst, u, ell, np.zeros((1, inst.N)))[0])
    e0 = exact.dirichlet_form(g0, phi)
    rep.notes.update({"delta_0": d0, "dirichlet_0": e0})
    for k, tk in enumerate(t):
        D = _ball_delta_batch(inst, u, ell, Y[:, k])
        m, se = _mse(D)
        rep.add(tk, "E[delta_t]", m, se, replicas, "pass" if m <= d0 + z_max * se + 1e-12 else "fail")
        P = np.exp(_tilted_logp(lw0, S, inst.h_eff, Y[:, k]))
        E = _dirichlet_batch(P, phi, inst.N)
        m, se = _mse(E)
        rep.add(tk, "E[dirichlet_t]", m, se, replicas, "pass" if m <= e0 + z_max * se + 1e-12 else "fail")
    return rep


def trace_moment_probe(inst: RfimInstance, p: int, times=DEFAULT_TIMES, replicas: int = 2000, seed: int = 0,
                       source="exact", chunk: int = 512) -> SLReport:
    """Mean of Tr(Cov(ν_t)^p) per time and the implied Ĉ_0 = (max/N)^{1/p}/p (descriptive)."""
    t, S, g0, lw0, Y = _prepare(inst, times, replicas, seed, source)
    rep = SLReport()
    N = inst.N
    best = 0.0
    for k, tk in enumerate(t):
        vals = []
        for lo in range(0, replicas, chunk):
            P = np.exp(_tilted_logp(lw0, S, inst.h_eff, Y[lo:lo + chunk, k]))
            m = P @ S
            second = np.einsum("rc,ci,cj->rij", P, S, S)
            cov = second - m[:, :, None] * m[:, None, :]
            lam = np.clip(np.linalg.eigvalsh(cov), 0.0, None)
            vals.append((lam ** p).sum(axis=1))
        vals = np.concatenate(vals)
        mm, se = _mse(vals)
        best = max(best, mm)
        rep.add(tk, f"E[Tr Cov^{p}]", mm, se, replicas, "info")
    rep.notes["max_mean"] = best
    rep.notes["C0_hat"] = (best / N) ** (1.0 / p) / p
    return rep
