"""Compiled inner loops.

All kernels take a neighbour table ``nbr`` (N, 2d; -1 = absent) and a
heat-bath table ``ptab`` (N, 4d+1) with ptab[v, k] = P(σ_v = +1) when the
neighbour spins of v sum to k − 2d.  Absent or inactive neighbours carry spin 0.
Each replica reseeds numba's generator with its own seed so results do not
depend on how replicas are chunked.

One uniform U serves both the site and the acceptance draw: v = ⌊U N⌋ and
u = U N − v, which are independent and uniform up to the lost log2(N) bits.
"""
from __future__ import annotations

import numpy as np
from numba import njit


def plus_table(h_eff: np.ndarray, beta: float, d: int) -> np.ndarray:
    k = np.arange(-2 * d, 2 * d + 1, dtype=np.float64)
    m = np.asarray(h_eff, dtype=np.float64)[:, None] + beta * k[None, :]
    return 1.0 / (1.0 + np.exp(-2.0 * m))


@njit(cache=True)
def _nsum(nbr, s, v):
    acc = 0
    for j in range(nbr.shape[1]):
        w = nbr[v, j]
        if w >= 0:
            acc += s[w]
    return acc


@njit(cache=True)
def chain_batch(nbr, ptab, init, t_end, seeds):
    """Independent continuous-time chains from ``init`` rows to time t_end.

    Returns final states (R, N) and event counts (R,).
    """
    R, N = init.shape
    off = nbr.shape[1]
    out = init.copy()
    events = np.zeros(R, dtype=np.int64)
    for r in range(R):
        np.random.seed(seeds[r])
        s = out[r]
        t = 0.0
        n = 0
        while True:
            t += np.random.exponential(1.0 / N)
            if t > t_end:
                break
            U = np.random.random() * N
            v = int(U)
            u = U - v
            k = _nsum(nbr, s, v) + off
            s[v] = 1 if u < ptab[v, k] else -1
            n += 1
        events[r] = n
    return out, events


@njit(cache=True)
def chain_log(nbr, ptab, init, t_end, seed, max_events):
    """One chain with its event log (time, site, new spin)."""
    N = init.shape[0]
    off = nbr.shape[1]
    s = init.copy()
    times = np.empty(max_events)
    sites = np.empty(max_events, dtype=np.int64)
    spins = np.empty(max_events, dtype=np.int64)
    np.random.seed(seed)
    t = 0.0
    n = 0
    while n < max_events:
        t += np.random.exponential(1.0 / N)
        if t > t_end:
            break
        U = np.random.random() * N
        v = int(U)
        u = U - v
        k = _nsum(nbr, s, v) + off
        s[v] = 1 if u < ptab[v, k] else -1
        times[n] = t
        sites[n] = v
        spins[n] = s[v]
        n += 1
    return s, times[:n], sites[:n], spins[:n]


@njit(cache=True)
def coupled_batch(nbr, ptab1, ptab2, init1, init2, active, t_end, seeds):
    """Grand coupling of two chains sharing (time, site, uniform) events.

    Events landing on sites with ``active[v] == 0`` are skipped by both chains,
    which realises the ball-restricted variant.  Returns per-site disagreement
    counts at t_end and the number of replicas fully coalesced.
    """
    N = init1.shape[0]
    off = nbr.shape[1]
    counts = np.zeros(N, dtype=np.int64)
    coalesced = 0
    a = np.empty(N, dtype=np.int64)
    b = np.empty(N, dtype=np.int64)
    for r in range(seeds.shape[0]):
        np.random.seed(seeds[r])
        for i in range(N):
            a[i] = init1[i]
            b[i] = init2[i]
        t = 0.0
        while True:
            t += np.random.exponential(1.0 / N)
            if t > t_end:
                break
            U = np.random.random() * N
            v = int(U)
            u = U - v
            if active[v] == 0:
                continue
            a[v] = 1 if u < ptab1[v, _nsum(nbr, a, v) + off] else -1
            b[v] = 1 if u < ptab2[v, _nsum(nbr, b, v) + off] else -1
        same = True
        for i in range(N):
            if a[i] != b[i]:
                counts[i] += 1
                same = False
        if same:
            coalesced += 1
    return counts, coalesced


@njit(cache=True)
def coupled_watch(nbr, ptab1, ptab2, n_events, seeds):
    """Count order and coalescence breaches in coupled event sequences.

    Each replica draws a random pair σ¹ ≤ σ² (half the replicas start equal)
    and runs ``n_events`` shared events.  After every event the updated site
    is checked: σ¹_v ≤ σ²_v must hold, and once the chains agree everywhere
    they must keep agreeing.  Returns (order breaches, coalescence breaches,
    events run, events run while coalesced).
    """
    N = nbr.shape[0]
    off = nbr.shape[1]
    order_bad = 0
    coal_bad = 0
    total = 0
    coal_events = 0
    a = np.empty(N, dtype=np.int64)
    b = np.empty(N, dtype=np.int64)
    for r in range(seeds.shape[0]):
        np.random.seed(seeds[r])
        equal_start = np.random.random() < 0.5
        ndiff = 0
        for i in range(N):
            b[i] = 1 if np.random.random() < 0.5 else -1
            if equal_start:
                a[i] = b[i]
            else:
                a[i] = -1 if np.random.random() < 0.5 else b[i]
            if a[i] != b[i]:
                ndiff += 1
        for e in range(n_events):
            U = np.random.random() * N
            v = int(U)
            u = U - v
            was = ndiff == 0
            before = a[v] != b[v]
            a[v] = 1 if u < ptab1[v, _nsum(nbr, a, v) + off] else -1
            b[v] = 1 if u < ptab2[v, _nsum(nbr, b, v) + off] else -1
            after = a[v] != b[v]
            if before and not after:
                ndiff -= 1
            elif after and not before:
                ndiff += 1
            if a[v] > b[v]:
                order_bad += 1
            if was:
                coal_events += 1
                if ndiff != 0:
                    coal_bad += 1
            total += 1
    return order_bad, coal_bad, total, coal_events


@njit(cache=True)
def incremental_batch(nbr, ptab, order, ksteps, seeds):
    """Incremental sampler; returns configuration codes (bit i = spin of id i).

    Stage 1 draws σ_{v1} from its single-site law; stage i adds v_i with an
    independent single-site draw and runs ksteps[i] discrete heat-bath steps
    on the free-boundary measure of the first i vertices.
    """
    N = order.shape[0]
    off = nbr.shape[1]
    out = np.empty(seeds.shape[0], dtype=np.int64)
    s = np.zeros(nbr.shape[0], dtype=np.int64)
    for r in range(seeds.shape[0]):
        np.random.seed(seeds[r])
        for i in range(s.shape[0]):
            s[i] = 0
        for i in range(N):
            v = order[i]
            # inactive neighbours are 0, so ptab[v, off] is the bare single-site law
            s[v] = 1 if np.random.random() < ptab[v, off] else -1
            for step in range(ksteps[i]):
                U = np.random.random() * (i + 1)
                j = int(U)
                w = order[j]
                u = U - j
                s[w] = 1 if u < ptab[w, _nsum(nbr, s, w) + off] else -1
        code = 0
        for i in range(s.shape[0]):
            if s[i] > 0:
                code |= np.int64(1) << i
        out[r] = code
    return out


@njit(cache=True)
def relaxation_series(nbr, ptab, init, t_burn, dt, n_samples, region, seed):
    """Region magnetisation sampled every dt after a burn-in of t_burn."""
    N = init.shape[0]
    off = nbr.shape[1]
    s = init.copy()
    inreg = np.zeros(N, dtype=np.int64)
    for i in range(region.shape[0]):
        inreg[region[i]] = 1
    np.random.seed(seed)
    t = 0.0
    t_next = t_burn
    mag = 0
    for i in range(region.shape[0]):
        mag += s[region[i]]
    out = np.empty(n_samples)
    j = 0
    while j < n_samples:
        t_ev = t + np.random.exponential(1.0 / N)
        while j < n_samples and t_next < t_ev:
            out[j] = mag / region.shape[0]
            j += 1
            t_next += dt
        t = t_ev
        U = np.random.random() * N
        v = int(U)
        u = U - v
        new = 1 if u < ptab[v, _nsum(nbr, s, v) + off] else -1
        if inreg[v] == 1:
            mag += new - s[v]
        s[v] = new
    return out
