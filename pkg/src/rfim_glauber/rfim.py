"""Random-field Ising measure on a finite domain.

H(σ) = −β Σ_{u~v} σ_u σ_v − Σ_u h_u σ_u, with boundary spins τ folded into an
effective field h_eff = h + β Σ_{w ∈ ∂, w~u} τ_w at construction time.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from . import lattice
from ._rng import stream
from .lattice import Domain


class ConfigError(ValueError):
    """Invalid parameters for a model or experiment."""


FIELD_KINDS = ("gaussian", "two_point", "uniform_symmetric", "fixed")


@dataclass(frozen=True)
class FieldSpec:
    """Law of the quenched field.

    gaussian: variance ``param``; two_point: ±param; uniform_symmetric:
    uniform on [−param, param]; fixed: ``values`` (non-random).
    """

    kind: str
    param: float = 0.0
    seed: int = 0
    values: Optional[tuple] = None

    def __post_init__(self):
        if self.kind not in FIELD_KINDS:
            raise ConfigError(f"unknown field kind {self.kind!r}")
        if self.kind == "fixed":
            if self.values is None:
                raise ConfigError("fixed field needs values")
        elif not (np.isfinite(self.param) and self.param >= 0):
            raise ConfigError("field parameter must be finite and >= 0")

    @property
    def random(self) -> bool:
        return self.kind != "fixed"

    def with_seed(self, seed: int) -> "FieldSpec":
        return FieldSpec(self.kind, self.param, int(seed), self.values)

    def describe(self) -> str:
        if self.kind == "fixed":
            return "fixed"
        return f"{self.kind}({self.param:.17g})"

    @classmethod
    def parse(cls, text: str, seed: int = 0) -> "FieldSpec":
        """Parse ``kind(param)``, e.g. ``gaussian(25)`` or ``zero``."""
        text = text.strip()
        if text in ("zero", "0"):
            return cls("two_point", 0.0, seed)
        if "(" not in text or not text.endswith(")"):
            raise ConfigError(f"bad field spec {text!r}")
        kind, arg = text[:-1].split("(", 1)
        kind = kind.strip()
        if kind == "fixed":
            return cls("fixed", 0.0, seed, tuple(float(x) for x in arg.split(",")))
        try:
            return cls(kind, float(arg), seed)
        except ValueError as exc:
            raise ConfigError(f"bad field parameter in {text!r}") from exc


def sample_field(spec: FieldSpec, domain: Domain) -> np.ndarray:
    """I.i.d. field values in vertex-id order, deterministic given the seed."""
    N = domain.N
    if spec.kind == "fixed":
        h = np.asarray(spec.values, dtype=float)
        if h.shape != (N,):
            raise ConfigError(f"fixed field has {h.size} values for {N} vertices")
        return h.copy()
    g = stream(spec.seed, "field")
    if spec.kind == "gaussian":
        return np.sqrt(spec.param) * g.standard_normal(N)
    if spec.kind == "two_point":
        return spec.param * np.where(g.random(N) < 0.5, -1.0, 1.0)
    return g.uniform(-spec.param, spec.param, N)


def _check_spins(sigma, N) -> np.ndarray:
    s = np.asarray(sigma)
    if s.shape != (N,):
        raise ValueError(f"configuration has shape {s.shape}, expected ({N},)")
    if not np.all((s == 1) | (s == -1)):
        raise ValueError("spins must be ±1")
    return s.astype(np.int64)


@dataclass(frozen=True, eq=False)
class RfimInstance:
    """Gibbs measure μ ∝ exp(−H) on ``domain`` with boundary spins ``boundary``."""

    domain: Domain
    beta: float
    h: np.ndarray
    boundary: Mapping = field(default_factory=dict)

    def __post_init__(self):
        if not (np.isfinite(self.beta) and self.beta >= 0):
            raise ConfigError("beta must be finite and >= 0")
        h = np.asarray(self.h, dtype=float)
        if h.shape != (self.domain.N,):
            raise ValueError(f"field has shape {h.shape}, expected ({self.domain.N},)")
        if not np.all(np.isfinite(h)):
            raise ValueError("field must be finite; pin spins through the boundary instead")
        bnd = {}
        for w, s in dict(self.boundary).items():
            w = tuple(int(x) for x in w)
            if s not in (1, -1):
                raise ValueError("boundary spins must be ±1")
            if w in self.domain:
                raise ValueError(f"boundary vertex {w} lies inside the domain")
            if not any(nb in self.domain for nb in lattice._zd_neighbors(w)):
                raise ValueError(f"boundary vertex {w} is not adjacent to the domain")
            bnd[w] = int(s)
        h = h.copy()
        h.setflags(write=False)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "boundary", bnd)
        object.__setattr__(self, "_h_eff", None)

    @property
    def N(self) -> int:
        return self.domain.N

    @property
    def h_eff(self) -> np.ndarray:
        """Field with the boundary pinning folded in."""
        if self._h_eff is None:
            he = self.h.copy()
            for w, s in self.boundary.items():
                for nb in lattice._zd_neighbors(w):
                    i = self.domain.index(nb, missing=-1)
                    if i >= 0:
                        he[i] += self.beta * s
            he.setflags(write=False)
            object.__setattr__(self, "_h_eff", he)
        return self._h_eff

    def with_field(self, h) -> "RfimInstance":
        return RfimInstance(self.domain, self.beta, h, self.boundary)

    def free(self) -> "RfimInstance":
        """Same field, folded boundary kept, as a boundary-free instance."""
        return RfimInstance(self.domain, self.beta, self.h_eff)


def hamiltonian(inst: RfimInstance, sigma) -> float:
    s = _check_spins(sigma, inst.N)
    e = inst.domain.edges()
    inter = float(np.sum(s[e[:, 0]] * s[e[:, 1]])) if len(e) else 0.0
    return -inst.beta * inter - float(np.dot(inst.h_eff, s))


def local_field(inst: RfimInstance, sigma, i: int) -> float:
    """m_v = β Σ_{w~v} σ_w + h_eff_v (boundary spins already in h_eff)."""
    nb = inst.domain.neighbors[i]
    nb = nb[nb >= 0]
    return inst.beta * float(np.sum(np.asarray(sigma)[nb])) + float(inst.h_eff[i])


def conditional_plus_prob(inst: RfimInstance, sigma, v) -> float:
    i = v if isinstance(v, (int, np.integer)) else inst.domain.index(v)
    s = _check_spins(sigma, inst.N)
    return 1.0 / (1.0 + np.exp(-2.0 * local_field(inst, s, int(i))))


def conditional_minus_prob(inst: RfimInstance, sigma, v) -> float:
    # evaluated as the mirror expression, not 1 - p
    i = v if isinstance(v, (int, np.integer)) else inst.domain.index(v)
    s = _check_spins(sigma, inst.N)
    return 1.0 / (1.0 + np.exp(2.0 * local_field(inst, s, int(i))))


def pin(inst: RfimInstance, A, tau: Mapping) -> RfimInstance:
    """Conditional measure on A given σ_{∂A} = τ (∂A taken inside the domain).

    Original boundary spins adjacent to A are carried over.
    """
    A = [tuple(int(x) for x in v) for v in A]
    Aset = set(A)
    for v in A:
        if v not in inst.domain:
            raise ValueError(f"vertex {v} of A is outside the domain")
    dA = lattice.boundary(Aset, inst.domain)
    tau = {tuple(int(x) for x in w): int(s) for w, s in dict(tau).items()}
    missing = dA - set(tau)
    if missing:
        raise ValueError(f"τ does not cover ∂A; missing {sorted(missing)[:4]}")
    sub = inst.domain.subdomain(A)
    h = np.array([inst.h[inst.domain.index(v)] for v in sub])
    bnd = {w: tau[w] for w in dA}
    for w, s in inst.boundary.items():
        if any(nb in Aset for nb in lattice._zd_neighbors(w)):
            bnd[w] = s
    return RfimInstance(sub, inst.beta, h, bnd)


def pin_constant(inst: RfimInstance, A, s: int) -> RfimInstance:
    dA = lattice.boundary(A, inst.domain)
    return pin(inst, A, {w: s for w in dA})


def box_instance(n: int, d: int, beta: float, h, boundary_spin: Optional[int] = None) -> RfimInstance:
    """Λ_n with field h and either free or constant ± boundary on its Z^d exterior."""
    dom = lattice.make_box(n, d)
    bnd = {}
    if boundary_spin is not None:
        bnd = {w: int(boundary_spin) for w in lattice.exterior_boundary(dom)}
    return RfimInstance(dom, beta, h, bnd)


# -- field snapshot files -----------------------------------------------------

def write_field_snapshot(path, domain: Domain, h, spec: FieldSpec) -> None:
    param = ",".join(f"{v:.17g}" for v in spec.values) if spec.kind == "fixed" else f"{spec.param:.17g}"
    lines = [f"{domain.d} {domain.N} {spec.seed} {spec.kind} {param}"]
    for i in range(domain.N):
        c = " ".join(str(x) for x in domain.vertex(i))
        lines.append(f"{c} {float(h[i]):.17g}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_field_snapshot(path):
    """Returns (domain, h, spec)."""
    with open(path) as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    d, N, seed, kind, param = lines[0].split(maxsplit=4)
    d, N = int(d), int(N)
    rows = [ln.split() for ln in lines[1 : 1 + N]]
    coords = np.array([[int(x) for x in r[:d]] for r in rows], dtype=np.int64).reshape(N, d)
    h = np.array([float(r[d]) for r in rows])
    dom = Domain(coords, d=d)
    # rows may come in any order; map them back to lexicographic ids
    order = np.array([dom.index(c) for c in coords])
    hv = np.empty(N)
    hv[order] = h
    if kind == "fixed":
        spec = FieldSpec("fixed", 0.0, int(seed), tuple(float(x) for x in param.split(",")))
    else:
        spec = FieldSpec(kind, float(param), int(seed))
    return dom, hv, spec
