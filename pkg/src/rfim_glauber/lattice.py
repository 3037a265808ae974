"""Finite subdomains of Z^d.

Boxes, l-infinity balls, vertex boundaries, the nucleation enumeration used by
the incremental sampler, and the R-coarse lattice with its two adjacency
notions (R-adjacency: l2-distance R; R-*-adjacency: l-infinity distance R).

Vertex ids are assigned in lexicographic coordinate order and every iteration
in the package derives from ids.
"""
from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np
from scipy import ndimage

Vertex = tuple

_INDEX_LIMIT = np.iinfo(np.int64).max


class EmptyCoarseGridError(ValueError):
    """The domain contains no point of R Z^d."""


def _as_vertex(v) -> Vertex:
    return tuple(int(x) for x in v)


class Domain:
    """Finite vertex set of Z^d with nearest-neighbour adjacency.

    Boxes keep their adjacency implicit (mixed-radix arithmetic); irregular
    sets go through a coordinate dictionary.  Instances are immutable.
    """

    def __init__(self, coords, d: Optional[int] = None, _box_radius: Optional[int] = None):
        arr = np.asarray(coords, dtype=np.int64)
        if arr.size == 0:
            if d is None:
                raise ValueError("empty domain needs an explicit dimension")
            arr = arr.reshape(0, d)
        if arr.ndim != 2:
            raise ValueError("coords must be an (N, d) array")
        if d is not None and arr.shape[1] != d:
            raise ValueError(f"coords have dimension {arr.shape[1]}, expected {d}")
        if _box_radius is None:
            uniq = np.unique(arr, axis=0)
            if len(uniq) != len(arr):
                raise ValueError("duplicate vertices")
            arr = uniq
        arr.setflags(write=False)
        self.d = int(arr.shape[1])
        self.coords = arr
        self.box_radius = _box_radius
        self._index = None
        self._nbr = None

    # -- basic protocol -------------------------------------------------
    def __len__(self) -> int:
        return len(self.coords)

    @property
    def N(self) -> int:
        return len(self.coords)

    def __iter__(self):
        return (tuple(int(x) for x in c) for c in self.coords)

    def __contains__(self, v) -> bool:
        return self.index(v, missing=-1) >= 0

    def __eq__(self, other) -> bool:
        return isinstance(other, Domain) and self.d == other.d and np.array_equal(self.coords, other.coords)

    def __hash__(self):
        return hash((self.d, self.coords.tobytes()))

    def __repr__(self) -> str:
        if self.box_radius is not None:
            return f"Domain(box n={self.box_radius}, d={self.d})"
        return f"Domain(N={self.N}, d={self.d})"

    @property
    def is_box(self) -> bool:
        return self.box_radius is not None

    def vertex(self, i: int) -> Vertex:
        return tuple(int(x) for x in self.coords[i])

    def vertices(self) -> list:
        return [self.vertex(i) for i in range(self.N)]

    def index(self, v, missing: Optional[int] = None) -> int:
        v = _as_vertex(v)
        if len(v) != self.d:
            raise ValueError(f"vertex {v} has wrong dimension for d={self.d}")
        if self.box_radius is not None:
            n = self.box_radius
            side = 2 * n + 1
            i = 0
            for x in v:
                if x < -n or x > n:
                    i = -1
                    break
                i = i * side + (x + n)
        else:
            if self._index is None:
                self._index = {tuple(int(x) for x in c): k for k, c in enumerate(self.coords)}
            i = self._index.get(v, -1)
        if i < 0:
            if missing is not None:
                return missing
            raise KeyError(f"vertex {v} not in domain")
        return i

    def indices(self, vs: Iterable) -> np.ndarray:
        return np.array([self.index(v) for v in vs], dtype=np.int64)

    # -- adjacency -------------------------------------------------------
    @property
    def neighbors(self) -> np.ndarray:
        """(N, 2d) table of neighbour ids, -1 where the neighbour is outside.

        Column ``2k`` is the step ``-e_k``, column ``2k+1`` the step ``+e_k``.
        """
        if self._nbr is None:
            N, d = self.N, self.d
            nbr = np.full((N, 2 * d), -1, dtype=np.int64)
            if self.box_radius is not None:
                n = self.box_radius
                side = 2 * n + 1
                ids = np.arange(N, dtype=np.int64)
                for k in range(d):
                    stride = side ** (d - 1 - k)
                    x = self.coords[:, k]
                    nbr[:, 2 * k] = np.where(x > -n, ids - stride, -1)
                    nbr[:, 2 * k + 1] = np.where(x < n, ids + stride, -1)
            else:
                for k in range(d):
                    e = np.zeros(d, dtype=np.int64)
                    e[k] = 1
                    for col, step in ((2 * k, -e), (2 * k + 1, e)):
                        shifted = self.coords + step
                        nbr[:, col] = [self.index(c, missing=-1) for c in shifted]
            nbr.setflags(write=False)
            self._nbr = nbr
        return self._nbr

    def edges(self) -> np.ndarray:
        """(E, 2) array of edges ``(u, v)`` with ``u < v``."""
        nbr = self.neighbors
        u = np.repeat(np.arange(self.N), nbr.shape[1])
        v = nbr.ravel()
        keep = v > u
        return np.stack([u[keep], v[keep]], axis=1)

    def degree(self) -> np.ndarray:
        return (self.neighbors >= 0).sum(axis=1)

    def subdomain(self, vs: Iterable) -> "Domain":
        return Domain([_as_vertex(v) for v in vs], d=self.d) if vs else Domain(np.zeros((0, self.d)), d=self.d)

    # -- serialisation ---------------------------------------------------
    def to_text(self) -> str:
        rows = [f"{self.d} {self.N}"]
        rows += [" ".join(str(int(x)) for x in c) for c in self.coords]
        return "\n".join(rows) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Domain":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        d, N = (int(x) for x in lines[0].split())
        coords = [[int(x) for x in ln.split()] for ln in lines[1 : 1 + N]]
        if len(coords) != N:
            raise ValueError(f"expected {N} coordinate rows, got {len(coords)}")
        return cls(np.array(coords, dtype=np.int64).reshape(N, d), d=d)


def make_box(n: int, d: int) -> Domain:
    """Lambda_n = [-n, n]^d with nearest-neighbour adjacency."""
    if n < 0 or d < 1:
        raise ValueError("need n >= 0 and d >= 1")
    side = 2 * n + 1
    if side ** d > _INDEX_LIMIT:
        raise OverflowError(f"(2n+1)^d = {side}^{d} overflows the 64-bit index")
    axes = [np.arange(-n, n + 1, dtype=np.int64)] * d
    coords = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    return Domain(coords, d=d, _box_radius=n)


def make_rect(sides) -> Domain:
    """Rectangle prod_k [0, sides[k]) anchored at the origin (an irregular domain)."""
    sides = [int(s) for s in sides]
    if not sides or min(sides) < 1:
        raise ValueError("sides must be positive")
    coords = list(itertools.product(*(range(s) for s in sides)))
    return Domain(coords, d=len(sides))


def linf(u, v) -> int:
    return int(max(abs(a - b) for a, b in zip(u, v)))


def l1(u, v) -> int:
    return int(sum(abs(a - b) for a, b in zip(u, v)))


def ball(o, r: int, domain: Domain) -> Domain:
    """B_r(o) intersected with ``domain`` (l-infinity ball, induced adjacency)."""
    o = _as_vertex(o)
    if o not in domain:
        raise KeyError(f"centre {o} not in domain")
    if r < 0:
        raise ValueError("radius must be non-negative")
    dist = np.abs(domain.coords - np.array(o)).max(axis=1)
    return Domain(domain.coords[dist <= r], d=domain.d)


def boundary(A, domain: Domain) -> set:
    """Exterior vertex boundary of ``A`` with respect to ``domain``."""
    A = {_as_vertex(v) for v in A}
    out = set()
    for v in A:
        for w in _zd_neighbors(v):
            if w not in A and w in domain:
                out.add(w)
    return out


def exterior_boundary(A) -> set:
    """Exterior vertex boundary of ``A`` inside all of Z^d."""
    A = {_as_vertex(v) for v in A}
    return {w for v in A for w in _zd_neighbors(v) if w not in A}


def _zd_neighbors(v: Vertex):
    for k in range(len(v)):
        for s in (-1, 1):
            w = list(v)
            w[k] += s
            yield tuple(w)


# ---------------------------------------------------------------------------
# cube-like sets and nucleation
# ---------------------------------------------------------------------------

def _shell(r: int, d: int) -> list:
    """Vertices at l-infinity distance exactly r from the origin, lexicographic."""
    rng = range(-r, r + 1)
    return [v for v in itertools.product(rng, repeat=d) if max(abs(x) for x in v) == r]


def is_cube_like(A, n: int) -> bool:
    """Whether ``A`` has the form B_r(o) plus part of the next l-infinity shell, r <= n-1.

    The partial shell is taken in the l-infinity sense (B_{r+1} minus B_r); for
    n = 0 the single-vertex box counts as cube-like.
    """
    A = {_as_vertex(v) for v in A}
    if not A:
        return False
    d = len(next(iter(A)))
    o = (0,) * d
    if o not in A:
        return False
    radii = [max(abs(x) for x in v) for v in A]
    if max(radii) > n:
        return False
    counts = {}
    for r in radii:
        counts[r] = counts.get(r, 0) + 1
    # largest r such that B_r is full
    r_full = -1
    for r in range(0, n + 1):
        full = (2 * r + 1) ** d - (2 * r - 1) ** d if r > 0 else 1
        if counts.get(r, 0) == full:
            r_full = r
        else:
            break
    if r_full < 0:
        return False
    r_max = max(radii)
    if n == 0:
        return r_max == 0
    if r_full >= n:
        # A = Lambda_n = B_{n-1} plus the whole last shell
        return True
    return r_max <= r_full + 1 and r_full <= n - 1


def nucleation_order(box: Domain) -> list:
    """Shell-by-shell enumeration of a box: o, then each shell in lexicographic order."""
    if not box.is_box:
        raise ValueError("nucleation order is defined for boxes")
    n, d = box.box_radius, box.d
    order = []
    for r in range(n + 1):
        order.extend(_shell(r, d))
    return order


def growth_order(domain: Domain) -> list:
    """Nucleation order for Λ_n; for other domains, ℓ∞ shells around the minimal corner.

    On a rectangle anchored at the origin every prefix is a cube [0, r]^d plus
    part of the next shell, the corner analogue of a cube-like set.
    """
    if domain.is_box:
        return nucleation_order(domain)
    lo = domain.coords.min(axis=0)
    return sorted(domain.vertices(), key=lambda v: (max(x - m for x, m in zip(v, lo)), v))


# ---------------------------------------------------------------------------
# coarse lattice
# ---------------------------------------------------------------------------

GOOD = "Good"
BAD = "Bad"


@dataclass
class CoarseGrid:
    """Sites of ``domain`` in R Z^d, optionally labelled Good/Bad.

    ``good`` is a boolean array over ``sites`` (None while unlabelled).
    ``margin`` and ``meta`` hold classification metadata.
    """

    R: int
    domain: Domain
    sites: Domain
    good: Optional[np.ndarray] = None
    margin: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    @property
    def labelled(self) -> bool:
        return self.good is not None

    def label_of(self, v) -> str:
        self._require_labels()
        return GOOD if self.good[self.sites.index(v)] else BAD

    def sites_with(self, label: str) -> list:
        self._require_labels()
        want = label == GOOD
        return [self.sites.vertex(i) for i in range(self.sites.N) if bool(self.good[i]) == want]

    def block(self, v) -> Domain:
        """B_v = B_R(v) intersected with the fine domain."""
        return ball(v, self.R, self.domain)

    def with_labels(self, good, margin=None, **meta) -> "CoarseGrid":
        good = np.asarray(good, dtype=bool)
        if good.shape != (self.sites.N,):
            raise ValueError("one label per coarse site required")
        m = dict(self.meta)
        m.update(meta)
        return CoarseGrid(self.R, self.domain, self.sites, good, None if margin is None else np.asarray(margin, float), m)

    def _require_labels(self):
        if self.good is None:
            raise ValueError("coarse grid is unlabelled")

    def to_csv_rows(self) -> list:
        self._require_labels()
        rows = []
        for i in range(self.sites.N):
            c = " ".join(str(x) for x in self.sites.vertex(i))
            m = "" if self.margin is None else f"{self.margin[i]:.17g}"
            rows.append((c, GOOD if self.good[i] else BAD, m))
        return rows


def coarse_lattice(domain: Domain, R: int) -> CoarseGrid:
    """Unlabelled coarse grid Lambda^(R) = domain intersected with R Z^d."""
    if R < 2:
        raise ValueError("coarse radius must be at least 2")
    mask = np.all(domain.coords % R == 0, axis=1)
    if not mask.any():
        raise EmptyCoarseGridError(f"no vertex of the domain lies in {R}Z^{domain.d}")
    return CoarseGrid(R, domain, Domain(domain.coords[mask], d=domain.d))


def _coarse_clusters(grid: CoarseGrid, members: list, star: bool) -> list:
    if not members:
        return []
    idx = np.array(members, dtype=np.int64) // grid.R
    lo = idx.min(axis=0)
    shape = tuple(idx.max(axis=0) - lo + 1)
    occ = np.zeros(shape, dtype=bool)
    occ[tuple((idx - lo).T)] = True
    structure = ndimage.generate_binary_structure(grid.domain.d, grid.domain.d if star else 1)
    lab, _ = ndimage.label(occ, structure=structure)
    groups = {}
    for v, k in zip(members, lab[tuple((idx - lo).T)]):
        groups.setdefault(int(k), set()).add(v)
    return sorted((frozenset(g) for g in groups.values()), key=lambda g: min(g))


def r_star_clusters(grid: CoarseGrid, label: str) -> list:
    """Maximal R-*-connected components (l-infinity distance R) of sites with ``label``."""
    return _coarse_clusters(grid, grid.sites_with(label), star=True)


def r_clusters(grid: CoarseGrid, label: str) -> list:
    """Maximal R-connected components (l2 distance R) of sites with ``label``."""
    return _coarse_clusters(grid, grid.sites_with(label), star=False)


def flood_fill(sites: Iterable, adjacent) -> list:
    """Connected components of ``sites`` under the predicate ``adjacent(u, v)``.

    Quadratic; intended as a reference for small grids.
    """
    sites = list(sites)
    seen, comps = set(), []
    for s in sites:
        if s in seen:
            continue
        comp, queue = set(), deque([s])
        seen.add(s)
        while queue:
            u = queue.popleft()
            comp.add(u)
            for w in sites:
                if w not in seen and adjacent(u, w):
                    seen.add(w)
                    queue.append(w)
        comps.append(frozenset(comp))
    return sorted(comps, key=lambda g: min(g))
