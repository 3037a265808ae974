import numpy as np
import pytest

from rfim_glauber import lattice
from rfim_glauber._rng import stream
from rfim_glauber.rfim import RfimInstance


@pytest.fixture
def rng():
    return stream(12345, "tests")


def path_instance(beta, h, boundary=None):
    dom = lattice.make_rect((len(h),))
    return RfimInstance(dom, beta, np.asarray(h, float), boundary or {})


def brute_force_edges(coords):
    pts = [tuple(c) for c in coords]
    S = set(pts)
    out = set()
    for p in pts:
        for k in range(len(p)):
            q = list(p)
            q[k] += 1
            q = tuple(q)
            if q in S:
                out.add((p, q))
    return out
