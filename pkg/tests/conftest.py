"""Shared generators and finite-difference helpers for the test suite."""

import numpy as np
import pytest

from tetipc.proximity import ContactStencil, StencilKind, classify_edge_edge


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def unit(rng, avoid=None, min_cross=0.3):
    while True:
        v = rng.normal(size=3)
        n = np.linalg.norm(v)
        if n < 1e-6:
            continue
        v = v / n
        if avoid is None or np.linalg.norm(np.cross(v, avoid)) > min_cross:
            return v


def make_pp(rng, d):
    """Two points at exact distance d -> positions (2, 3)."""
    x0 = rng.normal(size=3)
    x = np.stack([x0, x0 + d * unit(rng)])
    stencil = ContactStencil(kind=StencilKind.POINT_POINT, verts=(0, 1))
    return stencil, x


def make_pe(rng, d):
    """Point at exact distance d over a segment interior -> (3, 3)."""
    e1 = rng.normal(size=3)
    edge = rng.uniform(0.5, 2.0) * unit(rng)
    e2 = e1 + edge
    t = rng.uniform(0.2, 0.8)
    perp = unit(rng, avoid=edge / np.linalg.norm(edge))
    perp = perp - np.dot(perp, edge) / np.dot(edge, edge) * edge
    perp /= np.linalg.norm(perp)
    p = e1 + t * edge + d * perp
    stencil = ContactStencil(kind=StencilKind.POINT_EDGE, verts=(0, 1, 2))
    return stencil, np.stack([p, e1, e2])


def make_pt(rng, d):
    """Point at distance d over a triangle interior point -> (4, 3)."""
    while True:
        t1 = rng.normal(size=3)
        t2 = t1 + rng.uniform(0.5, 2.0) * unit(rng)
        t3 = t1 + rng.uniform(0.5, 2.0) * unit(rng)
        n = np.cross(t2 - t1, t3 - t1)
        if np.linalg.norm(n) > 0.2:
            break
    n /= np.linalg.norm(n)
    w1, w2 = rng.uniform(0.15, 0.6), rng.uniform(0.15, 0.6)
    if w1 + w2 > 0.85:
        w1, w2 = w1 / 2.0, w2 / 2.0
    base = (1 - w1 - w2) * t1 + w1 * t2 + w2 * t3
    sign = 1.0 if rng.uniform() < 0.5 else -1.0
    p = base + sign * d * n
    stencil = ContactStencil(kind=StencilKind.POINT_TRIANGLE, verts=(0, 1, 2, 3))
    return stencil, np.stack([p, t1, t2, t3])


def make_ee(rng, d):
    """Skew segments with interior-interior closest pair at distance d."""
    ua = unit(rng)
    ub = unit(rng, avoid=ua, min_cross=0.4)
    n = np.cross(ua, ub)
    n /= np.linalg.norm(n)
    ca = rng.normal(size=3)
    cb = ca + d * n
    la, lb = rng.uniform(0.6, 1.5), rng.uniform(0.6, 1.5)
    a1, a2 = ca - la * ua, ca + la * ua
    b1, b2 = cb - lb * ub, cb + lb * ub
    stencil = ContactStencil(kind=StencilKind.EDGE_EDGE, verts=(0, 1, 2, 3))
    return stencil, np.stack([a1, a2, b1, b2])


def make_parallel_ee(rng, d, angle=1e-4):
    """Nearly-parallel segments at distance d, promoted with its own eps_x."""
    ua = unit(rng)
    perp = unit(rng, avoid=ua)
    perp = perp - np.dot(perp, ua) * ua
    perp /= np.linalg.norm(perp)
    ub = np.cos(angle) * ua + np.sin(angle) * perp
    ca = rng.normal(size=3)
    off = np.cross(ua, perp)
    off /= np.linalg.norm(off)
    cb = ca + d * off
    la, lb = rng.uniform(0.6, 1.2), rng.uniform(0.6, 1.2)
    x = np.stack([ca - la * ua, ca + la * ua, cb - lb * ub, cb + lb * ub])
    eps_x = 1e-3 * (2 * la) ** 2 * (2 * lb) ** 2
    kind, local, res, c = classify_edge_edge(x[0], x[1], x[2], x[3], eps_x=eps_x)
    assert c < eps_x, "generator must produce a promoted pair"
    stencil = ContactStencil(
        kind=kind, verts=(0, 1, 2, 3), eps_x=eps_x, edge_pair=((0, 1), (2, 3)), sub=local
    )
    return stencil, x


MAKERS = {
    StencilKind.POINT_POINT: make_pp,
    StencilKind.POINT_EDGE: make_pe,
    StencilKind.POINT_TRIANGLE: make_pt,
    StencilKind.EDGE_EDGE: make_ee,
}


def fd_gradient(fun, x, h):
    """Central differences of a scalar function of an (n, 3) position array."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for v in range(x.shape[0]):
        for k in range(3):
            xp = x.copy()
            xm = x.copy()
            xp[v, k] += h
            xm[v, k] -= h
            grad[v, k] = (fun(xp) - fun(xm)) / (2.0 * h)
    return grad


def random_rigid_transform(rng):
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    rot = np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )
    return rot, rng.normal(size=3)
