"""Pure NumPy implementation of the narrow-phase / solver hot kernels.

This is the fallback backend used when the compiled extension is not
available (see ``tetipc.kernels``). The compiled backend must match these
functions bit-for-bit on the same inputs; the parity suite enforces that.

Conventions shared by both backends:

* Point-triangle region codes: 0 face interior, 1/2/3 closest to triangle
  vertex 1/2/3, 4/5/6 closest to edge (1,2)/(2,3)/(3,1).
* Edge-edge region codes: ``3*ra + rb`` where ``ra``/``rb`` is 0 or 1 for an
  endpoint of edge a/b and 2 for an interior point (8 = interior-interior).
* Gradients are of the squared distance, laid out one row per stencil
  vertex in query order, with zero rows for vertices outside the active
  branch.
"""

import numpy as np

PAIR_PT = 0
PAIR_EE = 1
PAIR_PE = 2
PAIR_PP = 3


def pt_classify_batch(p, t1, t2, t3):
    """Classify point-triangle queries and evaluate the active branch.

    Returns ``(codes, d2, grad, w)`` where ``grad`` is (n, 4, 3) over
    (p, t1, t2, t3) and ``w`` holds the barycentric witness (w1, w2) of the
    closest point ``t1 + w1*(t2-t1) + w2*(t3-t1)``.
    """
    p = np.atleast_2d(np.asarray(p, dtype=np.float64))
    t1 = np.atleast_2d(np.asarray(t1, dtype=np.float64))
    t2 = np.atleast_2d(np.asarray(t2, dtype=np.float64))
    t3 = np.atleast_2d(np.asarray(t3, dtype=np.float64))
    n = p.shape[0]

    ab = t2 - t1
    ac = t3 - t1
    ap = p - t1
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2_ = np.einsum("ij,ij->i", ac, ap)
    bp = p - t2
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    cp = p - t3
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)
    vc = d1 * d4 - d3 * d2_
    vb = d5 * d2_ - d1 * d6
    va = d3 * d6 - d5 * d4

    codes = np.zeros(n, dtype=np.int64)
    w1 = np.zeros(n)
    w2 = np.zeros(n)
    undecided = np.ones(n, dtype=bool)

    def settle(cond, code):
        idx = np.flatnonzero(undecided & cond)
        codes[idx] = code
        undecided[idx] = False
        return idx

    settle((d1 <= 0.0) & (d2_ <= 0.0), 1)  # w = (0, 0)

    idx = settle((d3 >= 0.0) & (d4 <= d3), 2)
    w1[idx] = 1.0

    idx = settle((vc <= 0.0) & (d1 >= 0.0) & (d3 <= 0.0), 4)
    w1[idx] = d1[idx] / (d1[idx] - d3[idx])

    idx = settle((d6 >= 0.0) & (d5 <= d6), 3)
    w2[idx] = 1.0

    idx = settle((vb <= 0.0) & (d2_ >= 0.0) & (d6 <= 0.0), 6)
    w2[idx] = d2_[idx] / (d2_[idx] - d6[idx])

    idx = settle((va <= 0.0) & (d4 - d3 >= 0.0) & (d5 - d6 >= 0.0), 5)
    t = (d4[idx] - d3[idx]) / ((d4[idx] - d3[idx]) + (d5[idx] - d6[idx]))
    w1[idx] = 1.0 - t
    w2[idx] = t

    idx = np.flatnonzero(undecided)  # face interior
    denom = va[idx] + vb[idx] + vc[idx]
    w1[idx] = vb[idx] / denom
    w2[idx] = vc[idx] / denom

    w0 = 1.0 - w1 - w2
    closest = w0[:, None] * t1 + w1[:, None] * t2 + w2[:, None] * t3
    r = p - closest
    d2 = np.einsum("ij,ij->i", r, r)

    grad = np.empty((n, 4, 3))
    grad[:, 0] = 2.0 * r
    grad[:, 1] = -2.0 * w0[:, None] * r
    grad[:, 2] = -2.0 * w1[:, None] * r
    grad[:, 3] = -2.0 * w2[:, None] * r
    return codes, d2, grad, np.stack([w1, w2], axis=1)


def ee_classify_batch(a1, a2, b1, b2):
    """Classify edge-edge queries (Eberly clamping) on the active branch.

    Returns ``(codes, d2, grad, w)``; ``w`` holds the clamped segment
    parameters (s on edge a, t on edge b).
    """
    a1 = np.atleast_2d(np.asarray(a1, dtype=np.float64))
    a2 = np.atleast_2d(np.asarray(a2, dtype=np.float64))
    b1 = np.atleast_2d(np.asarray(b1, dtype=np.float64))
    b2 = np.atleast_2d(np.asarray(b2, dtype=np.float64))
    n = a1.shape[0]

    da = a2 - a1
    db = b2 - b1
    r = a1 - b1
    a = np.einsum("ij,ij->i", da, da)
    e = np.einsum("ij,ij->i", db, db)
    f = np.einsum("ij,ij->i", db, r)
    b = np.einsum("ij,ij->i", da, db)
    c = np.einsum("ij,ij->i", da, r)
    denom = a * e - b * b  # equals the squared cross-product norm

    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(denom > 0.0, (b * f - c * e) / np.where(denom > 0.0, denom, 1.0), 0.0)
    s = np.clip(s, 0.0, 1.0)
    t = (b * s + f) / e
    t_low = t < 0.0
    t_high = t > 1.0
    t = np.clip(t, 0.0, 1.0)
    s = np.where(t_low, np.clip(-c / a, 0.0, 1.0), s)
    s = np.where(t_high, np.clip((b - c) / a, 0.0, 1.0), s)

    ra = np.where(s <= 0.0, 0, np.where(s >= 1.0, 1, 2))
    rb = np.where(t <= 0.0, 0, np.where(t >= 1.0, 1, 2))
    codes = (3 * ra + rb).astype(np.int64)

    rvec = (a1 + s[:, None] * da) - (b1 + t[:, None] * db)
    d2 = np.einsum("ij,ij->i", rvec, rvec)

    grad = np.empty((n, 4, 3))
    grad[:, 0] = 2.0 * (1.0 - s)[:, None] * rvec
    grad[:, 1] = 2.0 * s[:, None] * rvec
    grad[:, 2] = -2.0 * (1.0 - t)[:, None] * rvec
    grad[:, 3] = -2.0 * t[:, None] * rvec
    return codes, d2, grad, np.stack([s, t], axis=1)


def cross_sq_batch(a1, a2, b1, b2):
    """Squared cross-product norm of edge directions and its gradient.

    Returns ``(c, grad)`` with ``c = |(a2-a1) x (b2-b1)|^2`` and ``grad`` of
    shape (n, 4, 3) over (a1, a2, b1, b2).
    """
    a1 = np.atleast_2d(np.asarray(a1, dtype=np.float64))
    a2 = np.atleast_2d(np.asarray(a2, dtype=np.float64))
    b1 = np.atleast_2d(np.asarray(b1, dtype=np.float64))
    b2 = np.atleast_2d(np.asarray(b2, dtype=np.float64))

    u = a2 - a1
    v = b2 - b1
    w = np.cross(u, v)
    c = np.einsum("ij,ij->i", w, w)
    gu = 2.0 * np.cross(v, w)
    gv = 2.0 * np.cross(w, u)
    grad = np.stack([-gu, gu, -gv, gv], axis=1)
    return c, grad


def matvec_blocks(hess, vids, x, out):
    """Accumulate ``out += scatter(H_b @ gather(x))`` over a block family.

    ``hess`` is (nb, 3s, 3s), ``vids`` (nb, s) global vertex indices, ``x``
    and ``out`` flat (3N,) vectors. Accumulation order is the block order,
    which keeps runs bit-reproducible.
    """
    nb = hess.shape[0]
    if nb == 0:
        return
    s = vids.shape[1]
    xg = x.reshape(-1, 3)[vids].reshape(nb, 3 * s)
    y = np.einsum("bij,bj->bi", hess, xg)
    np.add.at(out.reshape(-1, 3), vids, y.reshape(nb, s, 3))


def _pair_dist2(x, pair_kind):
    if pair_kind == PAIR_PT:
        return pt_classify_batch(x[0][None], x[1][None], x[2][None], x[3][None])[1][0]
    if pair_kind == PAIR_EE:
        return ee_classify_batch(x[0][None], x[1][None], x[2][None], x[3][None])[1][0]
    if pair_kind == PAIR_PE:
        e = x[2] - x[1]
        t = np.dot(x[0] - x[1], e) / np.dot(e, e)
        t = min(max(t, 0.0), 1.0)
        r = x[0] - x[1] - t * e
        return float(np.dot(r, r))
    r = x[0] - x[1]
    return float(np.dot(r, r))


def accd_max_step(x, dx, pair_kind, slack, max_iter=512):
    """Additive lower bound on the step fraction before closing the gap.

    Iteratively accumulates safe sub-steps of ``(d - g) / l_p`` where
    ``g = (1-slack)*d0`` is the distance floor and ``l_p`` bounds the
    mutual approach speed. Returns 1.0 when the full step is safe.
    """
    x = np.array(x, dtype=np.float64)
    dx = np.asarray(dx, dtype=np.float64)
    q = dx - dx.mean(axis=0)
    norms = np.linalg.norm(q, axis=1)
    if pair_kind == PAIR_PT:
        lp = norms[0] + max(norms[1], norms[2], norms[3])
    elif pair_kind == PAIR_EE:
        lp = max(norms[0], norms[1]) + max(norms[2], norms[3])
    elif pair_kind == PAIR_PE:
        lp = norms[0] + max(norms[1], norms[2])
    else:
        lp = norms[0] + norms[1]
    if lp == 0.0:
        return 1.0

    d0 = np.sqrt(_pair_dist2(x, pair_kind))
    if not d0 > 0.0:
        raise ValueError("additive CCD requires a strictly positive initial distance")
    gap = (1.0 - slack) * d0

    t = 0.0
    for _ in range(max_iter):
        d = np.sqrt(_pair_dist2(x + t * q, pair_kind))
        step = (d - gap) / lp
        if step <= 0.0:
            break
        if t + step >= 1.0:
            return 1.0
        t += step
        if step < 1e-14:
            break
    return t
