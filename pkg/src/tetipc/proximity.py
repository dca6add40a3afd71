"""Contact candidate generation, exact distance classification, and CCD.

Every contact originates from one of two query types: a surface vertex
against a non-incident surface triangle, or two non-adjacent surface edges.
Classification reduces a query to its active branch (down to point-point)
and evaluates the squared distance, its exact gradient and the witness
coordinates of that branch. Near-parallel edge-edge queries are promoted to
dedicated stencil kinds that keep all four vertices for mollification.
"""

import enum
from dataclasses import dataclass

import numpy as np

from . import kernels


class ProximityError(ValueError):
    pass


class DegenerateGeometryError(ProximityError):
    pass


class StencilKind(enum.Enum):
    POINT_POINT = "point-point"
    POINT_EDGE = "point-edge"
    POINT_TRIANGLE = "point-triangle"
    EDGE_EDGE = "edge-edge"
    EDGE_EDGE_PARALLEL = "edge-edge-parallel"
    POINT_EDGE_PARALLEL = "point-edge-parallel"
    POINT_POINT_PARALLEL = "point-point-parallel"


PARALLEL_KINDS = frozenset(
    {StencilKind.EDGE_EDGE_PARALLEL, StencilKind.POINT_EDGE_PARALLEL, StencilKind.POINT_POINT_PARALLEL}
)

# Simplex dimension of the diagonal constraint Jacobian per kind.
SIMPLEX_DIM = {
    StencilKind.POINT_POINT: 1,
    StencilKind.POINT_EDGE: 2,
    StencilKind.POINT_TRIANGLE: 3,
    StencilKind.EDGE_EDGE: 3,
    StencilKind.EDGE_EDGE_PARALLEL: 3,
    StencilKind.POINT_EDGE_PARALLEL: 3,
    StencilKind.POINT_POINT_PARALLEL: 3,
}


@dataclass(frozen=True)
class ContactStencil:
    """A typed contact pair with 2-4 participating vertices.

    For parallel variants ``verts`` keeps all four vertices of the
    originating edge pair (ordered a1, a2, b1, b2), ``eps_x`` the parallel
    tolerance from rest positions, and ``sub`` the local indices of the
    reduced stencil that carries the distance.
    """

    kind: StencilKind
    verts: tuple
    eps_x: float = None
    edge_pair: tuple = None
    sub: tuple = None
    origin: tuple = None

    def __post_init__(self):
        expected = {
            StencilKind.POINT_POINT: 2,
            StencilKind.POINT_EDGE: 3,
            StencilKind.POINT_TRIANGLE: 4,
            StencilKind.EDGE_EDGE: 4,
        }.get(self.kind, 4)
        if len(self.verts) != expected:
            raise ProximityError(f"{self.kind} expects {expected} vertices, got {len(self.verts)}")
        if self.kind in PARALLEL_KINDS and not (self.eps_x and self.eps_x > 0.0):
            raise ProximityError("parallel stencils need eps_x > 0")

    def sort_key(self):
        return (self.kind.value, self.verts, self.origin or ())


@dataclass
class DistanceResult:
    """Squared distance, its gradient and the active-branch witness.

    ``grad_d2`` has one row per stencil vertex and sums to zero over the
    stencil (translation invariance).
    """

    d2: float
    grad_d2: np.ndarray
    witness: np.ndarray


# Local index selections for each point-triangle region code.
_PT_LOCAL = {
    0: (StencilKind.POINT_TRIANGLE, (0, 1, 2, 3)),
    1: (StencilKind.POINT_POINT, (0, 1)),
    2: (StencilKind.POINT_POINT, (0, 2)),
    3: (StencilKind.POINT_POINT, (0, 3)),
    4: (StencilKind.POINT_EDGE, (0, 1, 2)),
    5: (StencilKind.POINT_EDGE, (0, 2, 3)),
    6: (StencilKind.POINT_EDGE, (0, 3, 1)),
}

# Local index selections for each edge-edge region code (3*ra + rb).
_EE_LOCAL = {
    8: (StencilKind.EDGE_EDGE, (0, 1, 2, 3)),
    2: (StencilKind.POINT_EDGE, (0, 2, 3)),
    5: (StencilKind.POINT_EDGE, (1, 2, 3)),
    6: (StencilKind.POINT_EDGE, (2, 0, 1)),
    7: (StencilKind.POINT_EDGE, (3, 0, 1)),
    0: (StencilKind.POINT_POINT, (0, 2)),
    1: (StencilKind.POINT_POINT, (0, 3)),
    3: (StencilKind.POINT_POINT, (1, 2)),
    4: (StencilKind.POINT_POINT, (1, 3)),
}

_PARALLEL_OF = {
    StencilKind.EDGE_EDGE: StencilKind.EDGE_EDGE_PARALLEL,
    StencilKind.POINT_EDGE: StencilKind.POINT_EDGE_PARALLEL,
    StencilKind.POINT_POINT: StencilKind.POINT_POINT_PARALLEL,
}


def classify_point_triangle(p, t1, t2, t3):
    """Classify one point-triangle query.

    Returns ``(kind, local, result)`` where ``local`` are the indices into
    (p, t1, t2, t3) forming the reduced stencil and ``result.grad_d2`` is
    laid out over exactly those vertices.
    """
    p, t1, t2, t3 = (np.asarray(v, dtype=np.float64) for v in (p, t1, t2, t3))
    area2 = float(np.dot(np.cross(t2 - t1, t3 - t1), np.cross(t2 - t1, t3 - t1))) / 4.0
    scale = max(np.linalg.norm(t2 - t1), np.linalg.norm(t3 - t1), np.linalg.norm(t3 - t2), 1e-300)
    if area2 <= 1e-28 * scale**4:
        raise DegenerateGeometryError("degenerate triangle in point-triangle query")
    codes, d2, grad, w = kernels.pt_classify_batch(p[None], t1[None], t2[None], t3[None])
    kind, local = _PT_LOCAL[int(codes[0])]
    res = DistanceResult(d2=float(d2[0]), grad_d2=grad[0][list(local)], witness=w[0])
    return kind, local, res


def classify_edge_edge(a1, a2, b1, b2, eps_x=None):
    """Classify one edge-edge query.

    Returns ``(kind, local, result, c)``. When ``eps_x`` is given and the
    parallelness measure ``c = |ea x eb|^2`` falls below it, the kind is
    promoted to the matching parallel variant; the gradient is then laid out
    over all four vertices with zero rows outside the active branch.
    """
    a1, a2, b1, b2 = (np.asarray(v, dtype=np.float64) for v in (a1, a2, b1, b2))
    if np.dot(a2 - a1, a2 - a1) == 0.0 or np.dot(b2 - b1, b2 - b1) == 0.0:
        raise DegenerateGeometryError("zero-length edge in edge-edge query")
    codes, d2, grad, w = kernels.ee_classify_batch(a1[None], a2[None], b1[None], b2[None])
    cval, _ = kernels.cross_sq_batch(a1[None], a2[None], b1[None], b2[None])
    c = float(cval[0])
    kind, local = _EE_LOCAL[int(codes[0])]
    if eps_x is not None and c < eps_x:
        res = DistanceResult(d2=float(d2[0]), grad_d2=grad[0], witness=w[0])
        return _PARALLEL_OF[kind], local, res, c
    res = DistanceResult(d2=float(d2[0]), grad_d2=grad[0][list(local)], witness=w[0])
    return kind, local, res, c


def _point_edge_eval(p, e1, e2):
    e = e2 - e1
    ee = float(np.dot(e, e))
    if ee == 0.0:
        raise DegenerateGeometryError("zero-length edge in point-edge evaluation")
    t = float(np.dot(p - e1, e)) / ee
    t = min(max(t, 0.0), 1.0)
    r = p - e1 - t * e
    d2 = float(np.dot(r, r))
    grad = np.array([2.0 * r, -2.0 * (1.0 - t) * r, -2.0 * t * r])
    return d2, grad, np.array([t])


def stencil_distance(stencil, positions):
    """Evaluate a stencil's exact pair distance at the given positions.

    The distance is the true minimum over the stencil's primitive pair (its
    own active branch is re-resolved), so it stays continuous while the
    stencil set is frozen across a Newton iteration.
    """
    x = positions[list(stencil.verts)]
    kind = stencil.kind
    if kind is StencilKind.POINT_POINT:
        r = x[0] - x[1]
        d2 = float(np.dot(r, r))
        return DistanceResult(d2=d2, grad_d2=np.array([2.0 * r, -2.0 * r]), witness=np.zeros(0))
    if kind is StencilKind.POINT_EDGE:
        d2, grad, w = _point_edge_eval(x[0], x[1], x[2])
        return DistanceResult(d2=d2, grad_d2=grad, witness=w)
    if kind is StencilKind.POINT_TRIANGLE:
        codes, d2, grad, w = kernels.pt_classify_batch(x[0][None], x[1][None], x[2][None], x[3][None])
        return DistanceResult(d2=float(d2[0]), grad_d2=grad[0], witness=w[0])
    if kind is StencilKind.EDGE_EDGE:
        codes, d2, grad, w = kernels.ee_classify_batch(x[0][None], x[1][None], x[2][None], x[3][None])
        return DistanceResult(d2=float(d2[0]), grad_d2=grad[0], witness=w[0])

    # Parallel variants: distance lives on the reduced sub-stencil, padded
    # back to the full four-vertex layout.
    sub = stencil.sub
    xs = x[list(sub)]
    if stencil.kind is StencilKind.EDGE_EDGE_PARALLEL:
        codes, d2, grad, w = kernels.ee_classify_batch(xs[0][None], xs[1][None], xs[2][None], xs[3][None])
        d2, grad, w = float(d2[0]), grad[0], w[0]
    elif stencil.kind is StencilKind.POINT_EDGE_PARALLEL:
        d2, grad, w = _point_edge_eval(xs[0], xs[1], xs[2])
    else:
        r = xs[0] - xs[1]
        d2 = float(np.dot(r, r))
        grad, w = np.array([2.0 * r, -2.0 * r]), np.zeros(0)
    full = np.zeros((4, 3))
    for row, loc in enumerate(sub):
        full[loc] = grad[row]
    return DistanceResult(d2=d2, grad_d2=full, witness=w)


def parallel_measure(stencil, positions):
    """Parallelness measure c and its gradient for a parallel stencil."""
    x = positions[list(stencil.verts)]
    cval, cgrad = kernels.cross_sq_batch(x[0][None], x[1][None], x[2][None], x[3][None])
    return float(cval[0]), cgrad[0]


def _aabb_overlap_pairs(lo_a, hi_a, lo_b, hi_b):
    """Indices (i, j) of overlapping boxes between two box sets."""
    na, nb = lo_a.shape[0], lo_b.shape[0]
    if na == 0 or nb == 0:
        return np.zeros((0, 2), dtype=np.int64)
    out = []
    chunk = max(1, int(4e6) // max(nb, 1))
    for start in range(0, na, chunk):
        sl = slice(start, min(start + chunk, na))
        ok = np.ones((sl.stop - sl.start, nb), dtype=bool)
        for k in range(3):
            ok &= lo_a[sl, k : k + 1] <= hi_b[None, :, k]
            ok &= lo_b[None, :, k] <= hi_a[sl, k : k + 1]
        ii, jj = np.nonzero(ok)
        if ii.size:
            out.append(np.stack([ii + start, jj], axis=1))
    return np.vstack(out) if out else np.zeros((0, 2), dtype=np.int64)


def edge_parallel_eps(rest_positions, edge_a, edge_b):
    """Parallel-promotion tolerance from rest positions.

    1e-3 times the product of squared rest edge lengths, all in m^4 like
    the parallelness measure itself.
    """
    la = rest_positions[edge_a[1]] - rest_positions[edge_a[0]]
    lb = rest_positions[edge_b[1]] - rest_positions[edge_b[0]]
    return 1e-3 * float(np.dot(la, la)) * float(np.dot(lb, lb))


def find_contact_pairs(scene, positions, d_hat, promote_parallel=True):
    """All contact stencils closer than ``d_hat`` at the given positions.

    Point-triangle queries run between every surface vertex and every
    non-incident surface triangle, edge-edge queries between non-adjacent
    surface edges; each query contributes at most one stencil (its reduced
    classification). Output is sorted by index tuple so runs are
    reproducible.
    """
    tris = scene.surf_tris
    edges = scene.surf_edges
    verts = scene.surf_verts
    stencils = []

    if verts.size and tris.size:
        p = positions[verts]
        t1, t2, t3 = positions[tris[:, 0]], positions[tris[:, 1]], positions[tris[:, 2]]
        lo_v, hi_v = p - d_hat, p + d_hat
        tri_stack = np.stack([t1, t2, t3], axis=1)
        lo_t, hi_t = tri_stack.min(axis=1), tri_stack.max(axis=1)
        pairs = _aabb_overlap_pairs(lo_v, hi_v, lo_t, hi_t)
        if pairs.size:
            vid = verts[pairs[:, 0]]
            tv = tris[pairs[:, 1]]
            keep = (vid != tv[:, 0]) & (vid != tv[:, 1]) & (vid != tv[:, 2])
            vid, tv = vid[keep], tv[keep]
            if vid.size:
                codes, d2, grad, w = kernels.pt_classify_batch(
                    positions[vid], positions[tv[:, 0]], positions[tv[:, 1]], positions[tv[:, 2]]
                )
                near = d2 < d_hat * d_hat
                for qi in np.flatnonzero(near):
                    kind, local = _PT_LOCAL[int(codes[qi])]
                    gids = (int(vid[qi]), int(tv[qi, 0]), int(tv[qi, 1]), int(tv[qi, 2]))
                    stencils.append(
                        ContactStencil(
                            kind=kind,
                            verts=tuple(gids[k] for k in local),
                            origin=("vt",) + gids,
                        )
                    )

    if edges.shape[0] > 1:
        e1, e2 = positions[edges[:, 0]], positions[edges[:, 1]]
        lo_e = np.minimum(e1, e2) - d_hat * 0.5
        hi_e = np.maximum(e1, e2) + d_hat * 0.5
        pairs = _aabb_overlap_pairs(lo_e, hi_e, lo_e, hi_e)
        if pairs.size:
            pairs = pairs[pairs[:, 0] < pairs[:, 1]]
            ea = edges[pairs[:, 0]]
            eb = edges[pairs[:, 1]]
            keep = (
                (ea[:, 0] != eb[:, 0])
                & (ea[:, 0] != eb[:, 1])
                & (ea[:, 1] != eb[:, 0])
                & (ea[:, 1] != eb[:, 1])
            )
            ea, eb = ea[keep], eb[keep]
            if ea.size:
                codes, d2, grad, w = kernels.ee_classify_batch(
                    positions[ea[:, 0]], positions[ea[:, 1]], positions[eb[:, 0]], positions[eb[:, 1]]
                )
                cvals, _ = kernels.cross_sq_batch(
                    positions[ea[:, 0]], positions[ea[:, 1]], positions[eb[:, 0]], positions[eb[:, 1]]
                )
                near = d2 < d_hat * d_hat
                for qi in np.flatnonzero(near):
                    kind, local = _EE_LOCAL[int(codes[qi])]
                    gids = (int(ea[qi, 0]), int(ea[qi, 1]), int(eb[qi, 0]), int(eb[qi, 1]))
                    eps = edge_parallel_eps(scene.rest_positions, ea[qi], eb[qi])
                    if promote_parallel and cvals[qi] < eps:
                        stencils.append(
                            ContactStencil(
                                kind=_PARALLEL_OF[kind],
                                verts=gids,
                                eps_x=eps,
                                edge_pair=(tuple(int(v) for v in ea[qi]), tuple(int(v) for v in eb[qi])),
                                sub=local,
                                origin=("ee",) + gids,
                            )
                        )
                    else:
                        stencils.append(
                            ContactStencil(
                                kind=kind,
                                verts=tuple(gids[k] for k in local),
                                origin=("ee",) + gids,
                            )
                        )

    # One stencil per originating query: identical reduced stencils coming
    # from distinct queries stay separate barrier terms, which keeps the
    # total barrier energy continuous across active-set transitions.
    unique = {}
    for s in stencils:
        unique.setdefault(s.origin or (s.kind, s.verts), s)
    return sorted(unique.values(), key=lambda s: s.sort_key())


_PAIR_OF_KIND = {
    StencilKind.POINT_TRIANGLE: kernels.PAIR_PT,
    StencilKind.EDGE_EDGE: kernels.PAIR_EE,
    StencilKind.EDGE_EDGE_PARALLEL: kernels.PAIR_EE,
    StencilKind.POINT_EDGE_PARALLEL: kernels.PAIR_EE,
    StencilKind.POINT_POINT_PARALLEL: kernels.PAIR_EE,
    StencilKind.POINT_EDGE: kernels.PAIR_PE,
    StencilKind.POINT_POINT: kernels.PAIR_PP,
}


def accd_step_bound(stencil, positions, directions, slack=0.9, max_iter=512):
    """Largest verified step fraction keeping the stencil's distance positive.

    Guarantees distance >= (1-slack) times the current distance along the
    whole sub-step. Raises if the current distance is not positive.
    """
    if not 0.0 < slack < 1.0:
        raise ProximityError("slack must lie in (0, 1)")
    ids = list(stencil.verts)
    x = positions[ids]
    dx = directions[ids]
    pair = _PAIR_OF_KIND[stencil.kind]
    return kernels.accd_max_step(x, dx, pair, slack, max_iter)


def sweep_candidates(scene, positions, directions, d_hat):
    """Query pairs whose swept AABBs (position plus full step) overlap."""
    end = positions + directions
    cands = []

    verts, tris, edges = scene.surf_verts, scene.surf_tris, scene.surf_edges
    margin = 1e-3 * d_hat
    if verts.size and tris.size:
        lo_v = np.minimum(positions[verts], end[verts]) - margin
        hi_v = np.maximum(positions[verts], end[verts]) + margin
        tri0 = np.stack([positions[tris[:, k]] for k in range(3)], axis=1)
        tri1 = np.stack([end[tris[:, k]] for k in range(3)], axis=1)
        lo_t = np.minimum(tri0.min(axis=1), tri1.min(axis=1)) - margin
        hi_t = np.maximum(tri0.max(axis=1), tri1.max(axis=1)) + margin
        pairs = _aabb_overlap_pairs(lo_v, hi_v, lo_t, hi_t)
        for i, j in pairs:
            vid = int(verts[i])
            tv = tris[j]
            if vid in (int(tv[0]), int(tv[1]), int(tv[2])):
                continue
            cands.append((kernels.PAIR_PT, (vid, int(tv[0]), int(tv[1]), int(tv[2]))))
    if edges.shape[0] > 1:
        e0 = np.stack([positions[edges[:, 0]], positions[edges[:, 1]]], axis=1)
        e1 = np.stack([end[edges[:, 0]], end[edges[:, 1]]], axis=1)
        lo_e = np.minimum(e0.min(axis=1), e1.min(axis=1)) - margin
        hi_e = np.maximum(e0.max(axis=1), e1.max(axis=1)) + margin
        pairs = _aabb_overlap_pairs(lo_e, hi_e, lo_e, hi_e)
        for i, j in pairs:
            if i >= j:
                continue
            ea, eb = edges[i], edges[j]
            if len({int(ea[0]), int(ea[1]), int(eb[0]), int(eb[1])}) < 4:
                continue
            cands.append((kernels.PAIR_EE, (int(ea[0]), int(ea[1]), int(eb[0]), int(eb[1]))))
    return cands


def global_ccd_filter(scene, positions, directions, candidates, slack=0.9, max_iter=512):
    """Step bound over every candidate pair: min of the per-pair ACCD bounds."""
    alpha = 1.0
    for pair, ids in candidates:
        ids = list(ids)
        a = kernels.accd_max_step(positions[ids], directions[ids], pair, slack, max_iter)
        if a < alpha:
            alpha = a
    return alpha
