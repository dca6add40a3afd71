"""Diagonal constraint Jacobian, gap function, and the explicit-shape oracle.

The production path never assembles shape matrices: the contact state is
carried by the two varying diagonal entries ``f = d / d_hat`` and (for
nearly-parallel edge stencils) ``sqrt(c)``, together with their exact
position gradients. The explicit current/ideal shape construction exists
only as a cross-check that the diagonal determinant matches ``d / d_hat``.
"""

from dataclasses import dataclass

import numpy as np

from .proximity import (
    PARALLEL_KINDS,
    SIMPLEX_DIM,
    StencilKind,
    parallel_measure,
    stencil_distance,
)


class GapError(ValueError):
    pass


class BarrierInactiveError(GapError):
    """Distance at or beyond d_hat: the stencil should have been culled."""


class InterpenetrationError(GapError):
    """Zero or negative squared distance: the state is already invalid."""


@dataclass
class DiagonalJacobian:
    """Reduced representation of the per-contact constraint Jacobian.

    ``grad_f`` rows follow the stencil's vertex layout; they sum to zero.
    The sqrt(c) channel is present only for parallel edge-edge variants.
    """

    m: int
    f: float
    grad_f: np.ndarray
    sqrt_c: float = None
    grad_sqrt_c: np.ndarray = None


@dataclass
class GapValue:
    g: float
    gamma: float = None


def build_diagonal_jacobian(stencil, positions, d_hat, dist=None):
    """Evaluate f, sqrt(c) and their gradients for an active stencil."""
    if dist is None:
        dist = stencil_distance(stencil, positions)
    d2 = dist.d2
    if d2 <= 0.0:
        raise InterpenetrationError(f"nonpositive squared distance on stencil {stencil.verts}")
    if d2 >= d_hat * d_hat:
        raise BarrierInactiveError(f"stencil {stencil.verts} is farther than d_hat")
    d = np.sqrt(d2)
    f = d / d_hat
    grad_f = dist.grad_d2 / (2.0 * d * d_hat)

    sqrt_c = None
    grad_sqrt_c = None
    if stencil.kind in PARALLEL_KINDS:
        c, grad_c = parallel_measure(stencil, positions)
        sqrt_c = np.sqrt(c)
        if sqrt_c > 0.0:
            grad_sqrt_c = grad_c / (2.0 * sqrt_c)
        else:
            # Exactly parallel: the gamma channel vanishes smoothly with
            # the mollifier, so its gradient is defined as zero here.
            grad_sqrt_c = np.zeros_like(grad_c)
    return DiagonalJacobian(
        m=SIMPLEX_DIM[stencil.kind], f=f, grad_f=grad_f, sqrt_c=sqrt_c, grad_sqrt_c=grad_sqrt_c
    )


def gap_function(jac):
    """g = f^2, and gamma = c for the mollified channel when present."""
    gamma = None if jac.sqrt_c is None else jac.sqrt_c * jac.sqrt_c
    return GapValue(g=jac.f * jac.f, gamma=gamma)


def sigma_matrix(jac):
    """The explicit diagonal factor, for tests against the reduced path."""
    if jac.sqrt_c is not None:
        return np.diag([1.0, jac.sqrt_c, jac.f])
    if jac.m == 3:
        return np.diag([1.0, 1.0, jac.f])
    if jac.m == 2:
        return np.diag([1.0, jac.f])
    return np.array([[jac.f]])


def _align_to_y(n):
    """Rotation taking unit vector n to (0, 1, 0) (reflection pair form)."""
    b = np.array([0.0, 1.0, 0.0])
    pb = n + b
    denom = float(np.dot(pb, pb))
    if denom < 1e-12:
        return np.diag([-1.0, -1.0, 1.0])
    return 2.0 * np.outer(pb, pb) / denom - np.eye(3)


def explicit_jacobian_oracle(stencil, positions, d_hat):
    """Reference constraint Jacobian F = E * inv(Ebar) from explicit shapes.

    The ideal shape duplicates one side of the pair and shifts it along the
    contact normal so the gap widens to d_hat; the normal is oriented from
    the unshifted primitive toward the shifted one so the shift opens
    rather than closes the gap. Intended for configurations whose closest
    pair realizes the stencil kind (e.g. an interior projection for
    point-triangle). Test oracle, not a production path.
    """
    x = positions[list(stencil.verts)]
    kind = stencil.kind

    if kind is StencilKind.POINT_TRIANGLE:
        p, t1, t2, t3 = x
        n = np.cross(t2 - t1, t3 - t1)
        n = n / np.linalg.norm(n)
        if np.dot(p - t1, n) < 0.0:
            n = -n
        d = float(np.dot(p - t1, n))
        xbar_p = p + (d_hat - d) * n
        e_cur = np.stack([t1 - p, t2 - p, t3 - p], axis=1)
        e_ideal = np.stack([t1 - xbar_p, t2 - xbar_p, t3 - xbar_p], axis=1)
        _check_invertible(e_ideal)
        return e_cur @ np.linalg.inv(e_ideal)

    if kind is StencilKind.EDGE_EDGE:
        a1, a2, b1, b2 = x
        n = np.cross(a2 - a1, b2 - b1)
        norm = np.linalg.norm(n)
        if norm == 0.0:
            raise GapError("explicit edge-edge construction needs non-parallel edges")
        n = n / norm
        if np.dot(b1 - a1, n) < 0.0:
            n = -n
        d = float(np.dot(b1 - a1, n))
        shift = (d_hat - d) * n
        e_cur = np.stack([a2 - a1, b1 - a1, b2 - a1], axis=1)
        e_ideal = np.stack([a2 - a1, b1 + shift - a1, b2 + shift - a1], axis=1)
        _check_invertible(e_ideal)
        return e_cur @ np.linalg.inv(e_ideal)

    if kind is StencilKind.POINT_EDGE:
        p, e1, e2 = x
        nt = np.cross(e1 - p, e2 - p)
        norm = np.linalg.norm(nt)
        if norm == 0.0:
            raise GapError("explicit point-edge construction needs a non-collinear triple")
        nt = nt / norm
        ne = np.cross(e1 - e2, nt)
        ne = ne / np.linalg.norm(ne)
        if np.dot(p - e1, ne) < 0.0:
            ne = -ne
        d = float(np.dot(p - e1, ne))
        rot = _align_to_y(nt)
        k = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
        proj = k @ rot
        xbar_p = proj @ (p + (d_hat - d) * ne)
        e_cur = np.stack([e1 - p, e2 - p], axis=1)
        e_ideal = np.stack([proj @ e1 - xbar_p, proj @ e2 - xbar_p], axis=1)
        _check_invertible(e_ideal)
        return e_cur @ np.linalg.inv(e_ideal)

    if kind is StencilKind.POINT_POINT:
        x1, x2 = x
        v = x1 - x2
        d = float(np.linalg.norm(v))
        if d == 0.0:
            raise GapError("coincident points in explicit point-point construction")
        n = v / d
        rot = _align_to_y(n)
        proj = rot[1]  # y row extracts the aligned component
        xbar_1 = float(proj @ (x1 + (d_hat - d) * n))
        xbar_2 = float(proj @ x2)
        ebar = xbar_2 - xbar_1
        if ebar == 0.0:
            raise GapError("degenerate ideal shape in point-point construction")
        return ((x2 - x1) / ebar).reshape(3, 1)

    raise GapError(f"explicit construction is defined for plain kinds, not {kind}")


def _check_invertible(mat):
    if mat.shape[0] == mat.shape[1]:
        if abs(np.linalg.det(mat)) < 1e-300:
            raise GapError("singular ideal shape matrix")
    else:
        gram = mat.T @ mat
        if np.linalg.det(gram) <= 0.0:
            raise GapError("singular ideal shape matrix")


def jacobian_determinant(f_mat):
    """Product of singular values: det for square F, sqrt(det(F^T F)) otherwise."""
    if f_mat.shape[0] == f_mat.shape[1]:
        return float(np.linalg.det(f_mat))
    return float(np.sqrt(max(np.linalg.det(f_mat.T @ f_mat), 0.0)))
