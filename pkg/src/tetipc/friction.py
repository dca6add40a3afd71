"""Lagged smooth Coulomb friction: potential, force, and PSD Hessian.

The normal force magnitude and the tangential basis are frozen from the
previous time step, which makes the per-step friction potential
well-defined. The Hessian projection reduces to an analytic 2x2
eigendecomposition in the tangent plane.
"""

from dataclasses import dataclass

import numpy as np

from .barrier import LocalQuadratic
from .proximity import StencilKind, stencil_distance


@dataclass
class FrictionDatum:
    """Per-contact lagged friction state.

    ``basis_T`` maps stacked stencil displacements (3s,) to the 2-vector of
    tangential relative motion; its columns are orthonormal.
    """

    stencil: object
    lambda_n: float
    basis_T: np.ndarray
    mu: float
    eps_v: float
    dt: float


def f0_f1(u_norm, eps_v, dt):
    """Smoothing pair: f1 ramps 0 -> 1 over (0, dt*eps_v), f0 = int f1.

    The antiderivative constant makes f0(dt*eps_v) = dt*eps_v so the
    potential joins the sliding branch f0(u) = u continuously.
    """
    h = dt * eps_v
    if u_norm >= h:
        return float(u_norm), 1.0, 0.0
    f1 = -u_norm * u_norm / (h * h) + 2.0 * u_norm / h
    f1p = -2.0 * u_norm / (h * h) + 2.0 / h
    f0 = -u_norm**3 / (3.0 * h * h) + u_norm * u_norm / h + h / 3.0
    return float(f0), float(f1), float(f1p)


def potential(datum, u):
    unorm = float(np.linalg.norm(u))
    f0, _, _ = f0_f1(unorm, datum.eps_v, datum.dt)
    return datum.mu * datum.lambda_n * f0


def friction_force(datum, u):
    """Stacked per-vertex friction force; zero in the u -> 0 limit."""
    unorm = float(np.linalg.norm(u))
    if unorm == 0.0:
        return np.zeros(datum.basis_T.shape[0])
    _, f1, _ = f0_f1(unorm, datum.eps_v, datum.dt)
    return -datum.mu * datum.lambda_n * f1 / unorm * (datum.basis_T @ u)


def friction_hessian_psd(datum, u):
    """PSD-projected friction Hessian expanded through the sliding basis.

    The 2x2 core has closed-form eigenpairs: f1' along u and f1/|u| across
    it; negative roots clamp to zero. At u = 0 the core is isotropic.
    """
    unorm = float(np.linalg.norm(u))
    if unorm == 0.0:
        core = (2.0 / (datum.eps_v * datum.dt)) * np.eye(2)
    else:
        _, f1, f1p = f0_f1(unorm, datum.eps_v, datum.dt)
        uhat = np.asarray(u, dtype=np.float64) / unorm
        along = max(f1p, 0.0)
        across = max(f1 / unorm, 0.0)
        outer = np.outer(uhat, uhat)
        core = along * outer + across * (np.eye(2) - outer)
    hess = datum.mu * datum.lambda_n * datum.basis_T @ core @ datum.basis_T.T
    return LocalQuadratic(
        vert_ids=np.asarray(datum.stencil.verts, dtype=np.int64),
        grad=np.zeros(hess.shape[0]),
        hess=hess,
    )


def _witness_coefficients(stencil, dist):
    """Per-vertex relative-motion weights (+ on side A, - on side B)."""
    kind = stencil.kind
    w = dist.witness
    if kind is StencilKind.POINT_POINT:
        return np.array([1.0, -1.0]), (0,)
    if kind is StencilKind.POINT_EDGE:
        t = float(w[0])
        return np.array([1.0, -(1.0 - t), -t]), (0,)
    if kind is StencilKind.POINT_TRIANGLE:
        w1, w2 = float(w[0]), float(w[1])
        return np.array([1.0, -(1.0 - w1 - w2), -w1, -w2]), (0,)
    if kind is StencilKind.EDGE_EDGE:
        s, t = float(w[0]), float(w[1])
        return np.array([1.0 - s, s, -(1.0 - t), -t]), (0, 1)

    # Parallel variants: weights live on the reduced sub-stencil.
    coeffs = np.zeros(4)
    sub = stencil.sub
    if stencil.kind is StencilKind.EDGE_EDGE_PARALLEL:
        s, t = float(w[0]), float(w[1])
        local = np.array([1.0 - s, s, -(1.0 - t), -t])
    elif stencil.kind is StencilKind.POINT_EDGE_PARALLEL:
        t = float(w[0])
        local = np.array([1.0, -(1.0 - t), -t])
    else:
        local = np.array([1.0, -1.0])
    for row, loc in enumerate(sub):
        coeffs[loc] = local[row]
    side_a = tuple(loc for row, loc in enumerate(sub) if local[row] > 0.0)
    return coeffs, side_a


def _tangent_frame(normal):
    ref = np.zeros(3)
    ref[int(np.argmin(np.abs(normal)))] = 1.0
    t1 = np.cross(normal, ref)
    t1 /= np.linalg.norm(t1)
    t2 = np.cross(normal, t1)
    return t1, t2


def build_basis(stencil, dist):
    """Orthonormal sliding basis from the contact normal and witness weights."""
    coeffs, side_a = _witness_coefficients(stencil, dist)
    one_sided = dist.grad_d2[list(side_a)].sum(axis=0)
    d = np.sqrt(dist.d2)
    normal = one_sided / (2.0 * d)
    nn = np.linalg.norm(normal)
    if nn == 0.0:
        raise ValueError("undefined contact normal for friction basis")
    normal /= nn
    t1, t2 = _tangent_frame(normal)
    s = coeffs.shape[0]
    basis = np.zeros((3 * s, 2))
    for v in range(s):
        basis[3 * v : 3 * v + 3, 0] = coeffs[v] * t1
        basis[3 * v : 3 * v + 3, 1] = coeffs[v] * t2
    basis /= np.linalg.norm(coeffs)
    return basis, side_a


def update_friction_state(stencils, barrier_gradients, positions, mu, eps_v, dt):
    """Lagged friction data from the end-of-step contact set.

    ``lambda_n`` is the norm of one side's summed barrier-force
    contribution (the contact-normal component; the sides balance by
    translation invariance). Refreshed once per time step.
    """
    data = []
    if mu <= 0.0:
        return data
    for stencil, grad in zip(stencils, barrier_gradients):
        dist = stencil_distance(stencil, positions)
        if dist.d2 <= 0.0:
            continue
        basis, side_a = build_basis(stencil, dist)
        gmat = np.asarray(grad, dtype=np.float64).reshape(-1, 3)
        lam = float(np.linalg.norm(gmat[list(side_a)].sum(axis=0)))
        if lam <= 0.0:
            continue
        data.append(
            FrictionDatum(stencil=stencil, lambda_n=lam, basis_T=basis, mu=mu, eps_v=eps_v, dt=dt)
        )
    return data


def tangential_displacement(datum, positions, positions_start):
    """u = T^T (x - x_start) gathered over the stencil vertices."""
    ids = list(datum.stencil.verts)
    rel = (positions[ids] - positions_start[ids]).reshape(-1)
    return datum.basis_T.T @ rel
