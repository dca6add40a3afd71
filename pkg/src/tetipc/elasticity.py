"""Stable neo-Hookean volumetric FEM energy with numerically projected Hessian.

Energy density Psi = mu/2 (tr(F^T F) - 3) + lam/2 (J - a)^2 with
a = 1 + mu/lam: defined for inverted elements, zero gradient at rest.
Per-tet Hessians are projected PSD by eigendecomposition of the 9x9
dPsi/dF^2 before the change of basis to vertex coordinates. All heavy
paths are batched over tets.

Vectorization of 3x3 matrices is column-major throughout.
"""

from dataclasses import dataclass, field

import numpy as np

from .barrier import LocalQuadratic


@dataclass
class ElasticMaterial:
    youngs_E: float
    poisson_nu: float
    lame_mu: float = field(init=False)
    lame_lambda: float = field(init=False)

    def __post_init__(self):
        if self.youngs_E <= 0.0 or not 0.0 < self.poisson_nu < 0.5:
            raise ValueError("need E > 0 and nu in (0, 0.5)")
        e, nu = self.youngs_E, self.poisson_nu
        self.lame_mu = e / (2.0 * (1.0 + nu))
        self.lame_lambda = e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))


def _vec(mats):
    """Column-major vectorization, batched: (..., 3, 3) -> (..., 9)."""
    return np.swapaxes(mats, -1, -2).reshape(*mats.shape[:-2], 9)


def rest_data(rest_positions, tets):
    """Inverse rest-shape matrices, volumes, and dvec(F)/dx maps per tet."""
    v = rest_positions
    dm = np.stack(
        [v[tets[:, 1]] - v[tets[:, 0]], v[tets[:, 2]] - v[tets[:, 0]], v[tets[:, 3]] - v[tets[:, 0]]],
        axis=2,
    )
    vols = np.linalg.det(dm) / 6.0
    rest_inv = np.linalg.inv(dm)

    t = tets.shape[0]
    g = np.zeros((t, 9, 12))
    for c in range(3):
        for vtx in range(4):
            w = -rest_inv[:, :, c].sum(axis=1) if vtx == 0 else rest_inv[:, vtx - 1, c]
            for i in range(3):
                g[:, 3 * c + i, 3 * vtx + i] = w
    return rest_inv, vols, g


def deformation_gradients(positions, tets, rest_inv):
    v = positions
    ds = np.stack(
        [v[tets[:, 1]] - v[tets[:, 0]], v[tets[:, 2]] - v[tets[:, 0]], v[tets[:, 3]] - v[tets[:, 0]]],
        axis=2,
    )
    return ds @ rest_inv


def _det_gradient(f):
    """dJ/dF: cofactor columns, batched."""
    f0, f1, f2 = f[:, :, 0], f[:, :, 1], f[:, :, 2]
    return np.stack([np.cross(f1, f2), np.cross(f2, f0), np.cross(f0, f1)], axis=2)


def _skew(v):
    t = v.shape[0]
    s = np.zeros((t, 3, 3))
    s[:, 0, 1] = -v[:, 2]
    s[:, 0, 2] = v[:, 1]
    s[:, 1, 0] = v[:, 2]
    s[:, 1, 2] = -v[:, 0]
    s[:, 2, 0] = -v[:, 1]
    s[:, 2, 1] = v[:, 0]
    return s


def _det_hessian(f):
    """d2J/dF2 as a batched 9x9 in column-major vec layout."""
    t = f.shape[0]
    f0h, f1h, f2h = _skew(f[:, :, 0]), _skew(f[:, :, 1]), _skew(f[:, :, 2])
    h = np.zeros((t, 9, 9))
    h[:, 0:3, 3:6] = -f2h
    h[:, 0:3, 6:9] = f1h
    h[:, 3:6, 0:3] = f2h
    h[:, 3:6, 6:9] = -f0h
    h[:, 6:9, 0:3] = -f1h
    h[:, 6:9, 3:6] = f0h
    return h


def batch_energy(f, mu, lam):
    j = np.linalg.det(f)
    alpha = 1.0 + mu / lam
    ic = np.einsum("tij,tij->t", f, f)
    return 0.5 * mu * (ic - 3.0) + 0.5 * lam * (j - alpha) ** 2


def batch_piola(f, mu, lam):
    j = np.linalg.det(f)
    alpha = 1.0 + mu / lam
    gj = _det_gradient(f)
    return mu[:, None, None] * f + (lam * (j - alpha))[:, None, None] * gj


def batch_f_hessian(f, mu, lam, project=True):
    """Batched 9x9 dPsi/dF^2, PSD-projected unless disabled."""
    t = f.shape[0]
    j = np.linalg.det(f)
    alpha = 1.0 + mu / lam
    gj = _vec(_det_gradient(f))
    h = mu[:, None, None] * np.eye(9)[None] + lam[:, None, None] * np.einsum("ti,tj->tij", gj, gj)
    h += (lam * (j - alpha))[:, None, None] * _det_hessian(f)
    if not project:
        return h
    w, q = np.linalg.eigh(h)
    w = np.maximum(w, 0.0)
    return np.einsum("tik,tk,tjk->tij", q, w, q)


def batch_grad_hess(positions, tets, rest_inv, vols, g_maps, mu, lam, project=True):
    """Per-tet energy, 12-gradient, and PSD 12x12 Hessian (volume-scaled)."""
    f = deformation_gradients(positions, tets, rest_inv)
    e = batch_energy(f, mu, lam) * vols
    p = _vec(batch_piola(f, mu, lam))
    grad = vols[:, None] * np.einsum("tki,tk->ti", g_maps, p)
    h9 = batch_f_hessian(f, mu, lam, project=project)
    hess = vols[:, None, None] * np.einsum("tki,tkl,tlj->tij", g_maps, h9, g_maps)
    return e, grad, hess


def tet_energy_grad_hess(rest_inv, positions, material, project=True):
    """Single-tet energy, exact gradient, and projected 12x12 Hessian.

    ``positions`` holds the four vertices as rows; the rest volume is
    recovered from ``rest_inv``.
    """
    rest_inv = np.asarray(rest_inv, dtype=np.float64)[None]
    x = np.asarray(positions, dtype=np.float64)
    vol = np.array([1.0 / (6.0 * np.linalg.det(rest_inv[0]))])
    tets = np.array([[0, 1, 2, 3]])
    g = np.zeros((1, 9, 12))
    for c in range(3):
        for vtx in range(4):
            w = -rest_inv[0, :, c].sum() if vtx == 0 else rest_inv[0, vtx - 1, c]
            for i in range(3):
                g[0, 3 * c + i, 3 * vtx + i] = w
    mu = np.array([material.lame_mu])
    lam = np.array([material.lame_lambda])
    e, grad, hess = batch_grad_hess(x, tets, rest_inv, vol, g, mu, lam, project=project)
    return float(e[0]), grad[0], hess[0]


def tet_local_quadratic(vert_ids, grad, hess):
    return LocalQuadratic(vert_ids=np.asarray(vert_ids, dtype=np.int64), grad=grad, hess=hess)
