"""Barrier energy on the gap function, with analytic PSD Hessian blocks.

The production barrier is the quadratic-log form
``kappa * (d_hat^2 - d_hat^2 g)^2 * ln(g)^2`` with ``g = (d/d_hat)^2``.
Its force Jacobian keeps a single analytic eigenpair, filtered at a
proximal limit to stop Newton displacements from vanishing as g -> 0.
A single-log variant and a distance-based reference barrier with numeric
projection are carried alongside as diagnostics and oracle paths.

All scalar functions accept NumPy arrays and broadcast.
"""

from dataclasses import dataclass

import numpy as np

from .proximity import PARALLEL_KINDS, stencil_distance

FORM_QLOG = "qlog"  # production: squared log term
FORM_LOG = "log"    # diagnostic single-log variant


@dataclass
class BarrierParams:
    """Barrier stiffness and activation thresholds.

    ``d_thr = d_thr_ratio * d_hat`` freezes the primary eigenvalue below
    the proximal limit ``eps_g = d_thr_ratio^2``. ``kappa`` is a fixed
    scene parameter; there is no adaptive update (``set_stiffness`` hook
    left for extension).
    """

    d_hat: float
    kappa: float = 1e5
    d_thr_ratio: float = 0.1
    use_filter: bool = True
    form: str = FORM_QLOG

    def __post_init__(self):
        if not 0.0 < self.d_thr_ratio < 1.0:
            raise ValueError("d_thr_ratio must lie in (0, 1)")
        if self.d_hat <= 0.0 or self.kappa <= 0.0:
            raise ValueError("d_hat and kappa must be positive")
        if self.form not in (FORM_QLOG, FORM_LOG):
            raise ValueError(f"unknown barrier form {self.form!r}")

    @property
    def d_thr(self):
        return self.d_thr_ratio * self.d_hat

    @property
    def eps_g(self):
        return self.d_thr_ratio * self.d_thr_ratio


@dataclass
class LocalEigenSystem:
    """(eigenvalue, vectorized eigenmatrix) pairs of a local J-space Hessian."""

    pairs: list


@dataclass
class LocalQuadratic:
    """Per-stencil PSD force-Jacobian block with its gradient.

    ``vert_ids`` are global vertex indices; ``grad`` and ``hess`` are laid
    out in 3-vectors per vertex, in that order.
    """

    vert_ids: np.ndarray
    grad: np.ndarray
    hess: np.ndarray


def barrier_value(g, params):
    """Energy of the active barrier at gap value g in (0, 1)."""
    g = np.asarray(g, dtype=np.float64)
    scale = params.kappa * params.d_hat**4
    lg = np.log(g)
    if params.form == FORM_QLOG:
        return scale * (1.0 - g) ** 2 * lg * lg
    return -scale * (1.0 - g) ** 2 * lg


def barrier_dg(g, params):
    g = np.asarray(g, dtype=np.float64)
    scale = params.kappa * params.d_hat**4
    lg = np.log(g)
    if params.form == FORM_QLOG:
        return scale * (-2.0 * (1.0 - g) * lg * lg + 2.0 * (1.0 - g) ** 2 * lg / g)
    return scale * (2.0 * (1.0 - g) * lg - (1.0 - g) ** 2 / g)


def barrier_d2g(g, params):
    g = np.asarray(g, dtype=np.float64)
    scale = params.kappa * params.d_hat**4
    lg = np.log(g)
    if params.form == FORM_QLOG:
        return scale * (2.0 * lg * lg - 8.0 * (1.0 - g) * lg / g + 2.0 * (1.0 - g) ** 2 * (1.0 - lg) / g**2)
    return scale * (-2.0 * lg + (1.0 - g) * (3.0 * g + 1.0) / g**2)


def lambda1(g, params):
    """Primary (only ever positive) eigenvalue: 4g b_gg + 2 b_g."""
    return 4.0 * np.asarray(g) * barrier_d2g(g, params) + 2.0 * barrier_dg(g, params)


def lambda23(g, params):
    """Degenerate pair 2 b_g; nonpositive on (0, 1)."""
    return 2.0 * barrier_dg(g, params)


def filtered_lambda1(g, params):
    """lambda1 frozen at its proximal-limit value for g below eps_g."""
    lam = lambda1(g, params)
    if not params.use_filter:
        return lam
    lam_thr = lambda1(params.eps_g, params)
    return np.where(np.asarray(g) >= params.eps_g, lam, lam_thr)


def single_log_lambda1_expanded(g, d_hat, kappa=1.0):
    """Closed-form expansion of lambda1 for the single-log barrier.

    Cross-check only; must agree with the chain-rule form through
    ``barrier_dg``/``barrier_d2g`` on the log form. The polynomial part is
    kept factored through (1 - g) so the expression stays accurate at the
    g -> 1 endpoint.
    """
    g = np.asarray(g, dtype=np.float64)
    lg = np.log(g)
    return kappa * 2.0 * d_hat**4 * ((1.0 - g) * (7.0 * g + 1.0) + 2.0 * g * (1.0 - 3.0 * g) * lg) / g


def single_log_lambda23_expanded(g, d_hat, kappa=1.0):
    """Closed-form expansion of lambda23 for the single-log barrier."""
    g = np.asarray(g, dtype=np.float64)
    lg = np.log(g)
    return kappa * (-2.0) * d_hat**4 * (g - 1.0) * ((g - 1.0) + 2.0 * g * lg) / g


def local_eigensystem(g, params, m):
    """The three analytic eigenpairs of the J-space barrier Hessian.

    Eigenmatrices are returned vectorized (column-major) at length m*m:
    the primary at the (m, m) slot, the two nonpositive twist pairs in the
    last column/row of the m = 3 case.
    """
    lam1 = float(lambda1(g, params))
    lam23 = float(lambda23(g, params))
    dim = m * m
    q1 = np.zeros(dim)
    q1[dim - 1] = 1.0
    pairs = [(lam1, q1)]
    for row in range(m - 1):
        q = np.zeros(dim)
        q[(m - 1) * m + row] = 1.0  # slot (row+1, m) in 1-based terms
        pairs.append((lam23, q))
    return LocalEigenSystem(pairs=pairs)


def build_local_quadratic(stencil, jac, params):
    """Gradient and rank-1 PSD Hessian block for a non-parallel stencil.

    The primary eigenmatrix reduces to the unit basis at the (m, m) slot,
    so the position-space Hessian is the filtered primary eigenvalue times
    the outer product of the stacked f-gradient.
    """
    if stencil.kind in PARALLEL_KINDS:
        raise ValueError("parallel stencils take the mollified path")
    g = jac.f * jac.f
    u = jac.grad_f.reshape(-1)
    grad = (2.0 * jac.f * float(barrier_dg(g, params))) * u
    lam = max(float(filtered_lambda1(g, params)), 0.0)
    hess = lam * np.outer(u, u)
    return LocalQuadratic(vert_ids=np.asarray(stencil.verts, dtype=np.int64), grad=grad, hess=hess)


def reference_barrier_d(d, params):
    """Distance-based clamped barrier and its first two d-derivatives."""
    d = np.asarray(d, dtype=np.float64)
    dh = params.d_hat
    k = params.kappa
    ln = np.log(d / dh)
    b = -k * (dh - d) ** 2 * ln
    db = k * (2.0 * (dh - d) * ln - (dh - d) ** 2 / d)
    d2b = k * (-2.0 * ln + 2.0 * (dh - d) / d + (dh - d) * (dh + d) / d**2)
    return b, db, d2b


def reference_ipc_local_quadratic(stencil, positions, params, fd_h=1e-6):
    """Distance-chain barrier block with numerically projected full Hessian.

    The distance Hessian is assembled by central differences of the exact
    distance gradient (step ``fd_h``, meant as 1e-6 times the scene scale),
    then the full force Jacobian is eigen-decomposed and negative
    eigenvalues clamped to zero. Oracle/baseline path.
    """
    dist = stencil_distance(stencil, positions)
    d = np.sqrt(dist.d2)
    grad_d = dist.grad_d2 / (2.0 * d)
    _, db, d2b = reference_barrier_d(d, params)

    ids = list(stencil.verts)
    s = len(ids)
    hess_d = np.zeros((3 * s, 3 * s))
    work = positions.copy()
    for k in range(3 * s):
        vid = ids[k // 3]
        axis = k % 3
        base = work[vid, axis]
        work[vid, axis] = base + fd_h
        gp = stencil_distance(stencil, work)
        work[vid, axis] = base - fd_h
        gm = stencil_distance(stencil, work)
        work[vid, axis] = base
        dg = (gp.grad_d2 / (2.0 * np.sqrt(gp.d2)) - gm.grad_d2 / (2.0 * np.sqrt(gm.d2))) / (2.0 * fd_h)
        hess_d[:, k] = dg.reshape(-1)
    hess_d = 0.5 * (hess_d + hess_d.T)

    gvec = grad_d.reshape(-1)
    hess = float(d2b) * np.outer(gvec, gvec) + float(db) * hess_d
    w, v = np.linalg.eigh(hess)
    hess_psd = (v * np.maximum(w, 0.0)) @ v.T
    return LocalQuadratic(
        vert_ids=np.asarray(ids, dtype=np.int64), grad=float(db) * gvec, hess=hess_psd
    )


def gn_scalar_comparison(d, params):
    """Scalar part of the two Gauss-Newton Hessian approximations.

    Uses the distance-based clamped barrier: ours adds the (nonpositive)
    half-gradient term, so it never exceeds the plain truncation.
    """
    _, db, d2b = reference_barrier_d(d, params)
    return d2b + db / (2.0 * np.asarray(d)), d2b


def norm_diagnostics(g, params, filtered=False):
    """Closed-form gradient/Hessian norms of the barrier and their ratio."""
    grad_norm = -2.0 * np.sqrt(np.asarray(g)) * barrier_dg(g, params)
    hess_norm = filtered_lambda1(g, params) if filtered else lambda1(g, params)
    return grad_norm, hess_norm, grad_norm / hess_norm
