"""Mollified barrier for nearly-parallel edge contacts.

The barrier is multiplied by a smooth [0, 1] factor of the parallelness
measure ``c = |ea x eb|^2``, evaluated through the three-channel diagonal
Jacobian diag(1, sqrt(c), f). The resulting J-space Hessian couples the
two varying channels; its eigensystem is closed-form, and only the three
never-negative-in-range pairs are kept for the PSD block.

J-space matrices are 3x3, vectorized column-major to length 9: slot
(row, col) maps to index 3*(col-1) + (row-1). The gamma channel lives in
column 2, the gap channel in column 3.
"""

from dataclasses import dataclass

import numpy as np

from .barrier import LocalQuadratic, barrier_dg, barrier_d2g, barrier_value
from .proximity import PARALLEL_KINDS

_IDX_G1 = 4  # slot (2,2): gamma channel diagonal
_IDX_F1 = 8  # slot (3,3): gap channel diagonal


@dataclass
class MollifierState:
    c: float
    eps_x: float
    e_k: float
    de_dgamma: float
    d2e_dgamma2: float


@dataclass
class MollifiedEigenSystem:
    """All six channel eigenvalues plus the coupled-block replacement pair.

    ``lambda_gamma`` and ``lambda_g`` hold (primary, twist, twist) for the
    two channels; ``lambda7p <= lambda8p`` are the eigenvalues of the 2x2
    coupling block and ``q8p`` its normalized eigenmatrix (k2 at slot (2,2),
    1 at slot (3,3) before normalization).
    """

    lambda_gamma: tuple
    lambda_g: tuple
    t: float
    p: float
    lambda7p: float
    lambda8p: float
    q_gamma2: np.ndarray
    q_gamma3: np.ndarray
    q8p: np.ndarray


def mollifier_eval(c, eps_x):
    """Smooth multiplier e_k(c) and its first two derivatives in gamma = c."""
    if eps_x <= 0.0:
        raise ValueError("eps_x must be positive")
    if c < 0.0:
        raise ValueError("parallelness measure must be nonnegative")
    if c < eps_x:
        e = -(c * c) / (eps_x * eps_x) + 2.0 * c / eps_x
        de = -2.0 * c / (eps_x * eps_x) + 2.0 / eps_x
        d2e = -2.0 / (eps_x * eps_x)
    else:
        e, de, d2e = 1.0, 0.0, 0.0
    return MollifierState(c=c, eps_x=eps_x, e_k=e, de_dgamma=de, d2e_dgamma2=d2e)


def mollified_barrier_value(g, c, params, eps_x):
    return mollifier_eval(c, eps_x).e_k * barrier_value(g, params)


def _channel_derivatives(g, c, params, eps_x):
    """Partials of e_k(gamma) * b(g) in (gamma, g) at gamma = c."""
    st = mollifier_eval(c, eps_x)
    b = float(barrier_value(g, params))
    bg = float(barrier_dg(g, params))
    bgg = float(barrier_d2g(g, params))
    return {
        "b_gamma": st.de_dgamma * b,
        "b_gamma2": st.d2e_dgamma2 * b,
        "b_g": st.e_k * bg,
        "b_g2": st.e_k * bgg,
        "b_gamma_g": st.de_dgamma * bg,
    }


def mollified_gradient(stencil, jac, params):
    """Stacked per-vertex gradient of the mollified barrier.

    Chains through the two varying diagonal entries: the gamma channel
    couples all four vertices even when the distance witness involves only
    a sub-stencil.
    """
    if stencil.kind not in PARALLEL_KINDS:
        raise ValueError("mollified gradient applies to parallel stencils")
    g = jac.f * jac.f
    c = jac.sqrt_c * jac.sqrt_c
    der = _channel_derivatives(g, c, params, stencil.eps_x)
    u_c = jac.grad_sqrt_c.reshape(-1)
    u_f = jac.grad_f.reshape(-1)
    return der["b_gamma"] * 2.0 * jac.sqrt_c * u_c + der["b_g"] * 2.0 * jac.f * u_f


def mollified_eigensystem(g, c, params, eps_x):
    """Closed-form eigensystem of the mollified J-space Hessian."""
    der = _channel_derivatives(g, c, params, eps_x)
    lam_gamma1 = 2.0 * (der["b_gamma"] + 2.0 * c * der["b_gamma2"])
    lam_gamma23 = 2.0 * der["b_gamma"]
    lam_g1 = 2.0 * (der["b_g"] + 2.0 * g * der["b_g2"])
    lam_g23 = 2.0 * der["b_g"]
    t = der["b_gamma_g"] * np.sqrt(c) * np.sqrt(g)
    p = 0.5 * np.sqrt((lam_gamma1 - lam_g1) ** 2 + 64.0 * t * t)
    mean = 0.5 * (lam_gamma1 + lam_g1)
    lam7p = mean - p
    lam8p = mean + p

    q8p = np.zeros(9)
    if abs(8.0 * t) < 1e-12 * (abs(lam_gamma1) + abs(lam_g1)) or t == 0.0:
        # Decoupled limit: the 2x2 block is diagonal, k2 is 0/0 there.
        q8p[_IDX_G1 if lam_gamma1 >= lam_g1 else _IDX_F1] = 1.0
    else:
        k2 = (lam_gamma1 - lam_g1 + 2.0 * p) / (8.0 * t)
        q8p[_IDX_G1] = k2
        q8p[_IDX_F1] = 1.0
        q8p /= np.linalg.norm(q8p)

    q_gamma2 = np.zeros(9)
    q_gamma2[5] = -1.0  # twist onto slot (3,2)
    q_gamma3 = np.zeros(9)
    q_gamma3[3] = 1.0  # twist onto slot (1,2)

    return MollifiedEigenSystem(
        lambda_gamma=(lam_gamma1, lam_gamma23, lam_gamma23),
        lambda_g=(lam_g1, lam_g23, lam_g23),
        t=float(t),
        p=float(p),
        lambda7p=float(lam7p),
        lambda8p=float(lam8p),
        q_gamma2=q_gamma2,
        q_gamma3=q_gamma3,
        q8p=q8p,
    )


def mollified_jspace_full(g, c, params, eps_x):
    """The exact 9x9 mollified J-space Hessian, assembled term by term.

    Test oracle for the analytic eigensystem: second derivatives of both
    channels, their rank-1 parts, and the symmetric cross terms.
    """
    der = _channel_derivatives(g, c, params, eps_x)
    m = np.zeros((9, 9))
    for idx in (3, 4, 5):  # d2(gamma)/dJ2 on column 2
        m[idx, idx] += 2.0 * der["b_gamma"]
    for idx in (6, 7, 8):  # d2(g)/dJ2 on column 3
        m[idx, idx] += 2.0 * der["b_g"]
    g_gamma = np.zeros(9)
    g_gamma[_IDX_G1] = 2.0 * np.sqrt(c)
    g_g = np.zeros(9)
    g_g[_IDX_F1] = 2.0 * np.sqrt(g)
    m += der["b_gamma2"] * np.outer(g_gamma, g_gamma)
    m += der["b_g2"] * np.outer(g_g, g_g)
    m += der["b_gamma_g"] * (np.outer(g_g, g_gamma) + np.outer(g_gamma, g_g))
    return m


def mollified_jspace_psd(g, c, params, eps_x):
    """Analytic PSD projection in J-space: the three retained eigenpairs.

    The twist pair of the gamma channel is nonnegative in range; it is
    clamped at zero anyway as a safety net.
    """
    sys = mollified_eigensystem(g, c, params, eps_x)
    m = np.zeros((9, 9))
    lam_t = max(sys.lambda_gamma[1], 0.0)
    m += lam_t * np.outer(sys.q_gamma2, sys.q_gamma2)
    m += lam_t * np.outer(sys.q_gamma3, sys.q_gamma3)
    m += max(sys.lambda8p, 0.0) * np.outer(sys.q8p, sys.q8p)
    return m


def aux_coupling_block(sys):
    """The 2x2 sub-block of the auxiliary matrix on slots (2,2)/(3,3)."""
    return np.array(
        [[sys.lambda_gamma[0], 4.0 * sys.t], [4.0 * sys.t, sys.lambda_g[0]]]
    )


def build_mollified_local_quadratic(stencil, jac, params):
    """Gradient and PSD Hessian block for a parallel stencil.

    Under the reduced change of basis only the (2,2) and (3,3) slots carry
    position derivatives, so the twist eigenmatrices contract to zero and
    the block is rank one: the retained coupled eigenvalue times the outer
    product of the mixed direction w = k2-weighted sqrt(c)-gradient plus
    f-gradient.
    """
    if stencil.kind not in PARALLEL_KINDS:
        raise ValueError("mollified block applies to parallel stencils")
    g = jac.f * jac.f
    c = jac.sqrt_c * jac.sqrt_c
    sys = mollified_eigensystem(g, c, params, stencil.eps_x)
    grad = mollified_gradient(stencil, jac, params)
    u_c = jac.grad_sqrt_c.reshape(-1)
    u_f = jac.grad_f.reshape(-1)
    w = sys.q8p[_IDX_G1] * u_c + sys.q8p[_IDX_F1] * u_f
    hess = max(sys.lambda8p, 0.0) * np.outer(w, w)
    return LocalQuadratic(vert_ids=np.asarray(stencil.verts, dtype=np.int64), grad=grad, hess=hess)
