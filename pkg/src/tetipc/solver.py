"""Projected-Newton implicit time stepper over the incremental potential.

Per step: detect contacts, assemble per-element PSD blocks (elastic,
barrier, mollified, friction) plus the mass diagonal, solve the Newton
system matrix-free with block-Jacobi preconditioned modified PCG, bound
the step by additive CCD over swept-AABB candidates, and backtrack on the
energy. The trajectory never interpenetrates: every evaluated candidate
state keeps all pair distances strictly positive.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from . import elasticity, friction, mollifier, proximity
from .barrier import (
    BarrierParams,
    barrier_value,
    build_local_quadratic,
    reference_barrier_d,
    reference_ipc_local_quadratic,
)
from .gap import InterpenetrationError, build_diagonal_jacobian
from .mollifier import build_mollified_local_quadratic, mollified_barrier_value
from .proximity import PARALLEL_KINDS, find_contact_pairs, stencil_distance

MODE_GIPC = "gipc"
MODE_REFERENCE = "reference-ipc"


@dataclass
class SolverConfig:
    dt: float
    barrier: BarrierParams
    eps_d: float = 1e-2
    pcg_rel_tol: float = 1e-4
    pcg_max_iters: int = 2000
    newton_max_iters: int = 100
    friction_mu: float = 0.0
    friction_eps_v: float = 1e-3
    mode: str = MODE_GIPC
    accd_slack: float = 0.9
    line_search_floor: float = 1e-12
    mollify: bool = True

    def __post_init__(self):
        if self.dt <= 0.0 or self.eps_d <= 0.0 or self.pcg_rel_tol <= 0.0:
            raise ValueError("dt and tolerances must be positive")
        if self.mode not in (MODE_GIPC, MODE_REFERENCE):
            raise ValueError(f"unknown mode {self.mode!r}")


@dataclass
class StepStats:
    step: int
    newton_iters: int
    pcg_iters: int
    min_distance: float
    energy: float
    alpha_min: float
    wall_ms: float
    converged: bool
    warning: str = ""


class SimState:
    """Mutable simulation state plus cached per-tet and material data."""

    def __init__(self, scene, config, materials):
        self.scene = scene
        self.config = config
        self.x = scene.positions.copy()
        self.v = np.zeros_like(self.x)
        self.masses = scene.masses.copy()
        self.fixed = scene.fixed.copy()
        self.l = scene.bbox_diagonal
        self.step_index = 0
        self.friction_data = []
        self.stats = []

        if scene.tets.shape[0]:
            self.rest_inv, self.tet_vols, self.g_maps = elasticity.rest_data(
                scene.rest_positions, scene.tets
            )
            mu = np.zeros(scene.tets.shape[0])
            lam = np.zeros(scene.tets.shape[0])
            tet_cursor = 0
            for i, body in enumerate(scene.bodies):
                nt = body.tets.shape[0]
                if nt == 0:
                    continue
                mat = materials[i]
                if mat is None:
                    raise ValueError(f"body {i} has tets but no material")
                mu[tet_cursor : tet_cursor + nt] = mat.lame_mu
                lam[tet_cursor : tet_cursor + nt] = mat.lame_lambda
                tet_cursor += nt
            self.tet_mu, self.tet_lam = mu, lam
        else:
            self.rest_inv = np.zeros((0, 3, 3))
            self.tet_vols = np.zeros(0)
            self.g_maps = np.zeros((0, 9, 12))
            self.tet_mu = np.zeros(0)
            self.tet_lam = np.zeros(0)

        free = ~self.fixed
        if np.any(self.masses[free] <= 0.0):
            raise ValueError("free vertices need positive mass")

        if config.friction_mu > 0.0:
            self._refresh_friction(self.x)

    # -- contact set ---------------------------------------------------

    def detect(self, x):
        promote = self.config.mollify and self.config.mode == MODE_GIPC
        return find_contact_pairs(self.scene, x, self.config.barrier.d_hat, promote_parallel=promote)

    # -- energies --------------------------------------------------------

    def _inertia_target(self, x0):
        x_tilde = x0 + self.config.dt * self.v + self.config.dt**2 * self.scene.gravity
        x_tilde[self.fixed] = x0[self.fixed]
        return x_tilde

    def _barrier_energy(self, x, stencils):
        params = self.config.barrier
        total = 0.0
        for st in stencils:
            dist = stencil_distance(st, x)
            if dist.d2 <= 0.0:
                raise InterpenetrationError(f"nonpositive distance on stencil {st.verts}")
            if dist.d2 >= params.d_hat**2:
                continue
            if self.config.mode == MODE_REFERENCE:
                b, _, _ = reference_barrier_d(np.sqrt(dist.d2), params)
                total += float(b)
            elif st.kind in PARALLEL_KINDS:
                c, _ = proximity.parallel_measure(st, x)
                g = dist.d2 / params.d_hat**2
                total += float(mollified_barrier_value(g, c, params, st.eps_x))
            else:
                g = dist.d2 / params.d_hat**2
                total += float(barrier_value(g, params))
        return total

    def _friction_energy(self, x, x_start):
        total = 0.0
        for datum in self.friction_data:
            u = friction.tangential_displacement(datum, x, x_start)
            total += friction.potential(datum, u)
        return total

    def _elastic_energy(self, x):
        if self.scene.tets.shape[0] == 0:
            return 0.0
        f = elasticity.deformation_gradients(x, self.scene.tets, self.rest_inv)
        return float(np.sum(elasticity.batch_energy(f, self.tet_mu, self.tet_lam) * self.tet_vols))

    def evaluate_energy(self, x, x_tilde, x_start, stencils=None):
        """Incremental potential at x; detects contacts unless given."""
        if stencils is None:
            stencils = self.detect(x)
        free = ~self.fixed
        dx = (x - x_tilde)[free]
        inertia = 0.5 * float(np.sum(self.masses[free][:, None] * dx * dx))
        dt2 = self.config.dt**2
        return inertia + dt2 * (
            self._elastic_energy(x)
            + self._barrier_energy(x, stencils)
            + self._friction_energy(x, x_start)
        )

    # -- gradient and PSD blocks ----------------------------------------

    def _barrier_block(self, stencil, x):
        params = self.config.barrier
        if self.config.mode == MODE_REFERENCE:
            return reference_ipc_local_quadratic(stencil, x, params, fd_h=1e-6 * self.l)
        jac = build_diagonal_jacobian(stencil, x, params.d_hat)
        if stencil.kind in PARALLEL_KINDS:
            return build_mollified_local_quadratic(stencil, jac, params)
        return build_local_quadratic(stencil, jac, params)

    def barrier_gradient_blocks(self, x, stencils):
        """Raw (not dt^2-scaled) barrier gradients per stencil."""
        return [self._barrier_block(st, x).grad for st in stencils]

    def assemble_local_quadratics(self, x, x_start, stencils):
        """All dt^2-scaled PSD blocks: elastic, barrier, friction."""
        dt2 = self.config.dt**2
        blocks = []
        if self.scene.tets.shape[0]:
            _, grads, hesses = elasticity.batch_grad_hess(
                x, self.scene.tets, self.rest_inv, self.tet_vols, self.g_maps, self.tet_mu, self.tet_lam
            )
            for t in range(self.scene.tets.shape[0]):
                blocks.append(
                    elasticity.tet_local_quadratic(self.scene.tets[t], dt2 * grads[t], dt2 * hesses[t])
                )
        for st in stencils:
            dist = stencil_distance(st, x)
            if dist.d2 >= self.config.barrier.d_hat**2:
                continue
            blk = self._barrier_block(st, x)
            blk.grad = dt2 * blk.grad
            blk.hess = dt2 * blk.hess
            blocks.append(blk)
        for datum in self.friction_data:
            u = friction.tangential_displacement(datum, x, x_start)
            blk = friction.friction_hessian_psd(datum, u)
            blk.grad = -dt2 * friction.friction_force(datum, u)
            blk.hess = dt2 * blk.hess
            blocks.append(blk)
        return blocks

    def gradient(self, x, x_tilde, blocks):
        n = x.shape[0]
        grad = np.zeros(3 * n)
        grad.reshape(n, 3)[:] = self.masses[:, None] * (x - x_tilde)
        g3 = grad.reshape(n, 3)
        for blk in blocks:
            g3[blk.vert_ids] += blk.grad.reshape(-1, 3)
        g3[self.fixed] = 0.0
        return grad

    def _refresh_friction(self, x, stencils=None):
        if stencils is None:
            stencils = self.detect(x)
        grads = self.barrier_gradient_blocks(x, stencils)
        self.friction_data = friction.update_friction_state(
            stencils, grads, x, self.config.friction_mu, self.config.friction_eps_v, self.config.dt
        )


def group_blocks(blocks):
    """Stack blocks by stencil size for batched matvec."""
    bysize = {}
    for blk in blocks:
        bysize.setdefault(len(blk.vert_ids), []).append(blk)
    grouped = []
    for s in sorted(bysize):
        fam = bysize[s]
        hess = np.stack([b.hess for b in fam])
        vids = np.stack([b.vert_ids for b in fam])
        grouped.append((hess, vids))
    return grouped


def matvec_matrix_free(grouped, masses, fixed, v):
    """A @ v without assembling A; Dirichlet rows/cols act as identity."""
    from . import kernels

    n = masses.shape[0]
    vin = v.copy()
    vin.reshape(n, 3)[fixed] = 0.0
    out = (masses[:, None] * vin.reshape(n, 3)).reshape(-1).copy()
    for hess, vids in grouped:
        kernels.matvec_blocks(hess, vids, vin, out)
    out.reshape(n, 3)[fixed] = v.reshape(n, 3)[fixed]
    return out


def block_jacobi_preconditioner(grouped, masses, fixed):
    """Inverted per-vertex 3x3 diagonal blocks of the assembled system."""
    n = masses.shape[0]
    diag = np.zeros((n, 3, 3))
    diag[:] = np.eye(3)[None] * masses[:, None, None]
    for hess, vids in grouped:
        s = vids.shape[1]
        for k in range(s):
            sub = hess[:, 3 * k : 3 * k + 3, 3 * k : 3 * k + 3]
            np.add.at(diag, vids[:, k], sub)
    diag[fixed] = np.eye(3)
    return np.linalg.inv(diag)


def pcg_solve(grouped, masses, fixed, rhs, rel_tol, max_iters):
    """Modified PCG with 3x3 block-diagonal preconditioner.

    Terminates when the preconditioned residual norm delta_new drops below
    rel_tol times its initial value, or at the iteration cap (best iterate
    returned, flagged).
    """
    n = masses.shape[0]
    pinv = block_jacobi_preconditioner(grouped, masses, fixed)

    def apply_pinv(r):
        return np.einsum("nij,nj->ni", pinv, r.reshape(n, 3)).reshape(-1)

    d = np.zeros_like(rhs)
    r = rhs.copy()
    r.reshape(n, 3)[fixed] = 0.0
    s = apply_pinv(r)
    delta_new = float(r @ s)
    delta0 = delta_new
    if delta0 <= 0.0:
        return d, 0, True
    c = s.copy()
    iters = 0
    while iters < max_iters and delta_new > rel_tol * delta0:
        q = matvec_matrix_free(grouped, masses, fixed, c)
        denom = float(c @ q)
        if denom <= 0.0:
            break
        alpha = delta_new / denom
        d += alpha * c
        r -= alpha * q
        s = apply_pinv(r)
        delta_old = delta_new
        delta_new = float(r @ s)
        c = s + (delta_new / delta_old) * c
        iters += 1
    return d, iters, delta_new <= rel_tol * delta0


def newton_step(state, x, x_tilde, x_start, energy_prev):
    """One projected-Newton iteration with CCD-bounded backtracking.

    Returns (x_new, energy_new, info). The candidate is recomputed from the
    accepted previous iterate; contacts are re-detected at every
    line-search candidate.
    """
    cfg = state.config
    stencils = state.detect(x)
    blocks = state.assemble_local_quadratics(x, x_start, stencils)
    grouped = group_blocks(blocks)
    grad = state.gradient(x, x_tilde, blocks)

    d, pcg_iters, pcg_ok = pcg_solve(
        grouped, state.masses, state.fixed, -grad, cfg.pcg_rel_tol, cfg.pcg_max_iters
    )
    d.reshape(-1, 3)[state.fixed] = 0.0
    dmat = d.reshape(-1, 3)

    cands = proximity.sweep_candidates(state.scene, x, dmat, cfg.barrier.d_hat)
    alpha = min(
        1.0, proximity.global_ccd_filter(state.scene, x, dmat, cands, slack=cfg.accd_slack)
    )

    accepted = False
    x_new, energy_new = x, energy_prev
    while alpha >= cfg.line_search_floor:
        x_cand = x + alpha * dmat
        energy_cand = state.evaluate_energy(x_cand, x_tilde, x_start)
        if energy_cand <= energy_prev:
            accepted = True
            x_new, energy_new = x_cand, energy_cand
            break
        alpha *= 0.5

    d_inf = float(np.max(np.abs(dmat))) if dmat.size else 0.0
    info = {
        "pcg_iters": pcg_iters,
        "pcg_converged": pcg_ok,
        "alpha": alpha if accepted else 0.0,
        "accepted": accepted,
        "d_inf": d_inf,
        "n_contacts": len(stencils),
    }
    return x_new, energy_new, info


def advance_time_step(state):
    """Advance one step: Newton iterations until the displacement test holds.

    The convergence test is |d|_inf / (l * dt) <= eps_d, checked after each
    accepted step (at least one iteration runs). Hitting the iteration cap
    accepts the step with a warning; a line-search collapse stops the step
    and flags it.
    """
    cfg = state.config
    t0 = time.perf_counter()
    x0 = state.x.copy()
    x_tilde = state._inertia_target(x0)
    x = x0.copy()
    energy = state.evaluate_energy(x, x_tilde, x0)

    newton_iters = 0
    pcg_total = 0
    alpha_min = 1.0
    warning = ""
    converged = False
    while newton_iters < cfg.newton_max_iters:
        x, energy, info = newton_step(state, x, x_tilde, x0, energy)
        pcg_total += info["pcg_iters"]
        newton_iters += 1
        if not info["accepted"]:
            warning = "line-search-collapse"
            break
        alpha_min = min(alpha_min, info["alpha"])
        if info["d_inf"] / (state.l * cfg.dt) <= cfg.eps_d:
            converged = True
            break
    if not converged and not warning:
        warning = "newton-cap"

    state.v = (x - x0) / cfg.dt
    state.v[state.fixed] = 0.0
    state.x = x
    state.step_index += 1

    end_stencils = state.detect(x)
    if cfg.friction_mu > 0.0:
        state._refresh_friction(x, end_stencils)

    dists = [stencil_distance(st, x).d2 for st in end_stencils]
    min_dist = float(np.sqrt(min(dists))) if dists else float("nan")
    stats = StepStats(
        step=state.step_index,
        newton_iters=newton_iters,
        pcg_iters=pcg_total,
        min_distance=min_dist,
        energy=energy,
        alpha_min=alpha_min,
        wall_ms=(time.perf_counter() - t0) * 1e3,
        converged=converged,
        warning=warning,
    )
    state.stats.append(stats)
    return stats
