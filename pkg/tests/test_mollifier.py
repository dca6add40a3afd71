"""Mollified barrier: derivatives, closed-form eigensystem, J-space oracle."""

import numpy as np
import pytest

from conftest import fd_gradient, make_parallel_ee
from tetipc.barrier import BarrierParams, barrier_value, build_local_quadratic
from tetipc.gap import build_diagonal_jacobian
from tetipc.mollifier import (
    aux_coupling_block,
    build_mollified_local_quadratic,
    mollified_barrier_value,
    mollified_eigensystem,
    mollified_gradient,
    mollified_jspace_full,
    mollified_jspace_psd,
    mollifier_eval,
)
from tetipc.proximity import ContactStencil, StencilKind, parallel_measure, stencil_distance

PARAMS = BarrierParams(d_hat=1.0, kappa=1.0)


def sample_gc(rng):
    """In-range (g, c, eps_x) sample: d/d_hat in [0.15, 0.95], c below eps_x."""
    g = rng.uniform(0.15, 0.95) ** 2
    eps_x = 10.0 ** rng.uniform(-4, 0)
    c = rng.uniform(0.01, 0.999) * eps_x
    return g, c, eps_x


class TestMollifier:
    def test_endpoint_values(self):
        assert mollifier_eval(0.0, 1.0).e_k == 0.0
        assert mollifier_eval(0.5, 1.0).e_k == pytest.approx(0.75, rel=1e-14)
        assert mollifier_eval(1.0, 1.0).e_k == 1.0
        assert mollifier_eval(2.0, 1.0).e_k == 1.0

    def test_c1_join_at_threshold(self):
        eps = 0.37
        below = mollifier_eval(eps * (1.0 - 1e-12), eps)
        assert below.de_dgamma == pytest.approx(0.0, abs=1e-10)
        assert mollifier_eval(eps, eps).de_dgamma == 0.0

    def test_mollified_value_product(self):
        got = mollified_barrier_value(0.25, 0.5, PARAMS, 1.0)
        assert got == pytest.approx(0.75 * float(barrier_value(0.25, PARAMS)), rel=1e-14)
        assert got == pytest.approx(0.8107645, rel=1e-6)

    def test_zero_parallelness_kills_energy(self):
        assert mollified_barrier_value(0.25, 0.0, PARAMS, 1.0) == 0.0

    def test_unit_mollifier_recovers_barrier(self):
        got = mollified_barrier_value(0.3, 2.0, PARAMS, 1.0)
        assert got == pytest.approx(float(barrier_value(0.3, PARAMS)), rel=1e-14)


class TestMollifiedGradient:
    def test_matches_fd_through_positions(self, rng):
        checked = 0
        while checked < 15:
            stencil, x = make_parallel_ee(rng, rng.uniform(0.2, 0.8))
            dist = stencil_distance(stencil, x)
            w = dist.witness
            if w.size and np.any(np.minimum(w, 1.0 - w) < 0.05):
                continue  # stay away from endpoint kinks for clean FD

            def energy(xx):
                d2 = stencil_distance(stencil, xx).d2
                c, _ = parallel_measure(stencil, xx)
                return mollified_barrier_value(d2 / PARAMS.d_hat**2, c, PARAMS, stencil.eps_x)

            jac = build_diagonal_jacobian(stencil, x, PARAMS.d_hat)
            grad = mollified_gradient(stencil, jac, PARAMS)
            fd = fd_gradient(energy, x, 1e-6).reshape(-1)
            denom = max(np.abs(fd).max(), 1e-10)
            assert np.abs(grad - fd).max() / denom < 1e-5
            checked += 1

    def test_couples_all_four_vertices(self, rng):
        # Offset along the edge direction: the distance witness reduces to
        # point-edge, yet the parallelness channel still reaches all four.
        angle = 5e-4
        a1, a2 = np.array([[0.0, 0, 0], [1.0, 0, 0]])
        ub = np.array([np.cos(angle), 0.0, np.sin(angle)])
        b1 = np.array([0.6, 0.3, 0.0])
        b2 = b1 + ub
        x = np.stack([a1, a2, b1, b2])
        eps_x = 1e-3
        from tetipc.proximity import classify_edge_edge

        kind, local, res, c = classify_edge_edge(a1, a2, b1, b2, eps_x=eps_x)
        assert kind is StencilKind.POINT_EDGE_PARALLEL
        stencil = ContactStencil(kind=kind, verts=(0, 1, 2, 3), eps_x=eps_x, sub=local)
        jac = build_diagonal_jacobian(stencil, x, PARAMS.d_hat)
        grad = mollified_gradient(stencil, jac, PARAMS).reshape(4, 3)
        assert all(np.linalg.norm(grad[v]) > 0.0 for v in range(4))


class TestEigensystem:
    def test_coupled_block_matches_numeric_eigensolver(self, rng):
        for _ in range(300):
            g, c, eps_x = sample_gc(rng)
            sys = mollified_eigensystem(g, c, PARAMS, eps_x)
            block = aux_coupling_block(sys)
            w = np.linalg.eigvalsh(block)
            scale = max(np.abs(w).max(), 1e-30)
            assert sys.lambda7p == pytest.approx(w[0], rel=1e-10, abs=1e-10 * scale)
            assert sys.lambda8p == pytest.approx(w[1], rel=1e-10, abs=1e-10 * scale)
            # eigenvector ratio for lambda8p
            if abs(sys.t) > 1e-12 * scale:
                k2 = sys.q8p[4] / sys.q8p[8]
                resid = block @ np.array([k2, 1.0]) - sys.lambda8p * np.array([k2, 1.0])
                assert np.abs(resid).max() < 1e-8 * scale

    def test_k2_algebraic_identity(self, rng):
        for _ in range(300):
            g, c, eps_x = sample_gc(rng)
            sys = mollified_eigensystem(g, c, PARAMS, eps_x)
            lg1, lf1 = sys.lambda_gamma[0], sys.lambda_g[0]
            # stable statement of ((lg1-lf1)/2 + p)((lf1-lg1)/2 + p) = 16 t^2
            lhs = sys.p**2 - ((lg1 - lf1) / 2.0) ** 2
            rhs = 16.0 * sys.t**2
            scale = max(abs(lhs), abs(rhs), sys.p**2, 1e-30)
            assert abs(lhs - rhs) / scale < 1e-12
            # k2 consistency with the eigenvector ratio 4t / (lambda8p - lg1)
            denom = sys.lambda8p - lg1
            if abs(sys.t) > 1e-8 * scale**0.5 and abs(denom) > 1e-6 * abs(sys.lambda8p):
                k2 = sys.q8p[4] / sys.q8p[8]
                assert k2 == pytest.approx(4.0 * sys.t / denom, rel=1e-10)

    def test_decoupled_limit(self):
        # c >= eps_x: the gamma channel is flat, t = 0, block is diagonal.
        sys = mollified_eigensystem(0.25, 2.0, PARAMS, 1.0)
        assert sys.t == 0.0
        assert sys.lambda7p == pytest.approx(min(sys.lambda_gamma[0], sys.lambda_g[0]), rel=1e-14)
        assert sys.lambda8p == pytest.approx(max(sys.lambda_gamma[0], sys.lambda_g[0]), rel=1e-14)
        assert sys.lambda_gamma == (0.0, 0.0, 0.0)

    def test_retained_pairs_are_eigenpairs_of_full_matrix(self, rng):
        for _ in range(100):
            g, c, eps_x = sample_gc(rng)
            full = mollified_jspace_full(g, c, PARAMS, eps_x)
            sys = mollified_eigensystem(g, c, PARAMS, eps_x)
            for lam, q in (
                (sys.lambda_gamma[1], sys.q_gamma2),
                (sys.lambda_gamma[2], sys.q_gamma3),
                (sys.lambda8p, sys.q8p),
            ):
                resid = np.linalg.norm(full @ q - lam * q)
                assert resid <= 1e-8 * max(abs(lam), 1e-12)

    def test_eigenmatrix_orthogonality_and_span(self, rng):
        g, c, eps_x = sample_gc(rng)
        sys = mollified_eigensystem(g, c, PARAMS, eps_x)
        e = np.eye(9)
        q_gamma1, q_g1 = e[4], e[8]
        q_g2, q_g3 = e[7], e[6]
        basis = [q_gamma1, sys.q_gamma2, sys.q_gamma3, q_g1, q_g2, q_g3]
        for i in range(6):
            for j in range(i + 1, 6):
                assert abs(basis[i] @ basis[j]) < 1e-12
        # q7'/q8' span contains q7, q8, q_gamma1, q_g1
        if abs(sys.t) > 0:
            k1 = (sys.lambda_gamma[0] - sys.lambda_g[0] - 2.0 * sys.p) / (8.0 * sys.t)
            q7p = np.zeros(9)
            q7p[4], q7p[8] = k1, 1.0
            q7p /= np.linalg.norm(q7p)
            span = np.stack([q7p, sys.q8p])
            for vec in (q_gamma1, q_g1, (q_gamma1 + q_g1) / np.sqrt(2), (-q_gamma1 + q_g1) / np.sqrt(2)):
                proj = span.T @ (span @ vec)
                assert np.linalg.norm(vec - proj) < 1e-10

    def test_sign_behavior_in_range(self, rng):
        eps_x = 0.73
        # primary gamma eigenvalue flips sign exactly at c = eps_x / 3
        g = 0.25
        above = mollified_eigensystem(g, eps_x / 3.0 * 1.01, PARAMS, eps_x)
        below = mollified_eigensystem(g, eps_x / 3.0 * 0.99, PARAMS, eps_x)
        assert below.lambda_gamma[0] > 0.0 > above.lambda_gamma[0]
        for g in np.linspace(0.0225, 0.9, 30):
            for c in np.linspace(0.01, 0.999, 30) * eps_x:
                sys = mollified_eigensystem(g, c, PARAMS, eps_x)
                assert sys.lambda_g[1] <= 0.0
                assert sys.lambda7p <= 1e-12
                assert sys.lambda_gamma[1] >= 0.0


class TestJSpaceProjection:
    def test_matches_numeric_psd_projection(self, rng):
        for _ in range(300):
            g, c, eps_x = sample_gc(rng)
            full = mollified_jspace_full(g, c, PARAMS, eps_x)
            w, q = np.linalg.eigh(full)
            numeric = (q * np.maximum(w, 0.0)) @ q.T
            analytic = mollified_jspace_psd(g, c, PARAMS, eps_x)
            norm = max(np.linalg.norm(numeric), 1.0)
            assert np.linalg.norm(analytic - numeric) <= 1e-8 * norm


class TestMollifiedQuadratic:
    def test_psd(self, rng):
        for _ in range(50):
            stencil, x = make_parallel_ee(rng, rng.uniform(0.2, 0.9))
            jac = build_diagonal_jacobian(stencil, x, PARAMS.d_hat)
            blk = build_mollified_local_quadratic(stencil, jac, PARAMS)
            w = np.linalg.eigvalsh(blk.hess)
            tr = max(np.trace(blk.hess), 1e-30)
            assert w.min() >= -1e-10 * tr

    def test_unit_mollifier_degenerates_to_plain_barrier(self, rng):
        # Same geometry, eps_x below c: the stencil behaves like plain EE.
        from conftest import make_ee

        plain, x = make_ee(rng, 0.6)
        c, _ = parallel_measure(ContactStencil(kind=StencilKind.EDGE_EDGE_PARALLEL, verts=(0, 1, 2, 3), eps_x=1.0, sub=(0, 1, 2, 3)), x)
        stencil = ContactStencil(
            kind=StencilKind.EDGE_EDGE_PARALLEL, verts=(0, 1, 2, 3), eps_x=c * 0.5, sub=(0, 1, 2, 3)
        )
        jac = build_diagonal_jacobian(stencil, x, PARAMS.d_hat)
        blk = build_mollified_local_quadratic(stencil, jac, PARAMS)
        jac_plain = build_diagonal_jacobian(plain, x, PARAMS.d_hat)
        blk_plain = build_local_quadratic(plain, jac_plain, PARAMS)
        np.testing.assert_allclose(blk.hess, blk_plain.hess, rtol=1e-10, atol=1e-12)
        np.testing.assert_allclose(blk.grad, blk_plain.grad, rtol=1e-10, atol=1e-12)

    def test_exactly_parallel_collapses_smoothly(self):
        x = np.array([[0.0, 0, 0], [1.0, 0, 0], [0.0, 0.4, 0], [1.0, 0.4, 0]])
        from tetipc.proximity import classify_edge_edge

        kind, local, res, c = classify_edge_edge(*x, eps_x=1e-3)
        stencil = ContactStencil(kind=kind, verts=(0, 1, 2, 3), eps_x=1e-3, sub=local)
        jac = build_diagonal_jacobian(stencil, x, PARAMS.d_hat)
        blk = build_mollified_local_quadratic(stencil, jac, PARAMS)
        assert np.abs(blk.grad).max() == 0.0
        assert np.abs(blk.hess).max() == 0.0
