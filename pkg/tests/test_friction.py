"""Lagged friction: smoothing pair, force/potential chain, PSD projection."""

import numpy as np
import pytest

from conftest import MAKERS, make_pt
from tetipc.barrier import BarrierParams, build_local_quadratic
from tetipc.friction import (
    FrictionDatum,
    build_basis,
    f0_f1,
    friction_force,
    friction_hessian_psd,
    potential,
    tangential_displacement,
    update_friction_state,
)
from tetipc.gap import build_diagonal_jacobian
from tetipc.proximity import StencilKind, stencil_distance

EPS_V = 0.8
DT = 0.025
H = DT * EPS_V


class TestSmoothing:
    def test_endpoints(self):
        f0, f1, f1p = f0_f1(0.0, EPS_V, DT)
        assert f1 == 0.0
        f0, f1, f1p = f0_f1(H, EPS_V, DT)
        assert f1 == 1.0
        assert f1p == 0.0
        assert f0 == pytest.approx(H, rel=1e-14)

    def test_midpoint(self):
        _, f1, _ = f0_f1(H / 2.0, EPS_V, DT)
        assert f1 == pytest.approx(0.75, rel=1e-14)

    def test_c1_join(self):
        h = 1e-9
        _, f1m, f1pm = f0_f1(H - h, EPS_V, DT)
        assert f1m == pytest.approx(1.0, abs=1e-8)
        assert f1pm == pytest.approx(0.0, abs=1e-5)

    def test_f0_prime_is_f1(self):
        for u in (0.1 * H, 0.6 * H, 0.95 * H, 2.0 * H):
            h = 1e-8
            fd = (f0_f1(u + h, EPS_V, DT)[0] - f0_f1(u - h, EPS_V, DT)[0]) / (2 * h)
            assert f0_f1(u, EPS_V, DT)[1] == pytest.approx(fd, rel=1e-6)


def _datum(rng, lam=3.0, mu=0.4):
    stencil, x = make_pt(rng, 0.4)
    dist = stencil_distance(stencil, x)
    basis, _ = build_basis(stencil, dist)
    return FrictionDatum(stencil=stencil, lambda_n=lam, basis_T=basis, mu=mu, eps_v=EPS_V, dt=DT), x


class TestForce:
    def test_zero_displacement_zero_force(self, rng):
        datum, _ = _datum(rng)
        assert np.all(friction_force(datum, np.zeros(2)) == 0.0)

    def test_sliding_magnitude_is_coulomb(self, rng):
        datum, _ = _datum(rng)
        u = np.array([3.0 * H, 1.0 * H])  # well past the smoothing window
        force = friction_force(datum, u)
        total = datum.basis_T.T @ force
        assert np.linalg.norm(total) == pytest.approx(datum.mu * datum.lambda_n, rel=1e-12)

    def test_force_is_negative_potential_gradient(self, rng):
        datum, x = _datum(rng)
        x0 = x.copy()
        disp = rng.normal(size=x.shape) * 0.4 * H

        def pot(xx):
            return potential(datum, tangential_displacement(datum, xx, x0))

        xq = x0 + disp
        h = 1e-7
        fd = np.zeros(x.size)
        flat = xq.reshape(-1)
        for k in range(flat.size):
            xp, xm = flat.copy(), flat.copy()
            xp[k] += h
            xm[k] -= h
            fd[k] = (pot(xp.reshape(-1, 3)) - pot(xm.reshape(-1, 3))) / (2 * h)
        force = friction_force(datum, tangential_displacement(datum, xq, x0))
        np.testing.assert_allclose(force, -fd, rtol=1e-5, atol=1e-9)

    def test_dissipation_direction(self, rng):
        datum, x = _datum(rng)
        x0 = x.copy()
        for _ in range(50):
            xq = x0 + rng.normal(size=x.shape) * 2.0 * H
            u = tangential_displacement(datum, xq, x0)
            force = friction_force(datum, u)
            assert force @ (xq - x0).reshape(-1) <= 1e-12


class TestHessian:
    def test_sliding_regime_eigenvalues(self, rng):
        datum, _ = _datum(rng, lam=1.0, mu=1.0)
        unorm = 5.0 * H
        u = np.array([unorm, 0.0])
        blk = friction_hessian_psd(datum, u)
        core = datum.basis_T.T @ blk.hess @ datum.basis_T
        w = np.sort(np.linalg.eigvalsh(core))
        assert w[0] == pytest.approx(0.0, abs=1e-12)
        assert w[1] == pytest.approx(1.0 / unorm, rel=1e-10)

    def test_zero_displacement_isotropic(self, rng):
        datum, _ = _datum(rng, lam=1.0, mu=1.0)
        blk = friction_hessian_psd(datum, np.zeros(2))
        core = datum.basis_T.T @ blk.hess @ datum.basis_T
        np.testing.assert_allclose(core, (2.0 / (EPS_V * DT)) * np.eye(2), rtol=1e-12, atol=1e-12)

    def test_matches_numeric_2x2_oracle(self, rng):
        datum, _ = _datum(rng)
        for _ in range(100):
            u = rng.normal(size=2) * 2.0 * H
            unorm = np.linalg.norm(u)
            if unorm < 1e-12:
                continue
            _, f1, f1p = f0_f1(unorm, EPS_V, DT)
            raw = (f1p * unorm - f1) / unorm**3 * np.outer(u, u) + f1 / unorm * np.eye(2)
            w, q = np.linalg.eigh(raw)
            numeric = datum.mu * datum.lambda_n * (q * np.maximum(w, 0.0)) @ q.T
            got = datum.basis_T.T @ friction_hessian_psd(datum, u).hess @ datum.basis_T
            np.testing.assert_allclose(got, numeric, rtol=1e-10, atol=1e-12)

    def test_psd_and_fd_consistency_away_from_kinks(self, rng):
        datum, x = _datum(rng)
        x0 = x.copy()
        disp = rng.normal(size=x.shape)
        disp *= 0.5 * H / np.linalg.norm(disp)
        xq = x0 + disp
        u = tangential_displacement(datum, xq, x0)
        blk = friction_hessian_psd(datum, u)
        assert np.linalg.eigvalsh(blk.hess).min() >= -1e-12

        h = 1e-6
        flat = xq.reshape(-1)
        fd = np.zeros((flat.size, flat.size))
        for k in range(flat.size):
            xp, xm = flat.copy(), flat.copy()
            xp[k] += h
            xm[k] -= h
            fp = friction_force(datum, tangential_displacement(datum, xp.reshape(-1, 3), x0))
            fm = friction_force(datum, tangential_displacement(datum, xm.reshape(-1, 3), x0))
            fd[:, k] = -(fp - fm) / (2 * h)
        # unprojected Hessian equals -dF/dx; the projection only clamps
        raw_core = datum.basis_T.T @ fd @ datum.basis_T
        w = np.linalg.eigvalsh(raw_core)
        got = datum.basis_T.T @ blk.hess @ datum.basis_T
        np.testing.assert_allclose(
            np.sort(np.linalg.eigvalsh(got)), np.maximum(np.sort(w), 0.0), rtol=1e-4, atol=1e-8
        )


class TestUpdateState:
    def test_no_contacts_empty(self):
        assert update_friction_state([], [], np.zeros((0, 3)), 0.5, EPS_V, DT) == []

    def test_basis_orthonormal(self, rng):
        params = BarrierParams(d_hat=1.0, kappa=1.0)
        for kind in MAKERS:
            stencil, x = MAKERS[kind](rng, 0.5)
            jac = build_diagonal_jacobian(stencil, x, params.d_hat)
            blk = build_local_quadratic(stencil, jac, params)
            data = update_friction_state([stencil], [blk.grad], x, 0.5, EPS_V, DT)
            assert len(data) == 1
            t = data[0].basis_T
            np.testing.assert_allclose(t.T @ t, np.eye(2), atol=1e-12)

    def test_lambda_matches_one_sided_gradient(self, rng):
        params = BarrierParams(d_hat=1.0, kappa=1.0)
        stencil, x = MAKERS[StencilKind.POINT_TRIANGLE](rng, 0.4)
        jac = build_diagonal_jacobian(stencil, x, params.d_hat)
        blk = build_local_quadratic(stencil, jac, params)
        data = update_friction_state([stencil], [blk.grad], x, 0.5, EPS_V, DT)
        expected = np.linalg.norm(blk.grad.reshape(-1, 3)[0])
        assert data[0].lambda_n == pytest.approx(expected, rel=1e-12)
