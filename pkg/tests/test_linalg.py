import numpy as np
import pytest

from fixedrank import linalg, oracle
from fixedrank.errors import InvalidInputError


def random_shapes(rng, count=100, max_dim=50):
    for _ in range(count):
        yield rng.integers(1, max_dim + 1), rng.integers(1, max_dim + 1)


class TestThinSvd:
    def test_diagonal_is_its_own_svd(self):
        tri = linalg.thin_svd(np.diag([3.0, 1.0]))
        assert np.allclose(tri.u, np.eye(2))
        assert np.allclose(tri.s, [3.0, 1.0])
        assert np.allclose(tri.v, np.eye(2))

    def test_zero_matrix(self):
        tri = linalg.thin_svd(np.zeros((2, 2)))
        assert np.allclose(tri.s, 0.0)
        for j in range(2):
            i = np.argmax(np.abs(tri.u[:, j]))
            assert tri.u[i, j] >= 0
        assert np.allclose(tri.u.T @ tri.u, np.eye(2), atol=1e-12)

    def test_against_gram_matrix_jacobi_oracle(self, rng):
        a = rng.standard_normal((4, 3))
        tri = linalg.thin_svd(a)
        w, _ = oracle.jacobi_sym_eig(a.T @ a)
        expected = np.sqrt(np.clip(w, 0.0, None))
        assert np.allclose(tri.s, expected, atol=1e-10)
        assert np.linalg.norm(tri.reconstruct() - a) < 1e-10 * np.linalg.norm(a)

    def test_rejects_non_finite(self):
        with pytest.raises(InvalidInputError):
            linalg.thin_svd(np.array([[1.0, np.nan], [0.0, 1.0]]))

    def test_round_trip_and_orthonormality_randomized(self, rng):
        for n, m in random_shapes(rng, count=100):
            a = rng.standard_normal((n, m))
            tri = linalg.thin_svd(a)
            scale = max(1.0, np.linalg.norm(a))
            assert np.linalg.norm(tri.reconstruct() - a) <= 1e-10 * scale
            k = min(n, m)
            assert np.linalg.norm(tri.u.T @ tri.u - np.eye(k)) <= 1e-10
            assert np.linalg.norm(tri.v.T @ tri.v - np.eye(k)) <= 1e-10
            assert np.all(np.diff(tri.s) <= 0)

    def test_deterministic(self, rng):
        a = rng.standard_normal((7, 5))
        t1 = linalg.thin_svd(a.copy())
        t2 = linalg.thin_svd(a.copy())
        assert np.array_equal(t1.u, t2.u)
        assert np.array_equal(t1.s, t2.s)
        assert np.array_equal(t1.v, t2.v)


class TestTruncateRank:
    def test_diagonal(self):
        tri = linalg.truncate_rank(np.diag([3.0, 1.0]), 1)
        assert np.allclose(tri.reconstruct(), np.diag([3.0, 0.0]), atol=1e-12)

    def test_identity_on_matching_rank(self, rng):
        g1 = rng.standard_normal((6, 2))
        g2 = rng.standard_normal((5, 2))
        x = g1 @ g2.T
        tri = linalg.truncate_rank(x, 2)
        assert np.linalg.norm(tri.reconstruct() - x) < 1e-10 * np.linalg.norm(x)

    def test_against_full_svd_oracle(self, rng):
        a = rng.standard_normal((6, 6))
        # independent route: Jacobi on the Gram matrix, then back out U
        w, v = oracle.jacobi_sym_eig(a.T @ a)
        s = np.sqrt(np.clip(w, 0.0, None))
        u = a @ v[:, :2] / s[:2]
        expected = (u * s[:2]) @ v[:, :2].T
        got = linalg.truncate_rank(a, 2).reconstruct()
        assert np.linalg.norm(got - expected) < 1e-9 * np.linalg.norm(a)

    def test_eckart_young(self, rng):
        for _ in range(10):
            a = rng.standard_normal((8, 6))
            for r in (1, 2, 4):
                best = np.linalg.norm(a - linalg.truncate_rank(a, r).reconstruct())
                for _ in range(100):
                    b = rng.standard_normal((8, r)) @ rng.standard_normal((r, 6))
                    assert best <= np.linalg.norm(a - b) + 1e-12

    def test_rank_out_of_range(self):
        with pytest.raises(InvalidInputError):
            linalg.truncate_rank(np.eye(3), 0)
        with pytest.raises(InvalidInputError):
            linalg.truncate_rank(np.eye(3), 4)


class TestQrThin:
    def test_orthonormal_input(self, rng):
        q0 = np.linalg.qr(rng.standard_normal((5, 3)))[0]
        q, r = linalg.qr_thin(q0)
        assert np.allclose(np.abs(np.diag(r)), 1.0, atol=1e-12)
        assert np.all(np.diag(r) > 0)
        assert np.allclose(q @ r, q0, atol=1e-12)

    def test_against_gram_schmidt_oracle(self, rng):
        a = rng.standard_normal((4, 2))
        q, r = linalg.qr_thin(a)
        q_ref, r_ref = oracle.gram_schmidt_qr(a)
        assert np.allclose(q, q_ref, atol=1e-10)
        assert np.allclose(r, r_ref, atol=1e-10)

    def test_rank_deficient_columns(self):
        a = np.array([[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]])
        _, r = linalg.qr_thin(a)
        assert abs(r[1, 1]) <= 1e-12

    def test_wide_input_rejected(self):
        with pytest.raises(InvalidInputError):
            linalg.qr_thin(np.ones((2, 3)))

    def test_randomized_reconstruction(self, rng):
        for _ in range(100):
            n = int(rng.integers(2, 30))
            k = int(rng.integers(1, n + 1))
            a = rng.standard_normal((n, k))
            q, r = linalg.qr_thin(a)
            assert np.linalg.norm(q @ r - a) <= 1e-10 * max(1.0, np.linalg.norm(a))
            assert np.linalg.norm(q.T @ q - np.eye(k)) <= 1e-10
            assert np.all(np.diag(r) >= 0)
            assert np.allclose(r, np.triu(r))


class TestSymEig:
    def test_two_by_two_hand_values(self):
        w, v = linalg.sym_eig(np.array([[10.0, 1.0], [1.0, 1.0]]))
        expected = np.array([(11 + np.sqrt(85)) / 2, (11 - np.sqrt(85)) / 2])
        assert np.allclose(w, expected, atol=1e-12)
        assert np.allclose(
            np.array([[10.0, 1.0], [1.0, 1.0]]) @ v, v @ np.diag(w), atol=1e-10
        )

    def test_identity(self):
        w, _ = linalg.sym_eig(np.eye(4))
        assert np.allclose(w, 1.0)

    def test_diagonal(self):
        w, _ = linalg.sym_eig(np.diag([5.0, 2.0, 0.0]))
        assert np.allclose(w, [5.0, 2.0, 0.0], atol=1e-14)

    def test_asymmetric_rejected(self):
        with pytest.raises(InvalidInputError):
            linalg.sym_eig(np.array([[0.0, 1.0], [0.0, 0.0]]))

    def test_residual_randomized(self, rng):
        for _ in range(100):
            n = int(rng.integers(2, 20))
            a = rng.standard_normal((n, n))
            a = a + a.T
            w, v = linalg.sym_eig(a)
            assert np.linalg.norm(a @ v - v @ np.diag(w)) <= 1e-8 * np.linalg.norm(a)
            assert np.all(np.diff(w) <= 1e-12)


class TestPowerSpectralRadius:
    def test_diagonal_map(self):
        d = np.diag([0.9, 0.5])
        est = linalg.power_spectral_radius(lambda x: d @ x, 2, iters=2000, tol=1e-10)
        assert est.converged
        assert abs(est.value - 0.9) < 1e-8

    def test_scaled_rotation_conjugate_pair(self):
        rot = 0.7 * np.array([[0.0, -1.0], [1.0, 0.0]])
        est = linalg.power_spectral_radius(lambda x: rot @ x, 2, iters=2000, tol=1e-10)
        assert est.converged
        assert abs(est.value - 0.7) < 1e-8

    def test_momentum_matrix_at_optimal_pair(self):
        # critical damping: defective leading eigenvalue, so convergence is
        # slow but the lag-2 estimate still reaches the analytic radius
        from fixedrank import analysis, build_theta, generate_instance

        inst = generate_instance("mc", 8, 8, 2, 0.8, seed=7)
        theta = build_theta(inst.operator)
        report = analysis.projected_theta_spectrum(theta, inst.ground_truth)
        t_mat = analysis.assemble_momentum_matrix(
            theta, inst.ground_truth, report.accel_step, report.accel_momentum
        )
        est = linalg.power_spectral_radius(
            lambda x: t_mat @ x, t_mat.shape[0], iters=8000, tol=1e-12
        )
        assert abs(est.value - report.accel_rate) < 5e-3

    def test_zero_map(self):
        est = linalg.power_spectral_radius(lambda x: 0.0 * x, 3)
        assert est.converged
        assert est.value == 0.0

    def test_non_convergence_flag(self):
        # two nearly equal moduli of opposite sign make the lag-2 window
        # oscillate at loose tolerance budgets
        d = np.diag([1.0, -0.999999])
        est = linalg.power_spectral_radius(lambda x: d @ x, 2, iters=6, tol=1e-14)
        assert not est.converged
        assert est.value > 0.5
