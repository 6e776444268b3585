import json

import numpy as np
import pytest
from scipy.stats import ortho_group

from sosroa.shaping import (EigenSpectrum, EllipsoidShape, ShapingError,
                            assemble_shape_matrix, load_shape, pca_raw,
                            save_shape, shape_from_trajectory,
                            shape_to_polynomial, sphere_shape)

# Spectrum with the magnitude profile of a strongly anisotropic fault
# trajectory: six decades between the extreme axes.
WIDE_SPECTRUM = np.array([37.83, 0.7965, 0.4246, 0.0769, 0.0024, 2.2e-5])


class TestPcaRaw:
    def test_rank_one_data(self):
        spec = pca_raw([[1.0, 0.0], [2.0, 0.0], [-1.0, 0.0]])
        assert np.allclose(spec.eigenvectors[:, 0], [1.0, 0.0])
        assert abs(spec.eigenvalues[0] - 2.0) < 1e-12
        assert abs(spec.eigenvalues[1]) < 1e-12

    def test_uncentered_moment(self):
        # A cloud offset from the origin: centering would kill the offset
        # direction, the raw second moment must keep it.
        Z = np.tile([3.0, 0.0], (50, 1))
        spec = pca_raw(Z)
        assert abs(spec.eigenvalues[0] - 9.0) < 1e-12
        assert np.allclose(spec.eigenvectors[:, 0], [1.0, 0.0])

    def test_rotation_equivariance(self):
        rng = np.random.default_rng(50)
        Z = rng.normal(size=(40, 4)) * np.array([3.0, 1.0, 0.5, 0.1])
        Q = ortho_group.rvs(4, random_state=1)
        a = pca_raw(Z)
        b = pca_raw(Z @ Q.T)
        assert np.allclose(a.eigenvalues, b.eigenvalues, atol=1e-10)
        for k in range(4):
            v = Q @ a.eigenvectors[:, k]
            w = b.eigenvectors[:, k]
            assert min(np.linalg.norm(v - w), np.linalg.norm(v + w)) < 1e-8

    def test_sorted_descending_orthonormal(self):
        rng = np.random.default_rng(51)
        Z = rng.normal(size=(100, 6)) * np.array([6.0, 1.0, 0.7, 0.3, 0.05,
                                                  0.005])
        spec = pca_raw(Z)
        lam = spec.eigenvalues
        assert np.all(np.diff(lam) <= 0)
        assert np.all(lam >= 0)
        E = spec.eigenvectors
        assert np.max(np.abs(E.T @ E - np.eye(6))) < 1e-10

    def test_deterministic_sign(self):
        spec = pca_raw([[-1.0, 0.0], [-2.0, 0.0]])
        j = int(np.argmax(np.abs(spec.eigenvectors[:, 0])))
        assert spec.eigenvectors[j, 0] > 0

    def test_too_few_samples(self):
        with pytest.raises(ShapingError):
            pca_raw([[1.0, 2.0]])

    def test_ragged_input(self):
        with pytest.raises((ShapingError, ValueError)):
            pca_raw([[1.0, 2.0], [1.0]])


def wide_spec():
    return EigenSpectrum(eigenvalues=WIDE_SPECTRUM.copy(),
                         eigenvectors=np.eye(6))


class TestAssembleShapeMatrix:
    def test_unit_spectrum_gives_sphere(self):
        Q = ortho_group.rvs(3, random_state=2)
        spec = EigenSpectrum(eigenvalues=np.ones(3), eigenvectors=Q)
        shape = assemble_shape_matrix(spec)
        assert np.allclose(shape.A, np.eye(3), atol=1e-12)

    def test_principal_axis_weight(self):
        shape = assemble_shape_matrix(wide_spec(), mode="sqrt")
        e1 = np.eye(6)[:, 0]
        got = shape.A @ e1
        assert np.allclose(got, (1.0 / np.sqrt(37.83)) * e1, atol=1e-10)
        assert abs(got[0] - 0.16259) < 1e-4

    def test_condition_number_squares_in_linear_mode(self):
        s_sqrt = assemble_shape_matrix(wide_spec(), mode="sqrt")
        s_lin = assemble_shape_matrix(wide_spec(), mode="linear")
        c1 = np.linalg.cond(s_sqrt.A)
        c2 = np.linalg.cond(s_lin.A)
        assert abs(c2 - c1 ** 2) / c2 < 1e-10

    def test_floor_clamps_quiescent_axes(self):
        shape = assemble_shape_matrix(wide_spec(), mode="sqrt",
                                      floor_ratio=1e-4)
        w = np.linalg.eigvalsh(shape.A)
        # smallest eigenvalue of the clamped spectrum is 1e-4 * 37.83
        assert abs(np.max(w) - 1.0 / np.sqrt(1e-4 * 37.83)) < 1e-10

    def test_cholesky_after_clamp(self):
        rng = np.random.default_rng(52)
        for _ in range(10):
            lam = np.sort(np.abs(rng.normal(size=5)))[::-1]
            lam[-1] = 0.0
            Q = ortho_group.rvs(5, random_state=rng.integers(1000))
            spec = EigenSpectrum(eigenvalues=lam, eigenvectors=Q)
            for mode in ("sqrt", "linear"):
                shape = assemble_shape_matrix(spec, mode=mode)
                np.linalg.cholesky(shape.A)  # raises if not PD

    def test_zero_spectrum_rejected(self):
        spec = EigenSpectrum(eigenvalues=np.zeros(2), eigenvectors=np.eye(2))
        with pytest.raises(ShapingError, match="zero"):
            assemble_shape_matrix(spec)

    def test_unknown_mode(self):
        with pytest.raises(ShapingError, match="mode"):
            assemble_shape_matrix(wide_spec(), mode="cubic")

    def test_semi_axis_ratio(self):
        # Along eigenvector i the set {z^T A z <= beta} extends to
        # sqrt(beta) * lam_i^(1/4) in sqrt mode.
        lam = np.array([4.0, 1.0, 0.25])
        spec = EigenSpectrum(eigenvalues=lam, eigenvectors=np.eye(3))
        shape = assemble_shape_matrix(spec, mode="sqrt", floor_ratio=1e-6)
        beta = 2.0
        for i in range(3):
            r = np.sqrt(beta) * lam[i] ** 0.25
            z = np.eye(3)[:, i] * r
            assert abs(z @ shape.A @ z - beta) < 1e-10


class TestSphere:
    def test_polynomial_form(self):
        p = shape_to_polynomial(sphere_shape(2))
        assert p.evaluate([1.0, 0.0]) == 1.0
        assert p.evaluate([0.3, -0.4]) == pytest.approx(0.25)

    def test_level_set_radius(self):
        p = shape_to_polynomial(sphere_shape(3))
        beta = 4.0
        rng = np.random.default_rng(53)
        for _ in range(20):
            d = rng.normal(size=3)
            d /= np.linalg.norm(d)
            assert abs(p.evaluate(np.sqrt(beta) * d) - beta) < 1e-12

    def test_ignores_data(self):
        assert np.allclose(sphere_shape(4).A, np.eye(4))

    def test_bad_dimension(self):
        with pytest.raises(ShapingError):
            sphere_shape(0)


class TestShapeToPolynomial:
    def test_identity(self):
        p = shape_to_polynomial(EllipsoidShape(A=np.eye(2)))
        assert p.evaluate([1.0, 1.0]) == 2.0

    def test_off_diagonal_doubling(self):
        A = np.array([[1.0, 0.5], [0.5, 1.0]])
        p = shape_to_polynomial(EllipsoidShape(A=A))
        assert p.coeff((1, 1)) == 1.0

    def test_matrix_quadratic_oracle(self):
        rng = np.random.default_rng(54)
        M = rng.normal(size=(5, 5))
        A = M @ M.T + 0.5 * np.eye(5)
        p = shape_to_polynomial(EllipsoidShape(A=A))
        for _ in range(100):
            z = rng.normal(size=5)
            want = z @ A @ z
            assert abs(p.evaluate(z) - want) <= 1e-12 * (1 + abs(want))


class TestShapeValidation:
    def test_asymmetric_rejected(self):
        with pytest.raises(ShapingError, match="symmetric"):
            EllipsoidShape(A=np.array([[1.0, 0.2], [0.0, 1.0]]))

    def test_indefinite_rejected(self):
        with pytest.raises(ShapingError, match="definite"):
            EllipsoidShape(A=np.array([[1.0, 0.0], [0.0, -1.0]]))


class TestEndToEndProperties:
    def test_pipeline_rotation_equivariance(self):
        rng = np.random.default_rng(55)
        Z = rng.normal(size=(60, 3)) * np.array([5.0, 1.0, 0.2])
        Q = ortho_group.rvs(3, random_state=3)
        A1 = shape_from_trajectory(Z).A
        A2 = shape_from_trajectory(Z @ Q.T).A
        assert np.max(np.abs(A2 - Q @ A1 @ Q.T)) < 1e-8

    def test_sample_scaling(self):
        rng = np.random.default_rng(56)
        Z = rng.normal(size=(60, 3)) * np.array([5.0, 1.0, 0.2])
        k = 7.0
        s1 = pca_raw(Z)
        s2 = pca_raw(k * Z)
        assert np.allclose(s2.eigenvalues, k ** 2 * s1.eigenvalues,
                           rtol=1e-10)
        A1 = shape_from_trajectory(Z).A
        A2 = shape_from_trajectory(k * Z).A
        assert np.max(np.abs(A2 - A1 / k)) < 1e-8 * np.max(np.abs(A1))
        n1 = A1 / np.linalg.norm(A1)
        n2 = A2 / np.linalg.norm(A2)
        assert np.max(np.abs(n1 - n2)) < 1e-10

    def test_save_load_round_trip(self, tmp_path):
        rng = np.random.default_rng(57)
        Z = rng.normal(size=(30, 4))
        shape = shape_from_trajectory(Z)
        path = tmp_path / "shape.json"
        save_shape(shape, path)
        back = load_shape(path)
        assert np.max(np.abs(back.A - shape.A)) < 1e-12

    def test_load_missing_key(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"B": [[1.0]]}))
        with pytest.raises(ShapingError, match="A"):
            load_shape(path)

    def test_load_enforces_validity(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"A": [[1.0, 0.3], [0.0, 1.0]]}))
        with pytest.raises(ShapingError):
            load_shape(path)
