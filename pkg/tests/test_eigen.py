"""Batched eigensolvers against the LAPACK oracle and exact cases."""

import numpy as np
import pytest

from hessflow.eigen import eigen_sym, eigh_batch, eigvals_batch
from hessflow.sampling import rng_from_seed


def random_sym(rng, count, n, scale=1.0):
    a = rng.standard_normal((count, n, n)) * scale
    return 0.5 * (a + np.swapaxes(a, -1, -2))


@pytest.mark.parametrize("n", [2, 3])
class TestAgainstLapack:
    def test_eigenvalues_match(self, n):
        mats = random_sym(rng_from_seed(n), 500, n)
        w = eigvals_batch(mats)
        w_ref = np.linalg.eigvalsh(mats)
        np.testing.assert_allclose(w, w_ref, rtol=1e-12, atol=1e-12)

    def test_eigenpairs_reconstruct(self, n):
        mats = random_sym(rng_from_seed(10 + n), 300, n)
        w, v = eigh_batch(mats)
        recon = np.einsum("...ik,...k,...jk->...ij", v, w, v)
        np.testing.assert_allclose(recon, mats, rtol=0, atol=1e-12)

    def test_orthonormal_columns(self, n):
        mats = random_sym(rng_from_seed(20 + n), 200, n)
        _, v = eigh_batch(mats)
        gram = np.einsum("...ki,...kj->...ij", v, v)
        np.testing.assert_allclose(gram, np.broadcast_to(np.eye(n), gram.shape),
                                   rtol=0, atol=1e-12)

    def test_ascending_order(self, n):
        mats = random_sym(rng_from_seed(30 + n), 200, n)
        w = eigvals_batch(mats)
        assert np.all(np.diff(w, axis=-1) >= 0)

    def test_extreme_scales(self, n):
        for scale in (1e-8, 1e8):
            mats = random_sym(rng_from_seed(40 + n), 100, n, scale=scale)
            w = eigvals_batch(mats)
            np.testing.assert_allclose(w, np.linalg.eigvalsh(mats),
                                       rtol=1e-11, atol=1e-11 * scale)


class TestExactCases:
    def test_diagonal_passthrough(self):
        w, v = eigen_sym(np.diag([3.0, 1.0]))
        np.testing.assert_array_equal(w, [1.0, 3.0])
        np.testing.assert_allclose(np.abs(v), np.eye(2)[::-1], atol=1e-15)

    def test_identity_multiplicity(self):
        w, v = eigen_sym(np.eye(3) * 2.0)
        np.testing.assert_array_equal(w, [2.0, 2.0, 2.0])
        np.testing.assert_allclose(v @ v.T, np.eye(3), atol=1e-14)

    def test_rotation_2x2(self):
        # eigenvalues of [[2, 1], [1, 2]] are 1 and 3
        w, v = eigen_sym(np.array([[2.0, 1.0], [1.0, 2.0]]))
        np.testing.assert_allclose(w, [1.0, 3.0], rtol=1e-15)
        s = 1 / np.sqrt(2)
        np.testing.assert_allclose(np.abs(v), [[s, s], [s, s]], rtol=1e-14)

    def test_zero_matrix(self):
        w, v = eigen_sym(np.zeros((3, 3)))
        np.testing.assert_array_equal(w, np.zeros(3))
        np.testing.assert_allclose(v @ v.T, np.eye(3), atol=1e-15)

    def test_known_3x3(self):
        # circulant-ish matrix with eigenvalues 0, 3, 3 shifted by identity
        m = np.full((3, 3), 1.0) + np.eye(3)
        w, _ = eigen_sym(m)
        np.testing.assert_allclose(w, [1.0, 1.0, 4.0], rtol=1e-13)


class TestContract:
    def test_determinism_bitwise(self):
        mats = random_sym(rng_from_seed(99), 400, 3)
        w1, v1 = eigh_batch(mats)
        w2, v2 = eigh_batch(mats.copy())
        np.testing.assert_array_equal(w1, w2)
        np.testing.assert_array_equal(v1, v2)

    def test_sign_convention_stable(self):
        mats = random_sym(rng_from_seed(7), 200, 3)
        _, v = eigh_batch(mats)
        idx = np.argmax(np.abs(v), axis=-2)
        lead = np.take_along_axis(v, idx[..., None, :], axis=-2)[..., 0, :]
        assert np.all(lead > 0)

    def test_eigen_sym_validates(self):
        with pytest.raises(ValueError):
            eigen_sym(np.ones((4, 4)))
        with pytest.raises(ValueError):
            eigen_sym(np.ones((2, 3)))

    def test_grid_shaped_batch(self):
        mats = random_sym(rng_from_seed(3), 12 * 15, 2).reshape(12, 15, 2, 2)
        w, v = eigh_batch(mats)
        assert w.shape == (12, 15, 2)
        assert v.shape == (12, 15, 2, 2)
        np.testing.assert_allclose(w, np.linalg.eigvalsh(mats), atol=1e-12)
