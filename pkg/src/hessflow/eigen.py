"""Batched symmetric eigensolvers with deterministic output.

The flow solver extracts eigenvalues of 2x2 and 3x3 augmented Hessians at
every node of every step, so these are hand-rolled and fully vectorized:
closed form for n = 2, cyclic Jacobi sweeps for n >= 3.  Results are sorted
ascending with a fixed eigenvector sign convention, so repeated runs are
bit-identical.
"""

from __future__ import annotations

import numpy as np

JACOBI_TOL = 1e-13
MAX_SWEEPS = 32


def _eig2(mats):
    a = mats[..., 0, 0]
    b = mats[..., 1, 1]
    c = mats[..., 0, 1]
    half_tr = 0.5 * (a + b)
    half_diff = 0.5 * (a - b)
    r = np.hypot(half_diff, c)
    w = np.stack([half_tr - r, half_tr + r], axis=-1)

    # eigenvector for the larger eigenvalue: pick the better-conditioned of
    # the two analytic candidates, fall back to e1 when the matrix is scalar
    v2a = np.stack([r + half_diff, c], axis=-1)
    v2b = np.stack([c, r - half_diff], axis=-1)
    na = np.sum(v2a ** 2, axis=-1)
    nb = np.sum(v2b ** 2, axis=-1)
    v2 = np.where((na >= nb)[..., None], v2a, v2b)
    degen = np.maximum(na, nb) == 0.0  # scalar matrix: any basis works
    v2 = np.where(degen[..., None], np.stack([np.zeros_like(a), np.ones_like(a)], axis=-1), v2)
    v2 = v2 / np.linalg.norm(v2, axis=-1, keepdims=True)
    v1 = np.stack([-v2[..., 1], v2[..., 0]], axis=-1)
    vecs = np.stack([v1, v2], axis=-1)  # columns are eigenvectors
    return w, vecs


def _jacobi(mats, tol=JACOBI_TOL, max_sweeps=MAX_SWEEPS):
    a = np.array(mats, dtype=float)
    n = a.shape[-1]
    lead = a.shape[:-2]
    v = np.zeros_like(a)
    v[...] = np.eye(n)
    norm = np.sqrt(np.sum(mats ** 2, axis=(-2, -1)))

    pairs = [(p, q) for p in range(n) for q in range(p + 1, n)]
    for _ in range(max_sweeps):
        off = np.sqrt(np.maximum(0.0, np.sum(a ** 2, axis=(-2, -1))
                                 - np.sum(np.diagonal(a, axis1=-2, axis2=-1) ** 2, axis=-1)))
        if np.all(off <= tol * np.maximum(norm, 1e-300)):
            break
        for (p, q) in pairs:
            apq = a[..., p, q]
            app = a[..., p, p]
            aqq = a[..., q, q]
            active = np.abs(apq) > 0.0
            # theta can overflow to inf for tiny apq; the rotation formula's
            # large-theta limit is t -> 0, which the inf arithmetic produces
            with np.errstate(over="ignore"):
                theta = np.where(active, (aqq - app) / np.where(active, 2.0 * apq, 1.0), 0.0)
                t = np.sign(theta) / (np.abs(theta) + np.sqrt(theta ** 2 + 1.0))
            t = np.where(theta == 0.0, np.where(active, 1.0, 0.0), t)
            c = 1.0 / np.sqrt(t ** 2 + 1.0)
            s = t * c
            g = np.zeros(lead + (n, n))
            g[...] = np.eye(n)
            g[..., p, p] = c
            g[..., q, q] = c
            g[..., p, q] = s
            g[..., q, p] = -s
            a = np.einsum("...ji,...jk,...kl->...il", g, a, g)
            v = np.einsum("...ij,...jk->...ik", v, g)
    w = np.diagonal(a, axis1=-2, axis2=-1).copy()
    return w, v


def _sort_and_fix(w, v):
    order = np.argsort(w, axis=-1, kind="stable")
    w = np.take_along_axis(w, order, axis=-1)
    v = np.take_along_axis(v, order[..., None, :], axis=-1)
    # sign convention: largest-magnitude entry of each column made positive
    idx = np.argmax(np.abs(v), axis=-2)
    lead = np.take_along_axis(v, idx[..., None, :], axis=-2)[..., 0, :]
    sign = np.where(lead < 0.0, -1.0, 1.0)
    return w, v * sign[..., None, :]


def eigh_batch(mats):
    """Eigenvalues (ascending) and eigenvectors of symmetric matrices.

    mats has shape (..., n, n); returns (w, v) with w of shape (..., n) and
    v's columns the matching eigenvectors.
    """
    mats = np.asarray(mats, dtype=float)
    n = mats.shape[-1]
    if mats.shape[-2] != n:
        raise ValueError(f"matrices must be square, got {mats.shape[-2:]}")
    if n == 1:
        return mats[..., 0, :].copy(), np.ones_like(mats)
    if n == 2:
        w, v = _eig2(mats)
    else:
        w, v = _jacobi(mats)
    return _sort_and_fix(w, v)


def eigvals_batch(mats):
    return eigh_batch(mats)[0]


def eigen_sym(mat):
    """Single symmetric matrix, n in {2, 3}: (ascending eigenvalues, vectors)."""
    mat = np.asarray(mat, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError(f"expected one square matrix, got shape {mat.shape}")
    if mat.shape[0] not in (2, 3):
        raise ValueError(f"eigen_sym handles n in {{2, 3}}, got n={mat.shape[0]}")
    w, v = eigh_batch(mat[None])
    return w[0], v[0]
