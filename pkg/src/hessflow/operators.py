"""Concave symmetric operators on eigenvalue vectors, with their cones.

Eigenvalue vectors are plain numpy arrays whose trailing axis has length n;
all kernels broadcast over leading axes.  Each operator family carries its
natural admissibility cone and evaluates with exact first and second
derivatives.  Derivatives are closed-form (no differencing), which is what
the certification modules lean on.

Families:

  sigma_root      f = sigma_k^(1/k)            on the k-th Garding cone
  sigma_quotient  f = (sigma_k/sigma_l)^(1/(k-l)) on the k-th Garding cone
  log_psum        f = log prod_S (sum_{i in S} lam_i), S over k-subsets,
                  on the cone where every k-fold partial sum is positive

The first two are positively homogeneous of degree one; log_psum and the
internal LogOf wrapper satisfy f(t lam) = f(lam) + c log t instead, with
c = binom(n, k) and c = 1 respectively.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import ConeViolationError


def elementary_symmetric(lam, k):
    """Return e_0..e_k of the trailing axis as an array of shape (..., k+1).

    Stable prefix recurrence: e_j(x_1..x_m) = e_j(x_1..x_{m-1})
    + x_m e_{j-1}(x_1..x_{m-1}).  No subtractions, so no catastrophic
    cancellation for admissible inputs.
    """
    lam = np.asarray(lam, dtype=float)
    n = lam.shape[-1]
    if not 1 <= k <= n:
        raise ValueError(f"order k={k} out of range for dimension n={n}")
    e = np.zeros(lam.shape[:-1] + (k + 1,))
    e[..., 0] = 1.0
    for m in range(n):
        x = lam[..., m]
        for j in range(min(k, m + 1), 0, -1):
            e[..., j] += x * e[..., j - 1]
    return e


def sigma_k(lam, k):
    """k-th elementary symmetric polynomial of the trailing axis."""
    return elementary_symmetric(lam, k)[..., k]


def _deleted(lam, i):
    # lam with slot i removed from the trailing axis
    return np.delete(lam, i, axis=-1)


def sigma_k_deleted(lam, k, i):
    """sigma_k of lam with slot i removed; sigma_0 = 1, sigma_{-1} = 0."""
    if k < 0:
        return np.zeros(np.asarray(lam).shape[:-1])
    if k == 0:
        return np.ones(np.asarray(lam).shape[:-1])
    return sigma_k(_deleted(lam, i), k)


def _subset_table(n, k):
    # membership matrix of all k-subsets of range(n): shape (m, n), bool
    subs = list(combinations(range(n), k))
    table = np.zeros((len(subs), n), dtype=bool)
    for row, s in enumerate(subs):
        table[row, list(s)] = True
    return table


def partial_sums(lam, k):
    """All k-fold partial sums of the trailing axis, shape (..., binom(n,k))."""
    lam = np.asarray(lam, dtype=float)
    n = lam.shape[-1]
    if not 1 <= k <= n:
        raise ValueError(f"order k={k} out of range for dimension n={n}")
    table = _subset_table(n, k)
    return lam @ table.T.astype(float)


def partial_sum_product(lam, k):
    """Product of all k-fold partial sums of the trailing axis."""
    return np.prod(partial_sums(lam, k), axis=-1)


def _norm(lam):
    return np.sqrt(np.sum(np.asarray(lam, dtype=float) ** 2, axis=-1))


@dataclass(frozen=True)
class GardingCone:
    """Cone where sigma_1, .., sigma_k are all positive."""

    k: int
    n: int

    def __post_init__(self):
        if not 1 <= self.k <= self.n:
            raise ValueError(f"GardingCone needs 1 <= k <= n, got k={self.k}, n={self.n}")

    @property
    def name(self):
        return f"garding(k={self.k}, n={self.n})"

    def margin(self, lam):
        """Relative margin: min_j sigma_j / (1+|lam|)^j, positive iff inside.

        Scaling by (1+|lam|)^deg makes the margin dimensionless and
        comparable across radii.
        """
        lam = np.asarray(lam, dtype=float)
        self._check_dim(lam)
        e = elementary_symmetric(lam, self.k)
        scale = 1.0 + _norm(lam)
        margins = e[..., 1:] / scale[..., None] ** np.arange(1, self.k + 1)
        return np.min(margins, axis=-1)

    def contains(self, lam, margin=0.0):
        if margin < 0:
            raise ValueError("margin must be nonnegative")
        return self.margin(lam) > margin

    def _check_dim(self, lam):
        if lam.shape[-1] != self.n:
            raise ValueError(f"expected trailing axis {self.n}, got {lam.shape[-1]}")


@dataclass(frozen=True)
class PartialSumCone:
    """Cone where every k-fold partial sum of the eigenvalues is positive."""

    k: int
    n: int

    def __post_init__(self):
        if not 1 <= self.k <= self.n:
            raise ValueError(f"PartialSumCone needs 1 <= k <= n, got k={self.k}, n={self.n}")

    @property
    def name(self):
        return f"partial_sum(k={self.k}, n={self.n})"

    def margin(self, lam):
        lam = np.asarray(lam, dtype=float)
        if lam.shape[-1] != self.n:
            raise ValueError(f"expected trailing axis {self.n}, got {lam.shape[-1]}")
        sums = partial_sums(lam, self.k)
        return np.min(sums, axis=-1) / (1.0 + _norm(lam))

    def contains(self, lam, margin=0.0):
        if margin < 0:
            raise ValueError("margin must be nonnegative")
        return self.margin(lam) > margin


@dataclass(frozen=True)
class PositiveCone:
    """The positive orthant; equals garding(n, n) and partial_sum(1, n)."""

    n: int

    @property
    def name(self):
        return f"positive(n={self.n})"

    def margin(self, lam):
        lam = np.asarray(lam, dtype=float)
        if lam.shape[-1] != self.n:
            raise ValueError(f"expected trailing axis {self.n}, got {lam.shape[-1]}")
        return np.min(lam, axis=-1) / (1.0 + _norm(lam))

    def contains(self, lam, margin=0.0):
        if margin < 0:
            raise ValueError("margin must be nonnegative")
        return self.margin(lam) > margin


def cone_contains(cone, lam, margin=0.0):
    """Free-function form of cone membership with a required relative margin."""
    return cone.contains(lam, margin)


def _require_inside(cone, lam):
    m = np.asarray(cone.margin(lam))
    worst = np.min(m)
    if not worst > 0.0:  # catches NaN as well
        flat = np.argmin(np.where(np.isnan(m), -np.inf, m).reshape(-1))
        where = np.unravel_index(flat, m.shape) if m.ndim else None
        point = np.asarray(lam, dtype=float).reshape(-1, np.asarray(lam).shape[-1])[flat]
        raise ConeViolationError(worst, point=point, where=where)


class _Operator:
    """Shared plumbing: dimension checks and strict cone enforcement."""

    def _prep(self, lam):
        lam = np.asarray(lam, dtype=float)
        if lam.shape[-1] != self.n:
            raise ValueError(f"expected trailing axis {self.n}, got {lam.shape[-1]}")
        _require_inside(self.cone, lam)
        return lam

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class SigmaRoot(_Operator):
    """f = sigma_k^(1/k), degree-one homogeneous and concave on its cone."""

    k: int
    n: int

    def __post_init__(self):
        if not 1 <= self.k <= self.n:
            raise ValueError(f"SigmaRoot needs 1 <= k <= n, got k={self.k}, n={self.n}")

    @property
    def cone(self):
        return GardingCone(self.k, self.n)

    @property
    def name(self):
        return f"sigma_root(k={self.k}, n={self.n})"

    degree = 1.0
    euler_constant = None  # degree-one: sum f_i lam_i = f

    def value(self, lam):
        lam = self._prep(lam)
        return sigma_k(lam, self.k) ** (1.0 / self.k)

    def gradient(self, lam):
        lam = self._prep(lam)
        k = self.k
        s = sigma_k(lam, k)
        g = np.empty_like(lam)
        for i in range(self.n):
            g[..., i] = sigma_k_deleted(lam, k - 1, i)
        return (1.0 / k) * s[..., None] ** (1.0 / k - 1.0) * g

    def hessian(self, lam):
        lam = self._prep(lam)
        k, n = self.k, self.n
        s = sigma_k(lam, k)
        si = np.empty_like(lam)
        for i in range(n):
            si[..., i] = sigma_k_deleted(lam, k - 1, i)
        h = np.zeros(lam.shape + (n,))
        # d2 sigma_k: sigma_{k-2} with both slots removed off-diagonal, 0 on it
        for i in range(n):
            for j in range(i + 1, n):
                if k >= 2:
                    rest = np.delete(lam, (i, j), axis=-1)
                    sij = (np.ones(lam.shape[:-1]) if k == 2
                           else sigma_k(rest, k - 2))
                else:
                    sij = 0.0
                h[..., i, j] = sij
                h[..., j, i] = sij
        a = (1.0 / k) * s ** (1.0 / k - 1.0)
        b = (1.0 / k) * (1.0 / k - 1.0) * s ** (1.0 / k - 2.0)
        return (b[..., None, None] * si[..., :, None] * si[..., None, :]
                + a[..., None, None] * h)


@dataclass(frozen=True)
class SigmaQuotient(_Operator):
    """f = (sigma_k/sigma_l)^(1/(k-l)) on the k-th Garding cone, l < k."""

    k: int
    l: int
    n: int

    def __post_init__(self):
        if not 1 <= self.l < self.k <= self.n:
            raise ValueError(
                f"SigmaQuotient needs 1 <= l < k <= n, got k={self.k}, l={self.l}, n={self.n}")

    @property
    def cone(self):
        return GardingCone(self.k, self.n)

    @property
    def name(self):
        return f"sigma_quotient(k={self.k}, l={self.l}, n={self.n})"

    degree = 1.0
    euler_constant = None

    def _pieces(self, lam):
        a = sigma_k(lam, self.k)
        b = sigma_k(lam, self.l)
        ai = np.empty_like(lam)
        bi = np.empty_like(lam)
        for i in range(self.n):
            ai[..., i] = sigma_k_deleted(lam, self.k - 1, i)
            bi[..., i] = sigma_k_deleted(lam, self.l - 1, i)
        return a, b, ai, bi

    def value(self, lam):
        lam = self._prep(lam)
        q = sigma_k(lam, self.k) / sigma_k(lam, self.l)
        return q ** (1.0 / (self.k - self.l))

    def gradient(self, lam):
        lam = self._prep(lam)
        a, b, ai, bi = self._pieces(lam)
        q = a / b
        qi = (ai * b[..., None] - a[..., None] * bi) / b[..., None] ** 2
        m = 1.0 / (self.k - self.l)
        return m * q[..., None] ** (m - 1.0) * qi

    def hessian(self, lam):
        lam = self._prep(lam)
        n = self.n
        a, b, ai, bi = self._pieces(lam)
        q = a / b
        qi = (ai * b[..., None] - a[..., None] * bi) / b[..., None] ** 2

        aij = np.zeros(lam.shape + (n,))
        bij = np.zeros(lam.shape + (n,))
        for i in range(n):
            for j in range(i + 1, n):
                rest = np.delete(lam, (i, j), axis=-1)
                for (kk, out) in ((self.k, aij), (self.l, bij)):
                    if kk >= 2:
                        v = (np.ones(lam.shape[:-1]) if kk == 2
                             else sigma_k(rest, kk - 2))
                        out[..., i, j] = v
                        out[..., j, i] = v

        b1 = b[..., None, None]
        outer_ab = ai[..., :, None] * bi[..., None, :]
        qij = (aij / b1
               - a[..., None, None] * bij / b1 ** 2
               - (outer_ab + np.swapaxes(outer_ab, -1, -2)) / b1 ** 2
               + 2.0 * a[..., None, None] * bi[..., :, None] * bi[..., None, :] / b1 ** 3)
        m = 1.0 / (self.k - self.l)
        lead = m * (m - 1.0) * q ** (m - 2.0)
        return (lead[..., None, None] * qi[..., :, None] * qi[..., None, :]
                + m * q[..., None, None] ** (m - 1.0) * qij)


@dataclass(frozen=True)
class LogPartialSums(_Operator):
    """f = sum_S log(partial sum over S), S over k-subsets.

    Log-homogeneous: f(t lam) = f(lam) + binom(n, k) log t, so the Euler sum
    sum f_i lam_i equals binom(n, k) identically.
    """

    k: int
    n: int

    def __post_init__(self):
        if not 1 <= self.k <= self.n:
            raise ValueError(
                f"LogPartialSums needs 1 <= k <= n, got k={self.k}, n={self.n}")

    @property
    def cone(self):
        return PartialSumCone(self.k, self.n)

    @property
    def name(self):
        return f"log_psum(k={self.k}, n={self.n})"

    degree = None

    @property
    def euler_constant(self):
        return float(math.comb(self.n, self.k))

    def _sums(self, lam):
        return partial_sums(lam, self.k), _subset_table(self.n, self.k)

    def value(self, lam):
        lam = self._prep(lam)
        sums, _ = self._sums(lam)
        return np.sum(np.log(sums), axis=-1)

    def gradient(self, lam):
        lam = self._prep(lam)
        sums, table = self._sums(lam)
        return (1.0 / sums) @ table.astype(float)

    def hessian(self, lam):
        lam = self._prep(lam)
        sums, table = self._sums(lam)
        t = table.astype(float)
        w = 1.0 / sums ** 2
        return -np.einsum("...m,mi,mj->...ij", w, t, t)


@dataclass(frozen=True)
class LogOf:
    """log of a positive degree-one operator; used for the exponential form.

    Keeps the inner operator's cone.  Log-homogeneous with Euler constant 1:
    f(t lam) = f(lam) + log t.
    """

    inner: object

    @property
    def cone(self):
        return self.inner.cone

    @property
    def n(self):
        return self.inner.n

    @property
    def name(self):
        return f"log({self.inner.name})"

    degree = None
    euler_constant = 1.0

    def value(self, lam):
        v = self.inner.value(lam)
        if not np.all(v > 0):
            raise ValueError("inner operator value not positive; cannot take log")
        return np.log(v)

    def gradient(self, lam):
        v = self.inner.value(lam)
        return self.inner.gradient(lam) / v[..., None]

    def hessian(self, lam):
        v = self.inner.value(lam)
        g = self.inner.gradient(lam)
        h = self.inner.hessian(lam)
        return (h / v[..., None, None]
                - g[..., :, None] * g[..., None, :] / v[..., None, None] ** 2)

    def __str__(self):
        return self.name


FAMILIES = ("sigma_root", "sigma_quotient", "log_psum")


def make_operator(family, n, k=None, l=None):
    """Build an operator by family name; used by the config layer and tests."""
    if family == "sigma_root":
        if k is None:
            raise ValueError("sigma_root needs k")
        return SigmaRoot(k=k, n=n)
    if family == "sigma_quotient":
        if k is None or l is None:
            raise ValueError("sigma_quotient needs k and l")
        return SigmaQuotient(k=k, l=l, n=n)
    if family == "log_psum":
        if k is None:
            raise ValueError("log_psum needs k")
        return LogPartialSums(k=k, n=n)
    raise ValueError(f"unknown operator family '{family}'; known: {FAMILIES}")
