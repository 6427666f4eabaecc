"""Certification of the concavity-gap and lifted level-set geometry.

Two families of certificates live here.  The first samples the concavity gap
of an operator against a compact anchor set: whenever the gradient direction
at lam differs from the anchor's by at least beta, the supporting-plane
excess must carry a uniform margin epsilon * (1 + sum f_i).  The second
works on the lifted graph {(lam, rate): f(lam) - rate = level} in
eigenvalue-rate space: support caps at fixed radius, the segment-lift
quantity (the infimum over far boundary points of the maximal lift of the
connecting segment), and the asymptotic inequality

    sum f_i(lam) (mu_i - lam_i) - (rate_mu - rate_lam)
        >= theta + eps * sum f_i(lam)

for all far-out boundary points within a rate window.  All searches are
seeded sampling; certificates record the worst witnesses so a failed run is
reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import sampling
from .errors import ConeViolationError, InvalidConfigurationError


@dataclass(frozen=True)
class LiftedPoint:
    """A point (lam, rate) of eigenvalue-rate space."""

    lam: np.ndarray
    rate: float

    def __post_init__(self):
        object.__setattr__(self, "lam", np.asarray(self.lam, dtype=float))
        object.__setattr__(self, "rate", float(self.rate))

    @property
    def radius(self):
        return float(np.linalg.norm(self.lam))


def normal(op, lam):
    """Unit outward gradient direction of f at lam (strictly inside the cone)."""
    g = op.gradient(lam)
    return g / np.linalg.norm(g, axis=-1, keepdims=True)


def lifted_normal(op, point):
    """Unit normal (Df, -1)/sqrt(1+|Df|^2) of the lifted graph at point."""
    g = op.gradient(point.lam)
    v = np.concatenate([g, [-1.0]])
    return v / np.sqrt(1.0 + g @ g)


def normal_separation_margin(op, anchors):
    """Half the smallest component of the anchors' gradient directions.

    The smallest component of a unit normal is its distance to the boundary
    of the positive orthant of directions, so this is a usable mismatch
    threshold beta for the concavity-gap certificate.
    """
    anchors = np.atleast_2d(np.asarray(anchors, dtype=float))
    if anchors.size == 0:
        raise ValueError("need at least one anchor")
    nus = normal(op, anchors)
    return 0.5 * float(np.min(nus))


@dataclass
class GapCertificate:
    epsilon_hat: float | None
    beta: float
    qualifying_count: int
    violation_count: int
    empty_constraint: bool
    worst_anchor: np.ndarray | None = None
    worst_lam: np.ndarray | None = None
    seed: int = 0
    budget: int = 0

    @property
    def certified(self):
        return (not self.empty_constraint and self.violation_count == 0
                and self.epsilon_hat is not None and self.epsilon_hat > 0.0)


def verify_concavity_gap(op, anchors, beta, budget=10000, seed=0,
                         radius_range=(1e-2, 1e3)):
    """Sample the concavity-gap inequality against a compact anchor set.

    For each sampled lam whose unit gradient direction differs from an
    anchor's by at least beta, the normalized excess

        [sum f_i(lam)(mu_i - lam_i) - f(mu) + f(lam)] / (1 + sum f_i(lam))

    is collected; the certificate reports the smallest one.  An empty
    qualifying set (e.g. a linear operator, whose normal never moves) is
    flagged as a signal, not a failure.
    """
    if budget < 1:
        raise ValueError("budget must be positive")
    if not beta > 0:
        raise ValueError("beta must be positive")
    anchors = np.atleast_2d(np.asarray(anchors, dtype=float))
    if not np.all(op.cone.contains(anchors)):
        raise InvalidConfigurationError("anchors must lie strictly inside the cone")

    rng = sampling.rng_from_seed(seed)
    pts = sampling.interior_points(op.cone, rng, budget,
                                   radius_range=radius_range, min_margin=1e-7)
    f = op.value(pts)
    g = op.gradient(pts)
    sum_g = np.sum(g, axis=-1)
    nu = g / np.linalg.norm(g, axis=-1, keepdims=True)

    f_anchor = op.value(anchors)
    nu_anchor = normal(op, anchors)

    cert = GapCertificate(epsilon_hat=None, beta=float(beta), qualifying_count=0,
                          violation_count=0, empty_constraint=True,
                          seed=seed, budget=budget)
    for mu, fm, num in zip(anchors, f_anchor, nu_anchor):
        mism = np.linalg.norm(nu - num[None, :], axis=-1)
        mask = mism >= beta
        if not np.any(mask):
            continue
        excess = (np.sum(g[mask] * (mu[None, :] - pts[mask]), axis=-1)
                  - fm + f[mask]) / (1.0 + sum_g[mask])
        cert.empty_constraint = False
        cert.qualifying_count += int(mask.sum())
        cert.violation_count += int(np.sum(excess <= 0.0))
        worst = float(np.min(excess))
        if cert.epsilon_hat is None or worst < cert.epsilon_hat:
            cert.epsilon_hat = worst
            cert.worst_anchor = mu
            cert.worst_lam = pts[mask][int(np.argmin(excess))]
    return cert


def _masked_value(op, pts):
    """Operator values with -inf outside the cone (no exception)."""
    margins = op.cone.margin(pts)
    inside = margins > 0.0
    vals = np.full(pts.shape[:-1], -np.inf)
    if np.any(inside):
        vals[inside] = op.value(pts[inside])
    return vals, inside


def _graph_points_at_radius(op, level, targets, radius, rng):
    """Points with |lam| = radius and f(lam) ~= target, one per target.

    Walks a spherical arc from a strictly interior direction toward a
    direction deep outside the cone and bisects for the f-crossing; targets
    unreachable at this radius are dropped.  Returns (points, values).
    """
    targets = np.asarray(targets, dtype=float)
    m = len(targets)
    n = op.n
    w_in = sampling.cone_directions(op.cone, rng, m, min_margin=1e-6)
    w_out = -(np.ones((m, n)) + rng.uniform(-0.3, 0.3, size=(m, n)))
    w_out /= np.linalg.norm(w_out, axis=-1, keepdims=True)

    f_in = op.value(radius * w_in)
    ok = f_in >= targets
    if not np.any(ok):
        return np.empty((0, n)), np.empty(0)
    w_in, w_out, targets = w_in[ok], w_out[ok], targets[ok]

    s_lo = np.zeros(len(targets))
    s_hi = np.ones(len(targets))
    for _ in range(60):
        s = 0.5 * (s_lo + s_hi)
        c = (1.0 - s[:, None]) * w_in + s[:, None] * w_out
        norms = np.maximum(np.linalg.norm(c, axis=-1, keepdims=True), 1e-12)
        pts = radius * c / norms
        vals, _ = _masked_value(op, pts)
        above = vals >= targets
        s_lo = np.where(above, s, s_lo)
        s_hi = np.where(above, s_hi, s)

    c = (1.0 - s_lo[:, None]) * w_in + s_lo[:, None] * w_out
    norms = np.maximum(np.linalg.norm(c, axis=-1, keepdims=True), 1e-12)
    pts = radius * c / norms
    vals, inside = _masked_value(op, pts)
    keep = inside & np.isfinite(vals)
    return pts[keep], vals[keep]


def _boundary_sample(op, level, rate_window, radius, count, rng):
    """Seeded sample of the lifted boundary at one radius inside a rate window.

    Points come back as (lam, rate) with rate = f(lam) - level exactly, so
    the level-set residual is zero by construction; the rate window is
    enforced on the realized rates.
    """
    lo, hi = rate_window
    if not lo <= hi:
        raise ValueError(f"empty rate window {rate_window}")
    targets = level + rng.uniform(lo, hi, size=count)
    if op.degree == 1.0:
        reachable = targets > 0.0  # degree-one values are positive on the cone
        targets = targets[reachable]
        if len(targets) == 0:
            return np.empty((0, op.n)), np.empty(0)
    pts, vals = _graph_points_at_radius(op, level, targets, radius, rng)
    rates = vals - level
    keep = (rates >= lo) & (rates <= hi)
    return pts[keep], rates[keep]


@dataclass
class CapSample:
    level: float
    mu_hat: LiftedPoint
    radii: np.ndarray
    support_margin: dict
    lam: np.ndarray
    rate: np.ndarray
    inner: np.ndarray
    radius_of: np.ndarray
    max_level_residual: float = 0.0
    notices: list = field(default_factory=list)

    @property
    def cap_flags(self):
        # points on the far side of the supporting plane at mu_hat
        return self.inner <= 0.0


def _lifted_inner(op, lam, rate, mu_hat):
    """(mu_hat - lam_hat) . (Df(lam), -1), normalized by sqrt(1 + |Df|^2)."""
    g = op.gradient(lam)
    raw = (np.sum(g * (mu_hat.lam[None, :] - lam), axis=-1)
           - (mu_hat.rate - rate))
    return raw / np.sqrt(1.0 + np.sum(g * g, axis=-1))


def support_cap_sample(op, level, mu_hat, rate_window, radii,
                       budget=4000, seed=0):
    """Sample the lifted boundary at several radii and measure the support gap.

    For each radius the sampled minimum of (mu_hat - lam_hat) . nu_hat over
    the boundary slice inside the rate window is recorded; nonpositive
    entries mark a nonempty support cap at that radius.  Radii whose slice
    misses the window entirely are skipped with a notice.
    """
    radii = np.asarray(radii, dtype=float)
    if len(radii) == 0 or np.any(radii <= 0):
        raise ValueError("radii must be positive")
    rng = sampling.rng_from_seed(seed)
    per = max(budget // len(radii), 8)

    all_lam, all_rate, all_inner, all_radius = [], [], [], []
    margins = {}
    notices = []
    for r in radii:
        lam, rate = _boundary_sample(op, level, rate_window, r, per, rng)
        if len(lam) == 0:
            margins[float(r)] = None
            notices.append(f"radius {r:g}: no boundary points in the rate window")
            continue
        inner = _lifted_inner(op, lam, rate, mu_hat)
        margins[float(r)] = float(np.min(inner))
        all_lam.append(lam)
        all_rate.append(rate)
        all_inner.append(inner)
        all_radius.append(np.full(len(lam), r))

    if all_lam:
        lam = np.concatenate(all_lam)
        rate = np.concatenate(all_rate)
        inner = np.concatenate(all_inner)
        radius_of = np.concatenate(all_radius)
        residual = float(np.max(np.abs(op.value(lam) - rate - level)))
    else:
        lam = np.empty((0, op.n))
        rate = inner = radius_of = np.empty(0)
        residual = 0.0
    return CapSample(level=float(level), mu_hat=mu_hat, radii=radii,
                     support_margin=margins, lam=lam, rate=rate, inner=inner,
                     radius_of=radius_of, max_level_residual=residual,
                     notices=notices)


@dataclass
class SegmentLift:
    value: float
    radius: float
    count: int
    argmin: LiftedPoint
    t_at_max: float


def segment_lift(op, level, mu_hat, radius, rate_window, budget=2000, seed=0):
    """Sampled infimum over far boundary points of the segment's maximal lift.

    For each sampled boundary point lam_hat at the given radius (rate inside
    the window), the segment toward mu_hat is scanned for the maximum of
    f - rate - level; the reported value is the smallest such maximum.  The
    segment function is concave, so a fixed-iteration ternary search is
    exact to rounding.
    """
    if not radius > mu_hat.radius:
        raise InvalidConfigurationError(
            f"radius {radius:g} must exceed |mu| = {mu_hat.radius:g}")
    if not op.cone.contains(mu_hat.lam):
        raise InvalidConfigurationError("mu_hat must lie strictly inside the cone")
    rng = sampling.rng_from_seed(seed)
    lam, rate = _boundary_sample(op, level, rate_window, radius, budget, rng)
    if len(lam) == 0:
        raise InvalidConfigurationError(
            f"no lifted boundary points at radius {radius:g} inside the rate window")

    def lift(t):
        pts = (1.0 - t[:, None]) * lam + t[:, None] * mu_hat.lam[None, :]
        rates = (1.0 - t) * rate + t * mu_hat.rate
        return op.value(pts) - rates - level

    t_lo = np.zeros(len(lam))
    t_hi = np.ones(len(lam))
    for _ in range(90):
        m1 = t_lo + (t_hi - t_lo) / 3.0
        m2 = t_hi - (t_hi - t_lo) / 3.0
        swap = lift(m1) < lift(m2)
        t_lo = np.where(swap, m1, t_lo)
        t_hi = np.where(swap, t_hi, m2)
    t_best = 0.5 * (t_lo + t_hi)
    values = lift(t_best)
    i = int(np.argmin(values))
    return SegmentLift(value=float(values[i]), radius=float(radius),
                       count=len(lam),
                       argmin=LiftedPoint(lam[i], rate[i]),
                       t_at_max=float(t_best[i]))


@dataclass
class ParabolicGapCertificate:
    certified: bool
    theta: float | None
    radius: float | None
    eps: float
    level: float
    pad: float
    margins: dict
    notices: list
    worst_anchor: LiftedPoint | None = None
    worst_lam: LiftedPoint | None = None
    seed: int = 0


def verify_parabolic_gap(op, level, anchors, eps, budget=100000, seed=0,
                         pad=1.0, max_doublings=17):
    """Certify the far-field supporting inequality against a lifted anchor set.

    anchors is a compact list of LiftedPoint.  With a = min rates,
    b = max rates, the lifted boundary is sampled inside the rate window
    [a - pad, b + pad] on the radius ladder R_j = R_0 2^j, and

        min over samples and anchors of
        sum f_i(lam)(mu_i - lam_i) - (rate_mu - rate_lam) - eps sum f_i(lam)

    is recorded per radius.  The certificate reports the smallest ladder
    radius beyond which every sampled margin is positive, and the worst
    margin beyond it (theta).  eps = 0 reduces to the plain segment-lift
    inequality.
    """
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    if budget < 1:
        raise ValueError("budget must be positive")
    if not anchors:
        raise ValueError("need at least one anchor")
    for mu in anchors:
        if not op.cone.contains(mu.lam):
            raise InvalidConfigurationError(
                "anchors must lie strictly inside the cone")

    rates = [mu.rate for mu in anchors]
    window = (min(rates) - pad, max(rates) + pad)
    r0 = 2.0 * max(1.0, max(mu.radius for mu in anchors))
    ladder = r0 * 2.0 ** np.arange(max_doublings + 1)

    rng = sampling.rng_from_seed(seed)
    per = max(budget // len(ladder), 16)
    margins = {}
    notices = []
    worst_at = {}
    for r in ladder:
        lam, rate = _boundary_sample(op, level, window, r, per, rng)
        if len(lam) == 0:
            margins[float(r)] = None
            notices.append(f"radius {r:g}: no boundary points in the rate window")
            continue
        g = op.gradient(lam)
        sum_g = np.sum(g, axis=-1)
        worst = None
        for mu in anchors:
            vals = (np.sum(g * (mu.lam[None, :] - lam), axis=-1)
                    - (mu.rate - rate) - eps * sum_g)
            i = int(np.argmin(vals))
            if worst is None or vals[i] < worst[0]:
                worst = (float(vals[i]), mu, LiftedPoint(lam[i], rate[i]))
        margins[float(r)] = worst[0]
        worst_at[float(r)] = worst

    present = [(r, m) for r, m in margins.items() if m is not None]
    if not present:
        raise InvalidConfigurationError(
            "no ladder radius produced boundary points in the rate window")

    cert = ParabolicGapCertificate(certified=False, theta=None, radius=None,
                                   eps=float(eps), level=float(level),
                                   pad=float(pad), margins=margins,
                                   notices=notices, seed=seed)
    for j, (r, m) in enumerate(present):
        tail = present[j:]
        if all(mm > 0 for _, mm in tail):
            cert.certified = True
            cert.radius = r
            cert.theta = min(mm for _, mm in tail)
            return cert
    # no certifiable tail: report the worst witness overall
    r_bad, m_bad = min(present, key=lambda t: t[1])
    _, mu, lp = worst_at[r_bad]
    cert.worst_anchor = mu
    cert.worst_lam = lp
    cert.theta = m_bad
    return cert
