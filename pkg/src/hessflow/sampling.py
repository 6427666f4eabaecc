"""Seeded sampling helpers for cones and level sets.

Everything here is deterministic given the Generator passed in; the callers
own the seed.  Rejection loops have hard caps so a misconfigured cone fails
loudly instead of spinning.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidConfigurationError


def rng_from_seed(seed):
    return np.random.Generator(np.random.PCG64(seed))


def unit_directions(rng, count, n):
    """Uniform directions on the unit sphere in R^n."""
    v = rng.standard_normal((count, n))
    norms = np.linalg.norm(v, axis=-1, keepdims=True)
    # resample the (measure-zero) degenerate draws
    bad = norms[:, 0] < 1e-12
    while np.any(bad):
        v[bad] = rng.standard_normal((int(bad.sum()), n))
        norms = np.linalg.norm(v, axis=-1, keepdims=True)
        bad = norms[:, 0] < 1e-12
    return v / norms


def cone_directions(cone, rng, count, min_margin=1e-9, max_batches=2000):
    """Unit directions strictly inside the cone, by rejection sampling."""
    n = cone.n
    out = np.empty((count, n))
    have = 0
    for _ in range(max_batches):
        cand = unit_directions(rng, max(count, 64), n)
        keep = cand[cone.margin(cand) > min_margin]
        take = min(count - have, len(keep))
        if take:
            out[have:have + take] = keep[:take]
            have += take
        if have == count:
            return out
    raise InvalidConfigurationError(
        f"could not sample {count} directions inside {cone.name}; "
        f"acceptance rate too low")


def interior_points(cone, rng, count, radius_range=(1e-2, 1e2), min_margin=1e-9):
    """Points strictly inside the cone with log-uniform radii."""
    lo, hi = radius_range
    if not 0 < lo < hi:
        raise ValueError(f"bad radius range {radius_range}")
    dirs = cone_directions(cone, rng, count, min_margin=min_margin)
    radii = np.exp(rng.uniform(np.log(lo), np.log(hi), size=count))
    return dirs * radii[:, None]


def exit_time(cone, start, direction, t_cap=1e12):
    """Time at which start + t*direction leaves the cone, by bisection.

    The caller must pass a direction along which the ray actually exits
    (sum(direction) < 0 guarantees this for every cone in this package).
    """
    lo, hi = 0.0, 1.0
    for _ in range(200):
        if not cone.contains(start + hi * direction):
            break
        lo, hi = hi, hi * 2.0
        if hi > t_cap:
            raise InvalidConfigurationError("ray did not exit the cone")
    else:
        raise InvalidConfigurationError("ray did not exit the cone")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if cone.contains(start + mid * direction):
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * max(1.0, hi):
            break
    return lo  # last time known strictly inside


def boundary_rays(cone, rng, count):
    """(start, direction, exit_time) triples for boundary-approaching rays."""
    starts = interior_points(cone, rng, count, radius_range=(0.5, 2.0),
                             min_margin=1e-3)
    out = []
    for s in starts:
        d = rng.standard_normal(cone.n)
        if np.sum(d) >= 0:
            d = -d
        if abs(np.sum(d)) < 1e-9:
            d = d - np.ones(cone.n)  # force a definite exit direction
        d = d / np.linalg.norm(d)
        out.append((s, d, exit_time(cone, s, d)))
    return out


def scale_to_level(op, dirs, targets):
    """Rescale unit directions inside the cone onto exact f-levels.

    Degree-one families: f(t w) = t f(w), so t = target / f(w) and the target
    must be positive.  Log-homogeneous families: f(t w) = f(w) + c log t, so
    t = exp((target - f(w)) / c) and any real target works.
    """
    base = op.value(dirs)
    targets = np.asarray(targets, dtype=float)
    if op.degree == 1.0:
        if np.any(targets <= 0):
            raise ValueError("degree-one families only reach positive levels")
        t = targets / base
    elif op.euler_constant is not None:
        t = np.exp((targets - base) / op.euler_constant)
    else:
        raise InvalidConfigurationError(
            f"no homogeneity data for {op.name}; cannot rescale to levels")
    return dirs * t[:, None]
