"""Sampled certification of the standing structure conditions.

An operator family enters the flow theory through a short list of pointwise
conditions: positive eigenvalue derivatives, concavity, nonpositive boundary
limit, unboundedness along the diagonal ray, a lower bound on the radial
derivative inside an f-band, a uniform weight on gradient slots attached to
negative eigenvalues, and divergence of |lam|^2 sum f_i.  This module checks
each on seeded samples and reports margins and empirical constants.  These
are desk-scale certifications, not proofs: each check documents exactly what
was sampled.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import sampling
from .eigen import eigvals_batch

CONDITION_NAMES = (
    "monotonicity",
    "concavity",
    "boundary_limit",
    "ray_unboundedness",
    "radial_derivative_bound",
    "negative_direction_weight",
    "trace_growth",
)

BOUNDARY_SHELLS = np.array([10.0 ** (-j) for j in range(1, 14)])
CONCAVITY_TOL = 1e-10
BOUNDARY_LIMIT_TOL = 1e-3


@dataclass
class ConditionCheck:
    name: str
    holds: bool
    margin: float
    witness: np.ndarray | None = None
    constant: float | None = None
    note: str = ""
    trail: np.ndarray | None = None


@dataclass
class StructureReport:
    operator: str
    n: int
    seed: int
    sample_budget: int
    f_band: tuple
    checks: list = field(default_factory=list)

    def __getitem__(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    @property
    def all_hold(self):
        return all(c.holds for c in self.checks)

    def lines(self):
        out = [f"structure report: {self.operator} "
               f"(seed={self.seed}, budget={self.sample_budget}, band={self.f_band})"]
        for c in self.checks:
            status = "ok " if c.holds else "FAIL"
            extra = f"  constant={c.constant:.6g}" if c.constant is not None else ""
            note = f"  [{c.note}]" if c.note else ""
            out.append(f"  {status} {c.name:28s} margin={c.margin: .6e}{extra}{note}")
        return out


def _monotonicity(op, pts):
    g = op.gradient(pts)
    worst = np.min(g)
    i = np.unravel_index(np.argmin(g), g.shape)
    return ConditionCheck("monotonicity", holds=bool(worst > 0.0),
                          margin=float(worst), witness=pts[i[0]])


def _concavity(op, pts):
    h = op.hessian(pts)
    scale = 1.0 + np.sqrt(np.sum(h ** 2, axis=(-2, -1)))
    top = np.max(eigvals_batch(h), axis=-1) / scale
    worst = np.max(top)
    return ConditionCheck("concavity", holds=bool(worst <= CONCAVITY_TOL),
                          margin=float(-worst), witness=pts[int(np.argmax(top))])


def _boundary_limit(op, rng, ray_count):
    rays = sampling.boundary_rays(op.cone, rng, ray_count)
    finals = np.empty(len(rays))
    worst_trail = None
    for r, (start, d, t_exit) in enumerate(rays):
        pts = start[None, :] + (t_exit * (1.0 - BOUNDARY_SHELLS))[:, None] * d[None, :]
        vals = op.value(pts)
        finals[r] = vals[-1]
        if worst_trail is None or vals[-1] > worst_trail[-1]:
            worst_trail = vals
    worst = float(np.max(finals))
    tail = worst_trail[-5:]
    decisive_decay = bool(np.all(np.diff(tail) < 0)
                          and tail[-1] <= 0.8 * tail[-2]) if tail[-1] > 0 else True
    holds = worst <= BOUNDARY_LIMIT_TOL or decisive_decay
    note = "" if worst <= BOUNDARY_LIMIT_TOL else "certified via decay of the shell tail"
    return ConditionCheck("boundary_limit", holds=holds, margin=float(-worst),
                          note=note, trail=worst_trail)


def _ray_values(op, quantity):
    radii = 10.0 ** np.arange(0, 7)
    ones = np.ones(op.n)
    pts = radii[:, None] * ones[None, :]
    vals = quantity(pts, radii)
    return radii, vals


def _ray_unboundedness(op):
    radii, vals = _ray_values(op, lambda pts, r: op.value(pts))
    diffs = np.diff(vals)
    holds = bool(np.all(diffs > 0))
    return ConditionCheck("ray_unboundedness", holds=holds,
                          margin=float(np.min(diffs)), trail=vals,
                          note=f"f on the diagonal ray up to R=1e6; final {vals[-1]:.3e}")


def _trace_growth(op):
    def q(pts, r):
        g = op.gradient(pts)
        return (op.n * r ** 2) * np.sum(g, axis=-1)
    radii, vals = _ray_values(op, q)
    diffs = np.diff(vals)
    holds = bool(np.all(diffs > 0) and vals[-1] >= 1e6)
    return ConditionCheck("trace_growth", holds=holds, margin=float(np.min(diffs)),
                          trail=vals,
                          note=f"|lam|^2 sum f_i on the diagonal ray; final {vals[-1]:.3e}")


def _radial_derivative_bound(op, rng, budget, f_band):
    a, b = f_band
    if op.degree == 1.0:
        a = max(a, 1e-8)  # degree-one families only take positive values
        if not a < b:
            raise ValueError(f"band {f_band} is empty for {op.name}")
    dirs = sampling.cone_directions(op.cone, rng, budget, min_margin=1e-6)
    targets = rng.uniform(a, b, size=budget)
    pts = sampling.scale_to_level(op, dirs, targets)
    g = op.gradient(pts)
    euler = np.sum(g * pts, axis=-1)
    ratio = -euler / (1.0 + np.sum(g, axis=-1))
    k1 = float(max(0.0, np.max(ratio)))
    i = int(np.argmax(ratio))
    return ConditionCheck("radial_derivative_bound", holds=True, margin=float(np.min(euler)),
                          witness=pts[i], constant=k1,
                          note="empirical smallest feasible K1 over the band")


def _negative_direction_weight(op, rng, budget):
    dirs = sampling.cone_directions(op.cone, rng, budget, min_margin=1e-6)
    levels = np.exp(rng.uniform(np.log(1e-2), np.log(1e2), size=budget))
    pts = sampling.scale_to_level(op, dirs, levels)
    neg = pts < 0
    has_neg = np.any(neg, axis=-1)
    if not np.any(has_neg):
        return ConditionCheck("negative_direction_weight", holds=True,
                              margin=float("inf"), constant=None,
                              note="vacuous: no sampled point has a negative eigenvalue")
    g = op.gradient(pts[has_neg])
    total = np.sum(g, axis=-1, keepdims=True)
    ratios = np.where(neg[has_neg], g / total, np.inf)
    delta0 = float(np.min(ratios))
    i = int(np.argmin(np.min(ratios, axis=-1)))
    return ConditionCheck("negative_direction_weight", holds=bool(delta0 > 0.0),
                          margin=delta0, witness=pts[has_neg][i], constant=delta0,
                          note="min gradient weight on negative slots, "
                               "levels log-uniform in [1e-2, 1e2]")


def check_structure(op, sample_budget=2000, seed=0, f_band=(0.5, 2.0)):
    """Run all structure checks on seeded samples and collect a report.

    sample_budget is the number of interior sample points per pointwise
    check; boundary rays are capped at 64.  Zero budget is refused.
    """
    if sample_budget < 1:
        raise ValueError("sample_budget must be positive")
    a, b = f_band
    if not a < b:
        raise ValueError(f"f_band must be increasing, got {f_band}")
    rng = sampling.rng_from_seed(seed)
    pts = sampling.interior_points(op.cone, rng, sample_budget,
                                   radius_range=(1e-2, 1e2), min_margin=1e-6)
    report = StructureReport(operator=op.name, n=op.n, seed=seed,
                             sample_budget=sample_budget, f_band=tuple(f_band))
    report.checks.append(_monotonicity(op, pts))
    report.checks.append(_concavity(op, pts))
    report.checks.append(_boundary_limit(op, rng, min(sample_budget, 64)))
    report.checks.append(_ray_unboundedness(op))
    report.checks.append(_radial_derivative_bound(op, rng, sample_budget, f_band))
    report.checks.append(_negative_direction_weight(op, rng, sample_budget))
    report.checks.append(_trace_growth(op))
    return report
