"""Subsolutions, curvature weights, and boundary barriers.

A subsolution candidate is any space-time series: something with
sample(coords, t) and rate(coords, t).  Three concrete flavors are
provided: LinearInTime (a frozen spatial profile drifting at a constant
rate), FunctionSeries (wrapping an analytic space-time function), and
TrajectorySeries (backed by the states of a finished run, with rates
taken as difference quotients).

The weight diagnostics follow the shape of the interior curvature
estimate: an exponent built from -log(1 - b s^2) with s = 1 + |grad(u -
usub)|^2, and the weighted maximal curvature it multiplies.  The barrier
is the boundary comparison function A1 v + A2 rho^2 - A3 (tangential
defect), measured against K (d + rho^2) on a half-ball at a boundary
node.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ConstraintViolationError, InvalidConfigurationError
from .flow import augmented_eigen, rhs_values
from .grids import BOX, ScalarField, gradient_comps
from .parallel import chunked, worker_count


class LinearInTime:
    """Series base(x) + rate * t with a frozen spatial profile."""

    times = None

    def __init__(self, base, rate):
        if isinstance(base, ScalarField):
            base = base.values
        self.base = np.asarray(base, dtype=float)
        self.rate_value = float(rate)

    def sample(self, coords, t):
        return self.base + self.rate_value * t

    def rate(self, coords, t):
        return np.full(self.base.shape, self.rate_value)


class FunctionSeries:
    """Series wrapping a space-time function with a .dt method."""

    times = None

    def __init__(self, fn):
        self.fn = fn

    def sample(self, coords, t):
        return np.asarray(self.fn(coords, t), dtype=float)

    def rate(self, coords, t):
        return np.asarray(self.fn.dt(coords, t), dtype=float)


class TrajectorySeries:
    """Series backed by the kept states of a run.

    Values interpolate linearly between states.  At a state's own time
    the rate is the state's stored u_t (the quotient the stepper
    accepted, or the equation's value at t = 0); between states it is the
    difference quotient of the bracketing pair.
    """

    def __init__(self, traj):
        if len(traj.states) < 2:
            raise InvalidConfigurationError(
                "need at least two kept states (run solve with state_every)")
        self._times = np.array([s.t for s in traj.states])
        self._fields = [s.u.values for s in traj.states]
        self._rates = [s.ut for s in traj.states]

    @property
    def times(self):
        return self._times.copy()

    def _bracket(self, t):
        ts = self._times
        if t < ts[0] - 1e-12 or t > ts[-1] + 1e-12:
            raise InvalidConfigurationError(
                f"time {t:g} outside the stored range [{ts[0]:g}, {ts[-1]:g}]")
        j = int(np.searchsorted(ts, t))
        if j < len(ts) and abs(ts[j] - t) <= 1e-12:
            return (j - 1, j) if j > 0 else (0, 1)
        return (j - 1, j) if j < len(ts) else (len(ts) - 2, len(ts) - 1)

    def sample(self, coords, t):
        i, j = self._bracket(t)
        ti, tj = self._times[i], self._times[j]
        w = np.clip((t - ti) / (tj - ti), 0.0, 1.0)
        return (1.0 - w) * self._fields[i] + w * self._fields[j]

    def rate(self, coords, t):
        hits = np.nonzero(np.abs(self._times - t) <= 1e-12)[0]
        if hits.size and self._rates[int(hits[0])] is not None:
            return self._rates[int(hits[0])]
        i, j = self._bracket(t)
        return (self._fields[j] - self._fields[i]) / (self._times[j] - self._times[i])


def as_series(usub):
    if hasattr(usub, "sample") and hasattr(usub, "rate"):
        return usub
    if callable(usub) and hasattr(usub, "dt"):
        return FunctionSeries(usub)
    raise InvalidConfigurationError(
        "subsolution must provide sample/rate or be a space-time function")


def slack_values(problem, usub, t):
    """Nodewise defect F(lam[usub]) - usub_t - psi at time t (form-aware)."""
    series = as_series(usub)
    coords = problem.coords
    vals = series.sample(coords, t)
    return rhs_values(problem, vals, t) - series.rate(coords, t)


@dataclass
class SubsolutionReport:
    satisfied: bool
    strict: bool
    min_slack: float
    initial_slack: float
    boundary_slack: float
    admissible: bool
    min_margin: float
    worst_node: tuple
    worst_time: float
    times: np.ndarray

    def lines(self):
        yield f"subsolution satisfied      {self.satisfied}"
        yield f"  min slack                {self.min_slack:.6e}"
        yield f"  initial slack            {self.initial_slack:.6e}"
        yield f"  boundary slack           {self.boundary_slack:.6e}"
        yield (f"  admissible               {self.admissible} "
               f"(min margin {self.min_margin:.6e})")
        yield f"  strict                   {self.strict}"


def verify_subsolution(problem, usub, times=None, strict_delta=0.0, tol=1e-10):
    """Check the subsolution inequalities over a sampled time grid.

    Requires F(lam[usub]) - usub_t - psi >= 0 at every node and sampled
    time, usub <= initial data at t = 0, and usub equal to the lateral
    boundary data on boxes (all up to tol).  strict_delta raises the bar
    for the strict flag only.
    """
    series = as_series(usub)
    if times is None:
        if series.times is not None:
            times = np.asarray(series.times, dtype=float)
        elif problem.horizon > 0:
            times = np.linspace(0.0, problem.horizon, 9)
        else:
            times = np.array([0.0])
    coords = problem.coords

    min_slack = math.inf
    min_margin = math.inf
    admissible = True
    worst_node = None
    worst_time = float(times[0])
    for t in times:
        vals = series.sample(coords, float(t))
        w = augmented_eigen(problem, vals)[0]
        margins = problem.cone.margin(w)
        m = float(np.min(margins))
        if m < min_margin:
            min_margin = m
        if m <= 0.0:
            admissible = False
            continue
        slack = rhs_values(problem, vals, float(t)) - series.rate(coords, float(t))
        node = np.unravel_index(int(np.argmin(slack)), slack.shape)
        s = float(slack[node])
        if s < min_slack:
            min_slack = s
            worst_node = tuple(int(i) for i in node)
            worst_time = float(t)
    if not np.isfinite(min_slack):
        min_slack = math.nan

    initial_slack = float(np.min(problem.phi_b.values - series.sample(coords, 0.0)))

    if problem.grid.topology == BOX:
        bmask = problem.boundary_mask
        dev = 0.0
        for t in times:
            diff = series.sample(coords, float(t)) - problem.phi_s(coords, float(t))
            dev = max(dev, float(np.max(np.abs(diff[bmask]))))
        boundary_slack = -dev
    else:
        boundary_slack = 0.0

    satisfied = (admissible and not math.isnan(min_slack) and min_slack >= 0.0
                 and initial_slack >= -tol and boundary_slack >= -tol)
    strict = satisfied and min_slack >= strict_delta
    return SubsolutionReport(satisfied=satisfied, strict=strict,
                             min_slack=min_slack, initial_slack=initial_slack,
                             boundary_slack=boundary_slack,
                             admissible=admissible, min_margin=min_margin,
                             worst_node=worst_node, worst_time=worst_time,
                             times=np.asarray(times, dtype=float))


def construct_linear_subsolution(problem, safety=0.0):
    """phi_b + A t with A = min_nodes (F(lam[phi_b]) - psi(0)) - safety.

    The drift leaves the spatial profile (hence its Hessian) alone, so
    for time-independent psi the defect equals safety at every node and
    time by construction.
    """
    if safety < 0:
        raise InvalidConfigurationError("safety must be nonnegative")
    w = augmented_eigen(problem, problem.phi_b.values)[0]
    if float(np.min(problem.cone.margin(w))) <= 0.0:
        raise InvalidConfigurationError("initial data is not admissible")
    r = rhs_values(problem, problem.phi_b.values, 0.0)
    return LinearInTime(problem.phi_b.values, float(np.min(r)) - safety)


def hessian_weight_exponent(problem, state, usub, a, b, delta01):
    """Exponent -log(1 - b s^2) + a (usub - u - delta t), s = 1 + |grad(u-usub)|^2.

    b must not exceed 1 / (8 b1^2) with b1 = sup s measured from the
    fields; that forces 1 - b s^2 >= 7/8 everywhere.  delta01 selects the
    time drift and must be 0 or 1.
    """
    if delta01 not in (0, 1):
        raise InvalidConfigurationError("delta01 must be 0 or 1")
    if b < 0:
        raise InvalidConfigurationError("b must be nonnegative")
    series = as_series(usub)
    coords = problem.coords
    ub = series.sample(coords, state.t)
    g = gradient_comps(problem.grid, state.u.values - ub)
    s = 1.0 + np.sum(g * g, axis=-1)
    b1 = float(np.max(s))
    bound = 1.0 / (8.0 * b1 * b1)
    if b > bound * (1.0 + 1e-12):
        raise ConstraintViolationError(
            f"b = {b:g} exceeds 1/(8 b1^2) = {bound:g} for measured b1 = {b1:g}")
    arg = 1.0 - b * s * s
    if float(np.min(arg)) < 0.875 - 1e-12:
        raise ConstraintViolationError(
            f"weight argument dropped to {float(np.min(arg)):g} despite the b bound")
    return -np.log(arg) + a * (ub - state.u.values - delta01 * state.t)


@dataclass(frozen=True)
class WeightedCurvature:
    value: float
    arg_node: tuple
    arg_time: float


def weighted_max_curvature(problem, state, usub, a, b, delta01):
    """Grid maximum of lam_max(D2 u + chi) e^{exponent} and where it sits."""
    exponent = hessian_weight_exponent(problem, state, usub, a, b, delta01)
    w = augmented_eigen(problem, state.u.values)[0]
    field = w[..., -1] * np.exp(exponent)
    node = np.unravel_index(int(np.argmax(field)), field.shape)
    return WeightedCurvature(value=float(field[node]),
                             arg_node=tuple(int(i) for i in node),
                             arg_time=state.t)


@dataclass(frozen=True)
class BarrierParams:
    A1: float
    A2: float
    A3: float
    s: float
    N: float
    delta: float
    x0: tuple
    K: float = 1.0

    def __post_init__(self):
        for name in ("A1", "A2", "A3", "s", "N"):
            if getattr(self, name) < 0:
                raise InvalidConfigurationError(f"{name} must be nonnegative")
        if self.delta <= 0 or self.K <= 0:
            raise InvalidConfigurationError("delta and K must be positive")


def _face_of(grid, x0):
    """(axis, side) of the unique face containing x0; corners rejected."""
    faces = []
    for axis, idx in enumerate(x0):
        if idx == 0:
            faces.append((axis, 0))
        elif idx == grid.shape[axis] - 1:
            faces.append((axis, 1))
    if not faces:
        raise InvalidConfigurationError("x0 must lie on the boundary")
    if len(faces) > 1:
        raise InvalidConfigurationError("x0 sits on a corner or edge")
    return faces[0]


def _barrier_geometry(problem, state, usub, x0, delta):
    """Shared precomputation: gap, distances, tangential defect, masks."""
    grid = problem.grid
    if grid.topology != BOX:
        raise InvalidConfigurationError("barriers are defined on box domains")
    face_axis, face_side = _face_of(grid, x0)
    coords = problem.coords
    x0_pos = np.array([coords[a][tuple(x0)] for a in range(grid.n)])

    # x0 must keep its delta-ball clear of every other face
    for axis in range(grid.n):
        lo = coords[axis].min()
        hi = coords[axis].max()
        gaps = [x0_pos[axis] - lo, hi - x0_pos[axis]]
        for side, gap in enumerate(gaps):
            if (axis, side) == (face_axis, face_side):
                continue
            if gap < delta:
                raise InvalidConfigurationError(
                    f"x0 is {gap:g} from face (axis {axis}, side {side}); "
                    f"needs at least delta = {delta:g}")

    plane = coords[face_axis].min() if face_side == 0 else coords[face_axis].max()
    d = np.abs(coords[face_axis] - plane)
    rho2 = np.zeros(grid.shape)
    for a in range(grid.n):
        rho2 += (coords[a] - x0_pos[a]) ** 2
    ball = rho2 <= delta * delta

    idx = np.indices(grid.shape)
    other_face = np.zeros(grid.shape, dtype=bool)
    for axis in range(grid.n):
        for side, extreme in ((0, 0), (1, grid.shape[axis] - 1)):
            if (axis, side) == (face_axis, face_side):
                continue
            other_face |= idx[axis] == extreme
    excluded = ball & other_face
    mask = ball & ~other_face

    series = as_series(usub)
    gap = state.u.values - series.sample(coords, state.t)
    defect = state.u.values - problem.phi_s(coords, state.t)
    g = gradient_comps(grid, defect)
    tangential = np.zeros(grid.shape)
    for a in range(grid.n):
        if a != face_axis:
            tangential += g[..., a] ** 2
    return {"face": (face_axis, face_side), "d": d, "rho2": rho2,
            "mask": mask, "excluded": excluded, "gap": gap,
            "tangential": tangential}


@dataclass
class BarrierReport:
    field: ScalarField
    min_margin: float
    mask: np.ndarray
    excluded_count: int
    face_axis: int
    face_side: int
    params: BarrierParams


def boundary_barrier(problem, state, usub, params):
    """Barrier A1 v + A2 rho^2 - A3 (tangential defect) at boundary node x0.

    v = (u - usub) + s d - N d^2 / 2 with d the distance to x0's face and
    rho the distance to x0.  Reports the field (meaningful on the mask)
    and the min over the delta-ball of barrier - K (d + rho^2); nodes of
    the ball on other faces are excluded and counted.
    """
    geo = _barrier_geometry(problem, state, usub, params.x0, params.delta)
    d, rho2 = geo["d"], geo["rho2"]
    v = geo["gap"] + params.s * d - 0.5 * params.N * d * d
    psi_field = params.A1 * v + params.A2 * rho2 - params.A3 * geo["tangential"]
    margin = psi_field - params.K * (d + rho2)
    mask = geo["mask"]
    min_margin = float(np.min(margin[mask]))
    return BarrierReport(field=ScalarField(problem.grid, psi_field, state.t),
                         min_margin=min_margin, mask=mask,
                         excluded_count=int(np.count_nonzero(geo["excluded"])),
                         face_axis=geo["face"][0], face_side=geo["face"][1],
                         params=params)


@dataclass
class BarrierSearch:
    found: BarrierParams
    margin: float
    tried: int
    table: list


def search_barrier_constants(problem, state, usub, x0, delta, K=1.0,
                             s_grid=(1.0, 0.5, 0.25, 0.125), max_exponent=20,
                             threads=None):
    """Search doubling grids for barrier constants with margin >= 0.

    Candidates take A1, A2, A3, N in powers of two up to 2^max_exponent
    and s from s_grid, explored in stages of growing largest exponent so
    the first hit has the smallest constants in that order.  Evaluation
    parallelizes over candidate chunks; results are collected in
    submission order, so the outcome is deterministic.  Returns the found
    parameters (or None), the margin, and the full table of tried
    combinations.
    """
    geo = _barrier_geometry(problem, state, usub, x0, delta)
    mask = geo["mask"]
    gap = geo["gap"][mask]
    d = geo["d"][mask]
    rho2 = geo["rho2"][mask]
    tan = geo["tangential"][mask]
    base_cost = K * (d + rho2)

    def margin_of(cand):
        a1, a2, a3, nn, s = cand
        v = gap + s * d - 0.5 * nn * d * d
        return float(np.min(a1 * v + a2 * rho2 - a3 * tan - base_cost))

    def eval_chunk(chunk):
        return [margin_of(c) for c in chunk]

    table = []
    tried = 0
    workers = threads if threads is not None else worker_count()
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for stage in range(max_exponent + 1):
            cands = []
            for e1 in range(stage + 1):
                for e2 in range(stage + 1):
                    for e3 in range(stage + 1):
                        for en in range(stage + 1):
                            if max(e1, e2, e3, en) != stage:
                                continue
                            for s in s_grid:
                                cands.append((2.0 ** e1, 2.0 ** e2,
                                              2.0 ** e3, 2.0 ** en, s))
            chunks = chunked(cands, max(1, len(cands) // (4 * workers) + 1))
            results = []
            for part in pool.map(eval_chunk, chunks):
                results.extend(part)
            tried += len(cands)
            hit = None
            for cand, m in zip(cands, results):
                table.append(cand + (m,))
                if hit is None and m >= 0.0:
                    hit = (cand, m)
            if hit is not None:
                a1, a2, a3, nn, s = hit[0]
                params = BarrierParams(A1=a1, A2=a2, A3=a3, s=s, N=nn,
                                       delta=delta, x0=tuple(x0), K=K)
                return BarrierSearch(found=params, margin=hit[1],
                                     tried=tried, table=table)
    return BarrierSearch(found=None, margin=-math.inf, tried=tried, table=table)
