"""Run diagnostics: sup-norm rows, growth fits, blow-up detection.

A MonitorRow is one sampled line of the run log: sup norms of the
solution, its gradient, the pure Hessian (spectral radius of D2 u, not of
the augmented tensor), and u_t, plus optional weighted-curvature and
subsolution-slack columns.  Everything downstream (CSV, figures, growth
verdicts) consumes these rows, so synthetic rows can be injected to test
the detectors themselves.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConstraintViolationError, InvalidConfigurationError
from .eigen import eigvals_batch
from .grids import BOX, SymTensorField, gradient_comps, hessian_comps
from .subsolutions import as_series, slack_values, weighted_max_curvature

CSV_COLUMNS = ("t", "supU", "supGradU", "supHessU", "supUt", "W", "slack")

B_BOUNDED = 1e-3
B_EXPONENTIAL = 0.1
FIT_RESIDUAL = 0.1


@dataclass
class MonitorRow:
    t: float
    sup_u: float
    sup_grad_u: float
    sup_hess_u: float
    sup_ut: float
    w_value: float = None
    slack: float = None

    def cells(self):
        vals = (self.t, self.sup_u, self.sup_grad_u, self.sup_hess_u,
                self.sup_ut, self.w_value, self.slack)
        return ["" if v is None else f"{v:.17g}" for v in vals]


@dataclass
class WeightParams:
    a: float
    b: float
    delta01: int


@dataclass
class MonitorOptions:
    usub: object = None
    weight: WeightParams = None


def record(state, problem, options=None):
    """One monitor row for a flow state."""
    u = state.u.values
    grid = problem.grid
    g = gradient_comps(grid, u)
    hess = SymTensorField(grid, hessian_comps(grid, u)).as_matrices()
    spec_rad = np.max(np.abs(eigvals_batch(hess)), axis=-1)
    sup_ut = 0.0 if state.ut is None else float(np.max(np.abs(state.ut)))

    w_value = None
    slack = None
    if options is not None and options.usub is not None:
        slack = float(np.min(slack_values(problem, options.usub, state.t)))
        if options.weight is not None:
            wp = options.weight
            w_value = weighted_max_curvature(problem, state, options.usub,
                                             wp.a, wp.b, wp.delta01).value
    elif options is not None and options.weight is not None:
        raise InvalidConfigurationError("weight tracking needs a subsolution")

    return MonitorRow(t=state.t,
                      sup_u=float(np.max(np.abs(u))),
                      sup_grad_u=float(np.max(np.linalg.norm(g, axis=-1))),
                      sup_hess_u=float(np.max(spec_rad)),
                      sup_ut=sup_ut, w_value=w_value, slack=slack)


def monitor_observer(options=None):
    """Observer for solve(): state, problem -> MonitorRow."""
    return lambda state, problem: record(state, problem, options)


def write_monitor_csv(path, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for row in rows:
            writer.writerow(row.cells())


def read_monitor_csv(path):
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != CSV_COLUMNS:
            raise InvalidConfigurationError(f"unexpected monitor header {header}")
        for rec in reader:
            vals = [None if cell == "" else float(cell) for cell in rec]
            rows.append(MonitorRow(*vals))
    return rows


def _rows_of(traj_or_rows):
    rows = getattr(traj_or_rows, "rows", traj_or_rows)
    return list(rows)


@dataclass
class UtBoundReport:
    holds: bool
    worst_violation: float
    initial_bound: float
    psi_t_sup: float


def time_derivative_bound_check(traj, problem, tol=1e-7):
    """Check sup|u_t|(t) <= (parabolic-boundary bound) + t sup|psi_t| + tol.

    The parabolic boundary contributes sup|u_t| at t = 0 and, on boxes,
    the time derivative of the lateral data over the sampled times.
    Operates on the trajectory's monitor rows (synthetic rows included).
    """
    rows = _rows_of(traj)
    if not rows:
        raise InvalidConfigurationError("trajectory has no monitor rows")
    states = getattr(traj, "states", [])
    if states and states[0].ut is not None:
        m0 = float(np.max(np.abs(states[0].ut)))
    else:
        m0 = rows[0].sup_ut

    coords = problem.coords
    times = [0.0] + [row.t for row in rows]
    psi_t_sup = max(float(np.max(np.abs(problem.psi.dt(coords, t))))
                    for t in times)
    if problem.grid.topology == BOX:
        bmask = problem.boundary_mask
        lateral = max(float(np.max(np.abs(problem.phi_s.dt(coords, t)[bmask])))
                      for t in times)
        m0 = max(m0, lateral)

    worst = -math.inf
    for row in rows:
        worst = max(worst, row.sup_ut - (m0 + row.t * psi_t_sup))
    return UtBoundReport(holds=worst <= tol, worst_violation=worst,
                         initial_bound=m0, psi_t_sup=psi_t_sup)


@dataclass
class GrowthFit:
    C: float
    B: float
    residual: float
    verdict: str


def growth_fit(traj):
    """Fit sup|D2 u| ~ C e^{B t} over the trailing half of the rows.

    Verdicts: Bounded when B <= 1e-3 with a clean fit, ExponentialGrowth
    when B >= 0.1 with a clean fit, otherwise Inconclusive.
    """
    rows = _rows_of(traj)
    if len(rows) < 10:
        raise InvalidConfigurationError(
            f"growth fit needs at least 10 rows, got {len(rows)}")
    tail = rows[len(rows) // 2:]
    t = np.array([row.t for row in tail])
    y = np.array([row.sup_hess_u for row in tail])
    if np.any(y <= 0.0) or t[-1] - t[0] <= 0.0:
        return GrowthFit(C=math.nan, B=math.nan, residual=math.inf,
                         verdict="Inconclusive")
    slope, intercept = np.polyfit(t, np.log(y), 1)
    fitted = slope * t + intercept
    residual = float(np.sqrt(np.mean((np.log(y) - fitted) ** 2)))
    B = float(slope)
    if B <= B_BOUNDED and residual < FIT_RESIDUAL:
        verdict = "Bounded"
    elif B >= B_EXPONENTIAL and residual < FIT_RESIDUAL:
        verdict = "ExponentialGrowth"
    else:
        verdict = "Inconclusive"
    return GrowthFit(C=float(np.exp(intercept)), B=B, residual=residual,
                     verdict=verdict)


@dataclass
class BlowupVerdict:
    kind: str
    first_index: int
    crossing_time: float
    corollary_ok: bool
    growth: GrowthFit


def blowup_detector(traj, grad_threshold, window=3):
    """Windowed gradient blow-up heuristic plus the no-blow-up corollary.

    Flags GradientBlowup when sup|grad u| crosses the threshold and its
    discrete log-derivative was strictly increasing over the last
    `window` intervals before the crossing.  On runs that never cross,
    checks the contrapositive: the Hessian growth fit must not come back
    ExponentialGrowth (corollary_ok reports this).
    """
    if window < 3:
        raise InvalidConfigurationError("window must be at least 3")
    rows = _rows_of(traj)
    t = np.array([row.t for row in rows])
    g = np.array([row.sup_grad_u for row in rows])

    crossing = None
    for i, gi in enumerate(g):
        if gi > grad_threshold:
            crossing = i
            break

    kind = "NoBlowup"
    crossing_time = math.nan
    if crossing is not None and crossing >= window + 1 and np.all(g[:crossing + 1] > 0):
        logd = np.diff(np.log(g[:crossing + 1])) / np.diff(t[:crossing + 1])
        recent = logd[-window:]
        if np.all(np.diff(recent) > 0):
            kind = "GradientBlowup"
            crossing_time = float(t[crossing])

    growth = None
    corollary_ok = True
    if crossing is None and len(rows) >= 10:
        growth = growth_fit(rows)
        corollary_ok = growth.verdict != "ExponentialGrowth"
    return BlowupVerdict(kind=kind,
                         first_index=-1 if crossing is None else crossing,
                         crossing_time=crossing_time,
                         corollary_ok=corollary_ok, growth=growth)


@dataclass(frozen=True)
class SquaredSolutionWeight:
    """Exponent (u - min u + 1)^2 built from the solution itself."""


@dataclass
class SubsolutionWeight:
    """Exponent -log(1 - b v^2) + A (usub + w - B t), v = usub - u + sup(u-usub) + 1."""

    usub: object
    A: float
    B: float
    b: float = None
    w: np.ndarray = None


@dataclass(frozen=True)
class GradientPeak:
    value: float
    arg_node: tuple


def weighted_gradient_peak(problem, state, mode):
    """Max over nodes of |grad u| e^{phi} with phi set by the mode."""
    u = state.u.values
    coords = problem.coords
    if isinstance(mode, SquaredSolutionWeight):
        phi = (u - float(np.min(u)) + 1.0) ** 2
    elif isinstance(mode, SubsolutionWeight):
        series = as_series(mode.usub)
        ub = series.sample(coords, state.t)
        v = ub - u + float(np.max(u - ub)) + 1.0
        v2_sup = float(np.max(v * v))
        b = mode.b if mode.b is not None else 1.0 / (14.0 * v2_sup)
        if 14.0 * b * v2_sup > 1.0 + 1e-12:
            raise ConstraintViolationError(
                f"b = {b:g} violates 14 b v^2 <= 1 with sup v^2 = {v2_sup:g}")
        wfield = 0.0 if mode.w is None else mode.w
        phi = -np.log(1.0 - b * v * v) + mode.A * (ub + wfield - mode.B * state.t)
    else:
        raise InvalidConfigurationError(f"unknown weight mode {mode!r}")
    g = np.linalg.norm(gradient_comps(problem.grid, u), axis=-1)
    field = g * np.exp(phi)
    node = np.unravel_index(int(np.argmax(field)), field.shape)
    return GradientPeak(value=float(field[node]),
                        arg_node=tuple(int(i) for i in node))
