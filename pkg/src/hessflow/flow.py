"""Parabolic flow solver for curvature-type operators on grids.

The evolution is u_t = F(lam(D2 u + chi)) - psi in the additive form, or
u_t = log F(...) - psi in the exponential form (so that exp(u_t + psi) = F).
Both are driven through the same code path: the exponential form evaluates
the log of the operator and scales its linearization by 1/F.

Steppers: forward Euler with an admissibility guard that halves dt, and
backward Euler solved by damped Newton with a hand-rolled matrix-free
conjugate-gradient inner loop.  Everything is deterministic: fixed iteration
orders, no threading, no randomized pivoting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import (
    ConeViolationError,
    FormViolationError,
    InvalidConfigurationError,
    StepFailureError,
    SteadyStateTimeoutError,
)
from .grids import (
    BOX,
    COMPONENTS,
    Grid,
    ScalarField,
    SymTensorField,
    hessian_comps,
    gradient_comps,
)
from .eigen import eigh_batch
from .operators import LogOf

ADDITIVE = "additive"
EXPONENTIAL = "exponential"

EXPLICIT = "explicit"
IMPLICIT = "implicit"


class GridFunction:
    """Space-time scalar data: callable on (coords, t) with a time derivative.

    fn maps (coords, t) to an array over the grid; fn_dt, when given, is the
    analytic time derivative, otherwise a central difference in t is used.
    """

    def __init__(self, fn, fn_dt=None, time_independent=False):
        self._fn = fn
        self._fn_dt = fn_dt
        self.time_independent = bool(time_independent)

    def __call__(self, coords, t):
        return np.asarray(self._fn(coords, t), dtype=float)

    def dt(self, coords, t):
        if self.time_independent:
            return np.zeros_like(self(coords, t))
        if self._fn_dt is not None:
            return np.asarray(self._fn_dt(coords, t), dtype=float)
        eps = 1e-6
        return (self(coords, t + eps) - self(coords, t - eps)) / (2 * eps)


def constant_function(c):
    return GridFunction(lambda coords, t: np.full(coords[0].shape, float(c)),
                        time_independent=True)


def probe_time_independent(fn, coords):
    """Best-effort check that a space-time function ignores t."""
    if getattr(fn, "time_independent", False):
        return True
    base = fn(coords, 0.0)
    scale = 1.0 + float(np.max(np.abs(base)))
    for t in (0.37, 1.91, 13.0):
        if np.max(np.abs(fn(coords, t) - base)) > 1e-12 * scale:
            return False
    return True


@dataclass
class NewtonConfig:
    residual_tol: float = 1e-10
    max_iters: int = 30
    damping_floor: float = 1e-4
    linear_tol: float = 1e-8
    admissibility_margin: float = 1e-8  # required relative cone margin

    def __post_init__(self):
        if self.residual_tol <= 0 or self.linear_tol <= 0:
            raise ValueError("tolerances must be positive")
        if not 0 < self.damping_floor <= 1:
            raise ValueError("damping_floor must lie in (0, 1]")


@dataclass(eq=False)
class ProblemSpec:
    """Full description of one flow run."""

    grid: Grid
    operator: object
    chi: SymTensorField
    psi: object
    phi_b: ScalarField
    phi_s: object = None
    form: str = ADDITIVE
    horizon: float = 1.0
    stepper: str = IMPLICIT
    dt: float = 0.01
    newton: NewtonConfig = field(default_factory=NewtonConfig)

    @cached_property
    def coords(self):
        return self.grid.coords()

    @cached_property
    def boundary_mask(self):
        return self.grid.boundary_mask()

    @cached_property
    def interior_mask(self):
        return ~self.boundary_mask

    @property
    def cone(self):
        return self.operator.cone

    def validate(self):
        if self.operator.n != self.grid.n:
            raise InvalidConfigurationError(
                f"operator dimension {self.operator.n} != grid dimension {self.grid.n}")
        if self.chi.grid.shape != self.grid.shape:
            raise InvalidConfigurationError("chi lives on a different grid")
        if self.phi_b.grid.shape != self.grid.shape:
            raise InvalidConfigurationError("initial data lives on a different grid")
        if self.form not in (ADDITIVE, EXPONENTIAL):
            raise InvalidConfigurationError(f"unknown form '{self.form}'")
        if self.stepper not in (EXPLICIT, IMPLICIT):
            raise InvalidConfigurationError(f"unknown stepper '{self.stepper}'")
        if self.horizon < 0:
            raise InvalidConfigurationError("horizon must be nonnegative")
        if self.dt <= 0:
            raise InvalidConfigurationError("dt must be positive")
        if self.grid.topology == BOX:
            if self.phi_s is None:
                raise InvalidConfigurationError("box runs need boundary data phi_s")
            mism = np.max(np.abs(self.phi_b.values[self.boundary_mask]
                                 - self.phi_s(self.coords, 0.0)[self.boundary_mask]))
            if mism > 1e-10:
                raise InvalidConfigurationError(
                    f"initial data disagrees with boundary data at t=0 "
                    f"(max mismatch {mism:.3e})")
        elif self.phi_s is not None:
            raise InvalidConfigurationError("periodic runs take no boundary data")
        rep = admissibility_of(self, self.phi_b.values)
        if not rep[0] > 0.0:
            raise InvalidConfigurationError(
                f"initial data is not admissible: relative margin {rep[0]:.3e} "
                f"at node {rep[1]}")


def augmented_eigen(problem, values):
    """Eigen data of D2 u + chi: (w, vecs) over the grid."""
    comps = hessian_comps(problem.grid, values) + problem.chi.comps
    mats = SymTensorField(problem.grid, comps).as_matrices()
    return eigh_batch(mats)


def admissibility_of(problem, values):
    """(min relative margin, worst node) of the augmented Hessian."""
    w = augmented_eigen(problem, values)[0]
    margins = problem.cone.margin(w)
    node = np.unravel_index(int(np.argmin(margins)), margins.shape)
    return float(margins[node]), tuple(int(i) for i in node)


@dataclass
class StepDiagnostics:
    dt: float
    newton_iters: int = 0
    residual_norm: float = 0.0
    residual_history: list = field(default_factory=list)
    linear_iters: int = 0
    min_margin: float = 0.0
    halvings: int = 0
    alpha_last: float = 1.0


@dataclass
class FlowState:
    u: ScalarField
    t: float
    ut: np.ndarray = None
    diagnostics: StepDiagnostics = None


@dataclass
class Trajectory:
    problem: ProblemSpec
    states: list = field(default_factory=list)
    rows: list = field(default_factory=list)
    terminal_event: str = None

    def append_state(self, state):
        if self.states and state.t <= self.states[-1].t:
            raise ValueError("trajectory times must increase strictly")
        self.states.append(state)

    @property
    def times(self):
        return np.array([s.t for s in self.states])

    @property
    def final(self):
        return self.states[-1]


def _operator_values(problem, w):
    """(f, sum-of-derivative scale) on eigenvalues w; form-aware."""
    op = problem.operator
    f = op.value(w)
    if problem.form == EXPONENTIAL:
        bad = f <= 0.0
        if np.any(bad):
            flat = int(np.argmin(f))
            node = np.unravel_index(flat, f.shape)
            raise FormViolationError(float(f[node]), where=tuple(int(i) for i in node))
        return np.log(f), f
    return f, None


def rhs_values(problem, values, t, psi_values=None):
    """Nodewise right-hand side F(lam(D2 u + chi)) - psi (log F for the
    exponential form).  Boundary nodes use one-sided stencils; the caller
    decides whether their rows mean anything."""
    w = augmented_eigen(problem, values)[0]
    fval, _ = _operator_values(problem, w)
    if psi_values is None:
        psi_values = problem.psi(problem.coords, t)
    return fval - psi_values


def rhs(problem, state):
    """Right-hand side at a flow state (uses the state's own time)."""
    return rhs_values(problem, state.u.values, state.t)


class Linearization:
    """Frozen-coefficient linearized operator at one iterate.

    apply(w) computes sum_ij F_ij (D2 w)_ij with F = P diag(f_i) P^T from
    the eigen decomposition of the augmented Hessian (times 1/F for the
    exponential form).
    """

    def __init__(self, problem, values):
        w, vecs = augmented_eigen(problem, values)
        op = problem.operator
        fi = op.gradient(w)
        if problem.form == EXPONENTIAL:
            f = op.value(w)
            fi = fi / f[..., None]
        self.problem = problem
        self.coeff = np.einsum("...ik,...k,...jk->...ij", vecs, fi, vecs)
        self.trace_coeff = np.sum(fi, axis=-1)

    def apply(self, warr):
        grid = self.problem.grid
        h = hessian_comps(grid, warr)
        out = np.zeros(grid.shape)
        for slot, (i, j) in enumerate(COMPONENTS[grid.n]):
            w = self.coeff[..., i, j] * h[..., slot]
            out += w if i == j else 2.0 * w
        return out


def linearized_apply(problem, values, warr):
    """One-shot form of the linearization (rebuilds the coefficients)."""
    return Linearization(problem, values).apply(warr)


def suggested_explicit_dt(problem, values):
    """Parabolic stability heuristic 0.2 h^2 / max sum f_i at the state."""
    w = augmented_eigen(problem, values)[0]
    fi = problem.operator.gradient(w)
    if problem.form == EXPONENTIAL:
        fi = fi / problem.operator.value(w)[..., None]
    h2 = min(problem.grid.spacing) ** 2
    return 0.2 * h2 / float(np.max(np.sum(fi, axis=-1)))


def _boundary_pin(problem, values, t):
    if problem.grid.topology == BOX:
        values[problem.boundary_mask] = problem.phi_s(problem.coords, t)[problem.boundary_mask]


def step_explicit(problem, state, dt, max_halvings=30):
    """Forward Euler with an admissibility guard that halves dt.

    Returns the new state; raises StepFailureError when thirty halvings
    cannot keep the augmented Hessian inside the cone.
    """
    r = rhs_values(problem, state.u.values, state.t)
    dt_k = float(dt)
    for halving in range(max_halvings + 1):
        t1 = state.t + dt_k
        trial = state.u.values + dt_k * r
        _boundary_pin(problem, trial, t1)
        margin, node = admissibility_of(problem, trial)
        if margin > 0.0:
            diag = StepDiagnostics(dt=dt_k, min_margin=margin, halvings=halving)
            ut = (trial - state.u.values) / dt_k
            return FlowState(u=ScalarField(problem.grid, trial, t1), t=t1,
                             ut=ut, diagnostics=diag)
        dt_k *= 0.5
    raise StepFailureError(
        f"explicit step left the cone after {max_halvings} halvings "
        f"(margin {margin:.3e})", worst_node=node)


def _cg(apply_a, b, interior, tol, max_iter):
    """Matrix-free conjugate gradients on the interior dof; deterministic."""
    x = np.zeros_like(b)
    r = np.where(interior, b, 0.0)
    p = r.copy()
    rs = float(np.sum(r * r))
    bnorm = math.sqrt(rs)
    if bnorm == 0.0:
        return x, 0
    iters = 0
    for iters in range(1, max_iter + 1):
        ap = np.where(interior, apply_a(p), 0.0)
        pap = float(np.sum(p * ap))
        if pap <= 0.0:
            break  # leaving the positive-definite regime; keep the current x
        alpha = rs / pap
        x += alpha * p
        r -= alpha * ap
        rs_new = float(np.sum(r * r))
        if math.sqrt(rs_new) <= tol * bnorm:
            break
        p = r + (rs_new / rs) * p
        rs = rs_new
    return x, iters


def step_implicit(problem, state, dt, cfg=None):
    """Backward Euler via damped Newton with matrix-free CG solves.

    The line search accepts an update only if the trial state keeps the
    required admissibility margin and strictly decreases the residual.
    """
    cfg = cfg if cfg is not None else problem.newton
    grid = problem.grid
    t1 = state.t + dt
    u0 = state.u.values
    v = u0.copy()
    _boundary_pin(problem, v, t1)
    margin, node = admissibility_of(problem, v)
    if not margin > 0.0:
        raise StepFailureError(
            f"boundary data at t={t1:g} made the state inadmissible "
            f"(margin {margin:.3e})", worst_node=node)

    psi1 = problem.psi(problem.coords, t1)
    interior = problem.interior_mask

    def residual(vals):
        g = (vals - u0) / dt - rhs_values(problem, vals, t1, psi_values=psi1)
        return np.where(interior, g, 0.0)

    r = residual(v)
    rnorm = float(np.max(np.abs(r)))
    hist = [rnorm]
    iters = 0
    lin_total = 0
    alpha = 1.0
    max_lin = max(200, 10 * int(math.isqrt(grid.node_count)))
    while rnorm > cfg.residual_tol:
        if iters >= cfg.max_iters:
            raise StepFailureError(
                f"Newton did not converge in {cfg.max_iters} iterations "
                f"(residual {rnorm:.3e})",
                diagnostics=StepDiagnostics(dt=dt, newton_iters=iters,
                                            residual_norm=rnorm,
                                            residual_history=hist))
        lin = Linearization(problem, v)
        apply_a = lambda w: w / dt - lin.apply(w)
        delta, li = _cg(apply_a, -r, interior, cfg.linear_tol, max_lin)
        lin_total += li

        alpha = 1.0
        accepted = False
        while alpha >= cfg.damping_floor:
            trial = v + alpha * delta
            margin, node = admissibility_of(problem, trial)
            if margin > cfg.admissibility_margin:
                r_trial = residual(trial)
                rt = float(np.max(np.abs(r_trial)))
                if rt < rnorm:
                    v, r, rnorm = trial, r_trial, rt
                    accepted = True
                    break
            alpha *= 0.5
        if not accepted:
            raise StepFailureError(
                f"Newton line search stalled at alpha < {cfg.damping_floor:g} "
                f"(residual {rnorm:.3e}, margin {margin:.3e})", worst_node=node,
                diagnostics=StepDiagnostics(dt=dt, newton_iters=iters,
                                            residual_norm=rnorm,
                                            residual_history=hist))
        hist.append(rnorm)
        iters += 1

    final_margin, _ = admissibility_of(problem, v)
    diag = StepDiagnostics(dt=dt, newton_iters=iters, residual_norm=rnorm,
                           residual_history=hist, linear_iters=lin_total,
                           min_margin=final_margin, alpha_last=alpha)
    ut = (v - u0) / dt
    return FlowState(u=ScalarField(grid, v, t1), t=t1, ut=ut, diagnostics=diag)


def initial_state(problem):
    """State at t = 0; u_t filled from the equation itself."""
    u = ScalarField(problem.grid, problem.phi_b.values, 0.0)
    ut = rhs_values(problem, u.values, 0.0)
    return FlowState(u=u, t=0.0, ut=ut)


def solve(problem, observer=None, sample_every=1, state_every=None,
          steady_tol=None, grad_stop=None, dt_retries=8):
    """March the flow to its horizon (or a terminal event).

    observer(state, problem) -> row is called after every sample_every-th
    step and once at the end; rows collect in the trajectory.  state_every
    keeps intermediate states (the initial and final states always stay).
    steady_tol stops early when sup|u_t| drops below it; grad_stop stops
    when max|grad u| exceeds it.  Implicit steps that fail are retried with
    halved dt up to dt_retries times.
    """
    problem.validate()
    state = initial_state(problem)
    traj = Trajectory(problem=problem)
    traj.append_state(state)
    if problem.horizon == 0.0:
        traj.terminal_event = "horizon"
        return traj

    step_index = 0
    last_kept = state
    last_row_step = -1
    eps = 1e-12 * max(1.0, problem.horizon)
    while state.t < problem.horizon - eps:
        dt_req = min(problem.dt, problem.horizon - state.t)
        if problem.stepper == EXPLICIT:
            dt_req = min(dt_req, suggested_explicit_dt(problem, state.u.values))
            new_state = step_explicit(problem, state, dt_req)
        else:
            dt_try = dt_req
            for attempt in range(dt_retries + 1):
                try:
                    new_state = step_implicit(problem, state, dt_try)
                    break
                except StepFailureError:
                    if attempt == dt_retries:
                        raise
                    dt_try *= 0.5
        state = new_state
        step_index += 1

        if observer is not None and step_index % sample_every == 0:
            traj.rows.append(observer(state, problem))
            last_row_step = step_index
        if state_every is not None and step_index % state_every == 0:
            traj.append_state(state)
            last_kept = state

        if steady_tol is not None and float(np.max(np.abs(state.ut))) < steady_tol:
            traj.terminal_event = "steady"
            break
        if grad_stop is not None:
            gmax = float(np.max(np.linalg.norm(
                gradient_comps(problem.grid, state.u.values), axis=-1)))
            if gmax > grad_stop:
                traj.terminal_event = "gradient_threshold"
                break

    if last_kept is not state:
        traj.append_state(state)
    if observer is not None and last_row_step != step_index:
        traj.rows.append(observer(state, problem))
    if traj.terminal_event is None:
        traj.terminal_event = "horizon"
    return traj


def steady_state(problem, tol=1e-8, max_steps=200, dt_cap=1e6):
    """Drive the flow to a stationary point by growing backward-Euler steps.

    Requires time-independent psi (and boundary data, on boxes).  dt doubles
    after every successful Newton solve and halves on failure; convergence
    is declared when sup|u_t| of a step falls below tol, which for backward
    Euler equals the elliptic residual of the new iterate.  Returns
    (ScalarField, info dict).
    """
    problem.validate()
    if not probe_time_independent(problem.psi, problem.coords):
        raise InvalidConfigurationError("steady_state needs time-independent psi")
    if problem.grid.topology == BOX and not probe_time_independent(
            problem.phi_s, problem.coords):
        raise InvalidConfigurationError(
            "steady_state needs time-independent boundary data")

    state = initial_state(problem)
    dt = problem.dt
    residual = float(np.max(np.abs(state.ut)))
    steps = 0
    newton_total = 0
    for steps in range(1, max_steps + 1):
        try:
            state = step_implicit(problem, state, dt)
        except StepFailureError:
            dt *= 0.5
            if dt < 1e-12:
                raise
            continue
        newton_total += state.diagnostics.newton_iters
        residual = float(np.max(np.abs(state.ut)))
        if residual < tol:
            info = {"steps": steps, "dt_final": dt, "residual": residual,
                    "newton_iters": newton_total}
            field_out = ScalarField(problem.grid, state.u.values, state.t)
            return field_out, info
        dt = min(dt * 2.0, dt_cap)
    raise SteadyStateTimeoutError(residual, steps)
