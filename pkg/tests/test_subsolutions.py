"""Subsolution verification, weight exponents, and barrier search tests."""

import numpy as np
import pytest

from hessflow.errors import ConstraintViolationError, InvalidConfigurationError
from hessflow.flow import (
    FlowState,
    GridFunction,
    ProblemSpec,
    constant_function,
    initial_state,
    solve,
)
from hessflow.grids import BOX, Grid, ScalarField, SymTensorField
from hessflow.operators import SigmaRoot
from hessflow.subsolutions import (
    BarrierParams,
    FunctionSeries,
    LinearInTime,
    TrajectorySeries,
    as_series,
    boundary_barrier,
    construct_linear_subsolution,
    hessian_weight_exponent,
    search_barrier_constants,
    slack_values,
    verify_subsolution,
    weighted_max_curvature,
)

AMP = 0.1


def torus_problem(nx=24):
    grid = Grid(shape=(nx, nx), lengths=(2 * np.pi, 2 * np.pi))
    x, y = grid.coords()
    psi = GridFunction(lambda c, t: 2.0 + 0.1 * np.sin(c[0]),
                       time_independent=True)
    return ProblemSpec(grid=grid, operator=SigmaRoot(2, 2),
                       chi=SymTensorField.scaled_identity(grid, 2.0),
                       psi=psi,
                       phi_b=ScalarField(grid, 0.05 * np.sin(x) * np.sin(y)),
                       horizon=1.0, dt=0.05)


def box_problem():
    grid = Grid(shape=(33, 33), lengths=(1.0, 1.0), topology=BOX)
    x, y = grid.coords()
    fn = lambda c, t: c[0] * c[1]
    return ProblemSpec(grid=grid, operator=SigmaRoot(2, 2),
                       chi=SymTensorField.scaled_identity(grid, 2.0),
                       psi=constant_function(np.sqrt(3.0)),
                       phi_b=ScalarField(grid, x * y), phi_s=GridFunction(fn),
                       horizon=0.02, dt=0.01)


def box_subsolution(problem):
    """xy - 0.02 bump + A t, strict under the product solution."""
    x, y = problem.coords
    base = x * y - 0.02 * np.sin(np.pi * x) * np.sin(np.pi * y)
    s0 = slack_values(problem, LinearInTime(base, 0.0), 0.0)
    return LinearInTime(base, float(np.min(s0)) - 0.1)


class TestConstructAndVerify:
    def test_construct_slack_equals_safety(self):
        p = torus_problem()
        usub = construct_linear_subsolution(p, 0.1)
        assert usub.rate_value == pytest.approx(-0.24971507281317776, rel=1e-12)
        rep = verify_subsolution(p, usub, strict_delta=0.05)
        # psi is time-independent, so the defect is exactly the safety margin
        assert rep.min_slack == pytest.approx(0.1, rel=1e-12)
        assert rep.initial_slack == 0.0
        assert rep.boundary_slack == 0.0
        assert rep.satisfied and rep.strict
        assert rep.min_margin > 0

    def test_strict_threshold_bites(self):
        p = torus_problem()
        usub = construct_linear_subsolution(p, 0.1)
        rep = verify_subsolution(p, usub, strict_delta=0.2)
        assert rep.satisfied and not rep.strict

    def test_zero_safety_is_borderline(self):
        p = torus_problem()
        usub = construct_linear_subsolution(p, 0.0)
        rep = verify_subsolution(p, usub)
        assert rep.min_slack == pytest.approx(0.0, abs=1e-12)

    def test_negative_safety_rejected(self):
        with pytest.raises(InvalidConfigurationError):
            construct_linear_subsolution(torus_problem(), -0.1)

    def test_time_perturbation_shifts_slack_exactly(self):
        p = torus_problem()
        usub = construct_linear_subsolution(p, 0.1)
        eps = 0.037
        pert = LinearInTime(usub.base, usub.rate_value + eps)
        rep = verify_subsolution(p, usub)
        rep2 = verify_subsolution(p, pert)
        assert rep.min_slack - rep2.min_slack == pytest.approx(eps, rel=1e-10)

    def test_inadmissible_candidate_reported(self):
        p = torus_problem()
        x, _ = p.coords
        # huge concave profile pushes the augmented Hessian out of the cone
        bad = LinearInTime(5.0 * np.sin(x), 0.0)
        rep = verify_subsolution(p, bad)
        assert not rep.admissible
        assert not rep.satisfied
        assert rep.min_margin <= 0

    def test_initial_ordering_enforced(self):
        p = torus_problem()
        usub = construct_linear_subsolution(p, 0.1)
        above = LinearInTime(usub.base + 1e-6, usub.rate_value)
        rep = verify_subsolution(p, above)
        assert rep.initial_slack == pytest.approx(-1e-6, rel=1e-6)
        assert not rep.satisfied

    def test_box_boundary_equality_tracked(self):
        p = box_problem()
        usub = box_subsolution(p)
        rep = verify_subsolution(p, usub, times=[0.0])
        # the bump vanishes on the faces, so only the drift breaks equality
        assert rep.boundary_slack == pytest.approx(0.0, abs=1e-12)
        assert rep.satisfied
        rep2 = verify_subsolution(p, usub, times=[0.0, 0.02])
        assert rep2.boundary_slack == pytest.approx(0.02 * usub.rate_value,
                                                    rel=1e-12)


class TestSeries:
    def test_trajectory_series_slack_vanishes_at_state_times(self):
        grid = Grid(shape=(24, 24), lengths=(2 * np.pi, 2 * np.pi))
        x, y = grid.coords()

        def psi_fn(coords, t):
            s = AMP * np.exp(-t) * np.sin(coords[0]) * np.sin(coords[1])
            c = AMP * np.exp(-t) * np.cos(coords[0]) * np.cos(coords[1])
            return np.sqrt((2 - s) ** 2 - c ** 2) + s

        p = ProblemSpec(grid=grid, operator=SigmaRoot(2, 2),
                        chi=SymTensorField.scaled_identity(grid, 2.0),
                        psi=GridFunction(psi_fn),
                        phi_b=ScalarField(grid, AMP * np.sin(x) * np.sin(y)),
                        horizon=0.05, dt=0.01)
        traj = solve(p, state_every=1)
        series = TrajectorySeries(traj)
        rep = verify_subsolution(p, series)
        # backward quotients reproduce the accepted Newton residual
        assert abs(rep.min_slack) < 1e-8
        assert rep.initial_slack == 0.0

    def test_function_series_slack_is_stencil_sized(self):
        p = torus_problem()
        x, y = p.coords

        def exact_fn(coords, t):
            return 0.05 * np.sin(coords[0]) * np.sin(coords[1])

        # stationary in time, psi mismatched: slack = F - psi, order h^2 away
        # from the continuum value at this resolution
        fn = GridFunction(exact_fn, time_independent=True)
        vals = slack_values(p, FunctionSeries(fn), 0.0)
        direct = slack_values(p, LinearInTime(p.phi_b.values, 0.0), 0.0)
        assert np.allclose(vals, direct, atol=1e-14)

    def test_trajectory_series_validation(self):
        p = torus_problem()
        traj = solve(p)
        # only first and last states kept, that is still two
        series = TrajectorySeries(traj)
        with pytest.raises(InvalidConfigurationError):
            series.sample(p.coords, -1.0)
        with pytest.raises(InvalidConfigurationError):
            series.sample(p.coords, p.horizon + 1.0)

    def test_as_series_rejects_junk(self):
        with pytest.raises(InvalidConfigurationError):
            as_series(42)


class TestWeightExponent:
    def test_matching_fields_give_constant(self):
        p = torus_problem()
        st = initial_state(p)
        same = LinearInTime(st.u.values, 0.0)
        eta = hessian_weight_exponent(p, st, same, 0.0, 0.1, 0)
        assert np.max(np.abs(eta - (-np.log(0.9)))) == 0.0

    def test_b_zero_degenerates_to_linear_term(self):
        p = box_problem()
        traj = solve(p)
        st = traj.final
        usub = box_subsolution(p)
        a = 0.7
        eta = hessian_weight_exponent(p, st, usub, a, 0.0, 1)
        ref = a * (usub.sample(p.coords, st.t) - st.u.values - st.t)
        assert np.max(np.abs(eta - ref)) < 1e-15

    def test_b_bound_enforced_with_measured_value(self):
        p = torus_problem()
        st = initial_state(p)
        same = LinearInTime(st.u.values, 0.0)
        # u = usub means b1 = 1, bound = 1/8
        with pytest.raises(ConstraintViolationError, match="b1 = 1"):
            hessian_weight_exponent(p, st, same, 0.0, 0.2, 0)
        eta = hessian_weight_exponent(p, st, same, 0.0, 1.0 / 8.0, 0)
        assert np.all(1.0 - (1.0 / 8.0) >= 7.0 / 8.0 - 1e-12)
        assert np.all(np.isfinite(eta))

    def test_delta_flag_validated(self):
        p = torus_problem()
        st = initial_state(p)
        same = LinearInTime(st.u.values, 0.0)
        with pytest.raises(InvalidConfigurationError):
            hessian_weight_exponent(p, st, same, 0.0, 0.0, 2)


class TestWeightedCurvature:
    def test_identity_hessian_gives_one(self):
        grid = Grid(shape=(17, 17), lengths=(1.0, 1.0), topology=BOX)
        x, y = grid.coords()
        u = 0.5 * (x * x + y * y)
        p = ProblemSpec(grid=grid, operator=SigmaRoot(2, 2),
                        chi=SymTensorField.zero(grid),
                        psi=constant_function(0.0),
                        phi_b=ScalarField(grid, u))
        st = FlowState(u=ScalarField(grid, u), t=0.0)
        same = LinearInTime(u, 0.0)
        W = weighted_max_curvature(p, st, same, 0.0, 0.0, 0)
        assert W.value == pytest.approx(1.0, abs=1e-9)

    def test_largest_eigenvalue_wins(self):
        grid = Grid(shape=(17, 17), lengths=(1.0, 1.0), topology=BOX)
        x, y = grid.coords()
        u = 0.5 * (x * x + 5.0 * y * y)
        p = ProblemSpec(grid=grid, operator=SigmaRoot(2, 2),
                        chi=SymTensorField.zero(grid),
                        psi=constant_function(0.0),
                        phi_b=ScalarField(grid, u))
        st = FlowState(u=ScalarField(grid, u), t=0.0)
        W = weighted_max_curvature(p, st, LinearInTime(u, 0.0), 0.0, 0.0, 0)
        assert W.value == pytest.approx(5.0, abs=1e-9)
        assert W.arg_time == 0.0

    def test_axis_permutation_invariance(self):
        grid = Grid(shape=(24, 24), lengths=(2 * np.pi, 2 * np.pi))
        x, y = grid.coords()
        u = 0.04 * np.sin(x) * np.sin(2 * y)
        vals = {}
        for tag, field in (("a", u), ("b", u.T.copy())):
            p = ProblemSpec(grid=grid, operator=SigmaRoot(2, 2),
                            chi=SymTensorField.scaled_identity(grid, 2.0),
                            psi=constant_function(0.0),
                            phi_b=ScalarField(grid, field))
            st = FlowState(u=ScalarField(grid, field), t=0.0)
            vals[tag] = weighted_max_curvature(
                p, st, LinearInTime(field, 0.0), 0.0, 0.0, 0).value
        assert vals["a"] == pytest.approx(vals["b"], rel=1e-12)


@pytest.fixture(scope="module")
def box_run():
    p = box_problem()
    traj = solve(p)
    return p, traj.final, box_subsolution(p)


class TestBarrier:
    X0 = (16, 0)
    DELTA = 0.25

    def test_pure_distance_case(self, box_run):
        p, state, _ = box_run
        same = LinearInTime(state.u.values, 0.0)
        params = BarrierParams(A1=1.0, A2=1.0, A3=0.0, s=0.0, N=0.0,
                               delta=self.DELTA, x0=self.X0, K=1.0)
        rep = boundary_barrier(p, state, same, params)
        # u = usub and s = N = A3 = 0 leaves A2 rho^2 - K (d + rho^2) = -d,
        # minimized at the deepest node of the ball
        assert rep.min_margin == pytest.approx(-self.DELTA, abs=1e-12)
        assert rep.excluded_count == 0
        assert (rep.face_axis, rep.face_side) == (1, 0)

    def test_tangential_term_vanishes_on_exact_boundary_match(self, box_run):
        p, state, usub = box_run
        params = BarrierParams(A1=2.0, A2=3.0, A3=7.0, s=0.5, N=1.0,
                               delta=self.DELTA, x0=self.X0, K=1.0)
        rep = boundary_barrier(p, state, usub, params)
        x, y = p.coords
        d = np.abs(y)
        rho2 = (x - x[self.X0]) ** 2 + (y - y[self.X0]) ** 2
        gap = state.u.values - usub.sample(p.coords, state.t)
        v = gap + params.s * d - 0.5 * params.N * d * d
        ref = params.A1 * v + params.A2 * rho2
        # the run's solution equals the boundary data to solver tolerance,
        # so the tangential defect is negligible
        assert np.max(np.abs(rep.field.values - ref)[rep.mask]) < 1e-12

    def test_search_finds_certifying_constants(self, box_run):
        p, state, usub = box_run
        res = search_barrier_constants(p, state, usub, self.X0, self.DELTA)
        assert res.found is not None
        assert res.found.A1 == 1.0
        assert res.found.A2 == 2.0
        assert res.found.A3 == 1.0
        assert res.found.s == 1.0
        assert res.found.N == 1.0
        assert res.margin == pytest.approx(0.0046209064980781, rel=1e-9)
        assert res.tried == 64
        assert len(res.table) == 64
        # the report at the found constants reproduces the margin
        rep = boundary_barrier(p, state, usub, res.found)
        assert rep.min_margin == pytest.approx(res.margin, rel=1e-12)

    def test_search_is_deterministic(self, box_run):
        p, state, usub = box_run
        a = search_barrier_constants(p, state, usub, self.X0, self.DELTA)
        b = search_barrier_constants(p, state, usub, self.X0, self.DELTA,
                                     threads=1)
        assert a.found == b.found
        assert a.margin == b.margin
        assert a.tried == b.tried

    def test_search_can_fail(self, box_run):
        p, state, usub = box_run
        res = search_barrier_constants(p, state, usub, self.X0, self.DELTA,
                                       K=1e9, max_exponent=2)
        assert res.found is None
        assert res.margin == -np.inf
        assert res.tried == len(res.table)

    def test_corner_and_placement_validation(self, box_run):
        p, state, usub = box_run
        params = dict(A1=1.0, A2=1.0, A3=1.0, s=1.0, N=1.0, delta=self.DELTA,
                      K=1.0)
        with pytest.raises(InvalidConfigurationError, match="corner"):
            boundary_barrier(p, state, usub,
                             BarrierParams(x0=(0, 0), **params))
        with pytest.raises(InvalidConfigurationError, match="boundary"):
            boundary_barrier(p, state, usub,
                             BarrierParams(x0=(5, 5), **params))
        # on-face node too close to a corner for this delta
        with pytest.raises(InvalidConfigurationError, match="delta"):
            boundary_barrier(p, state, usub,
                             BarrierParams(x0=(2, 0), **params))

    def test_torus_rejected(self):
        p = torus_problem()
        st = initial_state(p)
        same = LinearInTime(st.u.values, 0.0)
        params = BarrierParams(A1=1.0, A2=1.0, A3=1.0, s=1.0, N=1.0,
                               delta=0.25, x0=(0, 5), K=1.0)
        with pytest.raises(InvalidConfigurationError, match="box"):
            boundary_barrier(p, st, same, params)

    def test_param_validation(self):
        with pytest.raises(InvalidConfigurationError):
            BarrierParams(A1=-1.0, A2=1.0, A3=1.0, s=1.0, N=1.0,
                          delta=0.25, x0=(0, 5), K=1.0)
        with pytest.raises(InvalidConfigurationError):
            BarrierParams(A1=1.0, A2=1.0, A3=1.0, s=1.0, N=1.0,
                          delta=0.0, x0=(0, 5), K=1.0)
