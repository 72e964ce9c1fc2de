import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from yamabeflow.flow import (
    DirichletSeries,
    DriftingTail,
    FlowGrid,
    FlowState,
    FrozenTail,
    ShrinkingCylinder,
    TailExtinct,
    TimeController,
    annulus_grid,
    evolve,
    graded_grid,
    l1_distance,
    log_grid,
    outer_bc_value,
    pointwise_lower_bound_check,
    rescale,
    resample,
    scalar_curvature,
    sphere_area,
    step,
)
from yamabeflow.solitons import (
    derive_params,
    evaluate_profile,
    fit_steady_asymptotics,
    integrate_radial,
    integrate_steady_cylindrical,
)


def fixed_dt(dt, **kw):
    return TimeController(dt_init=dt, dt_max=dt, target_rel_change=math.inf,
                          grow_cap=1.0, **kw)


@pytest.fixture(scope="module")
def soliton_setup():
    n, beta = 3, 1.0
    p = derive_params(n, beta, 1.0, "steady")
    r_max = math.exp(8.0)
    prof = integrate_radial(p, r_max=r_max * 1.001)
    fit = fit_steady_asymptotics(integrate_steady_cylindrical(p, s_end=60.0))
    bc = DriftingTail(A=fit.A, K0=fit.K, r_max=r_max, n=n)
    grid = graded_grid(n, r_max=r_max, nodes=700, bc_outer=bc)
    u0 = evaluate_profile(prof, grid.r)
    return p, prof, fit, grid, u0


class TestGrids:
    def test_graded_shape(self):
        g = graded_grid(3, r_max=math.exp(12.0), nodes=2048)
        assert g.r[0] == 0.0
        assert g.r[-1] == pytest.approx(math.exp(12.0))
        dr = np.diff(g.r)
        assert np.max(dr[2:] / dr[1:-1]) <= 1.1 + 1e-9

    def test_ratio_violation_raises(self):
        with pytest.raises(ValueError, match="ratio"):
            log_grid(3, 1e-6, math.exp(12.0), nodes=32)

    def test_non_monotone_rejected(self):
        with pytest.raises(ValueError):
            FlowGrid(r=np.array([0.0, 1.0, 0.5]), n=3)

    def test_symmetry_grid_needs_origin(self):
        with pytest.raises(ValueError):
            FlowGrid(r=np.array([0.5, 1.0]), n=3)

    def test_laplacian_exact_on_quadratic(self):
        g = graded_grid(4, r_max=50.0, nodes=300)
        lap = g.laplacian(g.r ** 2)
        assert lap == pytest.approx(2 * 4 * np.ones(g.size), rel=1e-8)

    def test_laplacian_zero_on_constant(self):
        g = graded_grid(3, r_max=50.0, nodes=200)
        assert np.max(np.abs(g.laplacian(np.ones(g.size)))) < 1e-12


class TestCurvature:
    def test_cylinder_interior(self):
        cyl = ShrinkingCylinder(3, 1.0)
        g = annulus_grid(3, 1.0, 10.0, 201, inner_values=cyl.boundary(1.0),
                         bc_outer=cyl.boundary(10.0))
        st = FlowState(grid=g, u=cyl.u(g.r, 0.0), t=0.0)
        R = scalar_curvature(st)
        assert np.max(np.abs(R.values[1:-1] - 1.0)) < 2e-3

    def test_flat_data_zero(self):
        g = graded_grid(3, r_max=10.0, nodes=150)
        st = FlowState(grid=g, u=np.ones(g.size), t=0.0)
        assert abs(scalar_curvature(st).max_R) < 1e-12

    def test_soliton_origin_curvature(self, soliton_setup):
        # R(0) = (1-m) gamma = 2 beta for the steady soliton
        p, prof, fit, grid, u0 = soliton_setup
        st = FlowState(grid=grid, u=u0, t=0.0)
        R = scalar_curvature(st)
        assert R.values[0] == pytest.approx(2 * p.beta, rel=1e-3)
        assert R.argmax_r == 0.0

    def test_rejects_nonpositive(self):
        g = graded_grid(3, r_max=10.0, nodes=150)
        u = np.ones(g.size)
        with pytest.raises(ValueError):
            FlowState(grid=g, u=0.0 * u, t=0.0)


class TestCylinderOracle:
    def test_half_lifespan_error(self):
        cyl = ShrinkingCylinder(3, 1.0)
        g = annulus_grid(3, 1.0, 10.0, 201, inner_values=cyl.boundary(1.0),
                         bc_outer=cyl.boundary(10.0))
        st = FlowState(grid=g, u=cyl.u(g.r, 0.0), t=0.0)
        traj = evolve(st, 0.5, TimeController(target_rel_change=2e-3),
                      snapshot_times=[0.5])
        fin = traj.states[-1]
        err = np.max(np.abs(fin.u - cyl.u(g.r, 0.5)) / cyl.u(g.r, 0.5))
        assert err < 1e-3

    def test_extinction_estimate(self):
        cyl = ShrinkingCylinder(3, 0.5)
        g = annulus_grid(3, 1.0, 10.0, 101, inner_values=cyl.boundary(1.0),
                         bc_outer=cyl.boundary(10.0))
        st = FlowState(grid=g, u=cyl.u(g.r, 0.0), t=0.0)
        traj = evolve(st, 0.6, TimeController(target_rel_change=5e-3))
        assert traj.extinction_time is not None
        assert traj.extinction_time == pytest.approx(0.5, rel=0.02)

    def test_cylinder_bound_is_discrete_identity(self):
        cyl = ShrinkingCylinder(3, 1.0)
        g = annulus_grid(3, 1.0, 10.0, 101, inner_values=cyl.boundary(1.0),
                         bc_outer=cyl.boundary(10.0))
        st = FlowState(grid=g, u=cyl.u(g.r, 0.0), t=0.0)
        traj = evolve(st, 0.4, fixed_dt(1e-3), snapshot_times=[0.2, 0.4])
        rep = pointwise_lower_bound_check(traj)
        assert rep.ok


class TestStepProperties:
    def test_comparison_preserved_fixed_dt(self, soliton_setup):
        p, prof, fit, grid, u0 = soliton_setup
        bump = np.where(grid.r < 2.0, 0.3 * np.cos(np.pi * grid.r / 4) ** 2, 0.0)
        ctrl = fixed_dt(2e-3, newton_tol=1e-12)
        ta = evolve(FlowState(grid=grid, u=u0, t=0.0), 0.3, ctrl,
                    snapshot_times=[0.1, 0.3])
        tb = evolve(FlowState(grid=grid, u=u0 * (1 + bump), t=0.0), 0.3, ctrl,
                    snapshot_times=[0.1, 0.3])
        for a, b in zip(ta.states, tb.states):
            assert np.all(b.u >= a.u * (1 - 1e-9))

    def test_positivity_maintained(self, soliton_setup):
        p, prof, fit, grid, u0 = soliton_setup
        traj = evolve(FlowState(grid=grid, u=u0, t=0.0), 0.2,
                      TimeController(target_rel_change=2e-3))
        assert all(np.all(s.u > 0) for s in traj.states)

    def test_ball_mass_decreases_on_decreasing_data(self, soliton_setup):
        # radially decreasing data: the flux through any sphere is outward
        p, prof, fit, grid, u0 = soliton_setup
        traj = evolve(FlowState(grid=grid, u=u0, t=0.0), 0.4,
                      TimeController(target_rel_change=2e-3),
                      snapshot_times=[0.1, 0.2, 0.4])
        def mass(s):
            mask = grid.r <= 2.0
            rr = grid.r[mask]
            return np.trapezoid(s.u[mask] * rr ** (grid.n - 1), rr)
        masses = [mass(s) for s in traj.states]
        assert all(b < a for a, b in zip(masses, masses[1:]))

    def test_single_step_matches_evolve(self, soliton_setup):
        p, prof, fit, grid, u0 = soliton_setup
        st = FlowState(grid=grid, u=u0, t=0.0)
        s1 = step(st, 1e-3)
        assert s1.t == pytest.approx(1e-3)
        assert np.all(s1.u > 0)


class TestRescale:
    def test_identity_at_t0(self, soliton_setup):
        p, prof, fit, grid, u0 = soliton_setup
        st = FlowState(grid=grid, u=u0, t=0.0)
        resc = rescale(st, p.beta, "to_rescaled")
        assert np.array_equal(resc.u, u0)
        back = rescale(resc, p.beta, "to_original")
        assert np.array_equal(back.u, u0)

    def test_round_trip_interpolation_error(self):
        n, beta = 3, 1.0
        p = derive_params(n, beta, 1.0, "steady")
        r_max = math.exp(8.0)
        prof = integrate_radial(p, r_max=r_max * 1.001)
        fit = fit_steady_asymptotics(integrate_steady_cylindrical(p, s_end=60.0))
        bc = DriftingTail(A=fit.A, K0=fit.K, r_max=r_max, n=n)
        grid = graded_grid(n, r_max=r_max, nodes=1800, bc_outer=bc)
        u = evaluate_profile(prof, grid.r)
        st = FlowState(grid=grid, u=u, t=0.37)
        resc = rescale(st, beta, "to_rescaled")
        # drop the origin shortcut to force the interpolation path
        resc = FlowState(grid=resc.grid, u=resc.u, t=resc.t, rescaled=True,
                         beta=beta)
        back = rescale(resc, beta, "to_original")
        assert np.max(np.abs(back.u - st.u) / st.u) < 1e-6

    def test_exact_soliton_motion_is_frozen_view(self, soliton_setup):
        # u(x, t) = e^(-gamma t) u_prof(e^(-beta t) x) is the flow of the
        # soliton; its rescaled view is the initial profile again.
        p, prof, fit, grid, u0 = soliton_setup
        t = 0.8
        r_shift = grid.r * math.exp(-p.beta * t)
        u_t = math.exp(-p.gamma * t) * evaluate_profile(prof, r_shift)
        st = FlowState(grid=grid, u=u_t, t=t)
        resc = rescale(st, p.beta, "to_rescaled")
        inside = grid.r <= grid.r[-1] * math.exp(-p.beta * t)
        rel = np.abs(resc.u - u0) / u0
        assert np.max(rel[inside]) < 1e-6


class TestOuterBC:
    def test_frozen(self):
        bc = FrozenTail(value=0.25)
        assert outer_bc_value(5.0, bc) == 0.25

    def test_drifting_level_at_zero(self):
        bc = DriftingTail(A=2.0, K0=3.0, r_max=100.0, n=3)
        assert bc.tail_level(0.0) == pytest.approx(2 * math.log(100) + 3)

    def test_drift_rate_matches_dimension(self):
        bc = DriftingTail(A=2.0, K0=3.0, r_max=100.0, n=3)
        dt = 0.7
        assert bc.tail_level(0.0) - bc.tail_level(dt) == pytest.approx(
            (3 - 1) * (3 - 2) * dt)

    def test_cylinder_dirichlet_matches_analytic(self):
        cyl = ShrinkingCylinder(4, 2.0)
        bc = cyl.boundary(10.0)
        t = 0.3
        expect = ((4 - 1) * (4 - 2) * (2.0 - t) / 100.0) ** (1 / (1 - cyl.m))
        assert outer_bc_value(t, bc) == pytest.approx(expect, rel=1e-12)

    def test_tail_extinction_raises(self):
        bc = DriftingTail(A=0.0, K0=1.0, r_max=10.0, n=3)
        with pytest.raises(TailExtinct):
            bc(1.0)


class TestL1Distance:
    def test_identical_states(self, soliton_setup):
        p, prof, fit, grid, u0 = soliton_setup
        a = FlowState(grid=grid, u=u0, t=0.0)
        assert l1_distance(a, a, 3.0) == 0.0

    def test_matches_dense_quadrature(self, soliton_setup):
        from scipy.integrate import simpson
        p, prof, fit, grid, u0 = soliton_setup
        u2 = u0 * (1 + np.where(grid.r < 2, 0.2 * np.cos(np.pi * grid.r / 4) ** 2, 0.0))
        a = FlowState(grid=grid, u=u0, t=0.0)
        b = FlowState(grid=grid, u=u2, t=0.0)
        val = l1_distance(a, b, 5.0)
        rf = np.linspace(0, 5.0, 20001)
        d = np.abs(resample(grid.r, u0, rf) - resample(grid.r, u2, rf))
        oracle = sphere_area(3) * simpson(d * rf ** 2, x=rf)
        assert val == pytest.approx(oracle, rel=1e-4)

    @given(st.lists(st.floats(0.1, 3.0), min_size=3, max_size=3))
    @settings(max_examples=10, deadline=None)
    def test_metric_axioms(self, amps):
        g = graded_grid(3, r_max=20.0, nodes=120)
        base = 1.0 / (1.0 + g.r ** 2)
        states = [FlowState(grid=g, u=a * base + 0.01, t=0.0) for a in amps]
        d01 = l1_distance(states[0], states[1], 5.0)
        d10 = l1_distance(states[1], states[0], 5.0)
        d02 = l1_distance(states[0], states[2], 5.0)
        d12 = l1_distance(states[1], states[2], 5.0)
        assert d01 == pytest.approx(d10, rel=1e-12)
        assert d02 <= d01 + d12 + 1e-12


class TestLowerBound:
    def test_static_flat_data(self):
        g = annulus_grid(3, 1.0, 10.0, 51,
                         inner_values=DirichletSeries(lambda t: 1.0),
                         bc_outer=DirichletSeries(lambda t: 1.0))
        st = FlowState(grid=g, u=np.ones(g.size), t=0.0)
        traj = evolve(st, 0.5, fixed_dt(0.05), snapshot_times=[0.5])
        assert np.max(np.abs(traj.states[-1].u - 1.0)) < 1e-12
        assert pointwise_lower_bound_check(traj, f=lambda t: 0.0).ok

    def test_constant_majorant_on_soliton_run(self, soliton_setup):
        p, prof, fit, grid, u0 = soliton_setup
        traj = evolve(FlowState(grid=grid, u=u0, t=0.0), 0.3,
                      TimeController(target_rel_change=2e-3),
                      snapshot_times=[0.1, 0.3])
        K = float(traj.step_max_R.max())
        rep = pointwise_lower_bound_check(traj, f=lambda t: K, rel_slack=1e-4)
        assert rep.ok

    def test_recorded_curvature_bound(self, soliton_setup):
        p, prof, fit, grid, u0 = soliton_setup
        traj = evolve(FlowState(grid=grid, u=u0, t=0.0), 0.3,
                      TimeController(target_rel_change=2e-3),
                      snapshot_times=[0.15, 0.3])
        assert pointwise_lower_bound_check(traj).ok
