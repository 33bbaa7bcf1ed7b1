import numpy as np
import pytest

from bulkgrow.assembly import Assembler, assemble_f_u, assemble_L, assemble_system
from bulkgrow.bdf import bdf_coefficients
from bulkgrow.errors import GeometryError, ValidationError
from bulkgrow.mesh import generate_disk_mesh
from bulkgrow.oracle import RadialOracle, sphere_oracle_mesh
from bulkgrow.sparsela import SpdFactor
from bulkgrow.stepper import (
    History,
    ModelParams,
    Stepper,
    bootstrap_history,
    constant_source,
    curvature_step,
    ellipsoid_surface_fields,
    estimate_boundary_geometry,
    evolve,
    extrapolated_geometry,
    harmonic_extension,
    initial_state,
    normal_step,
    position_update,
    robin_solve,
    velocity_law,
)


def disk_params(alpha=1.0, beta=1.0, mu=0.0, q_value=1.5):
    return ModelParams(alpha=alpha, beta=beta, mu=mu,
                       source=constant_source(q_value), degree_k=2, dim_m=1)


def oracle_setup(h=0.3, tau=1e-3, order=2, m=1):
    oracle = RadialOracle(dim_m=m, initial_radius=1.5, source=1.5,
                          alpha=1.0, beta=1.0)
    mesh = sphere_oracle_mesh(oracle, h, degree=2)
    params = ModelParams(alpha=1.0, beta=1.0, mu=0.0,
                         source=constant_source(1.5), degree_k=2, dim_m=m)
    states = [
        oracle.seed_state(oracle.mesh_at(mesh, i * tau), i * tau)
        for i in reversed(range(order))
    ]
    return oracle, mesh, params, History(states, tau=tau)


class TestModelParams:
    def test_validation(self):
        with pytest.raises(ValidationError):
            ModelParams(alpha=0.0, beta=1.0)
        with pytest.raises(ValidationError):
            ModelParams(alpha=1.0, beta=-1.0)
        with pytest.raises(ValidationError):
            ModelParams(alpha=1.0, beta=1.0, mu=-0.5)

    def test_default_source_is_zero(self):
        params = ModelParams(alpha=1.0, beta=1.0)
        assert np.allclose(params.source(np.zeros((3, 2)), 0.0), 0.0)


class TestHistory:
    def test_ordering_enforced(self):
        mesh = generate_disk_mesh(1.0, 0.4)
        oracle = RadialOracle(dim_m=1, initial_radius=1.0, source=1.5,
                              alpha=1.0, beta=1.0)
        s0 = oracle.seed_state(mesh, 0.0)
        with pytest.raises(ValidationError):
            History([s0, s0])

    def test_push_keeps_length(self):
        _, _, _, history = oracle_setup(h=0.5, order=2)
        newest = history[0]
        bumped = type(newest)(
            time=newest.time + 1e-3,
            positions=newest.positions,
            pressure=newest.pressure,
            normal=newest.normal,
            curvature=newest.curvature,
            normal_speed=newest.normal_speed,
            velocity=newest.velocity,
        )
        history.push(bumped)
        assert len(history) == 2
        assert history[0].time == bumped.time


class TestExtrapolatedGeometry:
    def test_stationary_history(self):
        oracle, mesh, params, history = oracle_setup(h=0.4, order=2)
        # Overwrite with two copies of the same configuration.
        s = history[0]
        frozen = History(
            [s, type(s)(time=s.time - 1e-3, positions=s.positions,
                        pressure=s.pressure, normal=s.normal,
                        curvature=s.curvature, normal_speed=s.normal_speed,
                        velocity=s.velocity)]
        )
        assembler = Assembler(mesh)
        geo = extrapolated_geometry(frozen, bdf_coefficients(2), assembler)
        assert np.allclose(geo.positions, s.positions, atol=1e-14)
        mats = assemble_system(mesh, positions=s.positions)
        assert np.allclose(geo.matrices.mass_bulk.data, mats.mass_bulk.data)

    def test_order_one_is_pure_lag(self):
        oracle, mesh, params, history = oracle_setup(h=0.4, order=1)
        geo = extrapolated_geometry(history, bdf_coefficients(1), Assembler(mesh))
        assert np.array_equal(geo.positions, history[0].positions)

    def test_oracle_extrapolation_accuracy(self):
        tau = 1e-2
        oracle, mesh, params, history = oracle_setup(h=0.4, tau=tau, order=2)
        geo = extrapolated_geometry(history, bdf_coefficients(2), Assembler(mesh))
        t_next = history[0].time + tau
        exact = oracle.exact_positions(mesh.node_positions, t_next)
        # Extrapolation of a smooth flow is O(tau^2) accurate.
        assert np.abs(geo.positions - exact).max() < 5.0 * tau ** 2


class TestRobinSolve:
    def test_sphere_boundary_value(self):
        oracle, mesh, params, history = oracle_setup(h=0.15, order=1, m=1)
        geo = extrapolated_geometry(history, bdf_coefficients(1), Assembler(mesh))
        u = robin_solve(geo, params, 0.0)
        radius = 1.5
        expected = 1.5 + 1.0 / radius - radius / 2.0  # Q + beta m/R - R/(m+1)
        u_gamma = u[: mesh.n_boundary]
        assert np.abs(u_gamma - expected).max() < 5e-3
        # Interior profile r^2 / (2(m+1)) + const.
        r = np.linalg.norm(mesh.node_positions, axis=1)
        profile = r ** 2 / 4.0
        shifted = u - profile
        assert shifted.std() < 5e-3

    def test_pure_constant_modified_system(self):
        mesh = generate_disk_mesh(1.0, 0.3, degree=2)
        mats = assemble_system(mesh)
        params = disk_params(alpha=1.3, mu=0.7)
        ell = assemble_L(mats, params.alpha, params.mu)
        c = 2.2
        # Drop the bulk load: the constant c solves the boundary-only system
        # with source alpha * c and no curvature term.
        rhs = assemble_f_u(
            mats, mesh.boundary_positions, np.zeros(mesh.n_boundary),
            beta=1.0, source=constant_source(params.alpha * c), time=0.0,
        )
        rhs += mats.mass_bulk @ np.ones(mesh.n_nodes)
        u = SpdFactor(ell).solve(rhs)
        assert np.allclose(u, c, atol=1e-9)

    def test_linearity(self):
        oracle, mesh, params, history = oracle_setup(h=0.4, order=1)
        geo = extrapolated_geometry(history, bdf_coefficients(1), Assembler(mesh))
        ell = assemble_L(geo.matrices, params.alpha, params.mu)
        rhs = assemble_f_u(
            geo.matrices, geo.positions[: mesh.n_boundary], geo.curvature,
            params.beta, params.source, 0.0,
        )
        u1 = SpdFactor(ell).solve(rhs)
        u2 = SpdFactor(ell).solve(2.0 * rhs)
        assert np.allclose(u2, 2.0 * u1, atol=1e-9)


class TestSurfaceSteps:
    def test_constant_normal_is_steady(self):
        # Constant normal, zero pressure: every component of the constant
        # lies in the stiffness kernel, so the normal must not move.
        mesh = generate_disk_mesh(1.0, 0.3, degree=2)
        params = disk_params()
        tau = 1e-2
        n_const = np.tile([0.6, 0.8], (mesh.n_boundary, 1))
        oracle = RadialOracle(dim_m=1, initial_radius=1.0, source=1.5,
                              alpha=1.0, beta=1.0)
        base = oracle.seed_state(mesh, 0.0)
        states = []
        for i in range(2):
            states.append(
                type(base)(
                    time=-i * tau,
                    positions=base.positions,
                    pressure=np.zeros(mesh.n_nodes),
                    normal=n_const.copy(),
                    curvature=base.curvature,
                    normal_speed=base.normal_speed,
                    velocity=base.velocity,
                )
            )
        history = History(states, tau=tau)
        scheme = bdf_coefficients(2)
        assembler = Assembler(mesh)
        geo = extrapolated_geometry(history, scheme, assembler)
        new_normal = normal_step(
            geo, history, np.zeros(mesh.n_nodes), scheme, tau, params, assembler
        )
        assert np.allclose(new_normal, n_const, atol=1e-10)

    def test_normal_step_ignores_constant_pressure_shift(self):
        # The pressure enters through tangential gradients only, so adding a
        # constant must not change the result.
        oracle, mesh, params, history = oracle_setup(h=0.3, order=2)
        scheme = bdf_coefficients(2)
        assembler = Assembler(mesh)
        geo = extrapolated_geometry(history, scheme, assembler)
        u = history[0].pressure
        n1 = normal_step(geo, history, u, scheme, 1e-3, params, assembler)
        n2 = normal_step(geo, history, u + 4.2, scheme, 1e-3, params, assembler)
        assert np.allclose(n1, n2, atol=1e-9)

    def test_curvature_mass_conservation_without_forcing(self):
        # Constant normal makes the quadratic forcing vanish; with zero
        # pressure the curvature equation is a discrete heat step, and
        # multiplying by the all-ones vector shows 1^T M H is conserved by
        # the BDF combination.
        mesh = generate_disk_mesh(1.0, 0.3, degree=2)
        params = disk_params()
        tau = 5e-3
        rng = np.random.default_rng(11)
        curv = rng.standard_normal(mesh.n_boundary)
        oracle = RadialOracle(dim_m=1, initial_radius=1.0, source=1.5,
                              alpha=1.0, beta=1.0)
        base = oracle.seed_state(mesh, 0.0)
        n_const = np.tile([1.0, 0.0], (mesh.n_boundary, 1))
        state = type(base)(
            time=0.0, positions=base.positions,
            pressure=np.zeros(mesh.n_nodes), normal=n_const,
            curvature=curv, normal_speed=base.normal_speed,
            velocity=base.velocity,
        )
        history = History([state])
        scheme = bdf_coefficients(1)
        assembler = Assembler(mesh)
        geo = extrapolated_geometry(history, scheme, assembler)
        new_curv = curvature_step(
            geo, history, np.zeros(mesh.n_nodes), scheme, tau, params, assembler
        )
        mass = geo.matrices.mass_surf
        ones = np.ones(mesh.n_boundary)
        assert ones @ (mass @ new_curv) == pytest.approx(
            ones @ (mass @ curv), abs=1e-9
        )


class TestVelocityLaw:
    def test_sphere_values(self):
        # R = 1, m = 2: u_Gamma = 19/6, H = 2, V = Q - R/(m+1).
        u_gamma = np.full(4, 1.5 + 2.0 - 1.0 / 3.0)
        curvature = np.full(4, 2.0)
        normal = np.tile([0.0, 0.0, 1.0], (4, 1))
        params = ModelParams(alpha=1.0, beta=1.0, dim_m=2)
        speed, v_gamma = velocity_law(u_gamma, curvature, normal, params)
        assert np.allclose(speed, 1.5 - 1.0 / 3.0)
        assert np.allclose(v_gamma[:, 2], speed)

    def test_equilibrium(self):
        params = ModelParams(alpha=2.0, beta=0.5)
        curvature = np.array([1.0, 2.0])
        u_gamma = params.beta * curvature / params.alpha
        speed, v_gamma = velocity_law(u_gamma, curvature,
                                      np.ones((2, 3)), params)
        assert np.allclose(speed, 0.0, atol=1e-15)
        assert np.allclose(v_gamma, 0.0, atol=1e-15)

    def test_flipping_normal_flips_velocity(self):
        params = ModelParams(alpha=1.0, beta=1.0)
        rng = np.random.default_rng(0)
        u = rng.standard_normal(5)
        h = rng.standard_normal(5)
        n = rng.standard_normal((5, 2))
        _, v1 = velocity_law(u, h, n, params)
        _, v2 = velocity_law(u, h, -n, params)
        assert np.allclose(v1, -v2)


class TestPositionUpdate:
    def test_zero_velocity_constant_history(self):
        oracle, mesh, params, history = oracle_setup(h=0.4, order=1)
        scheme = bdf_coefficients(1)
        x = position_update(scheme, history, np.zeros_like(history[0].positions), 1e-3)
        assert np.allclose(x, history[0].positions, atol=1e-14)

    def test_order_one_is_explicit_euler(self):
        oracle, mesh, params, history = oracle_setup(h=0.4, order=1)
        scheme = bdf_coefficients(1)
        tau = 1e-2
        v = np.ones_like(history[0].positions)
        x = position_update(scheme, history, v, tau)
        assert np.allclose(x, history[0].positions + tau * v, atol=1e-14)

    def test_tangling_detected(self):
        oracle, mesh, params, history = oracle_setup(h=0.4, order=1)
        scheme = bdf_coefficients(1)
        v = np.zeros_like(history[0].positions)
        # Drive one interior node across the domain in a single step.
        v[mesh.n_boundary + 1] = 1e4
        with pytest.raises(GeometryError):
            position_update(scheme, history, v, 1e-2, mesh=mesh)


class TestFullStep:
    def test_single_bdf1_step_tracks_radius_ode(self):
        tau = 1e-3
        oracle, mesh, params, history = oracle_setup(h=0.3, tau=tau, order=1)
        stepper = Stepper(mesh, params, 1, tau)
        state = stepper.step(history)
        ng = mesh.n_boundary
        radii = np.linalg.norm(state.positions[:ng], axis=1)
        expected = 1.5 + tau * oracle.normal_speed(0.0)
        # One explicit-Euler position update: radius error O(tau^2 + tau h^2).
        assert abs(radii.mean() - expected) < 5e-3 * tau + 2e-6

    def test_equilibrium_configuration_nearly_static(self):
        tau = 1e-3
        oracle = RadialOracle(dim_m=1, initial_radius=3.0, source=1.5,
                              alpha=1.0, beta=1.0)
        mesh = sphere_oracle_mesh(oracle, 0.4, degree=2)
        params = ModelParams(alpha=1.0, beta=1.0, mu=0.0,
                             source=constant_source(1.5), degree_k=2, dim_m=1)
        history = History([oracle.seed_state(mesh, 0.0)])
        stepper = Stepper(mesh, params, 1, tau)
        state = stepper.step(history)
        # V vanishes for the exact solution; discretely V = O(h^2), so the
        # displacement in one step is at most tau * O(h^2).
        move = np.abs(state.positions - mesh.node_positions).max()
        assert move < 50.0 * tau * mesh.mesh_size_h ** 2

    def test_local_error_probe_order_one(self):
        oracle, mesh, params, history = oracle_setup(h=0.4, order=1)

        def two_steps_vs_one(tau):
            h1 = History([history[0]])
            stepper = Stepper(mesh, params, 1, tau)
            s1 = stepper.step(h1)
            h1.push(s1)
            s2 = stepper.step(h1)
            h2 = History([history[0]])
            big = Stepper(mesh, params, 1, 2 * tau)
            sbig = big.step(h2)
            return np.abs(s2.positions - sbig.positions).max()

        d1 = two_steps_vs_one(2e-3)
        d2 = two_steps_vs_one(1e-3)
        assert d1 / d2 == pytest.approx(4.0, rel=0.35)

    def test_step_error_context(self):
        tau = 1e-3
        oracle, mesh, params, history = oracle_setup(h=0.4, tau=tau, order=1)
        stepper = Stepper(mesh, params, 1, tau)
        bad = history[0]
        broken = type(bad)(
            time=bad.time, positions=bad.positions,
            pressure=bad.pressure, normal=bad.normal,
            curvature=bad.curvature, normal_speed=bad.normal_speed,
            velocity=bad.velocity,
        )
        history_short = History([broken])
        stepper2 = Stepper(mesh, params, 2, tau)
        with pytest.raises(ValidationError):
            stepper2.step(history_short)

    def test_radial_symmetry_preserved_over_short_run(self):
        tau = 2e-3
        oracle, mesh, params, history = oracle_setup(h=0.3, tau=tau, order=2)
        stepper = Stepper(mesh, params, 2, tau)
        evolve(stepper, history, 25)
        ng = mesh.n_boundary
        radii = np.linalg.norm(history[0].positions[:ng], axis=1)
        assert radii.std() < 5.0 * (mesh.mesh_size_h ** 2 + tau ** 2)
        expected = oracle.radius(history[0].time)
        assert abs(radii.mean() - expected) < 5.0 * (mesh.mesh_size_h ** 2 + tau ** 2)


class TestInitialData:
    def test_ellipse_fields_match_circle(self):
        pts = 2.0 * np.array([[1.0, 0.0], [0.0, 1.0]])
        normal, curv = ellipsoid_surface_fields(pts, (2.0, 2.0))
        assert np.allclose(curv, 0.5)
        assert np.allclose(normal, pts / 2.0)

    def test_sphere_fields(self):
        pts = np.array([[0.0, 0.0, 1.5]])
        normal, curv = ellipsoid_surface_fields(pts, (1.5, 1.5, 1.5))
        assert np.allclose(curv, 2.0 / 1.5)

    def test_ellipsoid_curvature_spot_check(self):
        # At the pole (0, 0, c) of an ellipsoid with semi-axes (a, a, c) the
        # principal curvatures are both c/a^2.
        a, c = 0.5, 1.0
        normal, curv = ellipsoid_surface_fields(np.array([[0.0, 0.0, c]]), (a, a, c))
        assert curv[0] == pytest.approx(2.0 * c / a ** 2, rel=1e-12)
        assert np.allclose(normal[0], [0.0, 0.0, 1.0])

    def test_discrete_geometry_estimate_on_circle(self):
        mesh = generate_disk_mesh(1.5, 0.1, degree=2)
        normal, curv = estimate_boundary_geometry(mesh)
        exact_n = mesh.boundary_positions / 1.5
        assert np.abs(curv - 1.0 / 1.5).max() < 2e-3
        assert np.abs(normal - exact_n).max() < 2e-3

    def test_initial_state_solves_robin_problem(self):
        oracle = RadialOracle(dim_m=1, initial_radius=1.5, source=1.5,
                              alpha=1.0, beta=1.0)
        mesh = sphere_oracle_mesh(oracle, 0.2, degree=2)
        params = disk_params()
        normal, curv = ellipsoid_surface_fields(
            mesh.boundary_positions, (1.5, 1.5)
        )
        state = initial_state(mesh, params, normal, curv)
        exact = oracle.pressure(1.5, 0.0)
        assert np.abs(state.pressure[: mesh.n_boundary] - exact).max() < 5e-3

    def test_bootstrap_produces_full_history(self):
        oracle = RadialOracle(dim_m=1, initial_radius=1.5, source=1.5,
                              alpha=1.0, beta=1.0)
        mesh = sphere_oracle_mesh(oracle, 0.3, degree=2)
        params = disk_params()
        normal, curv = ellipsoid_surface_fields(mesh.boundary_positions, (1.5, 1.5))
        history = bootstrap_history(mesh, params, 1e-3, 2, normal, curv)
        assert len(history) == 2
        assert history[0].time == pytest.approx(1e-3)
        assert history[1].time == pytest.approx(0.0)
        # The bootstrapped run should track the radial solution.
        radii = np.linalg.norm(history[0].positions[: mesh.n_boundary], axis=1)
        assert abs(radii.mean() - oracle.radius(1e-3)) < 1e-3
