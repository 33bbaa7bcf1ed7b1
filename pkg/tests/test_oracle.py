import math

import numpy as np
import pytest

from bulkgrow.errors import ValidationError
from bulkgrow.oracle import RadialOracle, sphere_oracle_mesh


def paper_setup(m=2):
    return RadialOracle(dim_m=m, initial_radius=1.5, source=1.5, alpha=1.0, beta=1.0)


class TestRadius:
    def test_initial_radius(self):
        assert paper_setup().radius(0.0) == pytest.approx(1.5, abs=1e-15)

    def test_value_at_t3(self):
        # (R0 - 3Q) e^{-1} + 3Q with m = 2.
        expected = 4.5 - 3.0 * math.exp(-1.0)
        assert paper_setup().radius(3.0) == pytest.approx(expected, rel=1e-14)

    def test_stationary_radius(self):
        oracle = RadialOracle(dim_m=2, initial_radius=4.5, source=1.5,
                              alpha=1.0, beta=1.0)
        for t in (0.0, 0.7, 5.0):
            assert oracle.radius(t) == pytest.approx(4.5, rel=1e-14)

    def test_radius_ode(self):
        # Fourth-order central difference of the closed form vs the ODE
        # dR/dt = Q - R/(m+1); the quartic stencil leaves only roundoff.
        oracle = paper_setup()
        h = 1e-3
        for t in (0.5, 1.0, 2.5):
            deriv = (
                -oracle.radius(t + 2 * h)
                + 8 * oracle.radius(t + h)
                - 8 * oracle.radius(t - h)
                + oracle.radius(t - 2 * h)
            ) / (12 * h)
            exact = oracle.source - oracle.radius(t) / (oracle.dim_m + 1)
            assert abs(deriv - exact) < 1e-12

    def test_negative_time_rejected(self):
        with pytest.raises(ValidationError):
            paper_setup().radius(-0.1)


class TestPressure:
    def test_boundary_value_unit_sphere(self):
        oracle = RadialOracle(dim_m=2, initial_radius=1.0, source=1.5,
                              alpha=1.0, beta=1.0)
        # u(R) = Q + beta m / R - R/(m+1) at t = 0, R = 1.
        assert oracle.pressure(1.0, 0.0) == pytest.approx(
            1.5 + 2.0 - 1.0 / 3.0, rel=1e-14
        )

    def test_center_value_is_profile_constant(self):
        oracle = paper_setup()
        r0, q, m = 1.5, 1.5, 2
        c0 = (q + 1.0 * m / r0 - r0 / (m + 1)) / 1.0 - r0 ** 2 / (2 * (m + 1))
        assert oracle.pressure(0.0, 0.0) == pytest.approx(c0, rel=1e-14)

    @pytest.mark.parametrize("m", [1, 2])
    def test_bulk_equation_residual(self, m):
        # The radial profile is quadratic, so central differences are exact:
        # u'' + (m/r) u' must equal 1 to roundoff.
        oracle = RadialOracle(dim_m=m, initial_radius=2.0, source=0.5,
                              alpha=0.7, beta=1.3)
        h = 0.05
        for t in (0.0, 1.0):
            for r in (0.3, 0.8, 1.2):
                u = oracle.pressure
                lap = (u(r + h, t) - 2 * u(r, t) + u(r - h, t)) / h ** 2
                lap += m / r * (u(r + h, t) - u(r - h, t)) / (2 * h)
                assert abs(lap - 1.0) < 1e-10

    @pytest.mark.parametrize("m", [1, 2])
    def test_robin_balance(self, m):
        oracle = RadialOracle(dim_m=m, initial_radius=1.4, source=2.0,
                              alpha=2.5, beta=0.6)
        h = 1e-4
        for t in (0.0, 0.8, 3.0):
            radius = oracle.radius(t)
            u = oracle.pressure_extended
            du = (u(radius + h, t) - u(radius - h, t)) / (2 * h)
            lhs = du + oracle.alpha * u(radius, t)
            rhs = oracle.beta * m / radius + oracle.source
            assert abs(lhs - rhs) < 1e-10

    def test_normal_derivative_at_boundary(self):
        oracle = paper_setup()
        t = 0.4
        radius = oracle.radius(t)
        h = 1e-4
        u = oracle.pressure_extended
        du = (u(radius + h, t) - u(radius - h, t)) / (2 * h)
        assert du == pytest.approx(radius / (oracle.dim_m + 1), abs=1e-10)

    def test_velocity_consistency(self):
        # -beta H + alpha u at r = R equals Q - R/(m+1).
        oracle = paper_setup()
        for t in (0.0, 1.2):
            radius = oracle.radius(t)
            value = -oracle.beta * oracle.curvature(t) + oracle.alpha * oracle.pressure(
                radius, t
            )
            assert value == pytest.approx(oracle.normal_speed(t), rel=1e-13)

    def test_domain_error(self):
        oracle = paper_setup()
        with pytest.raises(ValidationError):
            oracle.pressure(oracle.radius(0.0) * 1.01, 0.0)


class TestGeometryFields:
    def test_unit_sphere_curvature(self):
        oracle = RadialOracle(dim_m=2, initial_radius=1.0, source=1.5,
                              alpha=1.0, beta=1.0)
        nu, curv, _, _ = oracle.geometry_fields(np.array([[1.0, 0.0, 0.0]]), 0.0)
        assert curv[0] == pytest.approx(2.0, rel=1e-14)
        assert np.allclose(nu[0], [1.0, 0.0, 0.0])

    def test_circle_fields(self):
        oracle = RadialOracle(dim_m=1, initial_radius=2.0, source=1.0,
                              alpha=1.0, beta=1.0)
        pts = np.array([[0.0, 2.0], [2.0, 0.0]])
        nu, curv, _, _ = oracle.geometry_fields(pts, 0.0)
        assert np.allclose(curv, 0.5)
        assert np.allclose(nu, pts / 2.0)

    def test_initial_speed(self):
        assert paper_setup().normal_speed(0.0) == pytest.approx(1.0, rel=1e-14)

    def test_off_sphere_point_rejected(self):
        oracle = paper_setup()
        with pytest.raises(ValidationError):
            oracle.geometry_fields(np.array([[1.0, 0.0, 0.0]]), 0.0)

    def test_velocity_is_radial(self):
        oracle = paper_setup()
        pts = 1.5 * np.array([[0.0, 0.0, 1.0], [0.0, 1.0, 0.0]])
        _, _, speed, velocity = oracle.geometry_fields(pts, 0.0)
        assert np.allclose(velocity, speed[:, None] * pts / 1.5)


class TestSeedState:
    def setup_method(self):
        self.oracle = RadialOracle(dim_m=1, initial_radius=1.5, source=1.5,
                                   alpha=1.0, beta=1.0)
        self.mesh = sphere_oracle_mesh(self.oracle, 0.25, degree=2)

    def test_curvature_constant(self):
        state = self.oracle.seed_state(self.mesh, 0.0)
        expected = self.oracle.dim_m / 1.5
        assert np.allclose(state.curvature, expected, atol=1e-13)

    def test_center_pressure(self):
        state = self.oracle.seed_state(self.mesh, 0.0)
        center = np.argmin(np.linalg.norm(self.mesh.node_positions, axis=1))
        assert state.pressure[center] == pytest.approx(
            self.oracle.pressure(0.0, 0.0), rel=1e-12
        )

    def test_boundary_speed_uniform(self):
        state = self.oracle.seed_state(self.mesh, 0.0)
        ng = self.mesh.n_boundary
        mags = np.linalg.norm(state.velocity[:ng], axis=1)
        assert np.allclose(mags, abs(self.oracle.normal_speed(0.0)), atol=1e-12)

    def test_radius_mismatch_rejected(self):
        with pytest.raises(ValidationError):
            self.oracle.seed_state(self.mesh, 0.5)

    def test_seed_at_later_time(self):
        t = 0.3
        mesh_t = self.oracle.mesh_at(self.mesh, t)
        state = self.oracle.seed_state(mesh_t, t)
        assert state.time == pytest.approx(t)
        assert np.allclose(
            state.curvature, self.oracle.curvature(t), atol=1e-13
        )
