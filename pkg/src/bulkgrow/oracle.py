"""Closed-form radially symmetric solution of the coupled growth model.

For spheres in R^(m+1) with constant source Q and no surface diffusion in the
boundary condition, the coupled system reduces to an ODE for the radius,

    R(t) = (R0 - (m+1) Q) exp(-t/(m+1)) + (m+1) Q,

with the pressure profile

    u(r, t) = r^2 / (2(m+1)) + (Q + beta m / R - R/(m+1)) / alpha
              - R^2 / (2(m+1)),

normal x/R, mean curvature m/R and normal speed Q - R/(m+1).  Used to seed
simulations and as the reference in convergence measurements.
"""

from dataclasses import dataclass
import math

import numpy as np

from .errors import ValidationError
from .sparsela import schur_dirichlet_solve


@dataclass(frozen=True)
class RadialOracle:
    """Exact sphere solution; surface diffusion is off by construction."""

    dim_m: int
    initial_radius: float
    source: float
    alpha: float
    beta: float

    def __post_init__(self):
        if self.dim_m not in (1, 2):
            raise ValidationError("dim_m must be 1 or 2")
        if self.initial_radius <= 0:
            raise ValidationError("initial radius must be positive")
        if self.alpha <= 0 or self.beta <= 0:
            raise ValidationError("alpha and beta must be positive")

    def radius(self, t):
        """Sphere radius R(t)."""
        if np.any(np.asarray(t) < 0):
            raise ValidationError("time must be nonnegative")
        mp1 = self.dim_m + 1
        return (self.initial_radius - mp1 * self.source) * np.exp(-np.asarray(t) / mp1) \
            + mp1 * self.source

    def pressure_extended(self, r, t):
        """Pressure formula as a smooth function of radius, without the
        domain check; used for nodal interpolation on discrete meshes whose
        boundary nodes may fall slightly outside the exact sphere."""
        mp1 = self.dim_m + 1
        radius = self.radius(t)
        const = (
            self.source + self.beta * self.dim_m / radius - radius / mp1
        ) / self.alpha - radius ** 2 / (2.0 * mp1)
        return np.asarray(r) ** 2 / (2.0 * mp1) + const

    def pressure(self, r, t):
        """Tissue pressure u(r, t) for 0 <= r <= R(t)."""
        r = np.asarray(r, dtype=float)
        radius = self.radius(t)
        if np.any(r < 0) or np.any(r > radius * (1.0 + 1e-12)):
            raise ValidationError("radius outside the domain [0, R(t)]")
        return self.pressure_extended(r, t)

    def normal_speed(self, t):
        """V(t) = Q - R(t)/(m+1), uniform over the sphere."""
        return self.source - self.radius(t) / (self.dim_m + 1)

    def curvature(self, t):
        """Mean curvature m / R(t) (sum of principal curvatures)."""
        return self.dim_m / self.radius(t)

    def geometry_fields(self, points, t, rel_tol=1e-8):
        """Exact (normal, curvature, speed, velocity) at points on the sphere.

        Points must lie on the sphere of radius R(t) within ``rel_tol``.
        Returns (nu, H, V, v) with nu and v of shape (n, m+1).
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        radius = self.radius(t)
        dist = np.linalg.norm(pts, axis=1)
        if np.any(np.abs(dist - radius) > rel_tol * radius):
            raise ValidationError("point does not lie on the sphere")
        nu = pts / radius
        n = pts.shape[0]
        curvature = np.full(n, self.dim_m / radius)
        speed = np.full(n, self.normal_speed(t))
        return nu, curvature, speed, speed[:, None] * nu

    def exact_positions(self, reference_positions, t, reference_time=0.0):
        """Flow positions of material points: radial scaling by R(t)/R(ref)."""
        scale = self.radius(t) / self.radius(reference_time)
        return np.asarray(reference_positions) * scale

    def seed_state(self, mesh, t):
        """Nodal interpolation of the exact solution on a sphere mesh.

        The mesh boundary must discretize the sphere of radius R(t).  The
        interior velocity is the discrete harmonic extension of the exact
        boundary velocity, matching what the scheme itself produces.
        """
        from .assembly import Assembler
        from .stepper import SimState

        radius = self.radius(t)
        bnd_r = np.linalg.norm(mesh.boundary_positions, axis=1)
        if np.max(np.abs(bnd_r - radius)) > 1e-8 * radius:
            raise ValidationError(
                f"mesh boundary radius does not match R({t}) = {radius}"
            )
        node_r = np.linalg.norm(mesh.node_positions, axis=1)
        pressure = self.pressure_extended(node_r, t)
        nu, curvature, speed, v_gamma = self.geometry_fields(
            mesh.boundary_positions, t
        )
        _, stiff = Assembler(mesh).bulk_matrices()
        velocity = schur_dirichlet_solve(stiff, mesh.n_boundary, v_gamma)
        return SimState(
            time=float(t),
            positions=mesh.node_positions.copy(),
            pressure=pressure,
            normal=nu,
            curvature=curvature,
            normal_speed=speed,
            velocity=velocity,
        )

    def mesh_at(self, mesh0, t):
        """The t=0 mesh carried along the exact radial flow to time t."""
        from .mesh import displace

        return displace(mesh0, self.exact_positions(mesh0.node_positions, t))


def sphere_oracle_mesh(oracle, target_h, degree=2):
    """Generate the initial sphere/disk mesh matching the oracle radius."""
    from .mesh import generate_ball_mesh, generate_disk_mesh

    r0 = oracle.initial_radius
    if oracle.dim_m == 1:
        return generate_disk_mesh(r0, target_h, degree=degree)
    return generate_ball_mesh((r0, r0, r0), target_h, degree=degree)
