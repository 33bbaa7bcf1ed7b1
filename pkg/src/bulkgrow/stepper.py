"""Linearly implicit BDF stepping of the coupled bulk-surface system.

One step freezes the geometry at the extrapolated positions and then solves,
in order: the generalized Robin problem for the pressure, the two surface
evolution equations for normal and curvature (which use the new pressure),
the nodal velocity law, the discrete harmonic velocity extension, and the
position update.  Each implicit sub-system is symmetric positive definite.
"""

from dataclasses import dataclass

import numpy as np

from .assembly import Assembler, assemble_f_u, assemble_L
from .bdf import BdfScheme, extrapolate
from .errors import BulkgrowError, ValidationError
from .mesh import check_orientation, displace
from .sparsela import CachedSpdSolver, SpdFactor, schur_dirichlet_solve, solve_spd


@dataclass(frozen=True)
class ModelParams:
    """Model constants and the boundary source term.

    ``source`` is a callable mapping (points, time) to nodal values.
    """

    alpha: float
    beta: float
    mu: float = 0.0
    source: callable = None
    degree_k: int = 2
    dim_m: int = 2

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValidationError("alpha must be positive")
        if self.beta <= 0:
            raise ValidationError("beta must be positive")
        if self.mu < 0:
            raise ValidationError("mu must be nonnegative")
        if self.source is None:
            object.__setattr__(self, "source", constant_source(0.0))


def constant_source(value):
    """Source term Q that is constant in space and time."""
    value = float(value)

    def q(points, time):
        return np.full(np.atleast_2d(points).shape[0], value)

    return q


@dataclass(frozen=True)
class SimState:
    """Nodal unknowns of one time level."""

    time: float
    positions: np.ndarray     # (N, m+1)
    pressure: np.ndarray      # (N,)
    normal: np.ndarray        # (N_Gamma, m+1)
    curvature: np.ndarray     # (N_Gamma,)
    normal_speed: np.ndarray  # (N_Gamma,)
    velocity: np.ndarray      # (N, m+1)


class History:
    """Ring of the last q states, newest first, with uniform spacing."""

    def __init__(self, states, tau=None):
        states = list(states)
        if not states:
            raise ValidationError("history must contain at least one state")
        times = [s.time for s in states]
        if any(t1 <= t2 for t1, t2 in zip(times, times[1:])):
            raise ValidationError("history times must strictly decrease (newest first)")
        if tau is not None and len(states) > 1:
            gaps = -np.diff(times)
            if np.max(np.abs(gaps - tau)) > 1e-9 * max(tau, 1.0):
                raise ValidationError("history spacing does not match the time step")
        self.states = states
        self.maxlen = len(states)

    def push(self, state):
        if state.time <= self.states[0].time:
            raise ValidationError("new state must advance in time")
        self.states.insert(0, state)
        del self.states[self.maxlen:]

    def __len__(self):
        return len(self.states)

    def __getitem__(self, i):
        return self.states[i]

    def field(self, name):
        return [getattr(s, name) for s in self.states]


@dataclass
class ExtrapolatedGeometry:
    """Geometry and matrices frozen at the extrapolated configuration."""

    positions: np.ndarray
    normal: np.ndarray
    curvature: np.ndarray
    pressure: np.ndarray
    matrices: object
    surface: object  # SurfaceGeometry at the extrapolated positions
    n_boundary: int


def extrapolated_geometry(history, scheme, assembler):
    """Extrapolate (x, n, H, u) and assemble all matrices there."""
    q = scheme.order
    positions = extrapolate(scheme, history.field("positions")[:q])
    normal = extrapolate(scheme, history.field("normal")[:q])
    curvature = extrapolate(scheme, history.field("curvature")[:q])
    pressure = extrapolate(scheme, history.field("pressure")[:q])
    mass_b, stiff_b = assembler.bulk_matrices(positions)
    surf_geo = assembler.surface_geometry(positions)
    mass_s, stiff_s, blocks = assembler.surface_matrices(geometry=surf_geo)
    from .assembly import SystemMatrices

    matrices = SystemMatrices(
        mass_bulk=mass_b,
        stiff_bulk=stiff_b,
        mass_surf=mass_s,
        stiff_surf=stiff_s,
        tangrad=blocks,
        n_boundary=assembler.n_boundary,
    )
    return ExtrapolatedGeometry(
        positions=positions,
        normal=normal,
        curvature=curvature,
        pressure=pressure,
        matrices=matrices,
        surface=surf_geo,
        n_boundary=assembler.n_boundary,
    )


def robin_solve(geometry, params, time, solver=None):
    """Pressure from the generalized Robin problem on the frozen geometry."""
    ell = assemble_L(geometry.matrices, params.alpha, params.mu)
    ng = geometry.n_boundary
    rhs = assemble_f_u(
        geometry.matrices,
        geometry.positions[:ng],
        geometry.curvature,
        params.beta,
        params.source,
        time,
    )
    if solver is None:
        return SpdFactor(ell).solve(rhs)
    return solver.solve(ell, rhs)


def _surface_system(geometry, scheme, tau, params):
    mats = geometry.matrices
    return (scheme.delta[0] / tau) * mats.mass_surf + params.beta * mats.stiff_surf


def _bdf_history_term(scheme, tau, mass, past_fields):
    """-(1/tau) sum_{j>=1} delta_j M x^{n-j}, vectorized over columns."""
    acc = scheme.delta[1] * np.asarray(past_fields[0], dtype=float)
    for coeff, field in zip(scheme.delta[2:], past_fields[1:]):
        acc = acc + coeff * np.asarray(field, dtype=float)
    return -(mass @ acc) / tau


def normal_step(geometry, history, pressure, scheme, tau, params, assembler):
    """Implicit update of the (non-normalized) outward normal field."""
    mats = geometry.matrices
    ng = geometry.n_boundary
    system = _surface_system(geometry, scheme, tau, params)
    forcing = assembler.curvature_forcing_nu(
        geometry.normal, params.beta, geometry=geometry.surface
    )
    u_gamma = pressure[:ng]
    for comp, block in enumerate(mats.tangrad):
        forcing[:, comp] -= params.alpha * (block @ u_gamma)
    q = scheme.order
    rhs = forcing + _bdf_history_term(
        scheme, tau, mats.mass_surf, history.field("normal")[:q]
    )
    out = np.empty_like(rhs)
    for comp in range(rhs.shape[1]):
        out[:, comp] = solve_spd(system, rhs[:, comp])
    return out


def curvature_step(geometry, history, pressure, scheme, tau, params, assembler):
    """Implicit update of the mean curvature field.

    The quadratic forcing uses only extrapolated fields (normal, curvature,
    pressure); the new pressure enters through the surface-Laplacian term.
    """
    mats = geometry.matrices
    ng = geometry.n_boundary
    system = _surface_system(geometry, scheme, tau, params)
    speed_tilde = -params.beta * geometry.curvature \
        + params.alpha * geometry.pressure[:ng]
    forcing = assembler.curvature_forcing_H(
        geometry.normal, speed_tilde, geometry=geometry.surface
    )
    rhs = forcing + params.alpha * (mats.stiff_surf @ pressure[:ng])
    q = scheme.order
    rhs = rhs + _bdf_history_term(
        scheme, tau, mats.mass_surf, history.field("curvature")[:q]
    )
    return solve_spd(system, rhs)


def velocity_law(pressure_trace, curvature, normal, params):
    """Nodal velocity law: V = -beta H + alpha u on the boundary, v = V n."""
    speed = -params.beta * np.asarray(curvature) + params.alpha * np.asarray(
        pressure_trace
    )
    return speed, speed[:, None] * np.asarray(normal)


def harmonic_extension(matrices, boundary_velocity, solver=None):
    """Discrete harmonic extension of the boundary velocity into the bulk."""
    if solver is None:
        return schur_dirichlet_solve(
            matrices.stiff_bulk, matrices.n_boundary, boundary_velocity
        )
    ng = matrices.n_boundary
    a = matrices.stiff_bulk
    a_ii = a[ng:, ng:]
    rhs = -(a[ng:, :ng] @ boundary_velocity)
    out = np.empty((a.shape[0],) + boundary_velocity.shape[1:])
    out[:ng] = boundary_velocity
    out[ng:] = solver.solve(a_ii, rhs)
    return out


def position_update(scheme, history, velocity, tau, mesh=None):
    """New positions from the BDF relation dot(x)^n = v^n."""
    q = scheme.order
    past = history.field("positions")[:q]
    acc = scheme.delta[1] * past[0]
    for coeff, pos in zip(scheme.delta[2:], past[1:]):
        acc = acc + coeff * pos
    new_positions = (tau * velocity - acc) / scheme.delta[0]
    if mesh is not None:
        check_orientation(mesh, new_positions)  # GeometryError on tangling
    return new_positions


class Stepper:
    """Time stepping driver bound to one mesh connectivity.

    Holds the assembly engine and the cached factorized preconditioners for
    the two bulk solves, which stay effective across many steps of slow mesh
    motion.
    """

    def __init__(self, mesh, params, scheme, tau, check_tangling_every=1):
        if isinstance(scheme, int):
            from .bdf import bdf_coefficients

            scheme = bdf_coefficients(scheme)
        if tau <= 0:
            raise ValidationError("time step must be positive")
        self.mesh = mesh
        self.params = params
        self.scheme = scheme
        self.tau = tau
        self.assembler = Assembler(mesh)
        self.robin_solver = CachedSpdSolver()
        self.harmonic_solver = CachedSpdSolver()
        self.check_tangling_every = check_tangling_every
        self.step_count = 0

    def step(self, history):
        """Advance one BDF step; returns the new state at t + tau."""
        if len(history) < self.scheme.order:
            raise ValidationError(
                f"history holds {len(history)} states; BDF{self.scheme.order} "
                f"needs {self.scheme.order}"
            )
        self.step_count += 1
        time_next = history[0].time + self.tau
        stage = "extrapolated_geometry"
        try:
            geo = extrapolated_geometry(history, self.scheme, self.assembler)
            stage = "robin_solve"
            pressure = robin_solve(geo, self.params, time_next, self.robin_solver)
            stage = "normal_step"
            normal = normal_step(
                geo, history, pressure, self.scheme, self.tau, self.params,
                self.assembler,
            )
            stage = "curvature_step"
            curvature = curvature_step(
                geo, history, pressure, self.scheme, self.tau, self.params,
                self.assembler,
            )
            stage = "velocity_law"
            ng = geo.n_boundary
            speed, v_gamma = velocity_law(
                pressure[:ng], curvature, normal, self.params
            )
            stage = "harmonic_extension"
            velocity = harmonic_extension(geo.matrices, v_gamma, self.harmonic_solver)
            stage = "position_update"
            check = self.mesh if self.step_count % self.check_tangling_every == 0 else None
            positions = position_update(
                self.scheme, history, velocity, self.tau, mesh=check
            )
        except BulkgrowError as exc:
            raise type(exc)(
                f"step {self.step_count} ({stage}, t={time_next:.6g}): {exc}"
            ) from exc
        return SimState(
            time=time_next,
            positions=positions,
            pressure=pressure,
            normal=normal,
            curvature=curvature,
            normal_speed=speed,
            velocity=velocity,
        )

    def mesh_at(self, state):
        """Mesh object of a state's configuration."""
        return displace(self.mesh, state.positions)


def evolve(stepper, history, n_steps, observer=None):
    """Run n_steps of the scheme, pushing each new state into the history.

    ``observer(step_index, state)`` is called after every accepted step.
    """
    for k in range(n_steps):
        state = stepper.step(history)
        history.push(state)
        if observer is not None:
            observer(k, state)
    return history


# ---------------------------------------------------------------------------
# Initial data
# ---------------------------------------------------------------------------

def ellipsoid_surface_fields(points, radii):
    """Exact outward normal and mean curvature of an ellipsoid (or ellipse).

    Works in any ambient dimension: for the level set sum((x_i/r_i)^2) = 1
    the normal is the normalized gradient and the mean curvature (sum of
    principal curvatures) is the surface divergence of its unit extension.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    radii = np.asarray(radii, dtype=float)
    grad = pts / radii ** 2
    level = np.linalg.norm(grad, axis=1)
    normal = grad / level[:, None]
    div_grad = (1.0 / radii ** 2).sum()
    curvature = div_grad / level - (pts ** 2 / radii ** 6).sum(axis=1) / level ** 3
    return normal, curvature


def estimate_boundary_geometry(mesh):
    """Discrete normal and curvature estimate for a loaded mesh.

    Uses the weak Laplace identity for the position field: the mass-inverted
    surface stiffness applied to the coordinates approximates H * nu at the
    nodes.  The orientation is fixed by pointing away from the boundary
    centroid, so the estimate targets star-shaped domains.
    """
    from .assembly import Assembler

    assembler = Assembler(mesh)
    mass, stiff, _ = assembler.surface_matrices()
    coords = mesh.boundary_positions
    hnu = np.column_stack(
        [solve_spd(mass, stiff @ coords[:, c]) for c in range(coords.shape[1])]
    )
    magnitude = np.linalg.norm(hnu, axis=1)
    if (magnitude <= 0).any():
        raise ValidationError("degenerate curvature estimate (flat patch?)")
    normal = hnu / magnitude[:, None]
    centroid = coords.mean(axis=0)
    outward = np.einsum("id,id->i", normal, coords - centroid)
    sign = np.where(outward >= 0, 1.0, -1.0)
    return normal * sign[:, None], magnitude * sign


def initial_state(mesh, params, normal, curvature, time=0.0):
    """Initial state: geometry interpolated, pressure from the Robin solve."""
    assembler = Assembler(mesh)
    matrices = assembler.system()
    ell = assemble_L(matrices, params.alpha, params.mu)
    rhs = assemble_f_u(
        matrices, mesh.boundary_positions, curvature, params.beta,
        params.source, time,
    )
    pressure = SpdFactor(ell).solve(rhs)
    ng = mesh.n_boundary
    speed, v_gamma = velocity_law(pressure[:ng], curvature, normal, params)
    velocity = harmonic_extension(matrices, v_gamma)
    return SimState(
        time=float(time),
        positions=mesh.node_positions.copy(),
        pressure=pressure,
        normal=np.asarray(normal, dtype=float),
        curvature=np.asarray(curvature, dtype=float),
        normal_speed=speed,
        velocity=velocity,
    )


def bootstrap_history(mesh, params, tau, order, normal, curvature):
    """Startup for non-oracle runs: one step each with orders 1..q-1.

    The seed state interpolates the supplied geometry data and solves the
    discrete Robin problem for the pressure.
    """
    from .bdf import bdf_coefficients

    state0 = initial_state(mesh, params, normal, curvature)
    states = [state0]  # oldest first
    for q in range(1, order):
        sub = Stepper(mesh, params, bdf_coefficients(q), tau)
        states.append(sub.step(History(states[::-1][:q])))
    return History(states[::-1][:order])
