"""Bulk-surface simplicial meshes with boundary-first node ordering.

A mesh couples a simplicial bulk triangulation (triangles for a 2d bulk,
tetrahedra for 3d) with the triangulation of its boundary (segments /
triangles).  Boundary nodes are stored first so that the first ``n_boundary``
entries of any nodal vector are the trace of the corresponding bulk field.
Isoparametric degree 2 is supported by inserting edge midpoints; boundary
midpoints may be projected onto the exact surface.
"""

from dataclasses import dataclass
import math

import numpy as np

from .errors import GeometryError, MeshFormatError, ResourceError, ValidationError
from .refelem import (
    EDGE_VERTICES,
    geometry_jacobians,
    nodes_per_element,
    reference_element,
)

# Triangular faces of the reference tetrahedron (corner slots).
_TET_FACES = ((1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2))

# Hard cap on generated node counts (memory budget guard).
MAX_GENERATED_NODES = 4_000_000


@dataclass(frozen=True)
class BulkSurfaceMesh:
    """Evolving bulk-surface mesh; immutable after construction."""

    dim_m: int
    degree_k: int
    node_positions: np.ndarray    # (N, m+1)
    n_boundary: int
    bulk_elements: np.ndarray     # (E, nodes per simplex)
    boundary_elements: np.ndarray # (B, nodes per facet)
    mesh_size_h: float = 0.0      # derived, set in __post_init__

    def __post_init__(self):
        pos = np.ascontiguousarray(np.asarray(self.node_positions, dtype=float))
        bulk = np.ascontiguousarray(np.asarray(self.bulk_elements, dtype=np.int32))
        bnd = np.ascontiguousarray(np.asarray(self.boundary_elements, dtype=np.int32))
        object.__setattr__(self, "node_positions", pos)
        object.__setattr__(self, "bulk_elements", bulk)
        object.__setattr__(self, "boundary_elements", bnd)
        if self.dim_m not in (1, 2):
            raise ValidationError(f"boundary dimension m must be 1 or 2, got {self.dim_m}")
        if pos.ndim != 2 or pos.shape[1] != self.dim_m + 1:
            raise ValidationError("node_positions must have shape (N, m+1)")
        if bulk.shape[1] != nodes_per_element(self.dim_m + 1, self.degree_k):
            raise ValidationError("bulk connectivity width does not match degree")
        if bnd.shape[1] != nodes_per_element(self.dim_m, self.degree_k):
            raise ValidationError("boundary connectivity width does not match degree")
        n = pos.shape[0]
        if not (0 < self.n_boundary <= n):
            raise ValidationError("boundary node count out of range")
        if bulk.min() < 0 or bulk.max() >= n:
            raise ValidationError("bulk connectivity index out of range")
        if bnd.size == 0:
            raise ValidationError("boundary triangulation is empty")
        if bnd.min() < 0:
            raise ValidationError("boundary connectivity index out of range")
        if bnd.max() >= self.n_boundary:
            raise ValidationError(
                "boundary element references interior node "
                f"{int(bnd.max())} (>= n_boundary={self.n_boundary})"
            )
        used = np.zeros(self.n_boundary, dtype=bool)
        used[bnd.ravel()] = True
        if not used.all():
            missing = int(np.flatnonzero(~used)[0])
            raise ValidationError(f"boundary node {missing} not used by any facet")
        object.__setattr__(self, "mesh_size_h", float(element_diameters(self).max()))
        for arr in (pos, bulk, bnd):
            arr.setflags(write=False)

    @property
    def n_nodes(self):
        return self.node_positions.shape[0]

    @property
    def dim(self):
        """Ambient space dimension m+1."""
        return self.dim_m + 1

    @property
    def boundary_positions(self):
        return self.node_positions[: self.n_boundary]


def element_diameters(mesh, elements=None):
    """Per-element diameter (max pairwise node distance), shape (E,)."""
    conn = mesh.bulk_elements if elements is None else elements
    coords = mesh.node_positions[conn]  # (E, n, d)
    diff = coords[:, :, None, :] - coords[:, None, :, :]
    return np.sqrt((diff ** 2).sum(axis=-1).max(axis=(1, 2)))


def quasi_uniformity_ratio(mesh):
    """Ratio of largest to smallest bulk element diameter."""
    diams = element_diameters(mesh)
    return float(diams.max() / diams.min())


def bulk_jacobians(mesh, positions=None):
    """Geometry Jacobians at bulk quadrature points.

    Returns (jac, det) with shapes (E, n_qp, d, d) and (E, n_qp).
    """
    ref = reference_element(mesh.dim, mesh.degree_k)
    pos = mesh.node_positions if positions is None else positions
    coords = pos[mesh.bulk_elements]  # (E, n, d)
    jac = geometry_jacobians(coords, ref.grad)
    if mesh.dim == 2:
        det = jac[..., 0, 0] * jac[..., 1, 1] - jac[..., 0, 1] * jac[..., 1, 0]
    else:
        det = (
            jac[..., 0, 0] * (jac[..., 1, 1] * jac[..., 2, 2]
                              - jac[..., 1, 2] * jac[..., 2, 1])
            - jac[..., 0, 1] * (jac[..., 1, 0] * jac[..., 2, 2]
                                - jac[..., 1, 2] * jac[..., 2, 0])
            + jac[..., 0, 2] * (jac[..., 1, 0] * jac[..., 2, 1]
                                - jac[..., 1, 1] * jac[..., 2, 0])
        )
    return jac, det


def check_orientation(mesh, positions=None):
    """Raise GeometryError if any element has a non-positive Jacobian."""
    _, det = bulk_jacobians(mesh, positions)
    bad = np.flatnonzero((det <= 0.0).any(axis=1))
    if bad.size:
        raise GeometryError(
            "non-positive Jacobian determinant at a quadrature point",
            element=int(bad[0]),
        )


def bulk_element_measures(mesh):
    """Measure of each bulk element via quadrature, shape (E,)."""
    ref = reference_element(mesh.dim, mesh.degree_k)
    _, det = bulk_jacobians(mesh)
    return det @ ref.quad_weights


def boundary_element_measures(mesh):
    """Measure of each boundary facet via quadrature, shape (B,)."""
    ref = reference_element(mesh.dim_m, mesh.degree_k)
    coords = mesh.node_positions[mesh.boundary_elements]
    jac = np.einsum("enD,qnr->eqDr", coords, ref.grad, optimize=True)
    metric = np.einsum("eqDr,eqDs->eqrs", jac, jac)
    if mesh.dim_m == 1:
        det = metric[..., 0, 0]
    else:
        det = metric[..., 0, 0] * metric[..., 1, 1] - metric[..., 0, 1] * metric[..., 1, 0]
    return np.sqrt(det) @ ref.quad_weights


def quality_report(mesh):
    """Measured mesh diagnostics as a plain dict."""
    diams = element_diameters(mesh)
    return {
        "n_nodes": mesh.n_nodes,
        "n_boundary": mesh.n_boundary,
        "n_bulk_elements": int(mesh.bulk_elements.shape[0]),
        "n_boundary_elements": int(mesh.boundary_elements.shape[0]),
        "mesh_size_h": float(diams.max()),
        "min_diameter": float(diams.min()),
        "quasi_uniformity_ratio": float(diams.max() / diams.min()),
        "bulk_measure": float(bulk_element_measures(mesh).sum()),
        "boundary_measure": float(boundary_element_measures(mesh).sum()),
    }


def _validate_trace_compatibility(mesh, facet_lines=None):
    """Every boundary facet must coincide with a boundary face of a bulk element."""
    m, k = mesh.dim_m, mesh.degree_k
    face_nodes = {}
    counts = {}
    for conn in mesh.bulk_elements:
        faces = _element_faces(conn, m, k)
        for corners, full in faces:
            counts[corners] = counts.get(corners, 0) + 1
            face_nodes[corners] = full
    for b, facet in enumerate(mesh.boundary_elements):
        corners = frozenset(int(i) for i in facet[: m + 1])
        line = facet_lines[b] if facet_lines is not None else None
        if counts.get(corners, 0) != 1:
            raise MeshFormatError(
                f"facet {b} is not a boundary face of exactly one bulk element",
                line=line,
            )
        if frozenset(int(i) for i in facet) != frozenset(int(i) for i in face_nodes[corners]):
            raise MeshFormatError(
                f"facet {b} node set does not match its parent element face",
                line=line,
            )


def _element_faces(conn, m, k):
    """Boundary-candidate faces of one bulk element: (corner frozenset, all nodes)."""
    d = m + 1
    faces = []
    if d == 2:
        for s, (a, b) in enumerate(EDGE_VERTICES[2]):
            nodes = [conn[a], conn[b]]
            if k == 2:
                nodes.append(conn[3 + s])
            faces.append((frozenset(int(i) for i in nodes[:2]), tuple(nodes)))
    else:
        edge_slot = {frozenset(e): s for s, e in enumerate(EDGE_VERTICES[3])}
        for fa, fb, fc in _TET_FACES:
            nodes = [conn[fa], conn[fb], conn[fc]]
            if k == 2:
                for pair in ((fa, fb), (fb, fc), (fa, fc)):
                    nodes.append(conn[4 + edge_slot[frozenset(pair)]])
            faces.append((frozenset(int(i) for i in nodes[:3]), tuple(nodes)))
    return faces


def validate_mesh(mesh):
    """Full validation: trace compatibility and element orientation."""
    _validate_trace_compatibility(mesh)
    check_orientation(mesh)
    if mesh.degree_k == 2:
        _check_midpoint_sanity(mesh)
    return mesh


def _check_midpoint_sanity(mesh):
    """Midpoint nodes must stay near their edge chords (guards slot mixups)."""
    d = mesh.dim
    conn = mesh.bulk_elements
    pos = mesh.node_positions
    for s, (a, b) in enumerate(EDGE_VERTICES[d]):
        pa, pb = pos[conn[:, a]], pos[conn[:, b]]
        mid = pos[conn[:, d + 1 + s]]
        edge_len = np.linalg.norm(pb - pa, axis=1)
        dev = np.linalg.norm(mid - (pa + pb) / 2.0, axis=1)
        bad = np.flatnonzero(dev > 0.3 * edge_len)
        if bad.size:
            raise GeometryError(
                f"midpoint node deviates more than 0.3 edge lengths on edge slot {s}",
                element=int(bad[0]),
            )


# ---------------------------------------------------------------------------
# Surface projectors
# ---------------------------------------------------------------------------

def ellipsoid_projector(radii):
    """Radial projection onto the ellipsoid with the given semi-axes.

    Points are scaled along the ray through the origin until they satisfy
    sum((x_i / r_i)^2) = 1.  For equal radii this is projection onto the
    sphere.
    """
    radii = np.asarray(radii, dtype=float)

    def project(points):
        pts = np.atleast_2d(points)
        level = np.sqrt(((pts / radii) ** 2).sum(axis=1))
        return pts / level[:, None]

    return project


def circle_projector(radius):
    """Radial projection onto the circle (m=1) of the given radius."""
    return ellipsoid_projector(np.full(2, float(radius)))


# ---------------------------------------------------------------------------
# Generators
# ---------------------------------------------------------------------------

def generate_disk_mesh(radius, target_h, degree=1):
    """Triangulate the disk of the given radius (m=1 geometry).

    Uses a hexagonal ring pattern: ring j carries 6j equally spaced nodes at
    radius j*radius/M, which yields near-equilateral triangles and an exactly
    resolved circular boundary.  Boundary nodes come first, ordered by angle.

    Parameters
    ----------
    radius : float
        Disk radius, > 0.
    target_h : float
        Requested mesh size; the generated mesh satisfies h <= 1.5 * target_h.
    degree : int
        Isoparametric degree (1 or 2).  Degree 2 projects boundary edge
        midpoints onto the circle.
    """
    if radius <= 0:
        raise ValidationError("radius must be positive")
    if not (0 < target_h < radius):
        raise ValidationError("target_h must lie in (0, radius)")
    rings = max(1, math.ceil(radius / target_h))
    n_estimate = (1 + 3 * rings * (rings + 1)) * (4 if degree == 2 else 1)
    if n_estimate > MAX_GENERATED_NODES:
        raise ResourceError(
            f"target_h={target_h} would create ~{n_estimate} nodes "
            f"(cap {MAX_GENERATED_NODES})"
        )

    n_bnd = 6 * rings
    center = n_bnd

    def ring_start(j):
        # ring M occupies [0, 6M); interior ring j starts after the center node
        return n_bnd + 1 + 3 * j * (j - 1)

    def node_id(j, p):
        if j == 0:
            return center
        if j == rings:
            return p % n_bnd
        return ring_start(j) + p % (6 * j)

    n_nodes = 1 + 3 * rings * (rings + 1)
    pos = np.empty((n_nodes, 2))
    pos[center] = 0.0
    for j in range(1, rings + 1):
        r = radius * j / rings
        p = np.arange(6 * j)
        theta = 2.0 * np.pi * p / (6 * j)
        ids = np.array([node_id(j, int(q)) for q in p])
        pos[ids, 0] = r * np.cos(theta)
        pos[ids, 1] = r * np.sin(theta)

    tris = []
    for p in range(6):
        tris.append((node_id(1, p), node_id(1, p + 1), center))
    for j in range(2, rings + 1):
        for s in range(6):
            for p in range(j):
                o0 = node_id(j, s * j + p)
                o1 = node_id(j, s * j + p + 1)
                i0 = node_id(j - 1, s * (j - 1) + p)
                tris.append((o0, o1, i0))
                if p < j - 1:
                    i1 = node_id(j - 1, s * (j - 1) + p + 1)
                    tris.append((o1, i1, i0))
    segments = [(p, (p + 1) % n_bnd) for p in range(n_bnd)]

    mesh = BulkSurfaceMesh(
        dim_m=1,
        degree_k=1,
        node_positions=pos,
        n_boundary=n_bnd,
        bulk_elements=np.array(tris, dtype=np.int32),
        boundary_elements=np.array(segments, dtype=np.int32),
    )
    validate_mesh(mesh)
    if degree == 2:
        mesh = elevate_to_quadratic(mesh, circle_projector(radius))
    return mesh


def generate_ball_mesh(radii, target_h, degree=1):
    """Tetrahedralize the ellipsoid with the given semi-axes (m=2 geometry).

    The unit cube is split into Kuhn tetrahedra on a grid whose per-axis
    resolution is proportional to the corresponding semi-axis, mapped onto the
    unit ball by scaling each ray so cube shells land on spheres, and finally
    stretched onto the ellipsoid.  Boundary facet nodes lie exactly on the
    ellipsoid.
    """
    radii = np.asarray(radii, dtype=float)
    if radii.ndim == 0:
        radii = np.full(3, float(radii))
    if radii.shape != (3,) or (radii <= 0).any():
        raise ValidationError("radii must be three positive lengths")
    if target_h <= 0:
        raise ValidationError("target_h must be positive")
    # Kuhn tets have diameter sqrt(3) * cell size; compensate anisotropy so
    # the scaled elements stay near-isotropic.
    subdiv = np.maximum(
        2, np.ceil(2.0 * math.sqrt(3.0) * radii / target_h).astype(int)
    )
    n_estimate = int(np.prod(subdiv + 1)) * (8 if degree == 2 else 1)
    if n_estimate > MAX_GENERATED_NODES:
        raise ResourceError(
            f"target_h={target_h} would create ~{n_estimate} nodes "
            f"(cap {MAX_GENERATED_NODES})"
        )
    return _ball_mesh_from_subdivisions(subdiv, radii, degree)


def _ball_mesh_from_subdivisions(subdiv, radii, degree):
    nx, ny, nz = (int(s) for s in subdiv)
    axes = [np.linspace(-1.0, 1.0, n + 1) for n in (nx, ny, nz)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)

    def vid(i, j, k):
        return (i * (ny + 1) + j) * (nz + 1) + k

    # Kuhn/Freudenthal split: six tets per cell, all sharing the main diagonal.
    perms = [(0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)]
    tets = []
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                base = np.array([i, j, k])
                for perm in perms:
                    steps = np.zeros((4, 3), dtype=int)
                    for s, axis in enumerate(perm):
                        steps[s + 1] = steps[s]
                        steps[s + 1, axis] += 1
                    corners = base + steps
                    tets.append([vid(*c) for c in corners])
    tets = np.array(tets, dtype=np.int64)

    # Fix orientation in the cube; the ball map preserves it.
    coords = grid[tets]
    vol6 = np.linalg.det(coords[:, 1:] - coords[:, :1])
    flip = vol6 < 0
    tets[flip, 0], tets[flip, 1] = tets[flip, 1].copy(), tets[flip, 0].copy()

    # Map cube onto the unit ball: rays are scaled so that sup-norm shells
    # become spheres; then stretch onto the ellipsoid.
    sup = np.abs(grid).max(axis=1)
    two = np.linalg.norm(grid, axis=1)
    scale = np.divide(sup, two, out=np.ones_like(sup), where=two > 0)
    points = grid * scale[:, None] * np.asarray(radii)

    # Boundary faces appear on exactly one tet.
    faces = {}
    for e, conn in enumerate(tets):
        for fa, fb, fc in _TET_FACES:
            key = frozenset((int(conn[fa]), int(conn[fb]), int(conn[fc])))
            faces[key] = None if key in faces else (conn[fa], conn[fb], conn[fc])
    bnd_faces = [f for f in faces.values() if f is not None]

    # Orient boundary triangles outward (the ellipsoid is star-shaped).
    oriented = []
    for f in bnd_faces:
        p = points[list(f)]
        normal = np.cross(p[1] - p[0], p[2] - p[0])
        oriented.append(f if normal @ p.mean(axis=0) > 0 else (f[0], f[2], f[1]))

    mesh = _renumber_boundary_first(
        dim_m=2,
        positions=points,
        bulk=tets,
        boundary=np.array(oriented, dtype=np.int64),
    )
    validate_mesh(mesh)
    if degree == 2:
        mesh = elevate_to_quadratic(mesh, ellipsoid_projector(radii))
    return mesh


def _renumber_boundary_first(dim_m, positions, bulk, boundary):
    bnd_ids = np.unique(boundary.ravel())
    n = positions.shape[0]
    perm = np.empty(n, dtype=np.int64)
    is_bnd = np.zeros(n, dtype=bool)
    is_bnd[bnd_ids] = True
    perm[bnd_ids] = np.arange(bnd_ids.size)
    interior = np.flatnonzero(~is_bnd)
    perm[interior] = bnd_ids.size + np.arange(interior.size)
    new_pos = np.empty_like(positions)
    new_pos[perm] = positions
    return BulkSurfaceMesh(
        dim_m=dim_m,
        degree_k=1,
        node_positions=new_pos,
        n_boundary=int(bnd_ids.size),
        bulk_elements=perm[bulk],
        boundary_elements=perm[boundary],
    )


# ---------------------------------------------------------------------------
# Degree elevation and displacement
# ---------------------------------------------------------------------------

def elevate_to_quadratic(mesh, surface_projector=None):
    """Insert edge midpoints, turning a degree-1 mesh into degree 2.

    Boundary-edge midpoints are mapped by ``surface_projector`` (if given) so
    the curved boundary interpolates the exact surface; interior midpoints
    stay on the straight edge.  New boundary midpoints are appended to the
    boundary-first block.
    """
    if mesh.degree_k != 1:
        raise ValidationError("input mesh must have degree 1")
    d = mesh.dim
    edge_slots = EDGE_VERTICES[d]

    pairs = np.sort(
        np.concatenate([mesh.bulk_elements[:, list(e)] for e in edge_slots]), axis=1
    )
    edges, inverse = np.unique(pairs, axis=0, return_inverse=True)
    inverse = inverse.reshape(len(edge_slots), -1)  # [slot, element] -> edge id

    bnd_pairs = np.sort(
        np.concatenate(
            [mesh.boundary_elements[:, list(e)] for e in EDGE_VERTICES[mesh.dim_m]]
        ),
        axis=1,
    )
    is_bnd_edge = np.zeros(len(edges), dtype=bool)
    edge_lookup = {(int(a), int(b)): i for i, (a, b) in enumerate(edges)}
    bnd_edge_ids = np.array(
        [edge_lookup[(int(a), int(b))] for a, b in bnd_pairs], dtype=np.int64
    )
    is_bnd_edge[bnd_edge_ids] = True

    mids = mesh.node_positions[edges].mean(axis=1)
    if surface_projector is not None and is_bnd_edge.any():
        straight = mids[is_bnd_edge]
        projected = surface_projector(straight)
        edge_vecs = (
            mesh.node_positions[edges[is_bnd_edge, 1]]
            - mesh.node_positions[edges[is_bnd_edge, 0]]
        )
        moved = np.linalg.norm(projected - straight, axis=1)
        limit = 0.3 * np.linalg.norm(edge_vecs, axis=1)
        bad = np.flatnonzero(moved > limit)
        if bad.size:
            raise GeometryError(
                "projector moved a boundary midpoint more than 0.3 edge lengths",
                element=int(bad[0]),
            )
        mids[is_bnd_edge] = projected

    # New node numbering: old boundary, new boundary midpoints, then interior.
    n_bnd_new = int(is_bnd_edge.sum())
    old_map = np.arange(mesh.n_nodes, dtype=np.int64)
    old_map[mesh.n_boundary:] += n_bnd_new
    edge_map = np.empty(len(edges), dtype=np.int64)
    edge_map[is_bnd_edge] = mesh.n_boundary + np.arange(n_bnd_new)
    n_after_bnd = mesh.n_nodes + n_bnd_new
    edge_map[~is_bnd_edge] = n_after_bnd + np.arange(len(edges) - n_bnd_new)

    positions = np.empty((mesh.n_nodes + len(edges), d))
    positions[old_map] = mesh.node_positions
    positions[edge_map] = mids

    bulk = np.hstack([old_map[mesh.bulk_elements], edge_map[inverse.T]])
    # bnd_edge_ids is slot-major (all facets for slot 0, then slot 1, ...).
    bnd_mid = edge_map[bnd_edge_ids].reshape(len(EDGE_VERTICES[mesh.dim_m]), -1).T
    boundary = np.hstack([old_map[mesh.boundary_elements], bnd_mid])

    out = BulkSurfaceMesh(
        dim_m=mesh.dim_m,
        degree_k=2,
        node_positions=positions,
        n_boundary=mesh.n_boundary + n_bnd_new,
        bulk_elements=bulk,
        boundary_elements=boundary,
    )
    return validate_mesh(out)


def displace(mesh, new_positions):
    """Same connectivity at new node positions.

    Recomputes the mesh size and flags any element whose Jacobian determinant
    becomes non-positive at a quadrature point.
    """
    new_positions = np.asarray(new_positions, dtype=float)
    if new_positions.shape != mesh.node_positions.shape:
        raise ValidationError(
            f"expected positions of shape {mesh.node_positions.shape}, "
            f"got {new_positions.shape}"
        )
    out = BulkSurfaceMesh(
        dim_m=mesh.dim_m,
        degree_k=mesh.degree_k,
        node_positions=new_positions,
        n_boundary=mesh.n_boundary,
        bulk_elements=mesh.bulk_elements,
        boundary_elements=mesh.boundary_elements,
    )
    check_orientation(out)
    return out


# ---------------------------------------------------------------------------
# .bsm file format
# ---------------------------------------------------------------------------

def save_mesh(mesh, path):
    """Write a mesh in the ASCII ``.bsm`` format (17 significant digits)."""
    lines = [f"bsm 1 {mesh.dim_m} {mesh.degree_k} {mesh.n_nodes} {mesh.n_boundary}"]
    lines.append("NODES")
    for p in mesh.node_positions:
        lines.append(" ".join(f"{x:.17g}" for x in p))
    lines.append("ELEMENTS")
    for conn in mesh.bulk_elements:
        lines.append(" ".join(str(int(i)) for i in conn))
    lines.append("BOUNDARY")
    for conn in mesh.boundary_elements:
        lines.append(" ".join(str(int(i)) for i in conn))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_mesh(path):
    """Read a ``.bsm`` file, validating structure and mesh invariants."""
    with open(path) as fh:
        raw = fh.readlines()
    rows = []  # (line number, payload)
    for lineno, line in enumerate(raw, start=1):
        text = line.split("#", 1)[0].strip()
        if text:
            rows.append((lineno, text))
    if not rows:
        raise MeshFormatError("empty file", line=1)

    header_line, header = rows[0]
    parts = header.split()
    if len(parts) != 6 or parts[0] != "bsm":
        raise MeshFormatError("expected header 'bsm 1 <m> <k> <N> <N_Gamma>'", line=header_line)
    try:
        version, m, k, n_nodes, n_bnd = (int(p) for p in parts[1:])
    except ValueError:
        raise MeshFormatError("non-integer header field", line=header_line) from None
    if version != 1:
        raise MeshFormatError(f"unsupported format version {version}", line=header_line)
    if m not in (1, 2) or k not in (1, 2):
        raise MeshFormatError(f"unsupported dimension/degree m={m} k={k}", line=header_line)

    sections = {}
    current = None
    for lineno, text in rows[1:]:
        if text in ("NODES", "ELEMENTS", "BOUNDARY"):
            if text in sections:
                raise MeshFormatError(f"duplicate section {text}", line=lineno)
            current = text
            sections[current] = []
            continue
        if current is None:
            raise MeshFormatError("data before first section header", line=lineno)
        sections[current].append((lineno, text))
    for name in ("NODES", "ELEMENTS", "BOUNDARY"):
        if name not in sections:
            raise MeshFormatError(f"missing section {name}", line=header_line)
        if not sections[name]:
            raise MeshFormatError(f"empty {name} section", line=header_line)

    dim = m + 1
    if len(sections["NODES"]) != n_nodes:
        raise MeshFormatError(
            f"expected {n_nodes} node rows, found {len(sections['NODES'])}",
            line=sections["NODES"][0][0],
        )
    positions = np.empty((n_nodes, dim))
    for i, (lineno, text) in enumerate(sections["NODES"]):
        fields = text.split()
        if len(fields) != dim:
            raise MeshFormatError(f"expected {dim} coordinates", line=lineno)
        try:
            positions[i] = [float(f) for f in fields]
        except ValueError:
            raise MeshFormatError("non-numeric coordinate", line=lineno) from None

    def parse_conn(name, width):
        entries = sections[name]
        out = np.empty((len(entries), width), dtype=np.int64)
        lines = np.empty(len(entries), dtype=np.int64)
        for i, (lineno, text) in enumerate(entries):
            fields = text.split()
            if len(fields) != width:
                raise MeshFormatError(
                    f"expected {width} node indices in {name} row", line=lineno
                )
            try:
                out[i] = [int(f) for f in fields]
            except ValueError:
                raise MeshFormatError("non-integer connectivity entry", line=lineno) from None
            if out[i].min() < 0 or out[i].max() >= n_nodes:
                raise MeshFormatError("node index out of range", line=lineno)
            lines[i] = lineno
        return out, lines

    bulk, _ = parse_conn("ELEMENTS", nodes_per_element(dim, k))
    boundary, bnd_lines = parse_conn("BOUNDARY", nodes_per_element(m, k))

    bad = np.flatnonzero((boundary >= n_bnd).any(axis=1))
    if bad.size:
        raise MeshFormatError(
            "facet references a non-boundary node (ordering must be boundary-first)",
            line=int(bnd_lines[bad[0]]),
        )
    try:
        mesh = BulkSurfaceMesh(
            dim_m=m,
            degree_k=k,
            node_positions=positions,
            n_boundary=n_bnd,
            bulk_elements=bulk,
            boundary_elements=boundary,
        )
    except ValidationError as exc:
        raise MeshFormatError(str(exc), line=header_line) from None
    _validate_trace_compatibility(mesh, facet_lines=bnd_lines)
    check_orientation(mesh)
    if k == 2:
        _check_midpoint_sanity(mesh)
    return mesh
