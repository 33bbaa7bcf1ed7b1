"""Legacy ASCII VTK and CSV writers for simulation output.

The bulk snapshot is an UNSTRUCTURED_GRID with point data (pressure, the
boundary curvature zero-padded into the bulk, and the velocity magnitude);
the boundary goes into a separate POLYDATA file with the trace fields.
Quadratic cells use the standard quadratic cell types; quadratic boundary
facets are subdivided for the polydata file, which has no curved cells.
"""

import numpy as np

from .errors import ValidationError

_CELL_TYPES = {
    (2, 1): 5,   # triangle
    (2, 2): 22,  # quadratic triangle
    (3, 1): 10,  # tetrahedron
    (3, 2): 24,  # quadratic tetrahedron
}


def _fmt(x):
    return f"{x:.12g}"


def _points_block(positions):
    pts3 = np.zeros((len(positions), 3))
    pts3[:, : positions.shape[1]] = positions
    lines = [f"POINTS {len(positions)} double"]
    lines.extend(" ".join(_fmt(c) for c in p) for p in pts3)
    return lines


def _scalar_block(name, values):
    lines = [f"SCALARS {name} double", "LOOKUP_TABLE default"]
    lines.extend(_fmt(v) for v in values)
    return lines


def write_vtk(path, mesh, state=None, title="bulkgrow snapshot"):
    """Write the bulk mesh (and optional state fields) as legacy VTK."""
    cell_type = _CELL_TYPES.get((mesh.dim, mesh.degree_k))
    if cell_type is None:
        raise ValidationError("unsupported mesh for VTK output")
    conn = mesh.bulk_elements
    lines = ["# vtk DataFile Version 3.0", title, "ASCII",
             "DATASET UNSTRUCTURED_GRID"]
    lines.extend(_points_block(mesh.node_positions))
    n_el, n_loc = conn.shape
    lines.append(f"CELLS {n_el} {n_el * (n_loc + 1)}")
    lines.extend(
        f"{n_loc} " + " ".join(str(int(i)) for i in row) for row in conn
    )
    lines.append(f"CELL_TYPES {n_el}")
    lines.extend([str(cell_type)] * n_el)
    if state is not None:
        n = mesh.n_nodes
        padded_h = np.zeros(n)
        padded_h[: mesh.n_boundary] = state.curvature
        speed = np.linalg.norm(state.velocity, axis=1)
        lines.append(f"POINT_DATA {n}")
        lines.extend(_scalar_block("pressure", state.pressure))
        lines.extend(_scalar_block("curvature", padded_h))
        lines.extend(_scalar_block("velocity_magnitude", speed))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _subdivide_facets(mesh):
    """Linear sub-facets of the boundary (quadratic facets are split)."""
    conn = mesh.boundary_elements
    if mesh.degree_k == 1:
        return conn
    if mesh.dim_m == 1:
        # [v0, v1, m] -> (v0, m), (m, v1)
        return np.vstack([conn[:, [0, 2]], conn[:, [2, 1]]])
    # [v0, v1, v2, m01, m12, m20] -> four corner/midpoint triangles
    return np.vstack(
        [
            conn[:, [0, 3, 5]],
            conn[:, [3, 1, 4]],
            conn[:, [5, 4, 2]],
            conn[:, [3, 4, 5]],
        ]
    )


def write_surface_vtk(path, mesh, state=None, title="bulkgrow boundary"):
    """Write the boundary as POLYDATA with the trace fields."""
    ng = mesh.n_boundary
    facets = _subdivide_facets(mesh)
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET POLYDATA"]
    lines.extend(_points_block(mesh.node_positions[:ng]))
    n_f, n_loc = facets.shape
    keyword = "LINES" if mesh.dim_m == 1 else "POLYGONS"
    lines.append(f"{keyword} {n_f} {n_f * (n_loc + 1)}")
    lines.extend(
        f"{n_loc} " + " ".join(str(int(i)) for i in row) for row in facets
    )
    if state is not None:
        lines.append(f"POINT_DATA {ng}")
        lines.extend(_scalar_block("pressure_trace", state.pressure[:ng]))
        lines.extend(_scalar_block("curvature", state.curvature))
        lines.extend(_scalar_block("normal_speed", state.normal_speed))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_csv(path, columns, rows):
    """CSV with a fixed column order and 12 significant digits."""
    out = [",".join(columns)]
    for row in rows:
        cells = []
        for col in columns:
            value = row[col]
            if isinstance(value, float):
                cells.append(_fmt(value))
            else:
                cells.append(str(value))
        out.append(",".join(cells))
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")
