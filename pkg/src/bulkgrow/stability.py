"""Numerical probes of the h-uniform stability of two boundary-value maps.

Two ratios are measured on refinement sequences:

* Dirichlet: the discrete harmonic extension of boundary data g, with the
  bulk H1 norm of the extension over the discrete H^(1/2) norm of g.
* Robin: the solution map of the model Robin problem (unit coefficients,
  zero bulk load), with the boundary H1 norm of the trace over the L2 norm
  of g.

Bounded ratios across refinements are the testable content of the underlying
stability estimates.  Each level reports the maximum over seeded random
boundary fields plus a power-iteration search for the worst field, which
exploits that both ratios are Rayleigh quotients of symmetric pencils.
"""

import numpy as np

from .assembly import assemble_system, embed_boundary_block
from .errors import ValidationError
from .norms import norm_K, norm_M, norm_h_half, surface_spectrum
from .sparsela import SpdFactor, schur_dirichlet_solve


def dirichlet_ratio(matrices, g, spectrum=None, interior_factor=None):
    """Bulk H1 norm of the zero-load Dirichlet extension over ||g||_{H^1/2}.

    Returns 0 for g = 0 by convention.
    """
    g = np.asarray(g, dtype=float)
    if not np.any(g):
        return 0.0
    denom = norm_h_half(g, matrices.mass_surf, matrices.stiff_surf, spectrum)
    if interior_factor is None:
        u = schur_dirichlet_solve(matrices.stiff_bulk, matrices.n_boundary, g)
    else:
        u = _extend(matrices, g, interior_factor)
    return norm_K(u, matrices, "bulk") / denom


def robin_ratio(matrices, g, robin_factor=None):
    """Boundary H1 norm of the Robin solution trace over ||g||_{L2}.

    The Robin problem uses unit boundary coefficient and no surface
    diffusion: (A_bulk + M_surf embedded) u = gamma^T M_surf g.  Returns 0
    for g = 0 by convention.
    """
    g = np.asarray(g, dtype=float)
    if not np.any(g):
        return 0.0
    ng = matrices.n_boundary
    factor = robin_factor if robin_factor is not None else _robin_factor(matrices)
    rhs = np.zeros(matrices.n_nodes)
    rhs[:ng] = matrices.mass_surf @ g
    u = factor.solve(rhs)
    return norm_K(u[:ng], matrices, "surface") / norm_M(g, matrices, "surface")


def _robin_factor(matrices):
    system = matrices.stiff_bulk + embed_boundary_block(
        matrices.mass_surf, matrices.n_nodes
    )
    return SpdFactor(system)


def _interior_factor(matrices):
    ng = matrices.n_boundary
    return SpdFactor(matrices.stiff_bulk[ng:, ng:])


def _extend(matrices, g, interior_factor):
    ng = matrices.n_boundary
    a = matrices.stiff_bulk
    out = np.empty(matrices.n_nodes)
    out[:ng] = g
    out[ng:] = interior_factor.solve(-(a[ng:, :ng] @ g))
    return out


def _boost_dirichlet(matrices, g, spectrum, interior_factor, iterations):
    """Power iteration on the Rayleigh structure of the Dirichlet ratio.

    The squared ratio is (g^T B g) / (g^T C g) with B the pulled-back bulk
    H1 form of the extension operator and C the H^(1/2) Gram matrix, whose
    inverse is available from the surface eigen-decomposition.
    """
    lam, phi = spectrum
    ng = matrices.n_boundary
    a = matrices.stiff_bulk
    k_bulk = a + matrices.mass_bulk
    inv_weights = 1.0 / np.sqrt(1.0 + lam)

    def apply_c_inverse(vec):
        return phi @ (inv_weights * (phi.T @ vec))

    for _ in range(iterations):
        ext = _extend(matrices, g, interior_factor)
        y = k_bulk @ ext
        bg = y[:ng] - a[:ng, ng:] @ interior_factor.solve(y[ng:])
        g = apply_c_inverse(bg)
        g /= np.linalg.norm(g)
    return g


def _boost_robin(matrices, g, robin_factor, iterations):
    """Power iteration for the Robin ratio.

    The squared ratio is a Rayleigh quotient with mass-matrix metric; one
    iteration maps g to the boundary trace of P^-1 gamma^T K_surf times the
    trace of P^-1 gamma^T M_surf g.
    """
    ng = matrices.n_boundary
    k_surf = matrices.stiff_surf + matrices.mass_surf
    rhs = np.zeros(matrices.n_nodes)
    for _ in range(iterations):
        rhs[:ng] = matrices.mass_surf @ g
        u = robin_factor.solve(rhs)
        rhs[:ng] = k_surf @ u[:ng]
        y = robin_factor.solve(rhs)
        g = y[:ng]
        g /= np.linalg.norm(g)
    return g


def stability_sweep(meshes, mode, samples=20, seed=0, boost_iters=20):
    """Max stability ratio per refinement level.

    Parameters
    ----------
    meshes : sequence of BulkSurfaceMesh
        One mesh per refinement level, coarse to fine.
    mode : str
        "dirichlet" or "robin".
    samples : int
        Number of seeded pseudo-random unit-norm boundary fields per level.
    seed : int
        Base RNG seed; level l uses default_rng([seed, l]).
    boost_iters : int
        Power-iteration steps refining the worst sampled field.

    Returns
    -------
    list of dict
        Rows with level, h, n_nodes, n_boundary, max_ratio and argmax_seed
        (-1 when the boosted field wins).
    """
    if mode not in ("dirichlet", "robin"):
        raise ValidationError(f"unknown sweep mode {mode!r}")
    if samples < 1:
        raise ValidationError("need at least one sample per level")
    rows = []
    for level, mesh in enumerate(meshes):
        matrices = assemble_system(mesh)
        ng = mesh.n_boundary
        rng = np.random.default_rng([seed, level])
        if mode == "dirichlet":
            spectrum = surface_spectrum(matrices.mass_surf, matrices.stiff_surf)
            interior = _interior_factor(matrices)

            def ratio(g):
                return dirichlet_ratio(matrices, g, spectrum, interior)
        else:
            robin = _robin_factor(matrices)

            def ratio(g):
                return robin_ratio(matrices, g, robin)

        best_ratio = -np.inf
        best_seed = -1
        best_field = None
        for s in range(samples):
            g = rng.standard_normal(ng)
            g /= np.linalg.norm(g)
            r = ratio(g)
            if r > best_ratio:
                best_ratio, best_seed, best_field = r, s, g
        if boost_iters > 0:
            if mode == "dirichlet":
                boosted = _boost_dirichlet(
                    matrices, best_field.copy(), spectrum, interior, boost_iters
                )
            else:
                boosted = _boost_robin(matrices, best_field.copy(), robin, boost_iters)
            r = ratio(boosted)
            if r > best_ratio:
                best_ratio, best_seed = r, -1
        rows.append(
            {
                "level": level,
                "h": mesh.mesh_size_h,
                "n_nodes": mesh.n_nodes,
                "n_boundary": ng,
                "max_ratio": float(best_ratio),
                "argmax_seed": best_seed,
            }
        )
    return rows


def growth_factors(rows):
    """Per-level growth factors of the max ratio."""
    ratios = [row["max_ratio"] for row in rows]
    return [b / a for a, b in zip(ratios, ratios[1:])]
