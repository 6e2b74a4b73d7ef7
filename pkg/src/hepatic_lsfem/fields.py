"""Derived quantities of a discrete solution: fluxes and per-cell / per-vertex fields."""

from __future__ import annotations

from typing import Optional

import numpy as np

from .mesh import FLUID, POROUS, AffineScaleMap, BoundaryTag, interface_arrays
from .spaces import ProductDofMap, eval_fluid, eval_porous

_CENTROID = np.array([[1.0 / 3.0, 1.0 / 3.0]])


def _outward(mesh, edges):
    n = mesh.edge_normals()[edges]
    c = mesh.centroids()[mesh.edge_tris[edges, 0]]
    flip = np.einsum("ij,ij->i", n, mesh.edge_midpoints()[edges] - c) < 0
    n[flip] *= -1
    return n


def _vf_edge_flux(dofmap: ProductDofMap, u, edges, normals):
    """Exact integral of the (linear) fluid velocity against ``normals`` along ``edges``."""
    mesh = dofmap.mesh
    v = u[dofmap.field_slice("vf")].reshape(-1, 2)
    loc = dofmap.vertex_local["f"]
    ends = mesh.edges[edges]
    mean = 0.5 * (v[loc[ends[:, 0]]] + v[loc[ends[:, 1]]])
    return mesh.edge_lengths()[edges] * np.einsum("ij,ij->i", mean, normals)


def _vp_edge_flux(dofmap: ProductDofMap, u, edges, normals):
    """Porous flux through ``edges`` in the direction of ``normals`` (RT dofs are global-normal fluxes)."""
    mesh = dofmap.mesh
    s = np.sign(np.einsum("ij,ij->i", normals, mesh.edge_normals()[edges]))
    return s * u[dofmap.offsets["vp"][0] + dofmap.edge_local["p"][edges]]


def boundary_fluxes(dofmap: ProductDofMap, u: np.ndarray) -> dict:
    """Net volume flux *into* the domain through each boundary tag.

    Positive values mean inflow, so an inlet reports a positive number and
    an outlet a negative one.  Keys are tag labels.
    """
    mesh = dofmap.mesh
    out = {}
    for tag in BoundaryTag:
        if tag in (BoundaryTag.INTERIOR, BoundaryTag.INTERFACE):
            continue
        e = mesh.edges_with_tag(tag)
        e = e[mesh.edge_count[e] == 1]
        if e.size == 0:
            continue
        n = _outward(mesh, e)
        fluid = mesh.subdomain[mesh.edge_tris[e, 0]] == FLUID
        total = 0.0
        if fluid.any():
            total -= _vf_edge_flux(dofmap, u, e[fluid], n[fluid]).sum()
        if (~fluid).any():
            total -= _vp_edge_flux(dofmap, u, e[~fluid], n[~fluid]).sum()
        out[tag.label] = float(total)
    return out


def interface_fluxes(dofmap: ProductDofMap, u: np.ndarray) -> tuple[float, float]:
    """``(integral of v_f . n, integral of v_p . n)`` over the interface, ``n`` fluid to porous."""
    e, _, _, n, _ = interface_arrays(dofmap.mesh)
    if e.size == 0:
        return 0.0, 0.0
    return float(_vf_edge_flux(dofmap, u, e, n).sum()), float(_vp_edge_flux(dofmap, u, e, n).sum())


def cell_fields(dofmap: ProductDofMap, u: np.ndarray, eta: Optional[np.ndarray] = None) -> dict:
    """Centroid values per triangle; entries of the other subdomain are zero.

    Returns ``subdomain``, ``v_f`` (n, 2), ``v_p`` (n, 2), ``p_F``, ``p_f``
    (``-tr(sigma_f) / 2``) and, when ``eta`` is given, ``estimator_density``
    (``eta / area``).
    """
    mesh = dofmap.mesh
    nt = mesh.n_triangles
    out = {"subdomain": mesh.subdomain.astype(np.int64),
           "v_f": np.zeros((nt, 2)), "v_p": np.zeros((nt, 2)),
           "p_F": np.zeros(nt), "p_f": np.zeros(nt)}
    if len(dofmap.fluid_tris):
        sig, v, _ = eval_fluid(dofmap, u, _CENTROID)
        out["v_f"][dofmap.fluid_tris] = v[:, 0]
        out["p_f"][dofmap.fluid_tris] = -0.5 * np.trace(sig[:, 0], axis1=1, axis2=2)
    if len(dofmap.porous_tris):
        vp, _, p, _ = eval_porous(dofmap, u, _CENTROID)
        out["v_p"][dofmap.porous_tris] = vp[:, 0]
        out["p_F"][dofmap.porous_tris] = p[:, 0]
    if eta is not None:
        out["estimator_density"] = np.asarray(eta) / mesh.areas()
    return out


def vertex_fields(dofmap: ProductDofMap, u: np.ndarray) -> dict:
    """Nodal values of the P1 fields; vertices outside a field's subdomain hold zero."""
    nv = dofmap.mesh.n_vertices
    vf = np.zeros((nv, 2))
    pF = np.zeros(nv)
    vf[dofmap.fluid_vertices] = u[dofmap.field_slice("vf")].reshape(-1, 2)
    pF[dofmap.porous_vertices] = u[dofmap.field_slice("pF")]
    return {"v_f": vf, "p_F": pF}


def porous_pressure(dofmap: ProductDofMap, u: np.ndarray) -> np.ndarray:
    """``p_F`` at the porous vertices, ordered like ``dofmap.porous_vertices``."""
    return u[dofmap.field_slice("pF")].copy()


def to_physical(fields: dict, smap: Optional[AffineScaleMap]) -> dict:
    """Map velocity entries of a field dict from scaled to physical units.

    Pressures are unchanged by a change of length unit; velocities scale
    like lengths, and the estimator density like ``1 / area``.
    """
    if smap is None or smap.scale == 1.0:
        return dict(fields)
    out = dict(fields)
    for key in ("v_f", "v_p"):
        if key in out:
            out[key] = out[key] / smap.scale
    if "estimator_density" in out:
        out["estimator_density"] = out["estimator_density"] * smap.scale**2
    return out


def flux_report(dofmap: ProductDofMap, u: np.ndarray, smap: Optional[AffineScaleMap] = None) -> dict:
    """Boundary and interface fluxes in physical units (flux per unit depth scales as length^2)."""
    f = 1.0 if smap is None else 1.0 / smap.scale**2
    b = {k: v * f for k, v in boundary_fluxes(dofmap, u).items()}
    qf, qp = interface_fluxes(dofmap, u)
    qf, qp = qf * f, qp * f
    inflow = b.get(BoundaryTag.INFLOW_F.label, 0.0)
    outflow = b.get(BoundaryTag.OUTFLOW_F.label, 0.0)
    scale = max(abs(inflow), abs(outflow))
    pF = porous_pressure(dofmap, u)
    return {
        "boundary": b,
        "inflow": inflow,
        "outflow": outflow,
        "interface_fluid": qf,
        "interface_porous": qp,
        "interface_mismatch": abs(qf - qp),
        "flux_scale": scale,
        "pF_min": float(pF.min()) if pF.size else None,
        "pF_max": float(pF.max()) if pF.size else None,
    }
