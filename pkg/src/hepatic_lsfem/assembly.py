"""Least-squares functional for the coupled Stokes-Darcy system.

The functional is a weighted sum of seven squared residual norms::

    w_mom   |div sigma_f - f|^2                         on fluid triangles
    w_const |dev sigma_f - 2 mu dev D(v_f) - f|^2       on fluid triangles
    w_divf  |div v_f - f|^2                             on fluid triangles
    w_divp  |div v_p - f|^2                             on porous triangles
    w_darcy |(mu_F / K) v_p + grad p_F - f|^2           on porous triangles
    w_bjs   |2 mu D(v_f) n.n + tr(sigma_f)/2
             + R_M v_f.n + p_F - f|^2                   on interface edges
    w_flux  h_e |v_f.n - v_p.n - f|^2                   on interface edges

with ``R_M = mu_F * eps / K_M`` and ``n`` the unit normal pointing from the
fluid into the porous side.  The last term is the mesh-weighted L2
replacement for the H^{-1/2} norm of the flux jump.  The ``f`` are optional
manufactured forcing terms; for the physical problems they vanish.
The constitutive residual uses the deviator of ``D(v_f)`` so it is
traceless; the trace ``div v_f`` is measured by its own term.

Every term is ``|B u - f|^2`` for a local linear operator ``B``, so the
functional is ``u.T A u - 2 b.T u + c`` with ``A = sum B.T W B``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sps

from .mesh import FLUID, POROUS, BoundaryTag, TriangleMesh, interface_arrays
from .quadrature import edge_rule, triangle_rule
from .spaces import (EssentialConstraintSet, ProductDofMap, affine_maps, p1_reference,
                     P1_REF_GRAD, RT0_REF_DIV, rt0_reference)

TERMS = ("mom", "const", "divf", "divp", "darcy", "bjs", "flux")


@dataclass(frozen=True)
class MaterialParams:
    """Physical coefficients in SI units.

    mu    blood viscosity in the vessel [Pa s]
    mu_F  interstitial fluid viscosity [Pa s]
    K     tissue permeability [m^2]
    K_M   intrinsic membrane permeability [m^2]
    eps   vessel wall thickness [m]
    """

    mu: float = 3.0e-3
    mu_F: float = 1.2e-3
    K: float = 1.0e-13
    K_M: float = 1.0e-17
    eps: float = 6.0e-7

    def __post_init__(self):
        bad = [f.name for f in fields(self) if not (np.isfinite(getattr(self, f.name)) and getattr(self, f.name) > 0)]
        if bad:
            raise ValueError(f"material parameters must be positive and finite: {', '.join(bad)}")

    @property
    def membrane_resistance(self) -> float:
        return self.mu_F * self.eps / self.K_M

    def rescaled(self, scale: float) -> "MaterialParams":
        """Coefficients after changing the length unit by ``scale`` (new = scale * old)."""
        return replace(self, K=self.K * scale**2, K_M=self.K_M * scale**2, eps=self.eps * scale)

    @classmethod
    def unit(cls) -> "MaterialParams":
        return cls(1.0, 1.0, 1.0, 1.0, 1.0)


@dataclass(frozen=True)
class LsTermWeights:
    mom: float = 1.0
    const: float = 1.0
    divf: float = 1.0
    divp: float = 1.0
    darcy: float = 1.0
    bjs: float = 1.0
    flux: float = 1.0

    def __post_init__(self):
        for name in TERMS:
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise ValueError(f"term weight {name} must be finite and non-negative")

    def as_dict(self) -> dict:
        return {name: getattr(self, name) for name in TERMS}

    @property
    def all_positive(self) -> bool:
        return all(getattr(self, n) > 0 for n in TERMS)


def hydraulic_length(mesh: TriangleMesh) -> float:
    """Fluid area over the length of its boundary (interface included); the mesh extent if there is no fluid."""
    fluid = mesh.subdomain == FLUID
    if not fluid.any():
        return mesh.extent()
    e = np.flatnonzero(fluid[mesh.edge_tris[:, 0]] != np.where(mesh.edge_count == 2, fluid[mesh.edge_tris[:, 1]], False))
    return float(mesh.areas()[fluid].sum() / mesh.edge_lengths()[e].sum())


def auto_weights(mesh: TriangleMesh, params: MaterialParams, p_ref: Optional[float] = None) -> LsTermWeights:
    """Weights that make every term dimensionless and of comparable size.

    Each residual is converted to a stress with the natural coefficient of
    its equation and divided by ``p_ref`` (largest boundary pressure); volume
    terms are divided by ``L^2`` and edge terms by ``L``, where ``L`` is the
    largest extent of the mesh.  The continuity residual is measured on the
    hydraulic length ``l_f = |fluid area| / |fluid boundary|`` instead, the
    width over which the flow actually varies; with ``L`` there, thin
    channels lose most of their mass flux.  The result is invariant under a
    change of length unit, so a rescaled problem gives the same discrete
    solution.
    """
    if p_ref is None:
        p = mesh.edge_pressure[np.isfinite(mesh.edge_pressure)]
        p_ref = float(np.max(np.abs(p))) if p.size and np.max(np.abs(p)) > 0 else 1.0
    L = mesh.extent()
    l_f = hydraulic_length(mesh)
    R = params.membrane_resistance + params.mu_F * L / params.K
    s2 = p_ref**2
    return LsTermWeights(
        mom=1.0 / s2,
        const=1.0 / (s2 * L**2),
        divf=(2.0 * params.mu) ** 2 / (s2 * l_f**2),
        divp=(params.mu_F * L / params.K) ** 2 / s2,
        darcy=1.0 / s2,
        bjs=1.0 / (s2 * L),
        flux=R**2 / (s2 * L**2),
    )


@dataclass(frozen=True)
class Forcing:
    """Right-hand sides of the residual equations, as callables of points (n, 2).

    Shapes of the returned arrays: mom (n, 2), const (n, 2, 2), divf (n,),
    divp (n,), darcy (n, 2), bjs (n,), flux (n,).
    """

    mom: Optional[Callable] = None
    const: Optional[Callable] = None
    divf: Optional[Callable] = None
    divp: Optional[Callable] = None
    darcy: Optional[Callable] = None
    bjs: Optional[Callable] = None
    flux: Optional[Callable] = None

    def values(self, term: str, x: np.ndarray, nrows: int) -> Optional[np.ndarray]:
        fn = getattr(self, term)
        if fn is None:
            return None
        shape = x.shape[:-1]
        return np.asarray(fn(x.reshape(-1, 2)), float).reshape(*shape, nrows)


# -- local operators -----------------------------------------------------------------

def _rt_at(J, det, xi, signs):
    """RT0 values (n, nq, 3, 2) at per-element reference points xi (n, nq, 2)."""
    x, y = xi[..., 0], xi[..., 1]
    ref = np.stack([np.stack([x, y], -1), np.stack([x - 1, y], -1), np.stack([x, y - 1], -1)], axis=-2)
    return np.einsum("eij,eqbj->eqbi", J, ref) / det[:, None, None, None] * signs[:, None, :, None]


def _p1_at(xi):
    return np.stack([1 - xi[..., 0] - xi[..., 1], xi[..., 0], xi[..., 1]], axis=-1)


def fluid_operators(J, det, Jinv, signs, mu, xi):
    """Residual operators on fluid triangles at reference points xi (n, nq, 2).

    Local dofs: sigma row 1 (3), sigma row 2 (3), (vx, vy) per vertex (6).
    Returns dict term -> B with shape (n, nq, rows, 12).
    """
    n, nq = xi.shape[:2]
    phi = _rt_at(J, det, xi, signs)
    div = RT0_REF_DIV / det[:, None] * signs
    grad = np.einsum("bj,eji->ebi", P1_REF_GRAD, Jinv)

    mom = np.zeros((n, nq, 2, 12))
    mom[:, :, 0, 0:3] = div[:, None, :]
    mom[:, :, 1, 3:6] = div[:, None, :]

    const = np.zeros((n, nq, 4, 12))
    for i in range(2):
        for j in range(2):
            r = 2 * i + j
            const[:, :, r, 3 * i:3 * i + 3] += phi[..., j]
            if i == j:
                const[:, :, r, 0:3] -= 0.5 * phi[..., 0]
                const[:, :, r, 3:6] -= 0.5 * phi[..., 1]
            for b in range(3):
                const[:, :, r, 6 + 2 * b + i] -= mu * grad[:, None, b, j]
                const[:, :, r, 6 + 2 * b + j] -= mu * grad[:, None, b, i]
                if i == j:
                    # deviator of D(v): add back mu * div v on the diagonal
                    const[:, :, r, 6 + 2 * b] += mu * grad[:, None, b, 0]
                    const[:, :, r, 6 + 2 * b + 1] += mu * grad[:, None, b, 1]

    divf = np.zeros((n, nq, 1, 12))
    divf[:, :, 0, 6:] = grad.reshape(n, 6)[:, None, :]
    return {"mom": mom, "const": const, "divf": divf}


def porous_operators(J, det, Jinv, signs, mu_F, K, xi):
    """Residual operators on porous triangles; local dofs v_p (3), p_F (3)."""
    n, nq = xi.shape[:2]
    phi = _rt_at(J, det, xi, signs)
    div = RT0_REF_DIV / det[:, None] * signs
    grad = np.einsum("bj,eji->ebi", P1_REF_GRAD, Jinv)
    darcy = np.zeros((n, nq, 2, 6))
    darcy[..., 0:3] = (mu_F / K) * np.moveaxis(phi, -1, -2)
    darcy[..., 3:6] = np.moveaxis(grad, -1, -2)[:, None]
    divp = np.zeros((n, nq, 1, 6))
    divp[:, :, 0, 0:3] = div[:, None, :]
    return {"divp": divp, "darcy": darcy}


def interface_operators(fg, pg, normals, params, xf, xp):
    """Operators on interface edges; local dofs are 12 fluid then 6 porous.

    ``fg``/``pg`` are (J, det, Jinv, signs) of the adjacent fluid/porous
    triangles and ``xf``/``xp`` the quadrature points in their reference
    coordinates, shape (n, nq, 2).
    """
    J, det, Jinv, sf = fg
    n, nq = xf.shape[:2]
    phi = _rt_at(J, det, xf, sf)
    lam = _p1_at(xf)
    grad = np.einsum("bj,eji->ebi", P1_REF_GRAD, Jinv)
    Jp, detp, Jinvp, sp = pg
    phip = _rt_at(Jp, detp, xp, sp)
    lamp = _p1_at(xp)
    nn = normals
    gn = np.einsum("ebj,ej->eb", grad, nn)
    R = params.membrane_resistance

    bjs = np.zeros((n, nq, 1, 18))
    bjs[:, :, 0, 0:3] = 0.5 * phi[..., 0]
    bjs[:, :, 0, 3:6] = 0.5 * phi[..., 1]
    for b in range(3):
        for i in range(2):
            bjs[:, :, 0, 6 + 2 * b + i] = (2 * params.mu * nn[:, None, i] * gn[:, None, b]
                                           + R * lam[..., b] * nn[:, None, i])
    bjs[:, :, 0, 15:18] = lamp

    flux = np.zeros((n, nq, 1, 18))
    for b in range(3):
        for i in range(2):
            flux[:, :, 0, 6 + 2 * b + i] = lam[..., b] * nn[:, None, i]
    flux[:, :, 0, 12:15] = -np.einsum("eqbi,ei->eqb", phip, nn)
    return {"bjs": bjs, "flux": flux}


_ROWS = {"mom": 2, "const": 4, "divf": 1, "divp": 1, "darcy": 2, "bjs": 1, "flux": 1}


@dataclass
class _Block:
    """One group of local contributions: quadrature weights, operators, forcing."""
    kind: str                 # "fluid", "porous", "interface"
    owners: np.ndarray        # mesh triangle ids, or edge ids for interface
    dofs: np.ndarray          # (n, nloc)
    W: np.ndarray             # (n, nq) quadrature weight times measure
    ops: dict                 # term -> (n, nq, rows, nloc)
    rhs: dict                 # term -> (n, nq, rows) or None
    edge_length: Optional[np.ndarray] = None  # h_e of the flux surrogate


def _blocks(dofmap: ProductDofMap, params: MaterialParams, forcing: Optional[Forcing]):
    mesh = dofmap.mesh
    forcing = forcing or Forcing()
    xi, wq = triangle_rule()
    out = []
    if len(dofmap.fluid_tris):
        pts = mesh.vertices[mesh.triangles[dofmap.fluid_tris]]
        p0, J, det, Jinv = affine_maps(pts)
        x_ref = np.broadcast_to(xi, (len(det), len(wq), 2))
        ops = fluid_operators(J, det, Jinv, dofmap.fluid_signs, params.mu, x_ref)
        xq = p0[:, None] + np.einsum("eij,qj->eqi", J, xi)
        rhs = {t: forcing.values(t, xq, _ROWS[t]) for t in ops}
        out.append(_Block("fluid", dofmap.fluid_tris, dofmap.fluid_dofs,
                          0.5 * np.abs(det)[:, None] * wq, ops, rhs))
    if len(dofmap.porous_tris):
        pts = mesh.vertices[mesh.triangles[dofmap.porous_tris]]
        p0, J, det, Jinv = affine_maps(pts)
        x_ref = np.broadcast_to(xi, (len(det), len(wq), 2))
        ops = porous_operators(J, det, Jinv, dofmap.porous_signs, params.mu_F, params.K, x_ref)
        xq = p0[:, None] + np.einsum("eij,qj->eqi", J, xi)
        rhs = {t: forcing.values(t, xq, _ROWS[t]) for t in ops}
        out.append(_Block("porous", dofmap.porous_tris, dofmap.porous_dofs,
                          0.5 * np.abs(det)[:, None] * wq, ops, rhs))
    ie, ft, pt, nrm, L = interface_arrays(mesh)
    if ie.size:
        fpos = np.full(mesh.n_triangles, -1)
        fpos[dofmap.fluid_tris] = np.arange(len(dofmap.fluid_tris))
        ppos = np.full(mesh.n_triangles, -1)
        ppos[dofmap.porous_tris] = np.arange(len(dofmap.porous_tris))
        fi, pi = fpos[ft], ppos[pt]
        s, ws = edge_rule()
        a = mesh.vertices[mesh.edges[ie, 0]]
        b = mesh.vertices[mesh.edges[ie, 1]]
        xq = a[:, None] + s[None, :, None] * (b - a)[:, None]
        p0f, Jf, detf, Jinvf = affine_maps(mesh.vertices[mesh.triangles[ft]])
        p0p, Jp, detp, Jinvp = affine_maps(mesh.vertices[mesh.triangles[pt]])
        xf = np.einsum("eij,eqj->eqi", Jinvf, xq - p0f[:, None])
        xp = np.einsum("eij,eqj->eqi", Jinvp, xq - p0p[:, None])
        ops = interface_operators((Jf, detf, Jinvf, dofmap.fluid_signs[fi]),
                                  (Jp, detp, Jinvp, dofmap.porous_signs[pi]), nrm, params, xf, xp)
        W = L[:, None] * ws[None, :]
        rhs = {t: forcing.values(t, xq, 1) for t in ops}
        dofs = np.concatenate([dofmap.fluid_dofs[fi], dofmap.porous_dofs[pi]], axis=1)
        out.append(_Block("interface", ie, dofs, W, ops, rhs, L))
    return out


def _term_weights(blk: _Block, term: str, weights: LsTermWeights) -> np.ndarray:
    w = getattr(weights, term) * blk.W
    if term == "flux":
        w = w * blk.edge_length[:, None]
    return w


# -- system ------------------------------------------------------------------------------

@dataclass
class LsSystem:
    """``F(u) = u.T A u - 2 b.T u + c`` restricted to ``u = T x + g``."""

    A: sps.csr_matrix
    b: np.ndarray
    c: float
    constraints: Optional[EssentialConstraintSet]
    dofmap: Optional[ProductDofMap] = None
    params: Optional[MaterialParams] = None
    weights: Optional[LsTermWeights] = None
    forcing: Optional[Forcing] = None

    def functional(self, u: np.ndarray) -> float:
        return float(u @ (self.A @ u) - 2.0 * self.b @ u + self.c)

    def reduced(self):
        """Reduced matrix and right-hand side ``(T.T A T, T.T (b - A g))``."""
        if self.constraints is None:
            return self.A.tocsr(), self.b.copy()
        T, g = self.constraints.reduction()
        Ar = (T.T @ self.A @ T).tocsr()
        br = T.T @ (self.b - self.A @ g)
        return Ar, br

    def expand(self, x: np.ndarray) -> np.ndarray:
        if self.constraints is None:
            return x
        return self.constraints.expand(x)


def assemble(dofmap: ProductDofMap, params: MaterialParams, weights: LsTermWeights = LsTermWeights(),
             forcing: Optional[Forcing] = None,
             constraints: Optional[EssentialConstraintSet] = None) -> LsSystem:
    n = dofmap.n_dofs
    rows, cols, vals = [], [], []
    b = np.zeros(n)
    c = 0.0
    for blk in _blocks(dofmap, params, forcing):
        nloc = blk.dofs.shape[1]
        Aloc = np.zeros((len(blk.dofs), nloc, nloc))
        bloc = np.zeros((len(blk.dofs), nloc))
        for term, B in blk.ops.items():
            w = _term_weights(blk, term, weights)
            Aloc += np.einsum("eq,eqra,eqrb->eab", w, B, B)
            f = blk.rhs[term]
            if f is not None:
                bloc += np.einsum("eq,eqra,eqr->ea", w, B, f)
                c += float(np.einsum("eq,eqr->", w, f * f))
        rows.append(np.repeat(blk.dofs, nloc, axis=1).ravel())
        cols.append(np.tile(blk.dofs, (1, nloc)).ravel())
        vals.append(Aloc.ravel())
        np.add.at(b, blk.dofs.ravel(), bloc.ravel())
    if rows:
        A = sps.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                           shape=(n, n)).tocsr()
        A.sum_duplicates()
    else:
        A = sps.csr_matrix((n, n))
    return LsSystem(A, b, c, constraints, dofmap, params, weights, forcing)


@dataclass
class EstimatorMap:
    """Local contributions of the functional.

    ``triangle[t]`` holds the volume terms of mesh triangle ``t``;
    ``interface[k]`` the two edge terms of interface edge ``interface_edges[k]``.
    """

    triangle: np.ndarray
    interface: np.ndarray
    interface_edges: np.ndarray
    interface_fluid_tris: np.ndarray
    per_term: dict = field(default_factory=dict)

    @property
    def total(self) -> float:
        return float(np.sum(self.triangle) + np.sum(self.interface))

    def attributed(self) -> np.ndarray:
        """Per-triangle values with each interface edge added to its fluid-side triangle."""
        eta = self.triangle.copy()
        np.add.at(eta, self.interface_fluid_tris, self.interface)
        return eta


def evaluate_functional(dofmap: ProductDofMap, params: MaterialParams, weights: LsTermWeights,
                        u: np.ndarray, forcing: Optional[Forcing] = None):
    """Total functional value and its local distribution."""
    mesh = dofmap.mesh
    tri = np.zeros(mesh.n_triangles)
    ie, ft, _, _, _ = interface_arrays(mesh)
    edge = np.zeros(len(ie))
    per_term = {t: 0.0 for t in TERMS}
    for blk in _blocks(dofmap, params, forcing):
        uloc = u[blk.dofs]
        local = np.zeros(len(blk.dofs))
        for term, B in blk.ops.items():
            r = np.einsum("eqra,ea->eqr", B, uloc)
            if blk.rhs[term] is not None:
                r = r - blk.rhs[term]
            contrib = np.einsum("eq,eqr->e", _term_weights(blk, term, weights), r * r)
            per_term[term] += float(contrib.sum())
            local += contrib
        if blk.kind == "interface":
            edge += local
        else:
            tri[blk.owners] += local
    est = EstimatorMap(tri, edge, ie, ft, per_term)
    return est.total, est


# -- pointwise residuals ----------------------------------------------------------------

def element_residuals(vertices, subdomain: int, coeffs, params: MaterialParams, point) -> dict:
    """Residuals of the first-order system at a physical point of one triangle.

    ``coeffs`` are local coefficients in the outward orientation of the
    triangle's edges: 12 values (sigma rows, v_f) on a fluid triangle,
    6 values (v_p fluxes, p_F) on a porous one.
    """
    coeffs = np.asarray(coeffs, float)
    expected = 12 if subdomain == FLUID else 6
    if subdomain not in (FLUID, POROUS) or coeffs.shape != (expected,):
        raise ValueError(f"expected {expected} local coefficients for subdomain {subdomain}, "
                         f"got shape {coeffs.shape}")
    p0, J, det, Jinv = affine_maps(np.asarray(vertices, float)[None])
    xi = (Jinv[0] @ (np.asarray(point, float) - p0[0]))[None, None]
    signs = np.ones((1, 3))
    if subdomain == FLUID:
        ops = fluid_operators(J, det, Jinv, signs, params.mu, xi)
        r = {t: ops[t][0, 0] @ coeffs for t in ops}
        return {"r_mom": r["mom"], "r_const": r["const"].reshape(2, 2), "r_divf": float(r["divf"][0])}
    ops = porous_operators(J, det, Jinv, signs, params.mu_F, params.K, xi)
    r = {t: ops[t][0, 0] @ coeffs for t in ops}
    return {"r_darcy": r["darcy"], "r_divp": float(r["divp"][0])}


def local_coefficients(dofmap: ProductDofMap, u: np.ndarray, tri: int) -> np.ndarray:
    """Local coefficients of mesh triangle ``tri`` in its outward orientation."""
    mesh = dofmap.mesh
    if mesh.subdomain[tri] == FLUID:
        k = int(np.searchsorted(dofmap.fluid_tris, tri))
        c = u[dofmap.fluid_dofs[k]].copy()
        s = dofmap.fluid_signs[k]
        c[0:3] *= s
        c[3:6] *= s
        return c
    k = int(np.searchsorted(dofmap.porous_tris, tri))
    c = u[dofmap.porous_dofs[k]].copy()
    c[0:3] *= dofmap.porous_signs[k]
    return c


def residuals_at(dofmap: ProductDofMap, params: MaterialParams, u: np.ndarray, tri: int, point) -> dict:
    mesh = dofmap.mesh
    return element_residuals(mesh.vertices[mesh.triangles[tri]], int(mesh.subdomain[tri]),
                             local_coefficients(dofmap, u, tri), params, point)


def interface_residuals(dofmap: ProductDofMap, params: MaterialParams, edge: int, u: np.ndarray, point) -> dict:
    """``r_bjs`` and ``r_flux`` at a physical point on an interface edge."""
    mesh = dofmap.mesh
    if mesh.edge_tag[edge] != BoundaryTag.INTERFACE:
        raise ValueError(f"edge {edge} is not an interface edge")
    ie, ft, pt, nrm, _ = interface_arrays(mesh)
    k = int(np.searchsorted(ie, edge))
    x = np.asarray(point, float)
    fg = affine_maps(mesh.vertices[mesh.triangles[[ft[k]]]])
    pg = affine_maps(mesh.vertices[mesh.triangles[[pt[k]]]])
    xf = (fg[3][0] @ (x - fg[0][0]))[None, None]
    xp = (pg[3][0] @ (x - pg[0][0]))[None, None]
    ones = np.ones((1, 3))
    ops = interface_operators((fg[1], fg[2], fg[3], ones), (pg[1], pg[2], pg[3], ones),
                              nrm[[k]], params, xf, xp)
    c = np.concatenate([local_coefficients(dofmap, u, ft[k]), local_coefficients(dofmap, u, pt[k])])
    return {"r_bjs": float(ops["bjs"][0, 0, 0] @ c), "r_flux": float(ops["flux"][0, 0, 0] @ c)}


def derived_pressure(dofmap: ProductDofMap, u: np.ndarray, tri: int, point) -> float:
    """Fluid pressure ``-tr(sigma_f) / 2`` at a physical point of a fluid triangle."""
    mesh = dofmap.mesh
    if mesh.subdomain[tri] != FLUID:
        raise ValueError(f"triangle {tri} is not a fluid triangle")
    p0, J, det, Jinv = affine_maps(mesh.vertices[mesh.triangles[[tri]]])
    xi = Jinv[0] @ (np.asarray(point, float) - p0[0])
    phi = rt0_reference(xi)[0]  # (3, 2)
    phys = (J[0] @ phi.T).T / det[0]
    c = local_coefficients(dofmap, u, tri)
    return float(-0.5 * (c[0:3] @ phys[:, 0] + c[3:6] @ phys[:, 1]))
