"""Product finite element space for (sigma_f, v_f, v_p, p_F).

For degree ``k = 1`` the space is two lowest-order Raviart-Thomas rows for
the fluid stress, continuous P1 vectors for the fluid velocity, lowest-order
Raviart-Thomas for the Darcy velocity and continuous P1 for the porous
pressure.

RT degrees of freedom are total normal fluxes across an edge, measured with
the global edge normal (tangent from the lower to the higher vertex id,
rotated clockwise).  Global dof layout::

    [ sigma row 1 | sigma row 2 | v_f (x, y interleaved per vertex) | v_p | p_F ]
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sps

from .mesh import FLUID, POROUS, BoundaryTag, TriangleMesh, interface_arrays
from .quadrature import edge_rule, triangle_rule

FIELDS = ("sigma1", "sigma2", "vf", "vp", "pF")


class UnsupportedDegreeError(NotImplementedError):
    pass


class ConstraintError(ValueError):
    pass


# -- reference element ---------------------------------------------------------

def rt0_reference(xi: np.ndarray) -> np.ndarray:
    """Reference RT0 basis with unit outward flux, shape (nq, 3, 2)."""
    xi = np.atleast_2d(xi)
    x, y = xi[:, 0], xi[:, 1]
    return np.stack([
        np.stack([x, y], axis=1),
        np.stack([x - 1.0, y], axis=1),
        np.stack([x, y - 1.0], axis=1),
    ], axis=1)


def p1_reference(xi: np.ndarray) -> np.ndarray:
    xi = np.atleast_2d(xi)
    return np.stack([1.0 - xi[:, 0] - xi[:, 1], xi[:, 0], xi[:, 1]], axis=1)


P1_REF_GRAD = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
RT0_REF_DIV = 2.0


def affine_maps(points: np.ndarray):
    """For triangles given as (n, 3, 2) vertex arrays return (origin, J, detJ, J^-1)."""
    p0 = points[:, 0]
    J = np.stack([points[:, 1] - p0, points[:, 2] - p0], axis=2)
    det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    if np.any(det == 0):
        raise ValueError("degenerate triangle (zero area)")
    Jinv = np.stack([np.stack([J[:, 1, 1], -J[:, 0, 1]], 1),
                     np.stack([-J[:, 1, 0], J[:, 0, 0]], 1)], 1) / det[:, None, None]
    return p0, J, det, Jinv


def rt_basis(J, det, xi, signs=None):
    """Piola-mapped RT0 values (n, nq, 3, 2) and divergences (n, 3)."""
    ref = rt0_reference(xi)
    val = np.einsum("eij,qbj->eqbi", J, ref) / det[:, None, None, None]
    div = np.broadcast_to(RT0_REF_DIV / det[:, None], (len(det), 3)).copy()
    if signs is not None:
        val = val * signs[:, None, :, None]
        div = div * signs
    return val, div


def p1_basis(Jinv, xi):
    """P1 values (nq, 3) and physical gradients (n, 3, 2)."""
    grads = np.einsum("bj,eji->ebi", P1_REF_GRAD, Jinv)
    return p1_reference(xi), grads


def rt_basis_eval(vertices: np.ndarray, point: np.ndarray):
    """RT0 basis on one triangle at a reference point.

    Returns ``(values, divergences)`` with shapes (3, 2) and (3,).  Basis ``i``
    has unit flux out of local edge ``i`` (opposite vertex ``i``) and zero flux
    through the other two edges.
    """
    _, J, det, _ = affine_maps(np.asarray(vertices, float)[None])
    val, div = rt_basis(J, det, np.asarray(point, float)[None])
    return val[0, 0], div[0]


def lagrange_basis_eval(vertices: np.ndarray, point: np.ndarray):
    """P1 hat values (3,) and gradients (3, 2) on one triangle at a reference point."""
    _, _, _, Jinv = affine_maps(np.asarray(vertices, float)[None])
    val, grad = p1_basis(Jinv, np.asarray(point, float)[None])
    return val[0], grad[0]


def local_signs(triangles: np.ndarray) -> np.ndarray:
    """+1 where the outward normal of local edge i agrees with the global edge normal."""
    t = np.asarray(triangles)
    a = t[:, [1, 2, 0]]
    b = t[:, [2, 0, 1]]
    return np.where(a < b, 1.0, -1.0)


def reference_coords(points: np.ndarray, p0: np.ndarray, Jinv: np.ndarray) -> np.ndarray:
    """Map physical points (n, nq, 2) on triangle n back to reference coordinates."""
    return np.einsum("eij,eqj->eqi", Jinv, points - p0[:, None, :])


# -- dof map -------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ProductDofMap:
    mesh: TriangleMesh
    k: int
    fluid_tris: np.ndarray
    porous_tris: np.ndarray
    fluid_edges: np.ndarray
    porous_edges: np.ndarray
    fluid_vertices: np.ndarray
    porous_vertices: np.ndarray
    offsets: dict
    fluid_dofs: np.ndarray   # (Mf, 12): sigma1 e0..e2, sigma2 e0..e2, vx0, vy0, vx1, vy1, vx2, vy2
    fluid_signs: np.ndarray  # (Mf, 3)
    porous_dofs: np.ndarray  # (Mp, 6): vp e0..e2, p0..p2
    porous_signs: np.ndarray
    edge_local: dict = field(repr=False)
    vertex_local: dict = field(repr=False)

    @property
    def n_dofs(self) -> int:
        return self.offsets["pF"][1]

    def field_slice(self, name: str) -> slice:
        a, b = self.offsets[name]
        return slice(a, b)

    def field_size(self, name: str) -> int:
        a, b = self.offsets[name]
        return b - a

    def field_of(self, dof: int) -> str:
        for name in FIELDS:
            a, b = self.offsets[name]
            if a <= dof < b:
                return name
        raise IndexError(dof)

    def sigma_dof(self, row: int, edge: int) -> int:
        return self.offsets["sigma1" if row == 0 else "sigma2"][0] + int(self.edge_local["f"][edge])

    def vf_dof(self, vertex: int, comp: int) -> int:
        return self.offsets["vf"][0] + 2 * int(self.vertex_local["f"][vertex]) + comp

    def vp_dof(self, edge: int) -> int:
        return self.offsets["vp"][0] + int(self.edge_local["p"][edge])

    def pF_dof(self, vertex: int) -> int:
        return self.offsets["pF"][0] + int(self.vertex_local["p"][vertex])

    def split(self, u: np.ndarray) -> dict:
        return {name: u[self.field_slice(name)] for name in FIELDS}


def build_product_space(mesh: TriangleMesh, k: int = 1) -> ProductDofMap:
    if k != 1:
        raise UnsupportedDegreeError(f"polynomial degree k={k} is not implemented (only k=1)")
    ft = mesh.triangles_in(FLUID)
    pt = mesh.triangles_in(POROUS)
    fe, pe = mesh.edges_in(FLUID), mesh.edges_in(POROUS)
    fv, pv = mesh.vertices_in(FLUID), mesh.vertices_in(POROUS)

    def lookup(ids, n):
        m = np.full(n, -1, dtype=np.int64)
        m[ids] = np.arange(len(ids))
        return m

    el = {"f": lookup(fe, mesh.n_edges), "p": lookup(pe, mesh.n_edges)}
    vl = {"f": lookup(fv, mesh.n_vertices), "p": lookup(pv, mesh.n_vertices)}
    sizes = [("sigma1", len(fe)), ("sigma2", len(fe)), ("vf", 2 * len(fv)),
             ("vp", len(pe)), ("pF", len(pv))]
    offsets, start = {}, 0
    for name, n in sizes:
        offsets[name] = (start, start + n)
        start += n

    tf = mesh.triangles[ft]
    e_f = el["f"][mesh.tri_edges[ft]]
    v_f = vl["f"][tf]
    fluid_dofs = np.concatenate([
        offsets["sigma1"][0] + e_f,
        offsets["sigma2"][0] + e_f,
        (offsets["vf"][0] + 2 * v_f[:, :, None] + np.arange(2)).reshape(len(ft), 6),
    ], axis=1)
    tp = mesh.triangles[pt]
    porous_dofs = np.concatenate([
        offsets["vp"][0] + el["p"][mesh.tri_edges[pt]],
        offsets["pF"][0] + vl["p"][tp],
    ], axis=1)
    return ProductDofMap(mesh, k, ft, pt, fe, pe, fv, pv, offsets,
                         fluid_dofs, local_signs(tf), porous_dofs, local_signs(tp), el, vl)


# -- boundary data ---------------------------------------------------------------

class BoundaryData:
    """Boundary values taken from the edge tags.

    Subclasses override these hooks to impose non-constant data (manufactured
    solutions).  ``x`` has shape (n, 2) and ``normal`` is the outward unit
    normal of the edge.
    """

    def traction(self, x, normal, tag, pressure):
        """sigma_f n on fluid boundary edges; ``-p0 n`` for pressure tags, 0 for NeumannF."""
        p = 0.0 if tag == BoundaryTag.NEUMANN_F else pressure
        return -p * np.broadcast_to(normal, x.shape)

    def pressure(self, x, pressure):
        return np.full(len(x), pressure)

    def normal_flux(self, x, normal):
        return np.zeros(len(x))

    def pinned_velocity(self, x):
        """Velocity values at fluid boundary vertices, or None for no velocity data."""
        return None


class FrozenDirichletData(BoundaryData):
    """Porous Dirichlet pressure frozen as the piecewise-linear trace on a reference mesh.

    Vertex values on the reference mesh follow :func:`build_constraints`
    (the mean of the adjacent edge pressures).  Evaluating this trace on any
    refinement gives the same boundary function, so refined affine spaces
    contain the coarse ones even where the edge pressures jump at a corner.
    """

    def __init__(self, mesh: TriangleMesh):
        e = mesh.edges_with_tag(BoundaryTag.DIRICHLET_P)
        e = e[mesh.edge_count[e] == 1]
        sums, counts = {}, {}
        for k in e:
            for v in mesh.edges[k]:
                sums[int(v)] = sums.get(int(v), 0.0) + mesh.edge_pressure[k]
                counts[int(v)] = counts.get(int(v), 0) + 1
        ends = mesh.edges[e]
        self.a = mesh.vertices[ends[:, 0]]
        self.b = mesh.vertices[ends[:, 1]]
        self.va = np.array([sums[int(v)] / counts[int(v)] for v in ends[:, 0]])
        self.vb = np.array([sums[int(v)] / counts[int(v)] for v in ends[:, 1]])
        self.tol = 1e-9 * mesh.extent()

    def pressure(self, x, pressure):
        x = np.atleast_2d(x)
        d = self.b - self.a
        L2 = np.einsum("ij,ij->i", d, d)
        out = np.empty(len(x))
        for i, p in enumerate(x):
            w = p - self.a
            s = np.clip(np.einsum("ij,ij->i", w, d) / L2, 0.0, 1.0)
            dist = np.linalg.norm(w - s[:, None] * d, axis=1)
            k = int(np.argmin(dist))
            if dist[k] > self.tol:
                return np.full(len(x), pressure)  # not on the reference trace
            out[i] = (1 - s[k]) * self.va[k] + s[k] * self.vb[k]
        return out


@dataclass
class EssentialConstraintSet:
    """Fixed dofs plus vertex couplings ``a . (u_x, u_y) = c``."""

    n_dofs: int
    fixed: dict = field(default_factory=dict)
    couplings: list = field(default_factory=list)  # (dof_x, dof_y, a_x, a_y, c)
    _cache: Optional[tuple] = field(default=None, repr=False)

    def fix(self, dof: int, value: float, tol: float = 1e-12) -> None:
        dof = int(dof)
        old = self.fixed.get(dof)
        if old is not None and abs(old - value) > tol * max(1.0, abs(old), abs(value)):
            raise ConstraintError(f"dof {dof} fixed to conflicting values {old} and {value}")
        self.fixed[dof] = float(value)
        self._cache = None

    def couple(self, dof_x: int, dof_y: int, a, c: float = 0.0) -> None:
        self.couplings.append((int(dof_x), int(dof_y), float(a[0]), float(a[1]), float(c)))
        self._cache = None

    def reduction(self):
        """Return ``(T, g)`` such that admissible vectors are ``u = T x + g``.

        Columns of ``T`` are orthonormal with disjoint supports, so
        ``T.T @ (u - g)`` recovers the free coordinates.
        """
        if self._cache is not None:
            return self._cache
        n = self.n_dofs
        g = np.zeros(n)
        free = np.ones(n, bool)
        rows, cols, vals = [], [], []
        col = 0

        blocks = {}
        for dx, dy, ax, ay, c in self.couplings:
            blocks.setdefault((dx, dy), []).append((ax, ay, c))
        for (dx, dy) in list(blocks):
            for d, comp in ((dx, 0), (dy, 1)):
                if d in self.fixed:
                    a = [0.0, 0.0]
                    a[comp] = 1.0
                    blocks[(dx, dy)].append((a[0], a[1], self.fixed[d]))
        direction = {}
        for (dx, dy), eqs in blocks.items():
            A = np.array([[e[0], e[1]] for e in eqs])
            c = np.array([e[2] for e in eqs])
            U, s, Vt = np.linalg.svd(A)
            rank = int(np.sum(s > 1e-10 * s[0])) if s.size and s[0] > 0 else 0
            u0 = np.linalg.lstsq(A, c, rcond=None)[0]
            if np.linalg.norm(A @ u0 - c) > 1e-9 * max(1.0, np.abs(c).max()):
                raise ConstraintError(f"conflicting constraints on vertex dofs ({dx}, {dy})")
            g[dx], g[dy] = u0
            free[dx] = free[dy] = False
            if rank == 1:
                direction[min(dx, dy)] = (dx, dy, Vt[1])

        for d, v in self.fixed.items():
            g[d] = v
            free[d] = False

        for d in range(n):
            if free[d]:
                rows.append(d)
                cols.append(col)
                vals.append(1.0)
                col += 1
            elif d in direction:
                dx, dy, t = direction[d]
                rows += [dx, dy]
                cols += [col, col]
                vals += [t[0], t[1]]
                col += 1
        T = sps.csr_matrix((vals, (rows, cols)), shape=(n, col))
        T.eliminate_zeros()
        self._cache = (T, g)
        return self._cache

    @property
    def n_free(self) -> int:
        return self.reduction()[0].shape[1]

    def apply(self, u: np.ndarray) -> np.ndarray:
        """Project a coefficient vector onto the constrained affine subspace."""
        T, g = self.reduction()
        return T @ (T.T @ (u - g)) + g

    def expand(self, x: np.ndarray) -> np.ndarray:
        T, g = self.reduction()
        return T @ x + g


def edge_quadrature(mesh: TriangleMesh, edges: np.ndarray):
    """Physical Gauss points (n, 3, 2) and weights (n, 3) (weights include the length)."""
    s, w = edge_rule()
    a = mesh.vertices[mesh.edges[edges, 0]]
    b = mesh.vertices[mesh.edges[edges, 1]]
    L = np.hypot(*(b - a).T)
    x = a[:, None, :] + s[None, :, None] * (b - a)[:, None, :]
    return x, w[None, :] * L[:, None]


def _outward_normals(mesh: TriangleMesh, edges: np.ndarray) -> np.ndarray:
    n = mesh.edge_normals()[edges]
    t = mesh.edge_tris[edges, 0]
    c = mesh.centroids()[t]
    flip = np.einsum("ij,ij->i", n, mesh.edge_midpoints()[edges] - c) < 0
    n[flip] *= -1
    return n


def build_constraints(mesh: TriangleMesh, dofmap: ProductDofMap,
                      data: Optional[BoundaryData] = None,
                      corner_angle_deg: float = 170.0) -> EssentialConstraintSet:
    data = data or BoundaryData()
    cs = EssentialConstraintSet(dofmap.n_dofs)
    tags = mesh.edge_tag
    normals_g = mesh.edge_normals()

    # fluid boundary: sigma_f n
    fb = np.flatnonzero((mesh.edge_count == 1) & (mesh.subdomain[mesh.edge_tris[:, 0]] == FLUID))
    if fb.size:
        nout = _outward_normals(mesh, fb)
        x, w = edge_quadrature(mesh, fb)
        s = np.einsum("ij,ij->i", nout, normals_g[fb])
        for i, e in enumerate(fb):
            tag = BoundaryTag(int(tags[e]))
            g = data.traction(x[i], nout[i], tag, mesh.edge_pressure[e])
            flux = s[i] * (w[i] @ g)
            cs.fix(dofmap.sigma_dof(0, e), flux[0])
            cs.fix(dofmap.sigma_dof(1, e), flux[1])
        verts = np.unique(mesh.edges[fb])
        pinned = data.pinned_velocity(mesh.vertices[verts])
        if pinned is not None:
            for v, val in zip(verts, pinned):
                cs.fix(dofmap.vf_dof(v, 0), val[0])
                cs.fix(dofmap.vf_dof(v, 1), val[1])

    # porous boundary: Dirichlet pressure, Neumann flux
    pb = np.flatnonzero((mesh.edge_count == 1) & (mesh.subdomain[mesh.edge_tris[:, 0]] == POROUS))
    dir_e = pb[tags[pb] == BoundaryTag.DIRICHLET_P]
    neu_e = pb[tags[pb] == BoundaryTag.NEUMANN_P]
    if dir_e.size:
        # a vertex shared by two Dirichlet edges takes the mean of their values; the
        # mean survives refinement (tags are inherited), so the spaces stay nested
        adjacent = {}
        for e in dir_e:
            for v in mesh.edges[e]:
                adjacent.setdefault(int(v), []).append(e)
        for v in sorted(adjacent):
            x = mesh.vertices[[v]]
            vals = [float(data.pressure(x, mesh.edge_pressure[e])[0]) for e in adjacent[v]]
            cs.fixed[dofmap.pF_dof(v)] = float(np.mean(vals))
    if neu_e.size:
        nout = _outward_normals(mesh, neu_e)
        x, w = edge_quadrature(mesh, neu_e)
        s = np.einsum("ij,ij->i", nout, normals_g[neu_e])
        for i, e in enumerate(neu_e):
            cs.fix(dofmap.vp_dof(e), s[i] * (w[i] @ data.normal_flux(x[i], nout[i])))

    # v_f . tau = 0 on the interface
    ie, ft, pt, n, _ = interface_arrays(mesh)
    if ie.size:
        tau = np.stack([-n[:, 1], n[:, 0]], axis=1)
        by_vertex = {}
        for k, e in enumerate(ie):
            for v in mesh.edges[e]:
                by_vertex.setdefault(int(v), []).append(tau[k])
        cos_lim = np.cos(np.radians(corner_angle_deg))
        for v in sorted(by_vertex):
            ts = np.array(by_vertex[v])
            dx, dy = dofmap.vf_dof(v, 0), dofmap.vf_dof(v, 1)
            avg = ts.sum(axis=0)
            sharp = len(ts) > 1 and min(ts[i] @ ts[j] for i in range(len(ts))
                                        for j in range(i + 1, len(ts))) < cos_lim
            if sharp or np.linalg.norm(avg) < 1e-12:
                cs.couple(dx, dy, (1.0, 0.0))
                cs.couple(dx, dy, (0.0, 1.0))
            else:
                cs.couple(dx, dy, avg / np.linalg.norm(avg))
    cs.reduction()
    return cs


# -- field evaluation --------------------------------------------------------------

def fluid_geometry(dofmap: ProductDofMap, tris: Optional[np.ndarray] = None):
    """Affine maps of fluid triangles; ``tris`` indexes into ``dofmap.fluid_tris``."""
    idx = np.arange(len(dofmap.fluid_tris)) if tris is None else np.asarray(tris)
    pts = dofmap.mesh.vertices[dofmap.mesh.triangles[dofmap.fluid_tris[idx]]]
    return idx, affine_maps(pts)


def eval_fluid(dofmap: ProductDofMap, u: np.ndarray, xi: np.ndarray, tris=None):
    """sigma (n, nq, 2, 2), v (n, nq, 2), grad v (n, nq, 2, 2) with grad v[i, j] = d v_i / d x_j."""
    idx, (p0, J, det, Jinv) = fluid_geometry(dofmap, tris)
    c = u[dofmap.fluid_dofs[idx]]
    phi, _ = rt_basis(J, det, xi, dofmap.fluid_signs[idx])
    sig = np.stack([np.einsum("eqbi,eb->eqi", phi, c[:, 0:3]),
                    np.einsum("eqbi,eb->eqi", phi, c[:, 3:6])], axis=2)
    lam, grad = p1_basis(Jinv, xi)
    vv = c[:, 6:].reshape(-1, 3, 2)
    v = np.einsum("qb,ebi->eqi", lam, vv)
    gv = np.einsum("ebi,ebj->eij", vv, grad)
    return sig, v, np.broadcast_to(gv[:, None], (len(idx), len(lam), 2, 2))


def eval_porous(dofmap: ProductDofMap, u: np.ndarray, xi: np.ndarray, tris=None):
    """v_p (n, nq, 2), div v_p (n,), p_F (n, nq), grad p_F (n, 2)."""
    idx = np.arange(len(dofmap.porous_tris)) if tris is None else np.asarray(tris)
    pts = dofmap.mesh.vertices[dofmap.mesh.triangles[dofmap.porous_tris[idx]]]
    p0, J, det, Jinv = affine_maps(pts)
    c = u[dofmap.porous_dofs[idx]]
    phi, div = rt_basis(J, det, xi, dofmap.porous_signs[idx])
    lam, grad = p1_basis(Jinv, xi)
    return (np.einsum("eqbi,eb->eqi", phi, c[:, :3]), np.einsum("eb,eb->e", div, c[:, :3]),
            c[:, 3:] @ lam.T, np.einsum("eb,ebi->ei", c[:, 3:], grad))


def interpolate(dofmap: ProductDofMap, sigma: Optional[Callable] = None, vf: Optional[Callable] = None,
                vp: Optional[Callable] = None, pF: Optional[Callable] = None) -> np.ndarray:
    """Canonical interpolant: RT fluxes by edge quadrature, P1 by vertex values.

    Each callable maps points (n, 2) to values: sigma -> (n, 2, 2),
    vf/vp -> (n, 2), pF -> (n,).
    """
    mesh = dofmap.mesh
    u = np.zeros(dofmap.n_dofs)
    ng = mesh.edge_normals()
    if sigma is not None and len(dofmap.fluid_edges):
        e = dofmap.fluid_edges
        x, w = edge_quadrature(mesh, e)
        s = sigma(x.reshape(-1, 2)).reshape(len(e), -1, 2, 2)
        flux = np.einsum("eq,eqij,ej->ei", w, s, ng[e])
        u[dofmap.field_slice("sigma1")] = flux[:, 0]
        u[dofmap.field_slice("sigma2")] = flux[:, 1]
    if vf is not None and len(dofmap.fluid_vertices):
        u[dofmap.field_slice("vf")] = vf(mesh.vertices[dofmap.fluid_vertices]).reshape(-1)
    if vp is not None and len(dofmap.porous_edges):
        e = dofmap.porous_edges
        x, w = edge_quadrature(mesh, e)
        vals = vp(x.reshape(-1, 2)).reshape(len(e), -1, 2)
        u[dofmap.field_slice("vp")] = np.einsum("eq,eqi,ei->e", w, vals, ng[e])
    if pF is not None and len(dofmap.porous_vertices):
        u[dofmap.field_slice("pF")] = pF(mesh.vertices[dofmap.porous_vertices])
    return u


def norm_eval(dofmap: ProductDofMap, u: np.ndarray) -> dict:
    """Field norms and the combined product norm (all returned unsquared)."""
    xi, wq = triangle_rule()
    out = {"sigma_div": 0.0, "vf_1": 0.0, "vp_div": 0.0, "pF_1": 0.0}
    if len(dofmap.fluid_tris):
        _, (_, J, det, _) = fluid_geometry(dofmap)
        area = 0.5 * np.abs(det)
        sig, v, gv = eval_fluid(dofmap, u, xi)
        c = u[dofmap.fluid_dofs]
        _, div = rt_basis(J, det, xi, dofmap.fluid_signs)
        d1 = np.einsum("eb,eb->e", div, c[:, 0:3])
        d2 = np.einsum("eb,eb->e", div, c[:, 3:6])
        out["sigma_div"] = np.sum(area * (np.einsum("q,eqij->e", wq, sig**2) + d1**2 + d2**2))
        out["vf_1"] = np.sum(area * (np.einsum("q,eqi->e", wq, v**2) + np.sum(gv[:, 0] ** 2, axis=(1, 2))))
    if len(dofmap.porous_tris):
        pts = dofmap.mesh.vertices[dofmap.mesh.triangles[dofmap.porous_tris]]
        area = 0.5 * np.abs(affine_maps(pts)[2])
        vp, dv, p, gp = eval_porous(dofmap, u, xi)
        out["vp_div"] = np.sum(area * (np.einsum("q,eqi->e", wq, vp**2) + dv**2))
        out["pF_1"] = np.sum(area * (p**2 @ wq + np.sum(gp**2, axis=1)))
    total = sum(out.values())
    rep = {k: float(np.sqrt(v)) for k, v in out.items()}
    rep["combined"] = float(np.sqrt(total))
    return rep
