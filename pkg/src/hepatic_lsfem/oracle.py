"""Independent verification machinery.

Nothing here reuses the production operators in :mod:`assembly`: fields are
evaluated from global-coordinate basis formulas, residuals are formed from
their definitions, and integrals use collapsed Gauss-Legendre rules of much
higher degree.  Only the dof numbering of :class:`ProductDofMap` is shared,
which is what makes entry-by-entry comparisons possible.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .assembly import Forcing, LsTermWeights, MaterialParams
from .geometry import unit_square_mesh
from .mesh import FLUID, POROUS, BoundaryTag, TriangleMesh
from .spaces import BoundaryData, ProductDofMap


# -- high-order quadrature -------------------------------------------------------------

def collapsed_gauss(n: int = 7):
    """Duffy-collapsed tensor Gauss rule on the reference triangle (weights sum to 1/2)."""
    g, w = np.polynomial.legendre.leggauss(n)
    g, w = 0.5 * (g + 1), 0.5 * w
    U, V = np.meshgrid(g, g, indexing="ij")
    WU, WV = np.meshgrid(w, w, indexing="ij")
    pts = np.stack([U.ravel(), (V * (1 - U)).ravel()], axis=1)
    return pts, (WU * WV * (1 - U)).ravel()


def gauss_line(n: int = 6):
    g, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (g + 1), 0.5 * w


# -- global-coordinate fields --------------------------------------------------------------

class _Tri:
    """Geometry of one triangle in global coordinates."""

    def __init__(self, mesh: TriangleMesh, t: int):
        self.ids = mesh.triangles[t]
        self.P = mesh.vertices[self.ids]
        M = np.vstack([np.ones(3), self.P.T])
        self.Minv = np.linalg.inv(M)  # barycentric: lam = Minv @ [1, x, y]
        self.area = 0.5 * abs(np.linalg.det(M))
        self.edges = []
        for i in range(3):
            a, b = sorted((int(self.ids[(i + 1) % 3]), int(self.ids[(i + 2) % 3])))
            d = mesh.vertices[b] - mesh.vertices[a]
            n_glob = np.array([d[1], -d[0]])
            mid = 0.5 * (mesh.vertices[a] + mesh.vertices[b])
            outward = np.sign(n_glob @ (mid - self.P[i]))
            self.edges.append(((a, b), outward))

    def lam(self, x):
        return (self.Minv @ np.vstack([np.ones(len(x)), x.T])).T  # (n, 3)

    def grad_lam(self):
        return self.Minv[:, 1:]  # (3, 2)

    def rt(self, i, x):
        """Global-orientation RT0 basis of local edge i: sign * (x - P_i) / (2 |T|)."""
        return self.edges[i][1] * (x - self.P[i]) / (2 * self.area)

    def rt_div(self, i):
        return self.edges[i][1] / self.area

    def map(self, ref):
        return self.P[0] + ref[:, :1] * (self.P[1] - self.P[0]) + ref[:, 1:] * (self.P[2] - self.P[0])


def _edge_index(mesh: TriangleMesh):
    return {(int(a), int(b)): i for i, (a, b) in enumerate(mesh.edges)}


def _fluid_fields(tri: _Tri, dm: ProductDofMap, eidx, u, x):
    sig = np.zeros((len(x), 2, 2))
    div = np.zeros(2)
    for i in range(3):
        e = eidx[tri.edges[i][0]]
        for r in range(2):
            c = u[dm.sigma_dof(r, e)]
            sig[:, r, :] += c * tri.rt(i, x)
            div[r] += c * tri.rt_div(i)
    lam = tri.lam(x)
    G = tri.grad_lam()
    v = np.zeros((len(x), 2))
    gv = np.zeros((2, 2))
    for a in range(3):
        for comp in range(2):
            c = u[dm.vf_dof(int(tri.ids[a]), comp)]
            v[:, comp] += c * lam[:, a]
            gv[comp] += c * G[a]
    return sig, div, v, gv


def _porous_fields(tri: _Tri, dm: ProductDofMap, eidx, u, x):
    vp = np.zeros((len(x), 2))
    dv = 0.0
    for i in range(3):
        c = u[dm.vp_dof(eidx[tri.edges[i][0]])]
        vp += c * tri.rt(i, x)
        dv += c * tri.rt_div(i)
    lam = tri.lam(x)
    G = tri.grad_lam()
    c = np.array([u[dm.pF_dof(int(v))] for v in tri.ids])
    return vp, dv, lam @ c, c @ G


def _samples(dm: ProductDofMap, params: MaterialParams, weights: LsTermWeights, u: np.ndarray,
             forcing: Optional[Forcing], nq: int = 7):
    """Weighted residual samples ``sqrt(w) * (r(u) - f)`` for every term and quadrature point."""
    mesh = dm.mesh
    eidx = _edge_index(mesh)
    ref, wref = collapsed_gauss(nq)
    s_line, w_line = gauss_line(nq)
    f = forcing or Forcing()
    out = []
    tris = {t: _Tri(mesh, t) for t in range(mesh.n_triangles)}

    def force(name, x, shape):
        fn = getattr(f, name)
        return np.zeros((len(x),) + shape) if fn is None else np.asarray(fn(x), float).reshape((len(x),) + shape)

    for t, tri in tris.items():
        x = tri.map(ref)
        W = 2 * tri.area * wref
        if mesh.subdomain[t] == FLUID:
            sig, div, v, gv = _fluid_fields(tri, dm, eidx, u, x)
            D = 0.5 * (gv + gv.T)
            dev = sig - 0.5 * np.trace(sig, axis1=1, axis2=2)[:, None, None] * np.eye(2)
            r_mom = np.broadcast_to(div, (len(x), 2)) - force("mom", x, (2,))
            devD = D - 0.5 * np.trace(gv) * np.eye(2)
            r_const = dev - 2 * params.mu * devD - force("const", x, (2, 2))
            r_divf = np.trace(gv) - force("divf", x, ())
            out += [np.sqrt(weights.mom * W)[:, None] * r_mom,
                    (np.sqrt(weights.const * W)[:, None] * r_const.reshape(-1, 4)),
                    np.sqrt(weights.divf * W) * r_divf]
        else:
            vp, dv, p, gp = _porous_fields(tri, dm, eidx, u, x)
            r_darcy = params.mu_F / params.K * vp + gp - force("darcy", x, (2,))
            r_divp = dv - force("divp", x, ())
            out += [np.sqrt(weights.darcy * W)[:, None] * r_darcy, np.sqrt(weights.divp * W) * r_divp]

    for e in mesh.edges_with_tag(BoundaryTag.INTERFACE):
        t0, t1 = mesh.edge_tris[e]
        ft, pt = (t0, t1) if mesh.subdomain[t0] == FLUID else (t1, t0)
        a, b = mesh.vertices[mesh.edges[e]]
        L = np.linalg.norm(b - a)
        x = a + s_line[:, None] * (b - a)
        n = np.array([(b - a)[1], -(b - a)[0]]) / L
        if n @ (tris[pt].P.mean(0) - tris[ft].P.mean(0)) < 0:
            n = -n
        sig, _, v, gv = _fluid_fields(tris[ft], dm, eidx, u, x)
        vp, _, p, _ = _porous_fields(tris[pt], dm, eidx, u, x)
        D = 0.5 * (gv + gv.T)
        vn = v @ n
        r_bjs = (2 * params.mu * (n @ D @ n) + 0.5 * np.trace(sig, axis1=1, axis2=2)
                 + params.membrane_resistance * vn + p - force("bjs", x, ()))
        r_flux = vn - vp @ n - force("flux", x, ())
        W = L * w_line
        out += [np.sqrt(weights.bjs * W) * r_bjs, np.sqrt(weights.flux * L * W) * r_flux]
    return np.concatenate([np.ravel(o) for o in out])


def oracle_functional(dm: ProductDofMap, params: MaterialParams, weights: LsTermWeights,
                      u: np.ndarray, forcing: Optional[Forcing] = None, nq: int = 7) -> float:
    """Direct high-order quadrature of the weighted functional."""
    s = _samples(dm, params, weights, u, forcing, nq)
    return float(s @ s)


def oracle_norm(dm: ProductDofMap, u: np.ndarray, nq: int = 7) -> float:
    """Combined product norm ``|||u|||`` by high-order quadrature in global coordinates."""
    mesh = dm.mesh
    eidx = _edge_index(mesh)
    ref, wref = collapsed_gauss(nq)
    total = 0.0
    for t in range(mesh.n_triangles):
        tri = _Tri(mesh, t)
        x = tri.map(ref)
        W = 2 * tri.area * wref
        if mesh.subdomain[t] == FLUID:
            sig, div, v, gv = _fluid_fields(tri, dm, eidx, u, x)
            total += W @ np.sum(sig**2, axis=(1, 2)) + tri.area * (div @ div)
            total += W @ np.sum(v**2, axis=1) + tri.area * np.sum(gv**2)
        else:
            vp, dv, p, gp = _porous_fields(tri, dm, eidx, u, x)
            total += W @ np.sum(vp**2, axis=1) + tri.area * dv**2
            total += W @ p**2 + tri.area * (gp @ gp)
    return float(np.sqrt(total))


def dense_assembly_oracle(dm: ProductDofMap, params: MaterialParams, weights: LsTermWeights,
                          forcing: Optional[Forcing] = None, max_triangles: int = 8, nq: int = 7):
    """Dense ``(A, b, c)`` with ``A_ij`` the bilinear form of basis pair (i, j)."""
    if dm.mesh.n_triangles > max_triangles:
        raise ValueError(f"dense oracle limited to {max_triangles} triangles, mesh has {dm.mesh.n_triangles}")
    n = dm.n_dofs
    zero = LsTermWeights(**weights.as_dict())
    cols = []
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1.0
        cols.append(_samples(dm, params, zero, e, None, nq))
    S = np.array(cols)  # (n, samples)
    f = -_samples(dm, params, zero, np.zeros(n), forcing, nq)
    return S @ S.T, S @ f, float(f @ f)


# -- manufactured solutions -------------------------------------------------------------

@dataclass
class ManufacturedCase:
    """Closed-form fields, the forcing they induce and a mesh recipe.

    Callables take points (n, 2): ``sigma`` -> (n, 2, 2), ``vf``/``vp`` ->
    (n, 2), ``pF`` -> (n,).  Fields absent from the case are None.
    """

    name: str
    params: MaterialParams
    forcing: Forcing
    mesh: Callable[[int], TriangleMesh]
    sigma: Optional[Callable] = None
    vf: Optional[Callable] = None
    vp: Optional[Callable] = None
    pF: Optional[Callable] = None
    pin_velocity: bool = False

    def boundary_data(self) -> "ExactBoundaryData":
        return ExactBoundaryData(self)


class ExactBoundaryData(BoundaryData):
    """Boundary values taken from a manufactured solution."""

    def __init__(self, case: ManufacturedCase):
        self.case = case

    def traction(self, x, normal, tag, pressure):
        return np.einsum("nij,j->ni", self.case.sigma(x), normal)

    def pressure(self, x, pressure):
        return self.case.pF(x)

    def normal_flux(self, x, normal):
        return self.case.vp(x) @ normal

    def pinned_velocity(self, x):
        return self.case.vf(x) if self.case.pin_velocity else None


def stokes_polynomial_case(c: float = 1.0, omega: float = 0.0, pressure: float = 0.0,
                           mu: float = 1.0) -> ManufacturedCase:
    """Linear divergence-free flow ``v = c (y, x) + omega (-y, x)`` with constant stress.

    ``sigma = 2 mu D(v) - pressure I``.  Every fluid residual vanishes, so no
    forcing is needed; the velocity is pinned on the boundary to remove the
    rigid motions a pure-traction fluid problem would leave free.
    """
    def vf(x):
        return np.stack([c * x[:, 1] - omega * x[:, 1], c * x[:, 0] + omega * x[:, 0]], axis=1)

    S = 2 * mu * c * np.array([[0.0, 1.0], [1.0, 0.0]]) - pressure * np.eye(2)

    def sigma(x):
        return np.broadcast_to(S, (len(x), 2, 2)).copy()

    params = MaterialParams(mu, 1.0, 1.0, 1.0, 1.0)
    return ManufacturedCase("stokes_polynomial", params, Forcing(),
                            lambda n: unit_square_mesh(n, sub=FLUID), sigma=sigma, vf=vf,
                            pin_velocity=True)


def darcy_trig_case(params: MaterialParams = MaterialParams.unit()) -> ManufacturedCase:
    """``p_F = sin(pi x) sin(pi y)`` on the unit square with ``v_p = -(K / mu_F) grad p_F``."""
    k = params.K / params.mu_F

    def pF(x):
        return np.sin(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1])

    def vp(x):
        return -k * np.pi * np.stack([np.cos(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1]),
                                      np.sin(np.pi * x[:, 0]) * np.cos(np.pi * x[:, 1])], axis=1)

    def divp(x):
        return 2 * np.pi**2 * k * pF(x)

    return ManufacturedCase("darcy_trig", params, Forcing(divp=divp),
                            lambda n: unit_square_mesh(n, sub=POROUS), vp=vp, pF=pF)


def coupled_uniform_case(q: float = 1.0, p0: float = 0.0,
                         params: MaterialParams = MaterialParams.unit()) -> ManufacturedCase:
    """Uniform transverse flow through a horizontal membrane at ``y = 1/2``.

    Fluid above, tissue below, ``v_f = v_p = (0, -q)``.  The tissue pressure is
    linear with ``p_F = p0`` on the interface; the fluid pressure is the
    constant ``p0 + R_M q`` so the interface condition holds exactly.
    """
    R = params.membrane_resistance
    slope = params.mu_F / params.K * q
    pf = p0 + R * q

    def vel(x):
        return np.stack([np.zeros(len(x)), -q * np.ones(len(x))], axis=1)

    def sigma(x):
        return np.broadcast_to(-pf * np.eye(2), (len(x), 2, 2)).copy()

    def pF(x):
        return p0 + slope * (x[:, 1] - 0.5)

    def mesh(n):
        if n % 2:
            raise ValueError("coupled_uniform_case needs an even subdivision count")
        return unit_square_mesh(n, fluid_above=0.5)

    case = ManufacturedCase("coupled_uniform", params, Forcing(), mesh,
                            sigma=sigma, vf=vel, vp=vel, pF=pF)
    case.fluid_pressure = pf
    return case


def fd_residuals(case: ManufacturedCase, x: np.ndarray, h: float = 1e-6) -> dict:
    """Residuals of the closed-form fields by central differences."""
    e = np.eye(2) * h
    out = {}
    p = case.params
    if case.sigma is not None:
        dsig = [(case.sigma(x + e[j]) - case.sigma(x - e[j])) / (2 * h) for j in range(2)]
        out["mom"] = dsig[0][:, :, 0] + dsig[1][:, :, 1]
        dv = np.stack([(case.vf(x + e[j]) - case.vf(x - e[j])) / (2 * h) for j in range(2)], axis=2)
        D = 0.5 * (dv + np.swapaxes(dv, 1, 2))
        s = case.sigma(x)
        dev = s - 0.5 * np.trace(s, axis1=1, axis2=2)[:, None, None] * np.eye(2)
        devD = D - 0.5 * (D[:, 0, 0] + D[:, 1, 1])[:, None, None] * np.eye(2)
        out["const"] = dev - 2 * p.mu * devD
        out["divf"] = dv[:, 0, 0] + dv[:, 1, 1]
    if case.vp is not None:
        dvp = np.stack([(case.vp(x + e[j]) - case.vp(x - e[j])) / (2 * h) for j in range(2)], axis=2)
        gp = np.stack([(case.pF(x + e[j]) - case.pF(x - e[j])) / (2 * h) for j in range(2)], axis=1)
        out["divp"] = dvp[:, 0, 0] + dvp[:, 1, 1]
        out["darcy"] = p.mu_F / p.K * case.vp(x) + gp
    return out


def interpolate_case(case: ManufacturedCase, dm: ProductDofMap) -> np.ndarray:
    from .spaces import interpolate
    return interpolate(dm, sigma=case.sigma, vf=case.vf, vp=case.vp, pF=case.pF)


# -- brute-force checkers -------------------------------------------------------------------

def brute_force_conforming(vertices: np.ndarray, triangles: np.ndarray, tol: float = 1e-12) -> bool:
    """Exhaustive check that no vertex lies inside an edge of another triangle
    and every edge is shared by at most two triangles."""
    edges = {}
    for t, tri in enumerate(triangles):
        for i in range(3):
            key = tuple(sorted((int(tri[i]), int(tri[(i + 1) % 3]))))
            edges.setdefault(key, []).append(t)
    if any(len(v) > 2 for v in edges.values()):
        return False
    scale = np.ptp(vertices, axis=0).max()
    for (a, b) in edges:
        pa, pb = vertices[a], vertices[b]
        d = pb - pa
        L2 = d @ d
        for v in range(len(vertices)):
            if v in (a, b):
                continue
            w = vertices[v] - pa
            s = (w @ d) / L2
            if 0 < s < 1 and abs(w[0] * d[1] - w[1] * d[0]) / np.sqrt(L2) < tol * scale:
                return False
    return True


def brute_force_min_marking(eta: np.ndarray, theta: float):
    """Smallest subset whose sum reaches ``theta * total``, by enumerating all subsets."""
    eta = np.asarray(eta, float)
    n = len(eta)
    total = eta.sum()
    if total <= 0:
        return set()
    bits = ((np.arange(2**n)[:, None] >> np.arange(n)) & 1).astype(bool)
    sums = bits.astype(float) @ eta
    size = bits.sum(axis=1)
    # same relative slack as the marker; the empty set never suffices even if theta * total underflows
    ok = (sums >= theta * total * (1 - 1e-14)) & (size > 0)
    k = size[ok].min()
    best = np.flatnonzero(ok & (size == k))
    return {frozenset(np.flatnonzero(bits[i]).tolist()) for i in best}


def in_channel(points: np.ndarray, half_width: float, length: float, tol: float = 1e-12) -> np.ndarray:
    """Closed channel region ``0 <= x <= length, |y| <= half_width``."""
    x, y = points[:, 0], points[:, 1]
    s = tol * max(length, half_width)
    return (x >= -s) & (x <= length + s) & (np.abs(y) <= half_width + s)
