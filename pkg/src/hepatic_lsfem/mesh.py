"""Conforming two-subdomain triangulations.

A :class:`TriangleMesh` stores vertices, counter-clockwise triangles, a
fluid/porous label per triangle and a tag per edge.  The vertex order of a
triangle also encodes its refinement edge for newest-vertex bisection:
local vertex 0 is the newest vertex and the edge opposite to it (local
edge 0, between local vertices 1 and 2) is the refinement edge.

Local edge ``i`` of a triangle is always the edge opposite local vertex ``i``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from typing import NamedTuple

import numpy as np
from scipy.spatial import cKDTree

FLUID = 0
POROUS = 1


class MeshError(ValueError):
    """Raised when a mesh violates one of the structural invariants."""


class BoundaryTag(IntEnum):
    INTERIOR = 0
    INTERFACE = 1
    INFLOW_F = 2
    OUTFLOW_F = 3
    NEUMANN_F = 4
    DIRICHLET_P = 5
    NEUMANN_P = 6

    @property
    def carries_pressure(self) -> bool:
        return self in PRESSURE_TAGS

    @property
    def label(self) -> str:
        return _TAG_NAMES[self]

    @classmethod
    def from_label(cls, name: str) -> "BoundaryTag":
        for tag, label in _TAG_NAMES.items():
            if label.lower() == name.strip().lower():
                return tag
        raise ValueError(f"unknown boundary tag {name!r}")


_TAG_NAMES = {
    BoundaryTag.INTERIOR: "Interior",
    BoundaryTag.INTERFACE: "Interface",
    BoundaryTag.INFLOW_F: "InflowF",
    BoundaryTag.OUTFLOW_F: "OutflowF",
    BoundaryTag.NEUMANN_F: "NeumannF",
    BoundaryTag.DIRICHLET_P: "DirichletP",
    BoundaryTag.NEUMANN_P: "NeumannP",
}
PRESSURE_TAGS = frozenset({BoundaryTag.INFLOW_F, BoundaryTag.OUTFLOW_F, BoundaryTag.DIRICHLET_P})
FLUID_BOUNDARY_TAGS = frozenset({BoundaryTag.INFLOW_F, BoundaryTag.OUTFLOW_F, BoundaryTag.NEUMANN_F})
POROUS_BOUNDARY_TAGS = frozenset({BoundaryTag.DIRICHLET_P, BoundaryTag.NEUMANN_P})


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    """Immutable triangulation with subdomain labels and edge tags.

    Parameters
    ----------
    vertices : (N, 2) array
    triangles : (M, 3) int array, counter-clockwise
    subdomain : (M,) int array with entries ``FLUID`` or ``POROUS``
    tag_map : dict
        Maps a sorted vertex pair ``(a, b)`` to ``(BoundaryTag, pressure)``.
        Edges absent from the map are ``INTERIOR``; ``pressure`` is ``None``
        for tags that carry no pressure.
    check : bool
        Run :func:`validate` on construction.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    subdomain: np.ndarray
    tag_map: dict = field(default_factory=dict, repr=False)
    check: bool = field(default=True, repr=False)

    def __post_init__(self):
        set_ = object.__setattr__
        set_(self, "vertices", _frozen(self.vertices, float).reshape(-1, 2))
        set_(self, "triangles", _frozen(self.triangles, np.int64).reshape(-1, 3))
        set_(self, "subdomain", _frozen(self.subdomain, np.int8).reshape(-1))
        set_(self, "tag_map", {tuple(sorted(map(int, k))): v for k, v in self.tag_map.items()})
        if len(self.subdomain) != len(self.triangles):
            raise MeshError("subdomain labels do not match the triangle count")
        if len(self.triangles) and (self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices)):
            raise MeshError("triangle references a vertex index out of range")
        self._build_edges()
        if self.check:
            validate(self)

    def _build_edges(self):
        t = self.triangles
        m = len(t)
        local = np.stack([t[:, [1, 2]], t[:, [2, 0]], t[:, [0, 1]]], axis=1).reshape(-1, 2)
        local = np.sort(local, axis=1)
        if m:
            edges, inv = np.unique(local, axis=0, return_inverse=True)
        else:
            edges, inv = np.zeros((0, 2), np.int64), np.zeros(0, np.int64)
        inv = inv.reshape(-1)
        ne = len(edges)
        counts = np.bincount(inv, minlength=ne)
        tri_of = np.repeat(np.arange(m), 3)
        order = np.argsort(inv, kind="stable")
        sinv = inv[order]
        first = np.r_[True, sinv[1:] != sinv[:-1]] if len(sinv) else np.zeros(0, bool)
        edge_tris = np.full((ne, 2), -1, dtype=np.int64)
        edge_tris[sinv[first], 0] = tri_of[order[first]]
        edge_tris[sinv[~first], 1] = tri_of[order[~first]]

        tags = np.zeros(ne, dtype=np.int8)
        pressure = np.full(ne, np.nan)
        if self.tag_map:
            index = {(int(a), int(b)): i for i, (a, b) in enumerate(edges)}
            for key, (tag, p) in self.tag_map.items():
                i = index.get(key)
                if i is None:
                    raise MeshError(f"tagged edge {key} is not an edge of the mesh")
                tags[i] = int(tag)
                if p is not None:
                    pressure[i] = float(p)

        set_ = object.__setattr__
        set_(self, "edges", _frozen(edges, np.int64))
        set_(self, "tri_edges", _frozen(inv.reshape(m, 3), np.int64))
        set_(self, "edge_tris", _frozen(edge_tris, np.int64))
        set_(self, "edge_count", _frozen(counts, np.int64))
        set_(self, "edge_tag", _frozen(tags, np.int8))
        set_(self, "edge_pressure", _frozen(pressure, float))

    # -- sizes -------------------------------------------------------------
    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    # -- geometry ----------------------------------------------------------
    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def areas(self) -> np.ndarray:
        return np.abs(self.signed_areas())

    def centroids(self) -> np.ndarray:
        return self.vertices[self.triangles].mean(axis=1)

    def edge_lengths(self) -> np.ndarray:
        d = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])

    def edge_midpoints(self) -> np.ndarray:
        return 0.5 * (self.vertices[self.edges[:, 0]] + self.vertices[self.edges[:, 1]])

    def edge_normals(self) -> np.ndarray:
        """Unit normals in the global orientation.

        The edge tangent runs from the lower to the higher vertex id and the
        normal is that tangent rotated clockwise by 90 degrees.
        """
        d = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        n = np.stack([d[:, 1], -d[:, 0]], axis=1)
        return n / np.hypot(d[:, 0], d[:, 1])[:, None]

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def extent(self) -> float:
        lo, hi = self.bounding_box()
        return float(np.max(hi - lo))

    @property
    def refinement_edge(self) -> np.ndarray:
        return self.tri_edges[:, 0]

    # -- subdomains --------------------------------------------------------
    def triangles_in(self, sub: int) -> np.ndarray:
        return np.flatnonzero(self.subdomain == sub)

    def vertices_in(self, sub: int) -> np.ndarray:
        return np.unique(self.triangles[self.subdomain == sub])

    def edges_in(self, sub: int) -> np.ndarray:
        return np.unique(self.tri_edges[self.subdomain == sub])

    def edges_with_tag(self, tag: BoundaryTag) -> np.ndarray:
        return np.flatnonzero(self.edge_tag == int(tag))

    def boundary_edges(self) -> np.ndarray:
        return np.flatnonzero(self.edge_count == 1)

    def interface_vertices(self) -> np.ndarray:
        return np.unique(self.edges[self.edges_with_tag(BoundaryTag.INTERFACE)])

    def interface_layer(self) -> np.ndarray:
        """Boolean mask of triangles with at least one vertex on the interface."""
        on = np.zeros(self.n_vertices, bool)
        on[self.interface_vertices()] = True
        return on[self.triangles].any(axis=1)

    def with_tags(self, tag_map: dict, check: bool = True) -> "TriangleMesh":
        return TriangleMesh(self.vertices, self.triangles, self.subdomain, tag_map, check)


def validate(mesh: TriangleMesh, rtol: float = 1e-12) -> None:
    """Check all structural invariants; raise :class:`MeshError` listing every violation."""
    problems = []
    if mesh.n_triangles == 0:
        raise MeshError("mesh has no triangles")
    scale = max(mesh.extent(), np.finfo(float).tiny)

    area = mesh.signed_areas()
    bad = np.flatnonzero(area <= rtol * scale**2)
    if bad.size:
        problems.append(f"{bad.size} triangle(s) with non-positive signed area, e.g. {bad[:5].tolist()}")

    unused = np.setdiff1d(np.arange(mesh.n_vertices), mesh.triangles)
    if unused.size:
        problems.append(f"{unused.size} vertex/vertices not used by any triangle")

    pairs = cKDTree(mesh.vertices).query_pairs(1e-10 * scale, output_type="ndarray")
    if len(pairs):
        problems.append(f"{len(pairs)} duplicated vertex pair(s), e.g. {pairs[0].tolist()}")

    over = np.flatnonzero(mesh.edge_count > 2)
    if over.size:
        problems.append(f"{over.size} edge(s) shared by more than two triangles")

    hanging = _hanging_nodes(mesh, scale)
    if hanging:
        problems.append(f"{len(hanging)} hanging node(s), e.g. vertex {hanging[0]}")

    sub = mesh.subdomain
    et = mesh.edge_tris
    tags = mesh.edge_tag
    two = mesh.edge_count == 2
    one = mesh.edge_count == 1
    mixed = two & (sub[et[:, 0]] != sub[np.where(et[:, 1] >= 0, et[:, 1], et[:, 0])])
    wrong_iface = np.flatnonzero(mixed & (tags != BoundaryTag.INTERFACE))
    if wrong_iface.size:
        problems.append(f"{wrong_iface.size} fluid/porous edge(s) not tagged Interface")
    wrong_interior = np.flatnonzero(two & ~mixed & (tags != BoundaryTag.INTERIOR))
    if wrong_interior.size:
        problems.append(f"{wrong_interior.size} same-subdomain interior edge(s) carry a boundary tag")

    fluid_ok = np.isin(tags, [int(t) for t in FLUID_BOUNDARY_TAGS])
    porous_ok = np.isin(tags, [int(t) for t in POROUS_BOUNDARY_TAGS])
    owner = sub[et[:, 0]]
    bad_b = np.flatnonzero(one & ~np.where(owner == FLUID, fluid_ok, porous_ok))
    if bad_b.size:
        problems.append(f"{bad_b.size} boundary edge(s) without a valid tag for their subdomain")

    needs_p = np.isin(tags, [int(t) for t in PRESSURE_TAGS])
    has_p = np.isfinite(mesh.edge_pressure)
    if np.any(needs_p & ~has_p):
        problems.append("pressure-bearing edge tag without a finite pressure value")
    if np.any(~needs_p & ~np.isnan(mesh.edge_pressure)):
        problems.append("pressure value attached to a tag that carries none")

    if problems:
        raise MeshError("invalid mesh: " + "; ".join(problems))


def _hanging_nodes(mesh: TriangleMesh, scale: float) -> list:
    # a hanging node lies strictly inside an edge that has a single neighbour
    single = np.flatnonzero(mesh.edge_count == 1)
    if single.size == 0:
        return []
    cand = np.unique(mesh.edges[single])
    pts = mesh.vertices[cand]
    tree = cKDTree(pts)
    a = mesh.vertices[mesh.edges[single, 0]]
    b = mesh.vertices[mesh.edges[single, 1]]
    mid = 0.5 * (a + b)
    rad = 0.5 * np.hypot(*(b - a).T)
    found = []
    for k, near in enumerate(tree.query_ball_point(mid, rad * (1 + 1e-9))):
        if not near:
            continue
        d = b[k] - a[k]
        L2 = d @ d
        for j in near:
            v = cand[j]
            if v in mesh.edges[single[k]]:
                continue
            w = pts[j] - a[k]
            s = (w @ d) / L2
            dist = abs(w[0] * d[1] - w[1] * d[0]) / np.sqrt(L2)
            if 0 < s < 1 and dist <= 1e-10 * scale:
                found.append(int(v))
    return found


class InterfaceEdge(NamedTuple):
    edge: int
    fluid_tri: int
    porous_tri: int
    normal: np.ndarray  # unit, pointing from the fluid into the porous side
    length: float


def extract_interface(mesh: TriangleMesh) -> list[InterfaceEdge]:
    """Interface edges in edge-id order with fluid-to-porous unit normals."""
    ids = mesh.edges_with_tag(BoundaryTag.INTERFACE)
    if ids.size == 0:
        return []
    et = mesh.edge_tris[ids]
    fluid_first = mesh.subdomain[et[:, 0]] == FLUID
    ft = np.where(fluid_first, et[:, 0], et[:, 1])
    pt = np.where(fluid_first, et[:, 1], et[:, 0])
    n = mesh.edge_normals()[ids]
    c = mesh.centroids()
    flip = np.einsum("ij,ij->i", n, c[pt] - c[ft]) < 0
    n[flip] *= -1
    lengths = mesh.edge_lengths()[ids]
    return [InterfaceEdge(int(e), int(f), int(p), n[i], float(lengths[i]))
            for i, (e, f, p) in enumerate(zip(ids, ft, pt))]


def interface_arrays(mesh: TriangleMesh):
    """Stacked form of :func:`extract_interface`: (edges, fluid_tris, porous_tris, normals, lengths)."""
    items = extract_interface(mesh)
    if not items:
        return (np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0, np.int64),
                np.zeros((0, 2)), np.zeros(0))
    e, f, p, n, L = zip(*items)
    return np.array(e), np.array(f), np.array(p), np.array(n), np.array(L)


# -- refinement -------------------------------------------------------------

def bisect_refine(mesh: TriangleMesh, marked) -> TriangleMesh:
    """Newest-vertex bisection of the marked triangles with conformity closure."""
    marked = np.unique(np.asarray(list(marked), dtype=np.int64))
    if marked.size == 0:
        return mesh
    if marked.min() < 0 or marked.max() >= mesh.n_triangles:
        raise IndexError("marked triangle id out of range")

    ref = mesh.refinement_edge
    flag = np.zeros(mesh.n_edges, bool)
    flag[ref[marked]] = True
    while True:
        need = flag[mesh.tri_edges].any(axis=1) & ~flag[ref]
        if not need.any():
            break
        flag[ref[need]] = True

    split = np.flatnonzero(flag)
    ends = mesh.edges[split]
    new_pts = 0.5 * (mesh.vertices[ends[:, 0]] + mesh.vertices[ends[:, 1]])
    mid = {(int(a), int(b)): mesh.n_vertices + i for i, (a, b) in enumerate(ends)}
    vertices = np.vstack([mesh.vertices, new_pts])

    touched = flag[mesh.tri_edges].any(axis=1)
    keep = np.flatnonzero(~touched)
    tris = [mesh.triangles[keep]]
    subs = [mesh.subdomain[keep]]
    out_t, out_s = [], []
    for t in np.flatnonzero(touched):
        stack = [tuple(int(v) for v in mesh.triangles[t])]
        while stack:
            v0, v1, v2 = stack.pop()
            m = mid.get((v1, v2) if v1 < v2 else (v2, v1))
            if m is None:
                out_t.append((v0, v1, v2))
                out_s.append(mesh.subdomain[t])
                continue
            # second child pushed first so the first child is emitted first
            stack.append((m, v2, v0))
            stack.append((m, v0, v1))
    if out_t:
        tris.append(np.array(out_t, dtype=np.int64))
        subs.append(np.array(out_s, dtype=np.int8))

    tag_map = {}
    for key, val in mesh.tag_map.items():
        m = mid.get(key)
        if m is None:
            tag_map[key] = val
        else:
            tag_map[(key[0], m)] = val
            tag_map[(key[1], m) if key[1] < m else (m, key[1])] = val
    return TriangleMesh(vertices, np.vstack(tris), np.concatenate(subs), tag_map)


def refine_uniform(mesh: TriangleMesh, times: int = 1) -> TriangleMesh:
    for _ in range(times):
        mesh = bisect_refine(mesh, range(mesh.n_triangles))
    return mesh


# -- rescaling ---------------------------------------------------------------

@dataclass(frozen=True)
class AffineScaleMap:
    """``x_scaled = scale * x + offset``; the unscaled coordinates are in ``unit``."""

    scale: float
    offset: tuple = (0.0, 0.0)
    unit: str = "m"

    def __post_init__(self):
        if not (np.isfinite(self.scale) and self.scale > 0):
            raise ValueError("scale factor must be positive and finite")

    def forward(self, x):
        return self.scale * np.asarray(x, float) + np.asarray(self.offset)

    def inverse(self, y):
        return (np.asarray(y, float) - np.asarray(self.offset)) / self.scale

    def inverted(self) -> "AffineScaleMap":
        o = -np.asarray(self.offset) / self.scale
        return AffineScaleMap(1.0 / self.scale, (float(o[0]), float(o[1])), self.unit)


def rescale(mesh: TriangleMesh, target_length: float) -> tuple[TriangleMesh, AffineScaleMap]:
    """Scale about the origin so the largest bounding-box extent equals ``target_length``."""
    if not target_length > 0:
        raise ValueError("target_length must be positive")
    L = mesh.extent()
    if not L > 0:
        raise MeshError("mesh has zero extent")
    smap = AffineScaleMap(1.0 if L == target_length else target_length / L)
    scaled = TriangleMesh(smap.forward(mesh.vertices), mesh.triangles, mesh.subdomain,
                          mesh.tag_map, check=False)
    return scaled, smap


def map_mesh(mesh: TriangleMesh, smap: AffineScaleMap, inverse: bool = False) -> TriangleMesh:
    x = smap.inverse(mesh.vertices) if inverse else smap.forward(mesh.vertices)
    return TriangleMesh(x, mesh.triangles, mesh.subdomain, mesh.tag_map, check=False)


def orient_longest_edge(vertices, triangles):
    """Rotate each triangle's vertex order so local edge 0 is its longest edge."""
    p = vertices[triangles]
    lens = np.stack([
        np.linalg.norm(p[:, 2] - p[:, 1], axis=1),
        np.linalg.norm(p[:, 0] - p[:, 2], axis=1),
        np.linalg.norm(p[:, 1] - p[:, 0], axis=1),
    ], axis=1)
    # ties resolved towards the lowest local index for determinism
    k = np.argmax(lens - 1e-12 * np.arange(3) * lens.max(axis=1, keepdims=True), axis=1)
    idx = (k[:, None] + np.arange(3)) % 3
    return np.take_along_axis(triangles, idx, axis=1)


def interface_tag_map(vertices, triangles, subdomain) -> dict:
    """Interface tags for every edge shared by a fluid and a porous triangle."""
    t = np.asarray(triangles)
    local = np.sort(np.stack([t[:, [1, 2]], t[:, [2, 0]], t[:, [0, 1]]], axis=1).reshape(-1, 2), axis=1)
    owner = np.repeat(np.asarray(subdomain), 3)
    edges, inv = np.unique(local, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    has_f = np.zeros(len(edges), bool)
    has_p = np.zeros(len(edges), bool)
    has_f[inv[owner == FLUID]] = True
    has_p[inv[owner == POROUS]] = True
    return {(int(a), int(b)): (BoundaryTag.INTERFACE, None) for a, b in edges[has_f & has_p]}
