"""Structured template meshes for the capillary-bed and liver-lobule geometries.

Both builders lay a quad grid over the geometry, classify each quad as
fluid or porous by its position in the grid, split every quad into two
triangles and tag the boundary.  Everything is deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .mesh import (FLUID, POROUS, BoundaryTag, TriangleMesh,
                   interface_tag_map, orient_longest_edge)

SIN60 = math.sqrt(3.0) / 2.0


@dataclass(frozen=True)
class CapillaryGeometryConfig:
    """Straight capillary segment running through a rectangular block of tissue.

    The channel occupies ``0 <= x <= length, |y| <= half_width`` and the tissue
    block ``0 <= x <= length, |y| <= tissue_half_height``.  Lengths are in metres.
    ``h`` is the transverse mesh size, ``h_axial`` the size along the channel.
    """

    length: float = 1.0e-3
    half_width: float = 2.5e-5
    tissue_half_height: float = 2.5e-4
    h: float = 2.5e-5
    h_axial: Optional[float] = 1.0e-4
    inlet_pressure: float = 400.0
    outlet_pressure: float = -1600.0
    tissue_pressure: float = -933.0
    tissue_outer_bc: str = "dirichlet"
    tissue_side_bc: str = "dirichlet"


@dataclass(frozen=True)
class LobuleGeometryConfig:
    """Hexagonal lobule with straight sinusoids draining into a central vein.

    The central vein is a hexagonal hole of circumradius ``vein_radius``.
    Sinusoids of width ``channel_width`` run radially from the hexagon
    corners (portal triads) and, optionally, from the edge midpoints.  They
    join a fluid collecting ring of width ``ring_width`` around the vein, so
    the whole vein boundary is outflow.
    """

    circumradius: float = 5.0e-4
    vein_radius: float = 7.5e-5
    channel_width: float = 1.5e-5
    corner_channels: bool = True
    edge_channels: bool = False
    ring_width: Optional[float] = None
    h: float = 2.5e-5
    inflow_pressure: float = 400.0
    outflow_pressure: float = -1600.0
    porous_bc: str = "neumann"
    porous_pressure: float = -933.0


def _porous_tag(kind: str, pressure: float):
    kind = kind.lower()
    if kind == "dirichlet":
        return (BoundaryTag.DIRICHLET_P, float(pressure))
    if kind == "neumann":
        return (BoundaryTag.NEUMANN_P, None)
    raise ValueError(f"porous boundary condition must be 'dirichlet' or 'neumann', got {kind!r}")


def _split_quads(vertices, quads, flip):
    """Two triangles per quad (a, b, c, d), diagonal a-c or b-d; counter-clockwise output."""
    q = np.asarray(quads)
    t1 = np.where(flip[:, None], q[:, [0, 1, 3]], q[:, [0, 1, 2]])
    t2 = np.where(flip[:, None], q[:, [1, 2, 3]], q[:, [0, 2, 3]])
    tris = np.stack([t1, t2], axis=1).reshape(-1, 3)
    p = vertices[tris]
    d1, d2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    neg = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0] < 0
    tris[neg] = tris[neg][:, [0, 2, 1]]
    return tris


def build_capillary_mesh(config: CapillaryGeometryConfig = CapillaryGeometryConfig()) -> TriangleMesh:
    c = config
    h_ax = c.h_axial if c.h_axial is not None else c.h
    dims = {"length": c.length, "half_width": c.half_width,
            "tissue_half_height": c.tissue_half_height, "h": c.h, "h_axial": h_ax}
    bad = [k for k, v in dims.items() if not (np.isfinite(v) and v > 0)]
    if bad:
        raise ValueError(f"non-positive capillary dimension(s): {', '.join(bad)}")
    if c.h > c.half_width:
        raise ValueError("mesh size h exceeds the capillary half-width; the channel would be unresolved")
    if c.tissue_half_height <= c.half_width:
        raise ValueError("tissue block must extend beyond the capillary walls (no porous domain)")
    outer = _porous_tag(c.tissue_outer_bc, c.tissue_pressure)
    side = _porous_tag(c.tissue_side_bc, c.tissue_pressure)

    nx = max(1, math.ceil(c.length / h_ax - 1e-9))
    nt = max(1, math.ceil((c.tissue_half_height - c.half_width) / c.h - 1e-9))
    nc = max(2, math.ceil(2 * c.half_width / c.h - 1e-9))
    x = np.linspace(0.0, c.length, nx + 1)
    y = np.concatenate([
        np.linspace(-c.tissue_half_height, -c.half_width, nt + 1)[:-1],
        np.linspace(-c.half_width, c.half_width, nc + 1)[:-1],
        np.linspace(c.half_width, c.tissue_half_height, nt + 1),
    ])
    ny = len(y) - 1
    X, Y = np.meshgrid(x, y, indexing="ij")
    vertices = np.stack([X.ravel(), Y.ravel()], axis=1)
    vid = np.arange((nx + 1) * (ny + 1)).reshape(nx + 1, ny + 1)

    I, J = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    I, J = I.ravel(), J.ravel()
    quads = np.stack([vid[I, J], vid[I + 1, J], vid[I + 1, J + 1], vid[I, J + 1]], axis=1)
    in_channel_row = (np.arange(ny) >= nt) & (np.arange(ny) < nt + nc)
    quad_sub = np.where(in_channel_row[J], FLUID, POROUS)
    flip = (I + J) % 2 == 1
    tris = _split_quads(vertices, quads, flip)
    sub = np.repeat(quad_sub, 2)
    tris = orient_longest_edge(vertices, tris)

    tags = interface_tag_map(vertices, tris, sub)

    def put(a, b, val):
        tags[(min(a, b), max(a, b))] = val

    for i in range(nx):
        put(vid[i, 0], vid[i + 1, 0], outer)
        put(vid[i, ny], vid[i + 1, ny], outer)
    for j in range(ny):
        if in_channel_row[j]:
            put(vid[0, j], vid[0, j + 1], (BoundaryTag.INFLOW_F, c.inlet_pressure))
            put(vid[nx, j], vid[nx, j + 1], (BoundaryTag.OUTFLOW_F, c.outlet_pressure))
        else:
            put(vid[0, j], vid[0, j + 1], side)
            put(vid[nx, j], vid[nx, j + 1], side)
    return TriangleMesh(vertices, tris, sub, tags)


def hexagon_area(circumradius: float) -> float:
    return 1.5 * math.sqrt(3.0) * circumradius**2


def build_lobule_mesh(config: LobuleGeometryConfig = LobuleGeometryConfig()) -> TriangleMesh:
    c = config
    R, rc, w = c.circumradius, c.vein_radius, c.channel_width
    ring = w if c.ring_width is None else c.ring_width
    for name, v in (("circumradius", R), ("vein_radius", rc), ("channel_width", w),
                    ("ring_width", ring), ("h", c.h)):
        if not (np.isfinite(v) and v > 0):
            raise ValueError(f"non-positive lobule dimension: {name}")
    if rc >= R:
        raise ValueError("central-vein radius must be smaller than the hexagon circumradius")
    if not (c.corner_channels or c.edge_channels):
        raise ValueError("lobule needs at least one sinusoid channel (no fluid subdomain)")
    gap = (R - rc) * SIN60
    if ring >= gap:
        raise ValueError("collecting ring is wider than the tissue annulus")

    # strip widths measured along the hexagon edge direction
    a = 0.5 * w / SIN60 if c.corner_channels else 0.0
    room = rc - 2 * a - (w if c.edge_channels else 0.0)
    if room <= 0:
        raise ValueError("sinusoid channels overlap at the central vein")

    # two cell rows across the ring so that its interior vertices carry no wall constraint
    r_levels = np.concatenate([[0.0, 0.5 * ring / gap], np.linspace(ring / gap, 1.0,
                                                  max(1, math.ceil((gap - ring) / c.h - 1e-9)) + 1)])
    nr = len(r_levels) - 1

    # column layout as (start, end) pairs of offset formulas f(ell) = alpha*ell + beta
    n_free = max(1, math.ceil((R - 2 * a - (w if c.edge_channels else 0.0)) / c.h - 1e-9))
    cols = []  # (alpha, beta) of the left boundary of each column
    fluid_cols = []

    def add_fill(a0, b0, a1, b1, n):
        for s in range(n):
            t = s / n
            cols.append(((1 - t) * a0 + t * a1, (1 - t) * b0 + t * b1))
            fluid_cols.append(False)

    if c.corner_channels:
        cols.append((0.0, 0.0))
        fluid_cols.append(True)
        start = (0.0, a)
    else:
        start = (0.0, 0.0)
    end = (1.0, -a) if c.corner_channels else (1.0, 0.0)
    if c.edge_channels:
        n_half = max(1, n_free // 2)
        add_fill(*start, 0.5, -0.5 * w, n_half)
        # edge channel split into two columns, like a corner channel across its ray
        cols += [(0.5, -0.5 * w), (0.5, 0.0)]
        fluid_cols += [True, True]
        add_fill(0.5, 0.5 * w, *end, n_half)
    else:
        add_fill(*start, *end, n_free)
    if c.corner_channels:
        cols.append(end)
        fluid_cols.append(True)
    nc = len(cols)  # columns per sector; the right boundary of the last column is the next ray

    corners = [np.array([math.cos(k * math.pi / 3), math.sin(k * math.pi / 3)]) for k in range(6)]

    def ray_point(k, r):
        return (1 - r) * rc * corners[k % 6] + r * R * corners[k % 6]

    vertices = []
    ray_id = np.zeros((6, nr + 1), dtype=np.int64)
    for k in range(6):
        for i, r in enumerate(r_levels):
            ray_id[k, i] = len(vertices)
            vertices.append(ray_point(k, r))
    col_id = np.zeros((6, nc + 1, nr + 1), dtype=np.int64)
    for k in range(6):
        e = corners[(k + 1) % 6] - corners[k]
        e = e / np.linalg.norm(e)
        for i, r in enumerate(r_levels):
            ell = (1 - r) * rc + r * R
            col_id[k, 0, i] = ray_id[k, i]
            col_id[k, nc, i] = ray_id[(k + 1) % 6, i]
            for j in range(1, nc):
                al, be = cols[j]
                col_id[k, j, i] = len(vertices)
                vertices.append(ray_point(k, r) + (al * ell + be) * e)
    vertices = np.array(vertices)

    quads, qsub, outer_q, inner_q, flip = [], [], [], [], []
    for k in range(6):
        for j in range(nc):
            for i in range(nr):
                quads.append((col_id[k, j, i], col_id[k, j + 1, i],
                              col_id[k, j + 1, i + 1], col_id[k, j, i + 1]))
                fluid = fluid_cols[j] or i < 2
                qsub.append(FLUID if fluid else POROUS)
                flip.append((j + i) % 2 == 1)
    quads = np.array(quads)
    qsub = np.array(qsub)
    tris = _split_quads(vertices, quads, np.array(flip))
    sub = np.repeat(qsub, 2)
    tris = orient_longest_edge(vertices, tris)

    tags = interface_tag_map(vertices, tris, sub)
    porous = _porous_tag(c.porous_bc, c.porous_pressure)
    for k in range(6):
        for j in range(nc):
            qi = (k * nc + j) * nr
            a_, b_ = col_id[k, j, nr], col_id[k, j + 1, nr]
            outer_fluid = qsub[qi + nr - 1] == FLUID
            tags[(min(a_, b_), max(a_, b_))] = (
                (BoundaryTag.INFLOW_F, c.inflow_pressure) if outer_fluid else porous)
            a_, b_ = col_id[k, j, 0], col_id[k, j + 1, 0]
            tags[(min(a_, b_), max(a_, b_))] = (
                (BoundaryTag.OUTFLOW_F, c.outflow_pressure) if qsub[qi] == FLUID else porous)
    return TriangleMesh(vertices, tris, sub, tags)


def tag_groups(mesh: TriangleMesh, tag: BoundaryTag) -> list[np.ndarray]:
    """Connected components (through shared vertices) of the edges carrying ``tag``."""
    ids = mesh.edges_with_tag(tag)
    parent = {}

    def find(v):
        while parent.setdefault(v, v) != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    for a, b in mesh.edges[ids]:
        ra, rb = find(int(a)), find(int(b))
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    groups = {}
    for e, (a, _) in zip(ids, mesh.edges[ids]):
        groups.setdefault(find(int(a)), []).append(int(e))
    return [np.array(g) for _, g in sorted(groups.items())]


def unit_square_mesh(n: int, fluid_below: Optional[float] = None, fluid_above: Optional[float] = None,
                     sub: int = FLUID, tags: Optional[dict] = None, origin=(0.0, 0.0),
                     size=(1.0, 1.0)) -> TriangleMesh:
    """Structured ``n x n`` mesh of a rectangle used by tests and manufactured cases.

    Without ``fluid_below``/``fluid_above`` every triangle is labelled ``sub``.
    With ``fluid_above=y0`` triangles above ``y = y0`` are fluid and the rest
    porous (and conversely for ``fluid_below``).  ``tags`` maps a side name
    (``"left"``, ``"right"``, ``"bottom"``, ``"top"``) to a dict
    ``{FLUID: (tag, p), POROUS: (tag, p)}``; the default is ``InflowF`` with
    zero pressure for fluid and ``DirichletP`` with zero pressure for porous.
    """
    x = origin[0] + np.linspace(0, size[0], n + 1)
    y = origin[1] + np.linspace(0, size[1], n + 1)
    X, Y = np.meshgrid(x, y, indexing="ij")
    vertices = np.stack([X.ravel(), Y.ravel()], axis=1)
    vid = np.arange((n + 1) ** 2).reshape(n + 1, n + 1)
    I, J = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    I, J = I.ravel(), J.ravel()
    quads = np.stack([vid[I, J], vid[I + 1, J], vid[I + 1, J + 1], vid[I, J + 1]], axis=1)
    yc = 0.5 * (y[J] + y[J + 1])
    if fluid_above is not None:
        qsub = np.where(yc > fluid_above, FLUID, POROUS)
    elif fluid_below is not None:
        qsub = np.where(yc < fluid_below, FLUID, POROUS)
    else:
        qsub = np.full(len(quads), sub)
    tris = _split_quads(vertices, quads, (I + J) % 2 == 1)
    tsub = np.repeat(qsub, 2)
    tris = orient_longest_edge(vertices, tris)

    default = {FLUID: (BoundaryTag.INFLOW_F, 0.0), POROUS: (BoundaryTag.DIRICHLET_P, 0.0)}
    side_tags = {s: dict(default) for s in ("left", "right", "bottom", "top")}
    for s, v in (tags or {}).items():
        side_tags[s].update(v)
    tag_map = interface_tag_map(vertices, tris, tsub)
    q_of = np.arange(n * n).reshape(n, n)
    for i in range(n):
        for side, (a, b), q in (("bottom", (vid[i, 0], vid[i + 1, 0]), q_of[i, 0]),
                                ("top", (vid[i, n], vid[i + 1, n]), q_of[i, n - 1]),
                                ("left", (vid[0, i], vid[0, i + 1]), q_of[0, i]),
                                ("right", (vid[n, i], vid[n, i + 1]), q_of[n - 1, i])):
            tag_map[(min(a, b), max(a, b))] = side_tags[side][int(qsub[q])]
    return TriangleMesh(vertices, tris, tsub, tag_map)

