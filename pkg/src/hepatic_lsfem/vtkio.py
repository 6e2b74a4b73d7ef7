"""Legacy ASCII VTK (3.0) output and input for triangle meshes, plus an edge-tag sidecar."""

from __future__ import annotations

from pathlib import Path
from typing import Optional

import numpy as np

from .mesh import BoundaryTag, MeshError, TriangleMesh

VTK_TRIANGLE = 5


def _fmt(a: np.ndarray) -> list[str]:
    # repr of a Python float round-trips exactly and is platform independent
    return [" ".join(repr(float(v)) for v in row) for row in np.atleast_2d(a)]


def _data_block(lines: list, data: dict, n: int) -> None:
    for name, arr in data.items():
        arr = np.asarray(arr)
        if arr.shape[0] != n:
            raise ValueError(f"field {name!r} has {arr.shape[0]} entries, expected {n}")
        if arr.ndim == 2 and arr.shape[1] == 2:
            lines.append(f"VECTORS {name} double")
            lines += _fmt(np.column_stack([arr, np.zeros(n)]))
        elif arr.ndim == 1:
            kind = "int" if np.issubdtype(arr.dtype, np.integer) else "double"
            lines.append(f"SCALARS {name} {kind} 1")
            lines.append("LOOKUP_TABLE default")
            if kind == "int":
                lines += [str(int(v)) for v in arr]
            else:
                lines += [repr(float(v)) for v in arr]
        else:
            raise ValueError(f"field {name!r}: only scalars and 2-vectors are supported")


def write_vtk(path, mesh: TriangleMesh, point_data: Optional[dict] = None,
              cell_data: Optional[dict] = None, title: str = "triangle mesh",
              coordinates: Optional[np.ndarray] = None) -> Path:
    """Write an unstructured grid; ``subdomain`` is always included as cell data.

    ``coordinates`` overrides the vertex positions, e.g. to write a scaled
    computation in physical units.
    """
    path = Path(path)
    x = mesh.vertices if coordinates is None else np.asarray(coordinates, float)
    nv, nt = len(x), mesh.n_triangles
    lines = ["# vtk DataFile Version 3.0", title.replace("\n", " ")[:255], "ASCII",
             "DATASET UNSTRUCTURED_GRID", f"POINTS {nv} double"]
    lines += _fmt(np.column_stack([x, np.zeros(nv)]))
    lines.append(f"CELLS {nt} {4 * nt}")
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.triangles]
    lines.append(f"CELL_TYPES {nt}")
    lines += [str(VTK_TRIANGLE)] * nt
    cells = {"subdomain": mesh.subdomain.astype(np.int64)}
    cells.update({k: v for k, v in (cell_data or {}).items() if k != "subdomain"})
    lines.append(f"CELL_DATA {nt}")
    _data_block(lines, cells, nt)
    if point_data:
        lines.append(f"POINT_DATA {nv}")
        _data_block(lines, point_data, nv)
    path.write_text("\n".join(lines) + "\n")
    return path


def write_tag_sidecar(path, mesh: TriangleMesh) -> Path:
    """One line per tagged edge: ``a b TagName [pressure]``, sorted by vertex pair."""
    path = Path(path)
    lines = []
    for (a, b), (tag, p) in sorted(mesh.tag_map.items()):
        tag = BoundaryTag(int(tag))
        if tag == BoundaryTag.INTERIOR:
            continue
        lines.append(f"{a} {b} {tag.label}" + ("" if p is None else f" {float(p)!r}"))
    path.write_text("\n".join(lines) + ("\n" if lines else ""))
    return path


def read_tag_sidecar(path) -> dict:
    tags = {}
    for k, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) not in (3, 4):
            raise MeshError(f"{path}:{k}: expected 'a b TagName [pressure]', got {raw!r}")
        try:
            a, b = int(parts[0]), int(parts[1])
            tag = BoundaryTag.from_label(parts[2])
            p = float(parts[3]) if len(parts) == 4 else None
        except (ValueError, KeyError) as exc:
            raise MeshError(f"{path}:{k}: {exc}") from None
        tags[(min(a, b), max(a, b))] = (tag, p)
    return tags


def read_vtk(path, sidecar) -> TriangleMesh:
    """Read a mesh written by :func:`write_vtk` (or any legacy ASCII triangle grid
    with a ``subdomain`` cell scalar) together with its edge-tag sidecar."""
    lines = [l.strip() for l in Path(path).read_text().splitlines()]
    if not lines or not lines[0].startswith("# vtk DataFile"):
        raise MeshError(f"{path}: not a legacy VTK file")
    if len(lines) < 4 or lines[2].upper() != "ASCII":
        raise MeshError(f"{path}: only ASCII files are supported")
    i, pts, cells, types, sub = 3, None, None, None, None
    section = None

    def take(n):
        nonlocal i
        chunk = " ".join(lines[i:i + n]).split()
        i += n
        return chunk

    while i < len(lines):
        head = lines[i].split()
        i += 1
        if not head:
            continue
        key = head[0].upper()
        if key == "POINTS":
            n = int(head[1])
            vals = []
            while len(vals) < 3 * n:
                vals += lines[i].split()
                i += 1
            pts = np.array(vals, float).reshape(n, 3)[:, :2]
        elif key == "CELLS":
            n = int(head[1])
            cells = np.array(take(n), np.int64).reshape(n, -1)
        elif key == "CELL_TYPES":
            n = int(head[1])
            types = np.array(take(n), np.int64)
        elif key in ("CELL_DATA", "POINT_DATA"):
            section = key
        elif key == "SCALARS":
            name = head[1]
            if i < len(lines) and lines[i].upper().startswith("LOOKUP_TABLE"):
                i += 1
            n = len(cells) if section == "CELL_DATA" else len(pts)
            vals = take(n)
            if section == "CELL_DATA" and name == "subdomain":
                sub = np.array(vals, float).astype(np.int8)
        elif key == "VECTORS":
            n = len(cells) if section == "CELL_DATA" else len(pts)
            take(n)
    if pts is None or cells is None:
        raise MeshError(f"{path}: missing POINTS or CELLS section")
    if types is not None and np.any(types != VTK_TRIANGLE):
        raise MeshError(f"{path}: only triangle cells (type 5) are supported")
    if cells.shape[1] != 4 or np.any(cells[:, 0] != 3):
        raise MeshError(f"{path}: malformed triangle connectivity")
    if sub is None:
        raise MeshError(f"{path}: missing 'subdomain' cell data")
    tris = cells[:, 1:]
    return TriangleMesh(pts, tris, sub, read_tag_sidecar(sidecar))
