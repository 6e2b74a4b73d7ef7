"""Turn a :class:`ScenarioConfig` into a problem, run it and write its outputs."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .adaptivity import AdaptiveHistory, AdaptiveSolveError, LevelRecord, Problem, adaptive_solve
from .assembly import TERMS, auto_weights, hydraulic_length
from .config import ScenarioConfig, resolved_text
from .fields import cell_fields, flux_report, to_physical, vertex_fields
from .geometry import build_capillary_mesh, build_lobule_mesh
from .mesh import AffineScaleMap, TriangleMesh, rescale
from .oracle import ManufacturedCase, coupled_uniform_case, darcy_trig_case, stokes_polynomial_case
from .vtkio import write_tag_sidecar, write_vtk

CSV_COLUMNS = ("level", "triangles", "dofs", "functional", "estimator_max", "interface_share", "solve_iters")


def manufactured_case(cfg: ScenarioConfig) -> ManufacturedCase:
    if cfg.case == "darcy_trig":
        return darcy_trig_case(cfg.material)
    if cfg.case == "stokes_polynomial":
        return stokes_polynomial_case(mu=cfg.material.mu)
    if cfg.case == "coupled_uniform":
        return coupled_uniform_case(params=cfg.material)
    raise ValueError(f"unknown manufactured case {cfg.case!r}")


def initial_mesh(cfg: ScenarioConfig) -> TriangleMesh:
    """The physical-unit starting mesh of a scenario."""
    if cfg.kind == "capillary":
        return build_capillary_mesh(cfg.geometry)
    if cfg.kind == "lobule":
        return build_lobule_mesh(cfg.geometry)
    return manufactured_case(cfg).mesh(cfg.subdivisions)


@dataclass
class ScenarioSetup:
    problem: Problem
    scale_map: Optional[AffineScaleMap]
    physical_mesh: TriangleMesh
    case: Optional[ManufacturedCase] = None


def build_problem(cfg: ScenarioConfig) -> ScenarioSetup:
    """Mesh, coefficients and data, rescaled when ``cfg.target_length`` is set.

    Rescaling is a change of length unit: coordinates, velocities, ``eps``
    scale by ``s``, permeabilities by ``s**2``, pressures are unchanged.
    """
    mesh = initial_mesh(cfg)
    case = None
    if cfg.kind == "manufactured":
        case = manufactured_case(cfg)
        params, forcing, boundary = case.params, case.forcing, case.boundary_data()
    else:
        params, forcing, boundary = cfg.material, None, None
    smap = None
    work = mesh
    if cfg.target_length is not None:
        if case is not None:
            raise ValueError("manufactured scenarios are solved in their own coordinates")
        work, smap = rescale(mesh, cfg.target_length)
        params = params.rescaled(smap.scale)
    weights = cfg.weights if cfg.weight_mode != "auto" else None
    problem = Problem(work, params, weights, forcing, boundary, name=cfg.kind if case is None else case.name)
    return ScenarioSetup(problem, smap, mesh, case)


# -- tables ------------------------------------------------------------------------------

def eoc(functional, dofs) -> list:
    """``log(F_l / F_l+1) / log(sqrt(N_l+1 / N_l))`` between consecutive levels (None for the first)."""
    out = [None]
    for l in range(1, len(functional)):
        F0, F1, N0, N1 = functional[l - 1], functional[l], dofs[l - 1], dofs[l]
        if F0 > 0 and F1 > 0 and N1 != N0:
            out.append(math.log(F0 / F1) / math.log(math.sqrt(N1 / N0)))
        else:
            out.append(None)
    return out


def history_rows(history: AdaptiveHistory) -> list:
    return [{"level": r.level, "triangles": r.n_triangles, "dofs": r.n_dofs,
             "functional": r.functional, "estimator_max": r.estimator_max,
             "interface_share": r.interface_share, "solve_iters": r.report.iterations}
            for r in history.levels]


def _cell(v) -> str:
    if v is None:
        return ""
    return repr(float(v)) if isinstance(v, float) else str(v)


def write_csv(path, rows: list, with_eoc: bool = False) -> Path:
    path = Path(path)
    cols = list(CSV_COLUMNS) + (["eoc"] if with_eoc else [])
    if with_eoc:
        rates = eoc([r["functional"] for r in rows], [r["dofs"] for r in rows])
        rows = [dict(r, eoc=e) for r, e in zip(rows, rates)]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([_cell(r[c]) for c in cols])
    return path


# -- run ----------------------------------------------------------------------------------

def derived_sections(cfg: ScenarioConfig, setup: ScenarioSetup, weights) -> dict:
    """Scale map, nondimensional coefficients and the weights actually used."""
    p = setup.problem.params
    smap = setup.scale_map
    out = {
        "scale_map": {"scale": 1.0 if smap is None else smap.scale,
                      "offset_x": 0.0 if smap is None else float(smap.offset[0]),
                      "offset_y": 0.0 if smap is None else float(smap.offset[1]),
                      "physical_unit": "m" if smap is None else smap.unit,
                      "physical_extent": setup.physical_mesh.extent(),
                      "scaled_extent": setup.problem.mesh.extent()},
        "nondimensional": {"mu": p.mu, "mu_F": p.mu_F, "K": p.K, "K_M": p.K_M, "eps": p.eps,
                           "membrane_resistance": p.membrane_resistance,
                           "hydraulic_length": hydraulic_length(setup.problem.mesh)},
        "weights_used": {t: getattr(weights, t) for t in TERMS},
    }
    return out


def _write_level(outdir: Path, rec: LevelRecord, setup: ScenarioSetup) -> None:
    smap = setup.scale_map
    eta = rec.estimator.attributed()
    cells = to_physical(cell_fields(rec.dofmap, rec.u, eta), smap)
    marked = np.zeros(rec.n_triangles, np.int64)
    marked[sorted(rec.marked)] = 1
    cells["marked"] = marked
    cells["interface_layer"] = rec.mesh.interface_layer().astype(np.int64)
    points = to_physical(vertex_fields(rec.dofmap, rec.u), smap)
    x = rec.mesh.vertices if smap is None else smap.inverse(rec.mesh.vertices)
    stem = f"level_{rec.level:02d}"
    write_vtk(outdir / f"{stem}.vtk", rec.mesh, points, cells,
              title=f"{setup.problem.name} level {rec.level}", coordinates=x)
    write_tag_sidecar(outdir / f"{stem}.tags", rec.mesh)


def level_summary(rec: LevelRecord, smap: Optional[AffineScaleMap]) -> dict:
    fr = flux_report(rec.dofmap, rec.u, smap)
    return {"level": rec.level, "triangles": rec.n_triangles, "dofs": rec.n_dofs,
            "functional": rec.functional, "estimator_total": rec.estimator.total,
            "marked": len(rec.marked), "marked_interface_share": rec.marked_interface_share,
            "interface_share": rec.interface_share, "solve_iters": rec.report.iterations,
            "solve_residual": rec.report.residual, **fr}


@dataclass
class RunResult:
    history: AdaptiveHistory
    setup: ScenarioSetup
    summary: dict
    output_dir: Path


def run_scenario(cfg: ScenarioConfig, output_dir=None) -> RunResult:
    """Adaptive run with all outputs written to ``output_dir`` (default ``cfg.output_dir``).

    Writes ``level_XX.vtk`` / ``level_XX.tags`` per level, ``convergence.csv``,
    ``config.resolved.ini`` and ``summary.json``.  If a level fails, the
    completed levels are still written and the error is re-raised.
    """
    setup = build_problem(cfg)
    outdir = Path(output_dir or cfg.output_dir)
    p = setup.problem
    weights = p.weights or auto_weights(p.mesh, p.params, p.p_ref)
    p.weights = weights
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "config.resolved.ini").write_text(resolved_text(cfg, derived_sections(cfg, setup, weights)))

    levels_out = []

    def on_level(rec):
        _write_level(outdir, rec, setup)
        levels_out.append(level_summary(rec, setup.scale_map))

    error = None
    try:
        history = adaptive_solve(p, cfg.levels, cfg.theta, cfg.uniform, cfg.method, cfg.tol, callback=on_level)
    except AdaptiveSolveError as exc:
        history, error = exc.history, exc
    write_csv(outdir / "convergence.csv", history_rows(history), with_eoc=cfg.kind == "manufactured")
    summary = {"scenario": p.name, "kind": cfg.kind, "theta": cfg.theta, "uniform": cfg.uniform,
               "levels": levels_out, "finest": levels_out[-1] if levels_out else None,
               "scale_map": None if setup.scale_map is None else asdict(setup.scale_map),
               "weights": weights.as_dict(), "completed": error is None}
    if error is not None:
        summary["error"] = str(error)
    (outdir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True, default=_json) + "\n")
    if error is not None:
        raise error
    return RunResult(history, setup, summary, outdir)


def _json(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, tuple):
        return list(v)
    raise TypeError(f"not serializable: {type(v).__name__}")
