"""Adaptive refine-solve loop driven by the local functional contributions."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .assembly import (EstimatorMap, Forcing, LsTermWeights, MaterialParams, assemble,
                       auto_weights, evaluate_functional)
from .mesh import TriangleMesh, bisect_refine
from .solver import SolveReport, solve
from .spaces import (BoundaryData, FrozenDirichletData, ProductDofMap, build_constraints,
                     build_product_space)


def dorfler_mark(estimator, theta: float = 0.5) -> set:
    """Smallest set of triangles carrying at least ``theta`` of the total estimate.

    ``estimator`` is an :class:`EstimatorMap` (interface contributions are
    moved to the fluid-side triangle first) or a plain array of nonnegative
    values.  Ties are broken by the lower index so the result is deterministic.
    """
    if not 0 < theta <= 1:
        raise ValueError(f"theta must lie in (0, 1], got {theta}")
    eta = estimator.attributed() if isinstance(estimator, EstimatorMap) else np.asarray(estimator, float)
    if np.any(eta < 0) or not np.all(np.isfinite(eta)):
        raise ValueError("estimator values must be finite and nonnegative")
    total = eta.sum()
    if total == 0:
        return set()
    order = np.argsort(-eta, kind="stable")
    csum = np.cumsum(eta[order])
    # relative slack so that theta = 1 is not defeated by summation order
    k = int(np.searchsorted(csum, theta * total * (1 - 1e-14))) + 1
    chosen = order[:min(k, len(eta))]
    return {int(t) for t in chosen if eta[t] > 0}


@dataclass
class Problem:
    """Everything needed to solve on one mesh family.

    ``weights=None`` selects :func:`auto_weights`, computed once on the
    initial mesh so the functional stays fixed across levels.
    """

    mesh: TriangleMesh
    params: MaterialParams
    weights: Optional[LsTermWeights] = None
    forcing: Optional[Forcing] = None
    boundary: Optional[BoundaryData] = None
    p_ref: Optional[float] = None
    name: str = "problem"


@dataclass
class LevelRecord:
    level: int
    mesh: TriangleMesh
    dofmap: ProductDofMap
    u: np.ndarray
    functional: float
    estimator: EstimatorMap
    marked: set
    report: SolveReport

    @property
    def n_triangles(self) -> int:
        return self.mesh.n_triangles

    @property
    def n_dofs(self) -> int:
        return self.dofmap.n_dofs

    @property
    def estimator_max(self) -> float:
        return float(self.estimator.attributed().max())

    @property
    def interface_share(self) -> float:
        """Fraction of the mesh's triangles touching the interface."""
        return float(self.mesh.interface_layer().mean())

    @property
    def marked_interface_share(self) -> float:
        """Fraction of the marked triangles touching the interface."""
        if not self.marked:
            return 0.0
        layer = self.mesh.interface_layer()
        return float(layer[sorted(self.marked)].mean())

    @property
    def estimator_interface_share(self) -> float:
        """Fraction of the estimate carried by triangles touching the interface."""
        eta = self.estimator.attributed()
        s = eta.sum()
        return float(eta[self.mesh.interface_layer()].sum() / s) if s > 0 else 0.0


@dataclass
class AdaptiveHistory:
    problem: Problem
    weights: LsTermWeights
    theta: float
    uniform: bool
    levels: list = field(default_factory=list)

    def __len__(self):
        return len(self.levels)

    def __getitem__(self, i) -> LevelRecord:
        return self.levels[i]

    @property
    def finest(self) -> LevelRecord:
        return self.levels[-1]

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.levels])


class AdaptiveSolveError(RuntimeError):
    """A level failed; ``history`` holds the levels completed before it."""

    def __init__(self, message, history: AdaptiveHistory):
        super().__init__(message)
        self.history = history


def solve_level(problem: Problem, mesh: TriangleMesh, weights: LsTermWeights,
                method: str = "auto", tol: float = 1e-10, boundary: Optional[BoundaryData] = None):
    """One build-constrain-assemble-solve-estimate pass.

    ``boundary`` overrides ``problem.boundary`` (the adaptive loop passes the
    Dirichlet trace frozen on the initial mesh).
    """
    dofmap = build_product_space(mesh)
    cons = build_constraints(mesh, dofmap, boundary or problem.boundary)
    system = assemble(dofmap, problem.params, weights, problem.forcing, cons)
    report = solve(system, tol=tol, method=method)
    F, est = evaluate_functional(dofmap, problem.params, weights, report.x, problem.forcing)
    return dofmap, report, F, est


def adaptive_solve(problem: Problem, levels: int = 5, theta: float = 0.5, uniform: bool = False,
                   method: str = "auto", tol: float = 1e-10,
                   callback: Optional[Callable[[LevelRecord], None]] = None) -> AdaptiveHistory:
    """Run ``levels`` passes of solve, estimate, mark and bisect.

    With ``uniform=True`` every triangle is marked, which with newest-vertex
    bisection halves the area of each triangle per level.  Unless the problem
    brings its own boundary data, porous Dirichlet pressures are frozen as
    their trace on the initial mesh, so every level minimizes over a space
    containing the previous one.
    """
    if levels < 1:
        raise ValueError("levels must be at least 1")
    if not 0 < theta <= 1:
        raise ValueError(f"theta must lie in (0, 1], got {theta}")
    weights = problem.weights or auto_weights(problem.mesh, problem.params, problem.p_ref)
    history = AdaptiveHistory(problem, weights, theta, uniform)
    mesh = problem.mesh
    boundary = problem.boundary or FrozenDirichletData(mesh)
    for level in range(levels):
        try:
            dofmap, report, F, est = solve_level(problem, mesh, weights, method, tol, boundary)
        except Exception as exc:
            raise AdaptiveSolveError(f"level {level} failed: {exc}", history) from exc
        marked = set(range(mesh.n_triangles)) if uniform else dorfler_mark(est, theta)
        rec = LevelRecord(level, mesh, dofmap, report.x, F, est, marked, report)
        history.levels.append(rec)
        if callback is not None:
            callback(rec)
        if level + 1 < levels:
            mesh = bisect_refine(mesh, marked)
    return history
