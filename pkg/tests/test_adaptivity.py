import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hepatic_lsfem.adaptivity import (AdaptiveSolveError, Problem, adaptive_solve, dorfler_mark,
                                      solve_level)
from hepatic_lsfem.assembly import EstimatorMap, LsTermWeights, MaterialParams, auto_weights
from hepatic_lsfem.geometry import unit_square_mesh
from hepatic_lsfem.mesh import FLUID, POROUS, BoundaryTag
from hepatic_lsfem.oracle import brute_force_min_marking, darcy_trig_case
from hepatic_lsfem.scenario import eoc
from hepatic_lsfem.spaces import BoundaryData


def coupled_problem():
    tags = {"top": {FLUID: (BoundaryTag.INFLOW_F, 1.0)}, "left": {FLUID: (BoundaryTag.NEUMANN_F, None)},
            "right": {FLUID: (BoundaryTag.OUTFLOW_F, -1.0)}, "bottom": {POROUS: (BoundaryTag.DIRICHLET_P, -0.5)}}
    return Problem(unit_square_mesh(4, fluid_above=0.5, tags=tags), MaterialParams.unit(), name="coupled")


class TestDorfler:
    def test_example(self):
        assert dorfler_mark(np.array([4.0, 1.0, 0.5, 0.5]), 0.6) == {0}

    def test_subnormal_total(self):
        eta = np.array([5e-324])
        assert dorfler_mark(eta, 0.5) == {0}
        assert brute_force_min_marking(eta, 0.5) == {frozenset({0})}

    def test_theta_one_marks_all_positive(self):
        eta = np.array([0.1, 0.0, 0.3, 1e-9, 0.2])
        assert dorfler_mark(eta, 1.0) == {0, 2, 3, 4}

    def test_zero_estimator(self):
        assert dorfler_mark(np.zeros(5), 0.5) == set()

    def test_ties_go_to_lower_index(self):
        assert dorfler_mark(np.array([1.0, 1.0, 1.0, 1.0]), 0.5) == {0, 1}

    @pytest.mark.parametrize("theta", [0.0, -0.1, 1.5])
    def test_bad_theta(self, theta):
        with pytest.raises(ValueError):
            dorfler_mark(np.ones(3), theta)

    def test_negative_entries(self):
        with pytest.raises(ValueError):
            dorfler_mark(np.array([1.0, -1.0]), 0.5)

    def test_interface_contributions_go_to_fluid_side(self):
        est = EstimatorMap(np.array([1.0, 1.0, 0.1]), np.array([5.0]), np.array([7]), np.array([2]))
        assert dorfler_mark(est, 0.5) == {2}

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.floats(0, 10, allow_nan=False), min_size=1, max_size=12),
           st.floats(0.01, 1.0))
    def test_matches_brute_force(self, eta, theta):
        eta = np.array(eta)
        got = dorfler_mark(eta, theta)
        best = brute_force_min_marking(eta, theta)
        if not best:
            assert got == set()
            return
        assert len(got) == len(next(iter(best)))
        assert eta[sorted(got)].sum() >= theta * eta.sum() * (1 - 1e-12)


class TestAdaptiveSolve:
    def test_single_level_is_plain_solve(self):
        prob = coupled_problem()
        hist = adaptive_solve(prob, levels=1)
        w = auto_weights(prob.mesh, prob.params)
        _, report, F, _ = solve_level(prob, prob.mesh, w)
        assert len(hist) == 1
        assert np.array_equal(hist.finest.u, report.x)
        assert hist.finest.functional == F

    def test_monotone_under_uniform_refinement(self):
        hist = adaptive_solve(coupled_problem(), levels=4, uniform=True)
        F = hist.column("functional")
        assert np.all(np.diff(hist.column("n_triangles")) > 0)
        assert np.all(F >= 0)
        assert np.all(F[1:] <= F[:-1] * (1 + 1e-12))

    def test_monotone_under_adaptive_refinement(self):
        hist = adaptive_solve(coupled_problem(), levels=4, theta=0.5)
        F = hist.column("functional")
        assert np.all(F[1:] <= F[:-1] * (1 + 1e-12))

    def test_estimator_sums_to_functional(self):
        hist = adaptive_solve(coupled_problem(), levels=3, theta=0.4)
        for rec in hist.levels:
            assert rec.estimator.total == pytest.approx(rec.functional, rel=1e-10)
            assert rec.estimator.attributed().sum() == pytest.approx(rec.functional, rel=1e-10)

    def test_weights_fixed_on_initial_mesh(self):
        prob = coupled_problem()
        hist = adaptive_solve(prob, levels=2)
        assert hist.weights == auto_weights(prob.mesh, prob.params)

    def test_darcy_functional_rate(self):
        case = darcy_trig_case()
        prob = Problem(case.mesh(4), case.params, LsTermWeights(), case.forcing, case.boundary_data())
        hist = adaptive_solve(prob, levels=4, uniform=True)
        rates = eoc(list(hist.column("functional")), list(hist.column("n_dofs")))
        assert rates[-1] == pytest.approx(2.0, abs=0.3)

    def test_callback_sees_every_level(self):
        seen = []
        adaptive_solve(coupled_problem(), levels=3, callback=lambda r: seen.append(r.level))
        assert seen == [0, 1, 2]

    def test_failure_keeps_partial_history(self):
        class FailsOnThirdLevel(BoundaryData):
            calls = 0

            def pinned_velocity(self, x):
                self.calls += 1
                if self.calls == 3:
                    raise RuntimeError("boundary data unavailable")
                return None

        prob = coupled_problem()
        prob.boundary = FailsOnThirdLevel()
        seen = []
        with pytest.raises(AdaptiveSolveError, match="level 2") as err:
            adaptive_solve(prob, levels=4, callback=lambda r: seen.append(r.level))
        assert [r.level for r in err.value.history.levels] == [0, 1]
        assert seen == [0, 1]

    def test_singular_system_fails_first_level(self):
        prob = coupled_problem()
        # without the porous terms the tissue unknowns are not controlled
        prob.weights = LsTermWeights(divp=0.0, darcy=0.0)
        with pytest.raises(AdaptiveSolveError) as err:
            adaptive_solve(prob, levels=3)
        assert len(err.value.history) == 0

    def test_invalid_arguments(self):
        with pytest.raises(ValueError):
            adaptive_solve(coupled_problem(), levels=0)
        with pytest.raises(ValueError):
            adaptive_solve(coupled_problem(), theta=0.0)


def test_frozen_dirichlet_trace_is_refinement_invariant():
    from hepatic_lsfem.mesh import refine_uniform
    from hepatic_lsfem.spaces import FrozenDirichletData

    prob = coupled_problem()
    data = FrozenDirichletData(prob.mesh)
    # corner of the -0.5 bottom edge and the 0 side edge takes the mean
    assert data.pressure(np.array([[0.0, 0.0]]), 0.0)[0] == pytest.approx(-0.25)
    assert data.pressure(np.array([[0.5, 0.0]]), 0.0)[0] == pytest.approx(-0.5)
    # a new vertex between the corner and its side neighbour interpolates linearly
    assert data.pressure(np.array([[0.0, 0.125]]), 0.0)[0] == pytest.approx(-0.125)
    fine = refine_uniform(prob.mesh, 2)
    b = fine.edges_with_tag(BoundaryTag.DIRICHLET_P)
    verts = np.unique(fine.edges[b])
    vals = data.pressure(fine.vertices[verts], np.nan)
    assert np.all(np.isfinite(vals))
