from math import factorial

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hepatic_lsfem.assembly import local_coefficients
from hepatic_lsfem.geometry import unit_square_mesh
from hepatic_lsfem.mesh import FLUID, POROUS, BoundaryTag, TriangleMesh
from hepatic_lsfem.oracle import oracle_norm
from hepatic_lsfem.quadrature import edge_rule, triangle_rule
from hepatic_lsfem.spaces import (ConstraintError, EssentialConstraintSet, UnsupportedDegreeError,
                                  affine_maps, build_constraints, build_product_space, eval_fluid,
                                  eval_porous, lagrange_basis_eval, norm_eval, rt_basis, rt_basis_eval)

from conftest import two_triangle_mesh


def single_triangle(sub):
    v = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    tag = (BoundaryTag.INFLOW_F, 0.0) if sub == FLUID else (BoundaryTag.DIRICHLET_P, 0.0)
    return TriangleMesh(v, np.array([[0, 1, 2]]), np.array([sub]),
                        {(0, 1): tag, (1, 2): tag, (0, 2): tag})


def random_triangle(rng):
    while True:
        P = rng.uniform(-1, 1, (3, 2))
        d1, d2 = P[1] - P[0], P[2] - P[0]
        det = d1[0] * d2[1] - d1[1] * d2[0]
        if det > 0.1:
            return P
        if det < -0.1:
            return P[[0, 2, 1]]


def test_quadrature_rules():
    xi, w = triangle_rule()
    assert w.sum() == pytest.approx(1.0)
    # degree-4 exactness: 2 * int x^a y^b over the reference triangle
    for a in range(5):
        for b in range(5 - a):
            exact = 2 * factorial(a) * factorial(b) / factorial(a + b + 2)
            assert w @ (xi[:, 0] ** a * xi[:, 1] ** b) == pytest.approx(exact, rel=1e-12)
    s, we = edge_rule()
    for k in range(6):
        assert we @ s**k == pytest.approx(1 / (k + 1), rel=1e-12)


class TestDofCounts:
    def test_single_fluid_triangle(self):
        dm = build_product_space(single_triangle(FLUID))
        assert [dm.field_size(f) for f in ("sigma1", "sigma2", "vf", "vp", "pF")] == [3, 3, 6, 0, 0]

    def test_single_porous_triangle(self):
        dm = build_product_space(single_triangle(POROUS))
        assert [dm.field_size(f) for f in ("sigma1", "sigma2", "vf", "vp", "pF")] == [0, 0, 0, 3, 3]

    def test_capillary_topology_count(self, capillary_mesh):
        m = capillary_mesh
        counts = {}
        for sub in (FLUID, POROUS):
            verts, edges = set(), set()
            for tri in m.triangles[m.subdomain == sub]:
                for i in range(3):
                    verts.add(int(tri[i]))
                    edges.add(tuple(sorted((int(tri[i]), int(tri[(i + 1) % 3])))))
            counts[sub] = (len(verts), len(edges), int(np.sum(m.subdomain == sub)))
        (vf, ef, tf), (vp, ep, tp) = counts[FLUID], counts[POROUS]
        # the channel is one disc, the tissue two slabs: V - E + T = components
        assert vf - ef + tf == 1 and vp - ep + tp == 2
        dm = build_product_space(m)
        assert dm.n_dofs == 2 * ef + 2 * vf + ep + vp

    def test_field_of_and_split(self):
        dm = build_product_space(two_triangle_mesh())
        u = np.arange(dm.n_dofs, dtype=float)
        parts = dm.split(u)
        for name, arr in parts.items():
            for d in arr.astype(int):
                assert dm.field_of(d) == name

    def test_higher_degree_rejected(self):
        with pytest.raises(UnsupportedDegreeError, match="k=2"):
            build_product_space(two_triangle_mesh(), k=2)


class TestRaviartThomas:
    def test_sum_of_basis_functions(self, rng):
        for _ in range(5):
            P = random_triangle(rng)
            area = 0.5 * abs(np.cross(np.append(P[1] - P[0], 0), np.append(P[2] - P[0], 0))[2])
            xi = rng.dirichlet(np.ones(3))[1:]
            val, _ = rt_basis_eval(P, xi)
            x = P[0] + xi[0] * (P[1] - P[0]) + xi[1] * (P[2] - P[0])
            assert np.allclose(val.sum(axis=0), (3 * x - P.sum(axis=0)) / (2 * area), atol=1e-13)
        val, _ = rt_basis_eval(np.array([[0.0, 0], [1, 0], [0, 1]]), np.array([1 / 3, 1 / 3]))
        assert np.allclose(val.sum(axis=0), 0.0, atol=1e-15)

    def test_divergence_constant(self, rng):
        P = random_triangle(rng)
        area = 0.5 * np.linalg.det(np.array([P[1] - P[0], P[2] - P[0]]).T)
        divs = [rt_basis_eval(P, rng.dirichlet(np.ones(3))[1:])[1] for _ in range(3)]
        for d in divs:
            assert np.allclose(d, 1.0 / area)
        # flux form of the same statement: |e_i| times mean normal trace over the area
        assert np.allclose(divs[0] * area, 1.0)

    def test_integrated_normal_trace_is_kronecker(self, rng):
        P = random_triangle(rng)
        s, w = edge_rule()
        _, J, det, Jinv = affine_maps(P[None])
        out = np.zeros((3, 3))
        for j in range(3):
            a, b = P[(j + 1) % 3], P[(j + 2) % 3]
            t = b - a
            n = np.array([t[1], -t[0]])  # outward for counter-clockwise triangles
            for sk, wk in zip(s, w):
                x = a + sk * t
                xi = Jinv[0] @ (x - P[0])
                val, _ = rt_basis_eval(P, xi)
                out[:, j] += wk * (val @ n)  # |e| cancels against the unit normal
        assert np.allclose(out, np.eye(3), atol=1e-13)

    def test_piola_divergence(self, rng):
        P = random_triangle(rng)
        _, J, det, _ = affine_maps(P[None])
        xi, _ = triangle_rule()
        _, div = rt_basis(J, det, xi)
        assert np.allclose(div, 2.0 / det[:, None])  # reference divergence is 2

    def test_normal_trace_continuity(self, rng):
        m = unit_square_mesh(3, fluid_above=0.5)
        dm = build_product_space(m)
        u = rng.standard_normal(dm.n_dofs)
        inner = np.flatnonzero((m.edge_count == 2)
                               & (m.subdomain[m.edge_tris[:, 0]] == m.subdomain[m.edge_tris[:, 1]]))
        n = m.edge_normals()
        mid = m.edge_midpoints()
        checked = 0
        for e in inner:
            traces = []
            for t in m.edge_tris[e]:
                P = m.vertices[m.triangles[t]]
                _, _, _, Jinv = affine_maps(P[None])
                xi = (Jinv[0] @ (mid[e] - P[0]))[None]
                if m.subdomain[t] == FLUID:
                    k = int(np.searchsorted(dm.fluid_tris, t))
                    sig, _, _ = eval_fluid(dm, u, xi, [k])
                    traces.append(sig[0, 0] @ n[e])
                else:
                    k = int(np.searchsorted(dm.porous_tris, t))
                    vp = eval_porous(dm, u, xi, [k])[0]
                    traces.append(vp[0, 0] @ n[e])
            assert np.allclose(traces[0], traces[1], atol=1e-12)
            checked += 1
        assert checked > 10


class TestLagrange:
    def test_vertex_values_identity(self, rng):
        P = random_triangle(rng)
        ref = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        vals = np.array([lagrange_basis_eval(P, x)[0] for x in ref])
        assert np.allclose(vals, np.eye(3))

    def test_partition_of_unity(self, rng):
        P = random_triangle(rng)
        for _ in range(5):
            val, grad = lagrange_basis_eval(P, rng.dirichlet(np.ones(3))[1:])
            assert val.sum() == pytest.approx(1.0)
            assert np.allclose(grad.sum(axis=0), 0.0, atol=1e-13)

    def test_gradient_by_finite_differences(self, rng):
        P = random_triangle(rng)
        _, _, _, Jinv = affine_maps(P[None])
        c = P.mean(axis=0)
        h = 1e-6

        def value(x):
            return lagrange_basis_eval(P, Jinv[0] @ (x - P[0]))[0]

        _, grad = lagrange_basis_eval(P, np.array([1 / 3, 1 / 3]))
        fd = np.stack([(value(c + h * e) - value(c - h * e)) / (2 * h) for e in np.eye(2)], axis=1)
        assert np.allclose(fd, grad, atol=1e-8)


class TestConstraints:
    def test_horizontal_interface_fixes_vx(self):
        m = unit_square_mesh(4, fluid_above=0.5, tags={s: {FLUID: (BoundaryTag.NEUMANN_F, None)}
                                                      for s in ("left", "right", "top")})
        dm = build_product_space(m)
        cs = build_constraints(m, dm)
        T, g = cs.reduction()
        T = T.tocsr()
        for v in m.interface_vertices():
            dx, dy = dm.vf_dof(v, 0), dm.vf_dof(v, 1)
            assert T[dx].nnz == 0 and g[dx] == 0.0
            assert T[dy].nnz == 1 and abs(T[dy].data[0]) == pytest.approx(1.0)

    def test_inlet_traction(self, capillary_mesh):
        m = capillary_mesh
        dm = build_product_space(m)
        cs = build_constraints(m, dm)
        u = cs.expand(np.zeros(cs.n_free))
        L = m.edge_lengths()
        for e in m.edges_with_tag(BoundaryTag.INFLOW_F):
            t = m.edge_tris[e, 0]
            i = list(m.tri_edges[t]).index(e)
            c = local_coefficients(dm, u, t)
            # outward-oriented flux over |e| is the normal trace sigma n
            sn = np.array([c[i], c[3 + i]]) / L[e]
            assert np.allclose(sn, [400.0, 0.0], rtol=1e-12, atol=1e-9)

    def test_dirichlet_pressure_and_neumann_flux(self):
        m = unit_square_mesh(2, sub=POROUS, tags={"top": {POROUS: (BoundaryTag.NEUMANN_P, None)},
                                                   "bottom": {POROUS: (BoundaryTag.DIRICHLET_P, 3.0)}})
        dm = build_product_space(m)
        cs = build_constraints(m, dm)
        for e in m.edges_with_tag(BoundaryTag.NEUMANN_P):
            assert cs.fixed[dm.vp_dof(e)] == 0.0
        # corners are shared with the side edges (pressure 0), so take inner bottom vertices
        bottom = np.flatnonzero(np.isclose(m.vertices[:, 1], 0.0) & (m.vertices[:, 0] > 0)
                                & (m.vertices[:, 0] < 1))
        assert {cs.fixed[dm.pF_dof(v)] for v in bottom} == {3.0}

    def test_interior_vertex_is_free(self):
        m = unit_square_mesh(4, fluid_above=0.5)
        dm = build_product_space(m)
        cs = build_constraints(m, dm)
        interior = [v for v in range(m.n_vertices)
                    if 0 < m.vertices[v, 0] < 1 and 0 < m.vertices[v, 1] < 1
                    and not np.isclose(m.vertices[v, 1], 0.5)]
        involved = set(cs.fixed)
        for dx, dy, *_ in cs.couplings:
            involved |= {dx, dy}
        assert interior
        for v in interior:
            dofs = ([dm.vf_dof(v, 0), dm.vf_dof(v, 1)] if m.vertices[v, 1] > 0.5 else [dm.pF_dof(v)])
            assert not involved & set(dofs)

    def test_apply_is_idempotent(self, rng, capillary_mesh):
        dm = build_product_space(capillary_mesh)
        cs = build_constraints(capillary_mesh, dm)
        u = cs.apply(rng.standard_normal(dm.n_dofs))
        assert np.allclose(cs.apply(u), u, rtol=0, atol=1e-12 * np.abs(u).max())

    def test_conflicting_fix(self):
        cs = EssentialConstraintSet(4)
        cs.fix(0, 1.0)
        cs.fix(0, 1.0)
        with pytest.raises(ConstraintError):
            cs.fix(0, 2.0)

    def test_conflicting_couplings(self):
        cs = EssentialConstraintSet(2)
        cs.couple(0, 1, (1.0, 0.0), 0.0)
        cs.couple(0, 1, (1.0, 0.0), 1.0)
        with pytest.raises(ConstraintError):
            cs.reduction()

    def test_cache_invalidated_by_fix(self):
        cs = EssentialConstraintSet(3)
        assert cs.n_free == 3
        cs.fix(1, 2.0)
        assert cs.n_free == 2
        cs.couple(0, 2, (1.0, 1.0))
        assert cs.n_free == 1

    @settings(max_examples=30, deadline=None)
    @given(st.floats(0, 2 * np.pi), st.floats(-3, 3))
    def test_coupling_holds_after_expand(self, angle, c):
        cs = EssentialConstraintSet(2)
        a = (np.cos(angle), np.sin(angle))
        cs.couple(0, 1, a, c)
        u = cs.expand(np.array([0.7]))
        assert a[0] * u[0] + a[1] * u[1] == pytest.approx(c, abs=1e-12)


class TestNorms:
    def test_zero(self):
        dm = build_product_space(two_triangle_mesh())
        rep = norm_eval(dm, np.zeros(dm.n_dofs))
        assert all(v == 0.0 for v in rep.values())

    def test_constant_velocity(self):
        dm = build_product_space(unit_square_mesh(3, sub=FLUID))
        u = np.zeros(dm.n_dofs)
        u[dm.offsets["vf"][0]:dm.offsets["vf"][1]:2] = 1.0
        rep = norm_eval(dm, u)
        assert rep["combined"] == pytest.approx(1.0, rel=1e-14)
        assert rep["vf_1"] == pytest.approx(1.0, rel=1e-14)

    def test_combined_is_sum_of_squares(self, rng):
        dm = build_product_space(unit_square_mesh(2, fluid_above=0.5))
        rep = norm_eval(dm, rng.standard_normal(dm.n_dofs))
        parts = sum(rep[k] ** 2 for k in ("sigma_div", "vf_1", "vp_div", "pF_1"))
        assert rep["combined"] ** 2 == pytest.approx(parts, rel=1e-14)

    @pytest.mark.parametrize("name", ["fluid_only", "porous_only", "coupled", "two_triangles"])
    def test_matches_quadrature_oracle(self, rng, tiny_meshes, name):
        dm = build_product_space(tiny_meshes[name])
        for _ in range(3):
            u = rng.standard_normal(dm.n_dofs)
            assert norm_eval(dm, u)["combined"] == pytest.approx(oracle_norm(dm, u), rel=1e-10)
