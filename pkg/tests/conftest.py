import numpy as np
import pytest

from hepatic_lsfem.geometry import CapillaryGeometryConfig, build_capillary_mesh, unit_square_mesh
from hepatic_lsfem.mesh import FLUID, POROUS, BoundaryTag, TriangleMesh


def two_triangle_mesh(sub_lower=FLUID, sub_upper=POROUS, pressure=0.0):
    """Unit square cut along the diagonal (0,0)-(1,1)."""
    vertices = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    triangles = np.array([[0, 1, 2], [0, 2, 3]])
    sub = np.array([sub_lower, sub_upper])

    def btag(s):
        return (BoundaryTag.INFLOW_F, pressure) if s == FLUID else (BoundaryTag.DIRICHLET_P, pressure)

    tags = {(0, 1): btag(sub_lower), (1, 2): btag(sub_lower),
            (2, 3): btag(sub_upper), (0, 3): btag(sub_upper)}
    if sub_lower != sub_upper:
        tags[(0, 2)] = (BoundaryTag.INTERFACE, None)
    return TriangleMesh(vertices, triangles, sub, tags)


@pytest.fixture(scope="session")
def capillary_mesh():
    return build_capillary_mesh(CapillaryGeometryConfig())


@pytest.fixture
def tiny_meshes():
    """All tiny fixtures with at most 8 triangles."""
    return {
        "fluid_only": unit_square_mesh(2, sub=FLUID),
        "porous_only": unit_square_mesh(2, sub=POROUS),
        "coupled": unit_square_mesh(2, fluid_above=0.5),
        "two_triangles": two_triangle_mesh(),
    }


@pytest.fixture
def rng():
    return np.random.default_rng(20241016)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
