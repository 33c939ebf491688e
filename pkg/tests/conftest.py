import numpy as np
import pytest

from stokesbiot.mesh import build_structured


@pytest.fixture(scope="session")
def fluid_mesh8():
    return build_structured((0.0, 1.0, 0.0, 1.0), 8, 8, "fluid",
                            {"left": "wall", "right": "wall", "top": "wall", "bottom": "interface"})


@pytest.fixture(scope="session")
def poro_mesh8():
    return build_structured((0.0, 1.0, -1.0, 0.0), 8, 8, "poro",
                            {"left": "outer", "right": "outer", "bottom": "outer", "top": "interface"})


@pytest.fixture(scope="session")
def single_cell_mesh():
    """One reference triangle, all edges tagged boundary."""
    from stokesbiot.mesh import Mesh2D

    mesh = Mesh2D(
        nodes=np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]),
        tris=np.array([[0, 1, 2]]),
        tri_tags=np.array(["poro"]),
        bedges=np.array([[0, 1], [1, 2], [2, 0]]),
        bedge_tags=np.array(["bottom", "hyp", "left"]),
    )
    mesh.validate()
    return mesh


@pytest.fixture(scope="session")
def affine_cell_mesh():
    """One skewed triangle for affine-cell oracle checks."""
    from stokesbiot.mesh import Mesh2D

    mesh = Mesh2D(
        nodes=np.array([[0.2, -0.1], [0.9, 0.15], [0.4, 0.8]]),
        tris=np.array([[0, 1, 2]]),
        tri_tags=np.array(["poro"]),
        bedges=np.array([[0, 1], [1, 2], [2, 0]]),
        bedge_tags=np.array(["bottom", "hyp", "left"]),
    )
    mesh.validate()
    return mesh
