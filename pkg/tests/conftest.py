import numpy as np
import pytest

from ntdlab.assembly import Potential, build_gamma_patch
from ntdlab.mesh import build_unit_square_mesh


@pytest.fixture(scope="session")
def mesh4():
    return build_unit_square_mesh(4)


@pytest.fixture(scope="session")
def mesh8():
    return build_unit_square_mesh(8)


@pytest.fixture(scope="session")
def mesh16():
    return build_unit_square_mesh(16)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_potential(mesh, rng, low=0.5, high=5.0):
    return Potential(rng.uniform(low, high, mesh.n_triangles))


@pytest.fixture(scope="session")
def bottom8(mesh8):
    return build_gamma_patch(mesh8, "bottom")
