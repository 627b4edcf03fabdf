import numpy as np
import pytest

from monoelast import assembly, model


@pytest.fixture(scope="session")
def mesh3():
    return model.build_mesh(1.0, 3)


@pytest.fixture(scope="session")
def layout3(mesh3):
    return model.partition_boundary(mesh3, ("z-",), (1, 1))


@pytest.fixture(scope="session")
def grid3(mesh3):
    return model.voxel_grid(mesh3, 3)


@pytest.fixture(scope="session")
def loads3(mesh3, layout3):
    return assembly.assemble_loads(mesh3, layout3, "normal")


@pytest.fixture(scope="session")
def background():
    return (6.0e5, 6.0e3, 3.0e3)


@pytest.fixture(scope="session")
def bg_field3(grid3, background):
    return model.make_material_field(background, (), grid3)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240817)
