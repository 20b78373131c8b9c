import numpy as np
import pytest

from flockfem import build_kernel_table, build_mesh, constant_kernel, rational_sqrt_kernel


@pytest.fixture(scope="session")
def mesh8():
    return build_mesh(8, 6)


@pytest.fixture(scope="session")
def mesh16():
    return build_mesh(16, 6)


@pytest.fixture(scope="session")
def mesh100():
    return build_mesh(100, 6)


@pytest.fixture(scope="session")
def const_table8(mesh8):
    return build_kernel_table(mesh8, constant_kernel())


@pytest.fixture(scope="session")
def const_table16(mesh16):
    return build_kernel_table(mesh16, constant_kernel())


@pytest.fixture(scope="session")
def rat_table16(mesh16):
    return build_kernel_table(mesh16, rational_sqrt_kernel())


@pytest.fixture(scope="session")
def rat_table100(mesh100):
    return build_kernel_table(mesh100, rational_sqrt_kernel())


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
