import pytest
from hypothesis import settings

from fracheat.heat_kernel import KernelDecomposition

settings.register_profile("fracheat", deadline=None, max_examples=40)
settings.load_profile("fracheat")


@pytest.fixture(scope="session")
def kd():
    return KernelDecomposition()
