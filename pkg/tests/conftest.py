import numpy as np
import pytest

from rangeseg import kernels


@pytest.fixture(params=["numpy", "numba"])
def backend(request):
    """Run the parametrized test under each kernel backend."""
    name = request.param
    if name not in kernels.available_backends():
        pytest.skip(f"backend {name!r} not installed")
    previous = kernels.get_backend_name()
    kernels.set_backend(name)
    yield name
    kernels.set_backend(previous)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
