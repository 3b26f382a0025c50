import pytest

from dynens import kernels


@pytest.fixture
def numpy_backend():
    """Pin the pure-numpy kernels for tests that freeze bit-exact values."""
    previous = kernels.get_backend()
    kernels.set_backend("numpy")
    yield
    kernels.set_backend(previous)
