import numpy as np
import pytest

from fracobs import (
    IntervalMesh,
    build_system,
    fractional_laplacian_kernel,
    scaled_fractional_kernel,
)


@pytest.fixture
def mesh16():
    return IntervalMesh(-1.0, 1.0, 16)


def make_system(n=16, s=0.6, alpha=None, f=lambda x: 1.0, lo=-1.0, hi=1.0):
    """Small assembled system on (lo, hi); alpha=None -> reference kernel."""
    mesh = IntervalMesh(lo, hi, n)
    if alpha is None:
        kernel = fractional_laplacian_kernel(s)
    else:
        kernel = scaled_fractional_kernel(s, alpha)
    return build_system(mesh, kernel, f_sharp=f)


@pytest.fixture
def system16():
    return make_system()
