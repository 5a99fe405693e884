import numpy as np
import pytest

from fracobs import IntervalMesh, PiecewiseLinearFn, ValidationError, lumped_mass


def test_node_layout():
    mesh = IntervalMesh(-1.0, 1.0, 7)
    assert mesh.n == 7
    assert mesh.n_elements == 8
    assert abs(mesh.h - 0.25) < 1e-15
    assert np.allclose(mesh.nodes, np.linspace(-0.75, 0.75, 7))
    assert np.allclose(mesh.full_nodes, np.linspace(-1.0, 1.0, 9))


def test_element_endpoints():
    mesh = IntervalMesh(0.0, 1.0, 3)
    a, b = mesh.element(0)
    assert (a, b) == (0.0, 0.25)
    a, b = mesh.element(3)
    assert abs(a - 0.75) < 1e-15 and abs(b - 1.0) < 1e-15


def test_bad_construction():
    with pytest.raises(ValidationError):
        IntervalMesh(1.0, -1.0, 4)
    with pytest.raises(ValidationError):
        IntervalMesh(0.0, 1.0, 0)


def test_interpolation_is_nodal():
    mesh = IntervalMesh(-1.0, 1.0, 9)
    u = mesh.interpolate(lambda x: np.sin(3 * x))
    assert np.allclose(u.values, np.sin(3 * mesh.nodes))
    # boundary values are pinned to zero by construction
    assert u(mesh.x_lo) == 0.0 and u(mesh.x_hi) == 0.0


def test_evaluation_linear_between_nodes_zero_outside():
    mesh = IntervalMesh(0.0, 1.0, 3)
    u = PiecewiseLinearFn(mesh, np.array([1.0, -2.0, 0.5]))
    # midpoint between nodes 0 and 1
    assert abs(u(0.375) - (1.0 - 2.0) / 2) < 1e-15
    assert u(-0.2) == 0.0 and u(1.3) == 0.0
    # at a node
    assert u(0.5) == -2.0


def test_evaluation_vectorized():
    mesh = IntervalMesh(0.0, 1.0, 5)
    u = mesh.interpolate(lambda x: x * (1 - x))
    xs = np.linspace(-0.5, 1.5, 201)
    vals = u(xs)
    single = np.array([u(x) for x in xs])
    assert np.array_equal(vals, single)


def test_arithmetic():
    mesh = IntervalMesh(0.0, 1.0, 4)
    u = mesh.interpolate(lambda x: x)
    v = mesh.interpolate(lambda x: 1 - x)
    w = u + v
    assert np.allclose(w.values, 1.0)
    assert np.allclose((u - u).values, 0.0)
    assert np.allclose((2.0 * u).values, 2 * u.values)
    other = IntervalMesh(0.0, 2.0, 4).interpolate(lambda x: x)
    with pytest.raises(ValidationError):
        u + other


def test_values_must_be_finite_and_sized():
    mesh = IntervalMesh(0.0, 1.0, 4)
    with pytest.raises(ValidationError):
        PiecewiseLinearFn(mesh, np.array([1.0, np.nan, 0.0, 0.0]))
    with pytest.raises(ValidationError):
        PiecewiseLinearFn(mesh, np.zeros(3))


def test_lumped_mass_is_h():
    mesh = IntervalMesh(-2.0, 1.0, 11)
    m = lumped_mass(mesh)
    assert m.shape == (11,)
    assert np.allclose(m, mesh.h)
