import numpy as np
import pytest

from marcusflow import fields as F
from marcusflow.errors import ParameterError
from conftest import ROT


def test_linear_rotation_direction():
    X = F.linear(ROT)
    assert np.allclose(F.evaluate(X, np.array([1.0, 0.0]))[:, 0], [0.0, 1.0])
    assert np.allclose(F.jacobian(X, np.array([0.3, 0.2]))[:, 0, :], ROT)


def test_affine_constant():
    X = F.affine(np.zeros((2, 2)), [1.5, -2.0])
    for x in ([0.0, 0.0], [3.0, 7.0]):
        assert np.allclose(F.evaluate(X, np.array(x))[:, 0], [1.5, -2.0])
    assert np.allclose(F.jacobian(X, np.array([1.0, 1.0])), 0.0)


def test_cubic_polynomial_value_and_jacobian():
    X = F.polynomial(np.zeros((1, 1)), c3=np.ones((1, 1, 1, 1, 1)))
    x = np.array([2.0])
    assert F.evaluate(X, x)[0, 0] == pytest.approx(8.0)
    assert F.jacobian(X, x)[0, 0, 0] == pytest.approx(12.0)
    fd = F.fd_jacobian(lambda y: F.evaluate(X, y), x, 1)
    assert np.allclose(fd.reshape(-1)[0], 12.0, atol=1e-6)


def test_catalog_jacobian_matches_fd():
    for name in F.CATALOG:
        X = F.catalog(name)
        x = np.array([0.4, -0.3])
        fd = F.fd_jacobian(lambda y: F.evaluate(X, y), x, X.n)
        assert np.allclose(F.jacobian(X, x).reshape(fd.shape), fd, atol=1e-6), name


def test_ode_flow_constant_and_zero():
    X = F.affine(np.zeros((2, 2)), [1.0, 2.0])
    r = F.ode_flow(X, np.array([0.7]), np.array([0.5, 0.5]))
    assert np.allclose(r.endpoint, [1.2, 1.9], atol=1e-14)
    r0 = F.ode_flow(F.linear(ROT), np.array([0.0]), np.array([0.5, 0.5]))
    assert np.array_equal(r0.endpoint, [0.5, 0.5])


def test_ode_flow_linear_matches_expm():
    A = np.array([[0.1, -1.0], [0.7, -0.3]])
    x0 = np.array([1.0, -0.4])
    for z in np.linspace(-1, 1, 9):
        r = F.ode_flow(F.linear(A), np.array([z]), x0, substeps=16)
        assert np.allclose(r.endpoint, F.expm(z * A) @ x0, atol=1e-10)


def test_substep_rule_even_and_floor():
    assert F.substep_count(0.0) == 16
    for a in (0.1, 1.0, 3.3, 10.0):
        n = F.substep_count(a)
        assert n % 2 == 0 and n >= max(16, 8 * a)


def test_json_roundtrip():
    for X in (F.linear(ROT), F.affine(ROT, [1.0, 0.0]), F.catalog("pendulum")):
        Y = F.field_from_json(F.field_to_json(X))
        x = np.array([0.2, 0.9])
        assert np.allclose(F.evaluate(X, x), F.evaluate(Y, x))


def test_unknown_catalog_name():
    with pytest.raises(ParameterError):
        F.catalog("nope")
