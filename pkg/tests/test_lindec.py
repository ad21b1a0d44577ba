import numpy as np
import pytest
import scipy.linalg

from marcusflow import driver as D
from marcusflow import lindec as L
from marcusflow.errors import CascadeBreakdown, SpectralSelectionError
from conftest import ROT


def test_rotation_at_quarter_turn():
    Z = D.deterministic_time(np.pi / 4, np.pi / 400)
    fp = L.decompose_linear_algebraic(ROT, Z, 1)
    r2 = np.sqrt(2.0)
    assert np.allclose(fp.eta[-1], [[r2, -1.0], [0.0, 1.0]], atol=1e-12)
    assert np.allclose(fp.psi[-1], [[1.0, 0.0], [r2 / 2, r2 / 2]], atol=1e-12)
    c = np.cos(np.pi / 4)
    assert np.allclose(fp.product()[-1], [[c, -c], [c, c]], atol=1e-12)


def test_zero_generator_identity_factors():
    Z = D.gen_brownian(0, 1.0, 1e-2, jumps=[(0.5, 1.0)])
    fp = L.decompose_linear_algebraic(np.zeros((3, 3)), Z, 1)
    assert np.allclose(fp.eta, np.eye(3)) and np.allclose(fp.psi, np.eye(3))
    fs = L.decompose_linear_sde(np.zeros((3, 3)), Z, 1)
    assert np.allclose(fs.eta, np.eye(3)) and np.allclose(fs.psi, np.eye(3))


def test_nilpotent_no_breakdown():
    N = np.array([[0.0, 1.0], [0.0, 0.0]])
    Z = D.gen_brownian(1, 3.0, 1e-2, jumps=[(1.0, 2.0)])
    fp = L.decompose_linear_algebraic(N, Z, 1)
    assert fp.tau is None and np.allclose(fp.psi, np.eye(2))
    assert np.allclose(fp.eta[:, 0, 1], Z.values[:, 0])
    assert not L.breakdown_time(N, Z, 1)


def test_shape_exactness():
    A = np.random.default_rng(3).standard_normal((4, 4)) * 0.4
    fp = L.decompose_linear_algebraic(A, D.gen_brownian(0, 0.5, 1e-2), 2)
    v = fp.valid
    assert np.all(fp.eta[v][:, 2:, :2] == 0) and np.all(fp.psi[v][:, :2, 2:] == 0)
    assert np.all(fp.eta[v][:, 2:, 2:] == np.eye(2)) and np.all(fp.psi[v][:, :2, :2] == np.eye(2))


def test_sde_route_a3_zero_is_exact_exponential():
    A = np.array([[0.1, 0.5, 0.2], [0.0, -0.3, 0.4], [0.0, 0.2, 0.1]])
    Z = D.gen_brownian(2, 1.0, 1e-3, jumps=[(0.5, 0.6)])
    fs = L.decompose_linear_sde(A, Z, 1)
    g4 = scipy.linalg.expm(Z.values[-1, 0] * A[1:, 1:])
    assert np.allclose(fs.psi[-1][1:, 1:], g4, atol=1e-3)


def test_sde_rotation_matches_cos():
    Z = D.deterministic_time(1.2, 1e-3)
    fs = L.decompose_linear_sde(ROT, Z, 1)
    assert np.allclose(fs.psi[:, 1, 1], np.cos(Z.t), atol=1e-4)


def test_breakdown_rotation_and_jump_crossing():
    bd = L.breakdown_time(ROT, D.deterministic_time(2.0, 1e-3), 1)
    assert abs(bd.time - np.pi / 2) <= 1e-3
    Zj = D.gen_compound_poisson(0, 1.0, 0.0, jumps=[(0.5, np.pi)], dt=1e-2)
    res = L.breakdown_time(ROT, Zj, 1)
    assert not res and res.crossing


def test_schur_selection_zero_block():
    rng = np.random.default_rng(0)
    D_ = np.zeros((4, 4))
    D_[0, 0], D_[1, 1] = 1.0, 2.0
    D_[2:, 2:] = [[0.0, -1.0], [1.0, 0.0]]
    S = np.eye(4) + 0.3 * rng.standard_normal((4, 4))
    A = S @ D_ @ np.linalg.inv(S)
    P, k = L.schur_foliation_select(A, 1, 0)
    assert k == 1
    assert np.max(np.abs((P.T @ A @ P)[k:, :k])) <= 1e-12
    assert np.allclose(P.T @ P, np.eye(4), atol=1e-12)


def test_schur_selection_infeasible():
    with pytest.raises(SpectralSelectionError):
        L.schur_foliation_select(ROT, 1, 0)
    with pytest.raises(SpectralSelectionError):
        L.schur_foliation_select(ROT, 0, 1)


def test_cascade_identity_rotation_random():
    facs = L.cascade_factorize(np.eye(3), [1, 2])
    assert all(np.allclose(f, np.eye(3)) for f in facs)
    R = scipy.linalg.expm(np.pi / 4 * ROT)
    eta, psi = L.cascade_factorize(R, [1])
    r2 = np.sqrt(2.0)
    assert np.allclose(eta, [[r2, -1.0], [0.0, 1.0]]) and np.allclose(psi, [[1, 0], [r2 / 2, r2 / 2]])
    F = np.eye(4) + 0.2 * np.random.default_rng(1).standard_normal((4, 4))
    facs = L.cascade_factorize(F, [1, 2, 3])
    assert len(facs) == 4
    assert np.allclose(np.linalg.multi_dot(facs), F, atol=1e-10)
    for j, f in enumerate(facs[:-1]):
        off = np.delete(f - np.eye(4), j, axis=0)
        assert np.allclose(off, 0.0)


def test_cascade_breakdown_names_level():
    F = np.array([[0.0, 1.0], [1.0, 0.0]])
    with pytest.raises(CascadeBreakdown) as exc:
        L.cascade_factorize(F, [1])
    assert exc.value.level == 1
