import numpy as np
import pytest
import scipy.linalg

from marcusflow import driver as D
from marcusflow import fields as F
from marcusflow import flowdec as FD
from marcusflow import lindec as L
from marcusflow.errors import ParameterError
from conftest import ROT

P0 = np.array([0.3, 0.2])


def test_identity_flow_factors():
    S = FD.FlowSampler(F.zero(2), D.deterministic_time(1.0, 1e-2))
    pf = FD.pointwise_decompose(S, 50, P0)
    assert np.allclose(pf.psi_values, pf.grid_points)
    assert np.allclose(pf.eta_values, pf.eta_points)
    assert pf.residual <= 1e-12


def test_rotation_matches_algebraic_factors():
    Z = D.deterministic_time(2 * np.pi, 1e-3)
    S = FD.FlowSampler(F.linear(ROT), Z)
    i = Z.index_of(np.pi / 4)
    pf = FD.pointwise_decompose(S, i, P0, 0.1, 11)
    fa = L.decompose_linear_algebraic(ROT, Z, 1)
    assert np.allclose(pf.eta_values, pf.eta_points @ fa.eta[i].T, atol=1e-6)
    assert np.allclose(pf.psi_values, pf.grid_points @ fa.psi[i].T, atol=1e-6)


def test_shear_type_map_recovered():
    c0 = np.zeros((2, 1))
    c1 = np.zeros((2, 1, 2))
    c1[0, 0, 1] = 1.0
    c3 = np.zeros((2, 1, 2, 2, 2))
    c3[0, 0, 1, 1, 1] = 1.0
    X = F.polynomial(c0, c1, None, c3)         # (y^3 + y, 0)
    Z = D.deterministic_time(1.0, 1e-2)
    S = FD.FlowSampler(X, Z)
    pf = FD.pointwise_decompose(S, Z.N, P0)
    assert np.allclose(pf.det, 1.0, atol=1e-6)
    assert np.allclose(pf.psi_values, pf.grid_points, atol=1e-10)
    x, y = pf.grid_points.T
    assert np.allclose(pf.compose(pf.grid_points), np.column_stack([x + y ** 3 + y, y]), atol=1e-8)


def test_detect_breakdown_cases():
    Z = D.deterministic_time(2.0, 1e-3)
    bd = FD.detect_breakdown(FD.FlowSampler(F.linear(ROT), Z), P0)
    assert abs(bd.time - np.pi / 2) <= 2e-3 and bd.kind == "sign"
    assert not FD.detect_breakdown(FD.FlowSampler(F.catalog("vertical"), Z), P0)
    N = np.array([[0.2, 1.0], [0.0, -0.1]])
    assert not FD.detect_breakdown(FD.FlowSampler(F.linear(N), D.deterministic_time(5.0, 1e-2)), P0)


def test_jump_breakdown_stops_before_jump():
    Z = D.gen_compound_poisson(0, 1.0, 0.0, jumps=[(0.5, np.pi)], dt=1e-3)
    fac = FD.alternate_decompose(FD.FlowSampler(F.linear(ROT), Z), P0, margin=0.05)
    assert fac.breakdowns[0].kind == "jump"
    assert fac.times[1] < 0.5


def test_alternate_rotation_full_turn():
    Z = D.deterministic_time(2 * np.pi, 1e-3)
    fac = FD.alternate_decompose(FD.FlowSampler(F.linear(ROT), Z), P0, margin=0.05)
    assert fac.restarts >= 2
    assert np.allclose(fac.times[:5], [0.0, 1.52, 3.041, 4.562, 6.083], atol=1e-3)
    x = np.array([0.32, 0.18])
    for t in (1.0, np.pi, fac.times[2], 6.2):
        tg = Z.t[Z.index_of(t)]
        assert np.allclose(FD.recompose(fac, tg, x), scipy.linalg.expm(ROT * tg) @ x, atol=1e-5)


def test_alternate_single_interval_cases():
    N = np.array([[0.2, 1.0], [0.0, -0.1]])
    Z = D.deterministic_time(3.0, 1e-2)
    fac = FD.alternate_decompose(FD.FlowSampler(F.linear(N), Z), P0)
    assert fac.restarts == 0 and len(fac.factors) == 1
    Zr = D.deterministic_time(1.0, 1e-2)
    fac = FD.alternate_decompose(FD.FlowSampler(F.linear(ROT), Zr), P0)
    assert fac.restarts == 0


def test_recompose_identity():
    Z = D.deterministic_time(1.0, 1e-2)
    fac = FD.alternate_decompose(FD.FlowSampler(F.zero(2), Z), P0)
    assert np.allclose(FD.recompose(fac, 0.7, P0), P0)


def test_margin_monotone():
    Z = D.deterministic_time(2 * np.pi, 1e-3)
    S = FD.FlowSampler(F.linear(ROT), Z)
    first = [FD.alternate_decompose(S, P0, margin=m).times[1] for m in (0.1, 0.05, 0.01)]
    assert first[0] <= first[1] <= first[2]


def test_bad_margin():
    S = FD.FlowSampler(F.linear(ROT), D.deterministic_time(1.0, 1e-2))
    with pytest.raises(ParameterError):
        FD.alternate_decompose(S, P0, margin=0.0)
