import numpy as np
import pytest

from marcusflow import bundle as B
from marcusflow import driver as D
from marcusflow.errors import DomainError, ParameterError
from marcusflow.ivk import fit_slope

J = np.array([[0.0, -1.0], [1.0, 0.0]])
G0 = B.polar(np.eye(3) + 0.3 * B.hat([0.2, 0.5, -0.4]))


def _rot2(a):
    return np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])


def test_hat_vee_roundtrip_and_basis():
    w = np.array([0.3, -1.2, 0.7])
    assert np.allclose(B.vee(B.hat(w)), w)
    assert np.allclose(B.hat(w) @ w, 0.0)


def test_split_is_ad_invariant():
    sp = B.so3_split()
    assert sp.ad_invariance_defect() <= 1e-12
    W = B.hat([0.4, -0.2, 0.9])
    assert np.allclose(sp.proj_h(W) + sp.proj_n(W), W)


def test_check_group():
    assert B.check_group(_rot2(0.3), "SO(2)") <= 1e-12
    with pytest.raises(DomainError):
        B.check_group(2 * np.eye(2), "SO(2)")
    with pytest.raises(ParameterError):
        B.check_group(np.eye(2), "GL(2)")


def test_trivial_bundle_exact():
    Z = D.gen_brownian(4, 1.0, 1e-3, jumps=[(0.3, 1.2), (0.6, -0.8)])
    tf = B.trivial_bundle_decompose(J, 2 * J, Z, _rot2(0.1), _rot2(0.9))
    assert tf.error() <= 1e-12
    tf0 = B.trivial_bundle_decompose(J, np.zeros((2, 2)), Z, np.eye(2), _rot2(0.9))
    assert np.allclose(tf0.h, np.eye(2))
    tf1 = B.trivial_bundle_decompose(np.zeros((2, 2)), J, Z, np.eye(2), _rot2(0.9))
    assert np.allclose(tf1.eta, np.eye(2))


def test_reductive_pure_cases():
    sp = B.so3_split()
    Z = D.gen_brownian(7, 1.0, 1e-3, jumps=[(0.4, 0.9)])
    r = B.reductive_decompose(B.E[2], sp, Z, np.eye(3))
    assert np.allclose(r.eta, np.eye(3), atol=1e-12)
    r = B.reductive_decompose(B.E[0], sp, Z, np.eye(3))
    assert np.allclose(r.psi, np.eye(3), atol=1e-12)
    proj, conn = B.horizontal_lift_check(r, sp)
    assert proj <= 1e-3 and conn <= 1e-6


def test_reductive_mixed_converges_and_control_fails():
    sp = B.so3_split()
    W = B.E[0] + B.E[2]
    Zf = D.gen_brownian(7, 1.0, 2.5e-4, jumps=[(0.4, 0.9), (0.7, -0.6)])
    errs, conns = [], []
    for m in (4, 2, 1):
        r = B.reductive_decompose(W, sp, D.coarsen(Zf, m), G0)
        errs.append(r.error())
        conns.append(B.horizontal_lift_check(r, sp)[1])
        assert r.reports["group_defect"] <= 1e-8
    assert fit_slope([1e-3, 5e-4, 2.5e-4], errs) >= 0.7
    assert conns[2] < conns[0]
    sw = B.reductive_decompose(W, sp.swapped(), D.coarsen(Zf, 4), G0)
    assert B.horizontal_lift_check(sw, sp)[1] > 10 * conns[0]


def test_psi_fixes_fiber():
    sp = B.so3_split()
    Z = D.gen_brownian(1, 1.0, 1e-2)
    r = B.reductive_decompose(B.E[0] + B.E[2], sp, Z, G0)
    assert np.allclose(r.psi @ B.NORTH, B.NORTH, atol=1e-12)


def test_reductive_input_validation():
    sp = B.so3_split()
    Z = D.gen_brownian(1, 1.0, 1e-2)
    with pytest.raises(ParameterError):
        B.reductive_decompose(np.eye(3), sp, Z, np.eye(3))
    with pytest.raises(DomainError):
        B.reductive_decompose(B.E[0], sp, Z, 2 * np.eye(3))
