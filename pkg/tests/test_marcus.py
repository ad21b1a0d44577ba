import numpy as np
import pytest

from marcusflow import driver as D
from marcusflow import fields as F
from marcusflow import marcus as M
from marcusflow.ivk import fit_slope
from conftest import JUMPS3, ROT


def test_constant_field_is_additive():
    Z = D.gen_brownian(0, 1.0, 1e-2, jumps=[(0.5, 1.3)])
    X = F.affine(np.zeros((2, 2)), [1.0, -2.0])
    p = M.solve_path(X, Z, np.zeros(2))
    assert np.allclose(p.x, Z.values * np.array([1.0, -2.0]), atol=1e-12)


def test_deterministic_time_gives_ode_solution():
    A = np.array([[0.0, 1.0], [-2.0, -0.1]])
    Z = D.deterministic_time(1.0, 1e-3)
    p = M.solve_path(F.linear(A), Z, np.array([1.0, 0.0]))
    assert np.allclose(p.x[-1], F.expm(A) @ [1.0, 0.0], atol=1e-5)


def test_linear_order_one_with_jumps():
    A = np.array([[0.0, -1.0, 0.3], [1.0, -0.2, 0.0], [0.5, 0.4, -0.1]])
    x0 = np.array([1.0, 0.5, -0.3])
    errs = np.zeros((4, 3))
    for s in range(4):
        Zf = D.gen_brownian(s, 1.0, 1e-3, jumps=JUMPS3)
        for j, m in enumerate((4, 2, 1)):
            Z = D.coarsen(Zf, m)
            p = M.solve_path(F.linear(A), Z, x0, keep_samples=False)
            ex = F.expm(Z.values[:, 0, None, None] * A) @ x0
            errs[s, j] = np.max(np.abs(p.x - ex))
    rms = np.sqrt(np.mean(errs ** 2, axis=0))
    assert fit_slope([4e-3, 2e-3, 1e-3], rms) >= 0.8


def test_solve_linear_exact():
    Z = D.gen_compound_poisson(0, 1.0, 0.0, jumps=[(0.5, np.pi)])
    mf = M.solve_linear_exact(ROT, Z)
    assert np.allclose(mf.F[-1], -np.eye(2), atol=1e-12)
    assert np.allclose(M.solve_linear_exact(np.zeros((2, 2)), Z).F, np.eye(2))


def test_exact_agrees_with_scheme():
    Z = D.gen_brownian(1, 1.0, 1e-4, jumps=[(0.4, 0.8)])
    mf = M.solve_linear_exact(ROT, Z)
    p = M.solve_path(F.linear(ROT), Z, np.eye(2))
    assert np.allclose(p.x[-1].T, mf.F[-1], atol=1e-3)  # rows are images of basis vectors


def test_marcus_integral_identities():
    Z = D.gen_brownian(2, 1.0, 1e-3, jumps=[(0.5, 0.9)])
    X = F.linear(ROT)
    x0 = np.array([1.0, 0.2])
    p = M.solve_path(X, Z, x0)
    inc = M.marcus_integral(X, X, p, Z)
    assert np.allclose(inc, p.x[-1] - x0, atol=1e-3)
    g = F.affine(np.zeros((2, 2)), [2.0, -1.0])
    assert np.allclose(M.marcus_integral(g, X, p, Z), np.array([2.0, -1.0]) * Z.values[-1, 0])


def test_marcus_integral_jump_only():
    Z = D.gen_compound_poisson(0, 1.0, 0.0, jumps=[(0.3, 0.5), (0.7, -0.8)])
    X = F.linear(ROT)
    x0 = np.array([1.0, 0.0])
    p = M.solve_path(X, Z, x0)
    # each jump contributes int_0^1 R exp(R u z) x z du = (exp(R z) - I) x
    x, total = x0, np.zeros(2)
    for z in (0.5, -0.8):
        nxt = F.expm(z * ROT) @ x
        total += nxt - x
        x = nxt
    assert np.allclose(M.marcus_integral(X, X, p, Z), total, atol=1e-8)


def test_change_of_variables():
    Z = D.gen_brownian(3, 1.0, 1e-3, jumps=[(0.5, 0.7)])
    X = F.linear(ROT)
    x0 = np.array([0.6, 0.1])
    assert M.change_of_variables_check(F.diffeo("identity"), X, Z, x0) == 0.0
    aff = F.diffeo("affine", M=[[2.0, 1.0], [0.0, 1.0]], c=[1.0, 0.0])
    assert M.change_of_variables_check(aff, X, Z, x0) <= 1e-4


def test_change_of_variables_cubic_converges():
    X = F.linear(ROT)
    x0 = np.array([0.6, 0.1])
    Zf = D.gen_brownian(3, 1.0, 5e-4, jumps=[(0.5, 0.7)])
    r = [M.change_of_variables_check(F.diffeo("cubic", a=0.2), X, D.coarsen(Zf, m), x0)
         for m in (4, 2, 1)]
    assert r[2] < r[1] < r[0]


def test_euler_jump_rule_differs():
    Z = D.gen_compound_poisson(0, 1.0, 0.0, jumps=[(0.5, 1.0)])
    a = M.solve_path(F.linear(ROT), Z, np.array([1.0, 0.0]))
    b = M.solve_path(F.linear(ROT), Z, np.array([1.0, 0.0]), jump_rule="euler")
    assert np.linalg.norm(a.x[-1] - b.x[-1]) > 0.1
