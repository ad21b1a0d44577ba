import numpy as np
import pytest

from marcusflow import attain as A
from marcusflow.errors import DomainError, ParameterError


@pytest.fixture(scope="module")
def cart():
    return A.foliation("cartesian", res=100)


@pytest.fixture(scope="module")
def hyp():
    return A.foliation("hyperbolic", res=200)


def _point_mask(pair, p):
    X, Y = pair.centers()
    d = (X - p[0]) ** 2 + (Y - p[1]) ** 2
    m = np.zeros(pair.shape, bool)
    m[np.unravel_index(np.argmin(d), d.shape)] = True
    return m


def test_cartesian_horizontal_line(cart):
    m = A.saturate(_point_mask(cart, (0.2, 0.3)), cart, "H")
    rows = np.flatnonzero(m.any(axis=1))
    assert len(rows) == 1 and m[rows[0]].all()


def test_saturation_idempotent(cart, hyp):
    m = A.leaf_mask((0.1, 0.2), cart, "H")
    once = A.saturate(m, cart, "V")
    assert np.array_equal(once, A.saturate(once, cart, "V"))
    # leaves are cut at the window, so cells whose leaf exits before
    # reaching the source can only differ next to the border
    m = A.leaf_mask((1.0, 1.0), hyp, "H")
    once = A.saturate(m, hyp, "V")
    diff = once ^ A.saturate(once, hyp, "V")
    X, Y = hyp.centers()
    edge = np.maximum(np.abs(X), np.abs(Y)) >= 3.0 - 2 * hyp.cell[0]
    assert not np.any(diff & ~edge)


def test_leaf_is_one_branch(hyp):
    X, Y = hyp.centers()
    m = A.leaf_mask((1.0, 1.0), hyp, "H")
    assert not np.any(m & (X < 0))
    on = np.abs(X * Y - 1.0) < 0.1
    assert np.count_nonzero(m & on & (X > 0.5) & (X < 2.0)) > 0


def test_example1_first_set_and_index(hyp):
    X, Y = hyp.centers()
    am = A.attainable_sets((1.0, 1.0), hyp, 4)
    v = hyp.valid()
    assert np.mean((am.masks[0] == (X + Y > 0))[v]) >= 0.99
    assert am.nested()
    k, _ = A.attainability_index((1.0, 1.0), hyp, 3, am=am)
    assert k == 3
    assert am.coverage[2] >= 0.99
    fr = am.first_reached()
    assert fr.max() == 3 and fr[v].min() >= 1


def test_example1_co_attainable_and_commuting(hyp):
    X, Y = hyp.centers()
    C = A.co_attainable((1.0, 1.0), hyp, 1)
    assert np.mean((C == ((X > 0) & (Y > 0)))[hyp.valid()]) >= 0.98
    assert not A.commute_check((1.0, 1.0), hyp, 1)[0]
    assert A.commute_check((1.0, 1.0), hyp, 3)[0]


def test_cartesian_index_one(cart):
    k, am = A.attainability_index((0.1, -0.2), cart, 2)
    assert k == 1
    assert A.co_attainable((0.1, -0.2), cart, 1).all()
    assert A.commute_check((0.1, -0.2), cart, 1)[0]


def test_example2_first_strip():
    pair = A.foliation("secant").with_resolution(600, 100)
    am = A.attainable_sets((np.pi / 2, 1.0), pair, 2)
    S = A.strip_mask(pair, -np.pi / 2, 3 * np.pi / 2)
    assert np.mean(am.masks[0] == S) >= 0.98
    assert am.coverage[1] > am.coverage[0]


def test_point_outside_window(cart):
    with pytest.raises(DomainError):
        A.attainable_sets((5.0, 0.0), cart, 1)


def test_bad_leaf_name(cart):
    with pytest.raises(ParameterError):
        A.saturate(np.zeros(cart.shape, bool), cart, "diagonal")
