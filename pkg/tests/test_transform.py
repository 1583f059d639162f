import numpy as np
import pytest

from mrpde.filters import build_filter_bank
from mrpde.transform import (CoefficientSet, detail_mask, forward, inverse,
                             threshold)

N0 = 8


def grid(j, n=N0):
    x = np.linspace(0.0, 1.0, n * 2 ** j + 1)
    return np.meshgrid(x, x, indexing="ij")


@pytest.mark.parametrize("p", [2, 4, 6, 8])
def test_round_trip_random(p):
    rng = np.random.default_rng(42)
    u = rng.standard_normal((N0 * 2 ** 4 + 1,) * 2)
    fb = build_filter_bank(p)
    r = inverse(forward(u, fb, N0), fb)
    assert np.abs(r - u).max() / np.abs(u).max() < 1e-12


def test_constant_field_all_details_zero():
    fb = build_filter_bank(4)
    cs = forward(np.full((N0 * 8 + 1,) * 2, 3.7), fb, N0)
    assert np.abs(cs.data[detail_mask(cs)]).max() == 0.0
    assert np.allclose(cs.s0, 3.7)


def test_vanishing_moments_x3y2():
    X, Y = grid(3)
    fb = build_filter_bank(4)
    f = X ** 3 * Y ** 2
    cs = forward(f, fb, N0)
    assert np.abs(cs.data[detail_mask(cs)]).max() < 1e-10 * np.abs(f).max()


@pytest.mark.parametrize("p", [2, 4, 6, 8])
def test_vanishing_moments_general(p):
    X, Y = grid(3)
    fb = build_filter_bank(p)
    f = (2 * X - 0.3) ** (p - 1) + (Y - 0.2) ** (p - 1) * X
    cs = forward(f, fb, N0)
    assert np.abs(cs.data[detail_mask(cs)]).max() < 1e-9 * np.abs(f).max()


def test_linearity():
    rng = np.random.default_rng(3)
    fb = build_filter_bank(6)
    f = rng.standard_normal((N0 * 4 + 1,) * 2)
    g = rng.standard_normal(f.shape)
    lhs = forward(2.5 * f - 1.5 * g, fb, N0).data
    rhs = 2.5 * forward(f, fb, N0).data - 1.5 * forward(g, fb, N0).data
    assert np.abs(lhs - rhs).max() < 1e-12 * np.abs(lhs).max()


def test_subband_shapes_and_bijection():
    fb = build_filter_bank(4)
    j_max = 3
    u = np.zeros((N0 * 2 ** j_max + 1,) * 2)
    cs = forward(u, fb, N0)
    total = cs.s0.size
    for j, lam, block in cs.subbands():
        n_odd, n_even = N0 * 2 ** (j - 1), N0 * 2 ** (j - 1) + 1
        expect = {1: (n_odd, n_even), 2: (n_even, n_odd), 3: (n_odd, n_odd)}[lam]
        assert block.shape == expect
        total += block.size
    assert total == u.size  # one coefficient per collocation point


def test_single_detail_round_trip():
    # a lone unit detail synthesizes one basis function; re-analysis returns it
    fb = build_filter_bank(4)
    cs = CoefficientSet(np.zeros((N0 * 4 + 1,) * 2), N0, 2)
    cs.detail(2, 3)[5, 7] = 1.0
    f = inverse(cs, fb)
    back = forward(f, fb, N0)
    assert abs(back.detail(2, 3)[5, 7] - 1.0) < 1e-13
    other = back.data.copy()
    s = 1 << (back.j_max - 2)
    other[s::2 * s, s::2 * s][5, 7] = 0.0
    assert np.abs(other).max() < 1e-13


def test_threshold_keeps_s0_and_large_details():
    rng = np.random.default_rng(11)
    fb = build_filter_bank(6)
    u = np.exp(-((grid(4)[0] - 0.4) ** 2 + (grid(4)[1] - 0.55) ** 2) / 0.01)
    u += 1e-3 * rng.standard_normal(u.shape)  # make small details plentiful
    cs = forward(u, fb, N0)
    eps = 1e-3
    t = threshold(cs, eps)
    m = detail_mask(cs)
    assert np.array_equal(t.s0, cs.s0)
    kept = t.data[m]
    orig = cs.data[m]
    assert np.all((np.abs(orig) >= eps) == (kept != 0.0) | (orig == 0.0))
    assert np.array_equal(kept[np.abs(orig) >= eps], orig[np.abs(orig) >= eps])


def test_threshold_error_bound_gaussian():
    X, Y = grid(5)
    u = np.exp(-((X - 0.4) ** 2 + (Y - 0.55) ** 2) / 0.01)
    fb = build_filter_bank(6)
    cs = forward(u, fb, N0)
    for eps in (1e-2, 1e-3, 1e-4):
        err = np.abs(inverse(threshold(cs, eps), fb) - u).max()
        assert err <= 10 * eps


def test_threshold_all_details_collapses_to_s0():
    X, Y = grid(3)
    fb = build_filter_bank(4)
    cs = forward(np.sin(X) * Y, fb, N0)
    big = threshold(cs, 1e9)
    assert np.abs(big.data[detail_mask(big)]).max() == 0.0


def test_forward_shape_validation():
    fb = build_filter_bank(4)
    with pytest.raises(ValueError):
        forward(np.zeros((12, 12)), fb, N0)
    with pytest.raises(ValueError):
        forward(np.zeros((N0 * 2 + 1, N0 * 4 + 1)), fb, N0)
    with pytest.raises(ValueError, match="non-finite"):
        forward(np.full((N0 * 2 + 1,) * 2, np.nan), fb, N0)
    with pytest.raises(ValueError, match="positive"):
        threshold(forward(np.zeros((N0 + 1,) * 2), fb, N0), 0.0)
