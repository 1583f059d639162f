from fractions import Fraction

import numpy as np
import pytest

from mrpde.filters import (SUPPORTED_ORDERS, build_filter_bank, filter_table_text,
                           kernel_exact, lagrange_row, solve_exact)


def test_p2_interior_is_midpoint_average():
    fb = build_filter_bank(2)
    assert fb.rows_exact[0] == (Fraction(1, 2), Fraction(1, 2))


def test_p4_interior_weights():
    # cubic through 4 symmetric nodes at the midpoint
    fb = build_filter_bank(4)
    assert fb.interior.tolist() == [-1 / 16, 9 / 16, 9 / 16, -1 / 16]


def test_p4_leftmost_boundary_row():
    # one-sided cubic through the first 4 nodes at the first midpoint
    fb = build_filter_bank(4)
    assert fb.rows_exact[0] == (Fraction(5, 16), Fraction(15, 16),
                                Fraction(-5, 16), Fraction(1, 16))


@pytest.mark.parametrize("p", SUPPORTED_ORDERS)
def test_rows_sum_to_one(p):
    fb = build_filter_bank(p)
    assert np.abs(fb.rows.sum(axis=1) - 1.0).max() < 1e-14
    for row in fb.rows_exact:
        assert sum(row) == 1


@pytest.mark.parametrize("p", SUPPORTED_ORDERS)
def test_interior_row_symmetric(p):
    fb = build_filter_bank(p)
    w = fb.interior
    assert np.array_equal(w, w[::-1])


@pytest.mark.parametrize("p", SUPPORTED_ORDERS)
def test_h_mask_interpolating(p):
    # even taps are the lone center 1, odd taps the prediction weights
    fb = build_filter_bank(p)
    evens = {k: v for k, v in fb.h.items() if k % 2 == 0}
    assert evens == {0: Fraction(1)}
    odds = [fb.h[k] for k in sorted(fb.h) if k % 2]
    assert tuple(odds) == fb.rows_exact[p // 2 - 1]
    assert fb.h_dual == {0: Fraction(1)}
    assert fb.g == {0: Fraction(1)}
    assert all(fb.g_dual[k] == -fb.h[k] for k in fb.h if k % 2)


@pytest.mark.parametrize("p", SUPPORTED_ORDERS)
def test_polynomial_reproduction_all_rows(p):
    # every row (interior and one-sided) must reproduce degree < p exactly
    fb = build_filter_bank(p)
    for r, row in enumerate(fb.rows_exact):
        x = Fraction(2 * r + 1, 2)
        for deg in range(p):
            pred = sum(w * Fraction(n) ** deg for n, w in enumerate(row))
            assert pred == x ** deg, (r, deg)


@pytest.mark.parametrize("p", SUPPORTED_ORDERS)
def test_windows_clamp_and_interior(p):
    fb = build_filter_bank(p)
    nc = 4 * p + 1
    m = np.arange(nc - 1)
    start, ridx = fb.windows(nc, m)
    assert start.min() == 0 and start.max() == nc - p
    # interior points all map to the symmetric row
    interior = (m >= p // 2 - 1) & (m <= nc - 1 - p // 2)
    assert np.all(ridx[interior] == p // 2 - 1)
    # boundary row count per side
    assert np.sum(ridx < p // 2 - 1) == max(p // 2 - 1, 0)
    # stencil stays inside the grid
    assert np.all(start + p <= nc)


def test_windows_rejects_short_grid():
    fb = build_filter_bank(8)
    with pytest.raises(ValueError, match="shorter"):
        fb.windows(7, np.arange(6))


@pytest.mark.parametrize("bad", [3, 0, -2, 10, 2.0])
def test_build_rejects_bad_orders(bad):
    with pytest.raises(ValueError):
        build_filter_bank(bad)


def test_lagrange_row_is_exact_interpolation():
    nodes = [0, 2, 5, 6]
    row = lagrange_row(nodes, Fraction(7, 2))
    for deg in range(4):
        val = sum(w * Fraction(n) ** deg for n, w in zip(nodes, row))
        assert val == Fraction(7, 2) ** deg


def test_solve_exact_small_system():
    a = [[2, 1], [1, 3]]
    x = solve_exact(a, [5, 10])
    assert x == [Fraction(1), Fraction(3)]
    with pytest.raises(ValueError, match="singular"):
        solve_exact([[1, 2], [2, 4]], [1, 1])


def test_kernel_exact_known_kernel():
    # rank-1 matrix on 3 columns -> 2D kernel, orthogonal to the row
    basis = kernel_exact([[1, 2, 3]])
    assert len(basis) == 2
    for v in basis:
        assert sum(w * c for w, c in zip([1, 2, 3], v)) == 0


def test_filter_table_text_mentions_rows():
    txt = filter_table_text(build_filter_bank(4))
    assert "9/16" in txt and "interior" in txt and "[g_dual]" in txt
