"""Interpolating wavelet filter banks on closed intervals.

Midpoint values are predicted by the Lagrange polynomial through p nearby
coarse samples (Deslauriers-Dubuc subdivision); near interval ends the
window clamps to a one-sided stencil of the same degree. Every distinct
prediction row lives in one (p-1) x p table: row r is the Lagrange row
through nodes {0..p-1} evaluated at r + 1/2, and the window start plus row
index for any odd point follows from clamping alone. Rows are built in
exact rational arithmetic and converted to float once, so boundary filters
come out bit-identical across platforms.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

SUPPORTED_ORDERS = (2, 4, 6, 8)


def lagrange_row(nodes, x) -> list[Fraction]:
    """Weights of the Lagrange interpolant through `nodes`, evaluated at x."""
    x = Fraction(x)
    out = []
    for i, xi in enumerate(nodes):
        w = Fraction(1)
        for l, xl in enumerate(nodes):
            if l != i:
                w *= (x - Fraction(xl)) / (Fraction(xi) - Fraction(xl))
        out.append(w)
    return out


def solve_exact(rows, rhs) -> list[Fraction]:
    """Solve a small square system over the rationals (Gauss-Jordan)."""
    n = len(rows)
    a = [[Fraction(v) for v in r] + [Fraction(b)] for r, b in zip(rows, rhs)]
    for col in range(n):
        piv = next((r for r in range(col, n) if a[r][col] != 0), None)
        if piv is None:
            raise ValueError("singular system")
        a[col], a[piv] = a[piv], a[col]
        inv = 1 / a[col][col]
        a[col] = [inv * v for v in a[col]]
        for r in range(n):
            if r != col and a[r][col] != 0:
                f = a[r][col]
                a[r] = [v - f * w for v, w in zip(a[r], a[col])]
    return [a[r][n] for r in range(n)]


def kernel_exact(rows) -> list[list[Fraction]]:
    """Rational basis of the kernel of a rectangular matrix, via RREF."""
    a = [[Fraction(v) for v in r] for r in rows]
    nr, nc = len(a), len(a[0])
    pivots = []
    r = 0
    for c in range(nc):
        piv = next((i for i in range(r, nr) if a[i][c] != 0), None)
        if piv is None:
            continue
        a[r], a[piv] = a[piv], a[r]
        inv = 1 / a[r][c]
        a[r] = [inv * v for v in a[r]]
        for i in range(nr):
            if i != r and a[i][c] != 0:
                f = a[i][c]
                a[i] = [v - f * w for v, w in zip(a[i], a[r])]
        pivots.append(c)
        r += 1
        if r == nr:
            break
    free = [c for c in range(nc) if c not in pivots]
    basis = []
    for fc in free:
        v = [Fraction(0)] * nc
        v[fc] = Fraction(1)
        for row, pc in zip(a, pivots):
            v[pc] = -row[fc]
        basis.append(v)
    return basis


@dataclass(frozen=True, eq=False)
class FilterBank:
    """Prediction rows plus the four filter masks of order p.

    rows[r] holds the weights applied to coarse nodes start..start+p-1 when
    predicting the odd point whose window start was clamped to give row
    index r; the interior row is r = p//2 - 1 and rows 0..p//2-2 (and their
    mirrors) are the boundary replacements. h/h_dual/g/g_dual are the
    offset -> Fraction masks of the equivalent two-scale relations;`h` even
    taps are the interpolation delta, odd taps the interior prediction
    weights.
    """
    p: int
    rows: np.ndarray
    rows_exact: tuple
    h: dict
    h_dual: dict
    g: dict
    g_dual: dict

    def windows(self, nc: int, m):
        """Window starts and row indices for odd points m of an nc-node grid.

        Odd point m sits between coarse nodes m and m+1; its stencil is the
        p nodes start..start+p-1 with start = clamp(m - p/2 + 1, 0, nc - p).
        """
        if nc < self.p:
            raise ValueError(
                f"grid of {nc} nodes is shorter than one order-{self.p} stencil")
        m = np.asarray(m, dtype=np.int64)
        start = np.clip(m - (self.p // 2 - 1), 0, nc - self.p)
        return start, m - start

    @property
    def interior(self) -> np.ndarray:
        return self.rows[self.p // 2 - 1]


def build_filter_bank(p: int) -> FilterBank:
    """Build the order-p interpolating filter bank.

    p must be one of SUPPORTED_ORDERS: predictions reproduce polynomials of
    degree < p, interior and one-sided alike.
    """
    if not isinstance(p, (int, np.integer)) or p % 2 or p <= 0:
        raise ValueError(f"order must be a positive even integer, got {p!r}")
    if p not in SUPPORTED_ORDERS:
        raise ValueError(f"unsupported order p={p}; supported: {SUPPORTED_ORDERS}")
    nodes = list(range(p))
    exact = tuple(tuple(lagrange_row(nodes, Fraction(2 * r + 1, 2)))
                  for r in range(p - 1))
    rows = np.array([[float(w) for w in row] for row in exact])
    rows.setflags(write=False)

    # two-scale masks; offsets relative to the point an output sits on
    interior = exact[p // 2 - 1]
    h = {0: Fraction(1)}
    g_dual = {0: Fraction(1)}
    for t, w in enumerate(interior):
        off = 2 * t - (p - 1)  # odd offsets -(p-1)..(p-1)
        h[off] = w
        g_dual[off] = -w
    h_dual = {0: Fraction(1)}
    g = {0: Fraction(1)}
    return FilterBank(p=p, rows=rows, rows_exact=exact,
                      h=dict(sorted(h.items())), h_dual=h_dual,
                      g=g, g_dual=dict(sorted(g_dual.items())))


def filter_table_text(fb: FilterBank) -> str:
    """Plain-text dump: every mask tap and prediction row, exact and float."""
    lines = [f"order p = {fb.p}", ""]
    for name in ("h", "h_dual", "g", "g_dual"):
        lines.append(f"[{name}]")
        for off, w in getattr(fb, name).items():
            lines.append(f"{off:+d}  {str(w):>12}  {float(w)!r}")
        lines.append("")
    lines.append("[prediction rows]  (row r applies at window offset r + 1/2)")
    for r, row in enumerate(fb.rows_exact):
        kind = "interior" if r == fb.p // 2 - 1 else "boundary"
        lines.append(f"row {r} ({kind}): " +
                     "  ".join(str(w) for w in row))
        lines.append(" " * 8 + "  ".join(repr(float(w)) for w in row))
    return "\n".join(lines) + "\n"
