"""Collocation derivative operators for the interpolating basis.

The interior stencil for d^a/dx^a comes from the two-scale relation: the
vector of a-th derivative values of the scaling function at integer
offsets satisfies v = 2^a M v with M[k,l] = h[2k-l], so it spans the
kernel of (M - 2^-a I). The kernel is computed exactly over the rationals
and pinned by moment conditions sum_k w_k k^m = a! delta(m,a); ties beyond
degree p-1 are broken by annihilating the next monomials, which fixes the
stencil parity. A defective eigenvalue (p=4, a=2: the basis is not twice
differentiable) is reported as an error. Boundary rows are one-sided
stencils exact on polynomials, of width p+1 for a=1 and p+2 for a=2.

Application is matrix-free in collocation space: one 1D contraction per
axis, scaled by spacing^-a.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .filters import FilterBank, kernel_exact


def _try_solve(rows, rhs):
    """RREF solve over Fractions: ('unique', x) | ('inconsistent', None) |
    ('underdetermined', None)."""
    nc = len(rows[0])
    a = [[Fraction(v) for v in r] + [Fraction(b)] for r, b in zip(rows, rhs)]
    pivots = []
    r = 0
    for c in range(nc):
        piv = next((i for i in range(r, len(a)) if a[i][c] != 0), None)
        if piv is None:
            continue
        a[r], a[piv] = a[piv], a[r]
        inv = 1 / a[r][c]
        a[r] = [inv * v for v in a[r]]
        for i in range(len(a)):
            if i != r and a[i][c] != 0:
                f = a[i][c]
                a[i] = [v - f * w for v, w in zip(a[i], a[r])]
        pivots.append(c)
        r += 1
    for i in range(r, len(a)):
        if a[i][nc] != 0:
            return "inconsistent", None
    if len(pivots) < nc:
        return "underdetermined", None
    x = [Fraction(0)] * nc
    for row, pc in zip(a, pivots):
        x[pc] = row[nc]
    return "unique", x


def interior_stencil(fb: FilterBank, alpha: int):
    """Exact interior weights for the alpha-th derivative at unit spacing.

    Returns (offsets, weights) with weights as Fractions. Raises ValueError
    when no valid stencil exists for this (p, alpha).
    """
    p = fb.p
    half = 1 if p == 2 else p - 2
    offs = list(range(-half, half + 1))
    n = len(offs)
    lam = Fraction(1, 2 ** alpha)
    M = [[fb.h.get(2 * k - l, Fraction(0)) for l in offs] for k in offs]
    A = [[M[i][j] - (lam if i == j else 0) for j in range(n)] for i in range(n)]
    basis = kernel_exact(A)
    if not basis:
        raise ValueError(
            f"refinement matrix has no eigenvalue 2^-{alpha} for p={p}; "
            "no derivative stencil of this order exists")

    def moment(vec, m):
        return sum(w * Fraction(k) ** m for k, w in zip(offs, vec))

    rows, rhs = [], []
    coeffs = None
    for m in range(p + 4):
        row = [moment(b, m) for b in basis]
        want = Fraction(math.factorial(alpha)) if m == alpha else Fraction(0)
        status, sol = _try_solve(rows + [row], rhs + [want])
        if status == "inconsistent":
            if m < p:
                raise ValueError(
                    f"derivative stencil for p={p}, alpha={alpha} cannot "
                    f"reproduce degree-{m} monomials (defective eigenvalue); "
                    "second derivatives need p >= 6")
            continue  # optional tie-break row, not satisfiable; skip
        rows.append(row)
        rhs.append(want)
        if status == "unique":
            coeffs = sol
            break
    if coeffs is None:
        raise ValueError(f"could not pin derivative stencil for p={p}, "
                         f"alpha={alpha}")
    w = [sum(c * b[i] for c, b in zip(coeffs, basis)) for i in range(n)]
    for m in range(p):
        want = Fraction(math.factorial(alpha)) if m == alpha else Fraction(0)
        if moment(w, m) != want:
            raise ValueError(
                f"derivative stencil for p={p}, alpha={alpha} fails exactness "
                f"on degree {m} (defective eigenvalue); second derivatives "
                "need p >= 6")
    return np.array(offs), w


def onesided_row(n: int, width: int, alpha: int):
    """Exact one-sided weights at node n using nodes 0..width-1."""
    rows = [[Fraction(i - n) ** m if m else Fraction(1) for i in range(width)]
            for m in range(width)]
    rhs = [Fraction(math.factorial(alpha)) if m == alpha else Fraction(0)
           for m in range(width)]
    status, w = _try_solve(rows, rhs)
    if status != "unique":
        raise ValueError(f"one-sided stencil solve failed at node {n}")
    return w


@dataclass(frozen=True, eq=False)
class DiffOperator:
    """Stencil data for d^alpha/dx_axis^alpha at unit spacing.

    weights are the interior row over `offsets`; boundary[r] replaces the
    row at distance r from the left edge, contracting nodes 0..bwidth-1.
    Right-edge rows are the mirror with sign (-1)^alpha.
    """
    axis: int
    alpha: int
    p: int
    offsets: np.ndarray
    weights: np.ndarray
    boundary: np.ndarray
    weights_exact: tuple
    boundary_exact: tuple

    @property
    def halfwidth(self) -> int:
        return int(self.offsets[-1])

    @property
    def bwidth(self) -> int:
        return self.boundary.shape[1]

    @property
    def min_points(self) -> int:
        return max(len(self.offsets), self.bwidth)


def build_diff_operator(fb: FilterBank, axis: int, alpha: int) -> DiffOperator:
    if axis not in (0, 1):
        raise ValueError(f"axis must be 0 or 1, got {axis}")
    if alpha not in (1, 2):
        raise ValueError(f"only first and second derivatives are supported, "
                         f"got alpha={alpha}")
    if alpha >= fb.p:
        raise ValueError(f"alpha={alpha} needs basis order > alpha, got "
                         f"p={fb.p} (accuracy exponent 1 - alpha/p <= 0)")
    offs, w_exact = interior_stencil(fb, alpha)
    width = fb.p + 1 if alpha == 1 else fb.p + 2
    rows_exact = tuple(tuple(onesided_row(n, width, alpha))
                       for n in range(offs[-1]))
    w = np.array([float(v) for v in w_exact])
    b = np.array([[float(v) for v in r] for r in rows_exact])
    b = b.reshape(len(rows_exact), width)
    w.setflags(write=False)
    b.setflags(write=False)
    return DiffOperator(axis=axis, alpha=alpha, p=fb.p, offsets=offs,
                        weights=w, boundary=b,
                        weights_exact=tuple(w_exact),
                        boundary_exact=rows_exact)


def apply_dense(op: DiffOperator, field: np.ndarray, spacing: float) -> np.ndarray:
    """Contract the stencil along op.axis on a dense field with given spacing."""
    v = np.moveaxis(np.asarray(field, dtype=float), op.axis, 0)
    n = v.shape[0]
    if n < op.min_points:
        raise ValueError(f"grid of {n} points along axis {op.axis} is too "
                         f"short for the order-{op.p} stencil")
    h = op.halfwidth
    out = np.empty_like(v)
    win = v[np.arange(n - 2 * h)[:, None] + np.arange(2 * h + 1)]
    out[h:n - h] = np.einsum("p,mp...->m...", op.weights, win)
    if h:
        sign = -1.0 if op.alpha % 2 else 1.0
        out[:h] = np.einsum("rp,p...->r...", op.boundary, v[:op.bwidth])
        out[n - h:] = sign * np.einsum(
            "rp,p...->r...", op.boundary[::-1, ::-1], v[n - op.bwidth:])
    return np.moveaxis(out, 0, op.axis) * spacing ** -op.alpha


def operator_table_text(op: DiffOperator) -> str:
    """Plain-text stencil tables, exact and float."""
    lines = [f"derivative axis={op.axis} alpha={op.alpha} p={op.p}", "",
             "[interior]  offset  weight"]
    for k, w in zip(op.offsets, op.weights_exact):
        lines.append(f"{int(k):+d}  {str(w):>14}  {float(w)!r}")
    lines.append("")
    lines.append(f"[boundary rows]  (one-sided over nodes 0..{op.bwidth - 1}; "
                 "right edge mirrored)")
    for r, row in enumerate(op.boundary_exact):
        lines.append(f"row {r}: " + "  ".join(str(w) for w in row))
        lines.append(" " * 7 + "  ".join(repr(float(w)) for w in row))
    return "\n".join(lines) + "\n"
