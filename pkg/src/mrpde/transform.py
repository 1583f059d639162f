"""Dense forward/inverse wavelet transforms and coefficient thresholding.

The transform is a prediction-only lifting scheme: scaling coefficients are
point values on the even subgrid, details are interpolation residuals at
odd points. Levels are processed in place on one square array whose strided
views expose the per-level, per-subband detail blocks. The 2D transform is
separable: one 1D pass along each axis per level, and each level touches
only its own and the next-coarser lattice, so the analysis of one level is
independent of the others.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .filters import FilterBank


def _levels_for(n: int, n0: int) -> int:
    """j_max such that n = n0*2^j_max + 1, or raise."""
    if n < n0 + 1 or (n - 1) % n0:
        raise ValueError(f"grid of {n} points does not fit {n0} base cells")
    q = (n - 1) // n0
    j = q.bit_length() - 1
    if 1 << j != q:
        raise ValueError(f"grid of {n} points is not a dyadic refinement of "
                         f"{n0} base cells")
    return j


@dataclass
class CoefficientSet:
    """Multiresolution coefficients of a 2D field, stored in place.

    data holds s0 on the coarsest lattice and detail residuals everywhere
    else; detail(j, lam) returns the strided view of one subband. lam=1 is
    odd along axis 0, lam=2 odd along axis 1, lam=3 odd along both.
    """
    data: np.ndarray
    n0: int
    j_max: int

    def __post_init__(self):
        n = self.data.shape[0]
        if self.data.ndim != 2 or self.data.shape[1] != n:
            raise ValueError(
                f"coefficient array must be 2D square, got {self.data.shape}")
        if _levels_for(n, self.n0) != self.j_max:
            raise ValueError("level structure does not match array shape")

    @property
    def s0(self) -> np.ndarray:
        s = 1 << self.j_max
        return self.data[::s, ::s]

    def detail(self, j: int, lam: int) -> np.ndarray:
        if not 1 <= j <= self.j_max or lam not in (1, 2, 3):
            raise ValueError(f"no subband (j={j}, lam={lam})")
        s = 1 << (self.j_max - j)
        r0 = slice(s, None, 2 * s) if lam in (1, 3) else slice(None, None, 2 * s)
        r1 = slice(s, None, 2 * s) if lam in (2, 3) else slice(None, None, 2 * s)
        return self.data[r0, r1]

    def subbands(self):
        for j in range(1, self.j_max + 1):
            for lam in (1, 2, 3):
                yield j, lam, self.detail(j, lam)

    def copy(self) -> "CoefficientSet":
        return CoefficientSet(self.data.copy(), self.n0, self.j_max)


def predict_rows(coarse: np.ndarray, fb: FilterBank, axis: int) -> np.ndarray:
    """Predicted odd-point values from coarse samples along one axis."""
    v = np.moveaxis(coarse, axis, 0)
    nc = v.shape[0]
    starts, ridx = fb.windows(nc, np.arange(nc - 1))
    win = v[starts[:, None] + np.arange(fb.p)]  # (n_odd, p, ...)
    out = np.einsum("mp,mp...->m...", fb.rows[ridx], win)
    return np.moveaxis(out, 0, axis)


def forward(values: np.ndarray, fb: FilterBank, n0: int) -> CoefficientSet:
    """Analyze a dense field on the (n0*2^j_max + 1)^2 closed grid."""
    a = np.array(values, dtype=float, copy=True)
    if not np.isfinite(a).all():
        raise ValueError("field contains non-finite values")
    j_max = _levels_for(a.shape[0], n0)
    cs = CoefficientSet(a, n0, j_max)
    for j in range(j_max, 0, -1):
        s = 1 << (j_max - j)
        v = a[::s, ::s]
        v[1::2, :] -= predict_rows(v[0::2, :], fb, axis=0)
        v[:, 1::2] -= predict_rows(v[:, 0::2], fb, axis=1)
    return cs


def inverse(cs: CoefficientSet, fb: FilterBank) -> np.ndarray:
    """Synthesize the dense field; exact inverse of forward."""
    a = cs.data.copy()
    for j in range(1, cs.j_max + 1):
        s = 1 << (cs.j_max - j)
        v = a[::s, ::s]
        v[:, 1::2] += predict_rows(v[:, 0::2], fb, axis=1)
        v[1::2, :] += predict_rows(v[0::2, :], fb, axis=0)
    return a


def detail_mask(cs: CoefficientSet) -> np.ndarray:
    """Boolean mask of all detail positions (everything but the s0 lattice)."""
    m = np.ones(cs.data.shape[:2], dtype=bool)
    s = 1 << cs.j_max
    m[::s, ::s] = False
    return m


def threshold(cs: CoefficientSet, eps: float) -> CoefficientSet:
    """Zero every detail with |d| < eps; s0 is always kept."""
    if eps <= 0:
        raise ValueError(f"threshold must be positive, got {eps}")
    out = cs.copy()
    kill = detail_mask(cs) & (np.abs(out.data) < eps)
    out.data[kill] = 0.0
    return out
