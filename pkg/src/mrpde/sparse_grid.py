"""Sparse multiresolution collocation grids in sorted coordinate-list form.

Positions are stored as integer coordinates on the finest admissible
lattice (cap units): a point of level j is a multiple of 2^(cap - j), and
its level and subband follow from the trailing-zero counts of its
coordinates, so one (n, 2) integer array carries the full dyadic index
set. Entries are kept strictly sorted by (level, subband, row-major
position); all structural operations (closure completion, prediction
zones, merge, prune) are bulk array passes followed by one sort, never
per-entry mutation.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .filters import FilterBank

_COORD_BITS = 17  # fits n0 * 2^cap up to 2^17 - 1


@dataclass(frozen=True)
class Domain:
    """Rectangular domain with n0 base cells per axis, refinable to `cap`."""
    n0: int
    cap: int
    lo: tuple = (0.0, 0.0)
    hi: tuple = (1.0, 1.0)

    def __post_init__(self):
        if self.n0 < 1 or self.cap < 0:
            raise ValueError("need n0 >= 1 and cap >= 0")
        if self.n0 << self.cap >= 1 << _COORD_BITS:
            raise ValueError(f"n0*2^cap = {self.n0 << self.cap} overflows the "
                             "position encoding")
        if not (self.hi[0] > self.lo[0] and self.hi[1] > self.lo[1]):
            raise ValueError("empty domain")

    @property
    def width(self) -> int:
        """Extent of the cap-unit lattice along each axis."""
        return self.n0 << self.cap

    def stride(self, j: int) -> int:
        return 1 << (self.cap - j)

    def npoints(self, j: int) -> int:
        return (self.n0 << j) + 1

    def spacing(self, j) -> np.ndarray:
        ext = np.array([self.hi[0] - self.lo[0], self.hi[1] - self.lo[1]])
        return ext / (self.n0 << j)

    def xy(self, pos: np.ndarray) -> np.ndarray:
        """Physical coordinates of cap-unit positions."""
        ext = np.array([self.hi[0] - self.lo[0], self.hi[1] - self.lo[1]])
        return np.asarray(self.lo) + pos * (ext / self.width)

    def level0_lattice(self) -> np.ndarray:
        c = np.arange(self.n0 + 1, dtype=np.int64) << self.cap
        g0, g1 = np.meshgrid(c, c, indexing="ij")
        return np.column_stack([g0.ravel(), g1.ravel()])


def _trailing_zeros(c: np.ndarray) -> np.ndarray:
    # exact for the coordinate range we admit (< 2^53)
    out = np.zeros(c.shape, dtype=np.int64)
    nz = c != 0
    out[nz] = np.log2(c[nz] & -c[nz]).astype(np.int64)
    return out


def levels_of(pos: np.ndarray, dom: Domain) -> np.ndarray:
    """Entry level: the finer of the two per-axis dyadic levels."""
    la = np.maximum(dom.cap - _trailing_zeros(pos), 0)
    la[pos == 0] = 0
    return la.max(axis=1)


def subbands_of(pos: np.ndarray, dom: Domain) -> np.ndarray:
    """0 on the coarsest block; else 1/2/3 for odd-along-axis-0/1/both."""
    la = np.maximum(dom.cap - _trailing_zeros(pos), 0)
    la[pos == 0] = 0
    j = la.max(axis=1)
    lam = (la[:, 0] == j).astype(np.int8) + 2 * (la[:, 1] == j).astype(np.int8)
    lam[j == 0] = 0
    return lam


def sort_keys(pos: np.ndarray, dom: Domain) -> np.ndarray:
    """Total order (level, subband, row-major position) packed in int64."""
    j = levels_of(pos, dom)
    lam = subbands_of(pos, dom).astype(np.int64)
    return (((j << 2) | lam) << (2 * _COORD_BITS)) \
        | (pos[:, 0] << _COORD_BITS) | pos[:, 1]


def _unique_pos(pos: np.ndarray, dom: Domain):
    key = sort_keys(pos, dom)
    _, idx = np.unique(key, return_index=True)
    return pos[idx]


@dataclass
class SparseField:
    """Sorted sparse set of collocation entries with per-variable data.

    values holds the collocated solution, coeffs the detail residual of
    each entry (the point value itself on the level-0 block). essential
    marks entries whose coefficient clears the threshold, buffer the rest
    (closure and prediction padding). Parallel arrays, one row per entry.
    """
    dom: Domain
    pos: np.ndarray
    values: np.ndarray
    coeffs: np.ndarray
    var_names: tuple
    essential: np.ndarray
    buffer: np.ndarray

    def __post_init__(self):
        self.key = sort_keys(self.pos, self.dom)
        if self.pos.min(initial=0) < 0 or self.pos.max(initial=0) > self.dom.width:
            raise ValueError("position outside the domain lattice")
        if np.any(np.diff(self.key) <= 0):
            raise ValueError("entries must be strictly sorted and unique")
        self.j = levels_of(self.pos, self.dom)
        self.lam = subbands_of(self.pos, self.dom)

    def __len__(self):
        return self.pos.shape[0]

    @property
    def nvars(self) -> int:
        return self.values.shape[1]

    def finest_level(self) -> int:
        return int(self.j.max(initial=0))

    def lookup(self, pos: np.ndarray):
        """(indices, found-mask) of positions in this field."""
        k = sort_keys(np.asarray(pos, dtype=np.int64), self.dom)
        i = np.searchsorted(self.key, k)
        i = np.minimum(i, len(self.key) - 1)
        found = self.key[i] == k
        return i, found

    def subset(self, mask: np.ndarray) -> "SparseField":
        return SparseField(self.dom, self.pos[mask], self.values[mask],
                           self.coeffs[mask], self.var_names,
                           self.essential[mask], self.buffer[mask])


def make_field(dom: Domain, pos: np.ndarray, values: np.ndarray,
               coeffs: np.ndarray, var_names,
               essential=None, buffer=None) -> SparseField:
    """Sort rows into the canonical order and build a field."""
    key = sort_keys(pos, dom)
    order = np.argsort(key, kind="stable")
    n = len(order)
    if essential is None:
        essential = np.zeros(n, dtype=bool)
    if buffer is None:
        buffer = np.zeros(n, dtype=bool)
    return SparseField(dom, pos[order], values[order], coeffs[order],
                       tuple(var_names), essential[order], buffer[order])


def significant_mask(field: SparseField, eps: float, scales=None) -> np.ndarray:
    """Entries whose detail clears eps in units of the per-variable scale."""
    s = np.ones(field.nvars) if scales is None else np.asarray(scales, dtype=float)
    hit = (np.abs(field.coeffs) >= eps * s).any(axis=1)
    hit &= field.j > 0
    return hit


# ---------------------------------------------------------------------------
# dependency closure


def _window_nodes(fb: FilterBank, dom: Domain, odd_coords: np.ndarray, j: int):
    """Coarse stencil node coordinates (m, p) for odd coordinates at level j."""
    s = dom.stride(j)
    m = ((odd_coords // s) - 1) >> 1
    start, ridx = fb.windows(dom.npoints(j - 1), m)
    nodes = (start[:, None] + np.arange(fb.p, dtype=np.int64)) * (2 * s)
    return nodes, ridx


def _axis_window_pairs(fb: FilterBank, dom: Domain, sel: np.ndarray,
                       axis: int, j: int) -> np.ndarray:
    """Stencil positions feeding `sel` entries along `axis` at level j."""
    nodes, _ = _window_nodes(fb, dom, sel[:, axis], j)
    other = np.repeat(sel[:, 1 - axis], fb.p)
    if axis == 0:
        return np.column_stack([nodes.ravel(), other])
    return np.column_stack([other, nodes.ravel()])


def closure_positions(dom: Domain, fb: FilterBank, pos: np.ndarray) -> np.ndarray:
    """Positions plus every entry their synthesis recursively touches.

    An odd-along-axis entry needs the p coarse nodes of its prediction
    window along that axis. A corner (odd-odd) entry needs the same-level
    row and column entries of its two windows, which in turn need their
    own coarser windows, so the walk runs finest to coarsest and expands
    same-level insertions before descending.
    """
    pos = _unique_pos(np.asarray(pos, dtype=np.int64), dom)
    if len(pos) == 0:
        return dom.level0_lattice()
    levels = levels_of(pos, dom)
    pend = {j: pos[levels == j] for j in range(1, int(levels.max()) + 1)}
    done = [dom.level0_lattice()]
    for j in range(int(levels.max()), 0, -1):
        cur = pend.pop(j, None)
        if cur is None or len(cur) == 0:
            continue
        cur = _unique_pos(cur, dom)
        lam = subbands_of(cur, dom)
        corners = cur[lam == 3]
        if len(corners):
            # window entries of a corner keep one odd coordinate: same level
            ext = [_axis_window_pairs(fb, dom, corners, axis, j)
                   for axis in (0, 1)]
            cur = _unique_pos(np.vstack([cur] + ext), dom)
            lam = subbands_of(cur, dom)
            if levels_of(cur, dom).min(initial=j) != j:
                raise AssertionError("corner window left its level")
        done.append(cur)
        deps = [_axis_window_pairs(fb, dom, cur[lam == l], axis, j)
                for axis, l in ((0, 1), (1, 2)) if np.any(lam == l)]
        if deps:
            deps = _unique_pos(np.vstack(deps), dom)
            dl = levels_of(deps, dom)
            if dl.max(initial=0) >= j:
                raise AssertionError("dependency walk went up-level")
            for jj in np.unique(dl):
                grp = deps[dl == jj]
                if jj == 0:
                    done.append(grp)
                elif jj in pend and len(pend[jj]):
                    pend[jj] = np.vstack([pend[jj], grp])
                else:
                    pend[jj] = grp
    return _unique_pos(np.vstack(done), dom)


# ---------------------------------------------------------------------------
# prediction zone


def zone_positions(dom: Domain, pos: np.ndarray, width: int = 1,
                   with_children: bool = True):
    """Same-level box neighbours and half-stride children of each entry.

    Returns (zone, capped) where capped is the number of entries at the
    level cap whose children were requested but cannot exist.
    """
    pos = np.asarray(pos, dtype=np.int64)
    if len(pos) == 0:
        return pos.reshape(0, 2), 0
    levels = levels_of(pos, dom)
    out = []
    capped = 0
    d = np.arange(-width, width + 1, dtype=np.int64)
    box = np.array([(a, b) for a in d for b in d if a or b])
    child = np.array([(a, b) for a in (-1, 0, 1) for b in (-1, 0, 1) if a or b])
    for j in np.unique(levels):
        sel = pos[levels == j]
        s = dom.stride(j)
        pts = [(sel[:, None, :] + box[None, :, :] * s).reshape(-1, 2)]
        if with_children:
            if j < dom.cap:
                half = s >> 1
                pts.append((sel[:, None, :] + child[None, :, :] * half
                            ).reshape(-1, 2))
            else:
                capped += len(sel)
        grp = np.vstack(pts)
        ok = (grp >= 0).all(axis=1) & (grp <= dom.width).all(axis=1)
        out.append(grp[ok])
    return _unique_pos(np.vstack(out), dom), capped


# ---------------------------------------------------------------------------
# the four bulk operations


def compress(coeff_sets, eps: float, fb: FilterBank, dom: Domain | None = None,
             var_names=("u",), scales=None) -> SparseField:
    """Sparse field from dense coefficients: significant details, their
    closure, and the coarsest block; values are the thresholded field's.
    """
    from .transform import CoefficientSet, detail_mask, inverse

    if isinstance(coeff_sets, CoefficientSet):
        coeff_sets = [coeff_sets]
    cs0 = coeff_sets[0]
    if len(coeff_sets) != len(var_names):
        raise ValueError("one coefficient set per variable required")
    if dom is None:
        dom = Domain(cs0.n0, cs0.j_max)
    if dom.n0 != cs0.n0 or cs0.j_max > dom.cap:
        raise ValueError("coefficient layout does not fit the domain")
    s = np.ones(len(coeff_sets)) if scales is None else np.asarray(scales)
    if eps <= 0:
        raise ValueError(f"threshold must be positive, got {eps}")

    mask = detail_mask(cs0)
    sig = np.zeros(cs0.data.shape, dtype=bool)
    for cs, sc in zip(coeff_sets, s):
        sig |= np.abs(cs.data) >= eps * sc
    sig &= mask

    step = dom.stride(cs0.j_max)  # dense lattice may sit above finer cap levels
    ii, jj = np.nonzero(sig)
    ess_pos = np.column_stack([ii, jj]).astype(np.int64) * step
    pos = closure_positions(dom, fb, ess_pos)

    kept, vals = [], []
    for cs in coeff_sets:
        retained = np.where(sig, cs.data, 0.0)
        retained[~mask] = cs.data[~mask]
        rcs = CoefficientSet(retained, cs.n0, cs.j_max)
        vals.append(inverse(rcs, fb))
        kept.append(retained)
    pi = pos[:, 0] // step
    pj = pos[:, 1] // step
    values = np.column_stack([v[pi, pj] for v in vals])
    coeffs = np.column_stack([k[pi, pj] for k in kept])
    essential = sig[pi, pj]
    f = make_field(dom, pos, values, coeffs, var_names,
                   essential=essential, buffer=~essential)
    return f


def merge(base: SparseField, additions: np.ndarray, fb: FilterBank) -> SparseField:
    """Union with new positions (plus their closure); new entries get
    zero detail and interpolated values."""
    additions = np.asarray(additions, dtype=np.int64).reshape(-1, 2)
    if len(additions) == 0:
        return base
    if additions.min() < 0 or additions.max() > base.dom.width:
        raise ValueError("merge position outside the domain lattice")
    want = closure_positions(base.dom, fb, additions)
    _, found = base.lookup(want)
    new_pos = want[~found]
    if len(new_pos) == 0:
        return base
    from .plans import reconstruct_at
    new_vals = reconstruct_at(base, new_pos, fb)
    n_new = len(new_pos)
    pos = np.vstack([base.pos, new_pos])
    values = np.vstack([base.values, new_vals])
    coeffs = np.vstack([base.coeffs, np.zeros((n_new, base.nvars))])
    essential = np.concatenate([base.essential, np.zeros(n_new, dtype=bool)])
    buf = np.concatenate([base.buffer, np.ones(n_new, dtype=bool)])
    return make_field(base.dom, pos, values, coeffs, base.var_names,
                      essential=essential, buffer=buf)


def prune(field: SparseField, eps: float, fb: FilterBank, scales=None,
          zone_width: int = 1) -> SparseField:
    """Drop entries outside the essential set, its prediction zone, and
    the closure of both. Coefficients must be current."""
    ess = significant_mask(field, eps, scales)
    zone, _ = zone_positions(field.dom, field.pos[ess], width=zone_width,
                             with_children=True)
    keep_pos = np.vstack([field.pos[ess], zone])
    want = closure_positions(field.dom, fb, keep_pos)
    idx, found = field.lookup(want)
    keep = np.zeros(len(field), dtype=bool)
    keep[idx[found]] = True
    keep |= field.j == 0
    out = field.subset(keep)
    out.essential = significant_mask(out, eps, scales)
    out.buffer = ~out.essential
    return out


def line_slice(field: SparseField, axis: int, line_index: int, level: int):
    """Indices of retained entries along one level-`level` grid line.

    The line runs along `axis`; line_index fixes the other coordinate on
    the level lattice. Entries come back in ascending position order.
    """
    if axis not in (0, 1):
        raise ValueError(f"axis must be 0 or 1, got {axis}")
    n = field.dom.npoints(level)
    if not 0 <= line_index < n:
        raise ValueError(f"line {line_index} outside level-{level} lattice")
    s = field.dom.stride(level)
    cand = np.empty((n, 2), dtype=np.int64)
    cand[:, axis] = np.arange(n, dtype=np.int64) * s
    cand[:, 1 - axis] = line_index * s
    idx, found = field.lookup(cand)
    return idx[found]


def validate(field: SparseField, fb: FilterBank) -> None:
    """Invariant walk: order, bounds, level-0 completeness, closure."""
    if np.any(np.diff(field.key) <= 0):
        raise AssertionError("entries not strictly sorted")
    _, found = field.lookup(field.dom.level0_lattice())
    if not found.all():
        raise AssertionError("coarsest block incomplete")
    want = closure_positions(field.dom, fb, field.pos)
    if len(want) != len(field):
        raise AssertionError("closure violated: field is missing "
                             f"{len(want) - len(field)} dependency entries")
    _, found = field.lookup(want)
    if not found.all():
        raise AssertionError("closure violated")
