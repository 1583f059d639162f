"""Compiled gather plans over a sparse field.

Everything the solver does per right-hand-side evaluation (interpolating
ghost values, refreshing detail coefficients, applying difference stencils)
reduces to weighted gathers from one flat value array. The gather
indices depend only on the grid structure, so a Workset compiles them
once per structure change (searchsorted passes) and each evaluation is a
handful of einsum contractions.

Index spaces: "ext" is the union of retained entries and ghost points,
sorted by the canonical key; gathers index ext arrays of shape
(n_ext, nvars). Ghost points carry interpolated values and zero detail.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .derivative import DiffOperator, build_diff_operator
from .filters import FilterBank
from .sparse_grid import (Domain, SparseField, levels_of, sort_keys,
                          subbands_of, _unique_pos, _window_nodes)


def _find(keys: np.ndarray, pos: np.ndarray, dom: Domain):
    k = sort_keys(pos, dom)
    i = np.searchsorted(keys, k)
    i = np.minimum(i, len(keys) - 1)
    return i, keys[i] == k


def _require(found: np.ndarray, what: str):
    if not found.all():
        raise AssertionError(f"{int((~found).sum())} {what} positions missing "
                             "from the extended index set")


# ---------------------------------------------------------------------------
# effective stencil levels


class PaintMap:
    """Finest nearby entry level, queryable at any position.

    Each retained detail entry paints the cells of its own level within a
    Chebyshev radius of `radius` cells. A query point takes the finest
    painted level it falls in, floored by its own dyadic level, so
    difference stencils shrink to the local resolution before they span a
    refined region.
    """

    def __init__(self, field: SparseField, radius: int):
        self.dom = field.dom
        self.radius = radius
        self.cells = {}
        d = np.arange(-radius, radius + 1, dtype=np.int64)
        for j in range(1, field.finest_level() + 1):
            sel = field.pos[field.j == j]
            if not len(sel):
                continue
            ncell = field.dom.n0 << j
            c = np.minimum(sel // field.dom.stride(j), ncell - 1)
            key = np.unique(c[:, 0] * (ncell + 1) + c[:, 1])
            c0, c1 = key // (ncell + 1), key % (ncell + 1)
            key = np.unique(np.clip(c0[:, None] + d, 0, ncell - 1)
                            * (ncell + 1) + c1[:, None])
            c0, c1 = key // (ncell + 1), key % (ncell + 1)
            self.cells[j] = np.unique(
                c0[:, None] * (ncell + 1) + np.clip(c1[:, None] + d, 0,
                                                    ncell - 1))

    def levels(self, pos: np.ndarray) -> np.ndarray:
        own = levels_of(pos, self.dom)
        hit = np.zeros(len(pos), dtype=np.int64)
        for j, painted in self.cells.items():
            ncell = self.dom.n0 << j
            c = np.minimum(pos // self.dom.stride(j), ncell - 1)
            key = c[:, 0] * (ncell + 1) + c[:, 1]
            i = np.searchsorted(painted, key)
            i = np.minimum(i, len(painted) - 1)
            here = painted[i] == key
            hit[here] = j  # ascending j, so the finest hit wins
        return np.maximum(own, hit)


# ---------------------------------------------------------------------------
# stencil geometry


def _stencil_nodes(op: DiffOperator, dom: Domain, pos: np.ndarray,
                   lev: np.ndarray, axis: int):
    """Per-row node indices (m, K) on the level lattice, weights (m, K),
    already scaled by spacing**-alpha; K covers interior and edge rows."""
    m = len(pos)
    hw, bw = op.halfwidth, op.bwidth
    K = max(2 * hw + 1, bw)
    nodes = np.zeros((m, K), dtype=np.int64)
    w = np.zeros((m, K))
    n_idx = pos[:, axis] >> (dom.cap - lev)  # == // stride
    npts = (dom.n0 << lev) + 1
    if np.any(npts < op.min_points):
        raise ValueError(f"level lattice has fewer than {op.min_points} "
                         "points; raise the base resolution")
    interior = (n_idx >= hw) & (n_idx <= npts - 1 - hw)
    left = n_idx < hw
    right = ~interior & ~left
    ii = np.nonzero(interior)[0]
    nodes[ii, :2 * hw + 1] = n_idx[ii, None] + np.arange(-hw, hw + 1)
    w[ii, :2 * hw + 1] = op.weights
    il = np.nonzero(left)[0]
    nodes[il, :bw] = np.arange(bw)
    w[il, :bw] = op.boundary[n_idx[il]]
    ir = np.nonzero(right)[0]
    nodes[ir, :bw] = (npts[ir] - bw)[:, None] + np.arange(bw)
    w[ir, :bw] = (-1.0) ** op.alpha * op.boundary[npts[ir] - 1 - n_idx[ir], ::-1]
    h = dom.spacing(0)[axis] / (1 << lev).astype(float)
    w *= (h ** -float(op.alpha))[:, None]
    return nodes, w


def _stencil_targets(ops, dom: Domain, pos: np.ndarray, lev: np.ndarray):
    """All positions any of the operators' rows at `pos` will read."""
    out = []
    for (axis, _alpha), op in ops.items():
        nodes, _ = _stencil_nodes(op, dom, pos, lev, axis)
        stride = dom.stride(0) >> lev  # == stride(lev)
        tpos = np.empty(nodes.shape + (2,), dtype=np.int64)
        tpos[..., axis] = nodes * stride[:, None]
        tpos[..., 1 - axis] = pos[:, None, 1 - axis]
        out.append(tpos.reshape(-1, 2))
    return _unique_pos(np.vstack(out), dom)


# ---------------------------------------------------------------------------
# ghost discovery: value dependencies of the synthesis


def _ghost_closure(dom: Domain, fb: FilterBank, grid_key: np.ndarray,
                   seed: np.ndarray) -> np.ndarray:
    """Seed positions absent from the grid, plus every absent position
    their interpolation recursively reads (by value; detail sources are
    gathered separately and default to zero off-grid)."""
    seed = _unique_pos(seed, dom)
    _, present = _find(grid_key, seed, dom)
    seed = seed[~present]
    if not len(seed):
        return seed.reshape(0, 2)
    levels = levels_of(seed, dom)
    if np.any(levels == 0):
        raise AssertionError("coarsest block incomplete")
    pend = {j: seed[levels == j] for j in np.unique(levels)}
    ghosts = []
    for j in range(int(levels.max()), 0, -1):
        cur = pend.pop(j, None)
        if cur is None or not len(cur):
            continue
        cur = _unique_pos(cur, dom)
        lam = subbands_of(cur, dom)
        corners = cur[lam == 3]
        if len(corners):
            # corner synthesis reads same-level values along axis 0 only
            nodes, _ = _window_nodes(fb, dom, corners[:, 0], j)
            other = np.repeat(corners[:, 1], fb.p)
            pair = np.column_stack([nodes.ravel(), other])
            _, present = _find(grid_key, pair, dom)
            cur = _unique_pos(np.vstack([cur, pair[~present]]), dom)
            lam = subbands_of(cur, dom)
        ghosts.append(cur)
        deps = []
        for axis, l in ((0, 1), (1, 2)):
            sel = cur[lam == l]
            if not len(sel):
                continue
            nodes, _ = _window_nodes(fb, dom, sel[:, axis], j)
            other = np.repeat(sel[:, 1 - axis], fb.p)
            pair = (np.column_stack([nodes.ravel(), other]) if axis == 0
                    else np.column_stack([other, nodes.ravel()]))
            deps.append(pair)
        if deps:
            deps = _unique_pos(np.vstack(deps), dom)
            _, present = _find(grid_key, deps, dom)
            deps = deps[~present]
            dl = levels_of(deps, dom)
            if len(deps) and dl.min() == 0:
                raise AssertionError("coarsest block incomplete")
            for jj in np.unique(dl):
                grp = deps[dl == jj]
                if jj in pend and len(pend[jj]):
                    pend[jj] = np.vstack([pend[jj], grp])
                else:
                    pend[jj] = grp
    if not ghosts:
        return seed[:0]
    return _unique_pos(np.vstack(ghosts), dom)


# ---------------------------------------------------------------------------
# compiled passes


@dataclass
class _ReconPass:
    dst: np.ndarray            # ext rows to fill, one level/subband group
    src: np.ndarray            # (m, p) ext rows of value sources
    w: np.ndarray              # (m, p) prediction weights
    csrc: np.ndarray = None    # (m, p) ext rows of detail sources (corners)
    cw: np.ndarray = None


@dataclass
class _ForwardPass:
    dst: np.ndarray
    src: np.ndarray
    w: np.ndarray
    from_coeffs: bool          # second corner stage reads stage-one output


@dataclass
class _DerivPlan:
    rows: np.ndarray           # ext rows the outputs land on
    src: np.ndarray            # (m, K) ext rows, int32
    w: np.ndarray              # (m, K) scaled weights


def _gather_pairs(fb, dom, sel, axis, j):
    nodes, ridx = _window_nodes(fb, dom, sel[:, axis], j)
    other = np.repeat(sel[:, 1 - axis], fb.p).reshape(-1, fb.p)
    if axis == 0:
        pair = np.stack([nodes, other], axis=-1)
    else:
        pair = np.stack([other, nodes], axis=-1)
    return pair.reshape(-1, 2), fb.rows[ridx]


def _compile_recon(dom, fb, ext_pos, ext_key, fill_mask):
    """Interpolation passes for masked rows, coarse to fine; within a
    level the odd-even/even-odd groups run before the corners that read
    them."""
    passes = []
    lev = levels_of(ext_pos, dom)
    lam = subbands_of(ext_pos, dom)
    for j in range(1, int(lev.max(initial=0)) + 1):
        for l in (1, 2, 3):
            rows = np.nonzero(fill_mask & (lev == j) & (lam == l))[0]
            if not len(rows):
                continue
            sel = ext_pos[rows]
            axis = 1 if l == 2 else 0
            pair, w = _gather_pairs(fb, dom, sel, axis, j)
            idx, found = _find(ext_key, pair, dom)
            _require(found, "interpolation source")
            ps = _ReconPass(rows, idx.reshape(-1, fb.p).astype(np.int32), w)
            if l == 3:
                pair, cw = _gather_pairs(fb, dom, sel, 1, j)
                cidx, found = _find(ext_key, pair, dom)
                cidx[~found] = 0
                cw = cw.reshape(-1, fb.p).copy()
                cw[~found.reshape(-1, fb.p)] = 0.0
                ps.csrc = cidx.reshape(-1, fb.p).astype(np.int32)
                ps.cw = cw
            passes.append(ps)
    return passes


def _execute_recon(passes, values, coeffs):
    for ps in passes:
        pred = np.einsum("mp,mpv->mv", ps.w, values[ps.src])
        if ps.csrc is None:
            values[ps.dst] = pred
        else:
            values[ps.dst] = np.einsum("mp,mpv->mv", ps.cw,
                                       coeffs[ps.csrc]) + pred


def _compile_forward(dom, fb, ext_pos, ext_key, grid_mask):
    """Analysis passes refreshing detail coefficients of retained rows
    from current values; corners subtract the axis-0 residual first and
    correct with neighbouring detail rows second."""
    passes = []
    lev = levels_of(ext_pos, dom)
    lam = subbands_of(ext_pos, dom)
    for j in range(1, int(lev.max(initial=0)) + 1):
        at = grid_mask & (lev == j)
        for l in (1, 2, 3):
            rows = np.nonzero(at & (lam == l))[0]
            if not len(rows):
                continue
            sel = ext_pos[rows]
            axis = 1 if l == 2 else 0
            pair, w = _gather_pairs(fb, dom, sel, axis, j)
            idx, found = _find(ext_key, pair, dom)
            _require(found, "analysis source")
            passes.append(_ForwardPass(
                rows, idx.reshape(-1, fb.p).astype(np.int32), w, False))
            if l == 3:
                pair, w2 = _gather_pairs(fb, dom, sel, 1, j)
                idx, found = _find(ext_key, pair, dom)
                _require(found, "corner analysis source")
                passes.append(_ForwardPass(
                    rows, idx.reshape(-1, fb.p).astype(np.int32), w2, True))
    return passes


def _execute_forward(passes, values, coeffs):
    for ps in passes:
        pool = coeffs if ps.from_coeffs else values
        pred = np.einsum("mp,mpv->mv", ps.w, pool[ps.src])
        if ps.from_coeffs:
            coeffs[ps.dst] -= pred
        else:
            coeffs[ps.dst] = values[ps.dst] - pred


# ---------------------------------------------------------------------------
# the workset


class Workset:
    """Ghost set and compiled plans for one grid structure.

    depth=1 provides derivatives at retained entries. depth=2 additionally
    provides them on the first ghost ring, so composed first-derivative
    fluxes can be differenced once more without touching the structure.
    """

    def __init__(self, field: SparseField, fb: FilterBank, alphas=(1,),
                 depth: int = 1, paint_radius: int | None = None):
        if depth not in (1, 2):
            raise ValueError("derivative composition depth must be 1 or 2")
        dom = field.dom
        self.dom, self.fb, self.depth = dom, fb, depth
        self.nvars = field.nvars
        radius = fb.p // 2 + 1 if paint_radius is None else paint_radius
        self.paint = PaintMap(field, radius)
        ops = {}
        for alpha in alphas:
            op = build_diff_operator(fb, 0, alpha)
            ops[(0, alpha)] = op
            ops[(1, alpha)] = build_diff_operator(fb, 1, alpha)

        grid_key = field.key
        lev_grid = self.paint.levels(field.pos)
        t1 = _stencil_targets(ops, dom, field.pos, lev_grid)
        _, present = _find(grid_key, t1, dom)
        ring1 = t1[~present]
        tier1_pos = _unique_pos(np.vstack([field.pos, ring1]), dom)
        seeds = [ring1]
        if depth == 2:
            lev_t1 = self.paint.levels(tier1_pos)
            t2 = _stencil_targets(ops, dom, tier1_pos, lev_t1)
            _, present = _find(grid_key, t2, dom)
            seeds.append(t2[~present])
        ghosts = _ghost_closure(dom, fb, grid_key, np.vstack(seeds))

        ext_pos = np.vstack([field.pos, ghosts])
        key = sort_keys(ext_pos, dom)
        order = np.argsort(key, kind="stable")
        self.ext_pos, self.ext_key = ext_pos[order], key[order]
        self.n_ext = len(self.ext_pos)
        self.is_ghost = np.concatenate(
            [np.zeros(len(field), bool), np.ones(len(ghosts), bool)])[order]
        self.grid_rows, found = _find(self.ext_key, field.pos, dom)
        _require(found, "retained")

        lev0 = levels_of(self.ext_pos, dom) == 0
        self.lev0_rows = np.nonzero(lev0 & ~self.is_ghost)[0]
        self.recon = _compile_recon(dom, fb, self.ext_pos, self.ext_key,
                                    self.is_ghost)
        self.forward = _compile_forward(dom, fb, self.ext_pos, self.ext_key,
                                        ~self.is_ghost)
        self.plans = {}
        for tier, tpos in (("grid", field.pos),) + (
                (("ext", tier1_pos),) if depth == 2 else ()):
            lev = self.paint.levels(tpos)
            rows, found = _find(self.ext_key, tpos, dom)
            _require(found, "stencil output")
            for (axis, alpha), op in ops.items():
                nodes, w = _stencil_nodes(op, dom, tpos, lev, axis)
                stride = (dom.stride(0) >> lev)[:, None]
                pair = np.empty(nodes.shape + (2,), dtype=np.int64)
                pair[..., axis] = nodes * stride
                pair[..., 1 - axis] = tpos[:, None, 1 - axis]
                idx, found = _find(self.ext_key, pair.reshape(-1, 2), dom)
                _require(found, "stencil source")
                self.plans[(axis, alpha, tier)] = _DerivPlan(
                    rows, idx.reshape(nodes.shape).astype(np.int32), w)

        # boundary bookkeeping for condition enforcement
        self.boundary_rows = {}
        for axis in (0, 1):
            for side, coord in ((0, 0), (1, dom.width)):
                self.boundary_rows[(axis, side)] = np.nonzero(
                    self.ext_pos[:, axis] == coord)[0]

    # -- per-evaluation entry points ---------------------------------------

    def scatter(self, grid_values: np.ndarray) -> np.ndarray:
        out = np.zeros((self.n_ext, grid_values.shape[1]))
        out[self.grid_rows] = grid_values
        return out

    def fill(self, values: np.ndarray) -> np.ndarray:
        """Refresh detail coefficients from current retained values, then
        interpolate every ghost row in place. Returns the coefficients."""
        coeffs = np.zeros_like(values)
        coeffs[self.lev0_rows] = values[self.lev0_rows]
        _execute_forward(self.forward, values, coeffs)
        _execute_recon(self.recon, values, coeffs)
        return coeffs

    def derivative(self, values: np.ndarray, axis: int, alpha: int,
                   tier: str = "grid") -> np.ndarray:
        plan = self.plans[(axis, alpha, tier)]
        out = np.zeros_like(values)
        # stencils annihilate constants, so differencing against the output
        # point's own value costs nothing and keeps uniform fields at 0.0
        rel = values[plan.src] - values[plan.rows][:, None, :]
        out[plan.rows] = np.einsum("mk,mkv->mv", plan.w, rel)
        return out

    def gather_grid(self, values: np.ndarray) -> np.ndarray:
        return values[self.grid_rows]

    def grid_coeffs(self, values_grid: np.ndarray) -> np.ndarray:
        """Detail coefficients of the retained entries for given values."""
        v = self.scatter(values_grid)
        c = self.fill(v)
        return c[self.grid_rows]


# ---------------------------------------------------------------------------
# structure-light helpers built on the same passes


def field_coeffs(field: SparseField, fb: FilterBank) -> np.ndarray:
    """Detail coefficients of every entry from its current values. Closure
    completion guarantees all analysis sources are retained, so no ghost
    machinery is involved."""
    passes = _compile_forward(field.dom, fb, field.pos, field.key,
                              np.ones(len(field), dtype=bool))
    coeffs = np.zeros_like(field.values)
    lev0 = field.j == 0
    coeffs[lev0] = field.values[lev0]
    _execute_forward(passes, field.values, coeffs)
    return coeffs


def reconstruct_at(field: SparseField, new_pos: np.ndarray,
                   fb: FilterBank) -> np.ndarray:
    """Values of the sparse synthesis at positions absent from the field
    (their own details taken as zero). new_pos must already contain its
    own absent dependencies, as closure completion guarantees."""
    dom = field.dom
    new_pos = np.asarray(new_pos, dtype=np.int64).reshape(-1, 2)
    if np.any(levels_of(new_pos, dom) == 0):
        raise AssertionError("coarsest block incomplete")
    all_pos = np.vstack([field.pos, new_pos])
    key = sort_keys(all_pos, dom)
    order = np.argsort(key, kind="stable")
    key = key[order]
    if np.any(np.diff(key) == 0):
        raise ValueError("reconstruction targets collide with retained "
                         "entries")
    all_pos = all_pos[order]
    is_new = np.concatenate(
        [np.zeros(len(field), bool), np.ones(len(new_pos), bool)])[order]
    values = np.zeros((len(all_pos), field.nvars))
    coeffs = np.zeros_like(values)
    values[~is_new] = field.values
    coeffs[~is_new] = field.coeffs
    passes = _compile_recon(dom, fb, all_pos, key, is_new)
    _execute_recon(passes, values, coeffs)
    idx, found = _find(key, new_pos, dom)
    _require(found, "reconstruction target")
    return values[idx]


def to_dense(field: SparseField, fb: FilterBank, level: int | None = None):
    """Collocate the sparse synthesis on the full closed lattice of the
    given level (default: the finest retained level). Returns an array of
    shape ((n0 2^level + 1),) * 2 + (nvars,)."""
    if level is None:
        level = field.finest_level()
    if level < field.finest_level():
        raise ValueError("dense target coarser than the finest retained "
                         "entry")
    dom = field.dom
    n = dom.npoints(level)
    s = dom.stride(level)
    c = np.arange(n, dtype=np.int64) * s
    g0, g1 = np.meshgrid(c, c, indexing="ij")
    lattice = np.column_stack([g0.ravel(), g1.ravel()])
    idx, found = field.lookup(lattice)
    out = np.empty((n * n, field.nvars))
    out[found] = field.values[idx[found]]
    if np.any(~found):
        out[~found] = reconstruct_at(field, lattice[~found], fb)
    return out.reshape(n, n, field.nvars)
