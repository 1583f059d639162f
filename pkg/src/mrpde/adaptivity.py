"""Grid adaptation around the time stepper.

predict() widens a field so the next step can land anywhere inside the
prediction zone of its significant details. After a trial step,
check_significance() asks whether any detail that now clears the
threshold has outrun that zone; if so the step is discarded, the zone is
widened near the offenders, and the step recomputed. prune() (from the
grid module) then drops whatever the accepted step no longer needs.
"""
from __future__ import annotations

import numpy as np

from .filters import FilterBank
from .plans import field_coeffs
from .sparse_grid import (SparseField, make_field, merge, prune,
                          significant_mask, zone_positions)
from .time_integrator import StepController, TableauPair, rk_step


class RefinementCapError(RuntimeError):
    """The solution demanded resolution beyond the configured level cap."""


def _check_cap_mode(cap_mode: str):
    if cap_mode not in ("error", "saturate"):
        raise ValueError(f"cap_mode must be 'error' or 'saturate', got "
                         f"{cap_mode!r}")


def predict(field: SparseField, eps: float, fb: FilterBank, scales=None,
            zone_width: int = 1, cap_mode: str = "error") -> SparseField:
    """Zone-augmented grid for the next step: every essential entry gets
    its same-level neighbourhood and its children, with closure. New
    entries carry interpolated values and zero detail. Flags must be
    current (compress, prune and step_adaptive all leave them so)."""
    _check_cap_mode(cap_mode)
    zone, capped = zone_positions(field.dom, field.pos[field.essential],
                                  width=zone_width, with_children=True)
    if capped and cap_mode == "error":
        raise RefinementCapError(
            f"{capped} significant entries sit at the level cap "
            f"{field.dom.cap}; raise j_max_cap or relax the threshold")
    return merge(field, zone, fb)


def check_significance(field: SparseField, eps: float, scales=None,
                       zone_width: int = 1,
                       cap_mode: str = "error") -> np.ndarray:
    """Row indices of entries whose detail clears eps while part of their
    prediction zone is missing from the grid. Such details sit on the
    outermost shell of the predicted region (or at its finest level) and
    invalidate the step that produced them. Coefficients must be current.
    """
    _check_cap_mode(cap_mode)
    sig = significant_mask(field, eps, scales)
    rows = np.flatnonzero(sig)
    if len(rows) == 0:
        return rows
    dom = field.dom
    d = np.arange(-zone_width, zone_width + 1, dtype=np.int64)
    box = np.array([(a, b) for a in d for b in d if a or b], dtype=np.int64)
    child = np.array([(a, b) for a in (-1, 0, 1) for b in (-1, 0, 1)
                      if a or b], dtype=np.int64)
    lev = field.j[rows]
    bad = np.zeros(len(rows), dtype=bool)
    for j in np.unique(lev):
        m = lev == j
        sel = field.pos[rows[m]]
        s = dom.stride(j)
        offs = box * s
        if j < dom.cap:
            offs = np.vstack([offs, child * (s >> 1)])
        elif cap_mode == "error":
            raise RefinementCapError(
                f"{m.sum()} significant entries sit at the level cap "
                f"{dom.cap}; raise j_max_cap or relax the threshold")
        cand = (sel[:, None, :] + offs[None, :, :]).reshape(-1, 2)
        inside = (cand >= 0).all(axis=1) & (cand <= dom.width).all(axis=1)
        ok = np.ones(len(cand), dtype=bool)
        _, found = field.lookup(cand[inside])
        ok[inside] = found
        bad[m] = ~ok.reshape(len(sel), -1).all(axis=1)
    return rows[bad]


def step_adaptive(field: SparseField, rhs_factory, tableau: TableauPair,
                  controller: StepController, eps: float, fb: FilterBank,
                  scales=None, zone_width: int = 1, retry_budget: int = 5,
                  cap_mode: str = "error"):
    """One accepted time step with grid correction.

    rhs_factory(work) must return (rhs, post) bound to the widened grid:
    rhs(t, values) evaluates the semidiscrete right-hand side and post
    (optional, may be None) patches a committed state in place, e.g. to
    reimpose injected boundary values. Returns (next field, dt used,
    grid retries). Step-size rejections are handled internally and do
    not count as retries.
    """
    extra = np.empty((0, 2), dtype=np.int64)
    for retries in range(retry_budget + 1):
        work = predict(field, eps, fb, scales=scales, zone_width=zone_width,
                       cap_mode=cap_mode)
        if len(extra):
            work = merge(work, extra, fb)
        rhs, post = rhs_factory(work)
        while True:
            dt_try = controller.dt
            trial, est, ok, new_dt = rk_step(work.values, rhs, tableau,
                                             controller, scales=scales)
            controller.dt = new_dt
            if ok:
                break
            if not new_dt < dt_try:
                raise RuntimeError(
                    f"step controller is not shrinking at t = "
                    f"{controller.t}: dt {dt_try} -> {new_dt}")
        if post is not None:
            post(controller.t + dt_try, trial)
        cand = make_field(work.dom, work.pos, trial,
                          np.zeros_like(trial), work.var_names)
        cand.coeffs[:] = field_coeffs(cand, fb)
        viol = check_significance(cand, eps, scales=scales,
                                  zone_width=zone_width, cap_mode=cap_mode)
        if len(viol) == 0:
            controller.t += dt_try
            cand.essential = significant_mask(cand, eps, scales)
            cand.buffer = ~cand.essential
            return (prune(cand, eps, fb, scales=scales,
                          zone_width=zone_width), dt_try, retries)
        # the trial is void; widen near the offenders and redo the step
        # from the same state and step size
        controller.dt = dt_try
        zone, capped = zone_positions(work.dom, work.pos[viol],
                                      width=zone_width, with_children=True)
        if capped and cap_mode == "error":
            raise RefinementCapError(
                f"{capped} entries need refinement past level "
                f"{work.dom.cap}; raise j_max_cap or relax the threshold")
        extra = np.vstack([extra, work.pos[viol], zone])
    raise RuntimeError(f"grid correction did not settle after "
                       f"{retry_budget} retries at t = {controller.t}")


def step_log_line(n: int, t: float, dt: float, retries: int,
                  field: SparseField) -> str:
    return (f"step {n} t {t!r} dt {dt!r} retries {retries} "
            f"points {len(field)} levels {field.finest_level() + 1}")
