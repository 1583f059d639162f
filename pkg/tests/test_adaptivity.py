import numpy as np
import pytest

from mrpde.adaptivity import (RefinementCapError, check_significance,
                              predict, step_adaptive, step_log_line)
from mrpde.filters import build_filter_bank
from mrpde.physics import AdvectionDiffusionModel, rhs_advection_diffusion
from mrpde.plans import Workset, field_coeffs, to_dense
from mrpde.sparse_grid import (Domain, compress, levels_of, make_field,
                               merge, subbands_of, validate)
from mrpde.time_integrator import TABLEAUS, StepController
from mrpde.transform import detail_mask, forward


def level0_field(dom, value=0.0):
    pos = dom.level0_lattice()
    vals = np.full((len(pos), 1), value)
    return make_field(dom, pos, vals, vals.copy(), ("u",))


def spiked_field(dom, fb, spot, amp=1.0):
    """Zeros everywhere except one marked detail entry."""
    f = merge(level0_field(dom), np.array([spot], dtype=np.int64), fb)
    idx, found = f.lookup(np.array([spot], dtype=np.int64))
    assert found.all()
    r = int(idx[0])
    f.values[r] += amp
    f.coeffs[r] = amp
    f.essential[r] = True
    f.buffer[r] = False
    return f, r


def gaussian_field(eps=1e-3, n0=8, j=3, cap=4, p=4):
    n = n0 * 2**j + 1
    x = np.linspace(0.0, 1.0, n)
    fb = build_filter_bank(p)
    vals = np.exp(-((x[:, None] - 0.55) ** 2 + (x[None, :] - 0.45) ** 2)
                  / 0.02)
    cs = forward(vals, fb, n0)
    return compress(cs, eps, fb, dom=Domain(n0, cap)), fb


# -- prediction ---------------------------------------------------------------

def test_predict_inserts_children_in_every_subband():
    dom = Domain(4, 3)
    fb = build_filter_bank(4)
    f, _ = spiked_field(dom, fb, (4, 8))
    work = predict(f, 0.5, fb)
    validate(work, fb)
    kids = np.array([(4 + a, 8 + b) for a in (-2, 0, 2) for b in (-2, 0, 2)
                     if a or b], dtype=np.int64)
    _, found = work.lookup(kids)
    assert found.all()
    assert sorted(set(levels_of(kids, dom))) == [2]
    assert sorted(set(subbands_of(kids, dom))) == [1, 2, 3]
    box = np.array([(4 + a, 8 + b) for a in (-4, 0, 4) for b in (-4, 0, 4)
                    if a or b], dtype=np.int64)
    _, found = work.lookup(box)
    assert found.all()


def test_predict_without_essentials_is_identity():
    dom = Domain(4, 2)
    fb = build_filter_bank(4)
    f = level0_field(dom)
    assert predict(f, 1e-3, fb) is f


def test_predict_at_the_level_cap():
    dom = Domain(4, 2)
    fb = build_filter_bank(4)
    f, _ = spiked_field(dom, fb, (1, 4))  # level 2 == cap
    with pytest.raises(RefinementCapError, match="j_max_cap"):
        predict(f, 0.5, fb)
    work = predict(f, 0.5, fb, cap_mode="saturate")
    validate(work, fb)
    assert work.finest_level() == 2
    box = np.array([(1 + a, 4 + b) for a in (-1, 0, 1) for b in (-1, 0, 1)
                    if a or b], dtype=np.int64)
    _, found = work.lookup(box)
    assert found.all()


# -- the significance check ---------------------------------------------------

def test_check_significance_wants_the_zone_retained():
    dom = Domain(4, 3)
    fb = build_filter_bank(4)
    f, r = spiked_field(dom, fb, (4, 8))
    viol = check_significance(f, 0.5)
    assert viol.tolist() == [r]
    work = predict(f, 0.5, fb)
    assert len(check_significance(work, 0.5)) == 0
    # losing one finest-level corner entry reopens the violation
    idx, found = work.lookup(np.array([[6, 10]], dtype=np.int64))
    assert found.all()
    keep = np.ones(len(work), dtype=bool)
    keep[idx[0]] = False
    damaged = work.subset(keep)
    validate(damaged, fb)
    vpos = damaged.pos[check_significance(damaged, 0.5)]
    assert vpos.tolist() == [[4, 8]]


def test_check_significance_needs_headroom_at_the_cap():
    dom = Domain(4, 2)
    fb = build_filter_bank(4)
    f, r = spiked_field(dom, fb, (1, 4))
    with pytest.raises(RefinementCapError):
        check_significance(f, 0.5)
    viol = check_significance(f, 0.5, cap_mode="saturate")
    assert viol.tolist() == [r]  # box neighbours still missing
    work = predict(f, 0.5, fb, cap_mode="saturate")
    assert len(check_significance(work, 0.5, cap_mode="saturate")) == 0


def test_check_significance_matches_dense_thresholding():
    """The accept/reject verdict must agree with thresholding the dense
    synthesis: a detail is out of reach exactly when its zone pokes out
    of the retained set."""
    eps = 1e-3
    field, fb = gaussian_field(eps=eps)
    dom = field.dom
    field.coeffs[:] = field_coeffs(field, fb)
    viol = check_significance(field, eps)

    dense = to_dense(field, fb, level=dom.cap)[:, :, 0]
    cs = forward(dense, fb, dom.n0)
    sig = detail_mask(cs) & (np.abs(cs.data) >= eps)
    spos = np.argwhere(sig).astype(np.int64)  # stride at the cap is 1
    grid = {tuple(q) for q in field.pos}
    assert {tuple(q) for q in spos} <= grid, \
        "dense synthesis grew significance off the retained set"

    lev = levels_of(spos, dom)
    oracle = set()
    for q, j in zip(spos, lev):
        s = dom.stride(int(j))
        need = [(q[0] + a * s, q[1] + b * s) for a in (-1, 0, 1)
                for b in (-1, 0, 1) if a or b]
        need += [(q[0] + a * (s >> 1), q[1] + b * (s >> 1))
                 for a in (-1, 0, 1) for b in (-1, 0, 1) if a or b]
        if any(0 <= u <= dom.width and 0 <= v <= dom.width
               and (u, v) not in grid for u, v in need):
            oracle.add((int(q[0]), int(q[1])))
    assert {tuple(q) for q in field.pos[viol]} == oracle
    assert oracle, "test vacuous: no violations to compare"

    work = predict(field, eps, fb)
    work.coeffs[:] = field_coeffs(work, fb)
    assert len(check_significance(work, eps)) == 0


# -- the adaptive step --------------------------------------------------------

def zero_rhs_factory(work):
    return (lambda t, y: np.zeros_like(y)), None


def test_step_adaptive_stationary_grid_settles():
    field, fb = gaussian_field()
    ctrl = StepController(eps_target=1e-4, dt=0.01, dt_max=0.05)
    f1, dt1, r1 = step_adaptive(field, zero_rhs_factory, TABLEAUS["rk23"],
                                ctrl, 1e-3, fb)
    f2, dt2, r2 = step_adaptive(f1, zero_rhs_factory, TABLEAUS["rk23"],
                                ctrl, 1e-3, fb)
    validate(f2, fb)
    assert (r1, r2) == (0, 0)
    assert (dt1, dt2) == (0.01, 0.05)  # zero estimate opens to dt_max
    assert ctrl.t == pytest.approx(0.06)
    assert np.array_equal(f1.pos, f2.pos)
    assert np.array_equal(f1.values, f2.values)


def test_step_adaptive_follows_an_advecting_pulse():
    eps = 1e-3
    field, fb = gaussian_field(eps=eps, n0=8, j=3, cap=4, p=4)
    model = AdvectionDiffusionModel(velocity=(0.0, 1.0), viscosity=0.0)

    def factory(work):
        ws = Workset(work, fb, alphas=(1,))

        def rhs(t, y):
            v = ws.scatter(y)
            ws.fill(v)
            return rhs_advection_diffusion(v, ws, model)
        return rhs, None

    ctrl = StepController(eps_target=1e-4, dt=2e-3, dt_max=5e-3)
    t_final, steps = 0.0, 0
    start = field
    while ctrl.t < 0.02:
        field, dt, retries = step_adaptive(field, factory, TABLEAUS["rk23"],
                                           ctrl, eps, fb)
        validate(field, fb)
        assert retries <= 5
        steps += 1
        assert steps < 40

    def centroid_x2(f):
        w = np.abs(f.values[:, 0])
        return float((w * f.dom.xy(f.pos)[:, 1]).sum() / w.sum())

    drift = centroid_x2(field) - centroid_x2(start)
    assert 0.5 * ctrl.t < drift < 1.5 * ctrl.t
    # refinement keeps up: the essential set drifts along +x2 too
    def ess_centroid_x2(f):
        w = np.abs(f.values[f.essential, 0])
        return float((w * f.dom.xy(f.pos[f.essential])[:, 1]).sum() / w.sum())

    ess_drift = ess_centroid_x2(field) - ess_centroid_x2(start)
    assert 0.3 * ctrl.t < ess_drift < 2.0 * ctrl.t
    assert not np.array_equal(field.pos, start.pos)


def test_step_adaptive_gives_up_after_the_retry_budget():
    dom = Domain(4, 8)
    fb = build_filter_bank(4)
    f, _ = spiked_field(dom, fb, (128, 256))  # level 1
    ctrl = StepController(eps_target=1e9, dt=0.01)

    def factory(work):
        rows = np.flatnonzero(work.j == work.finest_level())
        target = rows[-1]

        def rhs(t, y):
            out = np.zeros_like(y)
            out[target] = 100.0 / ctrl.dt
            return out
        return rhs, None

    with pytest.raises(RuntimeError, match="did not settle"):
        step_adaptive(f, factory, TABLEAUS["rk23"], ctrl, 0.5, fb,
                      retry_budget=2)


def test_step_adaptive_applies_the_commit_patch():
    field, fb = gaussian_field()
    stamp = []

    def factory(work):
        def post(t, values):
            stamp.append(t)
            values[:, 0] = np.round(values[:, 0], 12)
        return (lambda t, y: np.zeros_like(y)), post

    ctrl = StepController(eps_target=1e-4, dt=0.01, dt_max=0.05)
    out, dt, _ = step_adaptive(field, factory, TABLEAUS["rk23"], ctrl,
                               1e-3, fb)
    assert stamp == [pytest.approx(0.01)]
    assert np.array_equal(out.values, np.round(out.values, 12))


def test_step_log_line_is_stable():
    field, _ = gaussian_field()
    line = step_log_line(12, 0.125, 0.001, 1, field)
    assert line == (f"step 12 t 0.125 dt 0.001 retries 1 "
                    f"points {len(field)} levels {field.finest_level() + 1}")
