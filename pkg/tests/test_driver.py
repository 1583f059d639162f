import numpy as np
import pytest

from mrpde.config import ConfigError, RunConfig
from mrpde.driver import (build_problem, converge, evaluate_exact,
                          initial_condition, solve)
from mrpde.filters import build_filter_bank
from mrpde.report import OutputSink


def model_cfg(**kw):
    base = dict(problem="advection_diffusion", n0=8, p=6, eps=1e-2,
                j_max_cap=5, t_final=0.02, outdir="unused", figures=False)
    base.update(kw)
    return RunConfig(**base)


# -- closed form --------------------------------------------------------------

def test_exact_pins():
    # direct evaluation of the pulse profile at two probe points
    assert evaluate_exact("advection_diffusion", 0.0, 0.5, 0.5) == 1.0
    assert evaluate_exact("advection_diffusion", 0.0, 0.0, 0.0) == 1.0


def test_exact_depends_evenly_on_travel_offset():
    t = 0.3
    for a in (0.05, 0.2):
        lo = evaluate_exact("advection_diffusion", 0.4, t - a, t)
        hi = evaluate_exact("advection_diffusion", 0.4, t + a, t)
        assert lo == hi


def test_exact_rejects_other_problems():
    with pytest.raises(ConfigError, match="closed-form"):
        evaluate_exact("sedov", 0.0, 0.0, 0.0)


# -- initial condition --------------------------------------------------------

def test_initial_condition_within_threshold_bound():
    cfg = model_cfg(t_final=0.0)
    setup = build_problem(cfg)
    field = initial_condition(cfg, setup, build_filter_bank(cfg.p))
    xy = field.dom.xy(field.pos)
    err = np.abs(field.values[:, 0] - setup.exact(xy[:, 0], xy[:, 1], 0.0))
    assert err.max() <= 10 * cfg.eps
    assert 0 < field.finest_level() <= cfg.j_max_cap


def test_initial_condition_stops_probing_below_cap():
    # eps large enough that the pulse resolves well under the cap
    cfg = model_cfg(eps=5e-2, j_max_cap=6, t_final=0.0)
    field = initial_condition(cfg, build_problem(cfg),
                              build_filter_bank(cfg.p))
    assert field.finest_level() < 6


# -- solve --------------------------------------------------------------------

def test_zero_duration_round_trips_ic(tmp_path):
    cfg = model_cfg(t_final=0.0, outdir=str(tmp_path))
    res = solve(cfg, OutputSink(cfg.outdir, figures=False))
    assert res.failed is None
    assert res.steps == 0 and res.t == 0.0
    assert list(res.errors) == ["0.0"]
    assert res.errors["0.0"] <= 10 * cfg.eps
    assert (tmp_path / "field_000000.csv").exists()
    assert (tmp_path / "report.txt").exists()


def test_short_model_solve_tracks_error_and_history():
    cfg = model_cfg()
    res = solve(cfg)
    assert res.failed is None
    assert res.steps > 0
    assert len(res.dt_history) == res.steps == len(res.log_lines)
    assert abs(res.t - cfg.t_final) < 1e-14
    # threshold-bound error at both recorded times
    assert set(res.errors) == {"0.0", repr(res.t)}
    assert all(e <= 10 * cfg.eps for e in res.errors.values())
    for key in ("status", "points_final", "compression_ratio",
                "j_max_active", "wall_time", "dt_history"):
        assert key in res.report
    assert res.report["status"] == "ok"
    assert res.report["compression_ratio"] > 1.0


def test_failure_still_reports(tmp_path):
    # cap far too low for the threshold: predict raises at step 1
    cfg = model_cfg(eps=1e-4, j_max_cap=2, outdir=str(tmp_path))
    res = solve(cfg, OutputSink(cfg.outdir, figures=False))
    assert res.failed is not None
    assert "level cap" in res.failed
    assert res.report["status"] == "failed"
    assert res.report["failure"] == res.failed
    assert "0.0" in res.errors
    text = (tmp_path / "report.txt").read_text()
    assert "status = failed" in text and "failure = " in text


def test_solve_respects_final_time_exactly():
    res = solve(model_cfg(t_final=0.013))
    assert res.failed is None
    assert res.t == pytest.approx(0.013, abs=1e-15)


def test_output_cadence(tmp_path):
    cfg = model_cfg(output_every=2, outdir=str(tmp_path))
    sink = OutputSink(cfg.outdir, figures=False)
    res = solve(cfg, sink)
    assert res.failed is None
    steps = [s for s, _ in sink.emitted]
    assert steps[0] == 0 and steps[-1] == res.steps
    assert all(s % 2 == 0 or s == res.steps for s in steps)


def test_sedov_smoke_runs_and_reports_flow_metrics():
    cfg = RunConfig(problem="sedov", lo=(0.0, 0.0), hi=(2.0, 2.0), n0=16,
                    p=6, eps=1e-2, j_max_cap=2, cap_mode="saturate",
                    integrator="rkf45", t_final=3e-5, figures=False)
    res = solve(cfg)
    assert res.failed is None
    assert res.steps >= 1
    assert res.report["min_density"] > 0.0
    # the blast pushes gas outward but nowhere near the acoustic scale yet
    assert 0.0 < res.report["max_speed"] < 700.0


# -- convergence sweeps -------------------------------------------------------

def test_converge_needs_a_closed_form():
    cfg = model_cfg(velocity=(1.0, 0.0))
    with pytest.raises(ConfigError, match="closed-form"):
        converge(cfg, [1e-2], [6])
    sedov = RunConfig(problem="sedov", hi=(2.0, 2.0), figures=False)
    with pytest.raises(ConfigError, match="closed-form"):
        converge(sedov, [1e-2], [6])


def test_converge_single_pair_has_undefined_slope():
    cfg = model_cfg(t_final=0.05, j_max_cap=5)
    rows, slopes = converge(cfg, [1e-2], [6])
    assert len(rows) == 1
    assert rows[0]["p"] == 6 and rows[0]["eps"] == 1e-2
    assert rows[0]["error"] <= 10 * 1e-2
    assert rows[0]["deriv_error"] > 0.0
    assert slopes == {6: None}


def test_converge_measures_at_half_time():
    # the sweep halves t_final before solving; spot-check via the row error
    cfg = model_cfg(t_final=0.1, j_max_cap=5)
    rows, _ = converge(cfg, [1e-2], [6])
    direct = solve(model_cfg(t_final=0.05, j_max_cap=5))
    assert rows[0]["error"] == pytest.approx(
        direct.errors[repr(direct.t)], rel=1e-12)
