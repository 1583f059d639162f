"""Problem assembly and the outer adaptive time loop.

solve() turns a RunConfig into an initial sparse field, steps it to the
final time with grid correction, and assembles a flat report of metrics.
Artifact writing is delegated to a sink object so library callers can
run without touching the filesystem.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from .adaptivity import step_adaptive, step_log_line
from .config import ConfigError, RunConfig
from .filters import FilterBank, build_filter_bank
from .physics import (DRY_AIR, FLOW_VARS, MODEL_VARS,
                      AdvectionDiffusionModel, BoundarySpec, FlowState,
                      MaterialParams, ambient_conserved, apply_dirichlet,
                      apply_penalty, blast_conserved, flow_scales,
                      pulse_solution, pulse_time_derivative,
                      rhs_advection_diffusion, rhs_navier_stokes)
from .plans import Workset
from .sparse_grid import Domain, SparseField, compress
from .time_integrator import TABLEAUS, StepController
from .transform import forward


def evaluate_exact(problem: str, x, y, t, nu: float = 0.01):
    """Closed-form solution; only the model problem has one."""
    if problem != "advection_diffusion":
        raise ConfigError(f"problem {problem!r} has no closed-form solution")
    return pulse_solution(x, y, t, nu)


@dataclass
class ProblemSetup:
    var_names: tuple
    scales: np.ndarray | None
    ic: callable                  # ic(X, Y) -> (n*n, nvars)
    bc: BoundarySpec
    rhs_kind: str                 # "model" | "flow"
    model: AdvectionDiffusionModel | None = None
    mat: MaterialParams | None = None
    exact: callable | None = None  # exact(x, y, t) -> (m,), first variable


def build_problem(cfg: RunConfig) -> ProblemSetup:
    if cfg.problem == "advection_diffusion":
        model = AdvectionDiffusionModel(cfg.velocity, cfg.nu)
        exact = None
        if cfg.velocity == (0.0, 1.0):
            exact = lambda x, y, t: pulse_solution(x, y, t, cfg.nu)

        def ic(X, Y):
            return pulse_solution(X, Y, 0.0, cfg.nu).ravel()[:, None]

        if cfg.bc_kind == "dirichlet" and exact is not None:
            data = lambda x, y, t: exact(x, y, t)[:, None]
        else:
            data = lambda x, y, t: np.zeros((len(x), 1))
        bc = BoundarySpec(data, mode=cfg.bc_mode, kind=cfg.bc_kind,
                          tau_scale=cfg.tau_scale)
        return ProblemSetup(MODEL_VARS, None, ic, bc, "model", model=model,
                            exact=exact)

    mat = DRY_AIR
    ambient = ambient_conserved(mat)

    def ic(X, Y):
        return blast_conserved(X, Y, mat)

    if cfg.bc_kind == "dirichlet":
        data = lambda x, y, t: np.tile(ambient, (len(x), 1))
    else:
        data = lambda x, y, t: np.zeros((len(x), 4))
    bc = BoundarySpec(data, mode=cfg.bc_mode, kind=cfg.bc_kind,
                      tau_scale=cfg.tau_scale)
    return ProblemSetup(FLOW_VARS, flow_scales(mat), ic, bc, "flow", mat=mat)


def initial_condition(cfg: RunConfig, setup: ProblemSetup,
                      fb: FilterBank) -> SparseField:
    """Sample and compress the initial state, probing upward in level
    until the top sampled level carries no significant detail."""
    dom = Domain(cfg.n0, cfg.j_max_cap, lo=cfg.lo, hi=cfg.hi)
    for lev in range(min(3, cfg.j_max_cap), cfg.j_max_cap + 1):
        n = (cfg.n0 << lev) + 1
        if n > 4200:
            raise ConfigError("discretization.j_max_cap: the initial "
                              f"condition is still unresolved on a {n}^2 "
                              "probe; lower the cap or relax eps")
        X, Y = np.meshgrid(np.linspace(cfg.lo[0], cfg.hi[0], n),
                           np.linspace(cfg.lo[1], cfg.hi[1], n),
                           indexing="ij")
        vals = setup.ic(X, Y)
        css = [forward(vals[:, k].reshape(n, n), fb, cfg.n0)
               for k in range(vals.shape[1])]
        out = compress(css, cfg.eps, fb, dom=dom, var_names=setup.var_names,
                       scales=setup.scales)
        if lev == cfg.j_max_cap or out.finest_level() < lev:
            return out


def cfl_ceiling(field: SparseField, setup: ProblemSetup) -> float:
    h = float(field.dom.spacing(field.finest_level()).min())
    if setup.rhs_kind == "model":
        parts = [h / abs(v) for v in setup.model.velocity if v]
        if setup.model.viscosity:
            parts.append(h * h / (4.0 * setup.model.viscosity))
        return min(parts) if parts else np.inf
    st = FlowState(field.values, setup.mat)
    speed = np.sqrt((st.velocity ** 2).sum(axis=1)) + st.sound_speed
    return h / float(speed.max())


def make_rhs_factory(cfg: RunConfig, setup: ProblemSetup, fb: FilterBank):
    inject = cfg.bc_mode == "inject"

    def factory(work: SparseField):
        if setup.rhs_kind == "model":
            if setup.model.viscosity and fb.p >= 6:
                ws = Workset(work, fb, alphas=(1, 2))
            elif setup.model.viscosity:
                ws = Workset(work, fb, alphas=(1,), depth=2)
            else:
                ws = Workset(work, fb, alphas=(1,))
        else:
            ws = Workset(work, fb, alphas=(1,), depth=2)

        def rhs(t, y):
            if inject:
                y = y.copy()
                apply_dirichlet(y, work, setup.bc, t)
            v = ws.scatter(y)
            ws.fill(v)
            if setup.rhs_kind == "model":
                out = rhs_advection_diffusion(v, ws, setup.model)
            else:
                out = rhs_navier_stokes(v, ws, setup.mat)
            if not inject:
                apply_penalty(out, v, ws, work, setup.bc, t)
            return out

        post = None
        if inject:
            def post(t, values):
                apply_dirichlet(values, work, setup.bc, t)
        return rhs, post

    return factory


@dataclass
class RunResult:
    field: SparseField
    t: float
    steps: int
    retries_total: int
    dt_history: list
    log_lines: list
    errors: dict
    report: dict
    wall_time: float
    failed: str | None


def solve(cfg: RunConfig, sink=None) -> RunResult:
    t0 = time.perf_counter()
    fb = build_filter_bank(cfg.p)
    setup = build_problem(cfg)
    field = initial_condition(cfg, setup, fb)

    dt0 = cfg.dt_init if cfg.dt_init > 0 else 0.5 * cfl_ceiling(field, setup)
    dt0 = float(np.clip(dt0, cfg.dt_min, cfg.dt_ceiling))
    if cfg.t_final > 0:
        dt0 = min(dt0, cfg.t_final)
    ctrl = StepController(eps_target=cfg.controller_target, dt=dt0,
                          t_end=cfg.t_final, dt_min=cfg.dt_min,
                          dt_max=cfg.dt_ceiling, safety=cfg.safety)
    factory = make_rhs_factory(cfg, setup, fb)
    tableau = TABLEAUS[cfg.integrator]

    errors, log, dts = {}, [], []
    last_emit = [None]

    def emit(step, t, f):
        if setup.exact is not None:
            xy = f.dom.xy(f.pos)
            err = float(np.abs(f.values[:, 0]
                               - setup.exact(xy[:, 0], xy[:, 1], t)).max())
            errors[repr(float(t))] = err
        if sink is not None:
            sink.emit(step, t, f)
        last_emit[0] = step

    emit(0, 0.0, field)
    n, retries_total, failed = 0, 0, None
    try:
        while ctrl.t < cfg.t_final * (1.0 - 1e-14):
            ctrl.dt = min(ctrl.dt, cfg.t_final - ctrl.t)
            field, dt, r = step_adaptive(
                field, factory, tableau, ctrl, cfg.eps, fb,
                scales=setup.scales, zone_width=cfg.zone_width,
                retry_budget=cfg.retry_budget, cap_mode=cfg.cap_mode)
            n += 1
            dts.append(dt)
            retries_total += r
            log.append(step_log_line(n, ctrl.t, dt, r, field))
            if setup.rhs_kind == "flow":
                FlowState(field.values, setup.mat).validate(
                    xy=field.dom.xy(field.pos))
            if cfg.output_every and n % cfg.output_every == 0:
                emit(n, ctrl.t, field)
    except (ValueError, RuntimeError) as e:
        failed = str(e)
    if last_emit[0] != n:
        emit(n, ctrl.t, field)

    wall = time.perf_counter() - t0
    j_act = field.finest_level()
    dense_side = (cfg.n0 << j_act) + 1
    report = {
        "status": "failed" if failed else "ok",
        "problem": cfg.problem,
        "p": cfg.p,
        "eps": cfg.eps,
        "integrator": cfg.integrator,
        "n0": cfg.n0,
        "j_max_cap": cfg.j_max_cap,
        "final_t": ctrl.t,
        "steps": n,
        "retries_total": retries_total,
        "points_final": len(field),
        "j_max_active": j_act,
        "compression_ratio": dense_side ** 2 / len(field),
        "wall_time": wall,
    }
    for tkey, err in errors.items():
        report[f"error_inf_{tkey}"] = err
    if setup.rhs_kind == "flow":
        st = FlowState(field.values, setup.mat)
        report["max_speed"] = float(
            np.sqrt((st.velocity ** 2).sum(axis=1)).max())
        report["min_density"] = float(st.rho.min())
    if failed:
        report["failure"] = failed
        report["failure_step"] = n + 1
        report["failure_t"] = ctrl.t
    report["dt_history"] = dts
    if sink is not None:
        sink.finish(report, log)
    return RunResult(field, ctrl.t, n, retries_total, dts, log, errors,
                     report, wall, failed)


def converge(cfg: RunConfig, eps_list, p_list):
    """Error against the closed form at t = T/2 for each (eps, p) pair,
    with log-log slopes per p (None when a single point leaves the slope
    undefined)."""
    setup = build_problem(cfg)
    if setup.exact is None:
        raise ConfigError("problem.id: convergence sweeps need a problem "
                          "with a closed-form solution")
    rows = []
    for p in p_list:
        for eps in eps_list:
            sub = replace(cfg, p=int(p), eps=float(eps),
                          t_final=cfg.t_final / 2.0, figures=False)
            res = solve(sub, sink=None)
            if res.failed:
                raise RuntimeError(f"sweep member p={p} eps={eps} failed: "
                                   f"{res.failed}")
            f = res.field
            xy = f.dom.xy(f.pos)
            err = float(np.abs(f.values[:, 0]
                               - setup.exact(xy[:, 0], xy[:, 1], res.t)).max())
            fb = build_filter_bank(int(p))
            ws = Workset(f, fb, alphas=(1,))
            v = ws.scatter(f.values)
            ws.fill(v)
            d2 = ws.gather_grid(ws.derivative(v, 1, 1))[:, 0]
            # d/dx2 of the closed form is minus its time derivative
            want = -pulse_time_derivative(xy[:, 0], xy[:, 1], res.t, cfg.nu)
            # measure where the solve uses the operator: boundary values
            # are injected data, their one-sided rows never feed the
            # interior and their truncation does not scale with eps
            m = f.dom.spacing(f.dom.cap) / 2.0
            inner = ((xy[:, 0] > cfg.lo[0] + m[0])
                     & (xy[:, 0] < cfg.hi[0] - m[0])
                     & (xy[:, 1] > cfg.lo[1] + m[1])
                     & (xy[:, 1] < cfg.hi[1] - m[1]))
            derr = float(np.abs(d2[inner] - want[inner]).max())
            rows.append({"p": int(p), "eps": float(eps), "error": err,
                         "deriv_error": derr, "points": len(f),
                         "steps": res.steps})
    slopes = {}
    for p in sorted({r["p"] for r in rows}):
        sel = sorted((r for r in rows if r["p"] == p), key=lambda r: r["eps"])
        if len(sel) < 2:
            slopes[p] = None
            continue
        le = np.log([r["eps"] for r in sel])
        slopes[p] = (float(np.polyfit(le, np.log([r["error"] for r in sel]),
                                      1)[0]),
                     float(np.polyfit(le, np.log([r["deriv_error"]
                                                  for r in sel]), 1)[0]))
    return rows, slopes
