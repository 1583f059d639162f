"""Embedded explicit Runge-Kutta pairs with tolerance-coupled step control.

The error controller targets the same tolerance that drives the spatial
thresholding, so temporal and spatial errors stay of one order. Of each
embedded pair the lower-order solution is propagated; the difference to
its higher-order companion is the per-step error estimate.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction as Fr

import numpy as np


@dataclass(frozen=True)
class TableauPair:
    """Butcher arrays of an embedded pair; b_main is propagated."""
    name: str
    c: np.ndarray
    a: tuple
    b_main: np.ndarray
    b_other: np.ndarray
    order: int  # of b_main; the companion has order + 1

    @property
    def stages(self) -> int:
        return len(self.c)

    @property
    def err_weights(self) -> np.ndarray:
        return self.b_main - self.b_other

    def check_consistency(self):
        for i, row in enumerate(self.a):
            if abs(sum(row) - self.c[i]) > 1e-14:
                raise AssertionError(f"{self.name}: stage {i} row sum")
        for b in (self.b_main, self.b_other):
            if abs(b.sum() - 1.0) > 1e-14:
                raise AssertionError(f"{self.name}: weights do not sum to 1")


def _pair(name, c, a, b_main, b_other, order):
    return TableauPair(
        name,
        np.array([float(Fr(x)) for x in c]),
        tuple(tuple(float(Fr(x)) for x in row) for row in a),
        np.array([float(Fr(x)) for x in b_main]),
        np.array([float(Fr(x)) for x in b_other]),
        order)


TABLEAUS = {
    # 4-stage 2(3) pair; the cubic weights are the companion
    "rk23": _pair(
        "rk23",
        c=["0", "1/2", "3/4", "1"],
        a=[[], ["1/2"], ["0", "3/4"], ["2/9", "1/3", "4/9"]],
        b_main=["7/24", "1/4", "1/3", "1/8"],
        b_other=["2/9", "1/3", "4/9", "0"],
        order=2),
    # classic 6-stage Fehlberg 4(5) pair
    "rkf45": _pair(
        "rkf45",
        c=["0", "1/4", "3/8", "12/13", "1", "1/2"],
        a=[[],
           ["1/4"],
           ["3/32", "9/32"],
           ["1932/2197", "-7200/2197", "7296/2197"],
           ["439/216", "-8", "3680/513", "-845/4104"],
           ["-8/27", "2", "-3544/2565", "1859/4104", "-11/40"]],
        b_main=["25/216", "0", "1408/2565", "2197/4104", "-1/5", "0"],
        b_other=["16/135", "0", "6656/12825", "28561/56430", "-9/50", "2/55"],
        order=4),
}


@dataclass
class StepController:
    """Owns the clock and the step size between attempts."""
    eps_target: float
    dt: float
    t: float = 0.0
    t_end: float = np.inf
    dt_min: float = 1e-12
    dt_max: float = np.inf
    safety: float = 0.9
    last_estimate: float = field(default=None, repr=False)

    def __post_init__(self):
        if self.eps_target <= 0:
            raise ValueError(f"tolerance must be positive, got {self.eps_target}")
        if not 0.0 < self.safety < 1.0:
            raise ValueError(f"safety factor must sit in (0, 1), got {self.safety}")
        if not 0.0 < self.dt_min <= self.dt_max:
            raise ValueError("need 0 < dt_min <= dt_max")
        self.dt = float(np.clip(self.dt, self.dt_min, self.dt_max))

    def propose(self, dt: float, estimate: float, order: int) -> float:
        """Next step size from the standard asymptotic error model."""
        if estimate == 0.0:
            return self.dt_max
        new = self.safety * dt * (self.eps_target / estimate) ** (1.0 / (order + 1))
        return float(np.clip(new, self.dt_min, self.dt_max))


def rk_step(state: np.ndarray, rhs, tableau: TableauPair,
            controller: StepController, scales=None):
    """One attempted step of controller.dt from controller.t.

    rhs(t, y) must return an array shaped like the state. The estimate is
    the max-norm of the embedded difference over all points and variables,
    each variable measured in units of its scale. The caller commits or
    retries; this function only records the estimate.

    Returns (trial state, error estimate, accepted flag, new dt).
    """
    dt, t = controller.dt, controller.t
    if dt <= 0:
        raise ValueError(f"step size must be positive, got {dt}")
    s = np.ones(state.shape[-1]) if scales is None else np.asarray(scales,
                                                                   dtype=float)
    k = []
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(tableau.stages):
            yi = state
            if i:
                incr = tableau.a[i][0] * k[0]
                for aij, kj in zip(tableau.a[i][1:], k[1:]):
                    if aij:
                        incr = incr + aij * kj
                yi = state + dt * incr
            ki = rhs(t + tableau.c[i] * dt, yi)
            if not np.all(np.isfinite(ki)):
                return _abort(state, controller)
            k.append(ki)
        trial = state + dt * sum(b * kj for b, kj in zip(tableau.b_main, k) if b)
        diff = dt * sum(e * kj for e, kj in zip(tableau.err_weights, k) if e)
    if not np.all(np.isfinite(trial)):
        return _abort(state, controller)
    estimate = float(np.abs(diff / s).max())
    accepted = estimate <= controller.eps_target
    if not accepted and dt <= controller.dt_min:
        raise ValueError(f"step size underflow at t = {t}: estimate "
                         f"{estimate} needs dt below dt_min = "
                         f"{controller.dt_min}")
    controller.last_estimate = estimate
    return trial, estimate, accepted, controller.propose(dt, estimate,
                                                         tableau.order)


def _abort(state, controller):
    # a blown-up stage: retreat without consulting the error model
    if controller.dt <= controller.dt_min:
        raise ValueError(f"step size underflow at t = {controller.t}: "
                         "right-hand side not finite at dt_min")
    controller.last_estimate = np.inf
    new_dt = max(0.5 * controller.dt, controller.dt_min)
    return state, np.inf, False, new_dt
