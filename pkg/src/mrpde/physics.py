"""Right-hand sides and boundary handling for the built-in problems.

Two problems are wired up: a unitless linear advection-diffusion model
with a closed-form reference solution, and 2D compressible Navier-Stokes
for a calorically perfect gas with Newtonian stress and Fourier
conduction, driven by a Gaussian overpressure (blast) initial state.

Evaluators operate on extended value arrays prepared by a Workset (ghosts
filled), and return time derivatives at the retained entries.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .plans import Workset
from .sparse_grid import SparseField

MODEL_VARS = ("u",)
FLOW_VARS = ("rho", "mom1", "mom2", "etot")


@dataclass(frozen=True)
class AdvectionDiffusionModel:
    """du/dt + V . grad u = nu lap u on the unit square."""
    velocity: tuple = (0.0, 1.0)
    viscosity: float = 0.01

    def __post_init__(self):
        if self.viscosity < 0:
            raise ValueError(f"diffusivity must be nonnegative, got "
                             f"{self.viscosity}")


@dataclass(frozen=True)
class MaterialParams:
    """Dry air at room temperature unless overridden."""
    gamma: float = 1.4
    mu: float = 1.9e-5
    kappa: float = 2.55e-2
    c_v: float = 7.18e2

    def __post_init__(self):
        if self.gamma <= 1.0:
            raise ValueError(f"adiabatic exponent must exceed 1, got "
                             f"{self.gamma}")
        if min(self.mu, self.kappa, self.c_v) <= 0:
            raise ValueError("material parameters must be positive")


DRY_AIR = MaterialParams()


class FlowState:
    """Conserved variables (rho, rho v, rho etot) with derived fields."""

    body_force = 0.0
    heat_source = 0.0

    def __init__(self, conserved: np.ndarray, mat: MaterialParams):
        self.conserved = np.asarray(conserved, dtype=float).reshape(-1, 4)
        self.mat = mat

    @classmethod
    def from_primitive(cls, rho, v1, v2, e, mat: MaterialParams):
        rho, v1, v2, e = (np.ravel(a).astype(float)
                          for a in np.broadcast_arrays(rho, v1, v2, e))
        etot = e + 0.5 * (v1 * v1 + v2 * v2)
        return cls(np.column_stack([rho, rho * v1, rho * v2, rho * etot]),
                   mat)

    @property
    def rho(self):
        return self.conserved[:, 0]

    @property
    def velocity(self):
        return self.conserved[:, 1:3] / self.conserved[:, 0:1]

    @property
    def internal_energy(self):
        v = self.velocity
        return self.conserved[:, 3] / self.rho - 0.5 * (v * v).sum(axis=1)

    @property
    def temperature(self):
        return self.internal_energy / self.mat.c_v

    @property
    def pressure(self):
        return (self.mat.gamma - 1.0) * self.rho * self.internal_energy

    @property
    def sound_speed(self):
        g = self.mat.gamma
        return np.sqrt(g * (g - 1.0) * self.internal_energy)

    def validate(self, xy=None):
        for name, arr in (("density", self.rho),
                          ("internal energy", self.internal_energy)):
            bad = ~(arr > 0.0) | ~np.isfinite(arr)
            if bad.any():
                i = int(np.argmax(bad))
                where = f"entry {i}" if xy is None else \
                    f"({xy[i, 0]:.6g}, {xy[i, 1]:.6g})"
                raise ValueError(f"nonpositive {name} {arr[i]:.6g} at {where}")


# ---------------------------------------------------------------------------
# the model problem and its closed-form reference


def pulse_solution(x1, x2, t, nu: float):
    """Reference solution of the model problem for V=(0, 1): a pulse
    entering through the bottom edge, translating in +x2 and spreading."""
    a = x1 + 5.0 * nu
    return 5.0 * nu * a / (a * a + (t - x2) ** 2)


def pulse_time_derivative(x1, x2, t, nu: float):
    a = x1 + 5.0 * nu
    den = a * a + (t - x2) ** 2
    return -10.0 * nu * a * (t - x2) / (den * den)


def rhs_advection_diffusion(values: np.ndarray, ws: Workset,
                            model: AdvectionDiffusionModel) -> np.ndarray:
    """nu lap u - V . grad u at every retained entry; values is the filled
    extended array."""
    v1, v2 = model.velocity
    out = -v1 * ws.derivative(values, 0, 1) - v2 * ws.derivative(values, 1, 1)
    if model.viscosity:
        if (0, 2, "grid") in ws.plans:
            out += model.viscosity * (ws.derivative(values, 0, 2)
                                      + ws.derivative(values, 1, 2))
        else:
            # bases too rough for a second-derivative operator fall back to
            # two first-derivative passes, same as the viscous-flux assembly
            g1 = ws.derivative(values, 0, 1, tier="ext")
            g2 = ws.derivative(values, 1, 1, tier="ext")
            out += model.viscosity * (ws.derivative(g1, 0, 1)
                                      + ws.derivative(g2, 1, 1))
    return ws.gather_grid(out)


# ---------------------------------------------------------------------------
# compressible Navier-Stokes


def rhs_navier_stokes(values: np.ndarray, ws: Workset,
                      mat: MaterialParams) -> np.ndarray:
    """Flux-divergence form with stress and heat flux assembled from
    composed first derivatives; source terms are zero."""
    with np.errstate(all="ignore"):
        rho = values[:, 0:1]
        v = values[:, 1:3] / rho
        etot = values[:, 3:4] / rho
        e = etot - 0.5 * (v * v).sum(axis=1, keepdims=True)
        P = (mat.gamma - 1.0) * rho * e
        prim = np.concatenate([v, e / mat.c_v], axis=1)
        g1 = ws.derivative(prim, 0, 1, tier="ext")
        g2 = ws.derivative(prim, 1, 1, tier="ext")
        div = g1[:, 0:1] + g2[:, 1:2]
        s11 = -P + mat.mu * (2.0 * g1[:, 0:1] - (2.0 / 3.0) * div)
        s22 = -P + mat.mu * (2.0 * g2[:, 1:2] - (2.0 / 3.0) * div)
        s12 = mat.mu * (g1[:, 1:2] + g2[:, 0:1])
        q1 = -mat.kappa * g1[:, 2:3]
        q2 = -mat.kappa * g2[:, 2:3]
        ev = values[:, 3:4]
        f1 = np.concatenate([
            values[:, 1:2],
            values[:, 1:2] * v[:, 0:1] - s11,
            values[:, 2:3] * v[:, 0:1] - s12,
            ev * v[:, 0:1] - (s11 * v[:, 0:1] + s12 * v[:, 1:2]) + q1,
        ], axis=1)
        f2 = np.concatenate([
            values[:, 2:3],
            values[:, 1:2] * v[:, 1:2] - s12,
            values[:, 2:3] * v[:, 1:2] - s22,
            ev * v[:, 1:2] - (s12 * v[:, 0:1] + s22 * v[:, 1:2]) + q2,
        ], axis=1)
        out = -(ws.derivative(f1, 0, 1) + ws.derivative(f2, 1, 1))
    return ws.gather_grid(out)


# ---------------------------------------------------------------------------
# blast problem setup


def ambient_density(mat: MaterialParams, p_inf: float = 101325.0,
                    t_inf: float = 300.0) -> float:
    return p_inf / ((mat.gamma - 1.0) * mat.c_v * t_inf)


def blast_conserved(x, y, mat: MaterialParams, center=(1.0, 1.0),
                    overpressure: float = 2.0e6, width2: float = 0.01,
                    p_inf: float = 101325.0, t_inf: float = 300.0):
    """Quiescent ambient gas with a Gaussian overpressure deposited as
    internal energy; width2 is twice the squared standard deviation."""
    rho = ambient_density(mat, p_inf, t_inf)
    r2 = (np.asarray(x) - center[0]) ** 2 + (np.asarray(y) - center[1]) ** 2
    P = p_inf + overpressure * np.exp(-r2 / width2)
    e = P / ((mat.gamma - 1.0) * rho)
    z = np.zeros_like(P)
    return FlowState.from_primitive(np.full_like(P, rho), z, z, e,
                                    mat).conserved


def ambient_conserved(mat: MaterialParams, p_inf: float = 101325.0,
                      t_inf: float = 300.0) -> np.ndarray:
    rho = ambient_density(mat, p_inf, t_inf)
    e = mat.c_v * t_inf
    return np.array([rho, 0.0, 0.0, rho * e])


def flow_scales(mat: MaterialParams, p_inf: float = 101325.0,
                t_inf: float = 300.0) -> np.ndarray:
    """Per-variable magnitudes of the quiescent ambient state, used to
    normalize thresholding and step control for conserved variables."""
    rho = ambient_density(mat, p_inf, t_inf)
    c = np.sqrt(mat.gamma * (mat.gamma - 1.0) * mat.c_v * t_inf)
    return np.array([rho, rho * c, rho * c, p_inf / (mat.gamma - 1.0)])


# ---------------------------------------------------------------------------
# boundary conditions


@dataclass
class BoundarySpec:
    """All four faces share one condition; data(x, y, t) returns the
    prescribed values (Dirichlet) or outward normal derivatives (Neumann)
    per variable."""
    data: callable
    mode: str = "inject"      # inject | penalty
    kind: str = "dirichlet"   # dirichlet | neumann (penalty only)
    tau_scale: float = 1.0

    def __post_init__(self):
        if self.mode not in ("inject", "penalty"):
            raise ValueError(f"unknown boundary mode {self.mode!r}")
        if self.kind not in ("dirichlet", "neumann"):
            raise ValueError(f"unknown boundary kind {self.kind!r}")
        if self.mode == "inject" and self.kind != "dirichlet":
            raise ValueError("direct injection requires Dirichlet data")
        if self.tau_scale <= 0:
            raise ValueError("penalty strength must be positive")
        if self.data is None:
            raise ValueError("boundary data missing")


def boundary_mask(field: SparseField) -> np.ndarray:
    w = field.dom.width
    return ((field.pos[:, 0] == 0) | (field.pos[:, 0] == w)
            | (field.pos[:, 1] == 0) | (field.pos[:, 1] == w))


def apply_dirichlet(values: np.ndarray, field: SparseField,
                    spec: BoundarySpec, t: float) -> np.ndarray:
    """Overwrite boundary collocation values with prescribed data; called
    at every stage so interior stencils see the injected values."""
    b = boundary_mask(field)
    xy = field.dom.xy(field.pos[b])
    values[b] = spec.data(xy[:, 0], xy[:, 1], t)
    return values


def apply_penalty(rhs: np.ndarray, values: np.ndarray, ws: Workset,
                  field: SparseField, spec: BoundarySpec,
                  t: float) -> np.ndarray:
    """Relax boundary entries toward the condition: rhs -= tau (B u - g),
    tau = tau_scale / finest spacing. B takes the point value (Dirichlet)
    or the outward normal derivative (Neumann)."""
    h = field.dom.spacing(field.finest_level()).min()
    tau = spec.tau_scale / h
    if spec.kind == "dirichlet":
        b = boundary_mask(field)
        xy = field.dom.xy(field.pos[b])
        rhs[b] -= tau * (ws.gather_grid(values)[b] - spec.data(
            xy[:, 0], xy[:, 1], t))
        return rhs
    d = [ws.gather_grid(ws.derivative(values, axis, 1)) for axis in (0, 1)]
    w = field.dom.width
    for axis in (0, 1):
        for side, coord, sign in ((0, 0, -1.0), (1, w, 1.0)):
            b = field.pos[:, axis] == coord
            xy = field.dom.xy(field.pos[b])
            rhs[b] -= tau * (sign * d[axis][b] - spec.data(
                xy[:, 0], xy[:, 1], t))
    return rhs
