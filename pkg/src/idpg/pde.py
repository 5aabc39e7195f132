"""Finite-difference evolution of the two marginal intensities.

The product structure is preserved by evolving the giving-side and
receiving-side marginals under their own dynamics on grids over the latent
domain (d in {1, 2}). Diffusion uses second-order central differences;
advection uses first-order upwind fluxes in conservative form, so reflecting
walls conserve mass to rounding. Boundary conditions are imposed through
ghost values: mirrored (reflecting), zero (absorbing), or a one-sided
Robin combination interpolating between the two.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Union

import numpy as np

from .gridfield import GridField

__all__ = [
    "Diffusion",
    "Advection",
    "ReactionDiffusion",
    "PursuitEvasion",
    "RegimeSpec",
    "PdeState",
    "TrajectoryPoint",
    "Trajectory",
    "pde_step",
    "evolve",
    "centroid",
    "stability_limit",
    "gaussian_diffusion_check",
]


@dataclass(frozen=True)
class Diffusion:
    nu: float

    def __post_init__(self):
        if self.nu < 0:
            raise ValueError("nu must be non-negative")


@dataclass(frozen=True)
class Advection:
    velocity: tuple

    def __post_init__(self):
        object.__setattr__(self, "velocity", tuple(float(v) for v in self.velocity))


@dataclass(frozen=True)
class ReactionDiffusion:
    nu: float
    rate: float
    capacity: float

    def __post_init__(self):
        if self.nu < 0 or self.capacity <= 0:
            raise ValueError("need nu >= 0 and a positive capacity")


@dataclass(frozen=True)
class PursuitEvasion:
    alpha: float
    beta: float
    gamma: float
    x0: tuple

    def __post_init__(self):
        object.__setattr__(self, "x0", tuple(float(v) for v in self.x0))
        if min(self.alpha, self.beta, self.gamma) <= 0:
            raise ValueError("alpha, beta, gamma must be positive")
        if any(not (0.0 <= v <= 1.0) for v in self.x0):
            raise ValueError("x0 must lie inside the domain")


RegimeSpec = Union[Diffusion, Advection, ReactionDiffusion, PursuitEvasion]


@dataclass
class PdeState:
    green: GridField
    red: GridField
    regime: RegimeSpec
    bc: str = "reflecting"
    robin_alpha: float = 1.0
    robin_beta: float = 1.0
    time: float = 0.0
    clamped_mass: float = 0.0  # diagnostic: mass zeroed by the positivity clamp

    def __post_init__(self):
        if self.bc not in ("reflecting", "absorbing", "robin"):
            raise ValueError("bc must be reflecting, absorbing, or robin")
        if self.green.dim != self.red.dim or self.green.dim not in (1, 2):
            raise ValueError("marginals must share dimension d in {1, 2}")
        if self.green.points_per_axis != self.red.points_per_axis:
            raise ValueError("marginals must share a resolution")
        if self.bc == "robin" and self.robin_beta <= 0:
            raise ValueError("robin bc requires beta > 0")
        if self.time < 0:
            raise ValueError("time must be non-negative")


def centroid(fld: GridField) -> np.ndarray:
    """Mass-normalized first moment over masked cells."""
    total = fld.values.sum()
    if total <= 0:
        raise ValueError("zero-mass field has no centroid")
    n = fld.points_per_axis
    centers = (np.arange(n) + 0.5) * fld.spacing
    out = np.empty(fld.dim)
    for axis in range(fld.dim):
        shape = [1] * fld.dim
        shape[axis] = n
        out[axis] = float((fld.values * centers.reshape(shape)).sum() / total)
    return out


def gaussian_diffusion_check(kappa0: float, nu: float, t: float) -> float:
    """Precision of an initially kappa0-precise Gaussian after isotropic diffusion."""
    if kappa0 <= 0 or nu < 0 or t < 0:
        raise ValueError("kappa0 must be positive; nu and t non-negative")
    return kappa0 / (1.0 + 2.0 * nu * kappa0 * t)


# ---------------------------------------------------------------------------
# Stencils
# ---------------------------------------------------------------------------


def _neighbor_values(v: np.ndarray, inside: np.ndarray, axis: int, step: int,
                     ghost: np.ndarray) -> np.ndarray:
    """Neighbor values along an axis, substituting ghost values where the
    neighbor is outside the domain or outside the mask."""
    shifted = np.roll(v, -step, axis=axis)
    shifted_in = np.roll(inside, -step, axis=axis)
    # roll wraps around; the wrapped slice is outside the domain
    edge = [slice(None)] * v.ndim
    edge[axis] = -1 if step > 0 else 0
    shifted_in = shifted_in.copy()
    shifted_in[tuple(edge)] = False
    return np.where(shifted_in, shifted, ghost)


def _ghost_values(v: np.ndarray, bc: str, alpha: float, beta: float, h: float) -> np.ndarray:
    if bc == "reflecting":
        return v
    if bc == "absorbing":
        return np.zeros_like(v)
    # one-sided difference for alpha*rho + beta*d(rho)/dn = 0
    return np.maximum(v * (1.0 - alpha * h / beta), 0.0)


def _diffusion_update(v: np.ndarray, inside: np.ndarray, h: float, nu: float,
                      dt: float, bc: str, alpha: float, beta: float) -> np.ndarray:
    lap = np.zeros_like(v)
    ghost = _ghost_values(v, bc, alpha, beta, h)
    for axis in range(v.ndim):
        up = _neighbor_values(v, inside, axis, +1, ghost)
        dn = _neighbor_values(v, inside, axis, -1, ghost)
        lap += up + dn - 2.0 * v
    out = v + nu * dt / (h * h) * lap
    return np.where(inside, out, 0.0)


def _advection_update(v: np.ndarray, inside: np.ndarray, h: float, dt: float,
                      bc: str, face_velocity: Callable[[int, np.ndarray], np.ndarray]) -> np.ndarray:
    """Conservative first-order upwind step.

    ``face_velocity(axis, x)`` gives the normal velocity at face coordinate
    x along that axis (the regimes used here have v_axis depending only on
    that axis coordinate). Masked-out and out-of-domain cells hold zero, so
    with absorbing walls the upwind formula already passes outgoing flux
    and admits none; reflecting walls force zero flux instead.
    """
    n = v.shape[0]
    out = v.copy()
    for axis in range(v.ndim):
        shape = [1] * v.ndim
        shape[axis] = n + 1
        vel = face_velocity(axis, (np.arange(n + 1) * h).reshape(shape))

        slab_shape = list(v.shape)
        slab_shape[axis] = 1
        zeros_slab = np.zeros(slab_shape)
        false_slab = np.zeros(slab_shape, dtype=bool)
        low_side = np.concatenate([zeros_slab, v], axis=axis)        # cell below each face
        high_side = np.concatenate([v, zeros_slab], axis=axis)       # cell above each face
        low_in = np.concatenate([false_slab, inside], axis=axis)
        high_in = np.concatenate([inside, false_slab], axis=axis)

        flux = np.where(vel > 0, low_side, high_side) * vel
        if bc == "reflecting":
            flux = np.where(low_in & high_in, flux, 0.0)

        take = [slice(None)] * v.ndim
        take[axis] = slice(1, None)
        flux_hi = flux[tuple(take)]
        take[axis] = slice(None, -1)
        flux_lo = flux[tuple(take)]
        out = out - dt / h * (flux_hi - flux_lo)
    return np.where(inside, out, 0.0)


def stability_limit(state: PdeState, max_speed: Optional[float] = None) -> float:
    """Largest admissible explicit time step for the state's regime."""
    h = state.green.spacing
    d = state.green.dim
    reg = state.regime
    if isinstance(reg, Diffusion):
        return math.inf if reg.nu == 0 else h * h / (4.0 * reg.nu * d)
    if isinstance(reg, ReactionDiffusion):
        return math.inf if reg.nu == 0 else h * h / (4.0 * reg.nu * d)
    if isinstance(reg, Advection):
        speed = max(abs(v) for v in reg.velocity) or None
        return math.inf if speed is None else h / (2.0 * speed)
    if isinstance(reg, PursuitEvasion):
        if max_speed is None:
            # velocities are affine with slope gamma; bound by the domain diameter
            diam = math.sqrt(d)
            max_speed = max(reg.alpha, reg.beta) * diam + reg.gamma * diam
        return h / (2.0 * max_speed)
    raise TypeError(f"not a regime: {reg!r}")


def pde_step(state: PdeState, dt: float) -> PdeState:
    """Advance both marginals one explicit step; raises if dt breaks stability."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    limit = stability_limit(state)
    if dt > limit * (1.0 + 1e-12):
        raise ValueError(
            f"dt={dt:g} violates the stability bound dt <= {limit:g} "
            f"({_bound_name(state.regime)})"
        )
    reg = state.regime
    h = state.green.spacing
    gv, gm = state.green.values, state.green.mask
    rv, rm = state.red.values, state.red.mask
    a, b = state.robin_alpha, state.robin_beta

    if isinstance(reg, (Diffusion, ReactionDiffusion)):
        new_g = _diffusion_update(gv, gm, h, reg.nu, dt, state.bc, a, b)
        new_r = _diffusion_update(rv, rm, h, reg.nu, dt, state.bc, a, b)
        if isinstance(reg, ReactionDiffusion):
            new_g = new_g + dt * reg.rate * new_g * (1.0 - new_g / reg.capacity)
            new_r = new_r + dt * reg.rate * new_r * (1.0 - new_r / reg.capacity)
    elif isinstance(reg, Advection):
        vel = np.asarray(reg.velocity)
        if vel.size != state.green.dim:
            raise ValueError("velocity dimension does not match the grid")

        def const_face(axis: int, pos: np.ndarray) -> np.ndarray:
            return np.full_like(pos, vel[axis])

        new_g = _advection_update(gv, gm, h, dt, state.bc, const_face)
        new_r = _advection_update(rv, rm, h, dt, state.bc, const_face)
    elif isinstance(reg, PursuitEvasion):
        mu_g = centroid(state.green)
        mu_r = centroid(state.red)
        x0 = np.asarray(reg.x0)
        if x0.size != state.green.dim:
            raise ValueError("x0 dimension does not match the grid")
        drift_g = -reg.alpha * (mu_r - x0)  # evader pushed away
        drift_r = reg.beta * (mu_g - x0)    # pursuer pulled along

        def face_g(axis: int, pos: np.ndarray) -> np.ndarray:
            return drift_g[axis] - reg.gamma * (pos - x0[axis])

        def face_r(axis: int, pos: np.ndarray) -> np.ndarray:
            return drift_r[axis] - reg.gamma * (pos - x0[axis])

        speed = float(max(np.abs(drift_g).max(), np.abs(drift_r).max()) + reg.gamma * math.sqrt(state.green.dim))
        actual_limit = h / (2.0 * max(speed, 1e-300))
        if dt > actual_limit * (1.0 + 1e-12):
            raise ValueError(
                f"dt={dt:g} violates the advection bound dt <= {actual_limit:g} "
                "(dx / (2 max|v|))"
            )
        new_g = _advection_update(gv, gm, h, dt, state.bc, face_g)
        new_r = _advection_update(rv, rm, h, dt, state.bc, face_r)
    else:
        raise TypeError(f"not a regime: {reg!r}")

    clamped = float(np.minimum(new_g, 0.0).sum() + np.minimum(new_r, 0.0).sum()) \
        * state.green.cell_volume
    new_g = np.maximum(new_g, 0.0)
    new_r = np.maximum(new_r, 0.0)
    return PdeState(
        GridField(state.green.dim, state.green.points_per_axis, new_g, gm),
        GridField(state.red.dim, state.red.points_per_axis, new_r, rm),
        reg, state.bc, state.robin_alpha, state.robin_beta,
        state.time + dt, state.clamped_mass + abs(clamped),
    )


def _bound_name(reg: RegimeSpec) -> str:
    if isinstance(reg, (Diffusion, ReactionDiffusion)):
        return "dx^2 / (4 nu d)"
    return "dx / (2 max|v|)"


# ---------------------------------------------------------------------------
# Trajectories of induced graph statistics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrajectoryPoint:
    time: float
    mass_g: float
    mass_r: float
    lam: float
    centroid_g: np.ndarray
    centroid_r: np.ndarray
    expected_perennial_edges: float
    expected_ephemeral_edges: float
    ratio: float


@dataclass
class Trajectory:
    points: List[TrajectoryPoint] = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(p, name) for p in self.points])


def _snapshot(state: PdeState) -> TrajectoryPoint:
    mass_g = state.green.total_mass()
    mass_r = state.red.total_mass()
    lam = mass_g * mass_r
    mu_g = centroid(state.green)
    mu_r = centroid(state.red)
    q = float(mu_g @ mu_r)
    per = lam * lam * q
    eph = 2.0 * lam * q
    return TrajectoryPoint(state.time, mass_g, mass_r, lam, mu_g, mu_r,
                           per, eph, per / eph if eph > 0 else math.nan)


def evolve(state: PdeState, t_end: float, dt: Optional[float] = None,
           snapshot_every: int = 1) -> tuple:
    """Run pde_step to t_end, recording a trajectory of graph statistics.

    dt=None picks 40% of the stability limit. Returns (final_state,
    trajectory); the trajectory includes the initial and final states.
    """
    if t_end <= state.time:
        raise ValueError("t_end must exceed the current time")
    if snapshot_every < 1:
        raise ValueError("snapshot_every must be >= 1")
    if dt is None:
        limit = stability_limit(state)
        if not math.isfinite(limit):
            limit = (t_end - state.time)
        dt = 0.4 * limit
    steps = max(1, int(math.ceil((t_end - state.time) / dt - 1e-12)))
    traj = Trajectory([_snapshot(state)])
    for k in range(steps):
        state = pde_step(state, dt)
        if (k + 1) % snapshot_every == 0 or k == steps - 1:
            traj.points.append(_snapshot(state))
    return state, traj
