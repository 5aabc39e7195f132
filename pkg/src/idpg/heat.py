"""Heat densities and maps: the continuous analogue of the probability matrix.

The raw heat density weighs the affinity kernel by the intensity at both
endpoints; its integral over a pair of regions is the expected number of
edges from one region to the other under perennial sampling. Because the
kernel is bilinear, every region-to-region integral factorizes through two
vector-valued moments, which is what makes these maps cheap to evaluate.

Also here: bound-heat tables for product models, bite combinations,
non-product slices, recovery of the intensity from the diagonal heat, and
the point-mass (vanishing-width) limit that reproduces a probability
matrix from box heats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .gridfield import GridField
from .latent import (
    DEFAULT_SCHEME,
    IntensityModel,
    MixtureOfProducts,
    MomentSummary,
    Position,
    Product,
    QuadratureSpec,
    TabulatedJoint,
    _gauss_box,
    box_marginal_moments,
    evaluate_intensity,
    kernel_affinity,
    model_dim,
)

__all__ = [
    "BoxRegion",
    "BiteMoments",
    "full_space_box",
    "raw_heat_density",
    "raw_heat_map",
    "bound_heat_grid",
    "restricted_bite",
    "bite_heat",
    "raw_heat_slice",
    "recover_intensity_from_heat",
    "dirac_limit_heat",
]


@dataclass(frozen=True)
class BoxRegion:
    """Axis-aligned box; over the pair space the first d axes are the giving
    coordinate and the last d the receiving coordinate."""

    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo = tuple(float(x) for x in self.lower)
        hi = tuple(float(x) for x in self.upper)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if len(lo) != len(hi):
            raise ValueError("box bounds must have equal length")
        if any(a > b for a, b in zip(lo, hi)):
            raise ValueError("box lower bound exceeds upper bound")

    @property
    def ndim(self) -> int:
        return len(self.lower)

    def is_empty(self) -> bool:
        return any(a >= b for a, b in zip(self.lower, self.upper))


def full_space_box(d: int) -> BoxRegion:
    """The whole pair space as a box (2d axes)."""
    return BoxRegion((0.0,) * (2 * d), (1.0,) * (2 * d))


def raw_heat_density(model: IntensityModel, s: Position, t: Position,
                     scheme: QuadratureSpec = DEFAULT_SCHEME) -> float:
    """h(s, t) = K(s, t) * rho(s) * rho(t)."""
    d = model_dim(model)
    if s.dim != d or t.dim != d:
        raise ValueError("position dimension does not match the model")
    k = kernel_affinity(s.g, t.r)
    return k * evaluate_intensity(model, s, scheme) * evaluate_intensity(model, t, scheme)


def _box_weighted_moment(model: IntensityModel, box: BoxRegion, side: str,
                         scheme: QuadratureSpec) -> np.ndarray:
    """Integral over the box of (g if side='green' else r) times the intensity.

    The kernel sees only the source's giving coordinate and the target's
    receiving coordinate, so any heat between boxes is the dot product of
    two such vectors.
    """
    d = model_dim(model)
    if box.ndim != 2 * d:
        raise ValueError(f"box must have {2 * d} axes for a d={d} model")
    g_lo, g_hi = np.array(box.lower[:d]), np.array(box.upper[:d])
    r_lo, r_hi = np.array(box.lower[d:]), np.array(box.upper[d:])
    if box.is_empty():
        return np.zeros(d)
    if isinstance(model, Product):
        if side == "green":
            _, raw = box_marginal_moments(model.green, g_lo, g_hi, scheme)
            mass, _ = box_marginal_moments(model.red, r_lo, r_hi, scheme)
        else:
            mass, _ = box_marginal_moments(model.green, g_lo, g_hi, scheme)
            _, raw = box_marginal_moments(model.red, r_lo, r_hi, scheme)
        return raw * mass
    if isinstance(model, MixtureOfProducts):
        out = np.zeros(d)
        for c in model.components:
            if side == "green":
                _, raw = box_marginal_moments(c.green, g_lo, g_hi, scheme)
                mass, _ = box_marginal_moments(c.red, r_lo, r_hi, scheme)
            else:
                mass, _ = box_marginal_moments(c.green, g_lo, g_hi, scheme)
                _, raw = box_marginal_moments(c.red, r_lo, r_hi, scheme)
            out += raw * mass
        return out
    if isinstance(model, TabulatedJoint):
        fld = model.field
        n = fld.points_per_axis
        centers = (np.arange(n) + 0.5) * fld.spacing
        in_g = (centers >= g_lo[0]) & (centers < g_hi[0])
        in_r = (centers >= r_lo[0]) & (centers < r_hi[0])
        sub = fld.values[np.ix_(in_g, in_r)]
        w = fld.cell_volume
        if side == "green":
            val = float((centers[in_g][:, None] * sub).sum() * w)
        else:
            val = float((sub * centers[in_r][None, :]).sum() * w)
        return np.array([val])
    raise TypeError(f"not an intensity model: {model!r}")


def raw_heat_map(model: IntensityModel, region_a: BoxRegion, region_b: BoxRegion,
                 scheme: QuadratureSpec = DEFAULT_SCHEME) -> float:
    """Integral of the raw heat density over A x B: expected edges A -> B."""
    src = _box_weighted_moment(model, region_a, "green", scheme)
    dst = _box_weighted_moment(model, region_b, "red", scheme)
    return float(src @ dst)


def bound_heat_grid(model: Product, resolution: int = 64,
                    scheme: QuadratureSpec = DEFAULT_SCHEME) -> GridField:
    """Tabulate (g . r) rho_G(g) rho_R(r) on a tensor grid over (g, r).

    Product models only; for a non-product joint no 2d-dimensional summary
    exists, use :func:`raw_heat_slice` instead.
    """
    if not isinstance(model, Product):
        raise ValueError(
            "bound heat needs a product intensity; for joint models use raw_heat_slice"
        )
    d = model_dim(model)
    if d > 2:
        raise ValueError("dense bound-heat grids are supported for d <= 2")
    from .latent import _marginal_density_fn

    h = 1.0 / resolution
    centers = (np.arange(resolution) + 0.5) * h
    axes = np.meshgrid(*([centers] * d), indexing="ij")
    pts = np.stack([a.ravel() for a in axes], axis=-1)
    inside = np.einsum("ij,ij->i", pts, pts) <= 1.0
    rho_g = np.where(inside, _marginal_density_fn(model.green, scheme)(pts), 0.0)
    rho_r = np.where(inside, _marginal_density_fn(model.red, scheme)(pts), 0.0)
    kernel = pts @ pts.T
    values = kernel * np.outer(rho_g, rho_r)
    shape = (resolution,) * (2 * d)
    side_mask = inside.reshape((resolution,) * d)
    mask = np.logical_and.outer(side_mask, side_mask)
    return GridField(2 * d, resolution, values.reshape(shape), mask.reshape(shape))


# ---------------------------------------------------------------------------
# Bites
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BiteMoments:
    """Mass and raw first moment of one marginal restricted to a box."""

    side: str  # "green" | "red"
    mass: float
    raw_mean: np.ndarray


def restricted_bite(model: Product, side: str, lower, upper,
                    scheme: QuadratureSpec = DEFAULT_SCHEME) -> BiteMoments:
    if side not in ("green", "red"):
        raise ValueError("side must be 'green' or 'red'")
    marg = model.green if side == "green" else model.red
    mass, raw = box_marginal_moments(marg, lower, upper, scheme)
    return BiteMoments(side, mass, raw)


def bite_heat(summary: MomentSummary, combination: str,
              source: Optional[BiteMoments], target: Optional[BiteMoments]) -> float:
    """Raw heat between two bites (regions constraining one coordinate each).

    Combinations: "g_to_r" (the bound-heat case), "g_to_g", "r_to_r",
    "r_to_g". Source/target must carry the restricted moments for the
    constrained coordinate of that slot.
    """
    if summary.kind != "product":
        raise ValueError("bite formulas hold under a product intensity")
    if source is None or target is None:
        raise ValueError("missing restricted moments for a bite slot")
    want = {"g_to_r": ("green", "red"), "g_to_g": ("green", "green"),
            "r_to_r": ("red", "red"), "r_to_g": ("red", "green")}
    if combination not in want:
        raise ValueError(f"unknown bite combination {combination!r}")
    s_side, t_side = want[combination]
    if source.side != s_side or target.side != t_side:
        raise ValueError(f"{combination} expects a {s_side} source and {t_side} target")
    if combination == "g_to_r":
        return summary.lam * float(source.raw_mean @ target.raw_mean)
    if combination == "g_to_g":
        return summary.c_R * float(source.raw_mean @ summary.mu_R) * target.mass
    if combination == "r_to_r":
        return summary.c_G * float(summary.mu_G @ target.raw_mean) * source.mass
    return float(summary.mu_G @ summary.mu_R) * source.mass * target.mass


# ---------------------------------------------------------------------------
# Non-product slices and intensity recovery
# ---------------------------------------------------------------------------


def raw_heat_slice(model: TabulatedJoint, fixed_r_s: float, fixed_g_t: float,
                   resolution: int = 128) -> GridField:
    """Slice of the 4D raw heat h(g_s, r_t | r_s, g_t) on a (g_s, r_t) grid.

    For a genuinely non-product joint, slices at different fixed
    coordinates are not proportional; for a product-form joint they are.
    """
    if not isinstance(model, TabulatedJoint):
        raise ValueError("raw heat slices are defined for tabulated joint models")
    if not (0.0 <= fixed_r_s <= 1.0 and 0.0 <= fixed_g_t <= 1.0):
        raise ValueError("fixed coordinates must lie in [0, 1]")
    h = 1.0 / resolution
    centers = (np.arange(resolution) + 0.5) * h
    rho_s = np.array([model.field.value_at((gs, fixed_r_s)) for gs in centers])
    rho_t = np.array([model.field.value_at((fixed_g_t, rt)) for rt in centers])
    kernel = np.outer(centers, centers)
    values = kernel * np.outer(rho_s, rho_t)
    return GridField(2, resolution, values, np.ones((resolution, resolution), dtype=bool))


def recover_intensity_from_heat(diag_heat: Callable[[Position], float],
                                dim: int, kernel_floor: float = 1e-8):
    """Invert rho(s) = sqrt(h(s, s) / K(s, s)) pointwise.

    Returns a callable mapping a position to the recovered density, or NaN
    where the diagonal kernel is below ``kernel_floor`` (the point is
    flagged unrecoverable rather than extrapolated).
    """

    def rho_hat(s: Position) -> float:
        if s.dim != dim:
            raise ValueError("position dimension mismatch")
        k = kernel_affinity(s.g, s.r)
        if k <= kernel_floor:
            return math.nan
        return math.sqrt(max(diag_heat(s), 0.0) / k)

    return rho_hat


# ---------------------------------------------------------------------------
# Point-mass limit
# ---------------------------------------------------------------------------


def dirac_limit_heat(positions, epsilon: float, resolution: Optional[int] = None,
                     box_sigmas: float = 4.0) -> np.ndarray:
    """Box heats of a sum of unit-mass near-point intensities.

    Each position contributes a product of per-dimension Gaussians with
    standard deviation ``epsilon`` truncated to [0, 1], normalized to unit
    mass. Entry (i, j) is the raw heat between boxes of half-width
    ``box_sigmas * epsilon`` around positions i and j; as epsilon shrinks it
    converges to the dot product g_i . r_j.

    With ``resolution`` set, box integrals use midpoint quadrature at that
    many nodes per dimension instead of the closed form (cross-validation
    hook; the default closed form is exact).
    """
    positions = list(positions)
    n = len(positions)
    if n == 0:
        return np.zeros((0, 0))
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    d = positions[0].dim
    w = box_sigmas * epsilon
    centers = np.array([np.concatenate([p.g, p.r]) for p in positions])
    for i in range(n):
        for j in range(i + 1, n):
            if np.all(np.abs(centers[i] - centers[j]) < 2.0 * w):
                raise ValueError(f"boxes around positions {i} and {j} overlap")

    def axis_integrals(mean: float, lo: float, hi: float):
        lo, hi = max(lo, 0.0), min(hi, 1.0)
        if resolution is None:
            z, zx, _ = _gauss_box(mean, epsilon, lo, hi)
            return z, zx
        xs = lo + (np.arange(resolution) + 0.5) * (hi - lo) / resolution
        f = np.exp(-0.5 * ((xs - mean) / epsilon) ** 2)
        step = (hi - lo) / resolution
        return float(f.sum() * step), float((xs * f).sum() * step)

    # per-component normalization over the full domain (per-dimension [0,1])
    norm = np.empty(n)
    for k, p in enumerate(positions):
        z = 1.0
        for c in np.concatenate([p.g, p.r]):
            zc, _, _ = _gauss_box(float(c), epsilon, 0.0, 1.0)
            z *= zc
        norm[k] = z

    def box_vector(i: int, side: str) -> np.ndarray:
        """Integral over box i of (g or r) times the full intensity."""
        lo = centers[i] - w
        hi = centers[i] + w
        out = np.zeros(d)
        for k, p in enumerate(positions):
            mu = np.concatenate([p.g, p.r])
            m0 = np.empty(2 * d)
            m1 = np.empty(2 * d)
            for a in range(2 * d):
                m0[a], m1[a] = axis_integrals(float(mu[a]), lo[a], hi[a])
            total = np.prod(m0)
            if total == 0.0:
                continue
            offset = 0 if side == "green" else d
            for a in range(d):
                ax = offset + a
                if m0[ax] > 0:
                    out[a] += total / m0[ax] * m1[ax] / norm[k]
        return out

    green_vecs = np.array([box_vector(i, "green") for i in range(n)])
    red_vecs = np.array([box_vector(j, "red") for j in range(n)])
    return green_vecs @ red_vecs.T
