"""Latent-space geometry, intensity models, the affinity kernel, and moments.

The latent domain is the non-negative part of the closed unit ball in d
dimensions; an individual occupies a pair of such vectors (a giving and a
receiving coordinate). An intensity model is a non-negative density over
pairs, in one of three shapes:

* ``Product(green, red)`` -- the two coordinates are independent,
* ``MixtureOfProducts([...])`` -- species-labelled sum of products, which
  couples the two coordinates through the component label,
* ``TabulatedJoint(field)`` -- an arbitrary gridded joint density (d = 1).

``moments`` reduces a model to the handful of integrals everything else is
built from: masses, intensity-weighted means, normalized second-moment
matrices, and squared-density Gram matrices. Closed forms are used where
they exist (uniform-ball marginals in any dimension, one-dimensional
Gaussian marginals); otherwise a midpoint tensor grid (d <= 2) or seeded
Monte Carlo (any d) is used.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.special import gammaln, ndtr

from .gridfield import GridField, load_grid, save_grid

__all__ = [
    "MAX_DIM",
    "Position",
    "UniformBall",
    "TruncGaussianSpec",
    "GridTabulated",
    "MarginalIntensity",
    "Product",
    "MixtureComponent",
    "MixtureOfProducts",
    "TabulatedJoint",
    "IntensityModel",
    "QuadratureSpec",
    "MarginalMoments",
    "MomentSummary",
    "kernel_affinity",
    "evaluate_intensity",
    "evaluate_marginal",
    "marginal_moments",
    "box_marginal_moments",
    "mixture_marginal_density",
    "moments",
    "model_dim",
    "total_intensity",
    "model_to_dict",
    "model_from_dict",
    "save_model",
    "load_model",
]

MAX_DIM = 16

_SQRT2PI = math.sqrt(2.0 * math.pi)
_NORM_TOL = 1e-9


def _check_latent(v, dim: Optional[int] = None) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.ndim != 1:
        raise ValueError("latent vector must be one-dimensional")
    if dim is not None and v.size != dim:
        raise ValueError(f"dimension mismatch: expected {dim}, got {v.size}")
    if v.size > MAX_DIM:
        raise ValueError(f"dimension {v.size} exceeds the supported limit {MAX_DIM}")
    if np.any(v < 0):
        raise ValueError("latent coordinates must be non-negative")
    if np.dot(v, v) > 1.0 + _NORM_TOL:
        raise ValueError("latent vector lies outside the unit ball")
    return v


@dataclass(frozen=True)
class Position:
    """A point in the pair space: giving coordinate g, receiving coordinate r."""

    g: np.ndarray
    r: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "g", _check_latent(self.g))
        object.__setattr__(self, "r", _check_latent(self.r, dim=self.g.size))

    @property
    def dim(self) -> int:
        return self.g.size


def kernel_affinity(g, r) -> float:
    """Dot-product affinity; the probability that a source at g connects to a target at r."""
    g = _check_latent(g)
    r = _check_latent(r, dim=g.size)
    return float(np.dot(g, r))


# ---------------------------------------------------------------------------
# Marginal intensities
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class UniformBall:
    """Constant density over the positive unit-ball section, total integral = mass."""

    mass: float
    dim: int = 1

    def __post_init__(self):
        if self.mass <= 0:
            raise ValueError("mass must be positive")
        if not (1 <= self.dim <= MAX_DIM):
            raise ValueError(f"dim must be in [1, {MAX_DIM}]")


@dataclass(frozen=True)
class TruncGaussianSpec:
    """Per-dimension Gaussian factors truncated to the positive unit ball.

    kappa[i] is the precision (1 / sigma_i^2) in dimension i. The density is
    the unnormalized factor product times the domain indicator, rescaled so
    the total integral equals ``mass``.
    """

    mean: tuple
    kappa: tuple
    mass: float

    def __post_init__(self):
        mean = tuple(float(x) for x in self.mean)
        kappa = tuple(float(k) for k in self.kappa)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "kappa", kappa)
        if len(mean) != len(kappa):
            raise ValueError("mean and kappa must have equal length")
        if not (1 <= len(mean) <= MAX_DIM):
            raise ValueError(f"dim must be in [1, {MAX_DIM}]")
        if self.mass <= 0:
            raise ValueError("mass must be positive")
        if any(k <= 0 for k in kappa):
            raise ValueError("all kappa must be positive")
        if any(not (0.0 <= m <= 1.0) for m in mean):
            raise ValueError("mean must lie in [0,1]^d")
        if sum(m * m for m in mean) > 1.0 + _NORM_TOL:
            raise ValueError("mean must lie inside the positive unit ball")

    @property
    def dim(self) -> int:
        return len(self.mean)

    @property
    def sigma(self) -> np.ndarray:
        return 1.0 / np.sqrt(np.asarray(self.kappa))


@dataclass
class GridTabulated:
    """Marginal density tabulated on a regular grid over [0,1]^d (ball-masked)."""

    field: GridField

    def __post_init__(self):
        if self.field.total_mass() <= 0:
            raise ValueError("tabulated marginal must have positive total mass")

    @property
    def dim(self) -> int:
        return self.field.dim

    @property
    def mass(self) -> float:
        return self.field.total_mass()


MarginalIntensity = Union[UniformBall, TruncGaussianSpec, GridTabulated]


def marginal_dim(m: MarginalIntensity) -> int:
    return m.dim


def marginal_mass(m: MarginalIntensity) -> float:
    return m.mass


# ---------------------------------------------------------------------------
# Intensity models
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Product:
    green: MarginalIntensity
    red: MarginalIntensity

    def __post_init__(self):
        if self.green.dim != self.red.dim:
            raise ValueError("green and red marginals must share a dimension")


@dataclass(frozen=True)
class MixtureComponent:
    label: str
    green: MarginalIntensity
    red: MarginalIntensity

    def __post_init__(self):
        if self.green.dim != self.red.dim:
            raise ValueError("component marginals must share a dimension")

    @property
    def gamma(self) -> float:
        return self.green.mass * self.red.mass


@dataclass(frozen=True)
class MixtureOfProducts:
    components: tuple

    def __post_init__(self):
        comps = tuple(self.components)
        object.__setattr__(self, "components", comps)
        if not comps:
            raise ValueError("mixture needs at least one component")
        d = comps[0].green.dim
        for c in comps:
            if c.green.dim != d:
                raise ValueError("all mixture components must share a dimension")
            if c.gamma <= 0:
                raise ValueError(f"component {c.label!r} has non-positive contribution")


@dataclass
class TabulatedJoint:
    """Joint density over (g, r) on a 2D grid; supported at latent dimension 1 only."""

    field: GridField

    def __post_init__(self):
        if self.field.dim != 2:
            raise ValueError("tabulated joint requires a 2D grid over (g, r)")
        # the (g, r) domain at d = 1 is the full unit square, not a disk
        if not self.field.mask.all():
            self.field = GridField(
                2, self.field.points_per_axis, self.field.values,
                np.ones_like(self.field.mask),
            )
        if self.field.total_mass() <= 0:
            raise ValueError("joint intensity must have positive total mass")


IntensityModel = Union[Product, MixtureOfProducts, TabulatedJoint]


def model_dim(model: IntensityModel) -> int:
    if isinstance(model, Product):
        return model.green.dim
    if isinstance(model, MixtureOfProducts):
        return model.components[0].green.dim
    if isinstance(model, TabulatedJoint):
        return 1
    raise TypeError(f"not an intensity model: {model!r}")


def total_intensity(model: IntensityModel) -> float:
    """Total integral of the intensity (the expected number of individuals)."""
    if isinstance(model, Product):
        return model.green.mass * model.red.mass
    if isinstance(model, MixtureOfProducts):
        return float(sum(c.gamma for c in model.components))
    if isinstance(model, TabulatedJoint):
        return model.field.total_mass()
    raise TypeError(f"not an intensity model: {model!r}")


# ---------------------------------------------------------------------------
# Quadrature
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QuadratureSpec:
    """How integrals are evaluated.

    method "auto" uses closed forms where available, a midpoint tensor grid
    for d <= 2, and Monte Carlo beyond; "grid" and "mc" force one engine.
    Monte Carlo requires an explicit seed.
    """

    method: str = "auto"
    grid_points: int = 256
    mc_samples: int = 1_000_000
    seed: Optional[int] = None

    def __post_init__(self):
        if self.method not in ("auto", "grid", "mc"):
            raise ValueError("method must be 'auto', 'grid', or 'mc'")
        if self.grid_points < 2 or self.mc_samples < 2:
            raise ValueError("degenerate quadrature resolution")

    def require_seed(self):
        if self.seed is None:
            raise ValueError("Monte Carlo quadrature requires an explicit seed")


DEFAULT_SCHEME = QuadratureSpec()


@dataclass(frozen=True)
class MarginalMoments:
    """Integrals of one marginal: mass, raw first moment, and normalized/second-order summaries."""

    mass: float
    raw_mean: np.ndarray        # integral of x * rho(x)
    norm_mean: np.ndarray       # raw_mean / mass
    second: np.ndarray          # E[x x^T] under rho / mass
    gram: np.ndarray            # integral of x x^T * rho(x)^2


# -- closed forms ------------------------------------------------------------


def _ball_section_volume(d: int) -> float:
    return math.exp(0.5 * d * math.log(math.pi) - d * math.log(2.0) - gammaln(0.5 * d + 1.0))


def _uniform_ball_moments(m: UniformBall) -> MarginalMoments:
    d = m.dim
    vol = _ball_section_volume(d)
    # radial and angular factors for a uniform draw on the positive ball section
    mean_coord = (d / (d + 1.0)) * math.exp(gammaln(0.5 * d) - gammaln(0.5 * (d + 1))) / math.sqrt(math.pi)
    second = np.full((d, d), (2.0 / math.pi) / (d + 2.0))
    np.fill_diagonal(second, 1.0 / (d + 2.0))
    norm_mean = np.full(d, mean_coord)
    gram = (m.mass**2 / vol) * second
    return MarginalMoments(m.mass, m.mass * norm_mean, norm_mean, second, gram)


def _std_phi(x: np.ndarray) -> np.ndarray:
    return np.exp(-0.5 * x * x) / _SQRT2PI


def _gauss_box(mean: float, sigma: float, lo: float, hi: float):
    """(integral, first moment, second moment) of exp(-(x-mean)^2 / (2 sigma^2)) over [lo, hi]."""
    if hi <= lo:
        return 0.0, 0.0, 0.0
    a = (lo - mean) / sigma
    b = (hi - mean) / sigma
    big = ndtr(b) - ndtr(a)
    z = sigma * _SQRT2PI * big
    if big <= 0.0:
        return 0.0, 0.0, 0.0
    pa, pb = _std_phi(a), _std_phi(b)
    ez = (pa - pb) / big
    ez2 = 1.0 + (a * pa - b * pb) / big
    m1 = mean + sigma * ez
    m2 = mean * mean + 2.0 * mean * sigma * ez + sigma * sigma * ez2
    return z, z * m1, z * m2


@lru_cache(maxsize=None)
def _tg1d_norm(spec: TruncGaussianSpec) -> float:
    z, _, _ = _gauss_box(spec.mean[0], 1.0 / math.sqrt(spec.kappa[0]), 0.0, 1.0)
    return z


def _tg1d_moments(spec: TruncGaussianSpec) -> MarginalMoments:
    mean, sigma = spec.mean[0], 1.0 / math.sqrt(spec.kappa[0])
    z, zx, zx2 = _gauss_box(mean, sigma, 0.0, 1.0)
    scale = spec.mass / z
    # rho^2 is a Gaussian with sigma / sqrt(2), truncated to the same interval
    _, _, q2 = _gauss_box(mean, sigma / math.sqrt(2.0), 0.0, 1.0)
    gram = scale * scale * q2
    return MarginalMoments(
        spec.mass,
        np.array([scale * zx]),
        np.array([zx / z]),
        np.array([[zx2 / z]]),
        np.array([[gram]]),
    )


# -- density evaluation ------------------------------------------------------


def _inside_ball(pts: np.ndarray) -> np.ndarray:
    return (pts >= 0.0).all(axis=-1) & (np.einsum("...i,...i->...", pts, pts) <= 1.0 + _NORM_TOL)


@lru_cache(maxsize=None)
def _tg_norm_cached(spec: TruncGaussianSpec, scheme: QuadratureSpec) -> float:
    d = spec.dim
    if d == 1:
        return _tg1d_norm(spec)
    factor = _tg_factor_fn(spec)
    if scheme.method == "mc" or (scheme.method == "auto" and d > 2):
        # fixed internal stream keeps standalone density evaluation deterministic
        seed = scheme.seed if scheme.seed is not None else 0x1D9C
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
        pts = rng.random((scheme.mc_samples, d))
        vals = np.where(_inside_ball(pts), factor(pts), 0.0)
        return float(vals.mean())
    pts, w = _grid_nodes(d, scheme.grid_points)
    return float((factor(pts) * w).sum())


def _tg_factor_fn(spec: TruncGaussianSpec) -> Callable[[np.ndarray], np.ndarray]:
    mean = np.asarray(spec.mean)
    kappa = np.asarray(spec.kappa)

    def factor(pts: np.ndarray) -> np.ndarray:
        delta = pts - mean
        return np.exp(-0.5 * np.einsum("...i,i,...i->...", delta, kappa, delta))

    return factor


def _grid_nodes(d: int, n: int):
    """Midpoint cells inside the ball: node coordinates (m, d) and weights (m,)."""
    h = 1.0 / n
    centers = (np.arange(n) + 0.5) * h
    grids = np.meshgrid(*([centers] * d), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=-1)
    keep = np.einsum("ij,ij->i", pts, pts) <= 1.0
    pts = pts[keep]
    return pts, np.full(len(pts), h**d)


def evaluate_marginal(m: MarginalIntensity, x, scheme: QuadratureSpec = DEFAULT_SCHEME) -> float:
    """Density of one marginal at a point (zero outside the domain)."""
    x = np.asarray(x, dtype=float)
    if x.shape != (m.dim,):
        raise ValueError(f"dimension mismatch: expected {m.dim}, got {x.shape}")
    if np.any(x < 0) or float(x @ x) > 1.0 + _NORM_TOL:
        return 0.0
    if isinstance(m, UniformBall):
        return m.mass / _ball_section_volume(m.dim)
    if isinstance(m, TruncGaussianSpec):
        z = _tg_norm_cached(m, scheme)
        return float(m.mass / z * _tg_factor_fn(m)(x[None, :])[0])
    if isinstance(m, GridTabulated):
        return m.field.value_at(x)
    raise TypeError(f"not a marginal intensity: {m!r}")


def _marginal_density_fn(m: MarginalIntensity, scheme: QuadratureSpec) -> Callable[[np.ndarray], np.ndarray]:
    """Vectorized density over an (n, d) array of points already inside the domain."""
    if isinstance(m, UniformBall):
        level = m.mass / _ball_section_volume(m.dim)
        return lambda pts: np.full(len(pts), level)
    if isinstance(m, TruncGaussianSpec):
        z = _tg_norm_cached(m, scheme)
        factor = _tg_factor_fn(m)
        scale = m.mass / z
        return lambda pts: scale * factor(pts)
    if isinstance(m, GridTabulated):
        fld = m.field
        n = fld.points_per_axis

        def lookup(pts: np.ndarray) -> np.ndarray:
            idx = np.minimum((pts / fld.spacing).astype(int), n - 1)
            return fld.values[tuple(idx.T)]

        return lookup
    raise TypeError(f"not a marginal intensity: {m!r}")


def evaluate_intensity(model: IntensityModel, p: Position,
                       scheme: QuadratureSpec = DEFAULT_SCHEME) -> float:
    """Joint intensity at a position; zero outside the pair domain."""
    d = model_dim(model)
    if p.dim != d:
        raise ValueError(f"dimension mismatch: model is d={d}, position is d={p.dim}")
    if isinstance(model, Product):
        return evaluate_marginal(model.green, p.g, scheme) * evaluate_marginal(model.red, p.r, scheme)
    if isinstance(model, MixtureOfProducts):
        return float(sum(
            evaluate_marginal(c.green, p.g, scheme) * evaluate_marginal(c.red, p.r, scheme)
            for c in model.components
        ))
    if isinstance(model, TabulatedJoint):
        return model.field.value_at(np.concatenate([p.g, p.r]))
    raise TypeError(f"not an intensity model: {model!r}")


# -- generic quadrature of a marginal-like density ---------------------------


def _quad_density(density: Callable[[np.ndarray], np.ndarray], d: int,
                  scheme: QuadratureSpec, force_mc: bool = False) -> MarginalMoments:
    if scheme.method == "mc" or force_mc or (scheme.method == "auto" and d > 2):
        scheme.require_seed()
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(scheme.seed)))
        pts = rng.random((scheme.mc_samples, d))
        inside = _inside_ball(pts)
        rho = np.where(inside, density(pts), 0.0)
        w = np.full(len(pts), 1.0 / len(pts))
    else:
        if d > 2:
            raise ValueError("grid quadrature supports d <= 2; use Monte Carlo")
        pts, w = _grid_nodes(d, scheme.grid_points)
        rho = density(pts)
    mass = float(rho @ w)
    if mass <= 0:
        raise ValueError("non-integrable or vanishing density")
    raw_mean = (pts * (rho * w)[:, None]).sum(axis=0)
    second_raw = np.einsum("ni,nj,n->ij", pts, pts, rho * w)
    gram = np.einsum("ni,nj,n->ij", pts, pts, rho * rho * w)
    return MarginalMoments(mass, raw_mean, raw_mean / mass, second_raw / mass, gram)


def marginal_moments(m: MarginalIntensity, scheme: QuadratureSpec = DEFAULT_SCHEME) -> MarginalMoments:
    """Mass, means, second moments, and squared-density Gramian of a marginal."""
    if scheme.method == "auto":
        if isinstance(m, UniformBall):
            return _uniform_ball_moments(m)
        if isinstance(m, TruncGaussianSpec) and m.dim == 1:
            return _tg1d_moments(m)
    if isinstance(m, GridTabulated) and scheme.method != "mc":
        return _grid_tabulated_moments(m)
    mm = _quad_density(_marginal_density_fn(m, scheme), m.dim, scheme)
    if not isinstance(m, GridTabulated):
        # rescale so the quadrature total matches the declared mass exactly
        ratio = m.mass / mm.mass
        mm = MarginalMoments(m.mass, mm.raw_mean * ratio, mm.norm_mean,
                             mm.second, mm.gram * ratio * ratio)
    return mm


def _grid_tabulated_moments(m: GridTabulated) -> MarginalMoments:
    fld = m.field
    pts, _ = _grid_nodes_all(fld)
    w = fld.cell_volume
    rho = fld.values.ravel()
    mass = float(rho.sum() * w)
    raw_mean = (pts * rho[:, None]).sum(axis=0) * w
    second_raw = np.einsum("ni,nj,n->ij", pts, pts, rho) * w
    gram = np.einsum("ni,nj,n->ij", pts, pts, rho * rho) * w
    return MarginalMoments(mass, raw_mean, raw_mean / mass, second_raw / mass, gram)


def _grid_nodes_all(fld: GridField):
    n = fld.points_per_axis
    centers = (np.arange(n) + 0.5) * fld.spacing
    grids = np.meshgrid(*([centers] * fld.dim), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=-1)
    return pts, None


def box_marginal_moments(m: MarginalIntensity, lower, upper,
                         scheme: QuadratureSpec = DEFAULT_SCHEME):
    """(mass, raw first moment) of a marginal restricted to an axis-aligned box.

    Full-domain boxes reduce to the unrestricted moments, so identities that
    compare restricted and global quantities hold to machine precision.
    """
    lower = np.clip(np.asarray(lower, dtype=float), 0.0, 1.0)
    upper = np.clip(np.asarray(upper, dtype=float), 0.0, 1.0)
    d = m.dim
    if lower.shape != (d,) or upper.shape != (d,):
        raise ValueError("box bounds must match the marginal dimension")
    if np.any(lower > upper):
        raise ValueError("box lower bound exceeds upper bound")
    if np.all(lower == 0.0) and np.all(upper == 1.0):
        mm = marginal_moments(m, scheme)
        return mm.mass, mm.raw_mean
    if np.any(lower >= upper):
        return 0.0, np.zeros(d)

    if d == 1 and isinstance(m, UniformBall):
        lo, hi = lower[0], upper[0]
        return m.mass * (hi - lo), np.array([m.mass * 0.5 * (hi * hi - lo * lo)])
    if d == 1 and isinstance(m, TruncGaussianSpec):
        sigma = 1.0 / math.sqrt(m.kappa[0])
        z_full = _tg1d_norm(m)
        z, zx, _ = _gauss_box(m.mean[0], sigma, lower[0], upper[0])
        scale = m.mass / z_full
        return scale * z, np.array([scale * zx])
    if isinstance(m, GridTabulated) and scheme.method != "mc":
        fld = m.field
        pts, _ = _grid_nodes_all(fld)
        rho = fld.values.ravel()
        keep = np.all((pts >= lower) & (pts < upper), axis=1)
        w = fld.cell_volume
        mass = float(rho[keep].sum() * w)
        raw = (pts[keep] * rho[keep][:, None]).sum(axis=0) * w
        return mass, raw

    density = _marginal_density_fn(m, scheme)

    def restricted(pts: np.ndarray) -> np.ndarray:
        keep = np.all((pts >= lower) & (pts < upper), axis=1)
        return np.where(keep, density(pts), 0.0)

    try:
        mm = _quad_density(restricted, d, scheme)
    except ValueError:
        return 0.0, np.zeros(d)
    # rescale by the same factor the full-space quadrature would need
    full = _quad_density(density, d, scheme)
    ratio = m.mass / full.mass
    return mm.mass * ratio, mm.raw_mean * ratio


def mixture_marginal_density(model: MixtureOfProducts, side: str,
                             scheme: QuadratureSpec = DEFAULT_SCHEME) -> Callable[[np.ndarray], np.ndarray]:
    """Density of the g- (side='green') or r-marginal of a mixture; mass = total intensity."""
    if side not in ("green", "red"):
        raise ValueError("side must be 'green' or 'red'")
    parts = []
    for c in model.components:
        own = c.green if side == "green" else c.red
        other_mass = (c.red if side == "green" else c.green).mass
        parts.append((other_mass, _marginal_density_fn(own, scheme)))

    def density(pts: np.ndarray) -> np.ndarray:
        out = np.zeros(len(pts))
        for w, fn in parts:
            out += w * fn(pts)
        return out

    return density


# ---------------------------------------------------------------------------
# Model-level moments
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MomentSummary:
    """All the low-order integrals of a model that closed-form results consume."""

    kind: str                   # "product" | "mixture" | "tabulated"
    dim: int
    c_G: float
    c_R: float
    lam: float
    mu_G: np.ndarray            # intensity-weighted (unnormalized) means
    mu_R: np.ndarray
    mu_G_norm: np.ndarray
    mu_R_norm: np.ndarray
    sigma_G: np.ndarray         # E[g g^T] under the normalized marginal
    sigma_R: np.ndarray
    gram_A: np.ndarray          # integral of g g^T rho_G(g)^2
    gram_B: np.ndarray

    @property
    def mean_affinity(self) -> float:
        """mu~_G . mu~_R, the cross-pair edge probability."""
        return float(self.mu_G_norm @ self.mu_R_norm)


def moments(model: IntensityModel, scheme: QuadratureSpec = DEFAULT_SCHEME) -> MomentSummary:
    """Reduce a model to its moment summary.

    Parameters
    ----------
    model : IntensityModel
    scheme : QuadratureSpec
        Deterministic tensor-grid quadrature is available for d <= 2;
        Monte Carlo (seed required) for any dimension.

    For mixtures, c_G and c_R are the masses of the true coordinate
    marginals (each equal to the total intensity) and the Gram matrices are
    those of the marginal densities, so the bound-heat operator they induce
    is the marginal-product one.
    """
    d = model_dim(model)
    if isinstance(model, Product):
        mg = marginal_moments(model.green, scheme)
        mr = marginal_moments(model.red, scheme)
        return MomentSummary(
            "product", d, mg.mass, mr.mass, mg.mass * mr.mass,
            mg.raw_mean, mr.raw_mean, mg.norm_mean, mr.norm_mean,
            mg.second, mr.second, mg.gram, mr.gram,
        )
    if isinstance(model, MixtureOfProducts):
        lam = total_intensity(model)
        per_g = [marginal_moments(c.green, scheme) for c in model.components]
        per_r = [marginal_moments(c.red, scheme) for c in model.components]
        gammas = np.array([c.gamma for c in model.components])
        pis = gammas / lam
        mu_g = sum(mr.mass * mg.raw_mean for mg, mr in zip(per_g, per_r))
        mu_r = sum(mg.mass * mr.raw_mean for mg, mr in zip(per_g, per_r))
        sigma_g = sum(pi * mg.second for pi, mg in zip(pis, per_g))
        sigma_r = sum(pi * mr.second for pi, mr in zip(pis, per_r))
        gram_a = _quad_density(mixture_marginal_density(model, "green", scheme), d, scheme).gram
        gram_b = _quad_density(mixture_marginal_density(model, "red", scheme), d, scheme).gram
        return MomentSummary(
            "mixture", d, lam, lam, lam,
            mu_g, mu_r, mu_g / lam, mu_r / lam,
            sigma_g, sigma_r, gram_a, gram_b,
        )
    if isinstance(model, TabulatedJoint):
        fld = model.field
        n = fld.points_per_axis
        h = fld.spacing
        centers = (np.arange(n) + 0.5) * h
        rho_g = fld.values.sum(axis=1) * h   # marginal over r
        rho_r = fld.values.sum(axis=0) * h
        lam = float(rho_g.sum() * h)
        if lam <= 0:
            raise ValueError("joint intensity has zero mass")
        mu_g = np.array([float((centers * rho_g).sum() * h)])
        mu_r = np.array([float((centers * rho_r).sum() * h)])
        sig_g = np.array([[float((centers**2 * rho_g).sum() * h) / lam]])
        sig_r = np.array([[float((centers**2 * rho_r).sum() * h) / lam]])
        gram_a = np.array([[float((centers**2 * rho_g**2).sum() * h)]])
        gram_b = np.array([[float((centers**2 * rho_r**2).sum() * h)]])
        return MomentSummary(
            "tabulated", 1, lam, lam, lam,
            mu_g, mu_r, mu_g / lam, mu_r / lam,
            sig_g, sig_r, gram_a, gram_b,
        )
    raise TypeError(f"not an intensity model: {model!r}")


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def _marginal_to_dict(m: MarginalIntensity, grid_sink: list) -> dict:
    if isinstance(m, UniformBall):
        return {"type": "uniform_ball", "mass": m.mass, "dim": m.dim}
    if isinstance(m, TruncGaussianSpec):
        return {"type": "trunc_gaussian", "mean": list(m.mean),
                "kappa": list(m.kappa), "mass": m.mass}
    if isinstance(m, GridTabulated):
        name = f"grid{len(grid_sink)}"
        grid_sink.append((name, m.field))
        return {"type": "grid", "ref": name}
    raise TypeError(f"not a marginal intensity: {m!r}")


def _marginal_from_dict(d: dict, grids: dict) -> MarginalIntensity:
    t = d["type"]
    if t == "uniform_ball":
        return UniformBall(d["mass"], d["dim"])
    if t == "trunc_gaussian":
        return TruncGaussianSpec(tuple(d["mean"]), tuple(d["kappa"]), d["mass"])
    if t == "grid":
        return GridTabulated(grids[d["ref"]])
    raise ValueError(f"unknown marginal type {t!r}")


def model_to_dict(model: IntensityModel, grid_sink: Optional[list] = None) -> dict:
    if grid_sink is None:
        grid_sink = []
    if isinstance(model, Product):
        return {"dim": model_dim(model), "kind": "product",
                "green": _marginal_to_dict(model.green, grid_sink),
                "red": _marginal_to_dict(model.red, grid_sink)}
    if isinstance(model, MixtureOfProducts):
        return {"dim": model_dim(model), "kind": "mixture",
                "components": [
                    {"label": c.label,
                     "green": _marginal_to_dict(c.green, grid_sink),
                     "red": _marginal_to_dict(c.red, grid_sink)}
                    for c in model.components]}
    if isinstance(model, TabulatedJoint):
        grid_sink.append(("joint", model.field))
        return {"dim": 1, "kind": "tabulated", "ref": "joint"}
    raise TypeError(f"not an intensity model: {model!r}")


def model_from_dict(d: dict, grids: Optional[dict] = None) -> IntensityModel:
    grids = grids or {}
    kind = d["kind"]
    if kind == "product":
        return Product(_marginal_from_dict(d["green"], grids),
                       _marginal_from_dict(d["red"], grids))
    if kind == "mixture":
        return MixtureOfProducts(tuple(
            MixtureComponent(c["label"],
                             _marginal_from_dict(c["green"], grids),
                             _marginal_from_dict(c["red"], grids))
            for c in d["components"]))
    if kind == "tabulated":
        return TabulatedJoint(grids[d["ref"]])
    raise ValueError(f"unknown model kind {kind!r}")


def save_model(model: IntensityModel, path: str) -> None:
    """Write a model as JSON; gridded parts go to companion header/.bin files."""
    sink: list = []
    doc = model_to_dict(model, sink)
    base = os.path.splitext(path)[0]
    refs = {}
    for name, fld in sink:
        gpath = f"{base}.{name}.json"
        save_grid(fld, gpath)
        refs[name] = os.path.basename(gpath)
    if refs:
        doc["grid_files"] = refs
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)


def load_model(path: str) -> IntensityModel:
    with open(path) as fh:
        doc = json.load(fh)
    grids = {}
    for name, rel in doc.get("grid_files", {}).items():
        grids[name] = load_grid(os.path.join(os.path.dirname(path), rel))
    return model_from_dict(doc, grids)
