"""Species-structured (guild) generators for ecological networks.

A guild is a species with its own giving and receiving niche (truncated
Gaussian marginals), an abundance contribution gamma = mass_G * mass_R, and
optional source/target propensity weights for asymmetric sampling. The
guild-level expected-edge matrix uses abundance fractions and centroid
affinities; centroids can also be fitted to a prescribed target affinity
matrix by projected gradient descent.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .latent import (
    DEFAULT_SCHEME,
    MixtureComponent,
    MixtureOfProducts,
    Position,
    Product,
    QuadratureSpec,
    TruncGaussianSpec,
    marginal_moments,
)
from .rng import SeededRng

__all__ = [
    "GuildSpec",
    "GuildEdgeMatrix",
    "CentroidFit",
    "AbsorptionResult",
    "expected_guild_edges",
    "fit_guild_centroids",
    "build_mixture",
    "asymmetric_edge_intensity",
    "absorb_coordinate_weights",
    "default_food_web",
    "guilds_to_dict",
    "guilds_from_dict",
    "save_guild_config",
    "load_guild_config",
]


@dataclass(frozen=True)
class GuildSpec:
    label: str
    green: TruncGaussianSpec
    red: TruncGaussianSpec
    w_source: float = 1.0
    w_target: float = 1.0

    def __post_init__(self):
        if self.green.dim != self.red.dim:
            raise ValueError("guild marginals must share a dimension")
        if self.w_source < 0 or self.w_target < 0:
            raise ValueError("weights must be non-negative")

    @property
    def gamma(self) -> float:
        return self.green.mass * self.red.mass


@dataclass(frozen=True)
class GuildEdgeMatrix:
    labels: Tuple[str, ...]
    expected: np.ndarray   # expected edges from guild i to guild j
    affinity: np.ndarray   # centroid dot products, in [0, 1]


def expected_guild_edges(guilds: Sequence[GuildSpec], lam: float,
                         scheme: QuadratureSpec = DEFAULT_SCHEME) -> GuildEdgeMatrix:
    """Guild-to-guild expected edges: lam^2 * pi_i * pi_j * affinity_ij.

    pi are the abundance fractions gamma_m / lam and the affinity is the
    dot product of the giving centroid of the source guild with the
    receiving centroid of the target guild.
    """
    guilds = list(guilds)
    gammas = np.array([g.gamma for g in guilds])
    if abs(gammas.sum() - lam) > 1e-6 * max(lam, 1.0):
        raise ValueError(
            f"guild contributions sum to {gammas.sum():g}, not the declared lam={lam:g}"
        )
    pis = gammas / lam
    mu_g = np.array([marginal_moments(g.green, scheme).norm_mean for g in guilds])
    mu_r = np.array([marginal_moments(g.red, scheme).norm_mean for g in guilds])
    affinity = mu_g @ mu_r.T
    expected = lam * lam * np.outer(pis, pis) * affinity
    return GuildEdgeMatrix(tuple(g.label for g in guilds), expected, affinity)


# ---------------------------------------------------------------------------
# Centroid fitting
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CentroidFit:
    centroids: Tuple[Tuple[np.ndarray, np.ndarray], ...]  # (mu_G, mu_R) per guild
    rmse: float
    converged: bool
    restart: int


def _project_ball(x: np.ndarray) -> np.ndarray:
    x = np.maximum(x, 0.0)
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    scale = np.where(norms > 1.0, 1.0 / np.maximum(norms, 1e-300), 1.0)
    return x * scale


def fit_guild_centroids(target_affinity: np.ndarray, d: int, rng: SeededRng,
                        restarts: int = 10, iterations: int = 5000,
                        step: float = 0.05, rmse_goal: float = 0.05) -> CentroidFit:
    """Fit guild centroids so their dot products approximate a target matrix.

    Multi-start projected gradient descent on the squared residual; each
    restart halves its step on non-improvement. Deterministic under the
    given rng. Returns the best fit with a convergence flag (no exception
    on a poor fit: the caller sees the achieved RMSE).
    """
    target = np.asarray(target_affinity, dtype=float)
    if target.ndim != 2 or target.shape[0] != target.shape[1]:
        raise ValueError("target affinity must be square")
    if np.any(target < 0) or np.any(target > 1):
        raise ValueError("target affinities must lie in [0, 1]")
    m = target.shape[0]

    best = None
    for restart in range(restarts):
        gen = rng.child(restart).generator()
        g = _project_ball(gen.random((m, d)) * 0.7)
        r = _project_ball(gen.random((m, d)) * 0.7)
        lr = step
        obj = float(((g @ r.T - target) ** 2).sum())
        for _ in range(iterations):
            resid = g @ r.T - target
            grad_g = 2.0 * resid @ r
            grad_r = 2.0 * resid.T @ g
            g_new = _project_ball(g - lr * grad_g)
            r_new = _project_ball(r - lr * grad_r)
            obj_new = float(((g_new @ r_new.T - target) ** 2).sum())
            if obj_new < obj:
                g, r, obj = g_new, r_new, obj_new
                lr *= 1.05  # shallow valleys need the step to re-expand
            else:
                lr *= 0.5
                if lr < 1e-12:
                    break
        rmse = float(np.sqrt(obj / (m * m)))
        if best is None or rmse < best[0]:
            best = (rmse, g, r, restart)
    rmse, g, r, restart = best
    cents = tuple((g[i].copy(), r[i].copy()) for i in range(m))
    return CentroidFit(cents, rmse, rmse <= rmse_goal, restart)


def build_mixture(guilds: Sequence[GuildSpec],
                  centroids: Optional[Sequence[Tuple[np.ndarray, np.ndarray]]] = None,
                  kappa: Optional[Sequence[float]] = None) -> MixtureOfProducts:
    """Assemble the species mixture; fitted centroids/kappa override the specs."""
    comps = []
    for i, guild in enumerate(guilds):
        mean_g = tuple(centroids[i][0]) if centroids is not None else guild.green.mean
        mean_r = tuple(centroids[i][1]) if centroids is not None else guild.red.mean
        kap_g = tuple(kappa) if kappa is not None else guild.green.kappa
        kap_r = tuple(kappa) if kappa is not None else guild.red.kappa
        comps.append(MixtureComponent(
            guild.label,
            TruncGaussianSpec(mean_g, kap_g, guild.green.mass),
            TruncGaussianSpec(mean_r, kap_r, guild.red.mass),
        ))
    return MixtureOfProducts(tuple(comps))


# ---------------------------------------------------------------------------
# Asymmetric source/target weighting
# ---------------------------------------------------------------------------


def asymmetric_edge_intensity(guilds: Sequence[GuildSpec]):
    """Source- and target-weighted mixtures, plus the pair normalization.

    The weighted densities are rho_S = sum_m w_source_m rho_m and
    rho_T analogously; dividing their product by ``2 M_S M_T / lam`` makes
    the edge intensity integrate to lam / 2. Returns (source_model,
    target_model, normalization).
    """
    guilds = list(guilds)
    lam = sum(g.gamma for g in guilds)
    m_s = sum(g.w_source * g.gamma for g in guilds)
    m_t = sum(g.w_target * g.gamma for g in guilds)
    if m_s <= 0 or m_t <= 0:
        raise ValueError("need at least one positive source weight and one target weight")

    def weighted(weight_of: Callable[[GuildSpec], float]) -> MixtureOfProducts:
        comps = []
        for g in guilds:
            w = weight_of(g)
            if w <= 0:
                continue
            comps.append(MixtureComponent(
                g.label,
                TruncGaussianSpec(g.green.mean, g.green.kappa, g.green.mass * w),
                g.red,
            ))
        return MixtureOfProducts(tuple(comps))

    source = weighted(lambda g: g.w_source)
    target = weighted(lambda g: g.w_target)
    normalization = 2.0 * m_s * m_t / lam
    return source, target, normalization


@dataclass(frozen=True)
class AbsorptionResult:
    positions: Optional[List[Position]]
    violations: Tuple[int, ...]

    @property
    def admissible(self) -> bool:
        return not self.violations


def absorb_coordinate_weights(w_source: Callable[[np.ndarray], float],
                              w_target: Callable[[np.ndarray], float],
                              positions: Sequence[Position]) -> AbsorptionResult:
    """Fold coordinate-dependent weights into the positions themselves.

    Each giving coordinate is scaled by w_source(g), each receiving one by
    w_target(r). The rescaling is admissible only if every transformed
    vector stays inside the latent domain; otherwise the violating indices
    are reported and no positions are returned (a rejection, not an error).
    """
    transformed = []
    violations = []
    for i, p in enumerate(positions):
        ws = float(w_source(p.g))
        wt = float(w_target(p.r))
        if ws < 0 or wt < 0:
            raise ValueError("weight functions must be non-negative")
        new_g = ws * p.g
        new_r = wt * p.r
        if np.dot(new_g, new_g) > 1.0 + 1e-12 or np.dot(new_r, new_r) > 1.0 + 1e-12:
            violations.append(i)
            transformed.append(None)
        else:
            transformed.append((new_g, new_r))
    if violations:
        return AbsorptionResult(None, tuple(violations))
    return AbsorptionResult([Position(g, r) for g, r in transformed], ())


# ---------------------------------------------------------------------------
# Shipped example configuration
# ---------------------------------------------------------------------------


def default_food_web(lam: float = 100.0) -> Tuple[List[GuildSpec], np.ndarray]:
    """Five-guild demo community in d = 4 with a block trophic target.

    Producers (P) feed two herbivore guilds (SH, LH), which feed a small
    predator (SP) and an apex predator (A); the apex also takes SP. The
    numeric affinities are artifact-chosen demo values. Structural
    dimensions get tight concentration (kappa 500), variable ones loose
    (kappa 30).
    """
    kap_tight = (500.0, 30.0, 30.0, 30.0)
    kap_loose = (30.0, 30.0, 30.0, 500.0)
    share = lam / 5.0
    mass = float(np.sqrt(share))

    def tg(mean, kappa):
        return TruncGaussianSpec(tuple(mean), kappa, mass)

    guilds = [
        GuildSpec("P",
                  tg((0.02, 0.05, 0.02, 0.00), kap_tight),
                  tg((0.90, 0.10, 0.02, 0.00), kap_loose),
                  w_source=0.0, w_target=1.0),
        GuildSpec("SH",
                  tg((0.80, 0.10, 0.05, 0.02), kap_tight),
                  tg((0.05, 0.70, 0.10, 0.02), kap_loose),
                  w_source=1.0, w_target=1.0),
        GuildSpec("LH",
                  tg((0.70, 0.30, 0.05, 0.02), kap_tight),
                  tg((0.05, 0.10, 0.70, 0.05), kap_loose),
                  w_source=1.0, w_target=1.0),
        GuildSpec("SP",
                  tg((0.05, 0.75, 0.30, 0.02), kap_tight),
                  tg((0.02, 0.05, 0.10, 0.60), kap_loose),
                  w_source=1.0, w_target=1.0),
        GuildSpec("A",
                  tg((0.02, 0.30, 0.60, 0.40), kap_tight),
                  tg((0.00, 0.02, 0.02, 0.05), kap_loose),
                  w_source=1.0, w_target=0.0),
    ]
    target = np.array([
        # P     SH    LH    SP    A      (target of the row guild's edges)
        [0.00, 0.00, 0.00, 0.00, 0.00],  # P eats nothing
        [0.75, 0.05, 0.00, 0.00, 0.00],  # SH eats P
        [0.65, 0.00, 0.05, 0.00, 0.00],  # LH eats P
        [0.00, 0.55, 0.10, 0.00, 0.00],  # SP eats herbivores
        [0.00, 0.10, 0.45, 0.40, 0.00],  # A eats LH and SP
    ])
    return guilds, target


def guilds_to_dict(guilds: Sequence[GuildSpec], target: Optional[np.ndarray] = None) -> dict:
    doc = {"guilds": [
        {"label": g.label,
         "mean_g": list(g.green.mean), "mean_r": list(g.red.mean),
         "kappa_g": list(g.green.kappa), "kappa_r": list(g.red.kappa),
         "mass_g": g.green.mass, "mass_r": g.red.mass,
         "w_S": g.w_source, "w_T": g.w_target}
        for g in guilds]}
    if target is not None:
        doc["target_affinity"] = np.asarray(target).tolist()
    return doc


def guilds_from_dict(doc: dict) -> Tuple[List[GuildSpec], Optional[np.ndarray]]:
    guilds = [
        GuildSpec(g["label"],
                  TruncGaussianSpec(tuple(g["mean_g"]), tuple(g["kappa_g"]), g["mass_g"]),
                  TruncGaussianSpec(tuple(g["mean_r"]), tuple(g["kappa_r"]), g["mass_r"]),
                  g.get("w_S", 1.0), g.get("w_T", 1.0))
        for g in doc["guilds"]
    ]
    target = doc.get("target_affinity")
    return guilds, (np.array(target) if target is not None else None)


def save_guild_config(guilds: Sequence[GuildSpec], path: str,
                      target: Optional[np.ndarray] = None) -> None:
    with open(path, "w") as fh:
        json.dump(guilds_to_dict(guilds, target), fh, indent=1)


def load_guild_config(path: str) -> Tuple[List[GuildSpec], Optional[np.ndarray]]:
    with open(path) as fh:
        return guilds_from_dict(json.load(fh))
