"""Graph realization under the perennial, ephemeral, lifetime, and asymmetric rules.

All samplers are deterministic given a :class:`~idpg.rng.SeededRng`. Node
positions come from the model's normalized intensity; the realization rule
decides which ordered pairs get an edge trial; each trial succeeds with the
dot-product affinity of the (source giving, target receiving) coordinates.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import ndtr, ndtri

from .latent import (
    GridTabulated,
    IntensityModel,
    MarginalIntensity,
    MixtureOfProducts,
    Product,
    TabulatedJoint,
    TruncGaussianSpec,
    UniformBall,
    model_dim,
    total_intensity,
)
from .rng import SeededRng

__all__ = [
    "SampledGraph",
    "sample_marginal",
    "sample_positions",
    "roll_perennial_edges",
    "sample_perennial",
    "sample_ephemeral",
    "sample_lifetime",
    "sample_asymmetric_ephemeral",
    "observed_subgraph",
    "graph_to_dict",
    "graph_from_dict",
    "save_graph",
    "load_graph",
    "write_edge_list",
]

MAX_CONSECUTIVE_REJECTIONS = 10_000_000


@dataclass
class SampledGraph:
    """A realized directed graph with latent node positions.

    ``edges`` is an (E, 2) integer array of (source, target) indices;
    self-edges are allowed. ``pairing`` records the sampled interaction
    pairs for ephemeral-style rules.
    """

    g: np.ndarray
    r: np.ndarray
    edges: np.ndarray
    rule: str
    rule_params: dict = field(default_factory=dict)
    species: Optional[np.ndarray] = None
    birth: Optional[np.ndarray] = None
    lifetime: Optional[np.ndarray] = None
    pairing: Optional[np.ndarray] = None
    include_self_loops: bool = False

    def __post_init__(self):
        self.g = np.asarray(self.g, dtype=float)
        self.r = np.asarray(self.r, dtype=float)
        if self.g.ndim == 1:
            self.g = self.g.reshape(-1, 1)
        if self.r.ndim == 1:
            self.r = self.r.reshape(-1, 1)
        self.edges = np.asarray(self.edges, dtype=int).reshape(-1, 2)
        if self.g.shape != self.r.shape:
            raise ValueError("g and r position arrays must have equal shape")
        n = self.n_nodes
        if self.edges.size and (self.edges.min() < 0 or self.edges.max() >= n):
            raise ValueError("edge endpoint out of range")
        if self.edges.size:
            uniq = np.unique(self.edges[:, 0].astype(np.int64) * n + self.edges[:, 1])
            if uniq.size != len(self.edges):
                raise ValueError("duplicate edges are not allowed")
        if self.pairing is not None:
            self.pairing = np.asarray(self.pairing, dtype=int).reshape(-1, 2)
            flat = self.pairing.ravel()
            if n % 2 or sorted(flat.tolist()) != list(range(n)):
                raise ValueError("pairing must cover each node exactly once")
            partner = np.empty(n, dtype=int)
            partner[self.pairing[:, 0]] = self.pairing[:, 1]
            partner[self.pairing[:, 1]] = self.pairing[:, 0]
            for s, t in self.edges:
                if t != s and t != partner[s]:
                    raise ValueError("ephemeral edge crosses interaction pairs")

    @property
    def n_nodes(self) -> int:
        return len(self.g)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def dim(self) -> int:
        return self.g.shape[1]

    def degrees(self) -> np.ndarray:
        """Total (in + out) degree per node; a self-loop contributes once per direction."""
        deg = np.zeros(self.n_nodes, dtype=int)
        if self.edges.size:
            np.add.at(deg, self.edges[:, 0], 1)
            np.add.at(deg, self.edges[:, 1], 1)
        return deg

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n_nodes, self.n_nodes))
        if self.edges.size:
            a[self.edges[:, 0], self.edges[:, 1]] = 1.0
        return a


# ---------------------------------------------------------------------------
# Position sampling
# ---------------------------------------------------------------------------


def _sample_uniform_ball(n: int, d: int, gen: np.random.Generator) -> np.ndarray:
    z = np.abs(gen.standard_normal((n, d)))
    norms = np.linalg.norm(z, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    radii = gen.random(n) ** (1.0 / d)
    return z / norms * radii[:, None]


def _sample_trunc_gaussian(spec: TruncGaussianSpec, n: int, gen: np.random.Generator) -> np.ndarray:
    """Per-dimension inverse-CDF draws on [0,1], rejected against the ball."""
    mean = np.asarray(spec.mean)
    sigma = spec.sigma
    lo = ndtr((0.0 - mean) / sigma)
    hi = ndtr((1.0 - mean) / sigma)
    out = np.empty((n, spec.dim))
    filled = 0
    rejected_streak = 0
    while filled < n:
        want = n - filled
        u = gen.random((want, spec.dim))
        x = mean + sigma * ndtri(lo + u * (hi - lo))
        np.clip(x, 0.0, 1.0, out=x)
        ok = np.einsum("ij,ij->i", x, x) <= 1.0
        k = int(ok.sum())
        if k == 0:
            rejected_streak += want
            if rejected_streak > MAX_CONSECUTIVE_REJECTIONS:
                raise RuntimeError(
                    "rejection sampler stalled; the Gaussian spec places almost no "
                    "mass inside the unit ball"
                )
            continue
        rejected_streak = 0
        out[filled:filled + k] = x[ok]
        filled += k
    return out


def _sample_grid_tabulated(tab: GridTabulated, n: int, gen: np.random.Generator) -> np.ndarray:
    fld = tab.field
    w = fld.values.ravel()
    total = w.sum()
    idx = gen.choice(w.size, size=n, p=w / total)
    coords = np.stack(np.unravel_index(idx, fld.values.shape), axis=-1)
    return (coords + gen.random((n, fld.dim))) * fld.spacing


def sample_marginal(m: MarginalIntensity, n: int, gen: np.random.Generator) -> np.ndarray:
    """n i.i.d. draws from a marginal's normalized density, shape (n, d)."""
    if n == 0:
        return np.zeros((0, m.dim))
    if isinstance(m, UniformBall):
        return _sample_uniform_ball(n, m.dim, gen)
    if isinstance(m, TruncGaussianSpec):
        return _sample_trunc_gaussian(m, n, gen)
    if isinstance(m, GridTabulated):
        return _sample_grid_tabulated(m, n, gen)
    raise TypeError(f"not a marginal intensity: {m!r}")


def sample_positions(model: IntensityModel, rng: SeededRng):
    """Poisson-many node positions from the model.

    Returns (g, r, species) where species is None unless the model is a
    mixture, in which case each node carries its component label.
    """
    gen = rng.generator()
    lam = total_intensity(model)
    if lam <= 0:
        raise ValueError("total intensity must be positive")
    n = int(gen.poisson(lam))
    return _positions_fixed_n(model, n, gen)


def _positions_fixed_n(model: IntensityModel, n: int, gen: np.random.Generator):
    d = model_dim(model)
    if isinstance(model, Product):
        return sample_marginal(model.green, n, gen), sample_marginal(model.red, n, gen), None
    if isinstance(model, MixtureOfProducts):
        gammas = np.array([c.gamma for c in model.components])
        which = gen.choice(len(gammas), size=n, p=gammas / gammas.sum())
        g = np.empty((n, d))
        r = np.empty((n, d))
        labels = np.empty(n, dtype=object)
        for m, comp in enumerate(model.components):
            sel = np.flatnonzero(which == m)
            g[sel] = sample_marginal(comp.green, len(sel), gen)
            r[sel] = sample_marginal(comp.red, len(sel), gen)
            labels[sel] = comp.label
        return g, r, labels
    if isinstance(model, TabulatedJoint):
        fld = model.field
        w = fld.values.ravel()
        idx = gen.choice(w.size, size=n, p=w / w.sum())
        coords = np.stack(np.unravel_index(idx, fld.values.shape), axis=-1)
        pts = (coords + gen.random((n, 2))) * fld.spacing
        return pts[:, :1], pts[:, 1:], None
    raise TypeError(f"not an intensity model: {model!r}")


# ---------------------------------------------------------------------------
# Realization rules
# ---------------------------------------------------------------------------


def roll_perennial_edges(g: np.ndarray, r: np.ndarray, gen: np.random.Generator,
                         include_self_loops: bool) -> np.ndarray:
    """One Bernoulli trial per ordered node pair, probability g_i . r_j."""
    n = len(g)
    if n == 0:
        return np.zeros((0, 2), dtype=int)
    p = g @ r.T
    hit = gen.random((n, n)) < p
    if not include_self_loops:
        np.fill_diagonal(hit, False)
    src, dst = np.nonzero(hit)
    return np.stack([src, dst], axis=-1)


def sample_perennial(model: IntensityModel, rng: SeededRng,
                     include_self_loops: bool = False) -> SampledGraph:
    """All sampled individuals coexist; every ordered pair is an edge opportunity."""
    gen = rng.generator()
    lam = total_intensity(model)
    if lam <= 0:
        raise ValueError("total intensity must be positive")
    n = int(gen.poisson(lam))
    g, r, species = _positions_fixed_n(model, n, gen)
    edges = roll_perennial_edges(g, r, gen, include_self_loops)
    return SampledGraph(g, r, edges, "perennial", {}, species=species,
                        include_self_loops=include_self_loops)


def sample_ephemeral(model: IntensityModel, rng: SeededRng) -> SampledGraph:
    """Disjoint interaction pairs; four edge trials per pair (two cross, two self)."""
    gen = rng.generator()
    lam = total_intensity(model)
    if lam <= 0:
        raise ValueError("total intensity must be positive")
    m = int(gen.poisson(lam / 2.0))
    g, r, species = _positions_fixed_n(model, 2 * m, gen)
    pairing = np.arange(2 * m).reshape(m, 2)
    edges = []
    if m:
        i, j = pairing[:, 0], pairing[:, 1]
        trials = [
            (i, j, np.einsum("ij,ij->i", g[i], r[j])),
            (j, i, np.einsum("ij,ij->i", g[j], r[i])),
            (i, i, np.einsum("ij,ij->i", g[i], r[i])),
            (j, j, np.einsum("ij,ij->i", g[j], r[j])),
        ]
        for src, dst, p in trials:
            hit = gen.random(m) < p
            edges.append(np.stack([src[hit], dst[hit]], axis=-1))
    edges = np.concatenate(edges) if edges else np.zeros((0, 2), dtype=int)
    return SampledGraph(g, r, edges, "ephemeral", {}, species=species,
                        pairing=pairing, include_self_loops=True)


def sample_lifetime(model: IntensityModel, eta: float, window: float,
                    rng: SeededRng, include_self_pairs: bool = True) -> SampledGraph:
    """Individuals with exponential lifetimes; pairs interact iff alive together.

    Self-pairs (i, i) trivially overlap and are included by default,
    matching the all-ordered-pairs counting convention.
    """
    if eta <= 0 or window <= 0:
        raise ValueError("eta and window must be positive")
    gen = rng.generator()
    lam = total_intensity(model)
    if lam <= 0:
        raise ValueError("total intensity must be positive")
    n = int(gen.poisson(lam))
    g, r, species = _positions_fixed_n(model, n, gen)
    birth = gen.random(n) * window
    life = gen.exponential(eta, size=n)
    end = birth + life
    # ordered pair (i, j) is an opportunity iff the alive intervals intersect
    overlap = (birth[None, :] < end[:, None]) & (birth[:, None] < end[None, :])
    if not include_self_pairs:
        np.fill_diagonal(overlap, False)
    p = g @ r.T
    hit = overlap & (gen.random((n, n)) < p)
    src, dst = np.nonzero(hit)
    return SampledGraph(g, r, np.stack([src, dst], axis=-1), "lifetime",
                        {"eta": eta, "window": window,
                         "include_self_pairs": include_self_pairs},
                        species=species, birth=birth, lifetime=life,
                        include_self_loops=include_self_pairs)


def sample_asymmetric_ephemeral(source_model: IntensityModel,
                                target_model: IntensityModel,
                                lambda_ref: float, rng: SeededRng) -> SampledGraph:
    """Directed interaction pairs: source from one intensity, target from another.

    The pair count is Poisson(lambda_ref / 2); each pair gets the single
    trial source -> target.
    """
    if lambda_ref <= 0:
        raise ValueError("lambda_ref must be positive")
    if model_dim(source_model) != model_dim(target_model):
        raise ValueError("source and target models must share a dimension")
    if total_intensity(source_model) <= 0 or total_intensity(target_model) <= 0:
        raise ValueError("zero-mass model")
    gen = rng.generator()
    m = int(gen.poisson(lambda_ref / 2.0))
    gs, rs, sp_s = _positions_fixed_n(source_model, m, gen)
    gt, rt, sp_t = _positions_fixed_n(target_model, m, gen)
    g = np.concatenate([gs, gt])
    r = np.concatenate([rs, rt])
    species = None
    if sp_s is not None or sp_t is not None:
        blank = np.full(m, None, dtype=object)
        species = np.concatenate([sp_s if sp_s is not None else blank,
                                  sp_t if sp_t is not None else blank])
    pairing = np.stack([np.arange(m), np.arange(m) + m], axis=-1)
    p = np.einsum("ij,ij->i", gs, rt) if m else np.zeros(0)
    hit = gen.random(m) < p
    src = np.flatnonzero(hit)
    edges = np.stack([src, src + m], axis=-1)
    return SampledGraph(g, r, edges, "asymmetric_ephemeral",
                        {"lambda_ref": lambda_ref}, species=species,
                        pairing=pairing, include_self_loops=False)


def observed_subgraph(graph: SampledGraph) -> SampledGraph:
    """Induced subgraph on nodes with degree >= 1 (self-loops count)."""
    keep = np.flatnonzero(graph.degrees() > 0)
    remap = -np.ones(graph.n_nodes, dtype=int)
    remap[keep] = np.arange(len(keep))
    edges = remap[graph.edges] if graph.edges.size else graph.edges
    take = (lambda a: a[keep] if a is not None else None)
    return SampledGraph(graph.g[keep], graph.r[keep], edges, graph.rule,
                        dict(graph.rule_params), species=take(graph.species),
                        birth=take(graph.birth), lifetime=take(graph.lifetime),
                        pairing=None, include_self_loops=graph.include_self_loops)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def graph_to_dict(graph: SampledGraph) -> dict:
    nodes = []
    for i in range(graph.n_nodes):
        node = {"g": graph.g[i].tolist(), "r": graph.r[i].tolist()}
        if graph.species is not None and graph.species[i] is not None:
            node["species"] = graph.species[i]
        if graph.birth is not None:
            node["birth"] = float(graph.birth[i])
        if graph.lifetime is not None:
            node["lifetime"] = float(graph.lifetime[i])
        nodes.append(node)
    doc = {
        "rule": graph.rule,
        "rule_params": graph.rule_params,
        "include_self_loops": graph.include_self_loops,
        "nodes": nodes,
        "edges": graph.edges.tolist(),
    }
    if graph.pairing is not None:
        doc["pairs"] = graph.pairing.tolist()
    return doc


def graph_from_dict(doc: dict) -> SampledGraph:
    nodes = doc["nodes"]
    n = len(nodes)
    if n == 0:
        g = np.zeros((0, 1))
        r = np.zeros((0, 1))
    else:
        g = np.array([nd["g"] for nd in nodes], dtype=float)
        r = np.array([nd["r"] for nd in nodes], dtype=float)
    species = None
    if any("species" in nd for nd in nodes):
        species = np.array([nd.get("species") for nd in nodes], dtype=object)
    birth = np.array([nd["birth"] for nd in nodes]) if n and "birth" in nodes[0] else None
    life = np.array([nd["lifetime"] for nd in nodes]) if n and "lifetime" in nodes[0] else None
    return SampledGraph(g, r, np.array(doc["edges"], dtype=int).reshape(-1, 2),
                        doc["rule"], doc.get("rule_params", {}), species=species,
                        birth=birth, lifetime=life,
                        pairing=np.array(doc["pairs"], dtype=int) if "pairs" in doc else None,
                        include_self_loops=doc.get("include_self_loops", False))


def save_graph(graph: SampledGraph, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(graph_to_dict(graph), fh)


def load_graph(path: str) -> SampledGraph:
    with open(path) as fh:
        return graph_from_dict(json.load(fh))


def write_edge_list(graph: SampledGraph, path: str) -> None:
    """Plain interoperable edge list, one "source target" pair per line."""
    with open(path, "w") as fh:
        for s, t in graph.edges:
            fh.write(f"{s} {t}\n")
