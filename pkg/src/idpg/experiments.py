"""Config-driven experiment harness.

Each experiment maps a parameter grid plus a replication budget to a
:class:`ResultTable` (named columns + metadata) that is bit-reproducible
from (config, root_seed) regardless of worker count: replication r of
experiment e draws from the stream hash64(e, tag, r), and results are
gathered in replication order before any aggregation.

Experiments: edge-count scaling in the total intensity, lifetime-overlap
verification, perennial/ephemeral ratio tracking under intensity PDEs,
adjacency-spectrum convergence to the per-capita operator spectrum,
multi-graph averaging, and growth-driven sparsity.
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from . import pde
from .expectations import Ephemeral, PerennialDistinct, expected_edges, overlap_probability
from .gridfield import GridField
from .latent import (
    MixtureComponent,
    MixtureOfProducts,
    MomentSummary,
    Product,
    QuadratureSpec,
    TruncGaussianSpec,
    GridTabulated,
    moments,
    total_intensity,
)
from .rng import SeededRng, derive_stream, hash64
from .sampling import sample_ephemeral, sample_lifetime, sample_perennial
from .spectral import adjacency_spectrum, desire_singular_values, rank_above_noise_floor
from .pde import (
    Advection,
    Diffusion,
    PdeState,
    PursuitEvasion,
    evolve,
)

__all__ = [
    "ExperimentConfig",
    "ResultTable",
    "EXPERIMENT_NAMES",
    "default_config",
    "run_experiment",
    "check_table",
    "write_results",
    "read_result_csv",
    "spectral_demo_mixture",
    "spectral_reference_spectrum",
    "RESULT_SCHEMA",
    "validate_result_doc",
]

EXPERIMENT_NAMES = (
    "scaling",
    "overlap",
    "ratio_tracking",
    "spectral_convergence",
    "multi_graph",
    "growth_overlap",
)

NODE_SAMPLE_BUDGET = 100_000_000

REFERENCE_MC_SAMPLES = 10_000_000
REFERENCE_MC_SEED = 2024


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    replications: int
    root_seed: int
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.name not in EXPERIMENT_NAMES:
            raise ValueError(f"unknown experiment {self.name!r}; choose from {EXPERIMENT_NAMES}")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")

    def hash(self) -> str:
        doc = {"name": self.name, "replications": self.replications,
               "root_seed": self.root_seed, "params": self.params}
        import hashlib
        return hashlib.blake2b(
            json.dumps(doc, sort_keys=True).encode(), digest_size=8).hexdigest()

    @staticmethod
    def from_dict(doc: dict) -> "ExperimentConfig":
        base = default_config(doc["name"]).params.copy()
        base.update(doc.get("params", {}))
        return ExperimentConfig(doc["name"], doc.get("replications",
                                default_config(doc["name"]).replications),
                                doc.get("root_seed", 12345), base)


@dataclass
class ResultTable:
    columns: dict
    metadata: dict

    def __post_init__(self):
        lengths = {len(v) for v in self.columns.values()}
        if len(lengths) > 1:
            raise ValueError("all columns must have equal length")

    @property
    def n_rows(self) -> int:
        return len(next(iter(self.columns.values()))) if self.columns else 0

    def column(self, name: str) -> list:
        return self.columns[name]


def default_config(name: str) -> ExperimentConfig:
    params: dict
    if name == "scaling":
        params = {"lambdas": [10, 25, 50, 100, 200], "kappa": 15.0,
                  "mean_g": [0.6, 0.4], "mean_r": [0.5, 0.5]}
        return ExperimentConfig(name, 1000, 12345, params)
    if name == "overlap":
        params = {"eta_over_window": [0.01, 0.1, 1.0, 10.0, 100.0],
                  "pairs": 10_000, "window": 1.0}
        return ExperimentConfig(name, 1, 12345, params)
    if name == "ratio_tracking":
        params = {"regimes": ["static", "diffusion", "advection_absorbing",
                              "pursuit_evasion"],
                  "lam0": 100.0, "t_end": 2.0, "snapshots": 10,
                  "resolution": 128, "nu": 0.015, "velocity": 0.18,
                  "pursuit": [1.5, 1.5, 2.0, 0.5], "kappa0": 60.0,
                  "centers": [0.45, 0.55]}
        return ExperimentConfig(name, 300, 12345, params)
    if name == "spectral_convergence":
        params = {"lambdas": [100, 300, 1000, 3000], "top_k": 8}
        return ExperimentConfig(name, 50, 12345, params)
    if name == "multi_graph":
        params = {"lam": 300.0, "m_values": [25, 100], "graphs_per_m": 2400,
                  "top_k": 4}
        return ExperimentConfig(name, 1, 12345, params)
    if name == "growth_overlap":
        params = {"deltas": [0.0, 0.5, 1.0],
                  "lam_targets": [250, 500, 1000, 2000, 4000],
                  "eta": 1.0, "b0": 1.0, "pairs": 200_000}
        return ExperimentConfig(name, 1, 12345, params)
    raise ValueError(f"unknown experiment {name!r}")


# ---------------------------------------------------------------------------
# Shipped d = 4 mixture for the spectral experiments
# ---------------------------------------------------------------------------


def spectral_demo_mixture(lam: float) -> MixtureOfProducts:
    """Two-component d=4 mixture used by the spectral experiments.

    Two species sit on orthogonal structural axes (dims 1 and 2) with broad
    incidental spread on dims 3-4; giving and receiving sides coincide. Its
    per-capita spectrum has two well-separated leading values and a close
    pair near 0.033 that clears the 1/sqrt(Lambda) noise floor once the
    total intensity passes about 10^3.
    """
    mass = float(np.sqrt(lam / 2.0))
    kap = (16.0, 16.0, 8.0, 8.0)

    def tg(mean):
        return TruncGaussianSpec(mean, kap, mass)

    return MixtureOfProducts((
        MixtureComponent("axis1", tg((0.74, 0.0, 0.05, 0.05)), tg((0.74, 0.0, 0.05, 0.05))),
        MixtureComponent("axis2", tg((0.0, 0.74, 0.05, 0.05)), tg((0.0, 0.74, 0.05, 0.05))),
    ))


_REFERENCE_CACHE: dict = {}


def spectral_reference_spectrum(mc_samples: int = REFERENCE_MC_SAMPLES,
                                seed: int = REFERENCE_MC_SEED) -> np.ndarray:
    """Desire-operator singular values of the demo mixture (Monte Carlo moments).

    The spectrum is scale-invariant in the total intensity, so it is
    computed once at unit mass and cached.
    """
    key = (mc_samples, seed)
    if key not in _REFERENCE_CACHE:
        summ = moments(spectral_demo_mixture(1.0),
                       QuadratureSpec(method="mc", mc_samples=mc_samples, seed=seed))
        _REFERENCE_CACHE[key] = (desire_singular_values(summ.sigma_G, summ.sigma_R),
                                 summ.mean_affinity)
    return _REFERENCE_CACHE[key][0]


# ---------------------------------------------------------------------------
# Workers (module level so process pools can pickle them)
# ---------------------------------------------------------------------------


def _scaling_model(lam: float, kappa: float, mean_g, mean_r) -> Product:
    mass = float(np.sqrt(lam))
    return Product(TruncGaussianSpec(tuple(mean_g), (kappa, kappa), mass),
                   TruncGaussianSpec(tuple(mean_r), (kappa, kappa), mass))


def _scaling_rep(args) -> tuple:
    lam, kappa, mean_g, mean_r, root_seed, rep = args
    model = _scaling_model(lam, kappa, mean_g, mean_r)
    g_per = sample_perennial(model, derive_stream(root_seed, f"scaling-per-{lam}", rep))
    g_eph = sample_ephemeral(model, derive_stream(root_seed, f"scaling-eph-{lam}", rep))
    return g_per.n_edges, g_eph.n_edges


def _spectral_rep(args) -> np.ndarray:
    lam, top_k, root_seed, rep = args
    model = spectral_demo_mixture(lam)
    for attempt in range(100):
        rng = derive_stream(root_seed, f"spectral-{lam}-{attempt}", rep)
        graph = sample_perennial(model, rng)
        if graph.n_nodes > 0:  # non-empty-graph sampling protocol
            return adjacency_spectrum(graph, min(top_k, graph.n_nodes))
    raise RuntimeError("could not sample a non-empty graph")


def _multi_graph_rep(args) -> float:
    lam, root_seed, rep = args
    model = spectral_demo_mixture(lam)
    for attempt in range(100):
        graph = sample_perennial(model, derive_stream(root_seed, f"multi-{attempt}", rep))
        if graph.n_nodes > 0:
            return float(adjacency_spectrum(graph, 1)[0])
    raise RuntimeError("could not sample a non-empty graph")


def _map_replications(fn: Callable, arglist: Sequence, threads: int) -> list:
    if threads <= 1 or len(arglist) <= 1:
        return [fn(a) for a in arglist]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, arglist, chunksize=max(1, len(arglist) // (4 * threads))))


# ---------------------------------------------------------------------------
# Individual experiments
# ---------------------------------------------------------------------------


def _ols_slope(x: np.ndarray, y: np.ndarray) -> float:
    return float(np.polyfit(x, y, 1)[0])


def _run_scaling(cfg: ExperimentConfig, threads: int) -> ResultTable:
    p = cfg.params
    lambdas = [float(x) for x in p["lambdas"]]
    cols = {k: [] for k in ("lambda", "rule", "mean_edges", "se_edges", "expected_edges")}
    means = {"perennial": [], "ephemeral": []}
    for lam in lambdas:
        args = [(lam, p["kappa"], p["mean_g"], p["mean_r"], cfg.root_seed, r)
                for r in range(cfg.replications)]
        counts = np.array(_map_replications(_scaling_rep, args, threads), dtype=float)
        model = _scaling_model(lam, p["kappa"], p["mean_g"], p["mean_r"])
        summ = moments(model)
        for j, (rule_name, rule) in enumerate(
                (("perennial", PerennialDistinct()), ("ephemeral", Ephemeral()))):
            sample = counts[:, j]
            cols["lambda"].append(lam)
            cols["rule"].append(rule_name)
            cols["mean_edges"].append(float(sample.mean()))
            cols["se_edges"].append(float(sample.std(ddof=1) / math.sqrt(len(sample))))
            cols["expected_edges"].append(expected_edges(summ, rule))
            means[rule_name].append(float(sample.mean()))
    loglam = np.log(np.array(lambdas))
    meta = {
        "slope_perennial": _ols_slope(loglam, np.log(np.array(means["perennial"]))),
        "slope_ephemeral": _ols_slope(loglam, np.log(np.array(means["ephemeral"]))),
    }
    return ResultTable(cols, meta)


def _triangular_gap_ppf(u: np.ndarray, window: float) -> np.ndarray:
    """Quantile function of |T1 - T2| for independent uniforms on [0, window]."""
    return window * (1.0 - np.sqrt(1.0 - u))


def _run_overlap(cfg: ExperimentConfig, threads: int) -> ResultTable:
    p = cfg.params
    window = float(p["window"])
    n = int(p["pairs"])
    cols = {k: [] for k in ("eta_over_window", "p_closed", "p_stratified",
                            "se_stratified", "rel_err_stratified",
                            "p_raw", "se_raw", "rel_err_raw")}
    for i, ratio in enumerate(p["eta_over_window"]):
        eta = ratio * window
        closed = overlap_probability(eta, window)
        gen = derive_stream(cfg.root_seed, "overlap", i).generator()
        # lifetime-integrated estimator on a stratified sample of birth gaps:
        # P(overlap | gap) = exp(-gap / eta), gap has the triangular law
        u = (np.arange(n) + gen.random(n)) / n
        gaps = _triangular_gap_ppf(u, window)
        vals = np.exp(-gaps / eta)
        p_strat = float(vals.mean())
        # successive-difference proxy for the within-stratum variance
        se_strat = float(np.sqrt(np.mean(np.diff(vals) ** 2) / 2.0 / n))
        # raw binary pairs
        t = gen.random((n, 2)) * window
        tau = gen.exponential(eta, size=(n, 2))
        lo = np.maximum(t[:, 0], t[:, 1])
        hi = np.minimum(t[:, 0] + tau[:, 0], t[:, 1] + tau[:, 1])
        raw = (lo < hi).astype(float)
        p_raw = float(raw.mean())
        se_raw = float(math.sqrt(max(p_raw * (1 - p_raw), 1e-12) / n))
        cols["eta_over_window"].append(float(ratio))
        cols["p_closed"].append(closed)
        cols["p_stratified"].append(p_strat)
        cols["se_stratified"].append(se_strat)
        cols["rel_err_stratified"].append(abs(p_strat - closed) / closed)
        cols["p_raw"].append(p_raw)
        cols["se_raw"].append(se_raw)
        cols["rel_err_raw"].append(abs(p_raw - closed) / closed)
    return ResultTable(cols, {"max_rel_err_stratified": max(cols["rel_err_stratified"])})


def _gaussian_field(resolution: int, center: float, kappa: float, mass: float) -> GridField:
    x = (np.arange(resolution) + 0.5) / resolution
    v = np.exp(-0.5 * kappa * (x - center) ** 2)
    v *= mass / (v.sum() / resolution)
    return GridField(1, resolution, v, np.ones(resolution, dtype=bool))


def _ratio_states(p: dict) -> dict:
    res = int(p["resolution"])
    lam0 = float(p["lam0"])
    mass = math.sqrt(lam0)
    green = _gaussian_field(res, p["centers"][0], p["kappa0"], mass)
    red = _gaussian_field(res, p["centers"][1], p["kappa0"], mass)
    a, b, g, x0 = p["pursuit"]
    return {
        "static": None,
        "diffusion": PdeState(green.copy(), red.copy(), Diffusion(p["nu"]), "reflecting"),
        "advection_absorbing": PdeState(green.copy(), red.copy(),
                                        Advection((p["velocity"],)), "absorbing"),
        "pursuit_evasion": PdeState(green.copy(), red.copy(),
                                    PursuitEvasion(a, b, g, (x0,)), "reflecting"),
        "_initial": (green, red),
    }


def _ratio_snapshot_fields(p: dict, regime: str) -> list:
    """(time, green GridField, red GridField) at each snapshot for one regime."""
    states = _ratio_states(p)
    green0, red0 = states["_initial"]
    n_snap = int(p["snapshots"])
    t_end = float(p["t_end"])
    times = np.linspace(0.0, t_end, n_snap)
    if regime == "static":
        return [(float(t), green0, red0) for t in times]
    state = states[regime]
    out = [(0.0, state.green.copy(), state.red.copy())]
    dt_max = 0.4 * pde.stability_limit(state)
    for t in times[1:]:
        steps = max(1, int(math.ceil((t - state.time) / dt_max - 1e-9)))
        dt = (t - state.time) / steps  # land exactly on the snapshot time
        for _ in range(steps):
            state = pde.pde_step(state, dt)
        out.append((float(state.time), state.green.copy(), state.red.copy()))
    return out


def _ratio_rep(args) -> tuple:
    """Edge counts of one perennial + one ephemeral draw at a snapshot intensity."""
    green_vals, red_vals, res, root_seed, tag, rep = args
    model = Product(
        GridTabulated(GridField(1, res, np.asarray(green_vals), np.ones(res, bool))),
        GridTabulated(GridField(1, res, np.asarray(red_vals), np.ones(res, bool))),
    )
    g_per = sample_perennial(model, derive_stream(root_seed, f"ratio-per-{tag}", rep))
    g_eph = sample_ephemeral(model, derive_stream(root_seed, f"ratio-eph-{tag}", rep))
    return g_per.n_edges, g_eph.n_edges


def _run_ratio_tracking(cfg: ExperimentConfig, threads: int) -> ResultTable:
    p = cfg.params
    res = int(p["resolution"])
    cols = {k: [] for k in ("regime", "time", "lambda", "theory_ratio",
                            "empirical_ratio", "se_ratio", "abs_error")}
    mae = {}
    for regime in p["regimes"]:
        errors = []
        for snap_idx, (t, green, red) in enumerate(_ratio_snapshot_fields(p, regime)):
            lam_t = green.total_mass() * red.total_mass()
            theory = lam_t / 2.0
            tag = f"{regime}-{snap_idx}"
            args = [(green.values, red.values, res, cfg.root_seed, tag, r)
                    for r in range(cfg.replications)]
            counts = np.array(_map_replications(_ratio_rep, args, threads), dtype=float)
            mean_per = counts[:, 0].mean()
            mean_eph = counts[:, 1].mean()
            ratio = mean_per / mean_eph
            # delta-method standard error of the ratio of means
            n = len(counts)
            var = (counts[:, 0].var(ddof=1) / mean_eph**2
                   + counts[:, 1].var(ddof=1) * mean_per**2 / mean_eph**4)
            se = math.sqrt(var / n)
            cols["regime"].append(regime)
            cols["time"].append(t)
            cols["lambda"].append(lam_t)
            cols["theory_ratio"].append(theory)
            cols["empirical_ratio"].append(ratio)
            cols["se_ratio"].append(se)
            cols["abs_error"].append(abs(ratio - theory))
            errors.append(abs(ratio - theory))
        mae[regime] = float(np.mean(errors))
    return ResultTable(cols, {"mae_by_regime": mae, "max_mae": max(mae.values())})


def _run_spectral(cfg: ExperimentConfig, threads: int) -> ResultTable:
    p = cfg.params
    top_k = int(p["top_k"])
    ref = spectral_reference_spectrum()
    cols = {k: [] for k in ("lambda", "k", "mean_sigma_hat", "std_sigma_hat",
                            "reference_sigma", "noise_floor")}
    mae1 = []
    rank4_frac = {}
    lambdas = [float(x) for x in p["lambdas"]]
    for lam in lambdas:
        args = [(lam, top_k, cfg.root_seed, r) for r in range(cfg.replications)]
        rows = _map_replications(_spectral_rep, args, threads)
        width = max(len(r) for r in rows)
        mat = np.zeros((len(rows), width))
        for i, r in enumerate(rows):
            mat[i, :len(r)] = r
        floor = 1.0 / math.sqrt(lam)
        for k in range(min(top_k, width)):
            cols["lambda"].append(lam)
            cols["k"].append(k + 1)
            cols["mean_sigma_hat"].append(float(mat[:, k].mean()))
            cols["std_sigma_hat"].append(float(mat[:, k].std(ddof=1)))
            cols["reference_sigma"].append(float(ref[k]) if k < len(ref) else 0.0)
            cols["noise_floor"].append(floor)
        mae1.append(float(np.abs(mat[:, 0] - ref[0]).mean()))
        rank4_frac[lam] = float(np.mean(
            [rank_above_noise_floor(row, lam) == 4 for row in rows]))
    slope = _ols_slope(np.log(np.array(lambdas)), np.log(np.array(mae1)))
    return ResultTable(cols, {
        "reference_spectrum": [float(x) for x in ref],
        "mae_sigma1_by_lambda": dict(zip([str(l) for l in lambdas], mae1)),
        "bias_slope": slope,
        "rank4_fraction_by_lambda": {str(l): v for l, v in rank4_frac.items()},
    })


def _run_multi_graph(cfg: ExperimentConfig, threads: int) -> ResultTable:
    p = cfg.params
    lam = float(p["lam"])
    cols = {k: [] for k in ("m", "batches", "mean_of_batch_means",
                            "std_of_batch_means", "graphs")}
    stds = {}
    for mi, m in enumerate(p["m_values"]):
        total = int(p["graphs_per_m"])
        batches = total // int(m)
        total = batches * int(m)
        args = [(lam, hash64(cfg.root_seed, "mgpool", mi), r) for r in range(total)]
        sigma1 = np.array(_map_replications(_multi_graph_rep, args, threads))
        batch_means = sigma1.reshape(batches, int(m)).mean(axis=1)
        cols["m"].append(int(m))
        cols["batches"].append(batches)
        cols["mean_of_batch_means"].append(float(batch_means.mean()))
        cols["std_of_batch_means"].append(float(batch_means.std(ddof=1)))
        cols["graphs"].append(total)
        stds[int(m)] = float(batch_means.std(ddof=1))
    ms = sorted(stds)
    meta = {"std_by_m": {str(k): v for k, v in stds.items()}}
    if len(ms) >= 2:
        meta["std_ratio"] = stds[ms[-1]] / stds[ms[0]]
        meta["expected_std_ratio"] = math.sqrt(ms[0] / ms[-1])
    return ResultTable(cols, meta)


def _growth_birth_times(delta: float, b0: float, window: float, n: int,
                        gen: np.random.Generator) -> np.ndarray:
    """Stratified birth times under the density-dependent growth process."""
    u = (np.arange(n) + gen.random(n)) / n
    if delta == 0.0:
        # N_t = e^{b0 t}: birth density proportional to the rate itself
        lam_total = math.expm1(b0 * window)
        return np.log1p(u * lam_total) / b0
    # N_t = (delta b0 t)^(1/delta) + 1-ish; inverse of the cumulative rate
    n_end = (delta * b0 * window + 1.0) ** (1.0 / delta)
    cum = 1.0 + u * (n_end - 1.0)
    return (cum ** delta - 1.0) / (delta * b0)


def _growth_lambda(delta: float, b0: float, window: float) -> float:
    if delta == 0.0:
        return math.expm1(b0 * window)
    return (delta * b0 * window + 1.0) ** (1.0 / delta) - 1.0


def _growth_window_for_lambda(delta: float, b0: float, lam: float) -> float:
    if delta == 0.0:
        return math.log1p(lam) / b0
    return (((lam + 1.0) ** delta) - 1.0) / (delta * b0)


def _run_growth(cfg: ExperimentConfig, threads: int) -> ResultTable:
    p = cfg.params
    eta = float(p["eta"])
    b0 = float(p["b0"])
    n = int(p["pairs"])
    cols = {k: [] for k in ("delta", "window", "lambda", "p_overlap_hat",
                            "se_p", "edges_proxy")}
    exponents = {}
    for di, delta in enumerate(p["deltas"]):
        lams, proxies = [], []
        for li, lam_target in enumerate(p["lam_targets"]):
            w = _growth_window_for_lambda(float(delta), b0, float(lam_target))
            lam = _growth_lambda(float(delta), b0, w)
            gen = derive_stream(cfg.root_seed, f"growth-{di}", li).generator()
            t1 = _growth_birth_times(float(delta), b0, w, n, gen)
            t2 = _growth_birth_times(float(delta), b0, w, n, gen)
            gen.shuffle(t2)
            vals = np.exp(-np.abs(t1 - t2) / eta)
            p_hat = float(vals.mean())
            se = float(vals.std(ddof=1) / math.sqrt(n))
            proxy = (lam * lam + lam) * p_hat
            cols["delta"].append(float(delta))
            cols["window"].append(w)
            cols["lambda"].append(lam)
            cols["p_overlap_hat"].append(p_hat)
            cols["se_p"].append(se)
            cols["edges_proxy"].append(proxy)
            lams.append(lam)
            proxies.append(proxy)
        exponents[str(delta)] = _ols_slope(np.log(np.array(lams)),
                                           np.log(np.array(proxies)))
    return ResultTable(cols, {"edge_exponent_by_delta": exponents})


# ---------------------------------------------------------------------------
# Driver
# ---------------------------------------------------------------------------


def _estimate_node_budget(cfg: ExperimentConfig) -> float:
    p = cfg.params
    if cfg.name == "scaling":
        return cfg.replications * 2 * sum(p["lambdas"])
    if cfg.name == "overlap":
        return 2.0 * p["pairs"] * len(p["eta_over_window"])
    if cfg.name == "ratio_tracking":
        return cfg.replications * 2 * p["lam0"] * p["snapshots"] * len(p["regimes"])
    if cfg.name == "spectral_convergence":
        return cfg.replications * sum(p["lambdas"])
    if cfg.name == "multi_graph":
        return p["graphs_per_m"] * len(p["m_values"]) * p["lam"]
    if cfg.name == "growth_overlap":
        return 2.0 * p["pairs"] * len(p["deltas"]) * len(p["lam_targets"])
    return math.inf


_RUNNERS = {
    "scaling": _run_scaling,
    "overlap": _run_overlap,
    "ratio_tracking": _run_ratio_tracking,
    "spectral_convergence": _run_spectral,
    "multi_graph": _run_multi_graph,
    "growth_overlap": _run_growth,
}


def run_experiment(cfg: ExperimentConfig, threads: int = 1) -> ResultTable:
    budget = _estimate_node_budget(cfg)
    if budget > NODE_SAMPLE_BUDGET:
        raise ValueError(
            f"experiment would draw ~{budget:.3g} node samples, over the "
            f"{NODE_SAMPLE_BUDGET:.0g} budget; shrink the grid or replications"
        )
    start = time.perf_counter()
    table = _RUNNERS[cfg.name](cfg, threads)
    table.metadata.update({
        "experiment": cfg.name,
        "config_hash": cfg.hash(),
        "root_seed": cfg.root_seed,
        "replications": cfg.replications,
        "wall_time_s": round(time.perf_counter() - start, 3),
    })
    return table


def check_table(cfg: ExperimentConfig, table: ResultTable) -> List[str]:
    """Acceptance-band checks; returns human-readable violations (empty = pass)."""
    v: List[str] = []
    meta = table.metadata
    if cfg.name == "scaling":
        if not (1.92 <= meta["slope_perennial"] <= 2.02):
            v.append(f"perennial slope {meta['slope_perennial']:.4f} outside 1.97 +/- 0.05")
        if not (0.96 <= meta["slope_ephemeral"] <= 1.06):
            v.append(f"ephemeral slope {meta['slope_ephemeral']:.4f} outside 1.01 +/- 0.05")
    elif cfg.name == "overlap":
        if meta["max_rel_err_stratified"] >= 0.01:
            v.append(f"max relative error {meta['max_rel_err_stratified']:.4f} >= 1%")
        for ratio, p_raw, se, closed in zip(table.columns["eta_over_window"],
                                            table.columns["p_raw"],
                                            table.columns["se_raw"],
                                            table.columns["p_closed"]):
            if ratio in (0.1, 1.0) and abs(p_raw - closed) > 3 * se:
                v.append(f"raw overlap at eta/W={ratio} off by more than 3 sigma")
    elif cfg.name == "ratio_tracking":
        for regime, mae in meta["mae_by_regime"].items():
            if mae >= 3.0:
                v.append(f"ratio MAE {mae:.2f} >= 3 for regime {regime}")
    elif cfg.name == "spectral_convergence":
        for lam_s, mae in meta["mae_sigma1_by_lambda"].items():
            lam = float(lam_s)
            if lam >= 300 and mae >= 2.0 / math.sqrt(lam):
                v.append(f"sigma1 error {mae:.4f} >= 2/sqrt({lam:g})")
        if not (-0.75 <= meta["bias_slope"] <= -0.3):
            v.append(f"bias slope {meta['bias_slope']:.3f} outside [-0.75, -0.3]")
    elif cfg.name == "multi_graph":
        ratio = meta.get("std_ratio")
        expect = meta.get("expected_std_ratio")
        if ratio is not None and abs(ratio / expect - 1.0) > 0.3:
            v.append(f"std ratio {ratio:.3f} vs 1/sqrt(m) prediction {expect:.3f} off > 30%")
    elif cfg.name == "growth_overlap":
        targets = {"0.0": 2.0, "1.0": 1.0}
        for d, slope in meta["edge_exponent_by_delta"].items():
            want = targets.get(d)
            if want is not None and abs(slope - want) > 0.15:
                v.append(f"edge exponent {slope:.3f} at delta={d} outside {want} +/- 0.15")
    return v


# ---------------------------------------------------------------------------
# Output formats
# ---------------------------------------------------------------------------


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.17g}"
    return str(x)


def write_results(table: ResultTable, path: str, fmt: str = "csv") -> None:
    """Write a result table; CSV embeds metadata as '#'-prefixed comment lines."""
    if fmt == "csv":
        with open(path, "w", newline="") as fh:
            for key in sorted(table.metadata):
                fh.write(f"# {key}={json.dumps(table.metadata[key], sort_keys=True)}\n")
            writer = csv.writer(fh)
            names = list(table.columns)
            writer.writerow(names)
            for i in range(table.n_rows):
                writer.writerow([_fmt(table.columns[c][i]) for c in names])
    elif fmt == "json":
        doc = {"metadata": table.metadata, "columns": table.columns}
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=1)
    else:
        raise ValueError("format must be 'csv' or 'json'")


def read_result_csv(path: str) -> ResultTable:
    metadata = {}
    with open(path) as fh:
        lines = fh.read().splitlines()
    body = []
    for line in lines:
        if line.startswith("#"):
            key, _, val = line[1:].strip().partition("=")
            metadata[key.strip()] = json.loads(val)
        elif line:
            body.append(line)
    rows = list(csv.reader(body))
    names = rows[0]
    cols: dict = {n: [] for n in names}
    for row in rows[1:]:
        for n, cell in zip(names, row):
            try:
                cols[n].append(float(cell))
            except ValueError:
                cols[n].append(cell)
    return ResultTable(cols, metadata)


RESULT_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "title": "experiment result table",
    "type": "object",
    "required": ["metadata", "columns"],
    "properties": {
        "metadata": {
            "type": "object",
            "required": ["experiment", "config_hash", "root_seed"],
            "properties": {
                "experiment": {"type": "string"},
                "config_hash": {"type": "string"},
                "root_seed": {"type": "integer"},
                "wall_time_s": {"type": "number"},
            },
        },
        "columns": {
            "type": "object",
            "additionalProperties": {
                "type": "array",
                "items": {"type": ["number", "string", "integer"]},
            },
        },
    },
}


def validate_result_doc(doc: dict) -> None:
    """Minimal structural validation matching RESULT_SCHEMA."""
    if not isinstance(doc, dict) or "metadata" not in doc or "columns" not in doc:
        raise ValueError("result document needs 'metadata' and 'columns'")
    meta, cols = doc["metadata"], doc["columns"]
    for key in ("experiment", "config_hash", "root_seed"):
        if key not in meta:
            raise ValueError(f"metadata missing {key!r}")
    lengths = {len(v) for v in cols.values()}
    if len(lengths) > 1:
        raise ValueError("columns have unequal lengths")
    for name, arr in cols.items():
        if not isinstance(arr, list):
            raise ValueError(f"column {name!r} is not an array")
