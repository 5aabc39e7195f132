"""Command-line interface.

Subcommands mirror the library modules: sample graphs, print closed-form
expectations, export heat grids, compute spectra, evolve intensities, build
guild communities, and run the experiment harness. Exit code 2 signals an
acceptance-band violation under ``experiment --check``.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import experiments, foodweb, heat, pde, spectral
from .expectations import (
    AsymmetricEphemeral,
    Ephemeral,
    Lifetime,
    PerennialDistinct,
    PerennialWithLoops,
    expected_edges,
    overlap_probability,
)
from .gridfield import save_grid
from .latent import QuadratureSpec, load_model, model_dim, moments
from .rng import SeededRng
from .sampling import (
    load_graph,
    sample_asymmetric_ephemeral,
    sample_ephemeral,
    sample_lifetime,
    sample_perennial,
    save_graph,
    write_edge_list,
)

_RULES = ("perennial", "perennial_loops", "ephemeral", "lifetime", "asymmetric")


def _rule_from_args(args):
    if args.rule == "perennial":
        return PerennialDistinct()
    if args.rule == "perennial_loops":
        return PerennialWithLoops()
    if args.rule == "ephemeral":
        return Ephemeral()
    if args.rule == "lifetime":
        return Lifetime(args.eta, args.window)
    return AsymmetricEphemeral()


def _cmd_sample(args) -> int:
    model = load_model(args.model)
    rng = SeededRng(args.seed)
    if args.rule == "perennial" or args.rule == "perennial_loops":
        graph = sample_perennial(model, rng, include_self_loops=args.rule == "perennial_loops")
    elif args.rule == "ephemeral":
        graph = sample_ephemeral(model, rng)
    elif args.rule == "lifetime":
        graph = sample_lifetime(model, args.eta, args.window, rng)
    elif args.rule == "asymmetric":
        from .latent import total_intensity
        graph = sample_asymmetric_ephemeral(model, model, total_intensity(model), rng)
    else:
        raise SystemExit(f"unknown rule {args.rule}")
    if args.out:
        save_graph(graph, args.out)
    if args.edge_list:
        write_edge_list(graph, args.edge_list)
    print(json.dumps({"nodes": graph.n_nodes, "edges": graph.n_edges,
                      "rule": graph.rule}))
    return 0


def _cmd_expect(args) -> int:
    model = load_model(args.model)
    summ = moments(model, _scheme(args))
    out = {
        "lambda": summ.lam,
        "c_G": summ.c_G,
        "c_R": summ.c_R,
        "mean_affinity": summ.mean_affinity,
    }
    if summ.kind == "product":
        out["expected_edges"] = {
            "perennial": expected_edges(summ, PerennialDistinct()),
            "perennial_loops": expected_edges(summ, PerennialWithLoops()),
            "ephemeral": expected_edges(summ, Ephemeral()),
            "asymmetric": expected_edges(summ, AsymmetricEphemeral()),
        }
        if args.eta is not None and args.window is not None:
            out["expected_edges"]["lifetime"] = expected_edges(
                summ, Lifetime(args.eta, args.window))
            out["p_overlap"] = overlap_probability(args.eta, args.window)
    print(json.dumps(out, indent=1))
    return 0


def _scheme(args) -> QuadratureSpec:
    if getattr(args, "mc_samples", None):
        return QuadratureSpec(method="mc", mc_samples=args.mc_samples,
                              seed=args.seed if args.seed is not None else 0)
    return QuadratureSpec()


def _cmd_heat(args) -> int:
    model = load_model(args.model)
    if args.mode == "bound":
        grid = heat.bound_heat_grid(model, args.resolution)
    else:
        from .latent import TabulatedJoint
        if not isinstance(model, TabulatedJoint):
            raise SystemExit("slice mode needs a tabulated joint model")
        grid = heat.raw_heat_slice(model, args.fixed_r, args.fixed_g, args.resolution)
    if args.out.endswith(".csv"):
        n = grid.points_per_axis
        centers = (np.arange(n) + 0.5) * grid.spacing
        with open(args.out, "w") as fh:
            fh.write("g,r,value\n")
            for i in range(n):
                for j in range(n):
                    fh.write(f"{centers[i]:.17g},{centers[j]:.17g},{grid.values[i, j]:.17g}\n")
    else:
        save_grid(grid, args.out)
    print(json.dumps({"total": grid.total_mass(), "resolution": grid.points_per_axis}))
    return 0


def _cmd_spectral(args) -> int:
    out = {}
    if args.graph:
        graph = load_graph(args.graph)
        svals = spectral.adjacency_spectrum(graph, min(args.top_k, graph.n_nodes))
        out["singular_values"] = [float(x) for x in svals]
        out["noise_floor"] = 1.0 / math.sqrt(graph.n_nodes)
    if args.model:
        model = load_model(args.model)
        summ = moments(model, _scheme(args))
        ref = spectral.desire_singular_values(summ.sigma_G, summ.sigma_R)
        out["reference"] = [float(x) for x in ref]
        out.setdefault("noise_floor", 1.0 / math.sqrt(summ.lam))
    if not out:
        raise SystemExit("need --graph and/or --model")
    print(json.dumps(out, indent=1))
    return 0


def _cmd_pde(args) -> int:
    model = load_model(args.model)
    from .latent import Product, GridTabulated
    from .gridfield import GridField
    from .latent import _marginal_density_fn  # noqa: internal reuse for gridding
    if not isinstance(model, Product) or model_dim(model) != 1:
        raise SystemExit("pde runs on d=1 product models")
    res = args.resolution
    x = ((np.arange(res) + 0.5) / res)[:, None]
    green = GridField(1, res, _marginal_density_fn(model.green, QuadratureSpec())(x),
                      np.ones(res, bool))
    red = GridField(1, res, _marginal_density_fn(model.red, QuadratureSpec())(x),
                    np.ones(res, bool))
    if args.regime == "diffusion":
        regime = pde.Diffusion(args.nu)
    elif args.regime == "advection":
        regime = pde.Advection((args.velocity,))
    elif args.regime == "reaction":
        regime = pde.ReactionDiffusion(args.nu, args.rate, args.capacity)
    else:
        regime = pde.PursuitEvasion(args.alpha, args.beta, args.gamma, (args.x0,))
    state = pde.PdeState(green, red, regime, args.bc)
    dt = None if args.dt == "auto" else float(args.dt)
    n_steps_between = max(1, int(math.ceil(
        (args.t_end / (dt or 0.4 * pde.stability_limit(state))) / max(args.snapshots, 1))))
    final, traj = pde.evolve(state, args.t_end, dt, snapshot_every=n_steps_between)
    with open(args.out, "w") as fh:
        fh.write("time,mass_G,mass_R,lambda,centroid_G,centroid_R,E_per,E_eph,ratio\n")
        for pt in traj.points:
            fh.write(",".join(f"{v:.17g}" for v in (
                pt.time, pt.mass_g, pt.mass_r, pt.lam, pt.centroid_g[0],
                pt.centroid_r[0], pt.expected_perennial_edges,
                pt.expected_ephemeral_edges, pt.ratio)) + "\n")
    if args.snapshot_dir:
        os.makedirs(args.snapshot_dir, exist_ok=True)
        save_grid(final.green, os.path.join(args.snapshot_dir, "green_final.json"))
        save_grid(final.red, os.path.join(args.snapshot_dir, "red_final.json"))
    print(json.dumps({"snapshots": len(traj.points), "final_lambda": traj.points[-1].lam}))
    return 0


def _cmd_foodweb(args) -> int:
    if args.config:
        guilds, target = foodweb.load_guild_config(args.config)
    else:
        guilds, target = foodweb.default_food_web(args.lam)
    lam = sum(g.gamma for g in guilds)
    mat = foodweb.expected_guild_edges(guilds, lam, _scheme(args))
    if args.out_matrix:
        with open(args.out_matrix, "w") as fh:
            fh.write("source,target,expected_edges,affinity\n")
            for i, a in enumerate(mat.labels):
                for j, b in enumerate(mat.labels):
                    fh.write(f"{a},{b},{mat.expected[i, j]:.17g},{mat.affinity[i, j]:.17g}\n")
    if args.sample_out:
        mixture = foodweb.build_mixture(guilds)
        graph = sample_perennial(mixture, SeededRng(args.seed or 0))
        save_graph(graph, args.sample_out)
    print(json.dumps({"lambda": lam, "guilds": list(mat.labels)}))
    return 0


def _cmd_experiment(args) -> int:
    if args.config:
        with open(args.config) as fh:
            cfg = experiments.ExperimentConfig.from_dict(json.load(fh))
    elif args.name:
        cfg = experiments.default_config(args.name)
    else:
        raise SystemExit("need --config or --name")
    if args.seed is not None:
        cfg = experiments.ExperimentConfig(cfg.name, cfg.replications, args.seed, cfg.params)
    if args.replications is not None:
        cfg = experiments.ExperimentConfig(cfg.name, args.replications, cfg.root_seed, cfg.params)
    threads = args.threads or int(os.environ.get("IDPG_THREADS", "1"))
    table = experiments.run_experiment(cfg, threads=threads)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, f"{cfg.name}.{args.format}")
    experiments.write_results(table, path, args.format)
    violations = experiments.check_table(cfg, table)
    print(json.dumps({"experiment": cfg.name, "output": path,
                      "violations": violations}, indent=1))
    if args.check and violations:
        return 2
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="idpg", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="sample a graph realization")
    p.add_argument("--model", required=True)
    p.add_argument("--rule", choices=_RULES, default="perennial")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eta", type=float, default=1.0)
    p.add_argument("--window", type=float, default=1.0)
    p.add_argument("--out")
    p.add_argument("--edge-list")
    p.set_defaults(func=_cmd_sample)

    p = sub.add_parser("expect", help="closed-form expectations for a model")
    p.add_argument("--model", required=True)
    p.add_argument("--eta", type=float)
    p.add_argument("--window", type=float)
    p.add_argument("--mc-samples", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=_cmd_expect)

    p = sub.add_parser("heat", help="export bound-heat or slice grids")
    p.add_argument("--model", required=True)
    p.add_argument("--mode", choices=("bound", "slice"), default="bound")
    p.add_argument("--resolution", type=int, default=128)
    p.add_argument("--fixed-r", type=float, default=0.5)
    p.add_argument("--fixed-g", type=float, default=0.5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_heat)

    p = sub.add_parser("spectral", help="adjacency and operator spectra")
    p.add_argument("--graph")
    p.add_argument("--model")
    p.add_argument("--top-k", type=int, default=8)
    p.add_argument("--mc-samples", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=_cmd_spectral)

    p = sub.add_parser("pde", help="evolve a d=1 product intensity")
    p.add_argument("--model", required=True)
    p.add_argument("--regime", choices=("diffusion", "advection", "reaction", "pursuit"),
                   default="diffusion")
    p.add_argument("--nu", type=float, default=0.01)
    p.add_argument("--velocity", type=float, default=0.1)
    p.add_argument("--rate", type=float, default=0.5)
    p.add_argument("--capacity", type=float, default=10.0)
    p.add_argument("--alpha", type=float, default=1.5)
    p.add_argument("--beta", type=float, default=1.5)
    p.add_argument("--gamma", type=float, default=2.0)
    p.add_argument("--x0", type=float, default=0.5)
    p.add_argument("--bc", choices=("reflecting", "absorbing", "robin"), default="reflecting")
    p.add_argument("--t-end", type=float, default=2.0)
    p.add_argument("--dt", default="auto")
    p.add_argument("--snapshots", type=int, default=10)
    p.add_argument("--resolution", type=int, default=128)
    p.add_argument("--out", required=True)
    p.add_argument("--snapshot-dir")
    p.set_defaults(func=_cmd_pde)

    p = sub.add_parser("foodweb", help="guild-level expected edges and samples")
    p.add_argument("--config")
    p.add_argument("--lam", type=float, default=100.0)
    p.add_argument("--out-matrix")
    p.add_argument("--sample-out")
    p.add_argument("--seed", type=int)
    p.add_argument("--mc-samples", type=int)
    p.set_defaults(func=_cmd_foodweb)

    p = sub.add_parser("experiment", help="run a reproducible experiment")
    p.add_argument("--config")
    p.add_argument("--name", choices=experiments.EXPERIMENT_NAMES)
    p.add_argument("--out", default="results")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--threads", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--replications", type=int)
    p.add_argument("--check", action="store_true")
    p.set_defaults(func=_cmd_experiment)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
