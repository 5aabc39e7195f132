"""Render experiment result tables to figures.

One figure kind per result-file schema; inputs are the CSV/JSON files the
simulation package writes (metadata in '#' comment lines, one header row,
17-significant-digit floats). Rendering is read-only and deterministic:
fixed canvas, fixed fonts, no timestamps, so identical inputs give
byte-identical images.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["FigureJob", "SchemaError", "KINDS", "read_table", "render"]

plt.rcParams.update({
    "figure.figsize": (6.4, 4.2),
    "figure.dpi": 110,
    "savefig.dpi": 110,
    "font.family": "DejaVu Sans",
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.25,
})

_SCHEMAS: Dict[str, List[str]] = {
    "scaling": ["lambda", "rule", "mean_edges", "se_edges", "expected_edges"],
    "overlap": ["eta_over_window", "p_closed", "p_stratified", "p_raw", "se_raw"],
    "ratio_tracking": ["regime", "time", "lambda", "theory_ratio",
                       "empirical_ratio", "se_ratio"],
    "spectral_convergence": ["lambda", "k", "mean_sigma_hat", "std_sigma_hat",
                             "reference_sigma", "noise_floor"],
    "multi_graph": ["m", "std_of_batch_means", "mean_of_batch_means"],
    "growth_overlap": ["delta", "lambda", "p_overlap_hat", "edges_proxy"],
    "bound_heat": ["g", "r", "value"],
    "pde_snapshots": ["time", "mass_G", "mass_R", "lambda", "ratio"],
    "guild_matrix": ["source", "target", "expected_edges", "affinity"],
}

KINDS = tuple(_SCHEMAS)


class SchemaError(ValueError):
    """Input file does not carry the columns the figure kind needs."""


@dataclass(frozen=True)
class FigureJob:
    kind: str
    input_path: str
    output_path: str
    log_axes: bool = True
    reference_lines: bool = True
    title: Optional[str] = None

    def __post_init__(self):
        if self.kind not in _SCHEMAS:
            raise ValueError(f"unknown figure kind {self.kind!r}; choose from {KINDS}")


@dataclass
class Table:
    columns: Dict[str, list]
    metadata: dict = field(default_factory=dict)

    def numeric(self, name: str) -> np.ndarray:
        return np.array([float(x) for x in self.columns[name]])

    @property
    def n_rows(self) -> int:
        return len(next(iter(self.columns.values()))) if self.columns else 0


def read_table(path: str) -> Table:
    """Read a result file (CSV with '#'-metadata comments, or JSON)."""
    if path.endswith(".json"):
        with open(path) as fh:
            doc = json.load(fh)
        return Table(doc["columns"], doc.get("metadata", {}))
    metadata = {}
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                key, _, val = line[1:].strip().partition("=")
                try:
                    metadata[key.strip()] = json.loads(val)
                except json.JSONDecodeError:
                    metadata[key.strip()] = val
            else:
                rows.append(line)
    parsed = list(csv.reader(rows))
    if not parsed:
        raise SchemaError("input file has no header row")
    names = parsed[0]
    columns: Dict[str, list] = {n: [] for n in names}
    for row in parsed[1:]:
        for n, cell in zip(names, row):
            columns[n].append(cell)
    return Table(columns, metadata)


def _check_schema(kind: str, table: Table) -> None:
    missing = [c for c in _SCHEMAS[kind] if c not in table.columns]
    if missing:
        raise SchemaError(
            f"{kind} figure needs columns {missing}; file has {sorted(table.columns)}")


def _unique_in_order(values):
    seen = []
    for v in values:
        if v not in seen:
            seen.append(v)
    return seen


# ---------------------------------------------------------------------------
# Per-kind renderers
# ---------------------------------------------------------------------------


def _render_scaling(job: FigureJob, t: Table, ax) -> None:
    lam = t.numeric("lambda")
    mean = t.numeric("mean_edges")
    se = t.numeric("se_edges")
    expected = t.numeric("expected_edges")
    for rule, color in (("perennial", "tab:blue"), ("ephemeral", "tab:red")):
        sel = np.array([r == rule for r in t.columns["rule"]])
        if not sel.any():
            continue
        order = np.argsort(lam[sel])
        ax.errorbar(lam[sel][order], mean[sel][order], yerr=3 * se[sel][order],
                    marker="o", ms=3.5, lw=1.2, color=color, label=rule)
        if job.reference_lines:
            ax.plot(lam[sel][order], expected[sel][order], "--", lw=1.0,
                    color=color, alpha=0.8, label=f"{rule} theory")
    if job.log_axes and t.n_rows:
        ax.set_xscale("log")
        ax.set_yscale("log")
    ax.set_xlabel("total intensity")
    ax.set_ylabel("mean edges")
    meta = t.metadata
    if "slope_perennial" in meta:
        ax.set_title(f"slopes: {meta['slope_perennial']:.3f} / "
                     f"{meta['slope_ephemeral']:.3f}", fontsize=9)


def _render_overlap(job: FigureJob, t: Table, ax) -> None:
    x = t.numeric("eta_over_window")
    order = np.argsort(x)
    if job.reference_lines and t.n_rows:
        ax.plot(x[order], t.numeric("p_closed")[order], "-", color="k",
                lw=1.2, label="closed form")
    if t.n_rows:
        ax.errorbar(x[order], t.numeric("p_raw")[order],
                    yerr=3 * t.numeric("se_raw")[order], fmt="o", ms=4,
                    color="tab:orange", label="sampled pairs")
        ax.plot(x[order], t.numeric("p_stratified")[order], "x", ms=5,
                color="tab:blue", label="smoothed estimate")
        ax.set_xscale("log")
    ax.set_ylim(-0.02, 1.02)
    ax.set_xlabel("lifetime / window")
    ax.set_ylabel("overlap probability")
    if t.n_rows:
        ax.legend(loc="upper left", fontsize=8)


def _render_ratio(job: FigureJob, t: Table, ax) -> None:
    for regime in _unique_in_order(t.columns["regime"]):
        sel = np.array([r == regime for r in t.columns["regime"]])
        times = t.numeric("time")[sel]
        ax.plot(times, t.numeric("empirical_ratio")[sel], marker="o", ms=3,
                lw=1.0, label=regime)
        if job.reference_lines:
            ax.plot(times, t.numeric("theory_ratio")[sel], "--", lw=0.9,
                    color="gray")
    ax.set_xlabel("time")
    ax.set_ylabel("dense / sparse edge ratio")
    if t.n_rows:
        ax.legend(fontsize=8)


def _render_spectral(job: FigureJob, t: Table, ax) -> None:
    ks = sorted({int(float(k)) for k in t.columns["k"]})
    for k in ks[:5]:
        sel = np.array([int(float(v)) == k for v in t.columns["k"]])
        lam = t.numeric("lambda")[sel]
        order = np.argsort(lam)
        ax.errorbar(lam[order], t.numeric("mean_sigma_hat")[sel][order],
                    yerr=t.numeric("std_sigma_hat")[sel][order],
                    marker="o", ms=3, lw=1.0, label=f"k={k}")
        if job.reference_lines:
            ref = t.numeric("reference_sigma")[sel][order]
            if np.any(ref > 0):
                ax.plot(lam[order], ref, "--", lw=0.8, color="gray")
    if job.reference_lines and t.n_rows:
        sel = np.array([int(float(v)) == ks[0] for v in t.columns["k"]])
        lam = np.sort(t.numeric("lambda")[sel])
        ax.plot(lam, 1.0 / np.sqrt(lam), ":", color="k", lw=1.2, label="noise floor")
    if job.log_axes and t.n_rows:
        ax.set_xscale("log")
        ax.set_yscale("log")
    ax.set_xlabel("total intensity")
    ax.set_ylabel("scaled singular value")
    if t.n_rows:
        ax.legend(fontsize=8, ncols=2)


def _render_multi_graph(job: FigureJob, t: Table, ax) -> None:
    m = t.numeric("m")
    std = t.numeric("std_of_batch_means")
    order = np.argsort(m)
    ax.plot(m[order], std[order], "o-", color="tab:blue", label="averaged estimator std")
    if job.reference_lines and t.n_rows:
        ref = std[order][0] * np.sqrt(m[order][0] / m[order])
        ax.plot(m[order], ref, "--", color="gray", label="1/sqrt(m)")
    if job.log_axes and t.n_rows:
        ax.set_xscale("log")
        ax.set_yscale("log")
    ax.set_xlabel("graphs per average")
    ax.set_ylabel("std of averaged singular value")
    if t.n_rows:
        ax.legend(fontsize=8)


def _render_growth(job: FigureJob, t: Table, ax) -> None:
    for delta in _unique_in_order(t.columns["delta"]):
        sel = np.array([d == delta for d in t.columns["delta"]])
        lam = t.numeric("lambda")[sel]
        order = np.argsort(lam)
        ax.plot(lam[order], t.numeric("edges_proxy")[sel][order], "o-",
                ms=3, lw=1.0, label=f"delta={float(delta):g}")
    if job.log_axes and t.n_rows:
        ax.set_xscale("log")
        ax.set_yscale("log")
    ax.set_xlabel("total intensity")
    ax.set_ylabel("expected interaction scale")
    if t.n_rows:
        ax.legend(fontsize=8)
        expo = t.metadata.get("edge_exponent_by_delta")
        if expo:
            label = ", ".join(f"{k}: {v:.2f}" for k, v in sorted(expo.items()))
            ax.set_title(f"fitted exponents {label}", fontsize=9)


def _render_bound_heat(job: FigureJob, t: Table, ax) -> None:
    g = t.numeric("g")
    r = t.numeric("r")
    v = t.numeric("value")
    if t.n_rows:
        n = int(round(len(v) ** 0.5))
        img = v.reshape(n, n)
        im = ax.imshow(img.T, origin="lower", extent=(0, 1, 0, 1),
                       cmap="inferno", aspect="equal")
        plt.colorbar(im, ax=ax, shrink=0.85)
        del g, r
    ax.set_xlabel("giving coordinate")
    ax.set_ylabel("receiving coordinate")


def _render_pde(job: FigureJob, t: Table, ax) -> None:
    times = t.numeric("time")
    ax.plot(times, t.numeric("mass_G"), "-o", ms=3, label="giving-side mass")
    ax.plot(times, t.numeric("mass_R"), "-s", ms=3, label="receiving-side mass")
    ax2 = ax.twinx()
    ax2.plot(times, t.numeric("ratio"), "-^", ms=3, color="tab:green",
             label="edge ratio")
    if job.reference_lines and t.n_rows:
        ax2.plot(times, t.numeric("lambda") / 2.0, "--", color="gray",
                 label="lambda/2")
    ax2.set_ylabel("dense / sparse edge ratio")
    ax2.grid(False)
    ax.set_xlabel("time")
    ax.set_ylabel("marginal mass")
    if t.n_rows:
        lines, labels = ax.get_legend_handles_labels()
        lines2, labels2 = ax2.get_legend_handles_labels()
        ax.legend(lines + lines2, labels + labels2, fontsize=8, loc="center right")


def _render_guild_matrix(job: FigureJob, t: Table, ax) -> None:
    sources = _unique_in_order(t.columns["source"])
    targets = _unique_in_order(t.columns["target"])
    if t.n_rows:
        mat = np.zeros((len(sources), len(targets)))
        for s, tg, v in zip(t.columns["source"], t.columns["target"],
                            t.numeric("expected_edges")):
            mat[sources.index(s), targets.index(tg)] = v
        im = ax.imshow(mat, cmap="viridis")
        plt.colorbar(im, ax=ax, shrink=0.85)
        ax.set_xticks(range(len(targets)), targets)
        ax.set_yticks(range(len(sources)), sources)
        for i in range(len(sources)):
            for j in range(len(targets)):
                ax.text(j, i, f"{mat[i, j]:.0f}", ha="center", va="center",
                        color="w", fontsize=7)
    ax.grid(False)
    ax.set_xlabel("target guild")
    ax.set_ylabel("source guild")


_RENDERERS = {
    "scaling": _render_scaling,
    "overlap": _render_overlap,
    "ratio_tracking": _render_ratio,
    "spectral_convergence": _render_spectral,
    "multi_graph": _render_multi_graph,
    "growth_overlap": _render_growth,
    "bound_heat": _render_bound_heat,
    "pde_snapshots": _render_pde,
    "guild_matrix": _render_guild_matrix,
}


def render(job: FigureJob) -> str:
    """Render one figure; returns the output path.

    Raises SchemaError when the input lacks the kind's columns. An empty
    (header-only) table renders an axes-only figure and succeeds.
    """
    table = read_table(job.input_path)
    _check_schema(job.kind, table)
    fig, ax = plt.subplots()
    try:
        _RENDERERS[job.kind](job, table, ax)
        if job.title:
            fig.suptitle(job.title, fontsize=10)
        fig.tight_layout()
        fig.savefig(job.output_path, metadata={"Software": None})
    finally:
        plt.close(fig)
    return job.output_path
