import math

import numpy as np
import pytest
from scipy import stats

from idpg.expectations import overlap_probability
from idpg.latent import (
    MixtureComponent,
    MixtureOfProducts,
    Product,
    TruncGaussianSpec,
    UniformBall,
    moments,
)
from idpg.rng import SeededRng, derive_stream
from idpg.sampling import (
    graph_from_dict,
    graph_to_dict,
    load_graph,
    observed_subgraph,
    roll_perennial_edges,
    sample_asymmetric_ephemeral,
    sample_ephemeral,
    sample_lifetime,
    sample_marginal,
    sample_perennial,
    sample_positions,
    save_graph,
    write_edge_list,
)


def mean_and_se(xs):
    xs = np.asarray(xs, dtype=float)
    return xs.mean(), xs.std(ddof=1) / math.sqrt(len(xs))


class TestPositions:
    def test_poisson_mean(self):
        model = Product(UniformBall(5.0, 1), UniformBall(10.0, 1))  # lambda 50
        counts = [len(sample_positions(model, SeededRng(1, k))[0]) for k in range(1000)]
        assert 47.8 <= np.mean(counts) <= 52.2  # 3 sigma band for one draw, sigma=sqrt(50)

    def test_mixture_species_fraction(self):
        mix = MixtureOfProducts((
            MixtureComponent("big", UniformBall(6.0, 1), UniformBall(5.0, 1)),   # gamma 30
            MixtureComponent("small", UniformBall(2.0, 1), UniformBall(5.0, 1)),  # gamma 10
        ))
        labels = []
        k = 0
        while len(labels) < 10_000:
            _, _, sp = sample_positions(mix, SeededRng(2, k))
            labels.extend(sp.tolist())
            k += 1
        frac = np.mean([l == "big" for l in labels[:10_000]])
        se = math.sqrt(0.75 * 0.25 / 10_000)
        assert abs(frac - 0.75) <= 3 * se

    def test_trunc_gaussian_tightness(self):
        spec = TruncGaussianSpec((0.9,), (500.0,), 1.0)
        draws = sample_marginal(spec, 20_000, SeededRng(3).generator())
        assert abs(draws.std() - 0.045) / 0.045 < 0.10

    def test_positions_respect_domain(self):
        spec = TruncGaussianSpec((0.5, 0.5, 0.4, 0.2), (20.0,) * 4, 1.0)
        draws = sample_marginal(spec, 50_000, SeededRng(4).generator())
        assert draws.min() >= 0.0
        assert np.einsum("ij,ij->i", draws, draws).max() <= 1.0 + 1e-12

    def test_rejection_stall_raises(self, monkeypatch):
        # d=16 near-uniform proposals accept ~3e-6 of draws; with a small cap
        # the stall guard must fire rather than spin
        import idpg.sampling as sampling
        monkeypatch.setattr(sampling, "MAX_CONSECUTIVE_REJECTIONS", 2000)
        spec = TruncGaussianSpec((0.2,) * 16, (1e-6,) * 16, 1.0)
        with pytest.raises(RuntimeError):
            sample_marginal(spec, 10, SeededRng(5).generator())


class TestPerennial:
    def test_empty_graph(self):
        model = Product(UniformBall(1e-9, 1), UniformBall(1e-9, 1))
        g = sample_perennial(model, SeededRng(6))
        assert g.n_nodes == 0 and g.n_edges == 0

    def test_mean_edges_against_closed_form(self, uniform_model):
        counts = [sample_perennial(uniform_model, SeededRng(7, k)).n_edges
                  for k in range(10_000)]
        mean, se = mean_and_se(counts)
        assert abs(mean - 9.0) <= 3 * se

    def test_mean_edges_with_loops(self, uniform_model):
        counts = [sample_perennial(uniform_model, SeededRng(8, k), include_self_loops=True).n_edges
                  for k in range(10_000)]
        mean, se = mean_and_se(counts)
        assert abs(mean - 10.5) <= 3 * se

    def test_determinism(self, uniform_model):
        a = sample_perennial(uniform_model, SeededRng(9, 3))
        b = sample_perennial(uniform_model, SeededRng(9, 3))
        assert np.array_equal(a.g, b.g) and np.array_equal(a.edges, b.edges)

    def test_conditional_independence_chi2(self):
        # re-roll edges on fixed positions; cell counts must match Bernoulli margins
        rng = SeededRng(10).generator()
        g = np.array([[0.9], [0.5], [0.2]])
        r = np.array([[0.8], [0.6], [0.3]])
        p = g @ r.T
        reps = 4000
        counts = np.zeros((3, 3))
        for _ in range(reps):
            edges = roll_perennial_edges(g, r, rng, include_self_loops=True)
            for s, t in edges:
                counts[s, t] += 1
        stat = float(np.sum((counts - reps * p) ** 2 / (reps * p * (1 - p))))
        assert stat < stats.chi2.ppf(0.99, df=9)


class TestEphemeral:
    def test_empty(self):
        model = Product(UniformBall(1e-9, 1), UniformBall(1e-9, 1))
        g = sample_ephemeral(model, SeededRng(11))
        assert g.n_nodes == 0 and g.pairing is not None and len(g.pairing) == 0

    def test_mean_edges(self, uniform_model):
        counts = [sample_ephemeral(uniform_model, SeededRng(12, k)).n_edges
                  for k in range(10_000)]
        mean, se = mean_and_se(counts)
        assert abs(mean - 3.0) <= 3 * se

    def test_component_structure(self, uniform_model):
        # ignoring self-loops, every connected component has at most two nodes
        g = sample_ephemeral(Product(UniformBall(10.0, 1), UniformBall(10.0, 1)),
                             SeededRng(13))
        assert g.n_nodes == 2 * len(g.pairing)
        partner = {}
        for a, b in g.pairing:
            partner[a] = b
            partner[b] = a
        for s, t in g.edges:
            assert t == s or t == partner[s]


class TestLifetime:
    def test_long_lifetimes_match_perennial_with_loops(self, uniform_model):
        g = sample_lifetime(Product(UniformBall(10.0, 1), UniformBall(10.0, 1)),
                            eta=1000.0, window=1.0, rng=SeededRng(14))
        n = g.n_nodes
        start = g.birth
        end = g.birth + g.lifetime
        overlap = (start[None, :] < end[:, None]) & (start[:, None] < end[None, :])
        frac = overlap[~np.eye(n, dtype=bool)].mean()
        assert frac > 0.999

    def test_short_lifetimes_rarely_overlap(self):
        model = Product(UniformBall(12.0, 1), UniformBall(12.0, 1))
        g = sample_lifetime(model, eta=1e-3, window=1.0, rng=SeededRng(15))
        n = g.n_nodes
        start, end = g.birth, g.birth + g.lifetime
        overlap = (start[None, :] < end[:, None]) & (start[:, None] < end[None, :])
        frac = overlap[~np.eye(n, dtype=bool)].mean()
        assert frac < 0.002

    def test_unit_ratio_overlap_fraction(self):
        gen = SeededRng(16).generator()
        n = 10_000
        t = gen.random((n, 2))
        tau = gen.exponential(1.0, size=(n, 2))
        hit = (np.maximum(t[:, 0], t[:, 1])
               < np.minimum(t[:, 0] + tau[:, 0], t[:, 1] + tau[:, 1]))
        p_hat = hit.mean()
        se = math.sqrt(p_hat * (1 - p_hat) / n)
        assert abs(p_hat - 0.7357588823) <= 3 * se

    def test_interpolation_against_closed_form(self):
        # smoothed per-pair overlap probabilities from sampler-style draws;
        # 1e7 pairs resolve the 1% band at the extreme ratios
        n = 10_000_000
        gen = SeededRng(17).generator()
        t = gen.random((n, 2))
        for ratio in (0.01, 0.1, 1.0, 10.0, 100.0):
            gap = np.abs(t[:, 0] - t[:, 1])
            p_hat = float(np.exp(-gap / ratio).mean())
            closed = overlap_probability(ratio, 1.0)
            assert abs(p_hat - closed) / closed < 0.01

    def test_self_pairs_flag(self, uniform_model):
        with_self = sample_lifetime(uniform_model, 1.0, 1.0, SeededRng(18))
        without = sample_lifetime(uniform_model, 1.0, 1.0, SeededRng(18),
                                  include_self_pairs=False)
        assert not any(s == t for s, t in without.edges)
        assert with_self.rule_params["include_self_pairs"]

    def test_edges_respect_overlap(self, uniform_model):
        g = sample_lifetime(Product(UniformBall(8.0, 1), UniformBall(8.0, 1)),
                            0.5, 1.0, SeededRng(19))
        start, end = g.birth, g.birth + g.lifetime
        for s, t in g.edges:
            assert max(start[s], start[t]) < min(end[s], end[t])


class TestAsymmetric:
    def test_mean_edges(self, uniform_model):
        counts = [sample_asymmetric_ephemeral(uniform_model, uniform_model, 6.0,
                                              SeededRng(20, k)).n_edges
                  for k in range(10_000)]
        mean, se = mean_and_se(counts)
        assert abs(mean - 0.75) <= 3 * se

    def test_zero_mass_error(self, uniform_model):
        with pytest.raises(ValueError):
            sample_asymmetric_ephemeral(uniform_model, uniform_model, 0.0, SeededRng(21))

    def test_pair_structure(self, uniform_model):
        g = sample_asymmetric_ephemeral(uniform_model, uniform_model, 50.0, SeededRng(22))
        m = len(g.pairing)
        assert g.n_nodes == 2 * m
        for s, t in g.edges:
            assert t == s + m  # source half connects to its own target


class TestObserved:
    def test_empty(self):
        model = Product(UniformBall(1e-9, 1), UniformBall(1e-9, 1))
        g = observed_subgraph(sample_perennial(model, SeededRng(23)))
        assert g.n_nodes == 0

    def test_isolated_and_self_loop(self):
        from idpg.sampling import SampledGraph
        g = SampledGraph(np.array([[0.5], [0.6]]), np.array([[0.5], [0.6]]),
                         np.array([[1, 1]]), "perennial", include_self_loops=True)
        obs = observed_subgraph(g)
        assert obs.n_nodes == 1 and obs.n_edges == 1
        assert obs.edges[0].tolist() == [0, 0]

    def test_selection_bias_direction(self):
        model = Product(UniformBall(3.0, 1), UniformBall(2.0, 1))
        diffs = []
        for k in range(1000):
            g = sample_perennial(model, SeededRng(24, k))
            if g.n_nodes == 0:
                continue
            obs = observed_subgraph(g)
            if obs.n_nodes == 0 or obs.n_nodes == g.n_nodes:
                continue
            diffs.append(obs.g.mean() - g.g.mean())
        assert np.mean(diffs) > 0  # observed nodes skew toward stronger propensities


class TestSerialization:
    def test_round_trip(self, uniform_model, tmp_path):
        g = sample_lifetime(uniform_model, 1.0, 1.0, SeededRng(25))
        path = str(tmp_path / "graph.json")
        save_graph(g, path)
        back = load_graph(path)
        assert np.allclose(back.g, g.g)
        assert np.array_equal(back.edges, g.edges)
        assert back.rule == "lifetime"
        assert np.allclose(back.birth, g.birth)

    def test_edge_list(self, uniform_model, tmp_path):
        g = sample_perennial(Product(UniformBall(5.0, 1), UniformBall(5.0, 1)),
                             SeededRng(26))
        path = str(tmp_path / "edges.txt")
        write_edge_list(g, path)
        lines = open(path).read().splitlines()
        assert len(lines) == g.n_edges
        if lines:
            s, t = lines[0].split()
            assert [int(s), int(t)] == g.edges[0].tolist()

    def test_duplicate_edges_rejected(self):
        from idpg.sampling import SampledGraph
        with pytest.raises(ValueError):
            SampledGraph(np.array([[0.5]]), np.array([[0.5]]),
                         np.array([[0, 0], [0, 0]]), "perennial")
