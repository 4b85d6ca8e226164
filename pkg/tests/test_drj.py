import math
from dataclasses import replace

import numpy as np
import pytest
from scipy import stats

from gwishart import drj
from gwishart.drj import (
    DrjChainState,
    DrjConfig,
    DrjSummary,
    drj_step,
    exact_graph_posterior,
    merge_summaries,
    propose_move,
    run_drj,
    total_variation,
)
from gwishart.graph import Graph, all_graphs, from_edge_list
from gwishart.io import compute_scatter, generate_dataset
from gwishart.samplers import GWishartParams, log_ig_decomposable, posterior_params, rng_stream, sample_gwishart

PRIOR3 = GWishartParams(3.0, np.eye(3))
PATH_K = np.array([[2.0, 0.8, 0.0], [0.8, 2.0, 0.8], [0.0, 0.8, 2.0]])


def path_problem(n=30, seed=7):
    return compute_scatter(generate_dataset(PATH_K, n, rng_stream(seed)), center=False)


# -- configuration -------------------------------------------------------------

@pytest.mark.parametrize(
    "kwargs",
    [dict(sigma_g=0), dict(iters=10, burnin=10), dict(alpha_variant="other"), dict(edge_prior=1.0),
     dict(chains=0)],
)
def test_config_rejects_bad_values(kwargs):
    with pytest.raises(ValueError):
        DrjConfig(**kwargs)


# -- proposals -----------------------------------------------------------------

def test_proposals_are_uniform_over_pairs():
    rng = rng_stream(1)
    g = from_edge_list(4, [(1, 2), (3, 4)])
    n = 100_000
    counts = {}
    for _ in range(n):
        edge, direction = propose_move(g, rng)
        assert direction == ("delete" if g.has_edge(*edge) else "add")
        assert edge[0] < edge[1]
        counts[edge] = counts.get(edge, 0) + 1
    assert len(counts) == 6
    se = math.sqrt(n * (1 / 6) * (5 / 6))
    assert all(abs(c - n / 6) < 3 * se for c in counts.values())


def test_proposal_direction_on_extreme_graphs():
    rng = rng_stream(2)
    assert all(propose_move(Graph.complete(4), rng)[1] == "delete" for _ in range(200))
    assert all(propose_move(Graph.empty(4), rng)[1] == "add" for _ in range(200))
    with pytest.raises(ValueError):
        propose_move(Graph.empty(1), rng)


# -- single steps --------------------------------------------------------------

def test_step_invariants():
    sc = path_problem()
    post = posterior_params(PRIOR3, sc.u, sc.n)
    cfg = DrjConfig(debug=True)
    state = DrjChainState(Graph.empty(3), np.eye(3), rng_stream(3))
    for _ in range(300):
        old = state.g
        state, prop, accepted = drj_step(state, PRIOR3, post, cfg)
        assert prop.direction == ("delete" if old.has_edge(*prop.edge) else "add")
        expected_g = Graph(3, old.edges ^ {prop.edge}) if accepted else old
        assert state.g == expected_g
        np.linalg.cholesky(state.k)
        off = ~state.g.adjacency & ~np.eye(3, dtype=bool)
        assert np.abs(state.k[off]).max(initial=0) < 1e-10
        # debug mode checks the factor diagonals inside the step; determinants follow
        assert np.linalg.slogdet(prop.k0)[1] == pytest.approx(np.linalg.slogdet(prop.k0_tilde)[1], abs=1e-8)


class _ScriptedRng:
    """Stands in for a Generator inside one batch step: fixed normals and uniforms."""

    def __init__(self, normals, uniforms):
        self.normals = np.asarray(normals, dtype=float)
        self.uniforms = np.asarray(uniforms, dtype=float)

    def standard_normal(self, shape):
        return self.normals.reshape(shape)

    def random(self, n):
        return self.uniforms[:n]


@pytest.mark.parametrize("variant", ["derived", "as-printed"])
def test_addition_and_deletion_are_reciprocal(monkeypatch, variant):
    sc = path_problem()
    post = posterior_params(PRIOR3, sc.u, sc.n)
    cfg = DrjConfig(alpha_variant=variant)
    rng = rng_stream(4)
    g = from_edge_list(3, [(1, 2)])
    g_tilde = from_edge_list(3, [(1, 2), (2, 3)])
    l, m = np.array([1]), np.array([2])
    k = sample_gwishart(g, post, rng=rng)
    k0_tilde = sample_gwishart(g_tilde, PRIOR3, rng=rng)

    queue = []
    monkeypatch.setattr(drj, "sample_gwishart_masked", lambda adj, params, rng, tol: queue.pop(0)[None])

    queue[:] = [k, k0_tilde]
    _, fwd = drj._batch_step(g.adjacency[None].copy(), l, m, PRIOR3, post, cfg,
                             _ScriptedRng([0.7, 0.0], [0.5]))
    # the reverse move starts from the proposed state and draws the forward move's leftovers
    z_back = (fwd["gamma_tilde"][0] - fwd["vartheta_tilde"][0]) / cfg.sigma_g
    queue[:] = [fwd["k_tilde"][0], fwd["k0"][0]]
    _, back = drj._batch_step(g_tilde.adjacency[None].copy(), l, m, PRIOR3, post, cfg,
                              _ScriptedRng([0.0, z_back], [0.5]))
    np.testing.assert_allclose(back["k_tilde"][0], k, atol=1e-9)
    np.testing.assert_allclose(back["k0"][0], k0_tilde, atol=1e-9)
    if variant == "derived":
        assert back["log_alpha"][0] == pytest.approx(-fwd["log_alpha"][0], abs=1e-8)


def test_edge_prior_shifts_log_alpha(monkeypatch):
    sc = path_problem()
    post = posterior_params(PRIOR3, sc.u, sc.n)
    rng = rng_stream(5)
    g = Graph.empty(3)
    k = sample_gwishart(g, post, rng=rng)
    k0 = sample_gwishart(from_edge_list(3, [(1, 3)]), PRIOR3, rng=rng)
    out = []
    for beta in (None, 0.2):
        queue = [k, k0]
        monkeypatch.setattr(drj, "sample_gwishart_masked", lambda adj, params, rng, tol: queue.pop(0)[None])
        _, rec = drj._batch_step(g.adjacency[None].copy(), np.array([0]), np.array([2]), PRIOR3, post,
                                 DrjConfig(edge_prior=beta), _ScriptedRng([0.3, 0.0], [0.5]))
        out.append(rec["log_alpha"][0])
    assert out[1] - out[0] == pytest.approx(math.log(0.2 / 0.8))


# -- exact oracle ---------------------------------------------------------------

def test_exact_posterior_uniform_without_data():
    for p in (2, 3):
        post = exact_graph_posterior(np.zeros((p, p)), 0, GWishartParams(3.0, np.eye(p)))
        size = 2 ** (p * (p - 1) // 2)
        assert len(post) == size
        assert all(v == pytest.approx(1 / size) for v in post.values())


def test_exact_posterior_two_node_odds():
    u = np.array([[3.0, 1.4], [1.4, 2.0]])
    n = 5
    prior = GWishartParams(3.0, np.eye(2))
    post = exact_graph_posterior(u, n, prior)
    p_edge = posterior_params(prior, u, n)
    w_edge = log_ig_decomposable(Graph.complete(2), p_edge) - math.log(8 * math.pi)
    w_empty = log_ig_decomposable(Graph.empty(2), p_edge) - math.log(2 * math.pi)
    odds = math.exp(w_edge - w_empty)
    assert post[Graph.complete(2)] == pytest.approx(odds / (1 + odds))


def test_exact_posterior_prefers_generating_path():
    sc = path_problem()
    post = exact_graph_posterior(sc.u, sc.n, PRIOR3)
    best = max(post, key=post.get)
    assert best == from_edge_list(3, [(1, 2), (2, 3)])
    assert sum(post.values()) == pytest.approx(1.0)


def test_exact_posterior_refuses_four_nodes():
    with pytest.raises(ValueError, match="non-decomposable"):
        exact_graph_posterior(np.zeros((4, 4)), 0, GWishartParams(3.0, np.eye(4)))


def test_exact_posterior_edge_prior():
    post = exact_graph_posterior(np.zeros((3, 3)), 0, PRIOR3, edge_prior=0.25)
    for g, v in post.items():
        assert v == pytest.approx(0.25 ** g.n_edges * 0.75 ** (3 - g.n_edges))


def test_total_variation():
    a = {Graph.empty(2): 0.5, Graph.complete(2): 0.5}
    b = {Graph.empty(2): 0.2, Graph.complete(2): 0.8}
    assert total_variation(a, b) == pytest.approx(0.3)
    assert total_variation(a, a) == 0


# -- chains ---------------------------------------------------------------------

def test_null_data_chain_is_uniform():
    cfg = DrjConfig(iters=220, burnin=20, seed=6, chains=1000)
    summ = run_drj(np.zeros((3, 3)), 0, PRIOR3, cfg=cfg)
    counts = np.array([summ.graph_freq.get(g, 0.0) for g in all_graphs(3)]) * summ.n_recorded
    assert stats.chisquare(counts).pvalue > 1e-3
    off = summ.edge_prob[np.triu_indices(3, 1)]
    assert np.all(np.abs(off - 0.5) < 0.01)


def test_chain_matches_exact_posterior_on_small_problem():
    sc = path_problem()
    exact = exact_graph_posterior(sc.u, sc.n, PRIOR3)
    summ = run_drj(sc.u, sc.n, PRIOR3, cfg=DrjConfig(iters=250, burnin=50, seed=8, chains=1000))
    assert total_variation(exact, summ.graph_freq) < 0.03


def test_summary_shapes_and_ranges():
    sc = path_problem()
    summ = run_drj(sc.u, sc.n, PRIOR3, cfg=DrjConfig(iters=60, burnin=10, seed=9, chains=20))
    assert summ.n_recorded == 20 * 50
    np.testing.assert_array_equal(summ.edge_prob, summ.edge_prob.T)
    assert np.all(np.diag(summ.edge_prob) == 1)
    assert np.all((summ.edge_prob >= 0) & (summ.edge_prob <= 1))
    assert 0 <= summ.accept_rate <= 1
    assert summ.per_chain_accept.shape == (20,)
    assert sum(summ.graph_freq.values()) == pytest.approx(1.0)
    np.linalg.cholesky(summ.mean_k)


def test_runs_are_reproducible():
    sc = path_problem()
    cfg = DrjConfig(iters=40, burnin=5, seed=10, chains=8)
    a = run_drj(sc.u, sc.n, PRIOR3, cfg=cfg)
    b = run_drj(sc.u, sc.n, PRIOR3, cfg=cfg)
    np.testing.assert_array_equal(a.edge_prob, b.edge_prob)
    np.testing.assert_array_equal(a.mean_k, b.mean_k)
    c = run_drj(sc.u, sc.n, PRIOR3, cfg=replace(cfg, seed=11))
    assert not np.array_equal(a.mean_k, c.mean_k)


def test_merge_weights_by_recorded_count():
    g1, g2 = Graph.empty(2), Graph.complete(2)
    a = DrjSummary(np.array([[1, 0.2], [0.2, 1]]), 0.1, np.eye(2), 100, 10, 100, {g1: 0.8, g2: 0.2})
    b = DrjSummary(np.array([[1, 0.6], [0.6, 1]]), 0.4, 3 * np.eye(2), 300, 120, 300, {g1: 0.4, g2: 0.6})
    m = merge_summaries([a, b])
    assert m.n_recorded == 400
    assert m.edge_prob[0, 1] == pytest.approx(0.5)
    assert m.accept_rate == pytest.approx(130 / 400)
    np.testing.assert_allclose(m.mean_k, 2.5 * np.eye(2))
    assert m.graph_freq[g2] == pytest.approx(0.5)
    m2 = merge_summaries([b, a])
    np.testing.assert_allclose(m2.edge_prob, m.edge_prob)
