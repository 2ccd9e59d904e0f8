import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cnsl.dataset import toy_cross_network
from cnsl.diffusion import (DiffusionConfig, coupled_runs, cross_network_diffuse, generate_dataset,
                            monte_carlo_probs, seed_count, simulate_once, simulate_runs, substream)
from cnsl.graph import BridgeLinks, CrossNetwork, Network

from oracles import ic_enumeration, reachable


def path(n):
    return Network(n, [(i, i + 1) for i in range(n - 1)])


def test_ic_matches_enumeration_on_a_triangle_with_tail():
    net = Network(4, [(0, 1), (1, 2), (0, 2), (2, 3)])
    cfg = DiffusionConfig("IC", ic_edge_prob=0.4, mc_samples=40000, rng_seed=1)
    seeds = np.array([1.0, 0, 0, 0])
    exact = ic_enumeration(4, net.edges.tolist(), [0], 0.4)
    assert np.allclose(monte_carlo_probs(net, seeds, cfg), exact, atol=0.015)


def test_ic_live_edge_run_equals_reachability():
    net = Network(6, [(0, 1), (1, 2), (3, 4), (4, 5), (2, 3)])
    rng = substream(0, 1)
    coins = rng.random((50, net.num_edges))
    from cnsl.diffusion import RunNoise
    cfg = DiffusionConfig("IC", ic_edge_prob=0.5)
    init = np.zeros((50, 6), dtype=bool)
    init[:, 0] = True
    out = simulate_runs(net, init, cfg, noise=RunNoise(coins=coins))
    for r in range(50):
        live = [tuple(e) for e, c in zip(net.edges.tolist(), coins[r]) if c < 0.5]
        assert set(np.flatnonzero(out[r])) == reachable(6, live, [0])


def test_ic_probability_extremes():
    net = path(5)
    seeds = np.array([1.0, 0, 0, 0, 0])
    assert monte_carlo_probs(net, seeds, DiffusionConfig("IC", ic_edge_prob=1.0, mc_samples=10)).tolist() == [1] * 5
    assert monte_carlo_probs(net, seeds, DiffusionConfig("IC", ic_edge_prob=0.0, mc_samples=10)).tolist() == [1, 0, 0, 0, 0]


def test_lt_fixed_threshold_on_a_path():
    # uniform 1/in-degree weights: an interior path node needs half its neighbors active
    cfg = DiffusionConfig("LT", lt_threshold=0.5, mc_samples=3, max_steps=50)
    y = monte_carlo_probs(path(6), np.array([1.0, 0, 0, 0, 0, 0]), cfg)
    assert y.tolist() == [1.0] * 6
    cfg = DiffusionConfig("LT", lt_threshold=0.6, mc_samples=3, max_steps=50)
    y = monte_carlo_probs(path(6), np.array([1.0, 0, 0, 0, 0, 0]), cfg)
    assert y.tolist() == [1.0, 0, 0, 0, 0, 0]


def test_lt_single_neighbor_is_always_activated():
    # a leaf's only neighbor carries weight 1 >= any threshold in (0, 1]
    net = Network(2, [(0, 1)])
    y = monte_carlo_probs(net, np.array([1.0, 0]), DiffusionConfig("LT", mc_samples=500))
    assert y.tolist() == [1.0, 1.0]


def test_lt_star_center_activation_probability():
    # center with 4 leaves, 1 active leaf -> pressure 1/4, P(theta <= 1/4) = 1/4
    net = Network(5, [(0, i) for i in range(1, 5)])
    cfg = DiffusionConfig("LT", mc_samples=40000, max_steps=1, rng_seed=3)
    y = monte_carlo_probs(net, np.array([0, 1.0, 0, 0, 0]), cfg)
    assert y[0] == pytest.approx(0.25, abs=0.01)


def test_sis_observation_keeps_seeds():
    net = path(4)
    cfg = DiffusionConfig("SIS", sis_infect_prob=0.0, sis_recover_prob=1.0, mc_samples=20)
    y = monte_carlo_probs(net, np.array([0, 1.0, 0, 0]), cfg)
    assert y.tolist() == [0, 1, 0, 0]


def test_simulate_once_is_seed_superset():
    net = path(8)
    rng = np.random.default_rng(0)
    for model in ("IC", "LT", "SIS"):
        x = np.zeros(8)
        x[[2, 5]] = 1
        out = simulate_once(net, x, DiffusionConfig(model), rng)
        assert out[[2, 5]].all()


def test_empty_seed_set_spreads_nowhere():
    for model in ("IC", "LT", "SIS"):
        assert monte_carlo_probs(path(5), np.zeros(5), DiffusionConfig(model, mc_samples=50)).sum() == 0


def test_config_validation():
    with pytest.raises(ValueError, match="unknown diffusion model"):
        DiffusionConfig("XY")
    with pytest.raises(ValueError, match="ic_edge_prob"):
        DiffusionConfig("IC", ic_edge_prob=1.5)
    with pytest.raises(ValueError, match="mc_samples"):
        DiffusionConfig("IC", mc_samples=0)


def test_seed_count_rounds_up():
    assert seed_count(1204, 0.1) == 121
    assert seed_count(50, 0.1) == 5
    assert seed_count(3, 0.1) == 1


def test_mc_results_do_not_depend_on_chunking():
    net = path(10)
    cfg = DiffusionConfig("IC", ic_edge_prob=0.5, mc_samples=3000, rng_seed=4)
    a = monte_carlo_probs(net, np.eye(10)[0], cfg, stream=(1,))
    b = monte_carlo_probs(net, np.eye(10)[0], cfg, stream=(1,))
    assert np.array_equal(a, b)


def test_dataset_independent_of_worker_count():
    cross = toy_cross_network(0, 12, 15)
    cfg = DiffusionConfig("IC", ic_edge_prob=0.3, mc_samples=50)
    one = generate_dataset(cross, 4, 0.2, cfg, cfg, rng_seed=5, workers=1)
    two = generate_dataset(cross, 4, 0.2, cfg, cfg, rng_seed=5, workers=2)
    for a, b in zip(one, two):
        for part in ("x_s", "y_s", "x_t", "y_t"):
            assert np.array_equal(getattr(a, part), getattr(b, part))


def test_cross_network_sample_invariants():
    cross = toy_cross_network(1, 20, 30)
    cfg = DiffusionConfig("IC", ic_edge_prob=0.3, mc_samples=100)
    x = np.zeros(20)
    x[:3] = 1
    s = cross_network_diffuse(cross, x, cfg, cfg)
    assert np.all(s.y_s[:3] == 1)
    assert np.array_equal(s.x_t, cross.transfer(s.y_s))
    assert np.all((s.y_t >= 0) & (s.y_t <= 1))


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(["IC", "LT"]))
def test_coupled_runs_are_monotone(seed, model):
    rng = np.random.default_rng(seed)
    n_s, n_t = 15, 18
    es = {tuple(sorted(rng.choice(n_s, 2, replace=False))) for _ in range(25)}
    et = {tuple(sorted(rng.choice(n_t, 2, replace=False))) for _ in range(30)}
    cross = CrossNetwork(Network(n_s, sorted(es)), Network(n_t, sorted(et)),
                         BridgeLinks([(i, i) for i in range(n_s)]))
    x = np.zeros(n_s)
    x[rng.choice(n_s, 2, replace=False)] = 1
    extra = [i for i in rng.choice(n_s, 4, replace=False) if x[i] == 0]
    cfg = DiffusionConfig(model, ic_edge_prob=0.3, mc_samples=64, rng_seed=seed)
    ss, sb, ts, tb = coupled_runs(cross, x, extra, cfg, cfg)
    assert np.all(sb >= ss) and np.all(tb >= ts)


def test_coupling_rejects_sis_and_overlap():
    cross = toy_cross_network(0, 10, 12)
    x = np.eye(10)[0]
    with pytest.raises(ValueError, match="IC and LT"):
        coupled_runs(cross, x, [1], DiffusionConfig("SIS"), DiffusionConfig("IC"))
    with pytest.raises(ValueError, match="overlap"):
        coupled_runs(cross, x, [0], DiffusionConfig("IC"), DiffusionConfig("IC"))


def test_lt2lt_cross_platform_scale():
    # published scale: about 120 seeds, 354 infected source and 482 infected target nodes
    from cnsl.dataset import cross_platform_like
    cfg = DiffusionConfig("LT", mc_samples=50)
    data = generate_dataset(cross_platform_like(0), 4, 0.1, cfg, cfg, rng_seed=0, workers=2)
    seeds = np.mean([s.x_s.sum() for s in data])
    source = np.mean([s.y_s.sum() for s in data])
    target = np.mean([s.y_t.sum() for s in data])
    assert abs(seeds - 120) <= 2
    assert abs(source - 354) / 354 <= 0.25
    assert abs(target - 482) / 482 <= 0.25
