"""Stochastic diffusion simulators (LT, IC, SIS) and the cross-network forward process.

All simulators are vectorized over Monte-Carlo runs: state is a boolean
``(runs, nodes)`` matrix and every run draws from its own slice of the
random stream. IC is simulated in its live-edge form (one coin per edge per
run, reachability from the initial actives), which has the same outcome
distribution as the cascade and lets two seed sets share coins exactly.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np
import scipy.sparse as sp

from .graph import CrossNetwork, Network, bridge_transfer

MODELS = ("LT", "IC", "SIS")
CHUNK = 2048


def substream(seed: int, *keys: int) -> np.random.Generator:
    """Independent generator for ``(seed, *keys)``; stable across processes."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, keys)]))


@dataclass(frozen=True)
class DiffusionConfig:
    model: str = "IC"
    ic_edge_prob: float = 0.1
    lt_threshold: float | None = None  # None -> U(0,1] per node per run
    sis_infect_prob: float = 0.1
    sis_recover_prob: float = 0.05
    max_steps: int = 20
    mc_samples: int = 100
    rng_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "model", self.model.upper())
        if self.model not in MODELS:
            raise ValueError(f"unknown diffusion model {self.model!r}; expected one of {MODELS}")
        for key in ("ic_edge_prob", "sis_infect_prob", "sis_recover_prob"):
            p = getattr(self, key)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{key} must lie in [0, 1], got {p}")
        if self.lt_threshold is not None and not 0.0 <= self.lt_threshold <= 1.0:
            raise ValueError(f"lt_threshold must lie in [0, 1], got {self.lt_threshold}")
        if self.mc_samples < 1:
            raise ValueError(f"mc_samples must be >= 1, got {self.mc_samples}")
        if self.max_steps < 1:
            raise ValueError(f"max_steps must be >= 1, got {self.max_steps}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "DiffusionConfig":
        return cls(**d)


@dataclass
class DiffusionSample:
    x_s: np.ndarray
    y_s: np.ndarray
    x_t: np.ndarray
    y_t: np.ndarray


# ------------------------------------------------------------- randomness


@dataclass
class RunNoise:
    """Per-run random draws for one network; sharing it couples two simulations."""
    coins: np.ndarray | None = None       # (runs, edges) uniforms, IC
    thresholds: np.ndarray | None = None  # (runs, nodes), LT
    seeding: np.ndarray | None = None     # (runs, nodes) uniforms for Bernoulli initial actives


def draw_noise(net: Network, cfg: DiffusionConfig, runs: int, rng: np.random.Generator,
               seeding: bool = False) -> RunNoise:
    noise = RunNoise()
    if seeding:
        noise.seeding = rng.random((runs, net.num_nodes))
    if cfg.model == "IC":
        n_coins = net.num_edges
        noise.coins = rng.random((runs, n_coins))
    elif cfg.model == "LT":
        if cfg.lt_threshold is None:
            noise.thresholds = 1.0 - rng.random((runs, net.num_nodes))
        else:
            noise.thresholds = np.full((runs, net.num_nodes), float(cfg.lt_threshold))
    return noise


# ------------------------------------------------------------- simulators


def _incidence(net: Network):
    e = net.num_edges
    rows = np.arange(e)
    n = net.num_nodes
    mu = sp.csr_matrix((np.ones(e), (rows, net.edges[:, 0])), shape=(e, n))
    mv = sp.csr_matrix((np.ones(e), (rows, net.edges[:, 1])), shape=(e, n))
    return mu, mv


def _run_ic(net: Network, active: np.ndarray, coins: np.ndarray, p: float) -> np.ndarray:
    if net.num_edges == 0 or p == 0.0:
        return active
    live = coins < p
    u, v = net.edges[:, 0], net.edges[:, 1]
    mu, mv = _incidence(net)
    active = active.copy()
    while True:
        hit = (active[:, u] & live).astype(np.float32) @ mv
        if not net.directed:
            hit = hit + (active[:, v] & live).astype(np.float32) @ mu
        new = active | (np.asarray(hit) > 0)
        if (new == active).all():
            return new
        active = new


def _lt_weights(net: Network) -> sp.csr_matrix:
    deg = net.in_degree
    inv = np.divide(1.0, deg, out=np.zeros_like(deg, dtype=float), where=deg > 0)
    return sp.diags(inv) @ net.adjacency


def _run_lt(net: Network, active: np.ndarray, thresholds: np.ndarray, max_steps: int) -> np.ndarray:
    w_t = _lt_weights(net).T.tocsr()
    active = active.copy()
    for _ in range(max_steps):
        pressure = np.asarray(active.astype(np.float64) @ w_t)
        # small slack so that e.g. 1/2 active against threshold 0.5 activates despite rounding
        new = active | ((pressure > 0) & (pressure >= thresholds - 1e-12))
        if (new == active).all():
            break
        active = new
    return active


def _run_sis(net: Network, active: np.ndarray, cfg: DiffusionConfig, rng: np.random.Generator) -> np.ndarray:
    seeds = active.copy()
    a_t = net.adjacency.T.tocsr()
    infected = active.copy()
    beta, delta = cfg.sis_infect_prob, cfg.sis_recover_prob
    for _ in range(cfg.max_steps):
        k = np.asarray(infected.astype(np.float64) @ a_t)
        p_inf = 1.0 - (1.0 - beta) ** k
        u_inf = rng.random(infected.shape)
        u_rec = rng.random(infected.shape)
        infected = np.where(infected, u_rec >= delta, u_inf < p_inf)
    return infected | seeds


def simulate_runs(net: Network, initial: np.ndarray, cfg: DiffusionConfig,
                  rng: np.random.Generator | None = None, noise: RunNoise | None = None) -> np.ndarray:
    """Run ``initial.shape[0]`` independent diffusions; returns final active matrix."""
    initial = np.atleast_2d(np.asarray(initial, dtype=bool))
    if initial.shape[1] != net.num_nodes:
        raise ValueError(f"seed vector has {initial.shape[1]} entries for a {net.num_nodes}-node network")
    runs = initial.shape[0]
    if cfg.model == "SIS":
        if rng is None:
            raise ValueError("SIS simulation needs an rng")
        return _run_sis(net, initial, cfg, rng)
    if noise is None:
        if rng is None:
            raise ValueError("simulation needs an rng or pre-drawn noise")
        noise = draw_noise(net, cfg, runs, rng)
    if cfg.model == "IC":
        return _run_ic(net, initial, noise.coins, cfg.ic_edge_prob)
    return _run_lt(net, initial, noise.thresholds, cfg.max_steps)


def simulate_once(net: Network, seeds, cfg: DiffusionConfig, rng: np.random.Generator) -> np.ndarray:
    """One realized infection set as a boolean vector."""
    seeds = np.asarray(seeds)
    if seeds.shape != (net.num_nodes,):
        raise ValueError(f"seed vector has shape {seeds.shape} for a {net.num_nodes}-node network")
    return simulate_runs(net, seeds[None, :] > 0, cfg, rng)[0]


def _mc_frequency(net: Network, cfg: DiffusionConfig, seed_key: tuple, initial_probs=None,
                  seeds=None) -> np.ndarray:
    total = np.zeros(net.num_nodes)
    n_chunks = math.ceil(cfg.mc_samples / CHUNK)
    for c in range(n_chunks):
        runs = min(CHUNK, cfg.mc_samples - c * CHUNK)
        rng = substream(*seed_key, c)
        if initial_probs is not None:
            init = rng.random((runs, net.num_nodes)) < initial_probs
        else:
            init = np.broadcast_to(seeds > 0, (runs, net.num_nodes))
        total += simulate_runs(net, init, cfg, rng).sum(axis=0)
    return total / cfg.mc_samples


def monte_carlo_probs(net: Network, seeds, cfg: DiffusionConfig, stream: tuple = ()) -> np.ndarray:
    """Per-node infection frequency over ``cfg.mc_samples`` runs.

    Runs are drawn in fixed-size chunks, each from its own substream of
    ``(cfg.rng_seed, *stream, chunk)``, so results do not depend on scheduling.
    """
    seeds = np.asarray(seeds, dtype=float)
    if seeds.shape != (net.num_nodes,):
        raise ValueError(f"seed vector has shape {seeds.shape} for a {net.num_nodes}-node network")
    return _mc_frequency(net, cfg, (cfg.rng_seed, *stream), seeds=seeds)


def bernoulli_seeded_probs(net: Network, init_probs, cfg: DiffusionConfig, stream: tuple = ()) -> np.ndarray:
    """Like :func:`monte_carlo_probs` but each run draws its initial actives as Bernoulli(init_probs)."""
    init_probs = np.asarray(init_probs, dtype=float)
    if init_probs.shape != (net.num_nodes,):
        raise ValueError(f"initial probabilities have shape {init_probs.shape} for {net.num_nodes} nodes")
    return _mc_frequency(net, cfg, (cfg.rng_seed, *stream), initial_probs=init_probs)


def cross_network_diffuse(cross: CrossNetwork, x_s, cfg_s: DiffusionConfig, cfg_t: DiffusionConfig,
                          stream: tuple = ()) -> DiffusionSample:
    x_s = np.asarray(x_s, dtype=float)
    if x_s.shape != (cross.n_source,):
        raise ValueError(f"x_s has shape {x_s.shape} for a {cross.n_source}-node source network")
    y_s = monte_carlo_probs(cross.source, x_s, cfg_s, stream=(*stream, 1))
    x_t = bridge_transfer(y_s, cross.bridges, cross.n_target)
    y_t = bernoulli_seeded_probs(cross.target, x_t, cfg_t, stream=(*stream, 2))
    return DiffusionSample(x_s, y_s, x_t, y_t)


def seed_count(n: int, seed_fraction: float) -> int:
    return max(1, math.ceil(seed_fraction * n - 1e-9))


def random_seed_vector(n: int, m: int, rng: np.random.Generator) -> np.ndarray:
    x = np.zeros(n)
    x[rng.choice(n, size=m, replace=False)] = 1.0
    return x


def _one_sample(args):
    cross, i, n_seeds, cfg_s, cfg_t, rng_seed = args
    rng = substream(rng_seed, i, 0)
    x_s = random_seed_vector(cross.n_source, n_seeds, rng)
    s = replace_seeds(cfg_s, rng_seed)
    t = replace_seeds(cfg_t, rng_seed)
    return cross_network_diffuse(cross, x_s, s, t, stream=(i,))


def replace_seeds(cfg: DiffusionConfig, seed: int) -> DiffusionConfig:
    d = cfg.to_dict()
    d["rng_seed"] = int(seed)
    return DiffusionConfig(**d)


def generate_dataset(cross: CrossNetwork, n_samples: int, seed_fraction: float,
                     cfg_s: DiffusionConfig, cfg_t: DiffusionConfig, rng_seed: int,
                     workers: int = 1) -> list[DiffusionSample]:
    """Draw ``n_samples`` random seed sets and diffuse each across ``cross``.

    Sample ``i`` depends only on ``(rng_seed, i)``, so the output is the same
    for any ``workers``.
    """
    if not 0.0 < seed_fraction < 1.0:
        raise ValueError(f"seed_fraction must lie in (0, 1), got {seed_fraction}")
    n_seeds = seed_count(cross.n_source, seed_fraction)
    jobs = [(cross, i, n_seeds, cfg_s, cfg_t, rng_seed) for i in range(n_samples)]
    if workers > 1 and n_samples > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_one_sample, jobs))
    return [_one_sample(j) for j in jobs]


# ------------------------------------------------------------- coupling


def coupled_runs(cross: CrossNetwork, x_small, extra, cfg_s: DiffusionConfig, cfg_t: DiffusionConfig,
                 runs: int | None = None, rng_seed: int | None = None):
    """Source and target outcomes for a seed set and its superset under shared randomness.

    Returns ``(src_small, src_big, tgt_small, tgt_big)`` boolean run matrices.
    Source runs share IC coins / LT thresholds. Target runs share the
    uniforms that realize Bernoulli(x_t) seeding as well as their own coins or
    thresholds, so ``big >= small`` holds run by run.
    """
    for cfg in (cfg_s, cfg_t):
        if cfg.model == "SIS":
            raise ValueError("common-random-number coupling is defined for IC and LT only")
    x_small = np.asarray(x_small, dtype=float)
    extra = np.asarray(sorted(set(int(e) for e in extra)), dtype=np.int64)
    if np.any(x_small[extra] > 0):
        raise ValueError("extra seeds overlap the base seed set")
    x_big = x_small.copy()
    x_big[extra] = 1.0
    runs = runs or cfg_s.mc_samples
    seed = cfg_s.rng_seed if rng_seed is None else rng_seed
    rng = substream(seed, 7)
    src_noise = draw_noise(cross.source, cfg_s, runs, rng)
    init_small = np.broadcast_to(x_small > 0, (runs, cross.n_source))
    init_big = np.broadcast_to(x_big > 0, (runs, cross.n_source))
    src_small = simulate_runs(cross.source, init_small, cfg_s, noise=src_noise)
    src_big = simulate_runs(cross.source, init_big, cfg_s, noise=src_noise)
    xt_small = bridge_transfer(src_small.mean(axis=0), cross.bridges, cross.n_target)
    xt_big = bridge_transfer(src_big.mean(axis=0), cross.bridges, cross.n_target)
    tgt_noise = draw_noise(cross.target, cfg_t, runs, rng, seeding=True)
    tgt_small = simulate_runs(cross.target, tgt_noise.seeding < xt_small, cfg_t, noise=tgt_noise)
    tgt_big = simulate_runs(cross.target, tgt_noise.seeding < xt_big, cfg_t, noise=tgt_noise)
    return src_small, src_big, tgt_small, tgt_big


def coupled_monotonic_pair(cross: CrossNetwork, x_small, extra, cfg_s: DiffusionConfig,
                           cfg_t: DiffusionConfig, runs: int | None = None):
    """(y_t_small, y_t_big) estimated under common random numbers; big >= small exactly."""
    _, _, tgt_small, tgt_big = coupled_runs(cross, x_small, extra, cfg_s, cfg_t, runs)
    return tgt_small.mean(axis=0), tgt_big.mean(axis=0)
