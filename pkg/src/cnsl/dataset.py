"""Dataset directories and synthetic cross-network generators.

A dataset directory holds the cross-network files (see :mod:`cnsl.graph`),
``meta.json`` and one CSV vector per sample component named
``sample_{i}_{x_s|y_s|x_t|y_t}.csv``.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .diffusion import DiffusionSample, substream
from .graph import (BridgeLinks, CrossNetwork, Network, load_cross_network_dir, read_vector,
                    save_cross_network, structural_features, write_vector)

META = "meta.json"
COMPONENTS = ("x_s", "y_s", "x_t", "y_t")


def sample_path(directory, i: int, part: str) -> Path:
    return Path(directory) / f"sample_{i}_{part}.csv"


def write_dataset(directory, cross: CrossNetwork, samples: list[DiffusionSample], meta: dict) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    save_cross_network(cross, d)
    for i, s in enumerate(samples):
        for part in COMPONENTS:
            write_vector(getattr(s, part), sample_path(d, i, part))
    meta = dict(meta)
    meta["n_samples"] = len(samples)
    meta.setdefault("n_source", cross.n_source)
    meta.setdefault("n_target", cross.n_target)
    (d / META).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return d


def read_meta(directory) -> dict:
    path = Path(directory) / META
    if not path.exists():
        raise FileNotFoundError(f"no dataset at {directory} (missing {META})")
    return json.loads(path.read_text(encoding="utf-8"))


def read_dataset(directory):
    """Returns ``(cross, samples, meta)``."""
    d = Path(directory)
    meta = read_meta(d)
    cross = load_cross_network_dir(d)
    samples = []
    for i in range(meta["n_samples"]):
        vec = {}
        for part in COMPONENTS:
            n = cross.n_source if part in ("x_s", "y_s") else cross.n_target
            vec[part] = read_vector(sample_path(d, i, part), n)
        samples.append(DiffusionSample(**vec))
    return cross, samples, meta


def split_indices(n: int, test_fraction: float) -> tuple[list[int], list[int]]:
    """First samples train, trailing ``ceil(test_fraction * n)`` test."""
    n_test = int(np.ceil(test_fraction * n)) if n > 1 else 0
    n_test = min(n_test, n - 1) if n > 1 else 0
    return list(range(n - n_test)), list(range(n - n_test, n))


def dataset_split(meta: dict) -> tuple[list[int], list[int]]:
    split = meta.get("split")
    if split:
        return list(split["train"]), list(split["test"])
    return split_indices(meta["n_samples"], 0.1)


# ------------------------------------------------------------- generators


def _unique_edges(n: int, m: int, rng: np.random.Generator, attach_bias: float | None = None) -> np.ndarray:
    """``m`` distinct undirected edges on ``n`` nodes.

    With ``attach_bias`` one endpoint is chosen uniformly and the other with
    probability proportional to ``degree + attach_bias`` (hub-forming).
    """
    max_edges = n * (n - 1) // 2
    if m > max_edges:
        raise ValueError(f"cannot place {m} edges on {n} nodes")
    deg = np.zeros(n)
    seen = set()
    edges = []
    while len(edges) < m:
        u = int(rng.integers(n))
        if attach_bias is None:
            v = int(rng.integers(n))
        else:
            w = deg + attach_bias
            v = int(rng.choice(n, p=w / w.sum()))
        if u == v:
            continue
        key = (min(u, v), max(u, v))
        if key in seen:
            continue
        seen.add(key)
        edges.append(key)
        deg[u] += 1
        deg[v] += 1
    return np.array(edges, dtype=np.int64).reshape(-1, 2)


def _pa_forest(n: int, m: int, rng: np.random.Generator, attach_bias: float) -> np.ndarray:
    """Forest with ``n - m`` trees grown by preferential attachment (star-like hubs)."""
    if not 0 <= m < n:
        raise ValueError(f"a forest on {n} nodes has fewer than {n} edges, got {m}")
    roots = n - m
    deg = np.zeros(n)
    edges = np.empty((m, 2), dtype=np.int64)
    for k, u in enumerate(range(roots, n)):
        w = deg[:u] + attach_bias
        v = int(rng.choice(u, p=w / w.sum()))
        edges[k] = (v, u)
        deg[u] += 1
        deg[v] += 1
    perm = rng.permutation(n)
    return perm[edges]


def _random_bridges(n_s: int, n_t: int, mean_out: float, rng: np.random.Generator) -> BridgeLinks:
    counts = rng.poisson(mean_out, size=n_s)
    pairs = set()
    for u, c in enumerate(counts):
        for v in rng.choice(n_t, size=min(int(c), n_t), replace=False):
            pairs.add((u, int(v)))
    return BridgeLinks(np.array(sorted(pairs), dtype=np.int64).reshape(-1, 2))


def random_cross_network(n_source: int, n_target: int, m_source: int, m_target: int,
                         bridges_per_source: float, rng_seed: int,
                         attach_bias: float | None = None) -> CrossNetwork:
    rng = substream(rng_seed, 101)
    src = Network(n_source, _unique_edges(n_source, m_source, rng, attach_bias), name="source")
    tgt = Network(n_target, _unique_edges(n_target, m_target, rng, attach_bias), name="target")
    bridges = _random_bridges(n_source, n_target, bridges_per_source, rng)
    return CrossNetwork(src, tgt, bridges, structural_features(src))


def toy_cross_network(rng_seed: int = 0, n_source: int = 50, n_target: int = 80) -> CrossNetwork:
    """Small desk-scale cross-network used by tests and the quick-start.

    Every source node has exactly one bridge, to a distinct target node
    (account-identity style links), so each seed leaves a trace in the target.
    """
    if n_target < n_source:
        raise ValueError("toy network needs at least as many target as source nodes")
    rng = substream(rng_seed, 103)
    src = Network(n_source, _unique_edges(n_source, int(1.5 * n_source), rng), name="source")
    tgt = Network(n_target, _unique_edges(n_target, int(1.5 * n_target), rng), name="target")
    pairs = np.column_stack([np.arange(n_source), rng.choice(n_target, size=n_source, replace=False)])
    return CrossNetwork(src, tgt, BridgeLinks(pairs), structural_features(src))


# published sizes of the crawled GitHub / Stack Overflow pair
CROSS_PLATFORM_SIZES = dict(n_source=1204, m_source=1043, n_target=3862, m_target=3149)


def cross_platform_like(rng_seed: int = 0, bridges_per_source: float = 0.7,
                        attach_bias: float = 0.5) -> CrossNetwork:
    """Synthetic stand-in with the published node and edge counts.

    Both layers are forests grown by preferential attachment, mimicking
    dependency trees around popular hubs; bridges are Poisson-many links from
    each source node to uniformly chosen target nodes.
    """
    s = CROSS_PLATFORM_SIZES
    rng = substream(rng_seed, 102)
    src = Network(s["n_source"], _pa_forest(s["n_source"], s["m_source"], rng, attach_bias), name="source")
    tgt = Network(s["n_target"], _pa_forest(s["n_target"], s["m_target"], rng, attach_bias), name="target")
    bridges = _random_bridges(src.num_nodes, tgt.num_nodes, bridges_per_source, rng)
    return CrossNetwork(src, tgt, bridges, structural_features(src))
