"""Layers, losses and sampling built on :mod:`cnsl.neural.tensor`."""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from . import tensor as T
from .tensor import Tensor

LOGVAR_MIN, LOGVAR_MAX = -10.0, 10.0
BCE_EPS = 1e-7


class Module:
    """Anything owning named parameters (``Tensor`` leaves with grads)."""

    def named_parameters(self, prefix: str = "") -> list[tuple[str, Tensor]]:
        out = []
        for key, val in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(val, Tensor) and val.requires_grad:
                out.append((name, val))
            elif isinstance(val, Module):
                out += val.named_parameters(name + ".")
            elif isinstance(val, list):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        out += item.named_parameters(f"{name}.{i}.")
        return out

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]


def param(arr, name="") -> Tensor:
    return Tensor(np.array(arr, dtype=np.float64), requires_grad=True, name=name)


class Dense(Module):
    """``act(x @ weight.T + bias)`` with weight shaped (out, in)."""

    def __init__(self, n_in: int, n_out: int, activation: str = "identity", rng=None):
        if activation not in T.ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        rng = rng if rng is not None else np.random.default_rng(0)
        bound = np.sqrt(6.0 / (n_in + n_out))
        self.weight = param(rng.uniform(-bound, bound, size=(n_out, n_in)))
        self.bias = param(np.zeros(n_out))
        self.activation = activation

    @property
    def n_in(self) -> int:
        return self.weight.shape[1]

    @property
    def n_out(self) -> int:
        return self.weight.shape[0]

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.n_in:
            raise ValueError(f"Dense expects {self.n_in} input features, got shape {x.shape}")
        return T.ACTIVATIONS[self.activation](T.matmul(x, T.transpose(self.weight)) + self.bias)


class MLP(Module):
    def __init__(self, sizes: list[int], hidden_activation: str = "relu",
                 out_activation: str = "identity", rng=None):
        if len(sizes) < 2:
            raise ValueError("an MLP needs at least input and output sizes")
        acts = [hidden_activation] * (len(sizes) - 2) + [out_activation]
        self.layers = [Dense(a, b, act, rng) for a, b, act in zip(sizes[:-1], sizes[1:], acts)]

    def __call__(self, x: Tensor) -> Tensor:
        for layer in self.layers:
            x = layer(x)
        return x


def normalized_adjacency(adj: sp.spmatrix) -> sp.csr_matrix:
    """Row-normalized ``A + I``; every row sums to 1."""
    n = adj.shape[0]
    a = (sp.csr_matrix(adj) + sp.identity(n, format="csr")).tocsr()
    a.data[:] = 1.0
    rows = np.asarray(a.sum(axis=1)).ravel()
    return (sp.diags(1.0 / rows) @ a).tocsr()


class GraphAggregator(Module):
    """Mean-aggregation message passing followed by a two-layer perceptron head.

    Input is a per-node probability vector of length N; each hop mixes the
    normalized neighborhood of the previous representation with the raw input
    and node descriptors, and the head maps each node to a probability.
    """

    def __init__(self, adj: sp.spmatrix, hidden: int = 64, hops: int = 3,
                 node_features: np.ndarray | None = None, rng=None):
        self.norm_adj = normalized_adjacency(adj)
        n = adj.shape[0]
        self.node_features = np.zeros((n, 0)) if node_features is None else np.asarray(node_features, float)
        n_static = 1 + self.node_features.shape[1]
        widths = [n_static] + [hidden] * hops
        self.hops = [Dense(w + n_static, hidden, "relu", rng) for w in widths[:-1]]
        self.head = MLP([hidden if hops else n_static, hidden, 1], "relu", "sigmoid", rng)

    @property
    def num_nodes(self) -> int:
        return self.norm_adj.shape[0]

    def _block_adjacency(self, batch: int) -> sp.csr_matrix:
        if batch == 1:
            return self.norm_adj
        cache = self.__dict__.setdefault("_blocks", {})
        if batch not in cache:
            cache[batch] = sp.kron(sp.identity(batch, format="csr"), self.norm_adj, format="csr")
        return cache[batch]

    def __call__(self, x: Tensor) -> Tensor:
        """``x`` is a length-N vector or a (batch, N) matrix of independent inputs."""
        n = self.num_nodes
        if x.shape != (n,) and not (x.ndim == 2 and x.shape[1] == n):
            raise ValueError(f"GraphAggregator expects a length-{n} vector or (batch, {n}), got {x.shape}")
        batch = 1 if x.ndim == 1 else x.shape[0]
        # a batch is one disconnected graph of `batch` copies
        feats = np.tile(self.node_features, (batch, 1))
        base = T.concat([T.reshape(x, (-1, 1)), Tensor(feats)], axis=1)
        adj = self._block_adjacency(batch)
        h = base
        for layer in self.hops:
            h = layer(T.concat([T.spmm(adj, h), base], axis=1))
        return T.reshape(self.head(h), x.shape)


# ------------------------------------------------------------------ losses


def kl_diag_gaussian(mu: Tensor, logvar: Tensor) -> Tensor:
    """KL(N(mu, exp(logvar)) || N(0, I)) summed over coordinates."""
    if mu.shape != logvar.shape:
        raise ValueError(f"mu {mu.shape} and logvar {logvar.shape} differ in shape")
    return 0.5 * T.tsum(T.square(mu) + T.exp(logvar) - logvar - 1.0)


def clamp_logvar(logvar: Tensor) -> Tensor:
    return T.clip(logvar, LOGVAR_MIN, LOGVAR_MAX)


def reparameterize(mu: Tensor, logvar: Tensor, rng: np.random.Generator) -> Tensor:
    if mu.shape != logvar.shape:
        raise ValueError(f"mu {mu.shape} and logvar {logvar.shape} differ in shape")
    eps = rng.standard_normal(mu.shape)
    return mu + T.exp(0.5 * clamp_logvar(logvar)) * eps


def bce_loss(pred: Tensor, target) -> Tensor:
    target = np.asarray(getattr(target, "data", target), dtype=float)
    if pred.shape != target.shape:
        raise ValueError(f"bce shape mismatch: {pred.shape} vs {target.shape}")
    p = T.clip(pred, BCE_EPS, 1.0 - BCE_EPS)
    ll = T.log(p) * target + T.log(1.0 - p) * (1.0 - target)
    return -T.mean(ll)


def mse_loss(pred: Tensor, target) -> Tensor:
    target = np.asarray(getattr(target, "data", target), dtype=float)
    if pred.shape != target.shape:
        raise ValueError(f"mse shape mismatch: {pred.shape} vs {target.shape}")
    return T.mean(T.square(pred - target))
