"""Independent reference computations used by the tests."""
from __future__ import annotations

import itertools
from collections import deque

import numpy as np
from scipy import integrate


def reachable(n, live_edges, seeds, directed=False):
    adj = [[] for _ in range(n)]
    for u, v in live_edges:
        adj[u].append(v)
        if not directed:
            adj[v].append(u)
    seen = set(seeds)
    queue = deque(seeds)
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                queue.append(v)
    return seen


def ic_enumeration(n, edges, seeds, p, directed=False):
    """Exact IC activation probabilities by summing over all live-edge outcomes."""
    probs = np.zeros(n)
    edges = [tuple(e) for e in edges]
    for mask in itertools.product((0, 1), repeat=len(edges)):
        k = sum(mask)
        weight = p ** k * (1 - p) ** (len(edges) - k)
        live = [e for e, m in zip(edges, mask) if m]
        for v in reachable(n, live, list(seeds), directed):
            probs[v] += weight
    return probs


def finite_difference(f, x, eps=1e-6):
    """Central differences of scalar ``f`` at array ``x``."""
    x = np.array(x, dtype=float)
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + eps
        hi = f(x)
        x[i] = old - eps
        lo = f(x)
        x[i] = old
        g[i] = (hi - lo) / (2 * eps)
    return g


def rel_error(a, b):
    """``|a - b| / (|a| + |b|)`` in the Euclidean norm, 0 when both vanish."""
    a, b = np.ravel(a).astype(float), np.ravel(b).astype(float)
    denom = np.linalg.norm(a) + np.linalg.norm(b)
    return 0.0 if denom == 0 else float(np.linalg.norm(a - b) / denom)


def kl_quadrature(mu, logvar):
    """KL(N(mu, diag exp(logvar)) || N(0, I)) summed over dimensions by numerical integration."""
    total = 0.0
    for m, lv in zip(np.ravel(mu), np.ravel(logvar)):
        s = np.exp(0.5 * lv)

        def integrand(x):
            logq = -0.5 * np.log(2 * np.pi) - np.log(s) - 0.5 * ((x - m) / s) ** 2
            logp = -0.5 * np.log(2 * np.pi) - 0.5 * x ** 2
            return np.exp(logq) * (logq - logp)

        val, _ = integrate.quad(integrand, m - 12 * s, m + 12 * s, epsabs=1e-12, epsrel=1e-12, limit=200)
        total += val
    return total
