"""Cross-network data model: two graphs joined by directed bridge links.

File formats
------------
Edge list
    UTF-8 text. A ``nodes=N`` header line, then one ``u<TAB>v`` pair per line.
    ``#`` starts a comment. Optional ``directed=1`` and ``name=...`` headers.
Bridge file
    One ``u_source<TAB>v_target`` pair per line.
Features
    CSV with N rows and F columns, no header.
Vectors
    CSV rows of ``node_index,value`` with a ``node_index,value`` header.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp

log = logging.getLogger(__name__)

SOURCE_EDGES = "source.edges"
TARGET_EDGES = "target.edges"
BRIDGES = "bridges.tsv"
SOURCE_FEATURES = "source_features.csv"
TARGET_FEATURES = "target_features.csv"


class GraphFormatError(ValueError):
    """Malformed or inconsistent network file."""


@dataclass(frozen=True, eq=False)
class Network:
    num_nodes: int
    edges: np.ndarray
    directed: bool = False
    name: str = ""

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        e.setflags(write=False)
        object.__setattr__(self, "edges", e)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def edge_set(self) -> set[tuple[int, int]]:
        if self.directed:
            return {(int(u), int(v)) for u, v in self.edges}
        return {(int(min(u, v)), int(max(u, v))) for u, v in self.edges}

    @cached_property
    def arcs(self) -> tuple[np.ndarray, np.ndarray]:
        """(src, dst) arrays of directed arcs; undirected edges appear both ways."""
        u, v = self.edges[:, 0], self.edges[:, 1]
        if self.directed:
            return u.copy(), v.copy()
        return np.concatenate([u, v]), np.concatenate([v, u])

    @cached_property
    def adjacency(self) -> sp.csr_matrix:
        """Binary matrix with ``A[v, u] = 1`` when ``u`` points at ``v``."""
        src, dst = self.arcs
        n = self.num_nodes
        a = sp.csr_matrix((np.ones(len(src)), (dst, src)), shape=(n, n))
        a.sum_duplicates()
        a.data[:] = 1.0
        return a

    @cached_property
    def in_degree(self) -> np.ndarray:
        return np.asarray(self.adjacency.sum(axis=1)).ravel()

    @cached_property
    def out_degree(self) -> np.ndarray:
        return np.asarray(self.adjacency.sum(axis=0)).ravel()

    def degree(self) -> np.ndarray:
        if self.directed:
            return self.in_degree + self.out_degree
        return self.in_degree

    def neighbors(self, u: int) -> np.ndarray:
        """Out-neighbors of ``u`` (all neighbors when undirected)."""
        return np.sort(self.adjacency[:, [u]].nonzero()[0])

    def violations(self) -> list[str]:
        out = []
        n = self.num_nodes
        label = self.name or "network"
        if n < 0:
            out.append(f"{label}: negative node count {n}")
        if len(self.edges):
            bad = (self.edges < 0) | (self.edges >= n)
            for i in np.flatnonzero(bad.any(axis=1)):
                out.append(f"{label}: edge {i} {tuple(self.edges[i])} out of range for {n} nodes")
            loops = np.flatnonzero(self.edges[:, 0] == self.edges[:, 1])
            for i in loops:
                out.append(f"{label}: self-loop at edge {i} on node {self.edges[i, 0]}")
            seen: dict[tuple[int, int], int] = {}
            for i, (u, v) in enumerate(self.edges.tolist()):
                key = (u, v) if self.directed else (min(u, v), max(u, v))
                if key in seen:
                    out.append(f"{label}: duplicate edge {key} at {seen[key]} and {i}")
                else:
                    seen[key] = i
        return out


@dataclass(frozen=True, eq=False)
class BridgeLinks:
    pairs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.pairs, dtype=np.int64).reshape(-1, 2)
        p.setflags(write=False)
        object.__setattr__(self, "pairs", p)

    def __len__(self) -> int:
        return len(self.pairs)

    @property
    def source(self) -> np.ndarray:
        return self.pairs[:, 0]

    @property
    def target(self) -> np.ndarray:
        return self.pairs[:, 1]

    def violations(self, n_source: int, n_target: int) -> list[str]:
        out = []
        for i, (u, v) in enumerate(self.pairs.tolist()):
            if not 0 <= u < n_source:
                out.append(f"bridges: pair {i} source index {u} out of range for {n_source} nodes")
            if not 0 <= v < n_target:
                out.append(f"bridges: pair {i} target index {v} out of range for {n_target} nodes")
        seen: dict[tuple[int, int], int] = {}
        for i, key in enumerate(map(tuple, self.pairs.tolist())):
            if key in seen:
                out.append(f"bridges: duplicate pair {key} at {seen[key]} and {i}")
            else:
                seen[key] = i
        return out


@dataclass(frozen=True, eq=False)
class CrossNetwork:
    source: Network
    target: Network
    bridges: BridgeLinks
    source_features: np.ndarray | None = None
    # stored for completeness; no model component reads it
    target_features: np.ndarray | None = None

    @property
    def n_source(self) -> int:
        return self.source.num_nodes

    @property
    def n_target(self) -> int:
        return self.target.num_nodes

    def transfer(self, y_s: np.ndarray) -> np.ndarray:
        return bridge_transfer(y_s, self.bridges, self.n_target)


def bridge_transfer(y_s, bridges: BridgeLinks, n_target: int) -> np.ndarray:
    """Carry source infection probabilities across bridges onto the target.

    Each target node takes the largest probability among its incoming bridges;
    nodes without an incoming bridge get 0.
    """
    y_s = np.asarray(y_s, dtype=float)
    if y_s.ndim != 1:
        raise ValueError(f"expected a 1-d infection vector, got shape {y_s.shape}")
    if len(bridges) and bridges.source.max() >= len(y_s):
        raise ValueError(
            f"infection vector has {len(y_s)} entries but bridges reference source node "
            f"{int(bridges.source.max())}"
        )
    x_t = np.zeros(n_target)
    if len(bridges):
        np.maximum.at(x_t, bridges.target, y_s[bridges.source])
    return x_t


def bridge_argmax(y_s: np.ndarray, bridges: BridgeLinks, n_target: int) -> np.ndarray:
    """Source node that supplies each target node's value in :func:`bridge_transfer`.

    -1 for nodes with no incoming bridge. Ties go to the lowest source index.
    """
    winner = np.full(n_target, -1, dtype=np.int64)
    if not len(bridges):
        return winner
    vals = y_s[bridges.source]
    # lexsort: last key primary -> target, then value descending, then source ascending
    order = np.lexsort((bridges.source, -vals, bridges.target))
    tgt = bridges.target[order]
    first = np.ones(len(order), dtype=bool)
    first[1:] = tgt[1:] != tgt[:-1]
    winner[tgt[first]] = bridges.source[order][first]
    return winner


def validate(cross: CrossNetwork) -> list[str]:
    """All violated invariants of ``cross``; empty when well formed."""
    report = cross.source.violations() + cross.target.violations()
    report += cross.bridges.violations(cross.n_source, cross.n_target)
    for label, feats, n in (
        ("source_features", cross.source_features, cross.n_source),
        ("target_features", cross.target_features, cross.n_target),
    ):
        if feats is None:
            continue
        feats = np.asarray(feats)
        if feats.ndim != 2:
            report.append(f"{label}: expected a 2-d matrix, got {feats.ndim} dimensions")
            continue
        if feats.shape[0] != n:
            report.append(f"{label}: {feats.shape[0]} rows for a {n}-node network")
        if not np.isfinite(feats).all():
            report.append(f"{label}: non-finite entries")
    return report


# ---------------------------------------------------------------- file I/O


def _data_lines(path: Path):
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if line:
                yield lineno, line


def _parse_pair(path, lineno, line) -> tuple[int, int]:
    parts = line.split()
    if len(parts) != 2:
        raise GraphFormatError(f"{path}:{lineno}: expected two tab-separated indices, got {line!r}")
    try:
        return int(parts[0]), int(parts[1])
    except ValueError:
        raise GraphFormatError(f"{path}:{lineno}: non-integer node index in {line!r}") from None


def read_edges(path, name: str | None = None) -> Network:
    path = Path(path)
    n = None
    directed = False
    edges = []
    seen: dict[tuple[int, int], int] = {}
    for lineno, line in _data_lines(path):
        if "=" in line:
            key, _, val = line.partition("=")
            key, val = key.strip(), val.strip()
            if key == "nodes":
                try:
                    n = int(val)
                except ValueError:
                    raise GraphFormatError(f"{path}:{lineno}: bad node count {val!r}") from None
            elif key == "directed":
                directed = val.lower() in ("1", "true", "yes")
            elif key == "name":
                name = name or val
            else:
                raise GraphFormatError(f"{path}:{lineno}: unknown header {key!r}")
            continue
        if n is None:
            raise GraphFormatError(f"{path}:{lineno}: edge before the nodes=N header")
        u, v = _parse_pair(path, lineno, line)
        if not (0 <= u < n and 0 <= v < n):
            bad = u if not 0 <= u < n else v
            raise GraphFormatError(
                f"{path}:{lineno}: node index {bad} out of range for nodes={n}"
            )
        if u == v:
            raise GraphFormatError(f"{path}:{lineno}: self-loop on node {u}")
        key = (u, v) if directed else (min(u, v), max(u, v))
        if key in seen:
            raise GraphFormatError(f"{path}:{lineno}: duplicate edge {key} (first on line {seen[key]})")
        seen[key] = lineno
        edges.append((u, v))
    if n is None:
        raise GraphFormatError(f"{path}: missing nodes=N header")
    return Network(n, np.array(edges, dtype=np.int64).reshape(-1, 2), directed, name or path.stem)


def write_edges(net: Network, path) -> None:
    lines = [f"nodes={net.num_nodes}"]
    if net.directed:
        lines.append("directed=1")
    if net.name:
        lines.append(f"name={net.name}")
    lines += [f"{u}\t{v}" for u, v in net.edges.tolist()]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_bridges(path, n_source: int | None = None, n_target: int | None = None) -> BridgeLinks:
    path = Path(path)
    pairs = []
    seen: dict[tuple[int, int], int] = {}
    for lineno, line in _data_lines(path):
        u, v = _parse_pair(path, lineno, line)
        if n_source is not None and not 0 <= u < n_source:
            raise GraphFormatError(f"{path}:{lineno}: source index {u} out of range for {n_source} nodes")
        if n_target is not None and not 0 <= v < n_target:
            raise GraphFormatError(f"{path}:{lineno}: target index {v} out of range for {n_target} nodes")
        if (u, v) in seen:
            raise GraphFormatError(f"{path}:{lineno}: duplicate bridge {(u, v)} (first on line {seen[(u, v)]})")
        seen[(u, v)] = lineno
        pairs.append((u, v))
    return BridgeLinks(np.array(pairs, dtype=np.int64).reshape(-1, 2))


def write_bridges(bridges: BridgeLinks, path) -> None:
    text = "".join(f"{u}\t{v}\n" for u, v in bridges.pairs.tolist())
    Path(path).write_text(text, encoding="utf-8")


def read_features(path, n_rows: int | None = None) -> np.ndarray:
    path = Path(path)
    try:
        feats = np.loadtxt(path, delimiter=",", ndmin=2, dtype=float)
    except ValueError as exc:
        raise GraphFormatError(f"{path}: {exc}") from None
    if n_rows is not None and feats.shape[0] != n_rows:
        raise GraphFormatError(f"{path}: {feats.shape[0]} feature rows for a {n_rows}-node network")
    if not np.isfinite(feats).all():
        raise GraphFormatError(f"{path}: non-finite feature values")
    return feats


def write_features(feats: np.ndarray, path) -> None:
    np.savetxt(path, np.asarray(feats, dtype=float), delimiter=",", fmt="%.17g")


def read_vector(path, size: int | None = None) -> np.ndarray:
    path = Path(path)
    idx, vals = [], []
    for lineno, line in _data_lines(path):
        if line.startswith("node_index"):
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise GraphFormatError(f"{path}:{lineno}: expected node_index,value")
        try:
            idx.append(int(parts[0]))
            vals.append(float(parts[1]))
        except ValueError:
            raise GraphFormatError(f"{path}:{lineno}: cannot parse {line!r}") from None
    n = size if size is not None else (max(idx) + 1 if idx else 0)
    out = np.zeros(n)
    for i, v in zip(idx, vals):
        if not 0 <= i < n:
            raise GraphFormatError(f"{path}: node index {i} out of range for {n} entries")
        out[i] = v
    return out


def write_vector(vec, path) -> None:
    vec = np.asarray(vec, dtype=float)
    body = "".join(f"{i},{v!r}\n" for i, v in enumerate(vec.tolist()))
    Path(path).write_text("node_index,value\n" + body, encoding="utf-8")


def read_id_map(path) -> dict[int, str]:
    out = {}
    for lineno, line in _data_lines(Path(path)):
        idx, _, ext = line.partition("\t")
        try:
            out[int(idx)] = ext
        except ValueError:
            raise GraphFormatError(f"{path}:{lineno}: bad index {idx!r}") from None
    return out


def write_id_map(ids, path) -> None:
    Path(path).write_text("".join(f"{i}\t{x}\n" for i, x in enumerate(ids)), encoding="utf-8")


def load_cross_network(source_edges_path, target_edges_path, bridges_path,
                       features_path=None, target_features_path=None) -> CrossNetwork:
    source = read_edges(source_edges_path, name="source")
    target = read_edges(target_edges_path, name="target")
    bridges = read_bridges(bridges_path, source.num_nodes, target.num_nodes)
    fs = read_features(features_path, source.num_nodes) if features_path else None
    ft = read_features(target_features_path, target.num_nodes) if target_features_path else None
    cross = CrossNetwork(source, target, bridges, fs, ft)
    problems = validate(cross)
    if problems:
        raise GraphFormatError("; ".join(problems))
    log.debug("loaded cross-network: %d/%d nodes, %d/%d edges, %d bridges",
              source.num_nodes, target.num_nodes, source.num_edges, target.num_edges, len(bridges))
    return cross


def save_cross_network(cross: CrossNetwork, directory) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_edges(cross.source, d / SOURCE_EDGES)
    write_edges(cross.target, d / TARGET_EDGES)
    write_bridges(cross.bridges, d / BRIDGES)
    if cross.source_features is not None:
        write_features(cross.source_features, d / SOURCE_FEATURES)
    if cross.target_features is not None:
        write_features(cross.target_features, d / TARGET_FEATURES)


def load_cross_network_dir(directory) -> CrossNetwork:
    d = Path(directory)
    fs = d / SOURCE_FEATURES
    ft = d / TARGET_FEATURES
    return load_cross_network(
        d / SOURCE_EDGES, d / TARGET_EDGES, d / BRIDGES,
        fs if fs.exists() else None, ft if ft.exists() else None,
    )


def structural_features(net: Network) -> np.ndarray:
    """Degree-derived node descriptors used when a network ships no features."""
    deg = net.degree().astype(float)
    a = net.adjacency
    nbr_mean = np.asarray(a @ deg).ravel() / np.maximum(net.in_degree, 1)
    return np.column_stack([
        np.log1p(deg),
        deg / max(deg.max(), 1.0),
        np.log1p(nbr_mean),
        (deg == 0).astype(float),
    ])
