"""Graphs, partitions, super-graphs and the distances defined on them.

All node ids are dense integers ``0..n-1``. Adjacency is stored in CSR form
with neighbour lists sorted ascending, which the decoders rely on for
lowest-id tie breaking.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import breadth_first_order, connected_components, shortest_path
from scipy.spatial import cKDTree

from .errors import ParseError, UnreachableError, ValidationError

GRAPH_FORMAT_VERSION = 1


def _readonly(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


def _csr_from_pairs(n, pairs):
    """Symmetric CSR (indptr, indices) from unique undirected pairs u < v."""
    if len(pairs) == 0:
        return np.zeros(n + 1, dtype=np.int64), np.zeros(0, dtype=np.int64)
    src = np.concatenate([pairs[:, 0], pairs[:, 1]])
    dst = np.concatenate([pairs[:, 1], pairs[:, 0]])
    order = np.lexsort((dst, src))
    src, dst = src[order], dst[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=n), out=indptr[1:])
    return indptr, dst.astype(np.int64)


def _normalize_pairs(edges):
    """Drop self-loops and duplicates; return sorted (E, 2) array with u < v."""
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    e = e[e[:, 0] != e[:, 1]]
    e = np.sort(e, axis=1)
    if len(e):
        e = np.unique(e, axis=0)
    return e


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected simple graph, optionally embedded in the unit square."""

    n: int
    edges: np.ndarray
    layout: np.ndarray | None = None
    labels: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n < 1:
            raise ValidationError("graph has no nodes")
        e = _normalize_pairs(self.edges)
        if len(e) and (e.min() < 0 or e.max() >= self.n):
            raise ValidationError("edge endpoint out of range")
        object.__setattr__(self, "edges", _readonly(e))
        if self.layout is not None:
            xy = np.asarray(self.layout, dtype=float)
            if xy.shape != (self.n, 2):
                raise ValidationError(f"layout must have shape ({self.n}, 2)")
            if np.any(xy < 0.0) or np.any(xy > 1.0):
                raise ValidationError("layout coordinates must lie in [0, 1]^2")
            object.__setattr__(self, "layout", _readonly(xy))
        if self.labels is not None:
            object.__setattr__(self, "labels", _readonly(np.asarray(self.labels, dtype=np.int64)))
        indptr, indices = _csr_from_pairs(self.n, e)
        object.__setattr__(self, "indptr", _readonly(indptr))
        object.__setattr__(self, "indices", _readonly(indices))

    @property
    def num_edges(self):
        return len(self.edges)

    @cached_property
    def degree(self):
        return _readonly(np.diff(self.indptr))

    def neighbors(self, v):
        return self.indices[self.indptr[v]:self.indptr[v + 1]]

    def neighborhood(self):
        """CSR of the Viterbi neighbourhood. Fine graphs have no self-loops."""
        return self.indptr, self.indices

    @cached_property
    def adjacency(self):
        data = np.ones(len(self.indices), dtype=np.int8)
        return sp.csr_matrix((data, self.indices, self.indptr), shape=(self.n, self.n))

    def has_edge(self, u, v):
        nb = self.neighbors(u)
        i = np.searchsorted(nb, v)
        return bool(i < len(nb) and nb[i] == v)

    def is_connected_walk(self, ids):
        ids = np.asarray(ids)
        return all(self.has_edge(int(a), int(b)) for a, b in zip(ids[:-1], ids[1:]))

    def to_json(self):
        """Byte-stable JSON serialisation (fixed field order)."""
        doc = {"version": GRAPH_FORMAT_VERSION, "n": int(self.n), "edges": self.edges.tolist()}
        if self.layout is not None:
            doc["layout"] = self.layout.tolist()
        if self.labels is not None:
            doc["labels"] = self.labels.tolist()
        if self.meta:
            doc["seedInfo"] = self.meta
        return json.dumps(doc, separators=(",", ":"), sort_keys=False)

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text)
        if doc.get("version") != GRAPH_FORMAT_VERSION:
            raise ValidationError(f"unsupported graph format version {doc.get('version')!r}")
        return cls(
            n=doc["n"],
            edges=np.asarray(doc["edges"], dtype=np.int64).reshape(-1, 2),
            layout=None if "layout" not in doc else np.asarray(doc["layout"], dtype=float),
            labels=None if "labels" not in doc else np.asarray(doc["labels"], dtype=np.int64),
            meta=doc.get("seedInfo", {}),
        )


@dataclass(frozen=True, eq=False)
class Partition:
    """Total, disjoint assignment of nodes to dense cluster ids."""

    assign: np.ndarray
    grid_index: np.ndarray | None = None

    def __post_init__(self):
        a = np.asarray(self.assign, dtype=np.int64)
        if a.ndim != 1 or len(a) == 0:
            raise ValidationError("assignment must be a non-empty vector")
        if a.min() < 0:
            raise ValidationError("negative cluster id")
        m = int(a.max()) + 1
        if len(np.unique(a)) != m:
            raise ValidationError("cluster ids must be dense and every cluster non-empty")
        object.__setattr__(self, "assign", _readonly(a))
        # members of cluster c are order[starts[c]:starts[c+1]], ascending node id
        order = np.argsort(a, kind="stable")
        starts = np.zeros(m + 1, dtype=np.int64)
        np.cumsum(np.bincount(a, minlength=m), out=starts[1:])
        object.__setattr__(self, "order", _readonly(order))
        object.__setattr__(self, "starts", _readonly(starts))
        if self.grid_index is not None:
            object.__setattr__(self, "grid_index", _readonly(np.asarray(self.grid_index, dtype=np.int64)))

    @property
    def m(self):
        return len(self.starts) - 1

    @property
    def n(self):
        return len(self.assign)

    @property
    def sizes(self):
        return np.diff(self.starts)

    def members(self, c):
        return self.order[self.starts[c]:self.starts[c + 1]]

    def project(self, nodes):
        return self.assign[np.asarray(nodes, dtype=np.int64)]

    def to_text(self, labels=None):
        ids = np.arange(self.n) if labels is None else labels
        return "".join(f"{int(u)} {int(c)}\n" for u, c in zip(ids, self.assign))


@dataclass(frozen=True, eq=False)
class SuperGraph:
    """Coarse graph whose nodes are clusters of a :class:`Partition`."""

    indptr: np.ndarray
    indices: np.ndarray
    self_loop: np.ndarray
    cluster_size: np.ndarray
    cluster_max_dist: dict = field(default_factory=dict)

    @property
    def m(self):
        return len(self.self_loop)

    @property
    def num_edges(self):
        return len(self.indices) // 2

    def neighbors(self, c):
        return self.indices[self.indptr[c]:self.indptr[c + 1]]

    @cached_property
    def _neighborhood(self):
        # N(I) = adj(I) plus I itself when I carries a self-loop
        m = self.m
        loops = np.flatnonzero(self.self_loop)
        src = np.concatenate([np.repeat(np.arange(m), np.diff(self.indptr)), loops])
        dst = np.concatenate([self.indices, loops])
        order = np.lexsort((dst, src))
        indptr = np.zeros(m + 1, dtype=np.int64)
        np.cumsum(np.bincount(src, minlength=m), out=indptr[1:])
        return _readonly(indptr), _readonly(dst[order].astype(np.int64))

    def neighborhood(self):
        return self._neighborhood

    @cached_property
    def transition_matrix(self):
        """0/1 sparse matrix of the neighbourhood relation (self-loops on the diagonal)."""
        indptr, indices = self.neighborhood()
        data = np.ones(len(indices), dtype=float)
        return sp.csr_matrix((data, indices, indptr), shape=(self.m, self.m))

    @cached_property
    def adjacency(self):
        data = np.ones(len(self.indices), dtype=np.int8)
        return sp.csr_matrix((data, self.indices, self.indptr), shape=(self.m, self.m))

    def can_step(self, a, b):
        if a == b:
            return bool(self.self_loop[a])
        nb = self.neighbors(a)
        i = np.searchsorted(nb, b)
        return bool(i < len(nb) and nb[i] == b)

    def is_connected_walk(self, ids):
        ids = np.asarray(ids)
        return all(self.can_step(int(a), int(b)) for a, b in zip(ids[:-1], ids[1:]))


@dataclass(frozen=True, eq=False)
class TruePath:
    nodes: np.ndarray
    projected: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "nodes", _readonly(np.asarray(self.nodes, dtype=np.int64)))
        if self.projected is not None:
            object.__setattr__(self, "projected", _readonly(np.asarray(self.projected, dtype=np.int64)))

    @property
    def T(self):
        return len(self.nodes)

    def project(self, partition):
        return TruePath(self.nodes, partition.project(self.nodes))


# ---------------------------------------------------------------------------
# construction


def load_edge_list(text):
    """Parse ``u v`` lines into a :class:`Graph` with densely relabelled ids.

    Ids are relabelled in ascending order of the original integers; the
    original ids are kept in ``graph.labels``.
    """
    pairs = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#") or line.startswith("%"):
            continue
        tokens = line.split()
        if len(tokens) < 2:
            raise ParseError(f"expected two node ids, got {line!r}", lineno)
        try:
            pairs.append((int(tokens[0]), int(tokens[1])))
        except ValueError:
            raise ParseError(f"non-integer node id in {line!r}", lineno) from None
    if not pairs:
        raise ValidationError("edge list contains no edges")
    raw_pairs = np.asarray(pairs, dtype=np.int64)
    labels, dense = np.unique(raw_pairs, return_inverse=True)
    dense = dense.reshape(-1, 2)
    # a node that only appears in self-loops is still a node of the graph
    return Graph(n=len(labels), edges=dense, labels=labels)


def generate_rgg(intensity=None, radius=0.02, seed=0, n=None):
    """Random geometric graph on the unit square.

    Node count is Poisson(``intensity``) unless ``n`` fixes it. Two nodes are
    adjacent iff their Euclidean distance is at most ``radius``.
    """
    if not 0.0 < radius < 1.0:
        raise ValidationError("radius must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    if n is None:
        if intensity is None or intensity <= 0:
            raise ValidationError("intensity must be positive")
        n = int(rng.poisson(intensity))
        meta = {"generator": "rgg", "intensity": float(intensity), "radius": float(radius), "seed": seed}
    else:
        meta = {"generator": "rgg", "n": int(n), "radius": float(radius), "seed": seed}
    if n < 1:
        raise ValidationError("generated graph is empty")
    xy = rng.random((n, 2))
    pairs = cKDTree(xy).query_pairs(radius, output_type="ndarray")
    return Graph(n=n, edges=pairs, layout=xy, meta=meta)


def build_supergraph(graph, partition, destinations=(), metric="euclidean"):
    """Coarse graph induced by ``partition``.

    ``destinations`` lists clusters for which the per-cluster maximum node
    distance (``d_max``) to every other cluster is precomputed.
    """
    if partition.n != graph.n:
        raise ValidationError("partition does not cover the graph")
    m = partition.m
    cu = partition.assign[graph.edges[:, 0]]
    cv = partition.assign[graph.edges[:, 1]]
    self_loop = np.zeros(m, dtype=bool)
    self_loop[cu[cu == cv]] = True
    inter = np.stack([cu[cu != cv], cv[cu != cv]], axis=1)
    indptr, indices = _csr_from_pairs(m, _normalize_pairs(inter))
    dmax = {int(c): cluster_max_distances(graph, partition, c, metric) for c in destinations}
    return SuperGraph(
        indptr=_readonly(indptr),
        indices=_readonly(indices),
        self_loop=_readonly(self_loop),
        cluster_size=_readonly(partition.sizes),
        cluster_max_dist=dmax,
    )


def _densify(labels):
    _, dense = np.unique(labels, return_inverse=True)
    return dense.reshape(-1)


def square_partition(graph, B, radius=None):
    """Assign each node to one of the B x B congruent squares of the unit square.

    Empty squares are dropped; the surviving cluster ids follow the grid index
    ``ix + B * iy`` in ascending order, and that index is kept on the partition.
    """
    if graph.layout is None:
        raise ValidationError("square partitioning needs node coordinates")
    if B < 1:
        raise ValidationError("B must be at least 1")
    if radius is None:
        radius = graph.meta.get("radius")
    if radius is not None and 1.0 / B < radius:
        warnings.warn(
            f"square side 1/B={1.0 / B:.4g} is below the radius {radius:.4g}; "
            "super-edges may skip over neighbouring squares",
            stacklevel=2,
        )
    cell = np.minimum(np.floor(graph.layout * B).astype(np.int64), B - 1)
    grid = cell[:, 0] + B * cell[:, 1]
    occupied, dense = np.unique(grid, return_inverse=True)
    part = Partition(dense.reshape(-1), grid_index=occupied)
    return part, build_supergraph(graph, part)


def _components(graph, nodes):
    """Connected components of the subgraph induced on ``nodes`` (sorted array)."""
    sub = graph.adjacency[nodes][:, nodes]
    k, lab = connected_components(sub, directed=False)
    order = np.argsort(lab, kind="stable")
    bounds = np.searchsorted(lab[order], np.arange(k + 1))
    return [nodes[order[bounds[i]:bounds[i + 1]]] for i in range(k)]


def hub_shatter_partition(graph, hubs_per_round=None, max_cluster_size=None):
    """Slashburn-style partition: peel off hubs until components are small.

    Components of at most ``max_cluster_size`` nodes become clusters; larger
    ones lose their ``hubs_per_round`` highest-degree nodes (degree measured
    inside the component, ties to the lowest id) and are split again. Each
    removed hub is a singleton cluster.
    """
    n = graph.n
    k = hubs_per_round if hubs_per_round is not None else max(1, math.ceil(0.005 * n))
    c = max_cluster_size if max_cluster_size is not None else max(1, math.ceil(n / 100))
    if k < 1 or c < 1:
        raise ValidationError("hubs_per_round and max_cluster_size must be >= 1")
    clusters = []
    stack = _components(graph, np.arange(n))
    while stack:
        comp = stack.pop()
        if len(comp) <= c:
            clusters.append(comp)
            continue
        sub = graph.adjacency[comp][:, comp]
        deg = np.asarray(sub.sum(axis=1)).ravel()
        rank = np.lexsort((comp, -deg))
        hubs = rank[:k]
        clusters.extend(comp[[h]] for h in hubs)
        keep = np.ones(len(comp), dtype=bool)
        keep[hubs] = False
        rest = comp[keep]
        if len(rest):
            stack.extend(_components(graph, rest))
    # canonical ids: clusters ordered by their smallest member
    clusters.sort(key=lambda members: int(members.min()))
    assign = np.empty(n, dtype=np.int64)
    for cid, members in enumerate(clusters):
        assign[members] = cid
    part = Partition(assign)
    return part, build_supergraph(graph, part)


def import_partition(text, graph):
    """Read ``node cluster`` lines. Node ids use the graph's original labels if it has any."""
    seen = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tokens = line.split()
        if len(tokens) < 2:
            raise ParseError(f"expected 'node cluster', got {line!r}", lineno)
        try:
            node, cluster = int(tokens[0]), int(tokens[1])
        except ValueError:
            raise ParseError(f"non-integer field in {line!r}", lineno) from None
        if node in seen:
            raise ValidationError(f"node {node} assigned twice (line {lineno})")
        seen[node] = cluster
    if graph.labels is not None:
        lookup = {int(lab): i for i, lab in enumerate(graph.labels)}
    else:
        lookup = None
    raw_assign = np.full(graph.n, -1, dtype=np.int64)
    for node, cluster in seen.items():
        idx = node if lookup is None else lookup.get(node, -1)
        if not 0 <= idx < graph.n:
            raise ValidationError(f"partition names unknown node {node}")
        raw_assign[idx] = cluster
    if len(seen) != graph.n:
        missing = int(np.flatnonzero(~np.isin(np.arange(graph.n), [lookup[u] if lookup else u for u in seen]))[0])
        name = missing if graph.labels is None else int(graph.labels[missing])
        raise ValidationError(f"{graph.n - len(seen)} node(s) missing from partition, e.g. {name}")
    part = Partition(_densify(raw_assign))
    return part, build_supergraph(graph, part)


def random_walk_path(graph, T, seed=0, start=None):
    """Simple random walk of ``T`` positions; each step moves to a uniform neighbour."""
    if T < 1:
        raise ValidationError("T must be at least 1")
    rng = np.random.default_rng(seed)
    deg = graph.degree
    if start is None:
        movable = np.flatnonzero(deg > 0)
        if len(movable) == 0:
            raise ValidationError("graph has no edges to walk along")
        start = int(movable[rng.integers(len(movable))])
    nodes = np.empty(T, dtype=np.int64)
    nodes[0] = v = int(start)
    for t in range(1, T):
        d = deg[v]
        if d == 0:
            raise ValidationError(f"random walk reached isolated node {v}")
        v = int(graph.indices[graph.indptr[v] + rng.integers(d)])
        nodes[t] = v
    return TruePath(nodes)


# ---------------------------------------------------------------------------
# distances


def hop_distances_from(g, source):
    """BFS hop counts from ``source`` to every node (``inf`` if unreachable)."""
    return shortest_path(g.adjacency, directed=False, unweighted=True, indices=int(source))


def hop_distance(g, a, b):
    """Minimum hop count between ``a`` and ``b``; ``None`` when disconnected."""
    if a == b:
        return 0
    order, pred = breadth_first_order(g.adjacency, int(a), directed=False, return_predecessors=True)
    if pred[b] < 0:
        return None
    hops, v = 0, int(b)
    while v != a:
        v = int(pred[v])
        hops += 1
    return hops


def euclidean_distance(graph, a, b):
    if graph.layout is None:
        raise ValidationError("euclidean distance needs node coordinates")
    return float(np.hypot(*(graph.layout[a] - graph.layout[b])))


def node_distance(graph, a, b, mode="euclidean"):
    if mode == "euclidean":
        return euclidean_distance(graph, a, b)
    if mode == "hop":
        d = hop_distance(graph, a, b)
        if d is None:
            raise UnreachableError(a, b)
        return float(d)
    raise ValidationError(f"unknown distance mode {mode!r}")


def cluster_max_distances(graph, partition, source, metric="euclidean"):
    """``d_max(source, C)`` for every cluster ``C``: max node distance across the two clusters."""
    members = partition.members(source)
    if metric == "euclidean":
        if graph.layout is None:
            raise ValidationError("euclidean d_max needs node coordinates")
        diff = graph.layout[members][:, None, :] - graph.layout[None, :, :]
        per_node = np.sqrt((diff ** 2).sum(axis=2)).max(axis=0)
    elif metric == "hop":
        dist = shortest_path(graph.adjacency, directed=False, unweighted=True, indices=members)
        per_node = np.atleast_2d(dist).max(axis=0)
        if np.isinf(per_node).any():
            bad = int(partition.assign[np.flatnonzero(np.isinf(per_node))[0]])
            raise UnreachableError(int(source), bad, what="clusters")
    else:
        raise ValidationError(f"unknown distance mode {metric!r}")
    return np.maximum.reduceat(per_node[partition.order], partition.starts[:-1])


def cluster_pair_max_distance(graph, partition, a, b, metric="euclidean"):
    return float(cluster_max_distances(graph, partition, a, metric)[b])


def supergraph_hop_distances(supergraph, source):
    return hop_distances_from(supergraph, source)


def square_center_distances(partition, B, source):
    """Euclidean distance between square centres, for square partitions."""
    if partition.grid_index is None:
        raise ValidationError("partition carries no grid index")
    g = partition.grid_index
    cx, cy = (g % B + 0.5) / B, (g // B + 0.5) / B
    return np.hypot(cx - cx[source], cy - cy[source])
