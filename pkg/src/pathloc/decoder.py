"""Chain estimators and the two error metrics.

The Viterbi recursion keeps, for every node, the best sum signal of a
connected walk ending there and the predecessor that achieved it. Neighbour
lists are scanned in ascending id order with a strict comparison, so ties go
to the lowest id. States with no finite predecessor hold ``-inf``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .errors import NumericError, ValidationError
from .graph import Graph, SuperGraph, TruePath, node_distance
from .signal import coarsen_observations, subtract_path_signal

FINE, COARSE = "fine", "coarse"


@dataclass(frozen=True, eq=False)
class ChainEstimate:
    ids: np.ndarray
    level: str
    sum_signal: float
    connected: bool

    @property
    def T(self):
        return len(self.ids)


@numba.njit(cache=True, nogil=True)
def _viterbi_kernel(indptr, indices, y, pred):
    T, n = y.shape
    prev = y[0].copy()
    cur = np.empty(n)
    for t in range(1, T):
        alive = False
        for v in range(n):
            best = -np.inf
            arg = -1
            for k in range(indptr[v], indptr[v + 1]):
                u = indices[k]
                if prev[u] > best:
                    best = prev[u]
                    arg = u
            pred[t, v] = arg
            if arg >= 0:
                cur[v] = best + y[t, v]
                alive = True
            else:
                cur[v] = -np.inf
        if not alive:
            return t, -np.inf, -1
        prev, cur = cur, prev
    best = -np.inf
    arg = -1
    for v in range(n):
        if prev[v] > best:
            best = prev[v]
            arg = v
    return 0, best, arg


@numba.njit(cache=True, nogil=True)
def _backtrack(pred, last):
    T = pred.shape[0]
    ids = np.empty(T, dtype=np.int64)
    ids[T - 1] = last
    for t in range(T - 1, 0, -1):
        ids[t - 1] = pred[t, ids[t]]
    return ids


@numba.njit(cache=True, nogil=True)
def _refine_kernel(y, coarse_ids, order, starts):
    T = y.shape[0]
    out = np.empty(T, dtype=np.int64)
    for t in range(T):
        c = coarse_ids[t]
        best = -np.inf
        arg = -1
        for k in range(starts[c], starts[c + 1]):
            v = order[k]
            if arg < 0 or y[t, v] > best:
                best = y[t, v]
                arg = v
        out[t] = arg
    return out


def _values(series):
    y = series.values if hasattr(series, "values") else series
    return np.ascontiguousarray(y, dtype=np.float64)


def _level_of(g):
    if isinstance(g, SuperGraph):
        return COARSE
    if isinstance(g, Graph):
        return FINE
    raise ValidationError(f"expected Graph or SuperGraph, got {type(g).__name__}")


def viterbi_max_sum_path(g, series):
    """Connected walk of maximum sum signal on a graph or super-graph.

    On a super-graph a cluster may be revisited at consecutive times only
    if it carries a self-loop.
    """
    y = _values(series)
    T, n = y.shape
    level = _level_of(g)
    size = g.n if level == FINE else g.m
    if n != size or T < 1:
        raise ValidationError(f"series shape {y.shape} does not match {size} nodes")
    indptr, indices = g.neighborhood()
    pred = np.empty((T, n), dtype=np.int32)
    dead_at, best, arg = _viterbi_kernel(indptr, indices, y, pred)
    if dead_at:
        raise NumericError(f"no connected walk reaches time step {dead_at}")
    if arg < 0:
        raise NumericError("no state has a finite sum signal")
    ids = _backtrack(pred, arg)
    return ChainEstimate(ids=ids, level=level, sum_signal=float(best), connected=True)


def coarse_viterbi(supergraph, coarse):
    return viterbi_max_sum_path(supergraph, coarse)


def naive_argmax_chain(obs, graph=None):
    """Per-timestep argmax, ignoring the path constraint."""
    y = _values(obs)
    ids = np.argmax(y, axis=1)
    total = float(y[np.arange(len(ids)), ids].sum())
    connected = bool(graph.is_connected_walk(ids)) if graph is not None else False
    return ChainEstimate(ids=ids, level=FINE, sum_signal=total, connected=connected)


def refine_chain(obs, partition, coarse_chain, graph=None):
    """Pick the strongest node inside each estimated cluster."""
    y = _values(obs)
    ids = _refine_kernel(y, np.asarray(coarse_chain.ids, dtype=np.int64), partition.order, partition.starts)
    total = float(y[np.arange(len(ids)), ids].sum())
    connected = bool(graph.is_connected_walk(ids)) if graph is not None else False
    return ChainEstimate(ids=ids, level=FINE, sum_signal=total, connected=connected)


def multiscale_viterbi(graph, partition, supergraph, obs):
    """Coarse Viterbi on the max-coarsened series, then in-cluster argmax."""
    coarse = coarse_viterbi(supergraph, coarsen_observations(obs, partition))
    return coarse, refine_chain(obs, partition, coarse, graph)


@dataclass(frozen=True, eq=False)
class MultiPathResult:
    chains: list
    coarse_chains: list
    node_sets: list  # per t, frozenset of estimated node ids


def multipath_multiscale(graph, partition, supergraph, obs, k):
    """Find ``k`` paths one after another, removing each found signal before the next round."""
    if k < 1:
        raise ValidationError("k must be at least 1")
    work = obs
    chains, coarse_chains = [], []
    for _ in range(k):
        coarse, fine = multiscale_viterbi(graph, partition, supergraph, work)
        chains.append(fine)
        coarse_chains.append(coarse)
        work = subtract_path_signal(work, fine, obs.noise.mu)
    sets = [frozenset(int(c.ids[t]) for c in chains) for t in range(obs.T)]
    return MultiPathResult(chains=chains, coarse_chains=coarse_chains, node_sets=sets)


# ---------------------------------------------------------------------------
# metrics


def _ids_and_level(x, level_hint=None):
    if isinstance(x, ChainEstimate):
        return np.asarray(x.ids), x.level
    if isinstance(x, TruePath):
        if level_hint == COARSE:
            if x.projected is None:
                raise ValidationError("true path has no projection; call TruePath.project first")
            return x.projected, COARSE
        return x.nodes, FINE
    return np.asarray(x), level_hint


def hamming_distance(a, b):
    """Number of time steps where the two chains disagree."""
    ia, la = _ids_and_level(a)
    ib, lb = _ids_and_level(b, la)
    if la is None:
        ia, la = _ids_and_level(a, lb)
    if la is not None and lb is not None and la != lb:
        raise ValidationError(f"cannot compare a {la} chain with a {lb} chain")
    if len(ia) != len(ib):
        raise ValidationError(f"chain lengths differ: {len(ia)} vs {len(ib)}")
    return int(np.count_nonzero(np.asarray(ia) != np.asarray(ib)))


def normalized_hamming(a, b):
    ia, _ = _ids_and_level(a)
    return hamming_distance(a, b) / len(ia)


def destination_distance(a, truth, graph, mode="euclidean"):
    ids, _ = _ids_and_level(a)
    end = truth.nodes[-1] if isinstance(truth, TruePath) else np.asarray(truth)[-1]
    if int(ids[-1]) == int(end):
        return 0.0
    return node_distance(graph, int(ids[-1]), int(end), mode)


def set_hamming(estimated_sets, true_sets):
    """Sum over t of |truth symmetric-difference estimate| / 2."""
    if len(estimated_sets) != len(true_sets):
        raise ValidationError("set sequences have different lengths")
    return sum(len(set(e) ^ set(s)) / 2.0 for e, s in zip(estimated_sets, true_sets))


def true_node_sets(paths):
    T = paths[0].T
    return [frozenset(int(p.nodes[t]) for p in paths) for t in range(T)]
