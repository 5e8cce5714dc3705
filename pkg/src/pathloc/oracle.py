"""Slow reference implementations for tests.

Nothing here imports the decoders or the bound recursions. Adjacency is
rebuilt from plain Python sets and Gaussian quantities come from the
standard library, so agreement with the fast paths is meaningful.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from statistics import NormalDist

import numpy as np

from .errors import BudgetError

MAX_FINE_NODES = 8
MAX_COARSE_NODES = 5
MAX_T = 6
MAX_WALKS = 10 ** 6


@dataclass(frozen=True)
class EnumerationBudget:
    max_nodes: int = MAX_FINE_NODES
    max_T: int = MAX_T
    max_walks: int = MAX_WALKS


def neighbour_sets(g):
    """Successor sets honouring super-graph self-loops, built from the raw edge data."""
    if hasattr(g, "self_loop"):
        m = len(g.self_loop)
        nb = [set() for _ in range(m)]
        for a in range(m):
            for b in g.indices[g.indptr[a]:g.indptr[a + 1]]:
                nb[a].add(int(b))
                nb[int(b)].add(a)
            if g.self_loop[a]:
                nb[a].add(a)
        return nb, MAX_COARSE_NODES
    nb = [set() for _ in range(g.n)]
    for u, v in g.edges:
        nb[int(u)].add(int(v))
        nb[int(v)].add(int(u))
    return nb, MAX_FINE_NODES


def enumerate_connected_walks(g, T, budget=None):
    """Yield every length-T walk (tuple of ids) in lexicographic order."""
    nb, node_cap = neighbour_sets(g)
    budget = budget or EnumerationBudget(max_nodes=node_cap)
    if len(nb) > min(node_cap, budget.max_nodes):
        raise BudgetError(f"{len(nb)} nodes exceed the enumeration budget")
    if T > budget.max_T:
        raise BudgetError(f"T={T} exceeds the enumeration budget")
    succ = [sorted(s) for s in nb]
    count = 0

    def extend(prefix):
        nonlocal count
        if len(prefix) == T:
            count += 1
            if count > budget.max_walks:
                raise BudgetError("walk count exceeds the enumeration budget")
            yield tuple(prefix)
            return
        for nxt in succ[prefix[-1]]:
            prefix.append(nxt)
            yield from extend(prefix)
            prefix.pop()

    for start in range(len(nb)):
        yield from extend([start])


def brute_force_max_sum(g, series, T=None):
    """Exhaustive maximiser of the sum signal; ties go to the lexicographically smallest walk."""
    y = np.asarray(getattr(series, "values", series), dtype=float)
    T = y.shape[0] if T is None else T
    best, best_walk = -math.inf, None
    for walk in enumerate_connected_walks(g, T):
        total = 0.0
        for t, v in enumerate(walk):
            total += y[t, v]
        if total > best:
            best, best_walk = total, walk
    return best_walk, best


def brute_force_bound(supergraph, truth, theta_of_size, kind, distances=None, delta=None):
    """Evaluate a bound's right-hand side term by term over all walks.

    ``kind`` is one of hammingSuper, hammingFine, destinationSuper,
    destinationFine. For the Hamming kinds ``delta`` fixes the threshold;
    when omitted the minimum over the 1/T grid is returned.
    """
    truth = [int(c) for c in truth]
    T = len(truth)
    sizes = supergraph.cluster_size
    log_th = {c: math.log(theta_of_size(int(sizes[c]))) for c in range(len(sizes))}
    mass = [0.0] * (T + 1)  # mass[w]: sum of products over walks with w mismatches
    dest = 0.0
    for walk in enumerate_connected_walks(supergraph, T):
        wrong = [t for t in range(T) if walk[t] != truth[t]]
        prod = math.exp(sum(log_th[walk[t]] for t in wrong))
        mass[len(wrong)] += prod
        if kind.startswith("destination"):
            dest += distances[walk[-1]] * prod
    if kind.startswith("destination"):
        return dest
    f = None
    if kind == "hammingFine":
        on_truth = sorted((theta_of_size(int(sizes[c])) for c in truth), reverse=True)
        f = [sum(on_truth[:k]) for k in range(T + 1)]

    def objective(j):
        val = j + sum(w * mass[w] for w in range(T + 1) if w > j)
        if f is not None:
            val += sum(f[T - w] * mass[w] for w in range(T + 1))
        return val

    if delta is not None:
        return objective(delta * T)
    return min(objective(j) for j in range(T + 1))


# ---------------------------------------------------------------------------
# Monte Carlo


@dataclass(frozen=True)
class Estimate:
    mean: float
    radius: float  # half-width of the reported interval

    @property
    def low(self):
        return self.mean - self.radius

    @property
    def high(self):
        return self.mean + self.radius


def _max_draws(rng, n, size, mu, sigma, on):
    """Max of ``size`` N(0, sigma^2) draws, one of which is shifted by mu when ``on``."""
    x = rng.normal(0.0, sigma, (n, size))
    if on:
        x[:, 0] += mu
    return x.max(axis=1)


def monte_carlo_exceedance(noise, true_sizes, alt_sizes, overlap, samples=10 ** 6, seed=0, chunk=200_000):
    """Frequency of sum_t W_t >= sum_t U_t with a 3-sigma binomial radius.

    At overlapping steps both paths read the same variable, so only the
    non-overlapping steps are simulated.
    """
    if samples < 10 ** 4:
        raise BudgetError("need at least 10^4 samples")
    rng = np.random.default_rng(seed)
    steps = [(ts, al) for ts, al, o in zip(true_sizes, alt_sizes, overlap) if not o]
    hits = 0
    done = 0
    while done < samples:
        n = min(chunk, samples - done)
        diff = np.zeros(n)
        for ts, al in steps:
            diff += _max_draws(rng, n, al, noise.mu, noise.sigma, False)
            diff -= _max_draws(rng, n, ts, noise.mu, noise.sigma, True)
        hits += int(np.count_nonzero(diff >= 0))
        done += n
    p = hits / samples
    return Estimate(p, 3.0 * math.sqrt(max(p * (1 - p), 1.0 / samples) / samples))


def monte_carlo_mgf(sigma, s, l, samples=10 ** 6, seed=0, resamples=400, batches=1000):
    """Sample mean of exp(s * max of l N(0, sigma^2)) with a batch-bootstrap 3-sigma radius."""
    if s * sigma > 3:
        raise BudgetError("s*sigma > 3 makes the estimator too heavy-tailed; use a smaller s")
    rng = np.random.default_rng(seed)
    per_batch = samples // batches
    means = np.empty(batches)
    for b in range(batches):
        means[b] = np.exp(s * rng.normal(0.0, sigma, (per_batch, l)).max(axis=1)).mean()
    boot = rng.choice(means, size=(resamples, batches), replace=True).mean(axis=1)
    return Estimate(float(means.mean()), 3.0 * float(boot.std(ddof=1)))


def max_of_two_mgf(s, sigma=1.0):
    """Closed form E[exp(s max(X1, X2))] = 2 exp(s^2 sigma^2 / 2) Phi(s sigma / sqrt 2)."""
    return 2.0 * math.exp(0.5 * (s * sigma) ** 2) * NormalDist().cdf(s * sigma / math.sqrt(2.0))


def upper_tail(x):
    """Q(x) by adaptive Simpson quadrature of the standard normal density."""
    if x < 0:
        return 1.0 - upper_tail(-x)
    pdf = lambda u: math.exp(-0.5 * u * u) / math.sqrt(2 * math.pi)  # noqa: E731
    hi = x + 40.0

    def simpson(a, b, fa, fm, fb):
        return (b - a) / 6 * (fa + 4 * fm + fb)

    def adapt(a, b, fa, fm, fb, whole, tol, depth):
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = pdf(lm), pdf(rm)
        left, right = simpson(a, m, fa, flm, fm), simpson(m, b, fm, frm, fb)
        if depth > 50 or abs(left + right - whole) <= 15 * tol:
            return left + right + (left + right - whole) / 15
        return adapt(a, m, fa, flm, fm, left, tol / 2, depth + 1) + adapt(m, b, fm, frm, fb, right, tol / 2, depth + 1)

    fa, fb, fm = pdf(x), pdf(hi), pdf(0.5 * (x + hi))
    return adapt(x, hi, fa, fm, fb, simpson(x, hi, fa, fm, fb), 1e-15, 0)


def split_integral_mgf_bound(s, sigma, l, eta):
    """Independent evaluation of the max-of-Gaussians MGF bound at one split point."""
    nd = NormalDist()
    if eta <= 0.0:
        z = -math.inf
    elif eta >= 1.0:
        z = math.inf
    else:
        z = nd.inv_cdf(eta)
    cdf = lambda x: 0.0 if x == -math.inf else (1.0 if x == math.inf else nd.cdf(x))  # noqa: E731
    head = l * eta ** (l - 1) * math.exp(0.5 * (s * sigma) ** 2) * cdf(z - s * sigma)
    tail = math.sqrt(l * l / (2 * l - 1) * (1 - eta ** (2 * l - 1))) * math.exp((s * sigma) ** 2) * math.sqrt(
        1.0 - cdf(z - 2 * s * sigma)
    )
    return head + tail


def theta_by_grid(mu, sigma, l, points=20001):
    """theta on a dense eta grid using only the standard library."""
    s = mu / (2 * sigma ** 2)
    on = math.exp(0.5 * (s * sigma) ** 2 - mu * s)
    best = min(split_integral_mgf_bound(s, sigma, l, i / (points - 1)) for i in range(points))
    return best * on


def floyd_warshall_hops(n, edges):
    inf = math.inf
    d = [[0 if i == j else inf for j in range(n)] for i in range(n)]
    for u, v in edges:
        d[int(u)][int(v)] = d[int(v)][int(u)] = 1
    for k in range(n):
        dk = d[k]
        for i in range(n):
            dik = d[i][k]
            if dik == inf:
                continue
            di = d[i]
            for j in range(n):
                if dik + dk[j] < di[j]:
                    di[j] = dik + dk[j]
    return d


def count_walks_by_matrix_power(adj, T):
    """Number of length-T walks: 1^T A^(T-1) 1."""
    A = np.asarray(adj, dtype=object)
    v = np.ones(A.shape[0], dtype=object)
    for _ in range(T - 1):
        v = A.dot(v)
    return int(sum(v))


def first_k_by_subsets(values, k):
    return max((sum(c) for c in itertools.combinations(values, k)), default=0.0)
