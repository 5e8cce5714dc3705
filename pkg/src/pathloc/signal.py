"""Path-signal synthesis, max-coarsening and multi-path signal arithmetic."""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace

import numpy as np

from .errors import ValidationError

DUMP_MAGIC = b"PATHOBS1"
_HEADER = struct.Struct("<8sQQ")


@dataclass(frozen=True)
class NoiseModel:
    mu: float
    sigma: float = 1.0

    def __post_init__(self):
        if not self.mu > 0:
            raise ValidationError(f"mu must be positive, got {self.mu}")
        if not self.sigma > 0:
            raise ValidationError(f"sigma must be positive, got {self.sigma}")

    @property
    def snr(self):
        return self.mu / self.sigma


@dataclass(frozen=True, eq=False)
class ObservationSeries:
    values: np.ndarray  # (T, n)
    noise: NoiseModel
    truth: tuple = ()
    seed: int | None = None

    @property
    def T(self):
        return self.values.shape[0]

    @property
    def n(self):
        return self.values.shape[1]


@dataclass(frozen=True, eq=False)
class CoarseObservationSeries:
    values: np.ndarray  # (T, m)

    @property
    def T(self):
        return self.values.shape[0]

    @property
    def m(self):
        return self.values.shape[1]


def activation_mask(n, paths):
    """Boolean (T, n) matrix, true where at least one path sits at time t."""
    T = paths[0].T
    mask = np.zeros((T, n), dtype=bool)
    rows = np.arange(T)
    for p in paths:
        if p.T != T:
            raise ValidationError("all paths must have the same length")
        if p.nodes.min() < 0 or p.nodes.max() >= n:
            raise ValidationError("path visits an unknown node")
        mask[rows, p.nodes] = True
    return mask


def synthesize_observations(graph, paths, noise, seed=0):
    """y_t(v) = mu * [v on some path at t] + N(0, sigma^2).

    The Gaussian draws depend only on ``seed`` and the shape, never on
    ``mu``, so sweeping the SNR at a fixed seed reuses the same noise.
    """
    if hasattr(paths, "nodes"):
        paths = (paths,)
    paths = tuple(paths)
    if not paths:
        raise ValidationError("need at least one path")
    n = graph if isinstance(graph, (int, np.integer)) else graph.n
    mask = activation_mask(n, paths)
    rng = np.random.default_rng(seed)
    values = rng.standard_normal(mask.shape)  # filled t-major, v-minor
    values *= noise.sigma
    values[mask] += noise.mu
    return ObservationSeries(values=values, noise=noise, truth=paths, seed=seed)


def coarsen_observations(obs, partition):
    """u_t(V_i) = max over v in V_i of y_t(v)."""
    y = obs.values if hasattr(obs, "values") else np.asarray(obs)
    if y.shape[1] != partition.n:
        raise ValidationError("partition does not match the observation width")
    u = np.maximum.reduceat(y[:, partition.order], partition.starts[:-1], axis=1)
    return CoarseObservationSeries(values=u)


def subtract_path_signal(obs, chain, mu):
    ids = chain.ids if hasattr(chain, "ids") else np.asarray(chain)
    if len(ids) != obs.T:
        raise ValidationError("chain length does not match the observation horizon")
    values = obs.values.copy()
    values[np.arange(obs.T), ids] -= mu
    return replace(obs, values=values)


def add_path_signal(obs, chain, mu):
    return subtract_path_signal(obs, chain, -mu)


def dump_observations(obs, fh):
    """Little-endian float64 matrix preceded by a 24-byte {magic, T, n} header."""
    fh.write(_HEADER.pack(DUMP_MAGIC, obs.T, obs.n))
    fh.write(np.ascontiguousarray(obs.values, dtype="<f8").tobytes())


def load_observation_matrix(fh):
    magic, T, n = _HEADER.unpack(fh.read(_HEADER.size))
    if magic != DUMP_MAGIC:
        raise ValidationError("not an observation dump")
    data = np.frombuffer(fh.read(8 * T * n), dtype="<f8")
    if data.size != T * n:
        raise ValidationError("truncated observation dump")
    return data.reshape(T, n).astype(float)
