"""Triad pseudo-residuals, kernel independence testing, and cluster location."""

import itertools
import json
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import stats

from . import _kernels
from .data import DomainDataset
from .errors import (
    DegenerateReference,
    InsufficientSamples,
    InvalidClusters,
    NoClustersFound,
    UncorrelatedTriple,
)

CORR_THRESHOLD = 0.05
MIN_TEST_SAMPLES = 50


@dataclass(frozen=True)
class ClusterSpec:
    """Disjoint groups of observed-variable indices, one group per latent factor."""

    clusters: tuple
    factor_names: tuple = ()

    def __post_init__(self):
        clusters = tuple(tuple(int(i) for i in c) for c in self.clusters)
        seen = set()
        for c in clusters:
            if len(c) < 2:
                raise InvalidClusters(f"cluster {c} has fewer than 2 pure indicators")
            if seen.intersection(c) or len(set(c)) != len(c):
                raise InvalidClusters("clusters overlap")
            seen.update(c)
        names = tuple(self.factor_names) or tuple(f"f{k + 1}" for k in range(len(clusters)))
        if len(names) != len(clusters):
            raise InvalidClusters("one factor name per cluster is required")
        object.__setattr__(self, "clusters", clusters)
        object.__setattr__(self, "factor_names", names)

    @property
    def q(self):
        return len(self.clusters)

    def validate(self, p):
        for c in self.clusters:
            if max(c) >= p or min(c) < 0:
                raise InvalidClusters(f"cluster {c} has indices outside 0..{p - 1}")
        return self

    def membership(self, p):
        """Factor index of each variable, -1 for unclustered ones."""
        out = np.full(p, -1, dtype=int)
        for k, c in enumerate(self.clusters):
            out[list(c)] = k
        return out

    def to_mapping(self, variable_names):
        return {f: [variable_names[i] for i in c] for f, c in zip(self.factor_names, self.clusters)}

    @classmethod
    def from_mapping(cls, mapping, variable_names):
        index = {v: i for i, v in enumerate(variable_names)}
        try:
            clusters = [[index[v] for v in vs] for vs in mapping.values()]
        except KeyError as exc:
            raise InvalidClusters(f"unknown variable {exc.args[0]!r} in clusters") from exc
        return cls(tuple(map(tuple, clusters)), tuple(mapping))


def write_clusters(path, spec, variable_names):
    with open(path, "w") as fh:
        json.dump(spec.to_mapping(variable_names), fh, indent=2)
        fh.write("\n")


def read_clusters(path, variable_names):
    with open(path) as fh:
        mapping = json.load(fh)
    if not isinstance(mapping, dict):
        raise InvalidClusters(f"{path}: expected a mapping of factor name to variable names")
    return ClusterSpec.from_mapping(mapping, variable_names)


@dataclass(frozen=True)
class IndependenceTestConfig:
    alpha: float = 0.01
    kernel_bandwidth: object = "median"  # "median" or a fixed positive float
    max_test_samples: int = 1000

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.max_test_samples < MIN_TEST_SAMPLES:
            raise ValueError(f"max_test_samples must be >= {MIN_TEST_SAMPLES}")
        bw = self.kernel_bandwidth
        if bw != "median" and not (isinstance(bw, (int, float)) and bw > 0):
            raise ValueError("kernel_bandwidth must be 'median' or a positive number")


class Direction(Enum):
    C1_TO_C2 = "C1ToC2"
    C2_TO_C1 = "C2ToC1"
    UNDECIDED = "Undecided"


def _cov(a, b):
    return float(np.dot(a - a.mean(), b - b.mean()) / (a.shape[0] - 1))


def pseudo_residual(xi, xj, xk):
    """E = xi - cov(xi, xk) / cov(xj, xk) * xj."""
    xi, xj, xk = (np.asarray(v, dtype=np.float64) for v in (xi, xj, xk))
    if not (xi.shape == xj.shape == xk.shape) or xi.ndim != 1 or xi.shape[0] < 3:
        raise ValueError("series must be 1-D with equal length >= 3")
    cjk = _cov(xj, xk)
    if abs(cjk) <= 1e-10:
        raise DegenerateReference(f"cov(xj, xk) = {cjk:.3g}")
    return xi - (_cov(xi, xk) / cjk) * xj


def _bandwidth(x, cfg):
    if cfg.kernel_bandwidth != "median":
        return float(cfg.kernel_bandwidth)
    s = _kernels.median_abs_diff(x)
    if s <= 0:
        s = float(np.std(x)) or 1.0
    return s


def hsic_gamma(u, v, cfg=IndependenceTestConfig()):
    """HSIC statistic and gamma-approximation p-value (Gaussian kernels)."""
    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    if u.shape != v.shape:
        raise ValueError("series must have equal length")
    n = u.shape[0]
    if n < MIN_TEST_SAMPLES:
        raise InsufficientSamples(f"{n} < {MIN_TEST_SAMPLES} samples")
    if n > cfg.max_test_samples:
        idx = np.floor(np.linspace(0, n - 1, cfg.max_test_samples)).astype(int)
        u, v = u[idx], v[idx]
    m = u.shape[0]
    stat, var_sum, off_k, off_l = _kernels.hsic_moments(u, v, _bandwidth(u, cfg), _bandwidth(v, cfg))
    var_hsic = var_sum / m / (m - 1)
    var_hsic *= 72.0 * (m - 4) * (m - 5) / m / (m - 1) / (m - 2) / (m - 3)
    mu_x = off_k / m / (m - 1)
    mu_y = off_l / m / (m - 1)
    mean_hsic = (1.0 + mu_x * mu_y - mu_x - mu_y) / m
    if var_hsic <= 0 or mean_hsic <= 0:
        return stat, 1.0
    shape = mean_hsic ** 2 / var_hsic
    scale = var_hsic * m / mean_hsic
    p = float(stats.gamma.sf(stat, shape, scale=scale))
    return stat, min(max(p, 0.0), 1.0)


def independence_test(u, v, cfg=IndependenceTestConfig()):
    """p-value of the kernel independence test between two series."""
    return hsic_gamma(u, v, cfg)[1]


def _data_matrix(data):
    return data.data if isinstance(data, DomainDataset) else np.asarray(data, dtype=np.float64)


def _check_correlated(X, idx):
    C = np.corrcoef(X[list(idx)])
    for a, b in itertools.combinations(range(len(idx)), 2):
        if not abs(C[a, b]) > CORR_THRESHOLD:
            raise UncorrelatedTriple(f"|corr(x{idx[a]}, x{idx[b]})| = {abs(C[a, b]):.3g}")


def triad_p_value(i, j, k, data, cfg=IndependenceTestConfig()):
    X = _data_matrix(data)
    if len({i, j, k}) != 3:
        raise ValueError("i, j, k must be distinct")
    _check_correlated(X, (i, j, k))
    return independence_test(pseudo_residual(X[i], X[j], X[k]), X[k], cfg)


def triad_violated(i, j, k, data, cfg=IndependenceTestConfig()):
    """True iff E_(i,j|k) is found dependent on x_k at level ``cfg.alpha``."""
    return triad_p_value(i, j, k, data, cfg) < cfg.alpha


def locate_clusters(data, cfg=IndependenceTestConfig()):
    """Group variables into latent clusters from pure-compatible pairs.

    A correlated pair {i, j} is pure-compatible when the Triad constraint
    holds for every other reference k correlated with both; clusters are the
    connected components of the compatibility graph with at least 2 members.
    """
    X = _data_matrix(data)
    p = X.shape[0]
    C = np.abs(np.corrcoef(X))
    corr = C > CORR_THRESHOLD
    parent = list(range(p))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    any_pair = False
    for i, j in itertools.combinations(range(p), 2):
        if not corr[i, j]:
            continue
        refs = [k for k in range(p) if k not in (i, j) and corr[i, k] and corr[j, k]]
        ok = True
        for k in refs:
            try:
                if triad_violated(i, j, k, X, cfg) or triad_violated(j, i, k, X, cfg):
                    ok = False
                    break
            except DegenerateReference:
                continue
        if ok:
            any_pair = True
            parent[find(i)] = find(j)
    if not any_pair:
        raise NoClustersFound("no pure-compatible pair of variables")
    groups = {}
    for i in range(p):
        groups.setdefault(find(i), []).append(i)
    clusters = sorted((tuple(g) for g in groups.values() if len(g) >= 2), key=lambda c: c[0])
    return ClusterSpec(tuple(clusters))


def pairwise_direction(c1, c2, data, cfg=IndependenceTestConfig()):
    """Decide the causal direction between two latent clusters.

    Configuration "a -> b" takes x_i from cluster a and (x_j, x_k) from
    cluster b; it is violated iff a -> b. Each choice of indicators casts a
    vote; ties are broken by the larger mean p-value gap.
    """
    X = _data_matrix(data)
    c1, c2 = list(c1), list(c2)
    if len(c1) < 2 or len(c2) < 2:
        raise InvalidClusters("both clusters need at least 2 indicators")

    def side(cause, effect):
        out = []
        for i in cause:
            for j, k in itertools.permutations(effect, 2):
                try:
                    out.append(triad_p_value(i, j, k, X, cfg))
                except (UncorrelatedTriple, DegenerateReference):
                    continue
        return out

    p12 = side(c1, c2)
    p21 = side(c2, c1)
    if not p12 or not p21:
        return Direction.UNDECIDED
    votes = {Direction.C1_TO_C2: 0, Direction.C2_TO_C1: 0}
    for a, b in zip(p12, p21):
        va, vb = a < cfg.alpha, b < cfg.alpha
        if va and not vb:
            votes[Direction.C1_TO_C2] += 1
        elif vb and not va:
            votes[Direction.C2_TO_C1] += 1
    if votes[Direction.C1_TO_C2] == votes[Direction.C2_TO_C1]:
        if votes[Direction.C1_TO_C2] == 0:
            return Direction.UNDECIDED
        gap = np.mean(p21) - np.mean(p12)
        if gap == 0:
            return Direction.UNDECIDED
        return Direction.C1_TO_C2 if gap > 0 else Direction.C2_TO_C1
    return max(votes, key=votes.get)
