"""Confirmatory factor analysis under a pure-indicator pattern, and factor scores."""

import json
import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, InvalidClusters, NonConvergence, RankDeficientLoadings
from .optim import minimize_unconstrained
from .triad import ClusterSpec

log = logging.getLogger(__name__)

PSI_FLOOR = 1e-6


@dataclass(frozen=True)
class MeasurementModel:
    """Loadings ``G`` (p x q), error variances ``Psi`` and factor correlations ``Phi``.

    Unclustered variables have an all-zero loading row and ``Psi`` equal to
    their sample variance.
    """

    loadings: np.ndarray
    error_variances: np.ndarray
    clusters: ClusterSpec
    factor_corr: np.ndarray = None
    heywood: bool = False
    variable_names: tuple = ()

    def __post_init__(self):
        G = np.array(self.loadings, dtype=np.float64)
        p, q = G.shape
        psi = np.array(self.error_variances, dtype=np.float64).ravel()
        if psi.shape != (p,):
            raise DimensionMismatch(f"{psi.shape[0]} error variances for {p} variables")
        phi = np.eye(q) if self.factor_corr is None else np.array(self.factor_corr, dtype=np.float64)
        names = tuple(self.variable_names) or tuple(f"x{i + 1}" for i in range(p))
        for a in (G, psi, phi):
            a.setflags(write=False)
        object.__setattr__(self, "loadings", G)
        object.__setattr__(self, "error_variances", psi)
        object.__setattr__(self, "factor_corr", phi)
        object.__setattr__(self, "variable_names", names)

    @property
    def p(self):
        return self.loadings.shape[0]

    @property
    def q(self):
        return self.loadings.shape[1]

    def to_dict(self):
        names = self.variable_names
        fac = self.clusters.factor_names
        trip = [[names[i], fac[k], float(self.loadings[i, k])]
                for i, k in zip(*np.nonzero(self.loadings))]
        return {
            "variables": list(names),
            "factors": list(fac),
            "clusters": self.clusters.to_mapping(names),
            "loadings": trip,
            "error_variances": {v: float(e) for v, e in zip(names, self.error_variances)},
            "factor_corr": self.factor_corr.tolist(),
            "heywood": bool(self.heywood),
        }

    @classmethod
    def from_dict(cls, d):
        names = list(d["variables"])
        fac = list(d["factors"])
        vi = {v: i for i, v in enumerate(names)}
        fi = {f: k for k, f in enumerate(fac)}
        G = np.zeros((len(names), len(fac)))
        for v, f, val in d["loadings"]:
            G[vi[v], fi[f]] = val
        spec = ClusterSpec.from_mapping(d["clusters"], names)
        psi = [d["error_variances"][v] for v in names]
        return cls(G, psi, spec, np.array(d["factor_corr"]), bool(d.get("heywood", False)), tuple(names))


def save_measurement(path, model):
    with open(path, "w") as fh:
        json.dump(model.to_dict(), fh, indent=2)
        fh.write("\n")


def load_measurement(path):
    with open(path) as fh:
        return MeasurementModel.from_dict(json.load(fh))


def implied_covariance(model):
    """G Phi G^T + diag(Psi)."""
    G = model.loadings
    return G @ model.factor_corr @ G.T + np.diag(model.error_variances)


def _as_matrix(data):
    return np.asarray(getattr(data, "data", data), dtype=np.float64)


class _CfaParams:
    """Packing of (free loadings, sqrt-offset error variances, Phi row factors)."""

    def __init__(self, member, q):
        self.member = member
        self.rows = np.flatnonzero(member >= 0)
        self.cols = member[self.rows]
        self.q = q
        self.p = self.rows.size
        self.tril = [(i, j) for i in range(1, q) for j in range(i + 1)]

    @property
    def size(self):
        return 2 * self.p + len(self.tril)

    def unpack(self, x):
        G = np.zeros((self.p, self.q))
        G[np.arange(self.p), self.cols] = x[:self.p]
        theta = x[self.p:2 * self.p]
        L = np.eye(self.q)
        for v, (i, j) in zip(x[2 * self.p:], self.tril):
            L[i, j] = v
        norms = np.linalg.norm(L, axis=1)
        U = L / norms[:, None]
        return G, theta, L, norms, U


def _cfa_objective(x, S, par):
    G, theta, L, norms, U = par.unpack(x)
    psi = PSI_FLOOR + theta ** 2
    phi = U @ U.T
    R = S - (G @ phi @ G.T + np.diag(psi))
    value = float(np.sum(R * R))
    dG = -4.0 * R @ G @ phi
    dpsi = -2.0 * np.diag(R)
    dphi = -2.0 * G.T @ R @ G
    dU = 2.0 * dphi @ U
    dL = (dU - np.sum(dU * U, axis=1, keepdims=True) * U) / norms[:, None]
    grad = np.concatenate([
        dG[np.arange(par.p), par.cols],
        dpsi * 2.0 * theta,
        np.array([dL[i, j] for i, j in par.tril]),
    ])
    return value, grad


def fit_cfa(data, clusters, max_iter=5000, tol=1e-10):
    """Unweighted least-squares CFA with unit factor variances.

    Minimizes ||S - (G Phi G^T + Psi)||^2 over the pattern-free loadings,
    the diagonal ``Psi`` (floored at 1e-6) and the factor correlations
    ``Phi``. The first loading of every factor is made non-negative.
    """
    X = _as_matrix(data)
    p, n = X.shape
    if not isinstance(clusters, ClusterSpec):
        clusters = ClusterSpec(tuple(map(tuple, clusters)))
    clusters.validate(p)
    if any(len(c) < 2 for c in clusters.clusters):
        raise InvalidClusters("every factor needs at least 2 indicators")
    if n <= p:
        warnings.warn(f"n = {n} <= p = {p}; covariance estimate is rank deficient", RuntimeWarning)
    S_full = np.cov(X)
    member = clusters.membership(p)
    par = _CfaParams(member, clusters.q)
    S = S_full[np.ix_(par.rows, par.rows)]

    load0 = np.empty(par.p)
    for a, i in enumerate(par.rows):
        sib = [b for b, j in enumerate(par.rows) if j != i and member[j] == member[i]]
        load0[a] = np.sqrt(max(np.abs(S[a, sib]).max(), 1e-4))
    x0 = np.concatenate([load0, np.full(par.p, np.sqrt(0.5 - PSI_FLOOR)), np.array([float(i == j) for i, j in par.tril])])
    res = minimize_unconstrained(lambda x: _cfa_objective(x, S, par), x0, tol=tol, max_iter=max_iter, ftol=1e-15)
    if res.n_iter >= max_iter and res.grad_norm > 1e-4:
        raise NonConvergence(f"CFA did not converge in {max_iter} iterations (|grad| = {res.grad_norm:.3g})")

    G_sub, theta, _, _, U = par.unpack(res.x)
    phi = U @ U.T
    np.fill_diagonal(phi, 1.0)
    psi_sub = PSI_FLOOR + theta ** 2
    heywood = bool(np.any(theta ** 2 < 1e-3 * PSI_FLOOR))
    if heywood:
        log.warning("Heywood case: an error variance is pinned at the floor %.1e", PSI_FLOOR)

    G = np.zeros((p, clusters.q))
    G[par.rows] = G_sub
    for k in range(clusters.q):
        first = min(clusters.clusters[k])
        if G[first, k] < 0:
            G[:, k] *= -1
            phi[k, :] *= -1
            phi[:, k] *= -1
    psi = np.diag(S_full).copy()
    psi[par.rows] = psi_sub
    names = getattr(data, "variable_names", ())
    return MeasurementModel(G, psi, clusters, phi, heywood, tuple(names))


def factor_scores(model, data):
    """Unweighted projection scores (G^T G)^{-1} G^T X, shape (q, n)."""
    G = model.loadings if isinstance(model, MeasurementModel) else np.asarray(model, dtype=np.float64)
    X = _as_matrix(data)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != G.shape[0]:
        raise DimensionMismatch(f"loadings are {G.shape}, data has {X.shape[0]} rows")
    GtG = G.T @ G
    if np.linalg.eigvalsh(GtG).min() <= 1e-10:
        raise RankDeficientLoadings("G^T G is singular")
    return np.linalg.solve(GtG, G.T @ X)


def reconstruction_constant(model, data):
    """0.5 * sum_t ||X(t) - G G^+ X(t)||^2 weighted by Psi^{-1}."""
    G = model.loadings
    X = _as_matrix(data)
    resid = X - G @ factor_scores(model, X)
    return 0.5 * float(np.sum(resid * resid / model.error_variances[:, None]))


def augmented_clusters(per_domain, sizes):
    """Shift per-domain ClusterSpecs into augmented row indices (block pattern)."""
    out, names, offset = [], [], 0
    for m, (spec, pm) in enumerate(zip(per_domain, sizes), start=1):
        out.extend(tuple(i + offset for i in c) for c in spec.clusters)
        names.extend(f"d{m}_{f}" for f in spec.factor_names)
        offset += pm
    return ClusterSpec(tuple(out), tuple(names))


def augmented_model(models):
    """Block-diagonal merge of per-domain measurement models."""
    from scipy.linalg import block_diag

    spec = augmented_clusters([m.clusters for m in models], [m.p for m in models])
    names = tuple(f"d{k}_{v}" if not v.startswith(f"d{k}_") else v
                  for k, m in enumerate(models, start=1) for v in m.variable_names)
    return MeasurementModel(
        block_diag(*[m.loadings for m in models]),
        np.concatenate([m.error_variances for m in models]),
        spec,
        block_diag(*[m.factor_corr for m in models]),
        any(m.heywood for m in models),
        names,
    )
