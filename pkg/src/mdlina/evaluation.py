"""Skeleton metrics, matched effect error, VIF and k-fold cross-validation."""

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np

from .data import DomainDataset, Hyperparams, standardize
from .errors import DimensionMismatch, MdLinaError, SingularDesign
from .lina import fit_structure, laplace_nll
from .measurement import factor_scores, fit_cfa, reconstruction_constant

log = logging.getLogger(__name__)

VIF_FLAG = 10.0
EXACT_MATCH_MAX_Q = 10


@dataclass(frozen=True)
class SkeletonMetrics:
    recall: float
    precision: float
    f1: float
    tp: int
    fp: int
    fn: int

    def to_dict(self):
        return {"recall": self.recall, "precision": self.precision, "f1": self.f1,
                "tp": self.tp, "fp": self.fp, "fn": self.fn}


def _skeleton(B, eps):
    A = np.abs(B) > eps
    A = A | A.T
    return A[np.triu_indices(A.shape[0], k=1)]


def skeleton_metrics(B_est, B_true, eps=0.0, directed=False):
    """Undirected edge recovery; ``directed=True`` compares ordered edges instead."""
    B_est = np.asarray(B_est, dtype=np.float64)
    B_true = np.asarray(B_true, dtype=np.float64)
    if B_est.shape != B_true.shape:
        raise DimensionMismatch(f"estimate is {B_est.shape}, truth is {B_true.shape}")
    if directed:
        off = ~np.eye(B_est.shape[0], dtype=bool)
        E, T = (np.abs(B_est) > eps)[off], (np.abs(B_true) > eps)[off]
    else:
        E, T = _skeleton(B_est, eps), _skeleton(B_true, eps)
    tp = int(np.sum(E & T))
    fp = int(np.sum(E & ~T))
    fn = int(np.sum(~E & T))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 1.0
    f1 = 2 * recall * precision / (recall + precision) if recall + precision else 0.0
    return SkeletonMetrics(recall, precision, f1, tp, fp, fn)


def _match_columns(G_est, G_true):
    q = G_true.shape[1]
    C = np.abs(G_est.T @ G_true)
    norms = np.outer(np.linalg.norm(G_est, axis=0), np.linalg.norm(G_true, axis=0))
    C = np.divide(C, norms, out=np.zeros_like(C), where=norms > 0)
    if q <= EXACT_MATCH_MAX_Q:
        perm = max(itertools.permutations(range(q)), key=lambda p: sum(C[p[k], k] for k in range(q)))
    else:
        perm, free = [None] * q, set(range(q))
        for k in np.argsort(-C.max(axis=0)):
            j = max(free, key=lambda j: C[j, k])
            perm[k] = j
            free.discard(j)
    perm = np.array(perm)
    signs = np.sign(np.sum(G_est[:, perm] * G_true, axis=0))
    signs[signs == 0] = 1.0
    return perm, signs


def matched_effect_error(B_est, G_est, B_true, G_true):
    """Align estimated factors to the true ones, then mean |B_est - B_true| on the union support.

    Returns ``(perm, signs, error)`` where true factor k corresponds to
    estimated factor ``perm[k]`` with sign ``signs[k]``.
    """
    B_est, G_est, B_true, G_true = (np.asarray(a, dtype=np.float64) for a in (B_est, G_est, B_true, G_true))
    if G_est.shape != G_true.shape or B_est.shape != B_true.shape or B_est.shape[0] != G_est.shape[1]:
        raise DimensionMismatch(f"shapes B {B_est.shape}/{B_true.shape}, G {G_est.shape}/{G_true.shape}")
    perm, signs = _match_columns(G_est, G_true)
    B = B_est[np.ix_(perm, perm)] * np.outer(signs, signs)
    union = (B != 0) | (B_true != 0)
    err = float(np.mean(np.abs(B - B_true)[union])) if union.any() else 0.0
    return perm, signs, err


def vif(X):
    """Variance inflation factors 1 / (1 - R^2) from regressing each row on the others."""
    X = np.asarray(getattr(X, "data", X), dtype=np.float64)
    p, n = X.shape
    if n <= p:
        raise SingularDesign(f"need n > p, got n = {n}, p = {p}")
    R = np.corrcoef(X)
    if not np.all(np.isfinite(R)):
        raise SingularDesign("a variable has zero variance")
    s = np.linalg.svd(R, compute_uv=False)
    if s.min() <= 1e-10 * s.max():
        raise SingularDesign("design is rank deficient")
    # diagonal of the inverse correlation matrix is exactly 1 / (1 - R_i^2)
    return np.maximum(np.diag(np.linalg.inv(R)), 1.0)


def vif_flags(values, threshold=VIF_FLAG):
    return np.asarray(values) >= threshold


# --------------------------------------------------------------------------
# cross-validation
# --------------------------------------------------------------------------


@dataclass
class CvReport:
    grid: list
    mean_validation_negloglik: list
    fold_values: list = field(default_factory=list)
    failed: list = field(default_factory=list)
    best_cell: tuple = None

    def rows(self):
        for (l1, eps), v, bad in zip(self.grid, self.mean_validation_negloglik, self.failed):
            yield l1, eps, v, bad


def fold_indices(n, k, seed=0):
    """k disjoint contiguous blocks of a seeded shuffle of 0..n-1."""
    if k < 2 or n < k:
        raise ValueError(f"need 2 <= k <= n, got k = {k}, n = {n}")
    order = np.random.default_rng(seed).permutation(n)
    return np.array_split(order, k)


def cross_validate(data, clusters, grid, k=10, hp=None):
    """Pick (lambda1, eps) by held-out unpenalized negative log-likelihood.

    Each fold is standardized with its own training split's statistics
    applied to both parts; the loadings come from the training split.
    """
    hp = hp or Hyperparams()
    d = data if isinstance(data, DomainDataset) else DomainDataset(data, None)
    X = d.data
    folds = fold_indices(X.shape[1], k, hp.seed)
    grid = [(float(a), float(b)) for a, b in grid]
    means, per_fold, failed = [], [], []
    for l1, eps in grid:
        cell_hp = hp.with_(lambda1=l1, threshold_eps=eps)
        vals = []
        try:
            for f in range(k):
                val = folds[f]
                train = np.concatenate([folds[g] for g in range(k) if g != f])
                vals.append(_fold_nll(X, train, val, clusters, cell_hp))
        except MdLinaError as exc:
            log.warning("cv cell (%g, %g) failed: %s", l1, eps, exc)
            means.append(float("nan"))
            per_fold.append(vals)
            failed.append(True)
            continue
        means.append(float(np.mean(vals)))
        per_fold.append(vals)
        failed.append(False)
    ok = [i for i, bad in enumerate(failed) if not bad]
    best = None
    if ok:
        i = min(ok, key=lambda i: (means[i], grid[i][0], grid[i][1]))
        best = grid[i]
    return CvReport(grid, means, per_fold, failed, best)


def _fold_nll(X, train, val, clusters, hp):
    Xt, Xv = X[:, train], X[:, val]
    mu = Xt.mean(axis=1, keepdims=True)
    sd = Xt.std(axis=1, ddof=1, keepdims=True)
    dt = standardize(DomainDataset(Xt, None))
    model = fit_cfa(dt, clusters)
    sm = fit_structure(model, dt.data, hp)
    Zv = (Xv - mu) / sd
    return laplace_nll(sm.pruned_B, factor_scores(model, Zv))[0] + reconstruction_constant(model, Zv)
