"""Single-domain structure learning: penalized Laplace likelihood under h(B) = 0."""

import re
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import DimensionMismatch
from .measurement import factor_scores, reconstruction_constant
from .optim import (
    ObjectiveEvaluation,
    SMOOTH_DELTA,
    SQRT2,
    PenaltyState,
    is_dag,
    minimize_unconstrained,
    penalty_loop,
    smooth_abs,
)

WEIGHT_FLOOR = 1e-3


@dataclass(frozen=True)
class AdaptiveWeights:
    W: np.ndarray
    B_hat: np.ndarray = None


@dataclass
class StructureModel:
    """Effects ``B[i, j]`` of factor j on factor i, before and after pruning."""

    B: np.ndarray
    pruned_B: np.ndarray
    factor_names: tuple
    state: PenaltyState = None
    weights: AdaptiveWeights = None
    flags: list = field(default_factory=list)

    @property
    def q(self):
        return self.B.shape[0]


def _offdiag(q):
    return ~np.eye(q, dtype=bool)


def laplace_nll(B, F, delta=SMOOTH_DELTA):
    """sqrt(2) * sum_t sum_i smooth|F - B F| and its gradient in B (diagonal zeroed)."""
    total, psi = _kernels.abs_residuals(F, B, delta)
    grad = -SQRT2 * (psi @ F.T)
    np.fill_diagonal(grad, 0.0)
    return SQRT2 * total, grad


def _check(B, F):
    q = F.shape[0]
    if B.shape != (q, q):
        raise DimensionMismatch(f"B is {B.shape}, expected ({q}, {q})")


def neg_log_likelihood(B, model, X):
    """Negative LiNA log-likelihood (constant dropped) and its gradient in B.

    The measurement reconstruction term does not depend on B; it is added to
    the value as a positive quantity and contributes no gradient.
    """
    B = np.asarray(B, dtype=np.float64)
    F = factor_scores(model, X)
    _check(B, F)
    value, grad = laplace_nll(B, F)
    return value + reconstruction_constant(model, X), grad


def _penalties(B, W, hp):
    off = _offdiag(B.shape[0])
    v, d = smooth_abs(B)
    value = hp.lambda1 * float(np.sum((W * v)[off])) + hp.lambda2 * float(np.sum(B[off] ** 2))
    grad = hp.lambda1 * W * d + 2.0 * hp.lambda2 * B
    grad[~off] = 0.0
    return value, grad


def score_on_scores(B, F, W, hp):
    """Penalized score on factor scores F, without the reconstruction constant."""
    v, g = laplace_nll(B, F)
    pv, pg = _penalties(B, W, hp)
    return v + pv, g + pg


def score_F(B, model, X, weights, hp):
    """-L(B, G) + lambda1 * sum w_ij |b_ij| + lambda2 * ||B||^2."""
    B = np.asarray(B, dtype=np.float64)
    F = factor_scores(model, X)
    _check(B, F)
    W = weights.W if isinstance(weights, AdaptiveWeights) else np.asarray(weights)
    v, g = score_on_scores(B, F, W, hp)
    return ObjectiveEvaluation(v + reconstruction_constant(model, X), g)


def weights_from_estimate(B_hat):
    return AdaptiveWeights(1.0 / np.maximum(np.abs(B_hat), WEIGHT_FLOOR), B_hat)


def adaptive_weights_on_scores(F, hp):
    q = F.shape[0]
    off = _offdiag(q)

    def obj(x):
        B = np.zeros((q, q))
        B[off] = x
        v, g = laplace_nll(B, F)
        return v, g[off]

    res = minimize_unconstrained(obj, np.zeros(off.sum()), tol=hp.solver_tol, max_iter=hp.max_iter)
    B_hat = np.zeros((q, q))
    B_hat[off] = res.x
    return weights_from_estimate(B_hat)


def adaptive_weights(model, X, hp):
    """w_ij = 1 / max(|b_ij|, 1e-3) from the unpenalized, unconstrained fit."""
    return adaptive_weights_on_scores(factor_scores(model, X), hp)


def prune(B, eps):
    """Zero every entry with |B_ij| < eps."""
    out = np.array(B, dtype=np.float64)
    out[np.abs(out) < eps] = 0.0
    return out


def fit_on_scores(F, hp, factor_names=None, weights=None, B0=None, resume=None):
    """Penalty-loop fit of B on factor scores ``F`` followed by pruning."""
    q = F.shape[0]
    if weights is None:
        weights = adaptive_weights_on_scores(F, hp)
    B0 = np.zeros((q, q)) if B0 is None else B0
    B, state = penalty_loop(lambda B: score_on_scores(B, F, weights.W, hp), hp, B0, resume=resume)
    pruned = prune(B, hp.threshold_eps)
    flags = list(state.flags)
    if not is_dag(pruned):
        flags.append("PrunedGraphCyclic")
    names = tuple(factor_names) if factor_names else tuple(f"f{k + 1}" for k in range(q))
    return StructureModel(B, pruned, names, state, weights, flags)


def fit_structure(model, X, hp):
    """Adaptive weights, penalty loop from B = 0, then threshold pruning."""
    F = factor_scores(model, X)
    return fit_on_scores(F, hp, model.clusters.factor_names)


def to_dot(B, names, name="G"):
    lines = [f"digraph {name} {{"]
    for nm in names:
        lines.append(f'  "{nm}";')
    for i, j in zip(*np.nonzero(B)):
        lines.append(f'  "{names[j]}" -> "{names[i]}" [label="{float(B[i, j])!r}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


_DOT_NODE = re.compile(r'^\s*"([^"]+)";$')
_DOT_EDGE = re.compile(r'^\s*"([^"]+)" -> "([^"]+)" \[label="([^"]+)"\];$')


def read_dot(text):
    """Inverse of ``to_dot``: returns ``(B, names)``."""
    names, edges = [], []
    for ln in text.splitlines():
        if m := _DOT_EDGE.match(ln):
            edges.append(m.groups())
        elif m := _DOT_NODE.match(ln):
            names.append(m.group(1))
    index = {nm: k for k, nm in enumerate(names)}
    B = np.zeros((len(names), len(names)))
    for src, dst, w in edges:
        B[index[dst], index[src]] = float(w)
    return B, names
