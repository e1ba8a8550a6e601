"""Multi-domain structure learning: shared interest factors through a transform H."""

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import AssignmentInfeasible, DimensionMismatch, RankDeficientH
from .lina import (
    AdaptiveWeights,
    StructureModel,
    _penalties,
    adaptive_weights_on_scores,
    fit_on_scores,
    fit_structure,
    laplace_nll,
    weights_from_estimate,
)
from .measurement import factor_scores, reconstruction_constant
from .optim import SQRT2, ObjectiveEvaluation, is_dag, minimize_unconstrained, smooth_abs

log = logging.getLogger(__name__)

RANK_TOL = 1e-10
ALT_RTOL = 1e-6


@dataclass(frozen=True)
class TransformMatrix:
    """Map ``f_bar = H f_tilde`` from interest factors to augmented factors."""

    H: np.ndarray

    def __post_init__(self):
        H = np.array(self.H, dtype=np.float64)
        if H.ndim != 2 or H.shape[1] > H.shape[0]:
            raise DimensionMismatch(f"H must be q x q_tilde with q_tilde <= q, got {H.shape}")
        if not np.all(np.isfinite(H)):
            raise RankDeficientH("H has non-finite entries")
        _check_rank(H)
        H.setflags(write=False)
        object.__setattr__(self, "H", H)

    @property
    def q(self):
        return self.H.shape[0]

    @property
    def q_tilde(self):
        return self.H.shape[1]


@dataclass(frozen=True)
class HardAssignment:
    """One interest factor per augmented factor, with the weight kept from H."""

    row_to_interest: tuple
    weights: tuple
    q_tilde: int

    def matrix(self):
        H = np.zeros((len(self.row_to_interest), self.q_tilde))
        H[np.arange(H.shape[0]), list(self.row_to_interest)] = self.weights
        return H

    def to_dict(self, factor_names=None, interest_names=None):
        rows = factor_names or [f"f{i + 1}" for i in range(len(self.row_to_interest))]
        cols = interest_names or [f"g{k + 1}" for k in range(self.q_tilde)]
        return {
            "q_tilde": self.q_tilde,
            "interest_factors": list(cols),
            "assignment": {r: {"interest": cols[k], "weight": float(w)}
                           for r, k, w in zip(rows, self.row_to_interest, self.weights)},
        }

    @classmethod
    def from_dict(cls, d):
        cols = list(d["interest_factors"])
        idx = {c: k for k, c in enumerate(cols)}
        items = list(d["assignment"].values())
        return cls(tuple(idx[e["interest"]] for e in items), tuple(float(e["weight"]) for e in items), int(d["q_tilde"]))


@dataclass
class MdStructureModel:
    B_tilde: np.ndarray
    H: TransformMatrix
    assignment: HardAssignment
    pruned_B_tilde: np.ndarray
    factor_names: tuple = ()
    interest_names: tuple = ()
    trace: list = field(default_factory=list)
    flags: list = field(default_factory=list)
    refit: StructureModel = None


def _check_rank(H):
    s = np.linalg.svd(H, compute_uv=False)
    if s.size == 0 or s.min() <= RANK_TOL:
        raise RankDeficientH(f"smallest singular value of H is {s.min() if s.size else 0.0:.3g}")


def _as_H(H):
    return H.H if isinstance(H, TransformMatrix) else np.asarray(H, dtype=np.float64)


def _pinv_parts(H):
    _check_rank(H)
    A = np.linalg.inv(H.T @ H)
    K = A @ H.T
    return A, K, H @ K


def reconstruction_error(H, Fbar):
    """||Fbar - P_H Fbar||^2 and its gradient in H."""
    H = _as_H(H)
    Fbar = np.asarray(Fbar, dtype=np.float64)
    if Fbar.shape[0] != H.shape[0]:
        raise DimensionMismatch(f"H is {H.shape}, factor scores have {Fbar.shape[0]} rows")
    A, K, P = _pinv_parts(H)
    R = Fbar - P @ Fbar
    S = Fbar @ Fbar.T
    grad = -2.0 * (np.eye(H.shape[0]) - P) @ S @ H @ A
    return float(np.sum(R * R)), grad


def _interest_nll(B_tilde, H, Fbar):
    """Laplace term on f_tilde = H^+ Fbar with gradients in B_tilde and H."""
    A, K, P = _pinv_parts(H)
    Ft = K @ Fbar
    value, gB = laplace_nll(B_tilde, Ft)
    # d/dK of sqrt2 * sum smooth|(I - B) K Fbar|, then chain through K = (H^T H)^{-1} H^T
    R = Ft - B_tilde @ Ft
    _, psi = smooth_abs(R)
    Gamma = SQRT2 * (np.eye(H.shape[1]) - B_tilde).T @ psi @ Fbar.T
    gH = (np.eye(H.shape[0]) - P) @ Gamma.T @ A - K.T @ Gamma @ K.T
    return value, gB, gH, Ft


def _h_penalty(H, WH, hp):
    v, d = smooth_abs(H)
    return hp.lambda3 * float(np.sum(WH * v)), hp.lambda3 * WH * d


def _weights(w):
    return w.W if isinstance(w, AdaptiveWeights) else np.asarray(w, dtype=np.float64)


def md_score(B_tilde, H, model, Xbar, weightsB, weightsH, hp):
    """Joint multi-domain objective and its gradients ``(dB_tilde, dH)``.

    Likelihood of the interest-factor residuals plus the measurement
    reconstruction constant, adaptive L1 and L2 on ``B_tilde``, the
    reconstruction error E(H) and an adaptive L1 penalty on H.
    """
    H = _as_H(H)
    B_tilde = np.asarray(B_tilde, dtype=np.float64)
    if B_tilde.shape != (H.shape[1], H.shape[1]):
        raise DimensionMismatch(f"B_tilde is {B_tilde.shape}, expected q_tilde = {H.shape[1]}")
    X = getattr(Xbar, "data", Xbar)
    Fbar = factor_scores(model, X)
    return _md_on_scores(B_tilde, H, Fbar, _weights(weightsB), _weights(weightsH), hp,
                         reconstruction_constant(model, X))


def _md_on_scores(B_tilde, H, Fbar, WB, WH, hp, const=0.0):
    nll, gB, gH, _ = _interest_nll(B_tilde, H, Fbar)
    pB, pgB = _penalties(B_tilde, WB, hp)
    E, gE = reconstruction_error(H, Fbar)
    pH, pgH = _h_penalty(H, WH, hp)
    return ObjectiveEvaluation(nll + const + pB + E + pH, (gB + pgB, gH + gE + pgH))


def harden_H(H):
    """Keep each row's largest-magnitude entry; ties go to the lowest column."""
    H = _as_H(H)
    cols = np.argmax(np.abs(H), axis=1)
    q_tilde = H.shape[1]
    empty = sorted(set(range(q_tilde)) - set(cols.tolist()))
    if empty:
        raise AssignmentInfeasible(f"interest factor(s) {[k + 1 for k in empty]} receive no augmented factor")
    w = H[np.arange(H.shape[0]), cols]
    return HardAssignment(tuple(int(c) for c in cols), tuple(float(v) for v in w), q_tilde)


def update_b_tilde(assignment, Fbar, hp, factor_names=None):
    """Refit B_tilde with H frozen at the hardened assignment, then prune.

    Returns the fitted ``StructureModel``; its ``pruned_B`` is the updated
    shared graph.
    """
    H = assignment.matrix() if isinstance(assignment, HardAssignment) else _as_H(assignment)
    _, K, _ = _pinv_parts(H)
    return fit_on_scores(K @ np.asarray(Fbar, dtype=np.float64), hp, factor_names)


def _factor_domains(model, Xbar):
    """Domain id and within-domain index of every augmented factor."""
    origin = Xbar.row_origin
    doms = [origin[c[0]][0] for c in model.clusters.clusters]
    local, seen = [], {}
    for d in doms:
        local.append(seen.get(d, 0))
        seen[d] = seen.get(d, 0) + 1
    return np.array(doms), np.array(local), seen


def initial_H(model, Xbar, q_tilde):
    """Stacked identities: factor j of every domain starts on interest factor j mod q_tilde."""
    _, local, _ = _factor_domains(model, Xbar)
    H = np.zeros((local.size, q_tilde))
    H[np.arange(local.size), local % q_tilde] = 1.0
    return H


def _minimize_H(fun, H0):
    shape = H0.shape

    def obj(x):
        try:
            v, g = fun(x.reshape(shape))
        except RankDeficientH:
            return np.inf, np.zeros_like(x)
        return v, g.ravel()

    return minimize_unconstrained(obj, H0.ravel()).x.reshape(shape)


def fit_md(model, Xbar, q_tilde=None, hp=None):
    """Alternating H / B_tilde optimization, H hardening, then a B_tilde refit.

    ``model`` is the augmented measurement model (block pattern) and
    ``Xbar`` the AugmentedDataset. With a single domain the structure is
    fitted directly and H is the identity.
    """
    from .data import Hyperparams

    hp = hp or Hyperparams()
    X = Xbar.data
    Fbar = factor_scores(model, X)
    _, _, per_domain = _factor_domains(model, Xbar)
    q = Fbar.shape[0]
    q_tilde = q_tilde or hp.q_tilde or max(per_domain.values())
    if not 1 <= q_tilde <= q:
        raise DimensionMismatch(f"q_tilde must lie in 1..{q}, got {q_tilde}")
    interest = tuple(f"g{k + 1}" for k in range(q_tilde))

    if len(per_domain) == 1 and q_tilde == q:
        sm = fit_structure(model, X, hp)
        ident = HardAssignment(tuple(range(q)), (1.0,) * q, q)
        return MdStructureModel(sm.B, TransformMatrix(np.eye(q)), ident, sm.pruned_B,
                                model.clusters.factor_names, interest, [], list(sm.flags), sm)

    H = initial_H(model, Xbar, q_tilde)
    WH = weights_from_estimate(_minimize_H(lambda M: reconstruction_error(M, Fbar), H)).W
    wB = adaptive_weights_on_scores(np.linalg.pinv(H) @ Fbar, hp)
    B = np.zeros((q_tilde, q_tilde))
    state = None
    trace, prev = [], np.inf
    for rnd in range(hp.max_alt):
        H = _minimize_H(lambda M: _h_step(B, M, Fbar, WH, hp), H)
        _, K, _ = _pinv_parts(H)
        sm = fit_on_scores(K @ Fbar, hp, interest, wB, B0=B, resume=state)
        B, state = sm.B, sm.state
        value = _md_on_scores(B, H, Fbar, wB.W, WH, hp)[0]
        trace.append((rnd + 1, state.rho, value, state.h_value))
        if abs(prev - value) <= ALT_RTOL * max(abs(value), 1.0):
            break
        prev = value
    flags = list(state.flags)
    if len(trace) == hp.max_alt:
        flags.append("AlternationNotConverged")

    assignment = harden_H(H)
    refit = update_b_tilde(assignment, Fbar, hp, interest)
    flags.extend(f for f in refit.flags if f not in flags)
    if not is_dag(refit.pruned_B):
        log.warning("refitted shared graph is cyclic")
    return MdStructureModel(refit.B, TransformMatrix(H), assignment, refit.pruned_B,
                            model.clusters.factor_names, interest, trace, flags, refit)


def _h_step(B, H, Fbar, WH, hp):
    nll, _, gH, _ = _interest_nll(B, H, Fbar)
    E, gE = reconstruction_error(H, Fbar)
    pH, pgH = _h_penalty(H, WH, hp)
    return nll + E + pH, gH + gE + pgH
