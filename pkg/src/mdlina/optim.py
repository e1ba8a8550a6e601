"""Acyclicity function, smooth |.|, Laplace log-density, and the QPM/ALM driver."""

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.optimize import minimize

from .errors import OverflowRisk

log = logging.getLogger(__name__)

SMOOTH_DELTA = 1e-8
ENTRY_CAP = 20.0
SQRT2 = math.sqrt(2.0)


class ObjectiveEvaluation(NamedTuple):
    value: float
    gradient: np.ndarray


# --------------------------------------------------------------------------
# matrix exponential
# --------------------------------------------------------------------------

_PADE_DEGREE = 6


def _pade_coefficients(p):
    c = [1.0]
    for k in range(1, p + 1):
        c.append(c[-1] * (p - k + 1) / (k * (2 * p - k + 1)))
    return c


_PADE = _pade_coefficients(_PADE_DEGREE)


def expm(A):
    """Matrix exponential by scaling and squaring around a [6/6] Pade core.

    The matrix is scaled by 2**-s until its 1-norm is at most 1/2, where the
    [6/6] truncation error is below double precision.
    """
    A = np.asarray(A, dtype=np.float64)
    q = A.shape[0]
    norm = np.abs(A).sum(axis=0).max() if q else 0.0
    s = 0
    if norm > 0.5:
        s = int(math.ceil(math.log2(norm / 0.5)))
    As = A / (2.0 ** s)
    eye = np.eye(q)
    N = np.zeros_like(As)
    D = np.zeros_like(As)
    P = eye
    for k, c in enumerate(_PADE):
        if k:
            P = P @ As
        N += c * P
        D += (-1) ** k * c * P
    E = np.linalg.solve(D, N)
    for _ in range(s):
        E = E @ E
    return E


def _check_cap(W):
    if W.size and W.max() > ENTRY_CAP:
        raise OverflowRisk(f"entry of B*B is {W.max():.3g} > {ENTRY_CAP}")


def acyclicity_h(B):
    """tr(exp(B * B)) - q; zero exactly when the support of B is acyclic."""
    B = np.asarray(B, dtype=np.float64)
    W = B * B
    _check_cap(W)
    return float(np.trace(expm(W)) - B.shape[0])


def acyclicity_grad(B):
    B = np.asarray(B, dtype=np.float64)
    W = B * B
    _check_cap(W)
    return expm(W).T * (2.0 * B)


def _h_and_grad(B):
    # uncapped variant for use inside objectives; line searches may overshoot
    W = B * B
    E = expm(W)
    return float(np.trace(E) - B.shape[0]), E.T * (2.0 * B)


def is_dag(B, tol=0.0):
    """Topological-sort check on the support {j -> i : |B_ij| > tol}."""
    A = np.abs(np.asarray(B)) > tol
    q = A.shape[0]
    indeg = A.sum(axis=1).astype(int)
    ready = [i for i in range(q) if indeg[i] == 0]
    seen = 0
    while ready:
        j = ready.pop()
        seen += 1
        for i in np.flatnonzero(A[:, j]):
            indeg[i] -= 1
            if indeg[i] == 0:
                ready.append(int(i))
    return seen == q


def topological_order(B, tol=0.0):
    A = np.abs(np.asarray(B)) > tol
    q = A.shape[0]
    indeg = A.sum(axis=1).astype(int)
    ready = sorted(i for i in range(q) if indeg[i] == 0)
    order = []
    while ready:
        j = ready.pop(0)
        order.append(j)
        for i in np.flatnonzero(A[:, j]):
            indeg[i] -= 1
            if indeg[i] == 0:
                ready.append(int(i))
        ready.sort()
    if len(order) != q:
        return None
    return order


# --------------------------------------------------------------------------
# smooth surrogates
# --------------------------------------------------------------------------


def smooth_abs(u, delta=SMOOTH_DELTA):
    """Return ``(sqrt(u**2 + delta), u / sqrt(u**2 + delta))``."""
    u = np.asarray(u, dtype=np.float64)
    v = np.sqrt(u * u + delta)
    if v.ndim == 0:
        return float(v), float(u / v)
    return v, u / v


def laplace_logpdf(u, delta=SMOOTH_DELTA):
    """Unit-variance Laplace log-density without its additive constant."""
    v, _ = smooth_abs(u, delta)
    return -SQRT2 * v


# --------------------------------------------------------------------------
# solvers
# --------------------------------------------------------------------------


@dataclass
class SolverResult:
    x: np.ndarray
    value: float
    grad_norm: float
    n_iter: int
    line_search_failure: bool = False
    message: str = ""


def minimize_unconstrained(objective, x0, tol=1e-6, max_iter=2000, ftol=1e-12):
    """Limited-memory quasi-Newton minimization (scipy's L-BFGS-B, no bounds).

    ``objective(x)`` returns ``(value, gradient)``. The result never has a
    larger objective than ``x0``.
    """
    x0 = np.asarray(x0, dtype=np.float64).ravel()
    f0, g0 = objective(x0)
    f0 = float(f0)
    if not np.isfinite(f0):
        raise ValueError("objective is not finite at the starting point")
    if x0.size == 0:
        return SolverResult(x0, f0, 0.0, 0)

    def fun(x):
        f, g = objective(x)
        return float(f), np.asarray(g, dtype=np.float64).ravel()

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = minimize(
            fun, x0, jac=True, method="L-BFGS-B",
            options={"maxiter": max_iter, "gtol": tol, "ftol": ftol, "maxcor": 10},
        )
    msg = res.message if isinstance(res.message, str) else res.message.decode()
    lsf = "ABNORMAL" in msg.upper()
    x, f = res.x, float(res.fun)
    if not np.isfinite(f) or f > f0:
        x, f = x0.copy(), f0
    _, g = fun(x)
    return SolverResult(x, f, float(np.abs(g).max()), int(res.nit), lsf, msg)


@dataclass
class PenaltyState:
    rho: float
    alpha: float = 0.0
    h_value: float = 0.0
    outer_iter: int = 0
    converged: bool = True
    line_search_failures: int = 0
    trace: list = field(default_factory=list)

    @property
    def flags(self):
        out = []
        if not self.converged:
            out.append("ConstraintNotSatisfied")
        return out


def penalty_loop(score, hp, B0, free=None, resume=None):
    """Enforce h(B) = 0 with a quadratic penalty (or augmented Lagrangian).

    ``score(B)`` returns ``(value, dvalue/dB)``. Only entries where ``free``
    is true are optimized (default: off-diagonal). Passing a previous
    ``PenaltyState`` as ``resume`` continues from its rho and alpha.
    Returns ``(B, state)``; ``state.trace`` records ``(rho, alpha, F, h)``
    after every inner solve.
    """
    B = np.array(B0, dtype=np.float64)
    q = B.shape[0]
    if free is None:
        free = ~np.eye(q, dtype=bool)
    alm = hp.penalty_mode == "alm"
    state = PenaltyState(rho=hp.rho_init)
    if resume is not None:
        state.rho, state.alpha = resume.rho, resume.alpha
    h_prev = math.inf

    def unpack(x):
        M = np.zeros((q, q))
        M[free] = x
        return M

    for outer in range(hp.max_outer):
        rho, alpha = state.rho, state.alpha

        def obj(x):
            Bx = unpack(x)
            f, g = score(Bx)
            h, gh = _h_and_grad(Bx)
            c = rho * h + alpha
            return f + 0.5 * rho * h * h + alpha * h, (g + c * gh)[free]

        res = minimize_unconstrained(obj, B[free], tol=hp.solver_tol, max_iter=hp.max_iter)
        state.line_search_failures += int(res.line_search_failure)
        B = unpack(res.x)
        h, _ = _h_and_grad(B)
        state.outer_iter = outer + 1
        state.h_value = h
        state.trace.append((rho, alpha, float(score(B)[0]), h))
        if h < hp.h_tol:
            break
        if h > 0.25 * h_prev:
            state.rho = rho * hp.rho_mult
        h_prev = h
        if alm:
            state.alpha = alpha + state.rho * h
        if state.rho > hp.rho_max:
            state.rho = rho
            break
    state.converged = state.h_value < hp.h_tol
    if not state.converged:
        log.warning("penalty loop ended with h=%.3g >= h_tol=%.3g", state.h_value, hp.h_tol)
    return B, state
