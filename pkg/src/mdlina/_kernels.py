"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The numba path is used when numba imports cleanly and the environment
variable ``MDLINA_DISABLE_NUMBA`` is unset (or ``0``). Both paths compute the
same quantities; ``tests/test_kernels.py`` checks them against each other.
"""

import os

import numpy as np

_disabled = os.environ.get("MDLINA_DISABLE_NUMBA", "0").lower() not in ("", "0", "false", "no")

try:
    if _disabled:
        raise ImportError
    from numba import njit

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False


# --------------------------------------------------------------------------
# pure numpy
# --------------------------------------------------------------------------


def abs_residuals_numpy(F, B, delta):
    """Return ``sum(sqrt(R**2 + delta))`` and ``R / sqrt(R**2 + delta)`` for ``R = F - B F``."""
    R = F - B @ F
    s = np.sqrt(R * R + delta)
    return float(s.sum()), R / s


def hsic_moments_numpy(x, y, sx, sy):
    m = x.shape[0]
    K = np.exp(-((x[:, None] - x[None, :]) ** 2) / (2.0 * sx * sx))
    L = np.exp(-((y[:, None] - y[None, :]) ** 2) / (2.0 * sy * sy))
    Kc = K - K.mean(axis=0)[None, :] - K.mean(axis=1)[:, None] + K.mean()
    Lc = L - L.mean(axis=0)[None, :] - L.mean(axis=1)[:, None] + L.mean()
    P = Kc * Lc
    stat = P.sum() / m
    V = (P / 6.0) ** 2
    var_sum = V.sum() - np.trace(V)
    off_k = K.sum() - np.trace(K)
    off_l = L.sum() - np.trace(L)
    return stat, var_sum, off_k, off_l


def median_abs_diff_numpy(x):
    d = np.abs(x[:, None] - x[None, :])
    iu = np.triu_indices(x.shape[0], k=1)
    return float(np.median(d[iu]))


# --------------------------------------------------------------------------
# numba
# --------------------------------------------------------------------------

if HAVE_NUMBA:

    @njit(cache=True)
    def _abs_residuals_nb(F, B, delta):
        q, n = F.shape
        psi = F.copy()
        for i in range(q):
            for j in range(q):
                b = B[i, j]
                if b != 0.0:
                    for t in range(n):
                        psi[i, t] -= b * F[j, t]
        total = 0.0
        for i in range(q):
            for t in range(n):
                r = psi[i, t]
                s = np.sqrt(r * r + delta)
                total += s
                psi[i, t] = r / s
        return total, psi

    @njit(cache=True)
    def _hsic_moments_nb(x, y, sx, sy):
        m = x.shape[0]
        cx = 1.0 / (2.0 * sx * sx)
        cy = 1.0 / (2.0 * sy * sy)
        rk = np.zeros(m)
        rl = np.zeros(m)
        for a in range(m):
            for b in range(a, m):
                dx = x[a] - x[b]
                dy = y[a] - y[b]
                k = np.exp(-dx * dx * cx)
                l = np.exp(-dy * dy * cy)
                rk[a] += k
                rl[a] += l
                if b != a:
                    rk[b] += k
                    rl[b] += l
        gk = rk.sum() / (m * m)
        gl = rl.sum() / (m * m)
        for a in range(m):
            rk[a] /= m
            rl[a] /= m
        stat = 0.0
        var_sum = 0.0
        off_k = 0.0
        off_l = 0.0
        for a in range(m):
            for b in range(a, m):
                dx = x[a] - x[b]
                dy = y[a] - y[b]
                k = np.exp(-dx * dx * cx)
                l = np.exp(-dy * dy * cy)
                p = (k - rk[a] - rk[b] + gk) * (l - rl[a] - rl[b] + gl)
                if b == a:
                    stat += p
                else:
                    stat += 2.0 * p
                    v = p / 6.0
                    var_sum += 2.0 * v * v
                    off_k += 2.0 * k
                    off_l += 2.0 * l
        return stat / m, var_sum, off_k, off_l

    @njit(cache=True)
    def _median_abs_diff_nb(x):
        m = x.shape[0]
        d = np.empty(m * (m - 1) // 2)
        c = 0
        for a in range(m):
            for b in range(a + 1, m):
                d[c] = abs(x[a] - x[b])
                c += 1
        return np.median(d)

    def abs_residuals(F, B, delta):
        total, psi = _abs_residuals_nb(
            np.ascontiguousarray(F, dtype=np.float64),
            np.ascontiguousarray(B, dtype=np.float64),
            float(delta),
        )
        return float(total), psi

    def hsic_moments(x, y, sx, sy):
        return _hsic_moments_nb(
            np.ascontiguousarray(x, dtype=np.float64),
            np.ascontiguousarray(y, dtype=np.float64),
            float(sx),
            float(sy),
        )

    def median_abs_diff(x):
        return float(_median_abs_diff_nb(np.ascontiguousarray(x, dtype=np.float64)))

else:
    abs_residuals = abs_residuals_numpy
    hsic_moments = hsic_moments_numpy
    median_abs_diff = median_abs_diff_numpy
