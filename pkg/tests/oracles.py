"""Independent reference computations used as test oracles.

Nothing here imports the solver internals: each oracle re-derives its value
from first principles with scipy/mpmath so a shared bug cannot hide.
"""
import math

import mpmath
import numpy as np
from scipy import optimize


def bisect_el_lambda_1d(phi, lo=None, hi=None):
    """Root of ``sum phi_q / (1 + lam phi_q) = 0`` for scalar moments."""
    phi = np.asarray(phi, dtype=float)
    # feasible interval keeps 1 + lam*phi_q > 0 for every q
    lo = -1.0 / phi.max() + 1e-12 if lo is None else lo
    hi = -1.0 / phi.min() - 1e-12 if hi is None else hi
    f = lambda lam: float(np.sum(phi / (1.0 + lam * phi)))
    return optimize.brentq(f, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=500)


def cu_closed_form(phi):
    phi = np.asarray(phi, dtype=float)
    Q = phi.shape[0]
    omega = phi.T @ phi / Q
    pbar = phi.mean(axis=0)
    lam = -np.linalg.solve(omega, pbar)
    return lam, 0.5 * float(pbar @ np.linalg.solve(omega, pbar))


def cu_gmm_logistic(y, Z, x0):
    """Continuous-updating GMM for the logistic instrument model with M = L = 1."""
    inst = np.hstack([Z, Z**2])

    def obj(theta):
        u = y - 1.0 / (1.0 + np.exp(-(1.0 + Z @ theta)))
        g = inst * u[:, None]
        gbar = g.mean(axis=0)
        omega = g.T @ g / len(y)
        return 0.5 * float(gbar @ np.linalg.solve(omega, gbar))

    res = optimize.minimize(obj, x0, method="Nelder-Mead",
                            options={"xatol": 1e-10, "fatol": 1e-16, "maxiter": 20000, "maxfev": 40000})
    return res.x


def chi2_sf_mp(x, df):
    return float(mpmath.gammainc(mpmath.mpf(df) / 2, mpmath.mpf(x) / 2, mpmath.inf, regularized=True))


def normal_sf_mp(z):
    return float(mpmath.erfc(mpmath.mpf(z) / mpmath.sqrt(2)) / 2)


def normal_ppf_mp(p):
    return float(mpmath.sqrt(2) * mpmath.erfinv(2 * mpmath.mpf(p) - 1))


def sigmoid_mp(z):
    return float(1 / (1 + mpmath.exp(-mpmath.mpf(z))))


def brute_force_usage(n, M, L):
    """Count how many blocks contain each time index (1-based in, 0-based array out)."""
    Q = (n - M) // L + 1
    counts = np.zeros(n, dtype=int)
    for q in range(1, Q + 1):
        for t in range((q - 1) * L + 1, (q - 1) * L + M + 1):
            counts[t - 1] += 1
    return counts, Q


def central_diff(f, x, h=1e-6):
    x = np.asarray(x, dtype=float)
    out = []
    for j in range(x.size):
        e = np.zeros_like(x)
        step = h * max(1.0, abs(x[j]))
        e[j] = step
        out.append((f(x + e) - f(x - e)) / (2 * step))
    return np.array(out)


def rel_err(a, b, floor=1e-8):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), floor))


def sq(x):
    return float(np.dot(x, x)) if np.ndim(x) else float(x) ** 2


__all__ = [name for name in dir() if not name.startswith("_") and name not in ("math", "mpmath", "np", "optimize")]
