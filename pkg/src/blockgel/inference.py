"""Sandwich covariances, the GEL ratio, the Wilks-type test and the over-identification test."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .blocking import block_jacobian, block_moments
from .errors import ConfigurationError, GelError
from .inner import SolverOptions, solve_lambda
from .links import make_link

__all__ = [
    "CovarianceEstimates",
    "TestReport",
    "normal_sf",
    "normal_quantile",
    "chi2_sf",
    "covariances",
    "gel_ratio",
    "gel_ratio_state",
    "wilks_test",
    "overid_test",
    "confidence_interval",
    "DEFAULT_LEVELS",
]

DEFAULT_LEVELS = (0.01, 0.05, 0.10)


def normal_sf(z: float) -> float:
    """Upper tail of N(0, 1): ``erfc(z / sqrt 2) / 2``."""
    return float(0.5 * special.erfc(z / math.sqrt(2.0)))


def normal_quantile(prob: float) -> float:
    return float(special.ndtri(prob))


def chi2_sf(x: float, df: int) -> float:
    """Upper tail of the chi-square law via the regularised upper incomplete gamma."""
    if x <= 0:
        return 1.0
    if math.isinf(x):
        return 0.0
    return float(special.gammaincc(0.5 * df, 0.5 * x))


@dataclass(frozen=True)
class CovarianceEstimates:
    """``V_M_hat = M * Omega_hat``, ``G_hat = d phi_bar / d theta`` and the sandwich.

    ``se`` are ``sqrt(diag(sandwich) / n)``.
    """

    V_M_hat: np.ndarray
    G_hat: np.ndarray
    sandwich: np.ndarray
    se: np.ndarray
    n: int
    mode: str = "efficient"


@dataclass(frozen=True)
class TestReport:
    statistic: float
    reference: str
    df: int
    p_value: float
    chi2_statistic: float
    chi2_p_value: float
    reject_at: dict = field(default_factory=dict)
    kind: str = ""

    def as_dict(self) -> dict:
        return {
            "kind": self.kind,
            "statistic": self.statistic,
            "reference": self.reference,
            "df": self.df,
            "p_value": self.p_value,
            "chi2_statistic": self.chi2_statistic,
            "chi2_p_value": self.chi2_p_value,
            "reject_at": {format(k, "g"): v for k, v in self.reject_at.items()},
        }


def _sym(a):
    return 0.5 * (a + a.T)


def _stable_inverse(a, what):
    k = a.shape[0]
    try:
        np.linalg.cholesky(a)
        return np.linalg.inv(a)
    except np.linalg.LinAlgError:
        ridge = 1e-8 * max(np.trace(a) / k, np.finfo(float).tiny)
        warnings.warn(f"{what} is singular; adding ridge {ridge:.3g}", RuntimeWarning, stacklevel=3)
        return np.linalg.inv(a + ridge * np.eye(k))


def _long_run_covariance(g, bandwidth):
    """Bartlett-kernel long-run covariance of the rows of ``g`` (centred)."""
    g = g - g.mean(axis=0)
    n = g.shape[0]
    out = g.T @ g / n
    for lag in range(1, bandwidth + 1):
        w = 1.0 - lag / (bandwidth + 1.0)
        gamma = g[lag:].T @ g[:-lag] / n
        out += w * (gamma + gamma.T)
    return _sym(out)


def covariances(data, model, scheme, result, mode: str = "efficient", active=None) -> CovarianceEstimates:
    """Covariance of ``sqrt(n) (theta_hat - theta_0)``.

    ``mode="efficient"`` returns ``(G' V_M^{-1} G)^{-1}``. ``mode="full"``
    (experimental) returns the three-matrix sandwich with ``V_n`` estimated
    by a Bartlett long-run covariance of ``g_t(theta_hat)`` with bandwidth
    ``M - 1``.

    ``active`` restricts the sandwich to a subset of coordinates (the
    others are treated as known zeros, as after penalised selection); the
    returned matrices are still ``p x p`` with zero rows and columns for the
    inactive coordinates.
    """
    theta = np.asarray(result.theta_hat, dtype=float)
    mom = block_moments(data, model, scheme, theta)
    V_M = _sym(scheme.M * mom.omega_hat)
    G_full = block_jacobian(data, model, scheme, theta)
    idx = np.arange(model.p) if active is None else np.asarray(sorted(active), dtype=int)
    if idx.size == 0:
        zero = np.zeros((model.p, model.p))
        return CovarianceEstimates(V_M, G_full, zero, np.zeros(model.p), data.n, mode)
    G = G_full[:, idx]
    V_inv = _stable_inverse(V_M, "V_M_hat")
    bread = _stable_inverse(_sym(G.T @ V_inv @ G), "G' V_M^-1 G")
    if mode == "efficient":
        sandwich = bread
    elif mode == "full":
        V_n = _long_run_covariance(model.moments(data.values, theta), max(scheme.M - 1, 0))
        meat = G.T @ V_inv @ V_n @ V_inv @ G
        sandwich = bread @ meat @ bread
    else:
        raise ConfigurationError(f"unknown covariance mode {mode!r}")
    full = np.zeros((model.p, model.p))
    full[np.ix_(idx, idx)] = _sym(sandwich)
    se = np.sqrt(np.clip(np.diag(full), 0.0, None) / data.n)
    return CovarianceEstimates(V_M, G_full, full, se, data.n, mode)


def gel_ratio_state(data, model, scheme, link, theta, opts: SolverOptions | None = None):
    """``(w_n, state)``; ``w_n`` is ``inf`` when the dual escapes to infinity."""
    link = make_link(link)
    mom = block_moments(data, model, scheme, np.asarray(theta, dtype=float))
    state = solve_lambda(mom, link, opts)
    if state.boundary_hit:
        return math.inf, state
    total = scheme.Q * state.objective
    w = link.wilks_factor * (scheme.Q * link.rho0 - total)
    return float(w) + 0.0, state


def gel_ratio(data, model, scheme, link, theta, opts: SolverOptions | None = None) -> float:
    """GEL ratio ``w_n(theta) = (2 rho_vv(0) / rho_v(0)^2) {Q rho(0) - max_lambda sum_q rho(lambda' phi_q)}``."""
    w, state = gel_ratio_state(data, model, scheme, link, theta, opts)
    if state.boundary_hit:
        warnings.warn("zero is outside the convex hull of the block moments; w_n = inf",
                      RuntimeWarning, stacklevel=2)
    return w


def _report(kind, w, df, levels):
    stat = (w - df) / math.sqrt(2.0 * df)
    p_norm = normal_sf(stat)
    return TestReport(
        statistic=stat,
        reference="standard-normal",
        df=df,
        p_value=p_norm,
        chi2_statistic=w,
        chi2_p_value=chi2_sf(w, df),
        reject_at={lvl: bool(p_norm < lvl) for lvl in levels},
        kind=kind,
    )


def wilks_test(data, model, scheme, link, theta_0, opts=None, levels=DEFAULT_LEVELS) -> TestReport:
    """Test ``H0: theta = theta_0`` with ``(2r)^{-1/2} (w_n(theta_0) - r)`` against N(0, 1) (upper tail).

    The chi-square(r) p-value of ``w_n`` is reported alongside.
    """
    w, _ = gel_ratio_state(data, model, scheme, link, theta_0, opts)
    return _report("wilks", w, model.r, levels)


def overid_test(data, model, scheme, link, result, opts=None, levels=DEFAULT_LEVELS) -> TestReport:
    """Over-identification test ``{2(r-p)}^{-1/2} (w_n(theta_hat) - (r-p))`` (upper tail)."""
    if model.r <= model.p:
        raise ConfigurationError(f"over-identification requires r > p (r={model.r}, p={model.p})")
    if not result.converged:
        warnings.warn("over-identification test on a non-converged fit", RuntimeWarning, stacklevel=2)
    w, _ = gel_ratio_state(data, model, scheme, link, result.theta_hat, opts)
    return _report("overid", w, model.r - model.p, levels)


def confidence_interval(cov: CovarianceEstimates, result, direction, level: float = 0.05):
    """Interval for ``direction' theta`` at coverage ``1 - level``.

    ``direction`` must have unit Euclidean norm.
    """
    a = np.asarray(direction, dtype=float)
    if a.shape != (cov.sandwich.shape[0],):
        raise ConfigurationError(f"direction has shape {a.shape}, expected ({cov.sandwich.shape[0]},)")
    if abs(np.linalg.norm(a) - 1.0) > 1e-8:
        raise ConfigurationError(f"direction must have unit norm, got {np.linalg.norm(a):.12g}")
    if not 0 < level < 1:
        raise ConfigurationError(f"level must lie in (0, 1), got {level}")
    centre = float(a @ result.theta_hat)
    half = normal_quantile(1.0 - level / 2.0) * math.sqrt(max(float(a @ cov.sandwich @ a), 0.0) / cov.n)
    return centre - half, centre + half
