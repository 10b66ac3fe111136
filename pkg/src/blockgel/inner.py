"""Maximisation of the concave dual ``S(lambda) = Q^{-1} sum_q rho(lambda' phi_q)``.

Damped Newton with step halving. Every accepted step keeps ``lambda`` inside
the link's domain and does not decrease the objective. Convex-hull failure
(the dual is unbounded, ``lambda`` runs off to infinity) is reported through
``boundary_hit`` rather than raised.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .blocking import BlockMoments
from .errors import GelError
from .links import LinkFunction, LinkKind, make_link

__all__ = ["SolverOptions", "MultiplierState", "solve_lambda", "implied_probabilities", "domain_eps"]


@dataclass(frozen=True)
class SolverOptions:
    """Tolerances and limits for the inner and outer solvers."""

    tol_inner: float = 1e-9
    max_inner: int = 200
    max_halvings: int = 60
    tol_outer: float = 1e-6
    max_outer: int = 500
    n_starts: int = 1
    jitter: float = 0.1
    seed: int = 0
    theta0: Optional[tuple] = None
    record_trace: bool = False


@dataclass(frozen=True)
class MultiplierState:
    lambda_: np.ndarray
    objective: float
    gradient_norm: float
    iterations: int
    boundary_hit: bool
    converged: bool
    trace: tuple = field(default=(), repr=False)


# |lambda' phi_q| beyond which a solution is treated as escaping to infinity
_ESCAPE = {LinkKind.EL: 1e8, LinkKind.ET: 50.0, LinkKind.CU: np.inf}


def domain_eps(Q: int) -> float:
    """EL positivity safeguard: ``1 + v > 0.01 / Q``."""
    return 1e-2 / Q


def _phi(moments):
    if isinstance(moments, BlockMoments):
        return moments.phi
    return np.atleast_2d(np.asarray(moments, dtype=float))


def _newton_direction(grad, phi, w2):
    Q, r = phi.shape
    A = -(phi * w2[:, None]).T @ phi / Q
    A = 0.5 * (A + A.T)
    ridge = 1e-10 * max(np.trace(A), np.finfo(float).tiny) / r
    for attempt in range(8):
        try:
            c = np.linalg.cholesky(A if attempt == 0 else A + ridge * 100.0 ** (attempt - 1) * np.eye(r))
        except np.linalg.LinAlgError:
            continue
        d = np.linalg.solve(c.T, np.linalg.solve(c, grad))
        if np.all(np.isfinite(d)):
            return d
    return grad.copy()


def solve_lambda(moments, link, opts: SolverOptions | None = None, lambda0=None) -> MultiplierState:
    """Solve ``max_lambda Q^{-1} sum_q rho(lambda' phi_q)``.

    Parameters
    ----------
    moments : BlockMoments or array_like
        Blockwise moments (``Q x r``).
    link : LinkFunction or str
    opts : SolverOptions, optional
    lambda0 : array_like, optional
        Warm start; ignored when infeasible or worse than ``lambda = 0``.
    """
    opts = opts or SolverOptions()
    link = make_link(link)
    phi = _phi(moments)
    Q, r = phi.shape
    if Q < r:
        warnings.warn(f"fewer blocks than moment conditions (Q={Q} < r={r})", RuntimeWarning, stacklevel=2)
    eps = domain_eps(Q) if link.bounded else 0.0
    escape = _ESCAPE[link.kind]

    def objective(lam):
        v = phi @ lam
        if not np.all(link.in_domain(v, eps)):
            return v, -np.inf
        f = float(np.mean(link.rho(v)))
        return v, f if np.isfinite(f) else -np.inf

    lam = np.zeros(r)
    v, f = objective(lam)
    if lambda0 is not None:
        lam0 = np.asarray(lambda0, dtype=float)
        v0, f0 = objective(lam0)
        if f0 > f:
            lam, v, f = lam0.copy(), v0, f0
    if not np.isfinite(f):
        raise GelError("dual objective is not finite at lambda = 0")

    trace = [f] if opts.record_trace else None
    boundary = converged = False
    gnorm = np.inf
    it = 0
    for it in range(opts.max_inner + 1):
        grad = phi.T @ link.rho_v(v) / Q
        gnorm = float(np.max(np.abs(grad))) if r else 0.0
        if not np.isfinite(gnorm):
            raise GelError("non-finite dual gradient")
        if gnorm * max(1.0, float(np.linalg.norm(lam))) < opts.tol_inner:
            converged = True
            # one polishing Newton step: quadratic convergence makes it essentially exact
            if gnorm > 0:
                cand = lam + _newton_direction(grad, phi, link.rho_vv(v))
                v_new, f_new = objective(cand)
                if np.isfinite(f_new) and f_new >= f - 4 * np.finfo(float).eps * max(1.0, abs(f)):
                    g_new = phi.T @ link.rho_v(v_new) / Q
                    if np.max(np.abs(g_new)) <= gnorm:
                        lam, v, f, gnorm = cand, v_new, f_new, float(np.max(np.abs(g_new)))
            break
        if np.max(np.abs(v)) > escape:
            boundary = True
            break
        if it == opts.max_inner:
            break
        d = _newton_direction(grad, phi, link.rho_vv(v))
        if grad @ d <= 0:
            d = grad.copy()
        predicted = float(grad @ d)
        tiny = predicted < 1e-14 * max(1.0, abs(f))
        step = 1.0
        accepted = False
        for _ in range(opts.max_halvings):
            cand = lam + step * d
            v_new, f_new = objective(cand)
            if np.isfinite(f_new):
                if f_new >= f:
                    accepted = True
                elif tiny:
                    # round-off regime: accept if the gradient shrinks and f does not drop beyond eps
                    g_new = phi.T @ link.rho_v(v_new) / Q
                    accepted = (np.max(np.abs(g_new)) < gnorm
                                and f_new >= f - 4 * np.finfo(float).eps * max(1.0, abs(f)))
                if accepted:
                    break
            step *= 0.5
        if not accepted:
            boundary = link.bounded and gnorm > np.sqrt(opts.tol_inner)
            break
        lam, v, f = cand, v_new, f_new
        if trace is not None:
            trace.append(f)

    return MultiplierState(
        lambda_=lam,
        objective=f,
        gradient_norm=gnorm,
        iterations=it,
        boundary_hit=bool(boundary),
        converged=bool(converged and not boundary),
        trace=tuple(trace) if trace is not None else (),
    )


class NonInterpretableWeights(UserWarning):
    pass


def implied_probabilities(state: MultiplierState, moments, link) -> np.ndarray:
    """Block weights implied by the dual solution.

    EL: ``pi_q = 1 / (Q (1 + lambda' phi_q))`` renormalised. ET and CU:
    weights proportional to ``rho_v(lambda' phi_q)`` (exponential tilting
    weights for ET; may be negative for CU).
    """
    link = make_link(link)
    phi = _phi(moments)
    if state.boundary_hit:
        warnings.warn("dual solution hit the domain boundary; weights are not interpretable",
                      NonInterpretableWeights, stacklevel=2)
    w = link.rho_v(phi @ state.lambda_)
    return w / w.sum()
